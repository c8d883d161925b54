#pragma once

#include <stdexcept>
#include <string>

namespace sharedattr {

enum class Errc {
  invalid_range,
  degenerate_vector,
  shape,
  config,
  data,
  format,
  manifest,
  scenario,
  state,
  version,
  numeric,
  io,
};

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::invalid_range: return "invalid-range";
    case Errc::degenerate_vector: return "degenerate-vector";
    case Errc::shape: return "shape";
    case Errc::config: return "config";
    case Errc::data: return "data";
    case Errc::format: return "format";
    case Errc::manifest: return "manifest";
    case Errc::scenario: return "scenario";
    case Errc::state: return "state";
    case Errc::version: return "version";
    case Errc::numeric: return "numeric";
    case Errc::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + " error: " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Process exit codes used by the command line tool.
// 2 config, 3 data/format, 4 numeric.
inline int exit_code(Errc code) {
  switch (code) {
    case Errc::config:
    case Errc::invalid_range:
      return 2;
    case Errc::data:
    case Errc::format:
    case Errc::manifest:
    case Errc::scenario:
    case Errc::state:
    case Errc::version:
    case Errc::io:
      return 3;
    case Errc::degenerate_vector:
    case Errc::shape:
    case Errc::numeric:
      return 4;
  }
  return 4;
}

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace sharedattr

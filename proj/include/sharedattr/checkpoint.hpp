#pragma once

// Checkpoint directory layout:
//   state.json       format version, id_t, registry, hyperparameters, fingerprint
//   assignment.json  A^t as per-column sorted lists of active row positions
//   ehat.ceb1        adapted attribute embeddings, float32
//
// A checkpoint is written into "<dir>.tmp" and renamed into place, so a
// directory named <dir> is always complete.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sharedattr/attribute_filter.hpp"
#include "sharedattr/ceb1.hpp"
#include "sharedattr/error.hpp"

namespace sharedattr {

inline constexpr int kCheckpointFormatVersion = 1;

struct Fingerprint {
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

namespace detail {

inline nlohmann::json read_json_file(const fs::path& path) {
  if (!fs::exists(path)) fail(Errc::io, "missing checkpoint file " + path.string());
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::format, path.string() + ": " + e.what());
  }
}

}  // namespace detail

inline void save_checkpoint(const TaskState& state, const fs::path& dir, const Fingerprint& fp,
                            const std::vector<std::string>& attribute_texts = {}) {
  check_state_consistency(state);
  nlohmann::json st;
  st["format_version"] = kCheckpointFormatVersion;
  st["task_index"] = state.task_index;
  st["id_t"] = state.index_map.ids;
  st["added_at"] = state.index_map.added_at;
  nlohmann::json reg = nlohmann::json::array();
  for (const auto& e : state.registry.entries()) {
    reg.push_back({{"class_id", e.id}, {"task_index", e.task_index}, {"name", e.name}});
  }
  st["registry"] = reg;
  st["hyperparams"] = state.hyperparams;
  st["fingerprint"] = {{"seed", fp.seed}, {"config_hash", hex64(fp.config_hash)}};
  if (!attribute_texts.empty()) st["attribute_texts"] = attribute_texts;

  const auto& a = state.assignment.values;
  nlohmann::json cols = nlohmann::json::array();
  for (std::size_t j = 0; j < a.cols(); ++j) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      if (a(i, j) != 0.0) rows.push_back(i);
    }
    cols.push_back({{"class_id", state.assignment.column_class_ids[j]}, {"rows", rows}});
  }
  const nlohmann::json asg = {{"num_rows", a.rows()}, {"columns", cols}};

  fs::path tmp = dir;
  tmp += ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  write_text_atomic(tmp / "state.json", st.dump(2) + "\n");
  write_text_atomic(tmp / "assignment.json", asg.dump(2) + "\n");
  write_ceb1(tmp / "ehat.ceb1", state.e_hat);
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

struct LoadedCheckpoint {
  TaskState state;
  Fingerprint fingerprint;
  std::vector<std::string> attribute_texts;
};

inline LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(Errc::io, "checkpoint directory " + dir.string() + " does not exist");
  const nlohmann::json st = detail::read_json_file(dir / "state.json");
  const nlohmann::json asg = detail::read_json_file(dir / "assignment.json");
  if (!fs::exists(dir / "ehat.ceb1")) fail(Errc::io, "missing checkpoint file " + (dir / "ehat.ceb1").string());

  LoadedCheckpoint out;
  TaskState& s = out.state;
  try {
    const int version = st.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      fail(Errc::version, "checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kCheckpointFormatVersion) + ")");
    }
    s.task_index = st.at("task_index").get<int>();
    s.index_map.ids = st.at("id_t").get<std::vector<std::size_t>>();
    s.index_map.added_at = st.at("added_at").get<std::vector<int>>();
    for (const auto& e : st.at("registry")) {
      s.registry.add(e.at("class_id").get<ClassId>(), e.at("task_index").get<int>(), e.at("name").get<std::string>());
    }
    s.hyperparams = st.value("hyperparams", nlohmann::json::object());
    const auto& fp = st.at("fingerprint");
    out.fingerprint.seed = fp.at("seed").get<std::uint64_t>();
    out.fingerprint.config_hash = std::stoull(fp.at("config_hash").get<std::string>(), nullptr, 16);
    if (st.contains("attribute_texts")) out.attribute_texts = st.at("attribute_texts").get<std::vector<std::string>>();

    const std::size_t rows = asg.at("num_rows").get<std::size_t>();
    const auto& cols = asg.at("columns");
    Mat a(rows, cols.size());
    std::vector<ClassId> ids;
    for (std::size_t j = 0; j < cols.size(); ++j) {
      ids.push_back(cols[j].at("class_id").get<ClassId>());
      for (std::size_t i : cols[j].at("rows").get<std::vector<std::size_t>>()) {
        if (i >= rows) fail(Errc::format, "assignment row position out of range");
        a(i, j) = 1.0;
      }
    }
    s.assignment = AssignmentMatrix{std::move(a), Stage::Binary, std::move(ids)};
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::format, dir.string() + ": " + e.what());
  } catch (const std::invalid_argument&) {
    fail(Errc::format, dir.string() + ": malformed fingerprint");
  } catch (const std::out_of_range&) {
    fail(Errc::format, dir.string() + ": malformed fingerprint");
  }
  s.e_hat = read_ceb1(dir / "ehat.ceb1");
  check_state_consistency(s);
  return out;
}

}  // namespace sharedattr

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sharedattr/ceb1.hpp"
#include "sharedattr/error.hpp"
#include "sharedattr/numerics.hpp"

namespace sharedattr {

enum class Category { Color, Shape, Texture, Size, Context, Features, Appearance, Behavior, Environment, Material };

inline constexpr std::array<Category, 10> kAllCategories = {
    Category::Color,   Category::Shape,      Category::Texture,  Category::Size,        Category::Context,
    Category::Features, Category::Appearance, Category::Behavior, Category::Environment, Category::Material,
};

inline std::string_view category_name(Category c) {
  switch (c) {
    case Category::Color: return "Color";
    case Category::Shape: return "Shape";
    case Category::Texture: return "Texture";
    case Category::Size: return "Size";
    case Category::Context: return "Context";
    case Category::Features: return "Features";
    case Category::Appearance: return "Appearance";
    case Category::Behavior: return "Behavior";
    case Category::Environment: return "Environment";
    case Category::Material: return "Material";
  }
  return "";
}

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return out;
}

// Case-insensitive lookup among the ten fixed categories.
inline std::optional<Category> parse_category(std::string_view s) {
  const std::string needle = lowercase(s);
  for (Category c : kAllCategories) {
    if (lowercase(category_name(c)) == needle) return c;
  }
  return std::nullopt;
}

inline std::string apply_prompt_template(Category category, std::string_view value) {
  if (value.empty()) fail(Errc::config, "attribute value must be non-empty");
  return "object which has " + lowercase(category_name(category)) + " is " + std::string(value) + ".";
}

// Inverse of apply_prompt_template: (category, value) when `text` follows the
// `object which has <category> is <value>.` grammar.
inline std::optional<std::pair<Category, std::string>> parse_prompt(std::string_view text) {
  constexpr std::string_view prefix = "object which has ";
  constexpr std::string_view infix = " is ";
  if (!text.starts_with(prefix) || !text.ends_with(".")) return std::nullopt;
  text.remove_prefix(prefix.size());
  text.remove_suffix(1);
  const auto pos = text.find(infix);
  if (pos == std::string_view::npos) return std::nullopt;
  auto category = parse_category(text.substr(0, pos));
  std::string value(text.substr(pos + infix.size()));
  if (!category || value.empty()) return std::nullopt;
  return std::make_pair(*category, std::move(value));
}

struct AttributeRecord {
  std::size_t base_index = 0;
  Category category = Category::Color;
  std::string text;
};

// Frozen attribute embedding base. Row i of embeddings() belongs to records()[i].
class AttributeBase {
 public:
  AttributeBase(std::vector<AttributeRecord> records, Mat embeddings)
      : records_(std::move(records)), embeddings_(std::move(embeddings)) {
    if (records_.empty()) fail(Errc::data, "attribute base needs at least one attribute");
    if (records_.size() != embeddings_.rows()) {
      fail(Errc::shape, "attribute base has " + std::to_string(records_.size()) + " records but " +
                            std::to_string(embeddings_.rows()) + " embedding rows");
    }
    if (!embeddings_.all_finite()) fail(Errc::data, "attribute embeddings must be finite");
    for (std::size_t i = 0; i < records_.size(); ++i) {
      if (records_[i].base_index != i) fail(Errc::data, "attribute records must be ordered by base index");
    }
  }

  std::size_t size() const noexcept { return records_.size(); }
  std::size_t dim() const noexcept { return embeddings_.cols(); }
  const std::vector<AttributeRecord>& records() const noexcept { return records_; }
  const AttributeRecord& record(std::size_t i) const { return records_.at(i); }
  const Mat& embeddings() const noexcept { return embeddings_; }
  std::span<const double> embedding(std::size_t i) const { return embeddings_.row(i); }

 private:
  std::vector<AttributeRecord> records_;
  Mat embeddings_;
};

struct SynthBase {
  AttributeBase base;
  std::vector<std::size_t> true_indices;
  std::vector<std::size_t> distractor_indices;
};

// Random unit-norm attribute directions. True rows come first, distractors after.
inline SynthBase synth_base(Rng& rng, std::size_t n_true, std::size_t n_distractor, std::size_t dim) {
  if (n_true < 1) fail(Errc::config, "synthetic base needs n_true >= 1");
  if (dim < 2) fail(Errc::config, "synthetic base needs D >= 2");
  const std::size_t n = n_true + n_distractor;
  Mat e(n, dim);
  std::vector<AttributeRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec g(dim);
    for (double& x : g) x = rng.gaussian();
    const Vec u = normalized(g);
    std::copy(u.begin(), u.end(), e.row(i).begin());
    const Category c = kAllCategories[i % kAllCategories.size()];
    records.push_back({i, c, apply_prompt_template(c, "value" + std::to_string(i))});
  }
  SynthBase out{AttributeBase(std::move(records), std::move(e)), {}, {}};
  for (std::size_t i = 0; i < n_true; ++i) out.true_indices.push_back(i);
  for (std::size_t i = n_true; i < n; ++i) out.distractor_indices.push_back(i);
  return out;
}

inline double max_abs_pairwise_cosine(const Mat& e) {
  double worst = 0.0;
  for (std::size_t i = 0; i < e.rows(); ++i) {
    for (std::size_t j = i + 1; j < e.rows(); ++j) worst = std::max(worst, std::abs(cosine(e.row(i), e.row(j))));
  }
  return worst;
}

inline AttributeBase load_base(const fs::path& embedding_path, const fs::path& manifest_path) {
  Mat e = read_ceb1(embedding_path);
  const Manifest m = read_manifest(manifest_path);
  if (m.kind != "attributes") fail(Errc::manifest, manifest_path.string() + ": expected kind attributes");
  if (m.texts.size() != e.rows()) {
    fail(Errc::manifest, manifest_path.string() + ": " + std::to_string(m.texts.size()) + " texts for " +
                             std::to_string(e.rows()) + " embedding rows");
  }
  if (!m.labels.empty() && m.labels.size() != m.texts.size()) {
    fail(Errc::manifest, manifest_path.string() + ": labels and texts differ in length");
  }
  std::vector<AttributeRecord> records;
  records.reserve(m.texts.size());
  for (std::size_t i = 0; i < m.texts.size(); ++i) {
    std::optional<Category> c;
    if (!m.labels.empty()) {
      c = parse_category(m.labels[i]);
    } else if (auto parsed = parse_prompt(m.texts[i])) {
      c = parsed->first;
    }
    if (!c) fail(Errc::manifest, manifest_path.string() + ": unknown category for attribute " + std::to_string(i));
    if (m.texts[i].find("object") == std::string::npos) {
      fail(Errc::manifest, manifest_path.string() + ": attribute text " + std::to_string(i) + " is not class-agnostic");
    }
    records.push_back({i, *c, m.texts[i]});
  }
  return AttributeBase(std::move(records), std::move(e));
}

inline void save_base(const AttributeBase& base, const fs::path& embedding_path, const fs::path& manifest_path) {
  write_ceb1(embedding_path, base.embeddings());
  Manifest m;
  m.kind = "attributes";
  for (const auto& r : base.records()) {
    m.labels.emplace_back(category_name(r.category));
    m.texts.push_back(r.text);
  }
  write_manifest(manifest_path, m);
}

}  // namespace sharedattr

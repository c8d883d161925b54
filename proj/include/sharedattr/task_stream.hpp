#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sharedattr/attribute_base.hpp"
#include "sharedattr/ceb1.hpp"
#include "sharedattr/error.hpp"
#include "sharedattr/numerics.hpp"

namespace sharedattr {

using ClassId = std::int64_t;
inline constexpr ClassId kBackgroundLabel = -1;

struct ScenarioConfig {
  std::size_t dim = 32;
  std::vector<std::size_t> partitions = {8, 4};
  std::size_t h = 5;
  double attribute_overlap = 0.5;
  std::size_t samples_per_class_train = 200;
  std::size_t samples_per_class_eval = 100;
  double noise_sigma = 0.05;
  std::size_t n_distractor_attributes = 32;
  std::size_t n_background_samples = 0;
  std::uint64_t seed = 1;

  std::size_t total_classes() const {
    std::size_t n = 0;
    for (auto p : partitions) n += p;
    return n;
  }

  // Attribute rows reserved for class use. Covers phase one with disjoint
  // sets plus fresh draws in later phases.
  std::size_t true_pool_size() const {
    const double total = static_cast<double>(h * total_classes());
    const double first = partitions.empty() ? 0.0 : static_cast<double>(h * partitions.front());
    return static_cast<std::size_t>(std::ceil(total * (1.0 - attribute_overlap / 2.0))) +
           static_cast<std::size_t>(std::ceil(first * attribute_overlap / 2.0)) + h;
  }

  void validate() const {
    if (dim < 2) fail(Errc::config, "scenario D must be >= 2");
    if (partitions.empty()) fail(Errc::config, "scenario needs at least one partition");
    for (auto p : partitions) {
      if (p == 0) fail(Errc::config, "partition sizes must be positive");
    }
    if (h < 1) fail(Errc::config, "h must be >= 1");
    if (!(attribute_overlap >= 0.0 && attribute_overlap <= 1.0)) fail(Errc::config, "attribute_overlap must be in [0,1]");
    if (samples_per_class_train == 0 || samples_per_class_eval == 0) {
      fail(Errc::config, "samples per class must be positive");
    }
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail(Errc::config, "noise_sigma must be >= 0");
    if (h > true_pool_size()) fail(Errc::config, "h exceeds the attribute pool");
  }
};

struct ClassEntry {
  ClassId id = 0;
  int task_index = 0;
  std::string name;

  friend bool operator==(const ClassEntry&, const ClassEntry&) = default;
};

// Classes in introduction order; this order defines assignment-matrix columns.
class ClassRegistry {
 public:
  void add(ClassId id, int task_index, std::string name) {
    if (contains(id)) fail(Errc::scenario, "class id " + std::to_string(id) + " already registered");
    if (!entries_.empty() && task_index < entries_.back().task_index) {
      fail(Errc::state, "classes must be registered in task order");
    }
    entries_.push_back({id, task_index, std::move(name)});
  }

  bool contains(ClassId id) const {
    return std::any_of(entries_.begin(), entries_.end(), [id](const ClassEntry& e) { return e.id == id; });
  }

  std::optional<std::size_t> column_of(ClassId id) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].id == id) return i;
    }
    return std::nullopt;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<ClassEntry>& entries() const noexcept { return entries_; }
  const ClassEntry& at(std::size_t column) const { return entries_.at(column); }

  // Number of leading columns belonging to tasks before `task_index`.
  std::size_t columns_before(int task_index) const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.task_index < task_index ? 1 : 0;
    return n;
  }

  friend bool operator==(const ClassRegistry&, const ClassRegistry&) = default;

 private:
  std::vector<ClassEntry> entries_;
};

struct TaskDataset {
  int task_index = 1;
  std::vector<ClassId> class_ids;
  std::vector<std::string> class_names;
  Mat train_visual;
  std::vector<ClassId> train_labels;
  Mat eval_visual;
  std::vector<ClassId> eval_labels;
  Mat background_train;
  Mat background_eval;

  std::size_t num_classes() const { return class_ids.size(); }

  // Position of `id` among this task's classes.
  std::size_t local_index(ClassId id) const {
    auto it = std::find(class_ids.begin(), class_ids.end(), id);
    if (it == class_ids.end()) fail(Errc::data, "label " + std::to_string(id) + " is not a class of this task");
    return static_cast<std::size_t>(it - class_ids.begin());
  }
};

struct SyntheticGroundTruth {
  std::map<ClassId, std::vector<std::size_t>> true_attribute_indices;
  std::vector<std::size_t> distractor_indices;
};

struct Scenario {
  AttributeBase base;
  SyntheticGroundTruth truth;
  std::vector<TaskDataset> tasks;
  ClassRegistry registry;
  std::map<ClassId, Vec> prototypes;
  std::uint64_t base_seed = 0;
};

inline constexpr double kBackgroundMaxCosine = 0.5;
inline constexpr double kMaxBaseCollinearity = 0.9;

namespace detail {

inline void append_row(std::vector<double>& storage, std::span<const double> row) {
  storage.insert(storage.end(), row.begin(), row.end());
}

inline Vec random_unit(Rng& rng, std::size_t dim) {
  Vec g(dim);
  for (double& x : g) x = rng.gaussian();
  return normalized(g);
}

inline Mat draw_background(Rng& rng, std::size_t count, std::size_t dim, const std::map<ClassId, Vec>& prototypes) {
  std::vector<double> storage;
  storage.reserve(count * dim);
  for (std::size_t k = 0; k < count; ++k) {
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt > 100000) fail(Errc::config, "cannot draw background samples far from every class");
      Vec x = random_unit(rng, dim);
      double worst = -1.0;
      for (const auto& [id, p] : prototypes) worst = std::max(worst, cosine(x, p));
      if (worst < kBackgroundMaxCosine) {
        append_row(storage, x);
        break;
      }
    }
  }
  return Mat(count, dim, std::move(storage));
}

}  // namespace detail

// Builds a synthetic base, per-class attribute sets and per-task datasets.
// Phase one classes get disjoint attribute sets. A slot of a later-phase
// class reuses an attribute from earlier phases with probability
// attribute_overlap, otherwise it takes an unused one. No two classes share
// an identical set.
inline Scenario generate_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const std::size_t n_true = cfg.true_pool_size();

  std::optional<SynthBase> synth;
  Rng rng(cfg.seed);
  std::uint64_t base_seed = cfg.seed;
  for (int attempt = 0; attempt < 100; ++attempt, ++base_seed) {
    rng = Rng(base_seed);
    SynthBase candidate = synth_base(rng, n_true, cfg.n_distractor_attributes, cfg.dim);
    if (max_abs_pairwise_cosine(candidate.base.embeddings()) < kMaxBaseCollinearity) {
      synth.emplace(std::move(candidate));
      break;
    }
  }
  if (!synth) fail(Errc::config, "could not draw a non-degenerate attribute base; increase D");
  const AttributeBase& base = synth->base;

  SyntheticGroundTruth truth;
  truth.distractor_indices = synth->distractor_indices;
  ClassRegistry registry;
  std::set<std::vector<std::size_t>> used_sets;
  std::vector<std::size_t> pool;  // attributes used by earlier phases, ascending
  std::size_t next_fresh = 0;
  ClassId next_id = 0;

  for (std::size_t phase = 0; phase < cfg.partitions.size(); ++phase) {
    std::set<std::size_t> phase_used;
    for (std::size_t k = 0; k < cfg.partitions[phase]; ++k) {
      const ClassId id = next_id++;
      std::vector<std::size_t> chosen;
      std::size_t fresh_taken = 0;
      for (int attempt = 0;; ++attempt) {
        chosen.clear();
        fresh_taken = 0;
        const bool force_fresh = attempt >= 64;
        for (std::size_t slot = 0; slot < cfg.h; ++slot) {
          std::vector<std::size_t> reusable;
          for (auto idx : pool) {
            if (std::find(chosen.begin(), chosen.end(), idx) == chosen.end()) reusable.push_back(idx);
          }
          const bool fresh_left = next_fresh + fresh_taken < n_true;
          const bool want_reuse = phase > 0 && !reusable.empty() && rng.unit() < cfg.attribute_overlap &&
                                  !(force_fresh && slot + 1 == cfg.h && fresh_left);
          if (want_reuse) {
            chosen.push_back(reusable[rng.below(reusable.size())]);
          } else if (fresh_left) {
            chosen.push_back(next_fresh + fresh_taken++);
          } else if (!reusable.empty()) {
            chosen.push_back(reusable[rng.below(reusable.size())]);
          } else {
            fail(Errc::config, "attribute pool exhausted: h too large for the scenario");
          }
        }
        std::sort(chosen.begin(), chosen.end());
        if (!used_sets.contains(chosen)) break;
        if (force_fresh && next_fresh + fresh_taken >= n_true) {
          fail(Errc::config, "cannot give every class a distinct attribute set");
        }
      }
      next_fresh += fresh_taken;
      used_sets.insert(chosen);
      phase_used.insert(chosen.begin(), chosen.end());
      truth.true_attribute_indices[id] = chosen;
      registry.add(id, static_cast<int>(phase + 1), "class_" + std::to_string(id));
    }
    std::set<std::size_t> merged(pool.begin(), pool.end());
    merged.insert(phase_used.begin(), phase_used.end());
    pool.assign(merged.begin(), merged.end());
  }

  std::map<ClassId, Vec> prototypes;
  for (const auto& [id, attrs] : truth.true_attribute_indices) {
    Vec sum(cfg.dim, 0.0);
    for (auto a : attrs) {
      auto row = base.embedding(a);
      for (std::size_t d = 0; d < cfg.dim; ++d) sum[d] += row[d];
    }
    prototypes[id] = normalized(sum);
  }

  auto draw_sample = [&](const Vec& proto) {
    if (cfg.noise_sigma == 0.0) return proto;
    Vec x = proto;
    for (double& v : x) v += cfg.noise_sigma * rng.gaussian();
    return normalized(x);
  };

  std::vector<TaskDataset> tasks;
  std::size_t first_class = 0;
  for (std::size_t phase = 0; phase < cfg.partitions.size(); ++phase) {
    TaskDataset ds;
    ds.task_index = static_cast<int>(phase + 1);
    std::vector<double> train, eval;
    for (std::size_t k = 0; k < cfg.partitions[phase]; ++k) {
      const auto& entry = registry.at(first_class + k);
      ds.class_ids.push_back(entry.id);
      ds.class_names.push_back(entry.name);
      const Vec& proto = prototypes.at(entry.id);
      for (std::size_t s = 0; s < cfg.samples_per_class_train; ++s) {
        detail::append_row(train, draw_sample(proto));
        ds.train_labels.push_back(entry.id);
      }
      for (std::size_t s = 0; s < cfg.samples_per_class_eval; ++s) {
        detail::append_row(eval, draw_sample(proto));
        ds.eval_labels.push_back(entry.id);
      }
    }
    first_class += cfg.partitions[phase];
    ds.train_visual = Mat(ds.train_labels.size(), cfg.dim, std::move(train));
    ds.eval_visual = Mat(ds.eval_labels.size(), cfg.dim, std::move(eval));
    ds.background_train = detail::draw_background(rng, cfg.n_background_samples, cfg.dim, prototypes);
    ds.background_eval = detail::draw_background(rng, cfg.n_background_samples, cfg.dim, prototypes);
    tasks.push_back(std::move(ds));
  }

  return Scenario{std::move(synth->base), std::move(truth), std::move(tasks), std::move(registry),
                  std::move(prototypes), base_seed};
}

// Reads one task's visual embeddings. Rows are L2-normalized on ingestion.
// Rows tagged "background" (or labelled -1) become background samples; when
// the manifest has no `splits`, every labelled row serves both train and eval.
inline TaskDataset load_task(const fs::path& embedding_path, const fs::path& manifest_path, int task_index,
                             const ClassRegistry& registry) {
  const Mat raw = read_ceb1(embedding_path);
  const Manifest m = read_manifest(manifest_path);
  if (m.kind != "visual") fail(Errc::manifest, manifest_path.string() + ": expected kind visual");
  if (m.class_ids.size() != raw.rows()) {
    fail(Errc::manifest, manifest_path.string() + ": " + std::to_string(m.class_ids.size()) + " class ids for " +
                             std::to_string(raw.rows()) + " rows");
  }
  if (m.task_index && *m.task_index != task_index) {
    fail(Errc::manifest, manifest_path.string() + ": manifest is for task " + std::to_string(*m.task_index));
  }
  if (!m.splits.empty() && m.splits.size() != raw.rows()) fail(Errc::manifest, "splits length differs from rows");
  if (!m.labels.empty() && m.labels.size() != raw.rows()) fail(Errc::manifest, "labels length differs from rows");

  TaskDataset ds;
  ds.task_index = task_index;
  std::vector<double> train, eval, bg_train, bg_eval;
  const std::size_t dim = raw.cols();
  for (std::size_t r = 0; r < raw.rows(); ++r) {
    const double n = norm(raw.row(r));
    if (!(n > 0.0)) fail(Errc::data, embedding_path.string() + ": zero-norm row " + std::to_string(r));
    const Vec x = normalized(raw.row(r));
    const ClassId id = m.class_ids[r];
    const std::string split = m.splits.empty() ? std::string() : m.splits[r];
    if (id == kBackgroundLabel || split == "background") {
      detail::append_row(bg_train, x);
      detail::append_row(bg_eval, x);
      continue;
    }
    if (id < 0) fail(Errc::manifest, "negative class id " + std::to_string(id));
    if (registry.contains(id)) {
      fail(Errc::scenario, "class id " + std::to_string(id) + " was introduced by an earlier task");
    }
    if (std::find(ds.class_ids.begin(), ds.class_ids.end(), id) == ds.class_ids.end()) {
      ds.class_ids.push_back(id);
      ds.class_names.push_back(m.labels.empty() ? "class_" + std::to_string(id) : m.labels[r]);
    }
    if (split.empty() || split == "train") {
      detail::append_row(train, x);
      ds.train_labels.push_back(id);
    }
    if (split.empty() || split == "eval") {
      detail::append_row(eval, x);
      ds.eval_labels.push_back(id);
    }
    if (!split.empty() && split != "train" && split != "eval") fail(Errc::manifest, "unknown split '" + split + "'");
  }
  if (ds.class_ids.empty()) fail(Errc::data, manifest_path.string() + ": task has no labelled rows");
  ds.train_visual = Mat(ds.train_labels.size(), dim, std::move(train));
  ds.eval_visual = Mat(ds.eval_labels.size(), dim, std::move(eval));
  const std::size_t n_bg = bg_train.size() / dim;
  ds.background_train = Mat(n_bg, dim, std::move(bg_train));
  ds.background_eval = Mat(n_bg, dim, std::move(bg_eval));
  return ds;
}

// Writes a task in the layout load_task reads, with explicit splits.
inline void save_task(const TaskDataset& ds, const fs::path& embedding_path, const fs::path& manifest_path) {
  const std::size_t dim = ds.train_visual.cols();
  std::vector<double> storage;
  Manifest m;
  m.kind = "visual";
  m.task_index = ds.task_index;
  auto name_of = [&](ClassId id) { return ds.class_names.at(ds.local_index(id)); };
  for (std::size_t r = 0; r < ds.train_visual.rows(); ++r) {
    detail::append_row(storage, ds.train_visual.row(r));
    m.class_ids.push_back(ds.train_labels[r]);
    m.labels.push_back(name_of(ds.train_labels[r]));
    m.splits.emplace_back("train");
  }
  for (std::size_t r = 0; r < ds.eval_visual.rows(); ++r) {
    detail::append_row(storage, ds.eval_visual.row(r));
    m.class_ids.push_back(ds.eval_labels[r]);
    m.labels.push_back(name_of(ds.eval_labels[r]));
    m.splits.emplace_back("eval");
  }
  // Background rows are written once and reloaded into both background sets.
  for (std::size_t r = 0; r < ds.background_eval.rows(); ++r) {
    detail::append_row(storage, ds.background_eval.row(r));
    m.class_ids.push_back(kBackgroundLabel);
    m.labels.emplace_back("background");
    m.splits.emplace_back("background");
  }
  write_ceb1(embedding_path, Mat(m.class_ids.size(), dim, std::move(storage)));
  write_manifest(manifest_path, m);
}

}  // namespace sharedattr

#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sharedattr/adapter.hpp"
#include "sharedattr/assignment.hpp"
#include "sharedattr/attribute_base.hpp"
#include "sharedattr/attribute_filter.hpp"
#include "sharedattr/checkpoint.hpp"
#include "sharedattr/inference.hpp"
#include "sharedattr/refiner.hpp"
#include "sharedattr/task_stream.hpp"

namespace sharedattr {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr std::size_t kDefaultHa = 25;

struct PipelineConfig {
  ScenarioConfig scenario;
  std::optional<std::string> data_dir;  // exported CEB1 data instead of the generator
  TrainConfig train;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::size_t> h_a;  // defaults to scenario h, or 25 for loaded data
  bool per_class_topk = false;
  AdaptOptions adapt;
  RefineOptions refine;
  double tau = 0.5;

  std::size_t effective_h_a() const {
    if (h_a) return *h_a;
    return data_dir ? kDefaultHa : scenario.h;
  }
  std::uint64_t effective_train_seed() const { return train_seed.value_or(scenario.seed); }

  void validate() const {
    if (!data_dir) scenario.validate();
    train.validate();
    if (effective_h_a() == 0) fail(Errc::config, "H_a must be positive");
    if (!(tau > 0.0 && tau < 1.0)) fail(Errc::config, "tau must be in (0,1)");
    if (!(adapt.learning_rate > 0.0) || !(refine.learning_rate > 0.0)) fail(Errc::config, "learning rates must be > 0");
    if (!(adapt.lambda1 >= 0.0) || !(refine.lambda2 >= 0.0)) fail(Errc::config, "consistency weights must be >= 0");
    if (adapt.m == 0) fail(Errc::config, "M must be positive");
  }
};

namespace detail {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) fail(Errc::config, "unknown key '" + key + "' in " + where);
  }
}

}  // namespace detail

inline PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig cfg;
  try {
    if (!j.is_object()) fail(Errc::config, "config must be a JSON object");
    detail::reject_unknown(j, {"scenario", "data_dir", "train", "filter", "adapt", "refine", "tau"}, "config");
    if (j.contains("scenario")) {
      const auto& s = j.at("scenario");
      detail::reject_unknown(s,
                             {"D", "partitions", "h", "attribute_overlap", "samples_per_class_train",
                              "samples_per_class_eval", "noise_sigma", "n_distractor_attributes",
                              "n_background_samples", "seed"},
                             "scenario");
      detail::read_opt(s, "D", cfg.scenario.dim);
      detail::read_opt(s, "partitions", cfg.scenario.partitions);
      detail::read_opt(s, "h", cfg.scenario.h);
      detail::read_opt(s, "attribute_overlap", cfg.scenario.attribute_overlap);
      detail::read_opt(s, "samples_per_class_train", cfg.scenario.samples_per_class_train);
      detail::read_opt(s, "samples_per_class_eval", cfg.scenario.samples_per_class_eval);
      detail::read_opt(s, "noise_sigma", cfg.scenario.noise_sigma);
      detail::read_opt(s, "n_distractor_attributes", cfg.scenario.n_distractor_attributes);
      detail::read_opt(s, "n_background_samples", cfg.scenario.n_background_samples);
      detail::read_opt(s, "seed", cfg.scenario.seed);
    }
    if (j.contains("data_dir")) cfg.data_dir = j.at("data_dir").get<std::string>();
    if (j.contains("train")) {
      const auto& t = j.at("train");
      detail::reject_unknown(t, {"lambda_l1", "learning_rate", "epochs", "seed", "background_negatives"}, "train");
      detail::read_opt(t, "lambda_l1", cfg.train.lambda_l1);
      detail::read_opt(t, "learning_rate", cfg.train.learning_rate);
      detail::read_opt(t, "epochs", cfg.train.epochs);
      detail::read_opt(t, "background_negatives", cfg.train.background_negatives);
      if (t.contains("seed")) cfg.train_seed = t.at("seed").get<std::uint64_t>();
    }
    if (j.contains("filter")) {
      const auto& f = j.at("filter");
      detail::reject_unknown(f, {"H_a", "per_class_topk"}, "filter");
      if (f.contains("H_a")) cfg.h_a = f.at("H_a").get<std::size_t>();
      detail::read_opt(f, "per_class_topk", cfg.per_class_topk);
    }
    if (j.contains("adapt")) {
      const auto& a = j.at("adapt");
      detail::reject_unknown(a, {"lambda1", "learning_rate", "epochs", "M", "row_mean"}, "adapt");
      detail::read_opt(a, "lambda1", cfg.adapt.lambda1);
      detail::read_opt(a, "learning_rate", cfg.adapt.learning_rate);
      detail::read_opt(a, "epochs", cfg.adapt.epochs);
      detail::read_opt(a, "M", cfg.adapt.m);
      detail::read_opt(a, "row_mean", cfg.adapt.row_mean);
    }
    if (j.contains("refine")) {
      const auto& r = j.at("refine");
      detail::reject_unknown(r, {"lambda2", "learning_rate", "epochs"}, "refine");
      detail::read_opt(r, "lambda2", cfg.refine.lambda2);
      detail::read_opt(r, "learning_rate", cfg.refine.learning_rate);
      detail::read_opt(r, "epochs", cfg.refine.epochs);
    }
    detail::read_opt(j, "tau", cfg.tau);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::config, e.what());
  }
  cfg.validate();
  return cfg;
}

// Fully resolved configuration; also the input to the config hash.
inline nlohmann::json config_to_json(const PipelineConfig& cfg) {
  nlohmann::json j;
  const auto& s = cfg.scenario;
  if (cfg.data_dir) {
    j["data_dir"] = *cfg.data_dir;
  } else {
    j["scenario"] = {{"D", s.dim},
                     {"partitions", s.partitions},
                     {"h", s.h},
                     {"attribute_overlap", s.attribute_overlap},
                     {"samples_per_class_train", s.samples_per_class_train},
                     {"samples_per_class_eval", s.samples_per_class_eval},
                     {"noise_sigma", s.noise_sigma},
                     {"n_distractor_attributes", s.n_distractor_attributes},
                     {"n_background_samples", s.n_background_samples},
                     {"seed", s.seed}};
  }
  j["train"] = {{"lambda_l1", cfg.train.lambda_l1},
                {"learning_rate", cfg.train.learning_rate},
                {"epochs", cfg.train.epochs},
                {"seed", cfg.effective_train_seed()},
                {"background_negatives", cfg.train.background_negatives}};
  j["filter"] = {{"H_a", cfg.effective_h_a()}, {"per_class_topk", cfg.per_class_topk}};
  j["adapt"] = {{"lambda1", cfg.adapt.lambda1},
                {"learning_rate", cfg.adapt.learning_rate},
                {"epochs", cfg.adapt.epochs},
                {"M", cfg.adapt.m},
                {"row_mean", cfg.adapt.row_mean}};
  j["refine"] = {{"lambda2", cfg.refine.lambda2},
                 {"learning_rate", cfg.refine.learning_rate},
                 {"epochs", cfg.refine.epochs}};
  j["tau"] = cfg.tau;
  return j;
}

inline PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::config, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::config, path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

inline Fingerprint fingerprint_of(const PipelineConfig& cfg) {
  return {cfg.scenario.seed, fnv1a64(config_to_json(cfg).dump())};
}

// Attribute base plus the ordered task stream, from the generator or from disk.
struct TaskSource {
  std::optional<Scenario> scenario;  // set for synthetic runs
  std::optional<AttributeBase> loaded_base;
  std::vector<TaskDataset> loaded_tasks;

  const AttributeBase& base() const { return scenario ? scenario->base : *loaded_base; }
  const std::vector<TaskDataset>& tasks() const { return scenario ? scenario->tasks : loaded_tasks; }
};

// Data directory layout written by `gen`:
//   attributes.ceb1 / attributes.json
//   task_<t>.ceb1 / task_<t>.json     for t = 1, 2, ...
//   ground_truth.json                 synthetic runs only
inline fs::path task_embedding_path(const fs::path& dir, int t) { return dir / ("task_" + std::to_string(t) + ".ceb1"); }
inline fs::path task_manifest_path(const fs::path& dir, int t) { return dir / ("task_" + std::to_string(t) + ".json"); }

inline std::vector<TaskDataset> load_task_stream(const fs::path& dir, std::optional<int> up_to = std::nullopt) {
  std::vector<TaskDataset> tasks;
  ClassRegistry seen;
  for (int t = 1; fs::exists(task_manifest_path(dir, t)); ++t) {
    if (up_to && t > *up_to) break;
    TaskDataset ds = load_task(task_embedding_path(dir, t), task_manifest_path(dir, t), t, seen);
    for (std::size_t k = 0; k < ds.num_classes(); ++k) seen.add(ds.class_ids[k], t, ds.class_names[k]);
    tasks.push_back(std::move(ds));
  }
  if (tasks.empty()) fail(Errc::data, "no task files found in " + dir.string());
  return tasks;
}

inline TaskSource make_source(const PipelineConfig& cfg) {
  TaskSource src;
  if (cfg.data_dir) {
    const fs::path dir(*cfg.data_dir);
    src.loaded_base.emplace(load_base(dir / "attributes.ceb1", dir / "attributes.json"));
    src.loaded_tasks = load_task_stream(dir);
  } else {
    src.scenario.emplace(generate_scenario(cfg.scenario));
  }
  return src;
}

inline nlohmann::json ground_truth_to_json(const SyntheticGroundTruth& truth) {
  nlohmann::json classes = nlohmann::json::object();
  for (const auto& [id, attrs] : truth.true_attribute_indices) classes[std::to_string(id)] = attrs;
  return {{"true_attribute_indices", classes}, {"distractor_indices", truth.distractor_indices}};
}

inline void write_scenario_dir(const Scenario& sc, const fs::path& dir) {
  fs::create_directories(dir);
  save_base(sc.base, dir / "attributes.ceb1", dir / "attributes.json");
  for (const auto& ds : sc.tasks) {
    save_task(ds, task_embedding_path(dir, ds.task_index), task_manifest_path(dir, ds.task_index));
  }
  nlohmann::json gt = ground_truth_to_json(sc.truth);
  gt["base_seed"] = sc.base_seed;
  write_text_atomic(dir / "ground_truth.json", gt.dump(2) + "\n");
}

struct RunOutcome {
  nlohmann::json report;
  std::vector<TaskState> states;  // one per completed task
  std::optional<SyntheticGroundTruth> truth;
  std::uint64_t base_hash_before = 0;
  std::uint64_t base_hash_after = 0;
};

namespace detail {

inline nlohmann::json selections_to_json(const TaskState& s) {
  nlohmann::json out = nlohmann::json::object();
  const auto& a = s.assignment.values;
  for (std::size_t j = 0; j < a.cols(); ++j) {
    if (s.registry.at(j).task_index != s.task_index) continue;
    std::vector<std::size_t> attrs;
    for (std::size_t i = 0; i < a.rows(); ++i) {
      if (a(i, j) != 0.0) attrs.push_back(s.index_map.ids[i]);
    }
    std::sort(attrs.begin(), attrs.end());
    out[std::to_string(s.registry.at(j).id)] = attrs;
  }
  return out;
}

inline std::vector<std::string> active_texts(const TaskState& s, const AttributeBase& base) {
  std::vector<std::string> texts;
  for (auto id : s.index_map.ids) texts.push_back(base.record(id).text);
  return texts;
}

}  // namespace detail

// Per task: fit over the full base, binarize, merge, adapt, refine, evaluate.
// Checkpoints go to <checkpoint_root>/task_<t> when a root is given. On error
// the partial report is left in `partial` and the error is rethrown.
inline RunOutcome run_tasks(const PipelineConfig& cfg, const std::function<TaskSource()>& source,
                            const std::optional<fs::path>& checkpoint_root, nlohmann::json* partial = nullptr) {
  using clock = std::chrono::steady_clock;
  const auto run_start = clock::now();
  cfg.validate();
  const Fingerprint fp = fingerprint_of(cfg);

  RunOutcome out;
  nlohmann::json& report = out.report;
  report["schema_version"] = kReportSchemaVersion;
  report["complete"] = false;
  report["config"] = config_to_json(cfg);
  report["fingerprint"] = {{"seed", fp.seed}, {"config_hash", hex64(fp.config_hash)}};
  report["tasks"] = nlohmann::json::array();
  report["timings"] = {{"per_task_seconds", nlohmann::json::array()}};

  try {
    const TaskSource src = source();
    const AttributeBase& base = src.base();
    out.base_hash_before = hash_mat(base.embeddings());
    if (src.scenario) {
      out.truth = src.scenario->truth;
      nlohmann::json splits = nlohmann::json::array();
      for (const auto& ds : src.tasks()) splits.push_back(ds.class_ids);
      report["scenario"] = {{"base_seed", src.scenario->base_seed},
                            {"attributes", base.size()},
                            {"class_splits", splits}};
    } else {
      report["scenario"] = {{"attributes", base.size()}};
    }
    const std::size_t h_a = cfg.effective_h_a();
    report["hyperparams"] = {{"H_a", h_a},
                             {"lambda_l1", cfg.train.lambda_l1},
                             {"lambda1", cfg.adapt.lambda1},
                             {"lambda2", cfg.refine.lambda2}};

    std::optional<double> baseline;
    const auto& tasks = src.tasks();
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
      const auto task_start = clock::now();
      const TaskDataset& ds = tasks[ti];
      const TaskState* prev = out.states.empty() ? nullptr : &out.states.back();

      TrainConfig tc = cfg.train;
      tc.seed = cfg.effective_train_seed();
      const FitResult fit = fit_assignment(base.embeddings(), ds, tc);
      const Mat selection = cfg.per_class_topk ? binarize_topk_per_class(fit.assignment.values, h_a)
                                               : binarize_topk(fit.assignment.values, h_a);
      TaskState merged = merge_assignment(prev, selection, base, ds);
      merged.hyperparams = report["hyperparams"];

      const Mat e_prev = prev ? prev->e_hat : Mat(0, base.dim());
      const ClassMeans means = class_visual_means(ds, cfg.adapt.m);
      EmbeddingFit adapted = adapt_attributes(std::move(merged), means, e_prev, cfg.adapt);
      EmbeddingFit refined = refine_attributes(std::move(adapted.state), ds, e_prev, cfg.refine);
      TaskState state = std::move(refined.state);
      // Inference and checkpoints share float32 precision.
      state.e_hat = to_float_precision(state.e_hat);
      if (!state.e_hat.all_finite()) fail(Errc::numeric, "non-finite attribute embeddings");

      const SharingStats sharing = sharing_stats(prev, state);
      const MetricsReport metrics =
          evaluate(state, std::span(tasks.data(), ti + 1), baseline, cfg.tau);
      if (ti == 0) baseline = metrics.per_task_accuracy.at(ds.task_index);

      if (checkpoint_root) {
        save_checkpoint(state, *checkpoint_root / ("task_" + std::to_string(ds.task_index)), fp,
                        detail::active_texts(state, base));
      }

      nlohmann::json tj;
      tj["task_index"] = ds.task_index;
      tj["classes"] = ds.class_ids;
      tj["metrics"] = metrics_to_json(metrics);
      tj["sharing"] = {{"active_total", sharing.active_total},
                       {"reused_from_prev", sharing.reused_from_prev},
                       {"newly_added", sharing.newly_added}};
      tj["selected_attributes"] = detail::selections_to_json(state);
      tj["losses"] = {{"assignment", fit.losses}, {"adapt", adapted.losses}, {"refine", refined.losses}};
      report["tasks"].push_back(tj);
      report["timings"]["per_task_seconds"].push_back(
          std::chrono::duration<double>(clock::now() - task_start).count());
      out.states.push_back(std::move(state));
    }
    out.base_hash_after = hash_mat(base.embeddings());
    report["complete"] = true;
  } catch (const Error& e) {
    report["error"] = e.what();
    report["timings"]["total_seconds"] = std::chrono::duration<double>(clock::now() - run_start).count();
    if (partial) *partial = report;
    throw;
  }
  report["timings"]["total_seconds"] = std::chrono::duration<double>(clock::now() - run_start).count();
  return out;
}

inline RunOutcome run_scenario(const PipelineConfig& cfg, const std::optional<fs::path>& checkpoint_root,
                               nlohmann::json* partial = nullptr) {
  return run_tasks(cfg, [&cfg] { return make_source(cfg); }, checkpoint_root, partial);
}

inline nlohmann::json strip_timings(nlohmann::json report) {
  report.erase("timings");
  return report;
}

}  // namespace sharedattr

#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "sharedattr/assignment.hpp"
#include "sharedattr/attribute_filter.hpp"
#include "sharedattr/error.hpp"
#include "sharedattr/numerics.hpp"
#include "sharedattr/task_stream.hpp"

namespace sharedattr {

struct Prediction {
  ClassId best_class = 0;  // argmax, reported even when background
  bool background = false;
  double score = 0.0;
  Vec probabilities;  // registry order

  std::optional<ClassId> class_id() const {
    if (background) return std::nullopt;
    return best_class;
  }
};

inline Prediction classify(const TaskState& state, std::span<const double> e_v, double tau) {
  if (state.num_classes() == 0) fail(Errc::state, "state has no classes");
  const Vec s = attribute_similarity(state.e_hat, e_v);
  Prediction out;
  out.probabilities = class_probabilities(state.assignment.values, s);
  std::size_t best = 0;
  for (std::size_t j = 1; j < out.probabilities.size(); ++j) {
    const double p = out.probabilities[j];
    const double q = out.probabilities[best];
    if (p > q || (p == q && state.registry.at(j).id < state.registry.at(best).id)) best = j;
  }
  out.best_class = state.registry.at(best).id;
  out.score = out.probabilities[best];
  out.background = out.score < tau;
  return out;
}

struct MetricsReport {
  std::map<int, double> per_task_accuracy;
  double overall_accuracy = 0.0;
  std::optional<double> old_class_accuracy;
  std::optional<double> fpp_accuracy;
  std::size_t false_positives = 0;
  std::size_t background_samples = 0;
  std::size_t eval_samples = 0;
  std::vector<ClassId> confusion_classes;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted], registry order
};

// Accuracy is argmax-based and ignores tau. fpp_accuracy compares the first
// task's classes against `baseline_first_task_accuracy`, measured right after
// task one. False positives are background rows whose best probability
// reaches tau.
inline MetricsReport evaluate(const TaskState& state, std::span<const TaskDataset> datasets,
                              std::optional<double> baseline_first_task_accuracy, double tau) {
  MetricsReport out;
  const std::size_t c = state.num_classes();
  for (const auto& e : state.registry.entries()) out.confusion_classes.push_back(e.id);
  out.confusion.assign(c, std::vector<std::size_t>(c, 0));

  std::size_t correct_total = 0, old_total = 0, old_correct = 0;
  for (const auto& ds : datasets) {
    if (ds.task_index > state.task_index) fail(Errc::data, "evaluation data from a task the state has not learned");
    std::size_t correct = 0;
    for (std::size_t k = 0; k < ds.eval_visual.rows(); ++k) {
      const auto truth_col = state.registry.column_of(ds.eval_labels[k]);
      if (!truth_col) fail(Errc::data, "evaluation label " + std::to_string(ds.eval_labels[k]) + " is not registered");
      const Prediction p = classify(state, ds.eval_visual.row(k), tau);
      const auto pred_col = *state.registry.column_of(p.best_class);
      ++out.confusion[*truth_col][pred_col];
      const bool hit = p.best_class == ds.eval_labels[k];
      correct += hit ? 1 : 0;
      if (ds.task_index < state.task_index) {
        ++old_total;
        old_correct += hit ? 1 : 0;
      }
    }
    if (ds.eval_visual.rows() > 0) {
      out.per_task_accuracy[ds.task_index] = static_cast<double>(correct) / static_cast<double>(ds.eval_visual.rows());
    }
    correct_total += correct;
    out.eval_samples += ds.eval_visual.rows();
    for (std::size_t k = 0; k < ds.background_eval.rows(); ++k) {
      const Prediction p = classify(state, ds.background_eval.row(k), tau);
      out.false_positives += p.background ? 0 : 1;
      ++out.background_samples;
    }
  }
  if (out.eval_samples == 0) fail(Errc::data, "empty evaluation set");
  out.overall_accuracy = static_cast<double>(correct_total) / static_cast<double>(out.eval_samples);
  if (old_total > 0) out.old_class_accuracy = static_cast<double>(old_correct) / static_cast<double>(old_total);
  if (state.task_index > 1 && baseline_first_task_accuracy && out.per_task_accuracy.contains(1)) {
    out.fpp_accuracy = *baseline_first_task_accuracy - out.per_task_accuracy.at(1);
  }
  return out;
}

inline nlohmann::json metrics_to_json(const MetricsReport& m) {
  nlohmann::json j;
  nlohmann::json per_task = nlohmann::json::object();
  for (const auto& [t, acc] : m.per_task_accuracy) per_task[std::to_string(t)] = acc;
  j["per_task_accuracy"] = per_task;
  j["overall_accuracy"] = m.overall_accuracy;
  j["old_class_accuracy"] = m.old_class_accuracy ? nlohmann::json(*m.old_class_accuracy) : nlohmann::json(nullptr);
  j["fpp_accuracy"] = m.fpp_accuracy ? nlohmann::json(*m.fpp_accuracy) : nlohmann::json(nullptr);
  j["false_positives"] = m.false_positives;
  j["background_samples"] = m.background_samples;
  j["eval_samples"] = m.eval_samples;
  j["confusion"] = {{"classes", m.confusion_classes}, {"counts", m.confusion}};
  return j;
}

}  // namespace sharedattr

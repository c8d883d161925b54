#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "sharedattr/error.hpp"
#include "sharedattr/numerics.hpp"
#include "sharedattr/task_stream.hpp"

namespace sharedattr {

enum class Stage { Real, Binary };

// Attribute-to-class scores. Rows are attributes, columns follow registry order.
struct AssignmentMatrix {
  Mat values;
  Stage stage = Stage::Real;
  std::vector<ClassId> column_class_ids;

  bool is_binary() const {
    return std::all_of(values.flat().begin(), values.flat().end(), [](double v) { return v == 0.0 || v == 1.0; });
  }
};

struct TrainConfig {
  double lambda_l1 = 0.01;
  double learning_rate = 0.2;
  std::size_t epochs = 200;
  std::uint64_t seed = 1;
  bool background_negatives = false;

  void validate() const {
    if (!(lambda_l1 >= 0.0)) fail(Errc::config, "lambda_l1 must be >= 0");
    if (!(learning_rate > 0.0)) fail(Errc::config, "learning rate must be > 0");
  }
};

inline constexpr double kProbabilityClamp = 1e-12;

// S[i] = cosine(row i of E, e_v).
inline Vec attribute_similarity(const Mat& e, std::span<const double> e_v) {
  if (e.cols() != e_v.size()) fail(Errc::shape, "attribute dimension differs from visual embedding dimension");
  const double nv = norm(e_v);
  if (!(nv > 0.0)) fail(Errc::degenerate_vector, "visual embedding has zero norm");
  Vec s(e.rows());
  for (std::size_t i = 0; i < e.rows(); ++i) {
    const double nr = norm(e.row(i));
    if (!(nr > 0.0)) fail(Errc::degenerate_vector, "attribute row " + std::to_string(i) + " has zero norm");
    s[i] = dot(e.row(i), e_v) / (nr * nv);
  }
  return s;
}

// Similarity of every row of `samples` against E; one output row per sample.
inline Mat similarity_rows(const Mat& e, const Mat& samples) {
  Mat out(samples.rows(), e.rows());
  for (std::size_t b = 0; b < samples.rows(); ++b) {
    const Vec s = attribute_similarity(e, samples.row(b));
    std::copy(s.begin(), s.end(), out.row(b).begin());
  }
  return out;
}

// p = sigmoid(Aᵀ S)
inline Vec class_probabilities(const Mat& a, std::span<const double> s) {
  Vec p = mat_transpose_vec(a, s);
  for (double& v : p) v = sigmoid(v);
  return p;
}

inline double bce(double p, double y) {
  const double q = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
}

struct LossAndGrad {
  double loss = 0.0;
  Mat grad;
};

inline void check_binary_targets(const Mat& targets) {
  for (double y : targets.flat()) {
    if (y != 0.0 && y != 1.0) fail(Errc::data, "targets must be 0 or 1");
  }
}

// Mean BCE over samples and classes plus lambda_l1 * sum|A|.
// batch_s is B x N (one similarity vector per row), targets is B x C.
inline LossAndGrad upd_loss_and_grad(const Mat& a, const Mat& batch_s, const Mat& targets, double lambda_l1) {
  const std::size_t n = a.rows();
  const std::size_t c = a.cols();
  const std::size_t b = batch_s.rows();
  if (b == 0) fail(Errc::shape, "empty batch");
  if (batch_s.cols() != n) fail(Errc::shape, "similarity length differs from assignment rows");
  if (targets.rows() != b || targets.cols() != c) fail(Errc::shape, "targets shape differs from batch x classes");
  check_binary_targets(targets);

  LossAndGrad out{0.0, Mat(n, c)};
  Vec residual(c);
  double bce_sum = 0.0;
  for (std::size_t k = 0; k < b; ++k) {
    auto s = batch_s.row(k);
    const Vec p = class_probabilities(a, s);
    for (std::size_t j = 0; j < c; ++j) {
      const double y = targets(k, j);
      bce_sum += bce(p[j], y);
      residual[j] = p[j] - y;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double si = s[i];
      if (si == 0.0) continue;
      auto g = out.grad.row(i);
      for (std::size_t j = 0; j < c; ++j) g[j] += si * residual[j];
    }
  }
  const double scale = 1.0 / static_cast<double>(b * c);
  double l1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double v = a(i, j);
      l1 += std::abs(v);
      const double sign = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
      out.grad(i, j) = out.grad(i, j) * scale + lambda_l1 * sign;
    }
  }
  out.loss = bce_sum * scale + lambda_l1 * l1;
  return out;
}

struct FitResult {
  AssignmentMatrix assignment;
  std::vector<double> losses;  // loss before each step, then the final loss
};

// Builds the similarity batch and one-hot targets for a task's training split.
inline std::pair<Mat, Mat> training_batch(const Mat& e, const TaskDataset& ds, bool background_negatives) {
  const std::size_t c = ds.num_classes();
  const std::size_t extra = background_negatives ? ds.background_train.rows() : 0;
  const std::size_t b = ds.train_visual.rows() + extra;
  Mat batch_s(b, e.rows());
  Mat targets(b, c);
  for (std::size_t k = 0; k < ds.train_visual.rows(); ++k) {
    const Vec s = attribute_similarity(e, ds.train_visual.row(k));
    std::copy(s.begin(), s.end(), batch_s.row(k).begin());
    targets(k, ds.local_index(ds.train_labels[k])) = 1.0;
  }
  for (std::size_t k = 0; k < extra; ++k) {
    const Vec s = attribute_similarity(e, ds.background_train.row(k));
    std::copy(s.begin(), s.end(), batch_s.row(ds.train_visual.rows() + k).begin());
  }
  return {std::move(batch_s), std::move(targets)};
}

// Full-batch gradient descent on the assignment scores of the task's new
// classes. E is frozen, so similarities are computed once up front.
inline FitResult fit_assignment(const Mat& base_e, const TaskDataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (ds.train_visual.rows() == 0 || ds.num_classes() == 0) fail(Errc::data, "task has no training samples");

  Rng rng(cfg.seed);
  Mat a(base_e.rows(), ds.num_classes());
  for (double& v : a.flat()) v = rng.uniform(0.0, 1.0);

  const auto [batch_s, targets] = training_batch(base_e, ds, cfg.background_negatives);

  FitResult out;
  out.losses.reserve(cfg.epochs + 1);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const LossAndGrad lg = upd_loss_and_grad(a, batch_s, targets, cfg.lambda_l1);
    if (!std::isfinite(lg.loss)) fail(Errc::numeric, "assignment loss diverged");
    out.losses.push_back(lg.loss);
    auto g = lg.grad.flat();
    auto v = a.flat();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= cfg.learning_rate * g[i];
  }
  out.losses.push_back(upd_loss_and_grad(a, batch_s, targets, cfg.lambda_l1).loss);
  out.assignment = AssignmentMatrix{std::move(a), Stage::Real, ds.class_ids};
  return out;
}

}  // namespace sharedattr

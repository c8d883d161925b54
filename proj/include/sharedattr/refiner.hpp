#pragma once

#include <cmath>
#include <vector>

#include "sharedattr/adapter.hpp"
#include "sharedattr/assignment.hpp"
#include "sharedattr/attribute_filter.hpp"
#include "sharedattr/error.hpp"
#include "sharedattr/numerics.hpp"
#include "sharedattr/task_stream.hpp"

namespace sharedattr {

// d cos(u, v) / du = v / (|u||v|) - cos(u, v) * u / |u|^2
inline Vec cosine_grad_wrt_first(std::span<const double> u, std::span<const double> v) {
  const double nu = norm(u);
  const double nv = norm(v);
  if (!(nu > 0.0) || !(nv > 0.0)) fail(Errc::degenerate_vector, "cosine gradient at a zero-norm vector");
  const double c = dot(u, v) / (nu * nv);
  Vec g(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) g[k] = v[k] / (nu * nv) - c * u[k] / (nu * nu);
  return g;
}

// Mean BCE(sigmoid(Aᵀ cos(E_hat, e_v)), U) + lambda2 * MSE(E_hat[0..Q), E_prev),
// with the gradient wrt E_hat taken through the cosine. `samples` is B x D,
// `targets` is B x C.
inline LossAndGrad refine_loss_and_grad(const Mat& e_hat, const Mat& a_new, const Mat& samples, const Mat& targets,
                                        const Mat& e_prev, double lambda2) {
  const std::size_t r = e_hat.rows();
  const std::size_t dim = e_hat.cols();
  const std::size_t c = a_new.cols();
  const std::size_t b = samples.rows();
  if (a_new.rows() != r) fail(Errc::shape, "assignment rows differ from E_hat rows");
  if (samples.cols() != dim) fail(Errc::shape, "sample dimension differs from E_hat");
  if (targets.rows() != b || targets.cols() != c) fail(Errc::shape, "targets shape differs from samples x classes");
  if (b == 0) fail(Errc::shape, "empty batch");
  check_binary_targets(targets);

  std::vector<double> row_norm(r);
  for (std::size_t i = 0; i < r; ++i) {
    row_norm[i] = norm(e_hat.row(i));
    if (!(row_norm[i] > 0.0)) fail(Errc::degenerate_vector, "E_hat row " + std::to_string(i) + " has zero norm");
  }

  const double scale = 1.0 / static_cast<double>(b * c);
  LossAndGrad out{0.0, Mat(r, dim)};
  Vec s(r), dz(c);
  double bce_sum = 0.0;
  for (std::size_t k = 0; k < b; ++k) {
    auto v = samples.row(k);
    const double nv = norm(v);
    if (!(nv > 0.0)) fail(Errc::degenerate_vector, "sample has zero norm");
    for (std::size_t i = 0; i < r; ++i) s[i] = dot(e_hat.row(i), v) / (row_norm[i] * nv);
    const Vec p = class_probabilities(a_new, s);
    for (std::size_t j = 0; j < c; ++j) {
      bce_sum += bce(p[j], targets(k, j));
      dz[j] = (p[j] - targets(k, j)) * scale;
    }
    for (std::size_t i = 0; i < r; ++i) {
      double ds = 0.0;
      for (std::size_t j = 0; j < c; ++j) ds += a_new(i, j) * dz[j];
      if (ds == 0.0) continue;
      auto u = e_hat.row(i);
      auto g = out.grad.row(i);
      const double inv = 1.0 / (row_norm[i] * nv);
      const double self = s[i] / (row_norm[i] * row_norm[i]);
      for (std::size_t d = 0; d < dim; ++d) g[d] += ds * (v[d] * inv - self * u[d]);
    }
  }
  out.loss = bce_sum * scale;
  out.loss += add_consistency_term(e_hat, e_prev, lambda2, out.grad);
  return out;
}

struct RefineOptions {
  double lambda2 = 1.0;
  double learning_rate = 0.005;
  std::size_t epochs = 100;
};

// One-hot targets over the task's classes for every training row.
inline Mat one_hot_targets(const TaskDataset& ds) {
  Mat u(ds.train_visual.rows(), ds.num_classes());
  for (std::size_t k = 0; k < ds.train_labels.size(); ++k) u(k, ds.local_index(ds.train_labels[k])) = 1.0;
  return u;
}

// Descent on E_hat through the frozen new-class columns of A.
inline EmbeddingFit refine_attributes(TaskState state, const TaskDataset& ds, const Mat& e_prev,
                                      const RefineOptions& opt) {
  if (state.assignment.stage != Stage::Binary) fail(Errc::state, "refinement needs a binary assignment matrix");
  const Mat a_new = state.columns_of_task(state.task_index);
  const Mat targets = one_hot_targets(ds);
  EmbeddingFit out;
  out.losses.reserve(opt.epochs + 1);
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    const LossAndGrad lg = refine_loss_and_grad(state.e_hat, a_new, ds.train_visual, targets, e_prev, opt.lambda2);
    if (!std::isfinite(lg.loss)) fail(Errc::numeric, "refinement loss diverged");
    out.losses.push_back(lg.loss);
    auto e = state.e_hat.flat();
    auto g = lg.grad.flat();
    for (std::size_t k = 0; k < e.size(); ++k) e[k] -= opt.learning_rate * g[k];
  }
  out.losses.push_back(refine_loss_and_grad(state.e_hat, a_new, ds.train_visual, targets, e_prev, opt.lambda2).loss);
  out.state = std::move(state);
  return out;
}

}  // namespace sharedattr

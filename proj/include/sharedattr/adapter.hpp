#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "sharedattr/assignment.hpp"
#include "sharedattr/attribute_filter.hpp"
#include "sharedattr/error.hpp"
#include "sharedattr/numerics.hpp"
#include "sharedattr/task_stream.hpp"

namespace sharedattr {

// Per-class visual means, one row per new class in task order.
struct ClassMeans {
  Mat means;
  std::size_t m = 0;
};

inline ClassMeans class_visual_means(const TaskDataset& ds, std::size_t m) {
  if (m == 0) fail(Errc::config, "M must be positive");
  const std::size_t dim = ds.train_visual.cols();
  ClassMeans out{Mat(ds.num_classes(), dim), m};
  std::vector<std::size_t> used(ds.num_classes(), 0);
  for (std::size_t r = 0; r < ds.train_visual.rows(); ++r) {
    const std::size_t c = ds.local_index(ds.train_labels[r]);
    if (used[c] == m) continue;
    ++used[c];
    auto dst = out.means.row(c);
    auto src = ds.train_visual.row(r);
    for (std::size_t d = 0; d < dim; ++d) dst[d] += src[d];
  }
  for (std::size_t c = 0; c < ds.num_classes(); ++c) {
    if (used[c] == 0) fail(Errc::data, "class " + std::to_string(ds.class_ids[c]) + " has no training samples");
    for (double& v : out.means.row(c)) v /= static_cast<double>(used[c]);
  }
  return out;
}

// lambda * MSE(E_hat[0..Q), E_prev), accumulated into `grad`. Q = 0 adds nothing.
inline double add_consistency_term(const Mat& e_hat, const Mat& e_prev, double lambda, Mat& grad) {
  const std::size_t q = e_prev.rows();
  if (q == 0) return 0.0;
  if (q > e_hat.rows() || e_prev.cols() != e_hat.cols()) fail(Errc::shape, "previous embeddings do not fit E_hat");
  const std::size_t dim = e_hat.cols();
  const double scale = 1.0 / static_cast<double>(q * dim);
  double sum = 0.0;
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = e_hat(i, d) - e_prev(i, d);
      sum += diff * diff;
      grad(i, d) += 2.0 * lambda * scale * diff;
    }
  }
  return lambda * sum * scale;
}

struct AdaptOptions {
  double lambda1 = 1.0;
  double learning_rate = 0.5;
  std::size_t epochs = 1000;
  std::size_t m = 100;
  // Divide each class's attribute sum by its number of selected attributes.
  bool row_mean = false;
};

// MSE(means, Aᵀ E_hat) + lambda1 * MSE(E_hat[0..Q), E_prev) and its gradient wrt E_hat.
inline LossAndGrad adapt_loss_and_grad(const Mat& e_hat, const Mat& a_new, const Mat& means, const Mat& e_prev,
                                       double lambda1, bool row_mean = false) {
  const std::size_t r = e_hat.rows();
  const std::size_t dim = e_hat.cols();
  const std::size_t c = a_new.cols();
  if (a_new.rows() != r) fail(Errc::shape, "assignment rows differ from E_hat rows");
  if (means.rows() != c || means.cols() != dim) fail(Errc::shape, "class means shape differs from C x D");
  if (e_prev.rows() > r) fail(Errc::shape, "Q exceeds the number of active attributes");

  std::vector<double> col_scale(c, 1.0);
  if (row_mean) {
    for (std::size_t j = 0; j < c; ++j) {
      double count = 0.0;
      for (std::size_t i = 0; i < r; ++i) count += a_new(i, j);
      col_scale[j] = count > 0.0 ? 1.0 / count : 0.0;
    }
  }

  // residual = scale * Aᵀ E_hat - means
  Mat residual(c, dim);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double w = a_new(i, j) * col_scale[j];
      if (w == 0.0) continue;
      for (std::size_t d = 0; d < dim; ++d) residual(j, d) += w * e_hat(i, d);
    }
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    for (std::size_t d = 0; d < dim; ++d) {
      residual(j, d) -= means(j, d);
      sum += residual(j, d) * residual(j, d);
    }
  }
  const double scale = 1.0 / static_cast<double>(c * dim);
  LossAndGrad out{sum * scale, Mat(r, dim)};
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double w = a_new(i, j) * col_scale[j];
      if (w == 0.0) continue;
      for (std::size_t d = 0; d < dim; ++d) out.grad(i, d) += 2.0 * scale * w * residual(j, d);
    }
  }
  out.loss += add_consistency_term(e_hat, e_prev, lambda1, out.grad);
  return out;
}

// Upper bound on the gradient's Lipschitz constant for the exact-sum variant:
// 2 (|A|_1 |A|_inf / (C D) + lambda1 / (Q D)).
inline double adapt_lipschitz_bound(const Mat& a_new, std::size_t q, std::size_t dim, double lambda1) {
  double max_col = 0.0, max_row = 0.0;
  for (std::size_t j = 0; j < a_new.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < a_new.rows(); ++i) s += std::abs(a_new(i, j));
    max_col = std::max(max_col, s);
  }
  for (std::size_t i = 0; i < a_new.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a_new.cols(); ++j) s += std::abs(a_new(i, j));
    max_row = std::max(max_row, s);
  }
  const double d = static_cast<double>(dim);
  double bound = max_col * max_row / (static_cast<double>(std::max<std::size_t>(a_new.cols(), 1)) * d);
  if (q > 0) bound += lambda1 / (static_cast<double>(q) * d);
  return 2.0 * bound;
}

struct EmbeddingFit {
  TaskState state;
  std::vector<double> losses;  // loss before each step, then the final loss
};

// Gradient descent on E_hat only; the assignment matrix is untouched.
inline EmbeddingFit adapt_attributes(TaskState state, const ClassMeans& means, const Mat& e_prev,
                                     const AdaptOptions& opt) {
  if (state.assignment.stage != Stage::Binary) fail(Errc::state, "adaptation needs a binary assignment matrix");
  const Mat a_new = state.columns_of_task(state.task_index);
  EmbeddingFit out;
  out.losses.reserve(opt.epochs + 1);
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    const LossAndGrad lg = adapt_loss_and_grad(state.e_hat, a_new, means.means, e_prev, opt.lambda1, opt.row_mean);
    if (!std::isfinite(lg.loss)) fail(Errc::numeric, "adaptation loss diverged");
    out.losses.push_back(lg.loss);
    auto e = state.e_hat.flat();
    auto g = lg.grad.flat();
    for (std::size_t k = 0; k < e.size(); ++k) e[k] -= opt.learning_rate * g[k];
  }
  out.losses.push_back(adapt_loss_and_grad(state.e_hat, a_new, means.means, e_prev, opt.lambda1, opt.row_mean).loss);
  out.state = std::move(state);
  return out;
}

}  // namespace sharedattr

#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <vector>

#include <json.hpp>

#include "sharedattr/assignment.hpp"
#include "sharedattr/attribute_base.hpp"
#include "sharedattr/error.hpp"
#include "sharedattr/numerics.hpp"
#include "sharedattr/task_stream.hpp"

namespace sharedattr {

// Base indices of the active attributes, in activation order.
struct AttributeIndexMap {
  std::vector<std::size_t> ids;
  std::vector<int> added_at;

  std::size_t size() const noexcept { return ids.size(); }

  std::optional<std::size_t> position_of(std::size_t base_index) const {
    auto it = std::find(ids.begin(), ids.end(), base_index);
    if (it == ids.end()) return std::nullopt;
    return static_cast<std::size_t>(it - ids.begin());
  }

  friend bool operator==(const AttributeIndexMap&, const AttributeIndexMap&) = default;
};

// Everything inference needs after task `task_index`.
struct TaskState {
  int task_index = 0;
  AttributeIndexMap index_map;
  AssignmentMatrix assignment;  // binary, |id_t| x C^{1:t}
  Mat e_hat;                    // |id_t| x D
  ClassRegistry registry;
  nlohmann::json hyperparams = nlohmann::json::object();

  std::size_t num_classes() const { return registry.size(); }

  // Columns of A belonging to classes introduced at `task_index`.
  Mat columns_of_task(int task) const {
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < registry.size(); ++j) {
      if (registry.at(j).task_index == task) cols.push_back(j);
    }
    Mat out(assignment.values.rows(), cols.size());
    for (std::size_t i = 0; i < out.rows(); ++i) {
      for (std::size_t k = 0; k < cols.size(); ++k) out(i, k) = assignment.values(i, cols[k]);
    }
    return out;
  }
};

// Global top-k over the flattened (row-major) matrix with k = C * H_a.
// Ties go to the smaller flat index.
inline Mat binarize_topk(const Mat& a, std::size_t h_a) {
  if (h_a == 0) fail(Errc::config, "H_a must be positive");
  if (h_a > a.rows()) fail(Errc::config, "H_a exceeds the number of attributes");
  const std::size_t k = a.cols() * h_a;
  auto v = a.flat();
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  auto before = [&](std::size_t x, std::size_t y) { return v[x] > v[y] || (v[x] == v[y] && x < y); };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);
  Mat out(a.rows(), a.cols());
  for (std::size_t i = 0; i < k; ++i) out.flat()[order[i]] = 1.0;
  return out;
}

// Per-column variant: the H_a largest rows of each column, ties to the smaller row.
inline Mat binarize_topk_per_class(const Mat& a, std::size_t h_a) {
  if (h_a == 0) fail(Errc::config, "H_a must be positive");
  if (h_a > a.rows()) fail(Errc::config, "H_a exceeds the number of attributes");
  Mat out(a.rows(), a.cols());
  std::vector<std::size_t> order(a.rows());
  for (std::size_t j = 0; j < a.cols(); ++j) {
    std::iota(order.begin(), order.end(), 0);
    auto before = [&](std::size_t x, std::size_t y) {
      return a(x, j) > a(y, j) || (a(x, j) == a(y, j) && x < y);
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(h_a), order.end(), before);
    for (std::size_t i = 0; i < h_a; ++i) out(order[i], j) = 1.0;
  }
  return out;
}

inline void check_state_consistency(const TaskState& s) {
  const auto& a = s.assignment.values;
  if (a.rows() != s.index_map.size() || s.e_hat.rows() != s.index_map.size() ||
      s.index_map.added_at.size() != s.index_map.size()) {
    fail(Errc::state, "task state rows disagree between index map, assignment and embeddings");
  }
  if (a.cols() != s.registry.size() || s.assignment.column_class_ids.size() != s.registry.size()) {
    fail(Errc::state, "task state columns disagree with the class registry");
  }
  for (std::size_t j = 0; j < s.registry.size(); ++j) {
    if (s.assignment.column_class_ids[j] != s.registry.at(j).id) fail(Errc::state, "column order differs from registry");
  }
}

// Merges the binarized full-base selection for a new task into the previous
// state. Old columns are carried over unchanged; new base rows are appended
// in ascending base-index order; rows with no 1 anywhere are dropped.
inline TaskState merge_assignment(const TaskState* prev, const Mat& a_bin_fullbase, const AttributeBase& base,
                                  const TaskDataset& ds) {
  if (a_bin_fullbase.rows() != base.size()) fail(Errc::shape, "selection must cover the full attribute base");
  if (a_bin_fullbase.cols() != ds.num_classes()) fail(Errc::shape, "selection columns differ from the task's classes");
  for (double v : a_bin_fullbase.flat()) {
    if (v != 0.0 && v != 1.0) fail(Errc::data, "selection matrix must be binary");
  }

  TaskState next;
  next.task_index = ds.task_index;
  std::size_t old_cols = 0;
  std::size_t q = 0;
  if (prev) {
    check_state_consistency(*prev);
    if (ds.task_index <= prev->task_index) fail(Errc::state, "task index must increase");
    if (prev->e_hat.cols() != base.dim()) fail(Errc::state, "previous embeddings have a different dimension");
    next.registry = prev->registry;
    next.index_map = prev->index_map;
    next.hyperparams = prev->hyperparams;
    old_cols = prev->registry.size();
    q = prev->index_map.size();
  }
  for (std::size_t k = 0; k < ds.num_classes(); ++k) {
    if (next.registry.contains(ds.class_ids[k])) {
      fail(Errc::state, "class " + std::to_string(ds.class_ids[k]) + " is already in the previous registry");
    }
    next.registry.add(ds.class_ids[k], ds.task_index, ds.class_names.at(k));
  }

  for (std::size_t r = 0; r < a_bin_fullbase.rows(); ++r) {
    auto row = a_bin_fullbase.row(r);
    const bool selected = std::any_of(row.begin(), row.end(), [](double v) { return v != 0.0; });
    if (selected && !next.index_map.position_of(r)) {
      next.index_map.ids.push_back(r);
      next.index_map.added_at.push_back(ds.task_index);
    }
  }

  const std::size_t total_cols = old_cols + ds.num_classes();
  Mat merged(next.index_map.size(), total_cols);
  Mat e_hat(next.index_map.size(), base.dim());
  for (std::size_t pos = 0; pos < next.index_map.size(); ++pos) {
    const std::size_t base_row = next.index_map.ids[pos];
    if (pos < q) {
      for (std::size_t j = 0; j < old_cols; ++j) merged(pos, j) = prev->assignment.values(pos, j);
      std::copy(prev->e_hat.row(pos).begin(), prev->e_hat.row(pos).end(), e_hat.row(pos).begin());
    } else {
      std::copy(base.embedding(base_row).begin(), base.embedding(base_row).end(), e_hat.row(pos).begin());
    }
    for (std::size_t k = 0; k < ds.num_classes(); ++k) merged(pos, old_cols + k) = a_bin_fullbase(base_row, k);
  }

  // Drop rows that carry no 1 in any column.
  std::vector<std::size_t> keep;
  for (std::size_t pos = 0; pos < merged.rows(); ++pos) {
    auto row = merged.row(pos);
    if (std::any_of(row.begin(), row.end(), [](double v) { return v != 0.0; })) keep.push_back(pos);
  }
  if (keep.size() != merged.rows()) {
    AttributeIndexMap pruned;
    Mat a_kept(keep.size(), total_cols);
    Mat e_kept(keep.size(), base.dim());
    for (std::size_t n = 0; n < keep.size(); ++n) {
      pruned.ids.push_back(next.index_map.ids[keep[n]]);
      pruned.added_at.push_back(next.index_map.added_at[keep[n]]);
      std::copy(merged.row(keep[n]).begin(), merged.row(keep[n]).end(), a_kept.row(n).begin());
      std::copy(e_hat.row(keep[n]).begin(), e_hat.row(keep[n]).end(), e_kept.row(n).begin());
    }
    next.index_map = std::move(pruned);
    merged = std::move(a_kept);
    e_hat = std::move(e_kept);
  }

  std::vector<ClassId> column_ids;
  for (const auto& e : next.registry.entries()) column_ids.push_back(e.id);
  next.assignment = AssignmentMatrix{std::move(merged), Stage::Binary, std::move(column_ids)};
  next.e_hat = std::move(e_hat);
  return next;
}

struct SharingStats {
  std::size_t active_total = 0;
  std::size_t reused_from_prev = 0;
  std::size_t newly_added = 0;
};

inline SharingStats sharing_stats(const TaskState* prev, const TaskState& current) {
  const std::size_t q = prev ? prev->index_map.size() : 0;
  const std::size_t old_cols = prev ? prev->registry.size() : 0;
  SharingStats s;
  s.active_total = current.index_map.size();
  s.newly_added = current.index_map.size() - std::min(q, current.index_map.size());
  const auto& a = current.assignment.values;
  for (std::size_t pos = 0; pos < std::min(q, a.rows()); ++pos) {
    bool used = false;
    for (std::size_t j = old_cols; j < a.cols(); ++j) used = used || a(pos, j) != 0.0;
    s.reused_from_prev += used ? 1 : 0;
  }
  return s;
}

}  // namespace sharedattr

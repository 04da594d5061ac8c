#pragma once

// Class-conditioned HSIC estimate of the dependence between speech samples and
// a scalar pseudo-label, given the downstream class.
//
// For each class c with n_c members:
//   K_c[i][j] = cosine(GD(x_i), GD(x_j))      (Frobenius inner product)
//   L_c[i][j] = exp(-(z_i - z_j)^2 / (2 sigma^2))
//   HSIC_c    = trace(K_c H L_c H) / n_c^2,   H = I - 11^T / n_c
// and the aggregate is sum_c HSIC_c * n_c / M.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ci_select/corpus.hpp"
#include "ci_select/embed.hpp"
#include "ci_select/error.hpp"
#include "ci_select/parallel.hpp"

namespace ci_select {

inline constexpr double kHsicNegativeTolerance = 1e-12;

struct ClassGroup {
  std::string class_label;
  std::vector<std::string> member_ids;
  std::vector<std::size_t> member_indices;  // positions in the input sequence

  std::size_t size() const { return member_indices.size(); }
};

struct GroupingOptions {
  std::size_t max_per_class = 0;  // 0: no cap
  std::size_t max_classes = 0;    // 0: no cap; otherwise the first K labels in sorted order
  std::uint64_t shuffle_seed = 0;
};

struct KernelMatrixPair {
  Eigen::MatrixXd samples;  // K
  Eigen::MatrixXd labels;   // L
};

struct CIScore {
  std::map<std::string, double> per_class;
  std::map<std::string, std::size_t> class_sizes;
  double aggregate = 0.0;
  std::size_t total_m = 0;
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

// Fisher-Yates with an explicit engine so the permutation does not depend on
// the standard library's shuffle implementation.
template <typename T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace detail

// Partitions sample positions by label. Groups come out sorted by label and
// members keep input order. Caps are applied after grouping: classes beyond
// `max_classes` (sorted order) are dropped, and larger classes keep a seeded
// random subset of `max_per_class` members, still in input order.
inline std::vector<ClassGroup> group_indices(std::span<const std::string> labels,
                                             std::span<const std::string> ids,
                                             const GroupingOptions& opts = {}) {
  if (ids.size() != labels.size()) throw DataError("ids and labels differ in length");
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(i);

  std::vector<ClassGroup> groups;
  for (auto& [label, members] : by_label) {
    if (opts.max_classes > 0 && groups.size() == opts.max_classes) break;
    if (opts.max_per_class > 0 && members.size() > opts.max_per_class) {
      detail::seeded_shuffle(members, opts.shuffle_seed ^ detail::fnv1a(label));
      members.resize(opts.max_per_class);
      std::sort(members.begin(), members.end());
    }
    ClassGroup g;
    g.class_label = label;
    g.member_indices = std::move(members);
    for (std::size_t i : g.member_indices) g.member_ids.push_back(ids[i]);
    groups.push_back(std::move(g));
  }
  return groups;
}

// Manifest-level grouping. Every record must have both an embedding and a
// pseudo-label value.
inline std::vector<ClassGroup> group_by_class(
    std::span<const UtteranceRecord> records, const std::unordered_map<std::string, double>& values,
    const std::unordered_map<std::string, FixedEmbedding>& embeddings, const GroupingOptions& opts = {}) {
  std::vector<std::string> labels, ids;
  labels.reserve(records.size());
  ids.reserve(records.size());
  for (const auto& r : records) {
    if (!embeddings.contains(r.utterance_id)) throw DataError("no embedding for utterance '" + r.utterance_id + "'");
    if (!values.contains(r.utterance_id)) throw DataError("no pseudo-label value for utterance '" + r.utterance_id + "'");
    labels.push_back(r.class_label);
    ids.push_back(r.utterance_id);
  }
  return group_indices(labels, ids, opts);
}

// z-scores with the population standard deviation. A constant input maps to
// all zeros.
inline std::vector<double> standardize_values(std::span<const double> values) {
  if (values.size() < 2) throw DataError("standardization needs at least 2 values");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  std::vector<double> out(values.size(), 0.0);
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); })) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  if (!(sd > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mean) / sd;
  return out;
}

// Rows of the result are the unit-Frobenius-norm flattenings of each embedding.
inline Eigen::MatrixXd normalized_rows(std::span<const FixedEmbedding> embeddings) {
  if (embeddings.empty()) return {};
  const Eigen::Index rows = embeddings.front().matrix.rows();
  const Eigen::Index cols = embeddings.front().matrix.cols();
  Eigen::MatrixXd flat(static_cast<Eigen::Index>(embeddings.size()), rows * cols);
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    const auto& m = embeddings[i].matrix;
    if (m.rows() != rows || m.cols() != cols) {
      throw DataError("embedding '" + embeddings[i].source_id + "' is " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    const double norm = m.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw DataError("embedding '" + embeddings[i].source_id + "' has zero or non-finite norm");
    }
    flat.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(m.data(), m.size()) / norm;
  }
  return flat;
}

// Gram matrix of unit rows: exactly symmetric, unit diagonal, entries in [-1, 1].
inline Eigen::MatrixXd gram_of_unit_rows(const Eigen::MatrixXd& unit_rows) {
  const Eigen::Index n = unit_rows.rows();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  k.selfadjointView<Eigen::Lower>().rankUpdate(unit_rows);
  for (Eigen::Index j = 0; j < n; ++j) {
    k(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      k(i, j) = std::clamp(k(i, j), -1.0, 1.0);
      k(j, i) = k(i, j);
    }
  }
  return k;
}

// K_ij = <x_i, x_j>_F / (|x_i|_F |x_j|_F).
inline Eigen::MatrixXd cosine_kernel(std::span<const FixedEmbedding> embeddings) {
  return gram_of_unit_rows(normalized_rows(embeddings));
}

// L_ij = exp(-(z_i - z_j)^2 / (2 sigma^2)).
inline Eigen::MatrixXd rbf_kernel(std::span<const double> values, double sigma = 0.05) {
  if (!(sigma > 0.0)) throw UsageError("rbf_sigma must be > 0");
  const auto n = static_cast<Eigen::Index>(values.size());
  Eigen::MatrixXd l(n, n);
  const double scale = 1.0 / (2.0 * sigma * sigma);
  for (Eigen::Index j = 0; j < n; ++j) {
    l(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double d = values[static_cast<std::size_t>(i)] - values[static_cast<std::size_t>(j)];
      l(i, j) = std::exp(-d * d * scale);
      l(j, i) = l(i, j);
    }
  }
  return l;
}

// H M H for square M.
inline Eigen::MatrixXd double_center(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  const Eigen::VectorXd row_mean = m.rowwise().sum() / static_cast<double>(n);
  const Eigen::RowVectorXd col_mean = m.colwise().sum() / static_cast<double>(n);
  const double grand = m.sum() / static_cast<double>(n * n);
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) c(i, j) = m(i, j) - row_mean(i) - col_mean(j) + grand;
  }
  return c;
}

// trace(K H L H) / n^2, evaluated as sum_ij K_ij (HLH)_ji. Centering the label
// kernel makes a constant L yield exactly 0.
inline double hsic_class(const Eigen::MatrixXd& k, const Eigen::MatrixXd& l) {
  if (k.rows() != k.cols() || l.rows() != l.cols() || k.rows() != l.rows()) {
    throw DataError("kernel matrices must be square and of equal size (K " + std::to_string(k.rows()) + "x" +
                    std::to_string(k.cols()) + ", L " + std::to_string(l.rows()) + "x" +
                    std::to_string(l.cols()) + ")");
  }
  const Eigen::Index n = k.rows();
  if (n <= 1) return 0.0;
  const Eigen::MatrixXd lc = double_center(l);
  const double trace = k.cwiseProduct(lc.transpose()).sum();
  return trace / static_cast<double>(n * n);
}

inline void check_hsic_nonnegative(double value, std::string_view label) {
  if (value < -kHsicNegativeTolerance) {
    throw InvariantError("HSIC for class '" + std::string(label) + "' is negative (" + std::to_string(value) + ")");
  }
}

// Weighted mean of per-class HSIC values by class size. Summation runs in
// label order regardless of input order.
inline CIScore aggregate_ci(std::span<const std::pair<ClassGroup, double>> per_class) {
  if (per_class.empty()) throw DataError("CI estimate needs at least one class");
  CIScore score;
  for (const auto& [group, value] : per_class) {
    if (group.size() == 0) throw DataError("class '" + group.class_label + "' is empty");
    if (!score.per_class.emplace(group.class_label, value).second) {
      throw DataError("class '" + group.class_label + "' appears twice");
    }
    score.class_sizes.emplace(group.class_label, group.size());
    score.total_m += group.size();
  }
  double sum = 0.0;
  for (const auto& [label, value] : score.per_class) {
    sum += value * static_cast<double>(score.class_sizes.at(label));
  }
  score.aggregate = sum / static_cast<double>(score.total_m);
  return score;
}

struct ClassKernels {
  ClassGroup group;
  KernelMatrixPair kernels;
};

inline CIScore ci_estimate(std::span<const ClassKernels> groups) {
  std::vector<std::pair<ClassGroup, double>> per_class(groups.size());
  parallel_for(groups.size(), [&](std::size_t i) {
    const auto& g = groups[i];
    if (static_cast<std::size_t>(g.kernels.samples.rows()) != g.group.size()) {
      throw DataError("class '" + g.group.class_label + "': kernel size does not match member count");
    }
    const double h = hsic_class(g.kernels.samples, g.kernels.labels);
    check_hsic_nonnegative(h, g.group.class_label);
    per_class[i] = {g.group, h};
  });
  return aggregate_ci(per_class);
}

struct HsicConfig {
  double rbf_sigma = 0.05;
  bool standardize = true;
  GroupingOptions grouping;
};

// Full estimator over one evaluation set: grouping, optional global
// standardization of the retained values, per-class kernels and aggregation.
// Kernels are built class by class inside the worker so only one pair per
// worker is alive at a time.
inline CIScore estimate_ci(std::span<const FixedEmbedding> embeddings, std::span<const double> values,
                           std::span<const std::string> labels, std::span<const std::string> ids,
                           const HsicConfig& cfg = {}) {
  if (embeddings.size() != values.size() || values.size() != labels.size()) {
    throw DataError("embeddings, values and labels differ in length");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw DataError("non-finite pseudo-label value for '" + ids[i] + "'");
  }
  const auto groups = group_indices(labels, ids, cfg.grouping);
  if (groups.empty()) throw DataError("CI estimate needs at least one class");

  std::vector<std::size_t> kept;
  for (const auto& g : groups) kept.insert(kept.end(), g.member_indices.begin(), g.member_indices.end());
  std::sort(kept.begin(), kept.end());

  std::vector<double> z(values.begin(), values.end());
  if (cfg.standardize) {
    std::vector<double> subset;
    subset.reserve(kept.size());
    for (std::size_t i : kept) subset.push_back(values[i]);
    const auto standardized = standardize_values(subset);
    for (std::size_t j = 0; j < kept.size(); ++j) z[kept[j]] = standardized[j];
  }

  std::vector<FixedEmbedding> kept_embeddings;
  kept_embeddings.reserve(kept.size());
  for (std::size_t i : kept) kept_embeddings.push_back(embeddings[i]);
  const Eigen::MatrixXd unit = normalized_rows(kept_embeddings);
  std::vector<Eigen::Index> row_of(embeddings.size(), -1);
  for (std::size_t j = 0; j < kept.size(); ++j) row_of[kept[j]] = static_cast<Eigen::Index>(j);

  std::vector<std::pair<ClassGroup, double>> per_class(groups.size());
  parallel_for(groups.size(), [&](std::size_t gi) {
    const auto& g = groups[gi];
    const auto n = static_cast<Eigen::Index>(g.size());
    Eigen::MatrixXd rows(n, unit.cols());
    std::vector<double> zc(g.size());
    for (Eigen::Index r = 0; r < n; ++r) {
      const std::size_t idx = g.member_indices[static_cast<std::size_t>(r)];
      rows.row(r) = unit.row(row_of[idx]);
      zc[static_cast<std::size_t>(r)] = z[idx];
    }
    const double h = hsic_class(gram_of_unit_rows(rows), rbf_kernel(zc, cfg.rbf_sigma));
    check_hsic_nonnegative(h, g.class_label);
    per_class[gi] = {g, h};
  });
  return aggregate_ci(per_class);
}

}  // namespace ci_select

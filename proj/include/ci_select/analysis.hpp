#pragma once

// Ranking of pseudo-labels by CI estimate, rank correlation against observed
// downstream error rates, best/worst selection, and a synthetic data generator
// with known conditional (in)dependence.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ci_select/embed.hpp"
#include "ci_select/error.hpp"

namespace ci_select {

struct RankedEntry {
  std::string name;
  double ci = 0.0;
  double rank = 0.0;
  std::map<std::string, double> per_class;
};

// 1-based ranks; tied values share the mean of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

// Ascending by score, ties broken by name; tied scores share average ranks.
inline std::vector<RankedEntry> rank_entries(std::vector<RankedEntry> entries) {
  if (entries.empty()) throw DataError("nothing to rank");
  for (const auto& e : entries) {
    if (!std::isfinite(e.ci)) throw DataError("non-finite score for '" + e.name + "'");
  }
  std::sort(entries.begin(), entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    return a.ci != b.ci ? a.ci < b.ci : a.name < b.name;
  });
  std::vector<double> scores;
  for (const auto& e : entries) scores.push_back(e.ci);
  const auto ranks = average_ranks(scores);
  for (std::size_t i = 0; i < entries.size(); ++i) entries[i].rank = ranks[i];
  return entries;
}

inline std::vector<RankedEntry> rank_entries(const std::map<std::string, double>& scores) {
  std::vector<RankedEntry> entries;
  for (const auto& [name, ci] : scores) entries.push_back({name, ci, 0.0, {}});
  return rank_entries(std::move(entries));
}

namespace detail {

inline void check_pair(std::span<const double> x, std::span<const double> y, const char* what) {
  if (x.size() != y.size()) {
    throw DataError(std::string(what) + ": length mismatch (" + std::to_string(x.size()) + " vs " +
                    std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) throw DataError(std::string(what) + ": needs at least 2 pairs");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw DataError(std::string(what) + ": non-finite input");
  }
}

}  // namespace detail

// Pearson correlation of average ranks.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  detail::check_pair(x, y, "spearman");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;  // mean of average ranks is always (n+1)/2
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mean, dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("spearman: constant input has zero rank variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Kendall tau-b: (C - D) / sqrt((n0 - n1)(n0 - n2)).
inline double kendall_tau(std::span<const double> x, std::span<const double> y) {
  detail::check_pair(x, y, "kendall_tau");
  const std::size_t n = x.size();
  long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const int sx = (x[i] > x[j]) - (x[i] < x[j]);
      const int sy = (y[i] > y[j]) - (y[i] < y[j]);
      if (sx == 0) ++ties_x;
      if (sy == 0) ++ties_y;
      if (sx * sy > 0) ++concordant;
      if (sx * sy < 0) ++discordant;
    }
  }
  const double n0 = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  const double denom = std::sqrt((n0 - static_cast<double>(ties_x)) * (n0 - static_cast<double>(ties_y)));
  if (denom == 0.0) throw DataError("kendall_tau: an input is entirely tied");
  return std::clamp(static_cast<double>(concordant - discordant) / denom, -1.0, 1.0);
}

struct CorrelationResult {
  double spearman_rho = 0.0;
  double kendall_tau = 0.0;
  std::size_t n = 0;
};

inline CorrelationResult correlate(std::span<const double> ci, std::span<const double> error) {
  return {spearman(ci, error), kendall_tau(ci, error), ci.size()};
}

struct Selection {
  std::vector<std::string> best;
  std::vector<std::string> worst;
};

// The k_best lowest-CI and k_worst highest-CI names, each listed by ascending CI.
inline Selection select_groups(const std::vector<RankedEntry>& entries, std::size_t k_best, std::size_t k_worst) {
  if (k_best + k_worst > entries.size()) {
    throw UsageError("k_best + k_worst (" + std::to_string(k_best + k_worst) + ") exceeds the " +
                     std::to_string(entries.size()) + " ranked entries");
  }
  const auto sorted = rank_entries(entries);
  Selection s;
  for (std::size_t i = 0; i < k_best; ++i) s.best.push_back(sorted[i].name);
  for (std::size_t i = sorted.size() - k_worst; i < sorted.size(); ++i) s.worst.push_back(sorted[i].name);
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic benchmark data

enum class SynthMode { kDependent, kIndependent };

struct SynthOptions {
  int n_parts = 4;
  int dim = 8;
  double centroid_scale = 1.0;
  double feature_noise = 1.0;
  double label_noise = 0.01;  // independent mode only
};

struct SynthDataset {
  std::vector<FixedEmbedding> embeddings;
  std::vector<double> values;
  std::vector<std::string> labels;
  std::vector<std::string> ids;
};

// Each sample is its class centroid plus isotropic Gaussian noise. In
// independent mode the pseudo-label is a function of the class plus small
// noise, so it carries no information about the sample beyond its class. In
// dependent mode it is a fixed linear functional of the sample's own noise,
// ignoring the class.
inline SynthDataset synth_generate(SynthMode mode, int n_classes, int n_per_class, std::uint64_t seed,
                                   const SynthOptions& opts = {}) {
  if (n_classes < 2) throw UsageError("synthetic data needs at least 2 classes");
  if (n_per_class < 5) throw UsageError("synthetic data needs at least 5 samples per class");
  if (opts.n_parts < 1 || opts.dim < 1) throw UsageError("synthetic embeddings need n_parts, dim >= 1");
  if (!(opts.centroid_scale > 0.0) || !(opts.feature_noise >= 0.0) || !(opts.label_noise >= 0.0)) {
    throw UsageError("synthetic scales must be non-negative (centroid_scale positive)");
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto random_matrix = [&](double scale) {
    Eigen::MatrixXd m(opts.n_parts, opts.dim);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = scale * gauss(rng);
    return m;
  };

  std::vector<Eigen::MatrixXd> centroids;
  std::vector<double> class_value;
  for (int c = 0; c < n_classes; ++c) {
    centroids.push_back(random_matrix(opts.centroid_scale));
    class_value.push_back(static_cast<double>(c));
  }
  Eigen::MatrixXd direction = random_matrix(1.0);
  direction /= direction.norm();

  SynthDataset out;
  const int width = static_cast<int>(std::to_string(n_classes * n_per_class).size());
  for (int c = 0; c < n_classes; ++c) {
    for (int k = 0; k < n_per_class; ++k) {
      const Eigen::MatrixXd noise = random_matrix(opts.feature_noise);
      const double eps = gauss(rng);
      const std::size_t idx = out.ids.size();
      std::string id = std::to_string(idx);
      id.insert(0, static_cast<std::size_t>(width) - id.size(), '0');
      out.ids.push_back("s" + id);
      out.labels.push_back("class" + std::to_string(c));
      out.embeddings.push_back({centroids[static_cast<std::size_t>(c)] + noise, out.ids.back()});
      if (mode == SynthMode::kIndependent) {
        out.values.push_back(class_value[static_cast<std::size_t>(c)] + opts.label_noise * eps);
      } else {
        out.values.push_back(noise.cwiseProduct(direction).sum());
      }
    }
  }
  return out;
}

}  // namespace ci_select

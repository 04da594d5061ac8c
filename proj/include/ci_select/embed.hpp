#pragma once

// Training-free Gaussian downsampling of an L x D sequence to N x D.

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "ci_select/corpus.hpp"
#include "ci_select/error.hpp"

namespace ci_select {

struct EmbedConfig {
  int n_parts = 20;
  double sigma_gd = 0.07;  // fraction of the sequence length
};

struct FixedEmbedding {
  Eigen::MatrixXd matrix;  // N x D
  std::string source_id;

  Eigen::Index n_parts() const { return matrix.rows(); }
};

// Center of part k in frame coordinates: midpoint of the k-th of N equal
// partitions of [0, L), shifted so frame i sits at coordinate i.
inline double part_center(int k, int n_parts, Eigen::Index length) {
  return (k + 0.5) * static_cast<double>(length) / n_parts - 0.5;
}

// Normalized Gaussian weights of every frame for part k. Support is the whole
// sequence; the width is sigma_gd * L frames.
inline Eigen::VectorXd part_weights(int k, int n_parts, Eigen::Index length, double sigma_gd) {
  const double c = part_center(k, n_parts, length);
  const double sigma = sigma_gd * static_cast<double>(length);
  Eigen::VectorXd w(length);
  for (Eigen::Index i = 0; i < length; ++i) {
    const double d = static_cast<double>(i) - c;
    w(i) = std::exp(-(d * d) / (2.0 * sigma * sigma));
  }
  // Weights can only all underflow far from every frame, which the center
  // convention rules out; the nearest frame is within 0.5 of c.
  w /= w.sum();
  return w;
}

inline FixedEmbedding gaussian_downsample(const FeatureSequence& seq, const EmbedConfig& cfg = {}) {
  if (seq.length() < 1 || seq.dim() < 1) {
    throw DataError("cannot downsample an empty sequence" +
                    (seq.source_id.empty() ? std::string() : " (" + seq.source_id + ")"));
  }
  if (cfg.n_parts < 1) throw UsageError("n_parts must be >= 1");
  if (!(cfg.sigma_gd > 0.0)) throw UsageError("sigma_gd must be > 0");

  FixedEmbedding out;
  out.source_id = seq.source_id;
  out.matrix.resize(cfg.n_parts, seq.dim());
  for (int k = 0; k < cfg.n_parts; ++k) {
    const Eigen::VectorXd w = part_weights(k, cfg.n_parts, seq.length(), cfg.sigma_gd);
    out.matrix.row(k) = w.transpose() * seq.frames;
  }
  return out;
}

}  // namespace ci_select

#pragma once

// Reference computations used only by tests. Each one follows the textbook
// definition directly and shares no code path with the library.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace ci_select::oracle {

// |DFT|^2 of a Hann-windowed, zero-padded frame by direct summation.
inline std::vector<double> dft_power(const std::vector<double>& frame, std::size_t n_fft) {
  const std::size_t n = frame.size();
  std::vector<double> power(n_fft / 2 + 1);
  for (std::size_t k = 0; k < power.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / n));
      acc += frame[i] * w * std::polar(1.0, -2.0 * std::numbers::pi * double(k) * double(i) / double(n_fft));
    }
    power[k] = std::norm(acc);
  }
  return power;
}

// HSIC written out as the expanded double sum:
// (1/n^2) [ sum_ij K_ij L_ij - (2/n) sum_i (sum_j K_ij)(sum_j L_ij) + (1/n^2) (sum K)(sum L) ].
inline double hsic_double_sum(const Eigen::MatrixXd& k, const Eigen::MatrixXd& l) {
  const long n = k.rows();
  double t1 = 0.0, t2 = 0.0, sk = 0.0, sl = 0.0;
  for (long i = 0; i < n; ++i) {
    double rk = 0.0, rl = 0.0;
    for (long j = 0; j < n; ++j) {
      t1 += k(i, j) * l(i, j);
      rk += k(i, j);
      rl += l(i, j);
    }
    t2 += rk * rl;
    sk += rk;
    sl += rl;
  }
  const double nn = static_cast<double>(n);
  return (t1 - 2.0 / nn * t2 + sk * sl / (nn * nn)) / (nn * nn);
}

// HSIC from the literal matrix product trace(K H L H) / n^2.
inline double hsic_product(const Eigen::MatrixXd& k, const Eigen::MatrixXd& l) {
  const long n = k.rows();
  const Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / n);
  return (k * h * l * h).trace() / static_cast<double>(n * n);
}

// Rank by counting: 1 + #smaller + (#equal - 1) / 2.
inline std::vector<double> count_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double x : v) {
      if (x < v[i]) ++less;
      if (x == v[i]) ++equal;
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(count_ranks(x), count_ranks(y));
}

// tau-b over all ordered pairs: sum sgn(dx) sgn(dy) / sqrt(sum sgn(dx)^2 * sum sgn(dy)^2).
inline double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
  auto sgn = [](double v) { return static_cast<double>((v > 0) - (v < 0)); };
  double num = 0, dx2 = 0, dy2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double a = sgn(x[i] - x[j]), b = sgn(y[i] - y[j]);
      num += a * b;
      dx2 += a * a;
      dy2 += b * b;
    }
  }
  return num / std::sqrt(dx2 * dy2);
}

// One Gaussian-downsampled row by direct weighted summation.
inline std::vector<double> gaussian_row(const std::vector<std::vector<double>>& frames, int k, int n_parts,
                                        double sigma_gd) {
  const double len = static_cast<double>(frames.size());
  const double center = (k + 0.5) * len / n_parts - 0.5;
  const double sigma = sigma_gd * len;
  std::vector<double> row(frames.front().size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const double w = std::exp(-std::pow(double(i) - center, 2) / (2 * sigma * sigma));
    total += w;
    for (std::size_t d = 0; d < row.size(); ++d) row[d] += w * frames[i][d];
  }
  for (auto& v : row) v /= total;
  return row;
}

inline double mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double inv_mel(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

}  // namespace ci_select::oracle

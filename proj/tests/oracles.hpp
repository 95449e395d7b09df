#pragma once

// Deliberately naive reference implementations used to cross-check the
// library. None of them share code with it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "aesaug/model.hpp"

namespace oracle {

// Kappa from sample pairs: 1 - mean (p_i - t_i)^2 / mean over all (i, j)
// of (p_i - t_j)^2. The quadratic weight normalization cancels out.
inline double qwk_pairwise(const std::vector<int>& p, const std::vector<int>& t) {
  const std::size_t n = p.size();
  double observed = 0.0;
  for (std::size_t i = 0; i < n; ++i) observed += double(p[i] - t[i]) * double(p[i] - t[i]);
  observed /= double(n);
  double expected = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) expected += double(p[i] - t[j]) * double(p[i] - t[j]);
  expected /= double(n) * double(n);
  if (expected == 0.0) return observed == 0.0 ? 1.0 : 0.0;
  return 1.0 - observed / expected;
}

inline double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Element-by-element recurrence for one essay, no batching or masking.
inline std::vector<double> pooled(const std::vector<std::size_t>& tokens,
                                  const aesaug::Parameters& p, const aesaug::ModelConfig& c) {
  const int H = c.cell_size, D = c.embed_dim;
  const std::size_t T = std::min(tokens.size(), std::size_t(c.max_seq_len));
  std::vector<double> h(H, 0.0), cell(H, 0.0), sum(H, 0.0);
  auto affine = [&](int row, const std::vector<double>& x, const std::vector<double>& hv) {
    double a = p.bias(row);
    for (int d = 0; d < D; ++d) a += p.input_weights(row, d) * x[d];
    for (int k = 0; k < H; ++k) a += p.recurrent_weights(row, k) * hv[k];
    return a;
  };
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> x(D);
    for (int d = 0; d < D; ++d) x[d] = p.embedding(Eigen::Index(tokens[t]), d);
    std::vector<double> next(H);
    if (c.cell_type == aesaug::CellType::kGru) {
      std::vector<double> z(H), r(H), rh(H);
      for (int j = 0; j < H; ++j) {
        z[j] = sig(affine(j, x, h));
        r[j] = sig(affine(H + j, x, h));
      }
      for (int j = 0; j < H; ++j) rh[j] = r[j] * h[j];
      for (int j = 0; j < H; ++j) {
        const double n = std::tanh(affine(2 * H + j, x, rh));
        next[j] = z[j] * h[j] + (1.0 - z[j]) * n;
      }
    } else {
      for (int j = 0; j < H; ++j) {
        const double i = sig(affine(j, x, h));
        const double f = sig(affine(H + j, x, h));
        const double o = sig(affine(2 * H + j, x, h));
        const double g = std::tanh(affine(3 * H + j, x, h));
        cell[j] = f * cell[j] + i * g;
        next[j] = o * std::tanh(cell[j]);
      }
    }
    h = next;
    for (int j = 0; j < H; ++j) sum[j] += h[j];
  }
  for (auto& s : sum) s /= c.pooling_divisor;
  return sum;
}

inline double forward(const std::vector<std::size_t>& tokens, const aesaug::Parameters& p,
                      const aesaug::ModelConfig& c, const std::vector<double>& content = {}) {
  const auto pool = pooled(tokens, p, c);
  double logit = p.output_bias(0);
  for (int j = 0; j < c.cell_size; ++j) logit += p.output_weights(j) * pool[j];
  for (std::size_t k = 0; k < content.size(); ++k)
    logit += p.output_weights(Eigen::Index(c.cell_size + k)) * content[k];
  return sig(logit);
}

// Naive KL(p || q) with the 0 ln 0 = 0 convention.
inline double kl(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) s += p[i] * std::log(p[i] / q[i]);
  return s;
}

}  // namespace oracle

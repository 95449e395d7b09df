#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "aesaug/model.hpp"

namespace gradcheck {

struct Setup {
  aesaug::ModelConfig config;
  aesaug::Parameters params;
  std::vector<aesaug::Example> examples;

  std::vector<const aesaug::Example*> batch() const {
    std::vector<const aesaug::Example*> out;
    for (const auto& e : examples) out.push_back(&e);
    return out;
  }
};

// A random tiny model with a batch of uneven-length essays, so padding and
// masking are exercised. Weights are larger than the training init to keep
// gradients well above finite-difference noise.
inline Setup random_setup(std::uint64_t seed, aesaug::CellType cell, bool content) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng() % unsigned(hi - lo + 1)); };
  Setup s;
  auto& c = s.config;
  c.cell_type = cell;
  c.embed_dim = pick(2, 8);
  c.cell_size = pick(2, 12);
  c.vocab_size = static_cast<std::size_t>(pick(4, 12));
  c.use_content_features = content;
  c.content_dim = pick(1, 3);
  c.max_seq_len = pick(6, 20);
  c.pooling_divisor = 1.0 + double(rng() % 100) / 10.0;
  c.seed = seed;
  c.init_scale = 0.5;
  s.params = aesaug::init_parameters(c);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& [name, values] : s.params.tensors())
    for (auto& v : values) v = u(rng);

  const int batch = pick(1, 4);
  for (int b = 0; b < batch; ++b) {
    aesaug::Example e;
    const int len = pick(1, 20);
    for (int t = 0; t < len; ++t) e.tokens.push_back(rng() % c.vocab_size);
    if (content)
      for (int k = 0; k < c.content_dim; ++k) e.content.push_back(u(rng) * 4.0);
    e.target = double(rng() % 101) / 100.0;
    s.examples.push_back(std::move(e));
  }
  return s;
}

inline double mean_loss(const Setup& s, const aesaug::Parameters& p) {
  const auto out = aesaug::forward_batch(s.batch(), p, s.config);
  double total = 0.0;
  for (std::size_t b = 0; b < out.size(); ++b) {
    const double d = out[b] - s.examples[b].target;
    total += d * d;
  }
  return total / double(out.size());
}

// Largest |analytic - numeric| / max(|analytic|, |numeric|) over every
// parameter, with central differences of step h. Entries where both values
// are below `floor` are compared against the floor instead, so exact zeros
// (e.g. rows of unused tokens) do not divide by zero.
inline double max_relative_error(const Setup& s, double h = 1e-5, double floor = 1e-8) {
  const auto analytic = aesaug::backward(s.batch(), s.params, s.config).gradients;
  auto probe = s.params;
  auto probe_tensors = probe.tensors();
  const auto grad_tensors = analytic.tensors();
  double worst = 0.0;
  for (std::size_t k = 0; k < probe_tensors.size(); ++k) {
    auto values = probe_tensors[k].second;
    const auto grads = grad_tensors[k].second;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = mean_loss(s, probe);
      values[i] = saved - h;
      const double down = mean_loss(s, probe);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(grads[i]), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(grads[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace gradcheck

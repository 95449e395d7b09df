#include "aesaug/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "aesaug/error.hpp"

namespace aesaug {

std::vector<double> token_counts(std::span<const std::string> tokens, const Vocabulary& vocab) {
  std::vector<double> counts(vocab.size(), 0.0);
  for (const auto& t : tokens) counts[vocab.index(t)] += 1.0;
  return counts;
}

WordDistribution distribution_from_counts(std::span<const double> counts, double alpha) {
  if (counts.empty()) throw Error("features.vocab", "empty vocabulary");
  if (!(alpha > 0.0)) throw Error("features.alpha", "smoothing constant must be positive");
  double total = 0.0;
  for (double c : counts) total += c;
  const double denominator = total + alpha * static_cast<double>(counts.size());
  WordDistribution dist;
  dist.alpha = alpha;
  dist.probabilities.reserve(counts.size());
  for (double c : counts) dist.probabilities.push_back((c + alpha) / denominator);
  return dist;
}

WordDistribution word_distribution(std::span<const std::string> tokens, const Vocabulary& vocab,
                                   double alpha) {
  const auto counts = token_counts(tokens, vocab);
  return distribution_from_counts(counts, alpha);
}

double kl_divergence(const WordDistribution& p, const WordDistribution& q) {
  if (p.probabilities.size() != q.probabilities.size()) {
    throw Error("features.vocab", "KL divergence between distributions over " +
                                      std::to_string(p.probabilities.size()) + " and " +
                                      std::to_string(q.probabilities.size()) + " words");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < p.probabilities.size(); ++i) {
    const double pi = p.probabilities[i];
    if (pi == 0.0) continue;
    const double qi = q.probabilities[i];
    if (!(qi > 0.0)) {
      throw Error("features.support", "q has zero mass where p does not");
    }
    sum += pi * std::log(pi / qi);
  }
  // Non-negative in exact arithmetic; rounding can leave a tiny negative.
  return std::max(sum, 0.0);
}

int equal_width_band(int score, const PromptSpec& spec) {
  // Edges at min + w/3 and min + 2w/3, compared in integers scaled by 3.
  const long scaled = 3L * (score - spec.min_score);
  const long width = spec.width();
  if (scaled < width) return 0;
  if (scaled <= 2 * width) return 1;
  return 2;
}

LevelPartition partition_levels(std::span<const LabeledTokens> essays, const PromptSpec& spec,
                                const Vocabulary& vocab, double alpha, Banding banding) {
  if (essays.empty()) throw Error("features.levels", "no essays to partition");

  std::map<int, std::vector<const LabeledTokens*>> by_score;
  for (const auto& e : essays) by_score[e.record->score].push_back(&e);

  // Assign each distinct score (ascending) to a band.
  std::map<int, int> band_of;
  if (banding == Banding::kEqualWidth) {
    for (const auto& [score, _] : by_score) band_of[score] = equal_width_band(score, spec);
  } else {
    const double n = static_cast<double>(essays.size());
    double cumulative = 0.0;
    int band = 0;
    for (const auto& [score, members] : by_score) {
      // A score starts a new band once the running count has passed the
      // next third.
      if (band < 2 && cumulative >= n * (band + 1) / 3.0) ++band;
      band_of[score] = band;
      cumulative += static_cast<double>(members.size());
    }
  }

  std::vector<ScoreLevel> bands(3);
  std::vector<std::vector<double>> counts(3, std::vector<double>(vocab.size(), 0.0));
  std::vector<bool> used(3, false);
  for (const auto& [score, members] : by_score) {
    const auto b = static_cast<std::size_t>(band_of[score]);
    auto& level = bands[b];
    if (!used[b]) level.low_score = score;
    used[b] = true;
    level.high_score = score;
    for (const auto* e : members) {
      level.essay_ids.insert(e->record->essay_id);
      for (const auto& t : e->tokens->tokens) counts[b][vocab.index(t)] += 1.0;
    }
  }

  LevelPartition partition;
  for (std::size_t b = 0; b < 3; ++b) {
    if (!used[b]) continue;
    bands[b].distribution = distribution_from_counts(counts[b], alpha);
    partition.levels.push_back(std::move(bands[b]));
  }
  partition.degenerate = partition.levels.size() < 3;
  return partition;
}

std::vector<double> content_features(const WordDistribution& essay,
                                     const LevelPartition& levels) {
  std::vector<double> features;
  features.reserve(levels.levels.size());
  for (const auto& level : levels.levels) {
    features.push_back(kl_divergence(essay, level.distribution));
  }
  return features;
}

}  // namespace aesaug

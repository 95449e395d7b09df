#pragma once

#include <set>
#include <span>
#include <string>
#include <vector>

#include "aesaug/corpus.hpp"
#include "aesaug/textprep.hpp"

namespace aesaug {

struct WordDistribution {
  std::vector<double> probabilities;  // indexed by vocabulary index
  double alpha = 0.0;
};

/// Token counts per vocabulary index; unknown tokens count under kUnk.
std::vector<double> token_counts(std::span<const std::string> tokens, const Vocabulary& vocab);

/// p(w) = (count(w) + alpha) / (total + alpha * |counts|)
WordDistribution distribution_from_counts(std::span<const double> counts, double alpha);

WordDistribution word_distribution(std::span<const std::string> tokens, const Vocabulary& vocab,
                                   double alpha);

/// Sum of p ln(p/q); terms with p = 0 contribute nothing.
double kl_divergence(const WordDistribution& p, const WordDistribution& q);

enum class Banding {
  kEqualWidth,  // thirds of [min, max]; a score on an edge joins the middle band
  kTertile,     // count-balanced thirds that never split one score value
};

struct ScoreLevel {
  int low_score = 0;   // inclusive band bounds
  int high_score = 0;
  std::set<EssayId> essay_ids;
  WordDistribution distribution;
};

struct LevelPartition {
  std::vector<ScoreLevel> levels;  // ascending score; empty bands dropped
  bool degenerate = false;         // fewer than three levels
};

struct LabeledTokens {
  const EssayRecord* record;
  const TokenSequence* tokens;
};

/// Groups essays into score bands and aggregates each band's token counts
/// into one smoothed distribution. Pass training-fold essays only.
LevelPartition partition_levels(std::span<const LabeledTokens> essays, const PromptSpec& spec,
                                const Vocabulary& vocab, double alpha,
                                Banding banding = Banding::kEqualWidth);

/// Band index (0 low, 1 mid, 2 high) of `score` under equal-width banding.
int equal_width_band(int score, const PromptSpec& spec);

/// [KL(essay || level) for each level]
std::vector<double> content_features(const WordDistribution& essay,
                                     const LevelPartition& levels);

}  // namespace aesaug

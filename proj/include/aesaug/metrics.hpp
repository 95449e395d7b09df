#pragma once

#include <span>
#include <vector>

namespace aesaug {

// Row i counts pairs whose actual score is min_score + i, column j those
// whose predicted score is min_score + j.
using ConfusionMatrix = std::vector<std::vector<long long>>;

ConfusionMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> actual,
                                 int min_score, int max_score);

struct KappaResult {
  double value = 0.0;
  // Set when both vectors are constant: the chance-agreement term vanishes
  // (or is the whole mass), and the value is fixed by convention.
  bool degenerate = false;
};

/// Quadratic weighted kappa over the full declared score range.
KappaResult qwk_detailed(std::span<const int> predicted, std::span<const int> actual,
                         int min_score, int max_score);

inline double qwk(std::span<const int> predicted, std::span<const int> actual, int min_score,
                  int max_score) {
  return qwk_detailed(predicted, actual, min_score, max_score).value;
}

}  // namespace aesaug

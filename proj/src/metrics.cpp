#include "aesaug/metrics.hpp"

#include <string>

#include "aesaug/error.hpp"

namespace aesaug {

namespace {

void validate(std::span<const int> predicted, std::span<const int> actual, int min_score,
              int max_score) {
  if (predicted.size() != actual.size()) {
    throw Error("metrics.length", "predicted has " + std::to_string(predicted.size()) +
                                      " scores, actual has " + std::to_string(actual.size()));
  }
  if (predicted.empty()) throw Error("metrics.length", "no score pairs");
  if (max_score <= min_score) {
    throw Error("metrics.range", "score range must contain at least two values");
  }
  auto check = [&](std::span<const int> v, const char* name) {
    for (int s : v) {
      if (s < min_score || s > max_score) {
        throw Error("metrics.range", std::string(name) + " score " + std::to_string(s) +
                                        " outside " + std::to_string(min_score) + "-" +
                                        std::to_string(max_score));
      }
    }
  };
  check(predicted, "predicted");
  check(actual, "actual");
}

}  // namespace

ConfusionMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> actual,
                                 int min_score, int max_score) {
  validate(predicted, actual, min_score, max_score);
  const auto n = static_cast<std::size_t>(max_score - min_score + 1);
  ConfusionMatrix m(n, std::vector<long long>(n, 0));
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    ++m[static_cast<std::size_t>(actual[k] - min_score)]
       [static_cast<std::size_t>(predicted[k] - min_score)];
  }
  return m;
}

KappaResult qwk_detailed(std::span<const int> predicted, std::span<const int> actual,
                         int min_score, int max_score) {
  const auto observed = confusion_matrix(predicted, actual, min_score, max_score);
  const std::size_t n = observed.size();
  const double total = static_cast<double>(predicted.size());

  std::vector<double> hist_actual(n, 0.0), hist_pred(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      hist_actual[i] += static_cast<double>(observed[i][j]);
      hist_pred[j] += static_cast<double>(observed[i][j]);
    }
  }

  const double scale = static_cast<double>((n - 1) * (n - 1));
  double numerator = 0.0, denominator = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = static_cast<double>(i) - static_cast<double>(j);
      const double w = d * d / scale;
      numerator += w * static_cast<double>(observed[i][j]);
      denominator += w * hist_actual[i] * hist_pred[j] / total;
    }
  }

  auto support = [](const std::vector<double>& h) {
    int nonzero = 0;
    for (double c : h) nonzero += c > 0.0;
    return nonzero;
  };
  const bool both_constant = support(hist_actual) == 1 && support(hist_pred) == 1;

  if (both_constant) return {denominator == 0.0 ? 1.0 : 0.0, true};
  return {1.0 - numerator / denominator, false};
}

}  // namespace aesaug

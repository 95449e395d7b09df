#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "aesaug/features.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace aesaug;
using testutil::error_kind;

namespace {

Vocabulary ab_vocab() { return Vocabulary({"<pad>", "<unk>", "a", "b"}); }

struct Fixture {
  std::vector<EssayRecord> records;
  std::vector<TokenSequence> tokens;
  Vocabulary vocab;

  explicit Fixture(std::vector<EssayRecord> r) : records(std::move(r)) {
    for (const auto& e : records) tokens.push_back(tokenize(e));
    vocab = build_vocab(tokens);
  }
  std::vector<LabeledTokens> labeled() const {
    std::vector<LabeledTokens> out;
    for (std::size_t i = 0; i < records.size(); ++i) out.push_back({&records[i], &tokens[i]});
    return out;
  }
};

}  // namespace

TEST_CASE("word distributions") {
  const auto vocab = ab_vocab();
  const std::vector<std::string> aab = {"a", "a", "b"};

  SUBCASE("small alpha approaches relative frequency") {
    const auto d = word_distribution(aab, vocab, 1e-12);
    CHECK(d.probabilities[2] == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
    CHECK(d.probabilities[3] == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  }
  SUBCASE("exact smoothing") {
    const auto d = word_distribution(aab, vocab, 0.25);
    CHECK(d.probabilities[2] == doctest::Approx(2.25 / 4.0).epsilon(1e-15));
    CHECK(d.probabilities[0] == doctest::Approx(0.25 / 4.0).epsilon(1e-15));
  }
  SUBCASE("empty input is uniform") {
    const auto d = word_distribution(std::vector<std::string>{}, vocab, 0.25);
    for (double p : d.probabilities) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("unknown words count under unk") {
    const auto counts = token_counts(std::vector<std::string>{"zzz", "a"}, vocab);
    CHECK(counts == std::vector<double>{0, 1, 1, 0});
  }
  SUBCASE("brute-force tally") {
    std::mt19937_64 rng(5);
    const std::vector<std::string> words = {"a", "b", "c", "d", "e"};
    const Vocabulary v({"<pad>", "<unk>", "a", "b", "c"});
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<std::string> toks(rng() % 40);
      for (auto& t : toks) t = words[rng() % words.size()];
      const double alpha = 1.0 / double(v.size());
      const auto d = word_distribution(toks, v, alpha);
      double total = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) {
        double c = 0;
        for (const auto& t : toks) c += (t == v.token(i)) || (i == 1 && !v.contains(t));
        const double expect = (c + alpha) / (double(toks.size()) + alpha * double(v.size()));
        CHECK(d.probabilities[i] == doctest::Approx(expect).epsilon(1e-14));
        total += d.probabilities[i];
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  CHECK(error_kind([&] { word_distribution(aab, vocab, 0.0); }) == "features.alpha");
  CHECK(error_kind([] { distribution_from_counts(std::vector<double>{}, 1.0); }) ==
        "features.vocab");
}

TEST_CASE("kl divergence") {
  WordDistribution p{{0.5, 0.5}, 0}, q{{1.0, 0.0}, 0}, r{{0.25, 0.75}, 0};
  CHECK(kl_divergence(q, p) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(kl_divergence(p, p) == 0.0);
  CHECK(error_kind([&] { kl_divergence(p, q); }) == "features.support");
  CHECK(error_kind([&] { kl_divergence(p, WordDistribution{{1.0}, 0}); }) == "features.vocab");
  CHECK(kl_divergence(p, r) == doctest::Approx(oracle::kl(p.probabilities, r.probabilities)));

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    std::vector<double> a(n), b(n);
    for (auto& x : a) x = u(rng);
    for (auto& x : b) x = u(rng);
    const double sa = std::accumulate(a.begin(), a.end(), 0.0);
    const double sb = std::accumulate(b.begin(), b.end(), 0.0);
    for (auto& x : a) x /= sa;
    for (auto& x : b) x /= sb;
    const WordDistribution pa{a, 0}, pb{b, 0};
    const double k = kl_divergence(pa, pb);
    CHECK(k >= 0.0);
    CHECK(k == doctest::Approx(oracle::kl(a, b)).epsilon(1e-12));
    CHECK(kl_divergence(pa, pa) <= 1e-9);
  }
}

TEST_CASE("equal-width bands") {
  const auto p3 = prompt_spec(3);
  CHECK(equal_width_band(0, p3) == 0);
  CHECK(equal_width_band(1, p3) == 1);
  CHECK(equal_width_band(2, p3) == 1);
  CHECK(equal_width_band(3, p3) == 2);

  const PromptSpec wide{99, 0, 8};
  std::vector<int> per_band(3, 0);
  for (int s = 0; s <= 8; ++s) ++per_band[equal_width_band(s, wide)];
  CHECK(per_band == std::vector<int>{3, 3, 3});

  // Oracle on every built-in prompt: thirds of [min, max] by real division.
  for (int prompt = 1; prompt <= 8; ++prompt) {
    const auto spec = prompt_spec(prompt);
    const double w = spec.max_score - spec.min_score;
    for (int s = spec.min_score; s <= spec.max_score; ++s) {
      const double x = s - spec.min_score;
      const int expect = x < w / 3.0 - 1e-9 ? 0 : (x <= 2.0 * w / 3.0 + 1e-9 ? 1 : 2);
      CHECK(equal_width_band(s, spec) == expect);
    }
  }
}

TEST_CASE("partition_levels") {
  SUBCASE("prompt 3 bands") {
    Fixture f(testutil::synthetic_prompt(3, 0, 3, 12, 1));
    const auto labeled = f.labeled();
    const auto part = partition_levels(labeled, prompt_spec(3), f.vocab, 0.1);
    REQUIRE(part.levels.size() == 3);
    CHECK_FALSE(part.degenerate);
    CHECK(part.levels[0].low_score == 0);
    CHECK(part.levels[0].high_score == 0);
    CHECK(part.levels[1].low_score == 1);
    CHECK(part.levels[1].high_score == 2);
    CHECK(part.levels[2].low_score == 3);
    CHECK(part.levels[0].essay_ids.size() == 3);
    CHECK(part.levels[1].essay_ids.size() == 6);

    // A band's distribution is the smoothed pooled count of its essays.
    std::vector<std::string> pooled;
    for (std::size_t i = 0; i < f.records.size(); ++i)
      if (f.records[i].score == 3)
        pooled.insert(pooled.end(), f.tokens[i].tokens.begin(), f.tokens[i].tokens.end());
    const auto expect = word_distribution(pooled, f.vocab, 0.1);
    for (std::size_t k = 0; k < f.vocab.size(); ++k)
      CHECK(part.levels[2].distribution.probabilities[k] ==
            doctest::Approx(expect.probabilities[k]).epsilon(1e-15));
  }
  SUBCASE("identical scores are degenerate") {
    auto r = testutil::synthetic_prompt(5, 2, 2, 6, 1);
    Fixture f(r);
    const auto part = partition_levels(f.labeled(), prompt_spec(5), f.vocab, 0.1);
    CHECK(part.levels.size() == 1);
    CHECK(part.degenerate);
  }
  SUBCASE("tertiles never split a score") {
    Fixture f(testutil::synthetic_prompt(8, 10, 18, 27, 4));
    const auto part =
        partition_levels(f.labeled(), prompt_spec(8), f.vocab, 0.1, Banding::kTertile);
    REQUIRE(part.levels.size() == 3);
    for (const auto& level : part.levels) CHECK(level.essay_ids.size() == 9);
    CHECK(part.levels[0].high_score < part.levels[1].low_score);
    CHECK(part.levels[1].high_score < part.levels[2].low_score);
  }
  CHECK(error_kind([] {
          partition_levels(std::vector<LabeledTokens>{}, prompt_spec(1), ab_vocab(), 0.1);
        }) == "features.levels");
}

TEST_CASE("content features") {
  Fixture f(testutil::synthetic_prompt(3, 0, 3, 40, 2, 1, 5));
  const auto part = partition_levels(f.labeled(), prompt_spec(3), f.vocab, 0.01);
  const auto& essay = f.tokens[3];  // score 3
  const auto dist = word_distribution(essay.tokens, f.vocab, 0.01);
  const auto feats = content_features(dist, part);
  REQUIRE(feats.size() == part.levels.size());
  for (std::size_t k = 0; k < feats.size(); ++k)
    CHECK(feats[k] == doctest::Approx(oracle::kl(dist.probabilities,
                                                 part.levels[k].distribution.probabilities))
                          .epsilon(1e-12));
  // The essay is closest to its own band.
  CHECK(feats[2] < feats[0]);

  auto shuffled = essay.tokens;
  std::mt19937_64 rng(1);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto again = content_features(word_distribution(shuffled, f.vocab, 0.01), part);
  for (std::size_t k = 0; k < feats.size(); ++k) CHECK(again[k] == doctest::Approx(feats[k]).epsilon(1e-14));
}

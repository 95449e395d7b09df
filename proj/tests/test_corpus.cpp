#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "aesaug/corpus.hpp"
#include "support.hpp"

using namespace aesaug;
using testutil::error_kind;

TEST_CASE("built-in prompt ranges") {
  const std::map<int, std::pair<int, int>> expected = {
      {1, {2, 12}}, {2, {1, 6}}, {3, {0, 3}}, {4, {0, 3}},
      {5, {0, 4}},  {6, {0, 4}}, {7, {0, 30}}, {8, {0, 60}}};
  for (const auto& [p, range] : expected) {
    const auto spec = prompt_spec(p);
    CHECK(spec.min_score == range.first);
    CHECK(spec.max_score == range.second);
  }
  CHECK(error_kind([] { prompt_spec(0); }) == "corpus.unknown_prompt");
  CHECK(PromptTable::asap().prompt_ids() == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8});
}

TEST_CASE("custom prompt tables") {
  auto table = PromptTable::asap();
  table.add({9, 1, 5});
  CHECK(table.at(9).max_score == 5);
  CHECK(error_kind([&] { table.add({10, 3, 3}); }) == "corpus.prompt_spec");
}

TEST_CASE("load_asap") {
  testutil::TempDir dir;
  const auto path = dir / "c.tsv";

  SUBCASE("rows come back in order") {
    testutil::write_file(path,
                         "essay_id\tessay_set\tessay\trater1\tdomain1_score\n"
                         "10\t1\tFirst essay.\t4\t8\n"
                         "11\t1\tSecond essay.\t3\t2\n"
                         "12\t2\tThird essay.\t1\t1\n");
    const auto records = load_asap(path);
    REQUIRE(records.size() == 3);
    CHECK(records[0].essay_id == 10);
    CHECK(records[1].essay_id == 11);
    CHECK(records[2].essay_id == 12);
    CHECK(records[0].score == 8);
    CHECK(records[2].text == "Third essay.");
  }
  SUBCASE("score outside the prompt range names the row") {
    testutil::write_file(path, "essay_id\tessay_set\tessay\tdomain1_score\n1\t3\tok\t2\n2\t3\tbad\t5\n");
    try {
      load_asap(path);
      FAIL("expected a range error");
    } catch (const Error& e) {
      CHECK(e.kind() == "corpus.range");
      CHECK(std::string(e.what()).find(":3") != std::string::npos);
    }
  }
  SUBCASE("validation errors") {
    testutil::write_file(path, "essay_id\tessay_set\tessay\n1\t1\tx\n");
    CHECK(error_kind([&] { load_asap(path); }) == "corpus.column");
    testutil::write_file(path, "essay_id\tessay_set\tessay\tdomain1_score\n1\t1\tx\tnine\n");
    CHECK(error_kind([&] { load_asap(path); }) == "corpus.column");
    testutil::write_file(path, "essay_id\tessay_set\tessay\tdomain1_score\n1\t1\tx\t8\n1\t1\ty\t8\n");
    CHECK(error_kind([&] { load_asap(path); }) == "corpus.duplicate");
    testutil::write_file(path, "essay_id\tessay_set\tessay\tdomain1_score\n1\t1\t \t8\n");
    CHECK(error_kind([&] { load_asap(path); }) == "corpus.empty_text");
    CHECK(error_kind([&] { load_asap(dir / "missing.tsv"); }) == "corpus.io");
  }
  SUBCASE("custom column names") {
    testutil::write_file(path, "id\tset\ttext\tscore\n5\t7\thello\t20\n");
    ColumnMap columns{"id", "set", "text", "score"};
    const auto records = load_asap(path, columns);
    REQUIRE(records.size() == 1);
    CHECK(records[0].score == 20);
  }
  SUBCASE("invalid UTF-8 is replaced") {
    testutil::write_file(path, "essay_id\tessay_set\tessay\tdomain1_score\n1\t1\tcaf\xe9 time\t8\n");
    const auto records = load_asap(path);
    CHECK(records[0].text == "caf\xEF\xBF\xBD time");
  }
  SUBCASE("write then load round-trips") {
    const auto original = testutil::synthetic_prompt(7, 0, 30, 40, 3);
    write_asap(path, original);
    CHECK(load_asap(path) == original);
  }
}

TEST_CASE("compute_stats") {
  SUBCASE("direct count") {
    std::vector<EssayRecord> r = {{1, 3, "a", 2}, {2, 3, "b", 2}, {3, 3, "c", 3}};
    const auto s = compute_stats(r, 3);
    CHECK(s.highest_frequency_score == 2);
    CHECK(s.n_lower == 0);
    CHECK(s.n_higher == 1);
    CHECK(s.n_at_or_below() == 2);
  }
  SUBCASE("ties go to the lowest score") {
    std::vector<EssayRecord> r = {{1, 3, "a", 0}, {2, 3, "b", 1}, {3, 3, "c", 1},
                                  {4, 3, "d", 2}, {5, 3, "e", 2}};
    const auto s = compute_stats(r, 3);
    CHECK(s.highest_frequency_score == 1);
    CHECK(s.n_lower == 1);
    CHECK(s.n_higher == 2);
  }
  SUBCASE("brute-force tally on random prompts") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      const int n = 1 + static_cast<int>(rng() % 60);
      std::vector<EssayRecord> r;
      for (int i = 0; i < n; ++i) r.push_back({i, 8, "x", static_cast<int>(rng() % 61)});
      const auto s = compute_stats(r, 8);
      // Oracle: count every candidate score, keep the first strict maximum.
      int best_score = -1, best_count = -1;
      for (int score = 0; score <= 60; ++score) {
        const int c = static_cast<int>(
            std::count_if(r.begin(), r.end(), [&](const EssayRecord& e) { return e.score == score; }));
        if (c > best_count) {
          best_count = c;
          best_score = score;
        }
      }
      long lower = 0, higher = 0;
      for (const auto& e : r) {
        lower += e.score < best_score;
        higher += e.score > best_score;
      }
      CHECK(s.highest_frequency_score == best_score);
      CHECK(s.n_lower == lower);
      CHECK(s.n_higher == higher);
      CHECK(s.n_lower + s.n_higher + s.mode_count() == n);
    }
  }
  SUBCASE("empty prompt") {
    std::vector<EssayRecord> r = {{1, 1, "a", 8}};
    CHECK(error_kind([&] { compute_stats(r, 2); }) == "corpus.empty_prompt");
  }
}

TEST_CASE("make_folds") {
  const auto records = testutil::synthetic_prompt(1, 2, 12, 10, 1);

  SUBCASE("each essay is tested exactly once") {
    const auto folds = make_folds(records, 5, 1);
    REQUIRE(folds.size() == 5);
    CHECK_NOTHROW(check_partition(folds, records));
    std::multiset<EssayId> tested;
    for (const auto& f : folds) tested.insert(f.test_ids.begin(), f.test_ids.end());
    CHECK(tested.size() == records.size());
    for (const auto& r : records) CHECK(tested.count(r.essay_id) == 1);
  }
  SUBCASE("deterministic given the seed") {
    CHECK(make_folds(records, 5, 1) == make_folds(records, 5, 1));
  }
  SUBCASE("60/20/20 with stratified score coverage") {
    const auto big = testutil::synthetic_prompt(3, 0, 3, 400, 5);
    const auto folds = make_folds(big, 5, 9);
    for (const auto& f : folds) {
      CHECK(f.train_ids.size() == 240);
      CHECK(f.dev_ids.size() == 80);
      CHECK(f.test_ids.size() == 80);
      std::set<int> scores;
      for (auto id : f.test_ids) scores.insert(big[static_cast<std::size_t>(id - 1)].score);
      CHECK(scores.size() == 4);
    }
  }
  SUBCASE("errors") {
    CHECK(error_kind([&] { make_folds(records, 2, 1); }) == "corpus.folds");
    const std::vector<EssayRecord> few(records.begin(), records.begin() + 3);
    CHECK(error_kind([&] { make_folds(few, 5, 1); }) == "corpus.folds");
  }
}

TEST_CASE("partition files") {
  testutil::TempDir dir;
  const auto path = dir / "folds.json";
  const auto records = testutil::synthetic_prompt(1, 2, 12, 9, 1);

  SUBCASE("external file is used verbatim") {
    testutil::write_file(path, R"({"0": {"train": [1,2,3,4,5], "dev": [6,7], "test": [8,9]},
                                   "2": {"train": [8,9,1,2,3], "dev": [4,5], "test": [6,7]},
                                   "1": {"train": [6,7,8,9,1], "dev": [2,3], "test": [4,5]}})");
    const auto folds = load_partitions(path);
    REQUIRE(folds.size() == 3);
    CHECK(folds[0].test_ids == std::vector<EssayId>{8, 9});
    CHECK(folds[1].train_ids == std::vector<EssayId>{6, 7, 8, 9, 1});
    CHECK(folds[2].dev_ids == std::vector<EssayId>{4, 5});
    // Essays 1..3 are never tested.
    CHECK(error_kind([&] { check_partition(folds, records); }) == "corpus.partition");
  }
  SUBCASE("round trip") {
    const auto folds = make_folds(records, 3, 4);
    write_partitions(path, folds);
    CHECK(load_partitions(path) == folds);
  }
  SUBCASE("malformed files") {
    testutil::write_file(path, "[1,2]");
    CHECK(error_kind([&] { load_partitions(path); }) == "corpus.partition");
    testutil::write_file(path, R"({"0": {"train": [1], "dev": [1], "test": [2]}})");
    CHECK(error_kind([&] { load_partitions(path); }) == "corpus.partition");
    testutil::write_file(path, R"({"1": {"train": [1], "dev": [2], "test": [3]}})");
    CHECK(error_kind([&] { load_partitions(path); }) == "corpus.partition");
    testutil::write_file(path, R"({"0": {"train": [1], "test": [3]}})");
    CHECK(error_kind([&] { load_partitions(path); }) == "corpus.partition");
    testutil::write_file(path, "{not json");
    CHECK(error_kind([&] { load_partitions(path); }) == "corpus.partition");
  }
}

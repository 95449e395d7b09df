#include <doctest.h>

#include <map>
#include <random>
#include <set>

#include "aesaug/textprep.hpp"
#include "support.hpp"

using namespace aesaug;
using testutil::error_kind;
using Tokens = std::vector<std::string>;

namespace {

std::string join(const Tokens& tokens) {
  std::string out;
  for (const auto& t : tokens) out += (out.empty() ? "" : " ") + t;
  return out;
}

}  // namespace

TEST_CASE("tokenizer matches the reference treebank tokenizer") {
  // Expected lists: NLTK's treebank word tokenizer output, lowercased, with
  // "@" + "CAPS1" rejoined into the placeholder.
  const std::vector<std::pair<std::string, Tokens>> cases = {
      {"Dear @CAPS1, I can't go.", {"dear", "@CAPS1", ",", "i", "ca", "n't", "go", "."}},
      {"We'll see the students' books (and 1,000 more) -- maybe.",
       {"we", "'ll", "see", "the", "students", "'", "books", "(", "and", "1,000", "more", ")", "--",
        "maybe", "."}},
      {"He said \"hello\" and left...", {"he", "said", "``", "hello", "''", "and", "left", "..."}},
      {"I cannot wait; it's 3.5 miles!",
       {"i", "can", "not", "wait", ";", "it", "'s", "3.5", "miles", "!"}},
      {"They're gonna win, aren't they?",
       {"they", "'re", "gon", "na", "win", ",", "are", "n't", "they", "?"}},
      {"Mr. Smith doesn't like it: no way.",
       {"mr.", "smith", "does", "n't", "like", "it", ":", "no", "way", "."}},
      {"I'd rather [not] say {anything} & that's $5.",
       {"i", "'d", "rather", "[", "not", "]", "say", "{", "anything", "}", "&", "that", "'s", "$",
        "5", "."}},
      {"Computers help us learn; they also waste 10:30 hours a day!",
       {"computers", "help", "us", "learn", ";", "they", "also", "waste", "10:30", "hours", "a",
        "day", "!"}},
      {"You shouldn't've done that, wouldn't you agree?",
       {"you", "shouldn't", "'ve", "done", "that", ",", "would", "n't", "you", "agree", "?"}},
      {"Isn't it great... I think so.",
       {"is", "n't", "it", "great", "...", "i", "think", "so", "."}},
      {"go to the U.S.", {"go", "to", "the", "u.s", "."}},
      {"a .... b", {"a", "....", "b"}},
      {"he said \"no.\"", {"he", "said", "``", "no", ".", "''"}},
      {"end (here.)", {"end", "(", "here", ".", ")"}},
      {"wanna I'LL'", {"wan", "na", "i", "'ll", "'"}},
      {"d'ye know more'n that", {"d", "'ye", "know", "more", "'n", "that"}},
  };
  for (const auto& [text, expected] : cases) {
    CAPTURE(text);
    CHECK(tokenize_text(text) == expected);
  }
}

TEST_CASE("tokenizer basics") {
  CHECK(tokenize_text("").empty());
  CHECK(tokenize_text("   \n\t ").empty());
  CHECK(tokenize_text("@LOCATION2 @LOCATION2") == Tokens{"@LOCATION2", "@LOCATION2"});
  CHECK(tokenize_text("(@PERSON1's)") == Tokens{"(", "@PERSON1", "'s", ")"});
  CHECK(tokenize_text("Mid-text period. Next sentence") ==
        Tokens{"mid-text", "period", ".", "next", "sentence"});

  const EssayRecord r{42, 3, "Hello @ORGANIZATION1!", 2};
  const auto seq = tokenize(r);
  CHECK(seq.essay_id == 42);
  CHECK(seq.prompt_id == 3);
  CHECK(seq.tokens == Tokens{"hello", "@ORGANIZATION1", "!"});
}

TEST_CASE("placeholders survive as single unmodified tokens") {
  std::mt19937_64 rng(5);
  const std::vector<std::string> words = {"@CAPS1", "@PERSON2", "@DATE1", "@LOCATION10", "word",
                                          "(", "don't", ",", "\"", "@MONEY3", "x.", "'"};
  for (int trial = 0; trial < 500; ++trial) {
    std::string text;
    const int n = 1 + static_cast<int>(rng() % 15);
    for (int i = 0; i < n; ++i) {
      // Glue some words together so placeholders sit next to punctuation.
      if (i > 0 && rng() % 3 != 0) text += ' ';
      text += words[rng() % words.size()];
    }
    std::multiset<std::string> expected;
    for (const auto& p : find_placeholders(text)) expected.insert(p);
    std::multiset<std::string> got;
    for (const auto& t : tokenize_text(text)) {
      if (t.front() == '@') got.insert(t);
    }
    CAPTURE(text);
    CHECK(got == expected);
  }
  CHECK(is_placeholder("@CAPS1"));
  CHECK_FALSE(is_placeholder("@"));
  CHECK_FALSE(is_placeholder("@CAPS1,"));
  CHECK(find_placeholders("x@DATE1y @PERSON1's") == Tokens{"@DATE1y", "@PERSON1"});
}

TEST_CASE("tokenize is idempotent on its own output") {
  std::mt19937_64 rng(8);
  const std::vector<std::string> frags = {
      "the", "Students'", "can't", "won't", "I'm", "they'd", "we've", "it's", "cannot",
      "gonna", "(yes)", "[no]", "\"quoted\"", "'single'", "1,000", "3.14", "10:30", "a,b",
      "well;", "why?", "wow!", "--", "...", "dog's", "$5", "50%", "e-mail", "o'clock", "Mr."};
  for (int trial = 0; trial < 1000; ++trial) {
    std::string text;
    const int n = 1 + static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i) text += (i ? " " : "") + frags[rng() % frags.size()];
    if (rng() % 2) text += '.';
    const auto once = tokenize_text(text);
    CAPTURE(text);
    CHECK(tokenize_text(join(once)) == once);
  }
}

TEST_CASE("build_vocab") {
  const std::vector<TokenSequence> seqs = {{1, 1, {"a", "b", "a"}}, {2, 1, {"a", "c", "c"}}};

  SUBCASE("min_count filters") {
    const auto v = build_vocab(seqs, 2);
    CHECK(v.contains("a"));
    CHECK(v.contains("c"));
    CHECK_FALSE(v.contains("b"));
    CHECK(v.index("b") == Vocabulary::kUnk);
  }
  SUBCASE("frequency order then lexicographic") {
    const auto v = build_vocab(seqs);
    CHECK(v.tokens() == Tokens{"<pad>", "<unk>", "a", "c", "b"});
    CHECK(v.index("<pad>") == Vocabulary::kPad);
    CHECK(v.encode(Tokens{"c", "zzz", "a"}) == std::vector<std::size_t>{3, 1, 2});
  }
  SUBCASE("max_size caps regular entries") {
    const auto v = build_vocab(seqs, 1, 2);
    CHECK(v.tokens() == Tokens{"<pad>", "<unk>", "a", "c"});
  }
  SUBCASE("deterministic") {
    CHECK(build_vocab(seqs).tokens() == build_vocab(seqs).tokens());
    CHECK(build_vocab(seqs).hash() == build_vocab(seqs).hash());
    CHECK(build_vocab(seqs).hash() != build_vocab(seqs, 2).hash());
  }
  SUBCASE("size matches a brute-force tally") {
    const auto records = testutil::synthetic_prompt(1, 2, 12, 5, 17);
    std::vector<TokenSequence> corpus;
    for (const auto& r : records) corpus.push_back(tokenize(r));
    for (std::size_t min_count : {1u, 2u, 3u}) {
      std::map<std::string, std::size_t> tally;
      for (const auto& s : corpus)
        for (const auto& t : s.tokens) ++tally[t];
      std::size_t expected = 2;
      for (const auto& [t, c] : tally) expected += c >= min_count;
      CHECK(build_vocab(corpus, min_count).size() == expected);
    }
  }
  SUBCASE("restoring from a token list") {
    const auto v = build_vocab(seqs);
    const Vocabulary restored(v.tokens());
    CHECK(restored.hash() == v.hash());
    CHECK(error_kind([] { Vocabulary(Tokens{"a", "b"}); }) == "textprep.vocab");
    CHECK(error_kind([] { Vocabulary(Tokens{"<pad>", "<unk>", "a", "a"}); }) == "textprep.vocab");
  }
}

TEST_CASE("load_embeddings") {
  testutil::TempDir dir;
  const auto path = dir / "emb.txt";
  const Vocabulary vocab(Tokens{"<pad>", "<unk>", "apple", "banana", "cherry"});

  SUBCASE("vectors, zero rows and missing words") {
    testutil::write_file(path, "apple 0.1 -2.5 3e-3\nzebra 1 1 1\ncherry 0.30000000000000004 0 7\n");
    const auto loaded = load_embeddings(path, vocab, 3);
    const auto& m = loaded.matrix.values;
    CHECK(m.rows() == 5);
    CHECK(m.cols() == 3);
    CHECK(m(2, 0) == 0.1);
    CHECK(m(2, 1) == -2.5);
    CHECK(m(2, 2) == 3e-3);
    CHECK(m(4, 0) == 0.30000000000000004);
    CHECK(m.row(0).isZero(0.0));
    CHECK(m.row(1).isZero(0.0));
    CHECK(m.row(3).isZero(0.0));
    CHECK(loaded.report.vocab_found == 2);
    CHECK(loaded.report.vocab_missing == Tokens{"banana"});
  }
  SUBCASE("word2vec header line is skipped") {
    testutil::write_file(path, "2 3\napple 1 2 3\nbanana 4 5 6\n");
    const auto loaded = load_embeddings(path, vocab, 3);
    CHECK(loaded.matrix.values(3, 2) == 6.0);
    CHECK(loaded.report.vocab_missing == Tokens{"cherry"});
  }
  SUBCASE("dimension mismatch names the line") {
    std::string good = "banana", bad = "apple";
    for (int i = 0; i < 100; ++i) good += " 0.1";
    for (int i = 0; i < 99; ++i) bad += " 0.5";
    testutil::write_file(path, good + "\n" + bad + "\n");
    try {
      load_embeddings(path, vocab, 100);
      FAIL("expected a dimension error");
    } catch (const Error& e) {
      CHECK(e.kind() == "textprep.dimension");
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }
  SUBCASE("unreadable input") {
    CHECK(error_kind([&] { load_embeddings(dir / "nope.txt", vocab, 3); }) == "textprep.io");
    testutil::write_file(path, "apple 1 x 3\n");
    CHECK(error_kind([&] { load_embeddings(path, vocab, 3); }) == "textprep.embeddings");
  }
  SUBCASE("per-prompt counts match a set-difference oracle") {
    std::mt19937_64 rng(21);
    std::vector<TokenSequence> corpus;
    for (int i = 0; i < 40; ++i) {
      TokenSequence s{i, 1 + i % 3, {}};
      const int n = 1 + static_cast<int>(rng() % 20);
      for (int j = 0; j < n; ++j) s.tokens.push_back("w" + std::to_string(rng() % 30));
      corpus.push_back(s);
    }
    std::set<std::string> in_file;
    std::string text;
    for (int w = 0; w < 30; w += 2) {
      in_file.insert("w" + std::to_string(w));
      text += "w" + std::to_string(w) + " 1 2\n";
    }
    testutil::write_file(path, text);
    const auto corpus_vocab = build_vocab(corpus);
    const auto loaded = load_embeddings(path, corpus_vocab, 2, corpus);
    for (int p = 1; p <= 3; ++p) {
      std::set<std::string> types;
      std::size_t tokens = 0, tokens_undefined = 0;
      for (const auto& s : corpus) {
        if (s.prompt_id != p) continue;
        for (const auto& t : s.tokens) {
          types.insert(t);
          ++tokens;
          tokens_undefined += !in_file.count(t);
        }
      }
      std::size_t types_undefined = 0;
      for (const auto& t : types) types_undefined += !in_file.count(t);
      const auto& got = loaded.report.per_prompt.at(p);
      CHECK(got.types_total == types.size());
      CHECK(got.types_undefined == types_undefined);
      CHECK(got.tokens_total == tokens);
      CHECK(got.tokens_undefined == tokens_undefined);
    }
  }
}

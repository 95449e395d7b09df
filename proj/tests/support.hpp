#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "aesaug/corpus.hpp"

namespace testutil {

// Self-deleting scratch directory.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("aesaug_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Essays whose vocabulary tracks the score: each carries `marker_reps`
// copies of a score-specific word among random filler.
inline std::vector<aesaug::EssayRecord> synthetic_prompt(int prompt_id, int min_score,
                                                         int max_score, int n, std::uint64_t seed,
                                                         aesaug::EssayId first_id = 1,
                                                         int marker_reps = 3) {
  static const char* filler[] = {"the", "a", "school", "computer", "people", "think",
                                 "because", "many", "time", "and", "of", "friends",
                                 "help", "learn", "world", "good"};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> len_dist(6, 14);
  std::uniform_int_distribution<int> filler_dist(0, 15);
  std::vector<aesaug::EssayRecord> out;
  for (int i = 0; i < n; ++i) {
    const int score = min_score + (i % (max_score - min_score + 1));
    std::vector<std::string> words;
    const int len = len_dist(rng);
    for (int w = 0; w < len; ++w) words.emplace_back(filler[filler_dist(rng)]);
    for (int r = 0; r < marker_reps; ++r) {
      std::uniform_int_distribution<std::size_t> at(0, words.size());
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(at(rng)),
                   "level" + std::to_string(score));
    }
    std::string text;
    for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
    text += " @PERSON1 wrote this.";
    out.push_back({first_id + i, prompt_id, text, score});
  }
  return out;
}

inline std::string to_tsv(const std::vector<aesaug::EssayRecord>& records) {
  std::string out = "essay_id\tessay_set\tessay\tdomain1_score\n";
  for (const auto& r : records) {
    out += std::to_string(r.essay_id) + "\t" + std::to_string(r.prompt_id) + "\t" + r.text +
           "\t" + std::to_string(r.score) + "\n";
  }
  return out;
}

}  // namespace testutil

#include "aesaug/error.hpp"

namespace testutil {

// Kind of the aesaug::Error thrown by `fn`, or "" if it returns normally.
template <typename Fn>
std::string error_kind(Fn&& fn) {
  try {
    fn();
  } catch (const aesaug::Error& e) {
    return e.kind();
  }
  return "";
}

}  // namespace testutil

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace aesaug {

using EssayId = std::int64_t;

struct EssayRecord {
  EssayId essay_id = 0;
  int prompt_id = 0;
  std::string text;
  int score = 0;

  bool operator==(const EssayRecord&) const = default;
};

struct PromptSpec {
  int prompt_id = 0;
  int min_score = 0;
  int max_score = 0;

  bool contains(int score) const { return score >= min_score && score <= max_score; }
  int width() const { return max_score - min_score; }

  bool operator==(const PromptSpec&) const = default;
};

// Score ranges per prompt. The default instance holds the eight ASAP prompts;
// callers may register extra prompts for custom corpora.
class PromptTable {
 public:
  static PromptTable asap();

  void add(PromptSpec spec);
  const PromptSpec& at(int prompt_id) const;
  bool contains(int prompt_id) const { return specs_.count(prompt_id) != 0; }
  std::vector<int> prompt_ids() const;

 private:
  std::map<int, PromptSpec> specs_;
};

// Built-in ASAP range lookup. Throws Error("corpus.unknown_prompt").
PromptSpec prompt_spec(int prompt_id);

struct ColumnMap {
  std::string essay_id = "essay_id";
  std::string prompt_id = "essay_set";
  std::string text = "essay";
  std::string score = "domain1_score";
};

/// Reads an ASAP-style tab-separated file with a header row. Rows come back
/// in file order. Invalid UTF-8 is replaced with U+FFFD and logged.
std::vector<EssayRecord> load_asap(const std::filesystem::path& path,
                                   const ColumnMap& columns = {},
                                   const PromptTable& table = PromptTable::asap());

/// Writes records with the default column names. Texts must not contain tabs
/// or line breaks, which the format cannot represent.
void write_asap(const std::filesystem::path& path, std::span<const EssayRecord> records);

std::vector<EssayRecord> records_for_prompt(std::span<const EssayRecord> records,
                                            int prompt_id);

struct PromptStats {
  int prompt_id = 0;
  std::map<int, std::int64_t> histogram;
  int highest_frequency_score = 0;
  std::int64_t n_lower = 0;   // score < highest_frequency_score
  std::int64_t n_higher = 0;  // score > highest_frequency_score
  std::int64_t total = 0;

  std::int64_t mode_count() const { return histogram.at(highest_frequency_score); }
  // The count printed as "lower" in the published statistics table, which
  // includes the essays sitting at the modal score.
  std::int64_t n_at_or_below() const { return n_lower + mode_count(); }
};

/// Histogram and modal-score split for one prompt. Ties between modal scores
/// resolve to the lowest score.
PromptStats compute_stats(std::span<const EssayRecord> records, int prompt_id);

std::map<int, PromptStats> compute_all_stats(std::span<const EssayRecord> records);

struct FoldAssignment {
  int fold_index = 0;
  std::vector<EssayId> train_ids;
  std::vector<EssayId> dev_ids;
  std::vector<EssayId> test_ids;

  bool operator==(const FoldAssignment&) const = default;
};

/// Score-stratified k-fold split. Fold i tests on bucket i, validates on
/// bucket (i+1) mod k and trains on the rest, so k=5 gives 60/20/20.
std::vector<FoldAssignment> make_folds(std::span<const EssayRecord> records, int k,
                                       std::uint64_t seed);

/// Partition file: {"0": {"train": [...], "dev": [...], "test": [...]}, ...}
std::vector<FoldAssignment> load_partitions(const std::filesystem::path& path);
void write_partitions(const std::filesystem::path& path,
                      std::span<const FoldAssignment> folds);

/// Throws unless each fold is pairwise disjoint and covers `records`, and the
/// test sets partition `records` across folds.
void check_partition(std::span<const FoldAssignment> folds,
                     std::span<const EssayRecord> records);

}  // namespace aesaug

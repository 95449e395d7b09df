#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aesaug/adjust.hpp"
#include "aesaug/backtranslate.hpp"
#include "aesaug/corpus.hpp"
#include "aesaug/features.hpp"
#include "aesaug/model.hpp"

namespace aesaug {

// One row of the results table: the original data, optionally doubled with
// back-translations scored by a rule plan.
struct ConditionConfig {
  std::string name = "Ori";
  std::vector<std::filesystem::path> augmentation;  // augmentation-set files
  std::optional<std::string> live_pivot;            // translate through the live backend
  std::string plan = "identity-all";
  std::optional<std::filesystem::path> plan_file;

  bool augmented() const { return !augmentation.empty() || live_pivot.has_value(); }
};

struct ExperimentConfig {
  std::filesystem::path corpus;
  ColumnMap columns;
  std::vector<int> prompts;
  std::vector<ConditionConfig> conditions{ConditionConfig{}};
  bool strict_constants = false;

  ModelConfig model;  // vocab_size, pooling_divisor and content_dim are set per fold
  std::optional<std::filesystem::path> embeddings;
  AdamHyper adam;
  std::size_t batch_size = 32;
  int epochs_original = 50;
  int epochs_augmented = 30;
  std::size_t min_count = 1;
  std::size_t max_vocab = 0;
  double alpha = 0.0;  // 0 selects 1/|V|
  Banding banding = Banding::kEqualWidth;
  bool augmented_dev = true;  // back-translations of dev essays join the dev set

  int k = 5;
  std::optional<std::filesystem::path> partitions_dir;  // holds folds_prompt<N>.json
  std::vector<int> fold_subset;                         // empty: run every fold
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  bool save_checkpoints = false;
  std::filesystem::path output_dir = "results";

  std::optional<HttpBackendConfig> live_backend;

  int epochs_for(const ConditionConfig& condition) const {
    return condition.augmented() ? epochs_augmented : epochs_original;
  }
  /// Throws Error("harness.config") on the first invalid field.
  void validate() const;
};

ExperimentConfig parse_experiment_config(const std::string& json_text);

/// Each override is "dotted.key=value", e.g. "model.cell_type=lstm" or
/// "prompts=[7,8]". Values parse as JSON and fall back to plain strings.
std::string apply_config_overrides(const std::string& json_text,
                                   std::span<const std::string> overrides);

ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        std::span<const std::string> overrides = {});

struct Instance {
  const EssayRecord* record = nullptr;
  bool augmented = false;
};

struct FoldData {
  std::vector<Instance> train, dev, test;
};

/// Test gets original essays only. Each back-translation follows its source
/// essay's split; dev back-translations are dropped unless `augmented_dev`.
FoldData assemble_fold(const FoldAssignment& fold, std::span<const EssayRecord> originals,
                       const AugmentedCorpus* augmentation, bool augmented_dev);

/// Throws Error("harness.leakage") if an augmented essay sits in test or in a
/// different split from its source essay.
void check_leakage(const FoldAssignment& fold, const FoldData& data);

struct FoldReport {
  int prompt_id = 0;
  std::string condition;
  int fold_index = 0;
  std::string status = "ok";  // "ok" or "failed"
  std::string error;
  bool augmented = false;
  int epochs_run = 0;
  std::vector<double> train_loss;
  std::vector<double> dev_qwk;
  int best_epoch = 0;  // 1-based, earliest epoch with the maximal dev QWK
  double best_dev_qwk = 0.0;
  double test_qwk = 0.0;
  std::size_t n_train = 0, n_train_augmented = 0;
  std::size_t n_dev = 0, n_dev_augmented = 0;
  std::size_t n_test = 0;
  std::size_t vocab_size = 0;
  int content_dim = 0;
  double pooling_divisor = 0.0;
  double seconds = 0.0;  // wall clock; kept out of the results files
};

struct FoldContext {
  const PromptSpec* spec = nullptr;
  std::span<const EssayRecord> originals;     // the prompt's essays
  const AugmentedCorpus* augmentation = nullptr;
  const std::map<std::string, std::vector<double>>* embedding_rows = nullptr;
  std::string condition = "Ori";
  std::optional<std::filesystem::path> checkpoint_path;
};

FoldReport train_eval_fold(const FoldAssignment& fold, const FoldContext& context,
                           const ExperimentConfig& config);

struct SummaryCell {
  double mean_test_qwk = 0.0;
  double mean_best_epoch = 0.0;
  int folds_ok = 0;
  int folds_failed = 0;
};

struct Summary {
  std::vector<int> prompts;
  std::vector<std::string> conditions;  // first row is the baseline
  std::map<std::pair<std::string, int>, SummaryCell> cells;
  int total_prompt_count = 8;
};

Summary summarize(std::span<const FoldReport> reports, std::vector<std::string> conditions,
                  std::vector<int> prompts, int total_prompt_count);

/// Sum of per-prompt improvements divided by `divisor`.
double average_improvement(std::span<const double> improvements, int divisor);

/// QWK x 100 to one decimal, e.g. 0.8372 -> "83.7".
std::string format_qwk(double qwk);

std::string render_summary_text(const Summary& summary);
std::string render_summary_csv(const Summary& summary);

struct ExperimentResult {
  std::vector<FoldReport> folds;
  Summary summary;
};

/// Runs every (prompt, condition, fold) job and writes
/// results/<prompt>/<condition>/<fold>.json, summary.csv and summary.txt
/// under config.output_dir. Failed folds are written with status "failed"
/// and reported by a final Error("harness.fold_failed").
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Rebuilds the summary from stored fold results.
ExperimentResult load_results(const std::filesystem::path& output_dir);
void write_summary(const std::filesystem::path& output_dir, const Summary& summary);

std::string fold_report_json(const FoldReport& report);
FoldReport parse_fold_report(const std::string& json_text);

std::string condition_slug(const std::string& name);

/// Tables of score ranges, modal scores and lower/higher counts per prompt.
std::string render_stats_text(const std::map<int, PromptStats>& stats, const PromptTable& table);
std::string render_stats_csv(const std::map<int, PromptStats>& stats, const PromptTable& table);

}  // namespace aesaug

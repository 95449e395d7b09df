#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aesaug/backtranslate.hpp"
#include "aesaug/corpus.hpp"

namespace aesaug {

int adjust_identity(int score);
/// min(max_score, score + v)
int adjust_up(int score, const PromptSpec& spec, int v);
/// max(min_score, score - v)
int adjust_down(int score, const PromptSpec& spec, int v);

enum class Direction { kIdentity, kUp, kDown };

// A condition on the original score. A missing threshold binds to the
// prompt's highest-frequency score when the plan is applied.
struct ScorePredicate {
  enum class Kind { kAlways, kGreater, kLessEqual };
  Kind kind = Kind::kAlways;
  std::optional<int> threshold;

  bool operator()(int score, const PromptStats& stats) const;
  int resolved_threshold(const PromptStats& stats) const;
  std::string to_string() const;  // "always", "score_gt:16", "score_le:mode", ...
  static ScorePredicate parse(const std::string& text);
};

struct AdjustmentRule {
  std::string name;
  ScorePredicate predicate;
  Direction direction = Direction::kIdentity;
  int v = 0;

  int apply(int score, const PromptSpec& spec) const;
};

// Per-prompt ordered rules; the first rule whose predicate holds decides the
// score, and an essay no rule matches keeps its original score. Prompts
// without an entry use `fallback`; without a fallback they are an error.
struct RulePlan {
  std::string name;
  std::map<int, std::vector<AdjustmentRule>> rules;
  std::optional<std::vector<AdjustmentRule>> fallback;

  const std::vector<AdjustmentRule>& rules_for(int prompt_id) const;
};

struct PlanOptions {
  // Pin thresholds to the published constants (16 for prompt 7, 40 for
  // prompt 8) instead of each prompt's observed highest-frequency score.
  bool strict_constants = false;
};

/// identity-all, eq4, eq4+eq5, eq2-all(v), eq3-all(v).
RulePlan builtin_plan(const std::string& name, const PlanOptions& options = {});
std::vector<std::string> builtin_plan_names();

/// {"name": "...", "prompts": {"8": [{"predicate": "score_gt:40",
///   "direction": "up", "v": 1}], "*": []}}
RulePlan load_rule_plan(const std::filesystem::path& path);
RulePlan parse_rule_plan(const std::string& json_text);

struct AugmentedEssay {
  EssayRecord record;  // essay_id is the source essay's id
  std::string pivot;
  int original_score = 0;
  std::string rule;  // name of the rule that fired, empty for identity fallback
  bool changed() const { return record.score != original_score; }
};

struct PromptAdjustmentSummary {
  std::size_t processed = 0;  // essays a rule fired on
  std::size_t changed = 0;    // essays whose score moved
  std::size_t total = 0;
};

struct AugmentedCorpus {
  std::vector<EssayRecord> originals;
  std::vector<AugmentedEssay> augmented;
  std::map<int, PromptAdjustmentSummary> summary;
};

/// Pairs each back-translation with its source essay. Throws if a source is
/// missing from `originals`.
std::vector<std::pair<EssayRecord, BackTranslationRecord>> pair_with_sources(
    std::span<const EssayRecord> originals, std::span<const BackTranslationRecord> bts);

AugmentedCorpus apply_rule_plan(
    std::span<const std::pair<EssayRecord, BackTranslationRecord>> pairs,
    const std::map<int, PromptStats>& stats, const RulePlan& plan,
    const PromptTable& table = PromptTable::asap());

}  // namespace aesaug

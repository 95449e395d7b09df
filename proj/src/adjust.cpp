#include "aesaug/adjust.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "aesaug/error.hpp"
#include "strings.hpp"

namespace aesaug {

namespace {

void require_in_range(int score, const PromptSpec& spec) {
  if (!spec.contains(score)) {
    throw Error("adjust.range", "score " + std::to_string(score) + " outside prompt " +
                                    std::to_string(spec.prompt_id) + " range " +
                                    std::to_string(spec.min_score) + "-" +
                                    std::to_string(spec.max_score));
  }
}

void require_offset(int v) {
  if (v < 0) throw Error("adjust.offset", "offset v must be non-negative");
}

AdjustmentRule make_rule(std::string name, ScorePredicate::Kind kind,
                         std::optional<int> threshold, Direction direction, int v) {
  return {std::move(name), {kind, threshold}, direction, v};
}

}  // namespace

int adjust_identity(int score) { return score; }

int adjust_up(int score, const PromptSpec& spec, int v) {
  require_in_range(score, spec);
  require_offset(v);
  return std::min(spec.max_score, score + v);
}

int adjust_down(int score, const PromptSpec& spec, int v) {
  require_in_range(score, spec);
  require_offset(v);
  return std::max(spec.min_score, score - v);
}

int ScorePredicate::resolved_threshold(const PromptStats& stats) const {
  return threshold.value_or(stats.highest_frequency_score);
}

bool ScorePredicate::operator()(int score, const PromptStats& stats) const {
  switch (kind) {
    case Kind::kAlways:
      return true;
    case Kind::kGreater:
      return score > resolved_threshold(stats);
    case Kind::kLessEqual:
      return score <= resolved_threshold(stats);
  }
  return false;
}

std::string ScorePredicate::to_string() const {
  const std::string t = threshold ? std::to_string(*threshold) : "mode";
  switch (kind) {
    case Kind::kAlways:
      return "always";
    case Kind::kGreater:
      return "score_gt:" + t;
    case Kind::kLessEqual:
      return "score_le:" + t;
  }
  return "always";
}

ScorePredicate ScorePredicate::parse(const std::string& text) {
  if (text == "always") return {};
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const auto head = text.substr(0, colon);
    const auto tail = text.substr(colon + 1);
    Kind kind;
    if (head == "score_gt") {
      kind = Kind::kGreater;
    } else if (head == "score_le") {
      kind = Kind::kLessEqual;
    } else {
      throw Error("adjust.plan", "unknown predicate '" + text + "'");
    }
    if (tail == "mode") return {kind, std::nullopt};
    if (auto n = detail::parse_int<int>(tail)) return {kind, *n};
  }
  throw Error("adjust.plan", "unknown predicate '" + text + "'");
}

int AdjustmentRule::apply(int score, const PromptSpec& spec) const {
  switch (direction) {
    case Direction::kIdentity:
      return adjust_identity(score);
    case Direction::kUp:
      return adjust_up(score, spec, v);
    case Direction::kDown:
      return adjust_down(score, spec, v);
  }
  return score;
}

const std::vector<AdjustmentRule>& RulePlan::rules_for(int prompt_id) const {
  auto it = rules.find(prompt_id);
  if (it != rules.end()) return it->second;
  if (fallback) return *fallback;
  throw Error("adjust.plan", "rule plan '" + name + "' has no rules for prompt " +
                                 std::to_string(prompt_id));
}

std::vector<std::string> builtin_plan_names() {
  return {"identity-all", "eq4", "eq4+eq5", "eq2-all(v)", "eq3-all(v)"};
}

RulePlan builtin_plan(const std::string& name, const PlanOptions& options) {
  using Kind = ScorePredicate::Kind;
  auto pinned = [&](int constant) -> std::optional<int> {
    return options.strict_constants ? std::optional<int>(constant) : std::nullopt;
  };

  RulePlan plan;
  plan.name = name;
  plan.fallback = std::vector<AdjustmentRule>{};
  if (name == "identity-all") return plan;
  if (name == "eq4" || name == "eq4+eq5") {
    plan.rules[7] = {make_rule("eq4", Kind::kGreater, pinned(16), Direction::kUp, 1)};
    plan.rules[8] = {make_rule("eq4", Kind::kGreater, pinned(40), Direction::kUp, 1)};
    if (name == "eq4+eq5") {
      plan.rules[8].push_back(make_rule("eq5", Kind::kLessEqual, pinned(40), Direction::kDown, 1));
    }
    return plan;
  }
  static const std::regex all_pattern(R"(eq([23])-all\((\d+)\))");
  std::smatch m;
  if (std::regex_match(name, m, all_pattern)) {
    const int v = std::stoi(m[2].str());
    const auto direction = m[1].str() == "2" ? Direction::kUp : Direction::kDown;
    plan.fallback = std::vector<AdjustmentRule>{
        make_rule("eq" + m[1].str(), Kind::kAlways, std::nullopt, direction, v)};
    return plan;
  }
  throw Error("adjust.plan", "unknown built-in plan '" + name + "'");
}

RulePlan parse_rule_plan(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error("adjust.plan", std::string("rule plan is not valid JSON: ") + e.what());
  }
  RulePlan plan;
  try {
    plan.name = doc.value("name", std::string("custom"));
    for (const auto& [key, list] : doc.at("prompts").items()) {
      std::vector<AdjustmentRule> rules;
      std::size_t i = 0;
      for (const auto& entry : list) {
        AdjustmentRule rule;
        rule.name = entry.value("name", plan.name + "#" + std::to_string(i++));
        rule.predicate = ScorePredicate::parse(entry.value("predicate", std::string("always")));
        const auto direction = entry.at("direction").get<std::string>();
        if (direction == "up") {
          rule.direction = Direction::kUp;
        } else if (direction == "down") {
          rule.direction = Direction::kDown;
        } else if (direction == "identity") {
          rule.direction = Direction::kIdentity;
        } else {
          throw Error("adjust.plan", "unknown direction '" + direction + "'");
        }
        rule.v = entry.value("v", 0);
        require_offset(rule.v);
        rules.push_back(std::move(rule));
      }
      if (key == "*") {
        plan.fallback = std::move(rules);
      } else if (auto prompt = detail::parse_int<int>(key)) {
        plan.rules[*prompt] = std::move(rules);
      } else {
        throw Error("adjust.plan", "prompt key '" + key + "' is neither an integer nor '*'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("adjust.plan", std::string("malformed rule plan: ") + e.what());
  }
  return plan;
}

RulePlan load_rule_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("adjust.io", "cannot open rule plan " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_rule_plan(buffer.str());
}

std::vector<std::pair<EssayRecord, BackTranslationRecord>> pair_with_sources(
    std::span<const EssayRecord> originals, std::span<const BackTranslationRecord> bts) {
  std::unordered_map<EssayId, const EssayRecord*> by_id;
  for (const auto& r : originals) by_id.emplace(r.essay_id, &r);
  std::vector<std::pair<EssayRecord, BackTranslationRecord>> pairs;
  pairs.reserve(bts.size());
  for (const auto& bt : bts) {
    auto it = by_id.find(bt.essay_id);
    if (it == by_id.end()) {
      throw Error("adjust.unknown_source",
                  "back-translation of unknown essay " + std::to_string(bt.essay_id));
    }
    pairs.emplace_back(*it->second, bt);
  }
  return pairs;
}

AugmentedCorpus apply_rule_plan(
    std::span<const std::pair<EssayRecord, BackTranslationRecord>> pairs,
    const std::map<int, PromptStats>& stats, const RulePlan& plan, const PromptTable& table) {
  AugmentedCorpus corpus;
  std::unordered_map<EssayId, bool> seen_source;
  for (const auto& [source, bt] : pairs) {
    if (source.essay_id != bt.essay_id) {
      throw Error("adjust.pairing", "back-translation of essay " + std::to_string(bt.essay_id) +
                                        " paired with essay " + std::to_string(source.essay_id));
    }
    const auto& spec = table.at(source.prompt_id);
    const auto& rules = plan.rules_for(source.prompt_id);
    auto stats_it = stats.find(source.prompt_id);
    if (stats_it == stats.end()) {
      throw Error("adjust.stats", "no statistics for prompt " + std::to_string(source.prompt_id));
    }

    AugmentedEssay essay;
    essay.record = {source.essay_id, source.prompt_id, bt.text, source.score};
    essay.pivot = bt.pivot;
    essay.original_score = source.score;
    for (const auto& rule : rules) {
      if (rule.predicate(source.score, stats_it->second)) {
        essay.record.score = rule.apply(source.score, spec);
        essay.rule = rule.name;
        break;
      }
    }

    auto& summary = corpus.summary[source.prompt_id];
    ++summary.total;
    if (!essay.rule.empty()) ++summary.processed;
    if (essay.changed()) ++summary.changed;

    if (seen_source.emplace(source.essay_id, true).second) corpus.originals.push_back(source);
    corpus.augmented.push_back(std::move(essay));
  }
  return corpus;
}

}  // namespace aesaug

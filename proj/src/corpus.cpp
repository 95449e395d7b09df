#include "aesaug/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "aesaug/error.hpp"
#include "strings.hpp"
#include "utf8.hpp"

namespace aesaug {

PromptTable PromptTable::asap() {
  PromptTable table;
  table.add({1, 2, 12});
  table.add({2, 1, 6});
  table.add({3, 0, 3});
  table.add({4, 0, 3});
  table.add({5, 0, 4});
  table.add({6, 0, 4});
  table.add({7, 0, 30});
  table.add({8, 0, 60});
  return table;
}

void PromptTable::add(PromptSpec spec) {
  if (spec.min_score >= spec.max_score) {
    throw Error("corpus.prompt_spec", "prompt " + std::to_string(spec.prompt_id) +
                                          ": min_score must be below max_score");
  }
  specs_[spec.prompt_id] = spec;
}

const PromptSpec& PromptTable::at(int prompt_id) const {
  auto it = specs_.find(prompt_id);
  if (it == specs_.end()) {
    throw Error("corpus.unknown_prompt", "unknown prompt " + std::to_string(prompt_id));
  }
  return it->second;
}

std::vector<int> PromptTable::prompt_ids() const {
  std::vector<int> ids;
  for (const auto& [id, _] : specs_) ids.push_back(id);
  return ids;
}

PromptSpec prompt_spec(int prompt_id) {
  static const PromptTable table = PromptTable::asap();
  return table.at(prompt_id);
}

std::vector<EssayRecord> load_asap(const std::filesystem::path& path,
                                   const ColumnMap& columns, const PromptTable& table) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("corpus.io", "cannot open corpus file " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw Error("corpus.format", path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  detail::sanitize_utf8(line);

  const auto header = detail::split(line, '\t');
  auto column_index = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (detail::trim(header[i]) == name) return i;
    }
    throw Error("corpus.column", path.string() + ": missing column '" + name + "'");
  };
  const std::size_t id_col = column_index(columns.essay_id);
  const std::size_t prompt_col = column_index(columns.prompt_id);
  const std::size_t text_col = column_index(columns.text);
  const std::size_t score_col = column_index(columns.score);
  const std::size_t needed = std::max({id_col, prompt_col, text_col, score_col}) + 1;

  std::vector<EssayRecord> records;
  std::unordered_set<EssayId> seen;
  std::size_t row = 1;
  std::size_t replaced_total = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    replaced_total += detail::sanitize_utf8(line);

    const auto fields = detail::split(line, '\t');
    const std::string where = path.string() + ":" + std::to_string(row);
    if (fields.size() < needed) {
      throw Error("corpus.format", where + ": expected at least " + std::to_string(needed) +
                                       " fields, found " + std::to_string(fields.size()));
    }
    auto parse_field = [&]<typename Int>(std::size_t col, const std::string& name, Int) {
      auto value = detail::parse_int<Int>(fields[col]);
      if (!value) {
        throw Error("corpus.column", where + ": cannot parse " + name + " '" +
                                         std::string(fields[col]) + "'");
      }
      return *value;
    };

    EssayRecord record;
    record.essay_id = parse_field(id_col, columns.essay_id, EssayId{});
    record.prompt_id = parse_field(prompt_col, columns.prompt_id, int{});
    record.score = parse_field(score_col, columns.score, int{});
    record.text = std::string(detail::trim(fields[text_col]));

    if (!table.contains(record.prompt_id)) {
      throw Error("corpus.unknown_prompt",
                  where + ": unknown prompt " + std::to_string(record.prompt_id));
    }
    const auto& spec = table.at(record.prompt_id);
    if (!spec.contains(record.score)) {
      throw Error("corpus.range", where + ": score " + std::to_string(record.score) +
                                      " outside prompt " + std::to_string(spec.prompt_id) +
                                      " range " + std::to_string(spec.min_score) + "-" +
                                      std::to_string(spec.max_score));
    }
    if (record.text.empty()) throw Error("corpus.empty_text", where + ": empty essay text");
    if (!seen.insert(record.essay_id).second) {
      throw Error("corpus.duplicate",
                  where + ": duplicate essay_id " + std::to_string(record.essay_id));
    }
    records.push_back(std::move(record));
  }
  if (replaced_total != 0) {
    spdlog::warn("{}: replaced {} invalid UTF-8 byte(s) with U+FFFD", path.string(),
                 replaced_total);
  }
  return records;
}

void write_asap(const std::filesystem::path& path, std::span<const EssayRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("corpus.io", "cannot write " + path.string());
  const ColumnMap columns;
  out << columns.essay_id << '\t' << columns.prompt_id << '\t' << columns.text << '\t'
      << columns.score << '\n';
  for (const auto& r : records) {
    if (r.text.find_first_of("\t\r\n") != std::string::npos) {
      throw Error("corpus.format", "essay " + std::to_string(r.essay_id) +
                                       " contains a tab or line break");
    }
    out << r.essay_id << '\t' << r.prompt_id << '\t' << r.text << '\t' << r.score << '\n';
  }
  if (!out) throw Error("corpus.io", "write failed for " + path.string());
}

std::vector<EssayRecord> records_for_prompt(std::span<const EssayRecord> records,
                                            int prompt_id) {
  std::vector<EssayRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [&](const EssayRecord& r) { return r.prompt_id == prompt_id; });
  return out;
}

PromptStats compute_stats(std::span<const EssayRecord> records, int prompt_id) {
  PromptStats stats;
  stats.prompt_id = prompt_id;
  for (const auto& r : records) {
    if (r.prompt_id != prompt_id) continue;
    ++stats.histogram[r.score];
    ++stats.total;
  }
  if (stats.total == 0) {
    throw Error("corpus.empty_prompt", "no essays for prompt " + std::to_string(prompt_id));
  }
  // std::map iterates ascending, so the first maximum is the lowest tied score.
  std::int64_t best = -1;
  for (const auto& [score, count] : stats.histogram) {
    if (count > best) {
      best = count;
      stats.highest_frequency_score = score;
    }
  }
  for (const auto& [score, count] : stats.histogram) {
    if (score < stats.highest_frequency_score) stats.n_lower += count;
    if (score > stats.highest_frequency_score) stats.n_higher += count;
  }
  return stats;
}

std::map<int, PromptStats> compute_all_stats(std::span<const EssayRecord> records) {
  std::set<int> prompts;
  for (const auto& r : records) prompts.insert(r.prompt_id);
  std::map<int, PromptStats> out;
  for (int p : prompts) out.emplace(p, compute_stats(records, p));
  return out;
}

std::vector<FoldAssignment> make_folds(std::span<const EssayRecord> records, int k,
                                       std::uint64_t seed) {
  if (k < 3) throw Error("corpus.folds", "fold count must be at least 3");

  std::map<std::pair<int, int>, std::vector<EssayId>> strata;
  std::map<int, std::size_t> per_prompt;
  for (const auto& r : records) {
    strata[{r.prompt_id, r.score}].push_back(r.essay_id);
    ++per_prompt[r.prompt_id];
  }
  if (records.empty()) throw Error("corpus.folds", "no records to split");
  for (const auto& [prompt, count] : per_prompt) {
    if (count < static_cast<std::size_t>(k)) {
      throw Error("corpus.folds", "prompt " + std::to_string(prompt) + " has " +
                                      std::to_string(count) + " essays, fewer than k=" +
                                      std::to_string(k));
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<std::vector<EssayId>> buckets(static_cast<std::size_t>(k));
  std::size_t offset = 0;
  for (auto& [key, ids] : strata) {
    std::sort(ids.begin(), ids.end());
    std::shuffle(ids.begin(), ids.end(), rng);
    for (auto id : ids) buckets[offset++ % buckets.size()].push_back(id);
  }
  for (auto& b : buckets) std::sort(b.begin(), b.end());

  std::vector<FoldAssignment> folds;
  for (int i = 0; i < k; ++i) {
    FoldAssignment fold;
    fold.fold_index = i;
    fold.test_ids = buckets[static_cast<std::size_t>(i)];
    fold.dev_ids = buckets[static_cast<std::size_t>((i + 1) % k)];
    for (int j = 0; j < k; ++j) {
      if (j == i || j == (i + 1) % k) continue;
      const auto& b = buckets[static_cast<std::size_t>(j)];
      fold.train_ids.insert(fold.train_ids.end(), b.begin(), b.end());
    }
    std::sort(fold.train_ids.begin(), fold.train_ids.end());
    folds.push_back(std::move(fold));
  }
  return folds;
}

std::vector<FoldAssignment> load_partitions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("corpus.io", "cannot open partition file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error("corpus.partition", path.string() + ": " + e.what());
  }
  if (!doc.is_object() || doc.empty()) {
    throw Error("corpus.partition", path.string() + ": expected a non-empty JSON object");
  }

  std::vector<FoldAssignment> folds(doc.size());
  std::vector<bool> filled(doc.size(), false);
  for (const auto& [key, value] : doc.items()) {
    auto index = detail::parse_int<int>(key);
    if (!index || *index < 0 || static_cast<std::size_t>(*index) >= doc.size() ||
        filled[static_cast<std::size_t>(*index)]) {
      throw Error("corpus.partition",
                  path.string() + ": fold keys must be 0.." + std::to_string(doc.size() - 1));
    }
    auto& fold = folds[static_cast<std::size_t>(*index)];
    filled[static_cast<std::size_t>(*index)] = true;
    fold.fold_index = *index;
    auto read_ids = [&](const char* name, std::vector<EssayId>& ids) {
      if (!value.is_object() || !value.contains(name) || !value[name].is_array()) {
        throw Error("corpus.partition", path.string() + ": fold " + key + " lacks array '" +
                                            name + "'");
      }
      for (const auto& id : value[name]) {
        if (!id.is_number_integer()) {
          throw Error("corpus.partition",
                      path.string() + ": fold " + key + " has a non-integer id in " + name);
        }
        ids.push_back(id.get<EssayId>());
      }
    };
    read_ids("train", fold.train_ids);
    read_ids("dev", fold.dev_ids);
    read_ids("test", fold.test_ids);

    std::unordered_set<EssayId> seen;
    for (const auto* ids : {&fold.train_ids, &fold.dev_ids, &fold.test_ids}) {
      for (auto id : *ids) {
        if (!seen.insert(id).second) {
          throw Error("corpus.partition", path.string() + ": essay " + std::to_string(id) +
                                              " appears twice in fold " + key);
        }
      }
    }
  }
  return folds;
}

void write_partitions(const std::filesystem::path& path,
                      std::span<const FoldAssignment> folds) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (const auto& fold : folds) {
    doc[std::to_string(fold.fold_index)] = {
        {"train", fold.train_ids}, {"dev", fold.dev_ids}, {"test", fold.test_ids}};
  }
  std::ofstream out(path);
  if (!out) throw Error("corpus.io", "cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

void check_partition(std::span<const FoldAssignment> folds,
                     std::span<const EssayRecord> records) {
  std::unordered_set<EssayId> all;
  for (const auto& r : records) all.insert(r.essay_id);

  std::unordered_map<EssayId, int> test_count;
  for (const auto& fold : folds) {
    std::unordered_set<EssayId> seen;
    for (const auto* ids : {&fold.train_ids, &fold.dev_ids, &fold.test_ids}) {
      for (auto id : *ids) {
        if (!all.count(id)) {
          throw Error("corpus.partition", "fold " + std::to_string(fold.fold_index) +
                                              " references unknown essay " +
                                              std::to_string(id));
        }
        if (!seen.insert(id).second) {
          throw Error("corpus.partition", "essay " + std::to_string(id) +
                                              " appears twice in fold " +
                                              std::to_string(fold.fold_index));
        }
      }
    }
    if (seen.size() != all.size()) {
      throw Error("corpus.partition",
                  "fold " + std::to_string(fold.fold_index) + " does not cover the corpus");
    }
    for (auto id : fold.test_ids) ++test_count[id];
  }
  for (auto id : all) {
    auto it = test_count.find(id);
    if (it == test_count.end() || it->second != 1) {
      throw Error("corpus.partition",
                  "essay " + std::to_string(id) + " is not tested in exactly one fold");
    }
  }
}

}  // namespace aesaug

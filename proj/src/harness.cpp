#include "aesaug/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "aesaug/checkpoint.hpp"
#include "aesaug/error.hpp"
#include "aesaug/metrics.hpp"
#include "aesaug/textprep.hpp"

namespace aesaug {

namespace {

using json = nlohmann::ordered_json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("harness.io", "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("harness.io", "cannot write " + path.string());
  out << content;
}

std::uint64_t fold_seed(std::uint64_t seed, int prompt, int fold) {
  // splitmix64 over the job coordinates
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(prompt * 131 + fold + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error("harness.config", msg); };
  if (prompts.empty()) fail("no prompts selected");
  if (conditions.empty()) fail("no conditions configured");
  if (epochs_original < 1 || epochs_augmented < 1) fail("epoch budgets must be at least 1");
  if (k < 3) fail("k must be at least 3");
  if (batch_size == 0) fail("batch_size must be positive");
  if (workers == 0) fail("workers must be positive");
  if (corpus.empty()) fail("corpus path is required");
  if (!std::filesystem::exists(corpus)) fail("corpus " + corpus.string() + " does not exist");
  if (embeddings && !std::filesystem::exists(*embeddings)) {
    fail("embeddings " + embeddings->string() + " do not exist");
  }
  if (partitions_dir && !std::filesystem::is_directory(*partitions_dir)) {
    fail("partition directory " + partitions_dir->string() + " does not exist");
  }
  for (int f : fold_subset) {
    if (f < 0 || f >= k) fail("fold index " + std::to_string(f) + " outside 0.." + std::to_string(k - 1));
  }
  std::set<std::string> slugs;
  for (const auto& c : conditions) {
    if (!slugs.insert(condition_slug(c.name)).second) {
      fail("condition names '" + c.name + "' collide after slugging");
    }
    for (const auto& f : c.augmentation) {
      if (!std::filesystem::exists(f)) fail("augmentation set " + f.string() + " does not exist");
    }
    if (c.plan_file && !std::filesystem::exists(*c.plan_file)) {
      fail("rule plan " + c.plan_file->string() + " does not exist");
    }
    if (c.live_pivot && !live_backend) fail("condition '" + c.name + "' needs a live backend");
  }
  ModelConfig probe = model;
  probe.vocab_size = 2;
  probe.validate();
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  ExperimentConfig c;
  try {
    const auto j = json::parse(json_text);
    c.corpus = j.at("corpus").get<std::string>();
    if (j.contains("columns")) {
      const auto& cols = j["columns"];
      c.columns.essay_id = cols.value("essay_id", c.columns.essay_id);
      c.columns.prompt_id = cols.value("prompt_id", c.columns.prompt_id);
      c.columns.text = cols.value("text", c.columns.text);
      c.columns.score = cols.value("score", c.columns.score);
    }
    c.prompts = j.value("prompts", std::vector<int>{});
    if (j.contains("conditions")) {
      c.conditions.clear();
      for (const auto& cj : j["conditions"]) {
        ConditionConfig cond;
        cond.name = cj.at("name").get<std::string>();
        for (const auto& f : cj.value("augmentation", std::vector<std::string>{})) {
          cond.augmentation.emplace_back(f);
        }
        if (cj.contains("live_pivot")) cond.live_pivot = cj["live_pivot"].get<std::string>();
        cond.plan = cj.value("plan", cond.plan);
        if (cj.contains("plan_file")) cond.plan_file = cj["plan_file"].get<std::string>();
        c.conditions.push_back(std::move(cond));
      }
    }
    c.strict_constants = j.value("strict_constants", c.strict_constants);
    if (j.contains("model")) {
      const auto& m = j["model"];
      c.model.cell_type = parse_cell_type(m.value("cell_type", std::string("gru")));
      c.model.cell_size = m.value("cell_size", c.model.cell_size);
      c.model.embed_dim = m.value("embed_dim", c.model.embed_dim);
      c.model.use_content_features = m.value("use_content_features", false);
      c.model.max_seq_len = m.value("max_seq_len", c.model.max_seq_len);
      c.model.init_scale = m.value("init_scale", c.model.init_scale);
      c.model.embedding_mode = m.value("frozen_embeddings", false) ? EmbeddingMode::kFrozen
                                                                   : EmbeddingMode::kFineTune;
    }
    if (j.contains("embeddings")) c.embeddings = j["embeddings"].get<std::string>();
    if (j.contains("adam")) {
      const auto& a = j["adam"];
      c.adam.learning_rate = a.value("learning_rate", c.adam.learning_rate);
      c.adam.epsilon = a.value("epsilon", c.adam.epsilon);
      c.adam.beta1 = a.value("beta1", c.adam.beta1);
      c.adam.beta2 = a.value("beta2", c.adam.beta2);
    }
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs_original = j.value("epochs_original", c.epochs_original);
    c.epochs_augmented = j.value("epochs_augmented", c.epochs_augmented);
    c.min_count = j.value("min_count", c.min_count);
    c.max_vocab = j.value("max_vocab", c.max_vocab);
    c.alpha = j.value("alpha", c.alpha);
    const auto banding = j.value("banding", std::string("equal_width"));
    if (banding == "equal_width") {
      c.banding = Banding::kEqualWidth;
    } else if (banding == "tertile") {
      c.banding = Banding::kTertile;
    } else {
      throw Error("harness.config", "unknown banding '" + banding + "'");
    }
    c.augmented_dev = j.value("augmented_dev", c.augmented_dev);
    c.k = j.value("k", c.k);
    if (j.contains("partitions_dir")) c.partitions_dir = j["partitions_dir"].get<std::string>();
    c.fold_subset = j.value("folds", std::vector<int>{});
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    c.save_checkpoints = j.value("save_checkpoints", c.save_checkpoints);
    c.output_dir = j.value("output_dir", std::string("results"));
    if (j.contains("live_backend")) {
      const auto& b = j["live_backend"];
      HttpBackendConfig hb;
      hb.endpoint = b.at("endpoint").get<std::string>();
      hb.token_env = b.value("token_env", hb.token_env);
      hb.auth_header = b.value("auth_header", hb.auth_header);
      hb.auth_prefix = b.value("auth_prefix", hb.auth_prefix);
      hb.max_chars = b.value("max_chars", hb.max_chars);
      hb.requests_per_second = b.value("requests_per_second", hb.requests_per_second);
      hb.languages = b.value("languages", hb.languages);
      c.live_backend = std::move(hb);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("harness.config", std::string("malformed experiment config: ") + e.what());
  }
  return c;
}

std::string apply_config_overrides(const std::string& json_text,
                                   std::span<const std::string> overrides) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error("harness.config", std::string("malformed experiment config: ") + e.what());
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error("harness.config", "override '" + o + "' is not key=value");
    }
    const auto value_text = o.substr(eq + 1);
    json value = json::parse(value_text, nullptr, false);
    if (value.is_discarded()) value = value_text;
    json* node = &doc;
    std::string_view key(o.data(), eq);
    while (true) {
      const auto dot = key.find('.');
      const std::string part(key.substr(0, dot));
      if (node->is_null()) *node = json::object();
      if (!node->is_object()) throw Error("harness.config", "override '" + o + "' descends into a non-object");
      node = &(*node)[part];
      if (dot == std::string_view::npos) break;
      key.remove_prefix(dot + 1);
    }
    *node = std::move(value);
  }
  return doc.dump();
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        std::span<const std::string> overrides) {
  auto config = parse_experiment_config(apply_config_overrides(read_file(path), overrides));
  // Relative paths inside the config resolve against its directory.
  const auto base = path.parent_path();
  auto rebase = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  rebase(config.corpus);
  if (config.embeddings) rebase(*config.embeddings);
  if (config.partitions_dir) rebase(*config.partitions_dir);
  for (auto& c : config.conditions) {
    for (auto& f : c.augmentation) rebase(f);
    if (c.plan_file) rebase(*c.plan_file);
  }
  return config;
}

FoldData assemble_fold(const FoldAssignment& fold, std::span<const EssayRecord> originals,
                       const AugmentedCorpus* augmentation, bool augmented_dev) {
  enum class Split { kTrain, kDev, kTest };
  std::unordered_map<EssayId, Split> split_of;
  for (auto id : fold.train_ids) split_of[id] = Split::kTrain;
  for (auto id : fold.dev_ids) split_of[id] = Split::kDev;
  for (auto id : fold.test_ids) split_of[id] = Split::kTest;

  FoldData data;
  auto place = [&](Split split, const EssayRecord* record, bool augmented) {
    switch (split) {
      case Split::kTrain:
        data.train.push_back({record, augmented});
        break;
      case Split::kDev:
        data.dev.push_back({record, augmented});
        break;
      case Split::kTest:
        data.test.push_back({record, augmented});
        break;
    }
  };
  for (const auto& r : originals) {
    auto it = split_of.find(r.essay_id);
    if (it == split_of.end()) {
      throw Error("harness.fold", "essay " + std::to_string(r.essay_id) + " is not assigned in fold " +
                                      std::to_string(fold.fold_index));
    }
    place(it->second, &r, false);
  }
  if (augmentation) {
    for (const auto& a : augmentation->augmented) {
      auto it = split_of.find(a.record.essay_id);
      if (it == split_of.end() || it->second == Split::kTest) continue;
      if (it->second == Split::kDev && !augmented_dev) continue;
      place(it->second, &a.record, true);
    }
  }
  return data;
}

void check_leakage(const FoldAssignment& fold, const FoldData& data) {
  const std::set<EssayId> train(fold.train_ids.begin(), fold.train_ids.end());
  const std::set<EssayId> dev(fold.dev_ids.begin(), fold.dev_ids.end());
  const std::string where = "fold " + std::to_string(fold.fold_index) + ": ";
  for (const auto& inst : data.test) {
    if (inst.augmented) {
      throw Error("harness.leakage", where + "back-translation of essay " +
                                         std::to_string(inst.record->essay_id) + " in the test set");
    }
  }
  auto check_split = [&](const std::vector<Instance>& split, const std::set<EssayId>& ids,
                         const char* name) {
    for (const auto& inst : split) {
      if (!ids.count(inst.record->essay_id)) {
        throw Error("harness.leakage", where + "essay " + std::to_string(inst.record->essay_id) +
                                           (inst.augmented ? " (back-translation)" : "") +
                                           " does not belong to the " + name + " split");
      }
    }
  };
  check_split(data.train, train, "train");
  check_split(data.dev, dev, "dev");
}

FoldReport train_eval_fold(const FoldAssignment& fold, const FoldContext& ctx,
                           const ExperimentConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  const auto& spec = *ctx.spec;
  FoldReport report;
  report.prompt_id = spec.prompt_id;
  report.condition = ctx.condition;
  report.fold_index = fold.fold_index;
  report.augmented = ctx.augmentation != nullptr;

  const auto data = assemble_fold(fold, ctx.originals, ctx.augmentation, config.augmented_dev);
  check_leakage(fold, data);
  auto count_aug = [](const std::vector<Instance>& v) {
    return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](const Instance& i) { return i.augmented; }));
  };
  report.n_train = data.train.size();
  report.n_train_augmented = count_aug(data.train);
  report.n_dev = data.dev.size();
  report.n_dev_augmented = count_aug(data.dev);
  report.n_test = data.test.size();
  if (data.train.empty() || data.dev.empty() || data.test.empty()) {
    throw Error("harness.fold", "fold " + std::to_string(fold.fold_index) + " has an empty split");
  }

  auto tokenize_all = [](const std::vector<Instance>& split) {
    std::vector<TokenSequence> out;
    out.reserve(split.size());
    for (const auto& inst : split) out.push_back(tokenize(*inst.record));
    return out;
  };
  const auto train_tokens = tokenize_all(data.train);
  const auto dev_tokens = tokenize_all(data.dev);
  const auto test_tokens = tokenize_all(data.test);

  const auto vocab = build_vocab(train_tokens, config.min_count, config.max_vocab);
  const double alpha = config.alpha > 0.0 ? config.alpha : 1.0 / static_cast<double>(vocab.size());

  ModelConfig model = config.model;
  model.vocab_size = vocab.size();
  model.seed = fold_seed(config.seed, spec.prompt_id, fold.fold_index);

  // Pooling divisor and level distributions come from original training essays.
  std::vector<LabeledTokens> train_originals;
  double length_sum = 0.0;
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    if (data.train[i].augmented) continue;
    train_originals.push_back({data.train[i].record, &train_tokens[i]});
    length_sum += static_cast<double>(
        std::min(train_tokens[i].tokens.size(), static_cast<std::size_t>(model.max_seq_len)));
  }
  model.pooling_divisor = std::max(1.0, length_sum / static_cast<double>(train_originals.size()));

  std::optional<LevelPartition> levels;
  if (model.use_content_features) {
    levels = partition_levels(train_originals, spec, vocab, alpha, config.banding);
    model.content_dim = static_cast<int>(levels->levels.size());
    if (levels->degenerate) {
      spdlog::warn("prompt {} fold {}: only {} score level(s) in training data", spec.prompt_id,
                   fold.fold_index, levels->levels.size());
    }
  }
  report.vocab_size = vocab.size();
  report.content_dim = model.use_content_features ? model.content_dim : 0;
  report.pooling_divisor = model.pooling_divisor;

  auto make_examples = [&](const std::vector<Instance>& split,
                           const std::vector<TokenSequence>& tokens) {
    std::vector<Example> out;
    out.reserve(split.size());
    for (std::size_t i = 0; i < split.size(); ++i) {
      Example e;
      e.tokens = vocab.encode(tokens[i].tokens);
      if (e.tokens.empty()) e.tokens.push_back(Vocabulary::kUnk);
      if (levels) {
        e.content = content_features(word_distribution(tokens[i].tokens, vocab, alpha), *levels);
      }
      e.target = normalize_score(split[i].record->score, spec);
      out.push_back(std::move(e));
    }
    return out;
  };
  const auto train_examples = make_examples(data.train, train_tokens);
  const auto dev_examples = make_examples(data.dev, dev_tokens);
  const auto test_examples = make_examples(data.test, test_tokens);

  std::optional<EmbeddingMatrix> pretrained;
  if (ctx.embedding_rows) {
    EmbeddingMatrix m;
    m.dim = model.embed_dim;
    m.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(vocab.size()), model.embed_dim);
    for (std::size_t i = 2; i < vocab.size(); ++i) {
      auto it = ctx.embedding_rows->find(vocab.token(i));
      if (it == ctx.embedding_rows->end()) continue;
      for (int d = 0; d < model.embed_dim; ++d) {
        m.values(static_cast<Eigen::Index>(i), d) = it->second[static_cast<std::size_t>(d)];
      }
    }
    pretrained = std::move(m);
  }

  Parameters params = init_parameters(model, pretrained ? &*pretrained : nullptr);
  AdamState adam = AdamState::zeros_like(model);
  std::mt19937_64 rng(model.seed + 1);

  auto qwk_of = [&](const std::vector<Example>& examples, const std::vector<Instance>& split,
                    const Parameters& p) {
    const auto scores = predict(examples, p, model);
    std::vector<int> predicted, actual;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      predicted.push_back(denormalize_score(scores[i], spec));
      actual.push_back(split[i].record->score);
    }
    return qwk(predicted, actual, spec.min_score, spec.max_score);
  };

  const int epochs = ctx.augmentation ? config.epochs_augmented : config.epochs_original;
  Parameters best = params;
  report.best_dev_qwk = -2.0;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    double epoch_loss = 0.0;
    try {
      epoch_loss = train_epoch(train_examples, params, adam, model, config.adam, config.batch_size, rng);
    } catch (const Error& e) {
      throw Error("harness.non_finite", "prompt " + std::to_string(spec.prompt_id) + " fold " +
                                            std::to_string(fold.fold_index) + " epoch " +
                                            std::to_string(epoch) + ": " + e.what());
    }
    report.train_loss.push_back(epoch_loss);
    const double dev = qwk_of(dev_examples, data.dev, params);
    report.dev_qwk.push_back(dev);
    if (dev > report.best_dev_qwk) {
      report.best_dev_qwk = dev;
      report.best_epoch = epoch;
      best = params;
    }
  }
  report.epochs_run = epochs;
  report.test_qwk = qwk_of(test_examples, data.test, best);

  if (ctx.checkpoint_path) {
    Checkpoint cp{model, best, adam, vocab.hash(), vocab.tokens(), levels};
    std::filesystem::create_directories(ctx.checkpoint_path->parent_path());
    save_checkpoint(*ctx.checkpoint_path, cp);
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

std::string condition_slug(const std::string& name) {
  std::string slug;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') {
      slug += c;
    } else if (c == '+') {
      if (!slug.empty() && slug.back() != '_') slug += '_';
      slug += "plus_";
    } else if (!slug.empty() && slug.back() != '_') {
      slug += '_';
    }
  }
  while (!slug.empty() && slug.back() == '_') slug.pop_back();
  return slug.empty() ? "condition" : slug;
}

std::string fold_report_json(const FoldReport& r) {
  json j;
  j["prompt"] = r.prompt_id;
  j["condition"] = r.condition;
  j["fold"] = r.fold_index;
  j["status"] = r.status;
  if (!r.error.empty()) j["error"] = r.error;
  j["augmented"] = r.augmented;
  j["epochs_run"] = r.epochs_run;
  j["best_epoch"] = r.best_epoch;
  j["best_dev_qwk"] = r.best_dev_qwk;
  j["test_qwk"] = r.test_qwk;
  j["dev_qwk"] = r.dev_qwk;
  j["train_loss"] = r.train_loss;
  j["sizes"] = {{"train", r.n_train},
                {"train_augmented", r.n_train_augmented},
                {"dev", r.n_dev},
                {"dev_augmented", r.n_dev_augmented},
                {"test", r.n_test}};
  j["vocab_size"] = r.vocab_size;
  j["content_dim"] = r.content_dim;
  j["pooling_divisor"] = r.pooling_divisor;
  return j.dump(1) + "\n";
}

FoldReport parse_fold_report(const std::string& text) {
  FoldReport r;
  try {
    const auto j = json::parse(text);
    r.prompt_id = j.at("prompt").get<int>();
    r.condition = j.at("condition").get<std::string>();
    r.fold_index = j.at("fold").get<int>();
    r.status = j.at("status").get<std::string>();
    r.error = j.value("error", std::string{});
    r.augmented = j.value("augmented", false);
    r.epochs_run = j.value("epochs_run", 0);
    r.best_epoch = j.value("best_epoch", 0);
    r.best_dev_qwk = j.value("best_dev_qwk", 0.0);
    r.test_qwk = j.value("test_qwk", 0.0);
    r.dev_qwk = j.value("dev_qwk", std::vector<double>{});
    r.train_loss = j.value("train_loss", std::vector<double>{});
    if (j.contains("sizes")) {
      const auto& s = j["sizes"];
      r.n_train = s.value("train", std::size_t{0});
      r.n_train_augmented = s.value("train_augmented", std::size_t{0});
      r.n_dev = s.value("dev", std::size_t{0});
      r.n_dev_augmented = s.value("dev_augmented", std::size_t{0});
      r.n_test = s.value("test", std::size_t{0});
    }
    r.vocab_size = j.value("vocab_size", std::size_t{0});
    r.content_dim = j.value("content_dim", 0);
    r.pooling_divisor = j.value("pooling_divisor", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw Error("harness.results", std::string("malformed fold result: ") + e.what());
  }
  return r;
}

namespace {

struct PreparedCondition {
  ConditionConfig config;
  std::map<int, AugmentedCorpus> by_prompt;  // empty for the original-data condition
};

std::map<std::string, std::vector<double>> load_embedding_rows(
    const std::filesystem::path& path, int dim, const std::vector<TokenSequence>& corpus) {
  const auto vocab = build_vocab(corpus, 1);
  const auto loaded = load_embeddings(path, vocab, dim);
  std::set<std::string> missing(loaded.report.vocab_missing.begin(),
                                loaded.report.vocab_missing.end());
  std::map<std::string, std::vector<double>> rows;
  for (std::size_t i = 2; i < vocab.size(); ++i) {
    if (missing.count(vocab.token(i))) continue;
    const auto row = loaded.matrix.values.row(static_cast<Eigen::Index>(i));
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (int d = 0; d < dim; ++d) v[static_cast<std::size_t>(d)] = row(d);
    rows.emplace(vocab.token(i), std::move(v));
  }
  spdlog::info("embeddings: {} of {} corpus words defined", rows.size(), vocab.size() - 2);
  return rows;
}

std::vector<FoldAssignment> folds_for_prompt(const ExperimentConfig& config, int prompt,
                                             std::span<const EssayRecord> records) {
  std::vector<FoldAssignment> folds;
  if (config.partitions_dir) {
    folds = load_partitions(*config.partitions_dir / ("folds_prompt" + std::to_string(prompt) + ".json"));
  } else {
    folds = make_folds(records, config.k, config.seed);
  }
  check_partition(folds, records);
  return folds;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto table = PromptTable::asap();
  const auto corpus = load_asap(config.corpus, config.columns, table);

  std::map<int, std::vector<EssayRecord>> by_prompt;
  for (int p : config.prompts) {
    by_prompt[p] = records_for_prompt(corpus, p);
    if (by_prompt[p].empty()) {
      throw Error("harness.config", "prompt " + std::to_string(p) + " has no essays in the corpus");
    }
  }
  const auto stats = compute_all_stats(corpus);

  std::optional<TranslationCache> cache;
  std::unique_ptr<HttpTranslator> live;
  std::vector<PreparedCondition> conditions;
  for (const auto& cond : config.conditions) {
    PreparedCondition prepared{cond, {}};
    if (cond.augmented()) {
      std::vector<BackTranslationRecord> bts;
      for (const auto& file : cond.augmentation) {
        auto loaded = load_precomputed(file, corpus, UnknownIdPolicy::kWarn);
        bts.insert(bts.end(), loaded.begin(), loaded.end());
      }
      if (cond.live_pivot) {
        if (!live) {
          live = std::make_unique<HttpTranslator>(*config.live_backend);
          std::filesystem::create_directories(config.output_dir);
          cache.emplace(config.output_dir / "translation_cache.jsonl");
        }
        BackTranslateOptions options;
        options.cache = &*cache;
        for (int p : config.prompts) {
          auto generated = back_translate_all(by_prompt[p], *cond.live_pivot, *live, options);
          write_augmentation_set(config.output_dir / ("augment_" + *cond.live_pivot + "_prompt" +
                                                      std::to_string(p) + ".jsonl"),
                                 generated);
          bts.insert(bts.end(), generated.begin(), generated.end());
        }
      }
      const auto plan = cond.plan_file ? load_rule_plan(*cond.plan_file)
                                       : builtin_plan(cond.plan, {config.strict_constants});
      for (int p : config.prompts) {
        std::vector<BackTranslationRecord> prompt_bts;
        std::set<EssayId> ids;
        for (const auto& r : by_prompt[p]) ids.insert(r.essay_id);
        for (const auto& bt : bts) {
          if (ids.count(bt.essay_id)) prompt_bts.push_back(bt);
        }
        const auto pairs = pair_with_sources(by_prompt[p], prompt_bts);
        prepared.by_prompt[p] = apply_rule_plan(pairs, stats, plan, table);
        const auto& s = prepared.by_prompt[p].summary[p];
        spdlog::info("{} prompt {}: {} back-translations, rule fired on {}, {} scores changed",
                     cond.name, p, s.total, s.processed, s.changed);
      }
    }
    conditions.push_back(std::move(prepared));
  }

  std::optional<std::map<std::string, std::vector<double>>> embedding_rows;
  if (config.embeddings) {
    std::vector<TokenSequence> all_tokens;
    for (const auto& [p, records] : by_prompt) {
      for (const auto& r : records) all_tokens.push_back(tokenize(r));
    }
    for (const auto& c : conditions) {
      for (const auto& [p, aug] : c.by_prompt) {
        for (const auto& a : aug.augmented) all_tokens.push_back(tokenize(a.record));
      }
    }
    embedding_rows = load_embedding_rows(*config.embeddings, config.model.embed_dim, all_tokens);
  }

  struct Job {
    int prompt;
    std::size_t condition;
    FoldAssignment fold;
  };
  std::vector<Job> jobs;
  for (int p : config.prompts) {
    const auto folds = folds_for_prompt(config, p, by_prompt[p]);
    for (std::size_t c = 0; c < conditions.size(); ++c) {
      for (const auto& fold : folds) {
        if (!config.fold_subset.empty() &&
            std::find(config.fold_subset.begin(), config.fold_subset.end(), fold.fold_index) ==
                config.fold_subset.end()) {
          continue;
        }
        jobs.push_back({p, c, fold});
      }
    }
  }

  const auto results_dir = config.output_dir / "results";
  std::vector<FoldReport> reports(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next++;
      if (i >= jobs.size()) return;
      const auto& job = jobs[i];
      const auto& cond = conditions[job.condition];
      const auto slug = condition_slug(cond.config.name);
      const auto dir = results_dir / std::to_string(job.prompt) / slug;
      FoldContext ctx;
      ctx.spec = &table.at(job.prompt);
      ctx.originals = by_prompt.at(job.prompt);
      ctx.augmentation = cond.config.augmented() ? &cond.by_prompt.at(job.prompt) : nullptr;
      ctx.embedding_rows = embedding_rows ? &*embedding_rows : nullptr;
      ctx.condition = cond.config.name;
      if (config.save_checkpoints) {
        ctx.checkpoint_path = dir / (std::to_string(job.fold.fold_index) + ".checkpoint.json");
      }
      FoldReport report;
      try {
        report = train_eval_fold(job.fold, ctx, config);
      } catch (const std::exception& e) {
        report = FoldReport{};
        report.prompt_id = job.prompt;
        report.condition = cond.config.name;
        report.fold_index = job.fold.fold_index;
        report.augmented = cond.config.augmented();
        report.status = "failed";
        report.error = e.what();
        spdlog::error("prompt {} {} fold {} failed: {}", job.prompt, cond.config.name,
                      job.fold.fold_index, e.what());
      }
      write_file(dir / (std::to_string(job.fold.fold_index) + ".json"), fold_report_json(report));
      spdlog::info("prompt {} {} fold {}: test QWK {:.4f}, best epoch {}", job.prompt,
                   cond.config.name, job.fold.fold_index, report.test_qwk, report.best_epoch);
      reports[i] = std::move(report);
    }
  };
  {
    std::vector<std::jthread> pool;
    const auto n = std::min(config.workers, std::max<std::size_t>(jobs.size(), 1));
    for (std::size_t w = 0; w < n; ++w) pool.emplace_back(worker);
  }

  std::vector<std::string> names;
  for (const auto& c : conditions) names.push_back(c.config.name);
  ExperimentResult result{reports, summarize(reports, names, config.prompts,
                                             static_cast<int>(table.prompt_ids().size()))};

  json meta;
  meta["prompts"] = config.prompts;
  meta["conditions"] = names;
  meta["total_prompt_count"] = result.summary.total_prompt_count;
  write_file(config.output_dir / "experiment.json", meta.dump(1) + "\n");
  write_summary(config.output_dir, result.summary);

  json timing = json::array();
  for (const auto& r : reports) {
    timing.push_back({{"prompt", r.prompt_id}, {"condition", r.condition}, {"fold", r.fold_index},
                      {"seconds", r.seconds}});
  }
  write_file(config.output_dir / "timing.json", timing.dump(1) + "\n");

  const auto failed = std::count_if(reports.begin(), reports.end(),
                                    [](const FoldReport& r) { return r.status != "ok"; });
  if (failed > 0) {
    throw Error("harness.fold_failed", std::to_string(failed) + " of " +
                                           std::to_string(reports.size()) +
                                           " fold jobs failed; see " + results_dir.string());
  }
  return result;
}

ExperimentResult load_results(const std::filesystem::path& output_dir) {
  const auto results_dir = output_dir / "results";
  if (!std::filesystem::is_directory(results_dir)) {
    throw Error("harness.results", "no results directory under " + output_dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(results_dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && entry.path().extension() == ".json" &&
        name.find(".checkpoint") == std::string::npos) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  ExperimentResult result;
  for (const auto& f : files) result.folds.push_back(parse_fold_report(read_file(f)));

  std::vector<std::string> conditions;
  std::vector<int> prompts;
  int total = 8;
  const auto meta_path = output_dir / "experiment.json";
  if (std::filesystem::exists(meta_path)) {
    const auto meta = json::parse(read_file(meta_path));
    conditions = meta.at("conditions").get<std::vector<std::string>>();
    prompts = meta.at("prompts").get<std::vector<int>>();
    total = meta.value("total_prompt_count", total);
  } else {
    std::set<int> ps;
    for (const auto& r : result.folds) {
      ps.insert(r.prompt_id);
      if (std::find(conditions.begin(), conditions.end(), r.condition) == conditions.end()) {
        conditions.push_back(r.condition);
      }
    }
    prompts.assign(ps.begin(), ps.end());
  }
  result.summary = summarize(result.folds, conditions, prompts, total);
  return result;
}

void write_summary(const std::filesystem::path& output_dir, const Summary& summary) {
  write_file(output_dir / "summary.txt", render_summary_text(summary));
  write_file(output_dir / "summary.csv", render_summary_csv(summary));
}

}  // namespace aesaug

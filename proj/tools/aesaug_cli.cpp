// aesaug: command-line front end for corpus statistics, augmentation,
// score adjustment, fold generation, training and reporting.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "aesaug/adjust.hpp"
#include "aesaug/backtranslate.hpp"
#include "aesaug/checkpoint.hpp"
#include "aesaug/corpus.hpp"
#include "aesaug/error.hpp"
#include "aesaug/features.hpp"
#include "aesaug/harness.hpp"
#include "aesaug/model.hpp"
#include "aesaug/textprep.hpp"

using namespace aesaug;

namespace {

// Returns the input unchanged; lets the generate pipeline run offline.
class IdentityTranslator : public TranslatorBackend {
 public:
  std::string id() const override { return "identity"; }
  std::size_t max_chars() const override { return 5000; }
  bool supports(std::string_view, std::string_view) const override { return true; }
  std::string translate(std::string_view text, std::string_view, std::string_view) override {
    return std::string(text);
  }
};

void add_columns(CLI::App* cmd, ColumnMap& columns) {
  cmd->add_option("--id-column", columns.essay_id, "Essay id column")->capture_default_str();
  cmd->add_option("--prompt-column", columns.prompt_id, "Prompt id column")->capture_default_str();
  cmd->add_option("--text-column", columns.text, "Essay text column")->capture_default_str();
  cmd->add_option("--score-column", columns.score, "Score column")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Essay scoring with back-translation augmentation"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  std::string corpus_path;
  ColumnMap columns;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a corpus and optionally rewrite it");
  std::string ingest_out;
  ingest->add_option("corpus", corpus_path, "ASAP-style TSV")->required();
  ingest->add_option("-o,--out", ingest_out, "Write the validated records here");
  add_columns(ingest, columns);

  // stats
  auto* stats = app.add_subcommand("stats", "Score ranges, modal scores and lower/higher counts");
  bool stats_csv = false;
  stats->add_option("corpus", corpus_path)->required();
  stats->add_flag("--csv", stats_csv, "CSV output");
  add_columns(stats, columns);

  // oov
  auto* oov = app.add_subcommand("oov", "Vocabulary coverage of an embedding file");
  std::string embeddings_path;
  int embed_dim = 100;
  oov->add_option("corpus", corpus_path)->required();
  oov->add_option("--embeddings", embeddings_path)->required();
  oov->add_option("--dim", embed_dim)->capture_default_str();
  add_columns(oov, columns);

  // backtranslate
  auto* bt = app.add_subcommand("backtranslate", "Produce or import augmentation sets");
  bt->require_subcommand(1);
  auto* bt_import = bt->add_subcommand("import", "Convert a TSV of back-translated essays");
  std::string import_path, pivot, bt_out, id_col = "essay_id", text_col = "essay";
  std::string backend_label = "import";
  bt_import->add_option("tsv", import_path)->required();
  bt_import->add_option("--pivot", pivot)->required();
  bt_import->add_option("-o,--out", bt_out)->required();
  bt_import->add_option("--id-col", id_col)->capture_default_str();
  bt_import->add_option("--text-col", text_col)->capture_default_str();
  bt_import->add_option("--backend", backend_label)->capture_default_str();

  auto* bt_gen = bt->add_subcommand("generate", "Round-trip essays through a translation service");
  std::string endpoint, cache_path;
  std::vector<int> bt_prompts;
  bool identity_backend = false;
  std::size_t max_in_flight = 4;
  double rps = 5.0;
  bt_gen->add_option("corpus", corpus_path)->required();
  bt_gen->add_option("--pivot", pivot)->required();
  bt_gen->add_option("-o,--out", bt_out)->required();
  bt_gen->add_option("--prompt", bt_prompts, "Restrict to these prompts");
  bt_gen->add_option("--endpoint", endpoint, "JSON translation endpoint");
  bt_gen->add_flag("--identity", identity_backend, "Offline backend returning its input");
  bt_gen->add_option("--cache", cache_path, "Persistent translation cache (JSONL)");
  bt_gen->add_option("--in-flight", max_in_flight)->capture_default_str();
  bt_gen->add_option("--rps", rps, "Requests per second")->capture_default_str();
  add_columns(bt_gen, columns);

  auto* bt_check = bt->add_subcommand("check", "Report placeholders lost or altered in a set");
  std::string set_path;
  bt_check->add_option("corpus", corpus_path)->required();
  bt_check->add_option("set", set_path)->required();
  add_columns(bt_check, columns);

  // adjust
  auto* adjust = app.add_subcommand("adjust", "Score back-translations with a rule plan");
  std::vector<std::string> set_paths;
  std::string plan_name = "identity-all", plan_file, adjust_out;
  bool strict = false, list_plans = false;
  adjust->add_option("corpus", corpus_path);
  adjust->add_option("--set", set_paths, "Augmentation set(s)");
  adjust->add_option("--plan", plan_name)->capture_default_str();
  adjust->add_option("--plan-file", plan_file);
  adjust->add_flag("--strict-constants", strict, "Fixed thresholds 16 and 40");
  adjust->add_flag("--list-plans", list_plans);
  adjust->add_option("-o,--out", adjust_out, "Write the augmented essays as TSV");
  add_columns(adjust, columns);

  // folds
  auto* folds = app.add_subcommand("folds", "Write stratified fold partitions");
  std::vector<int> fold_prompts;
  int k = 5;
  std::uint64_t seed = 1;
  std::string folds_dir = ".";
  folds->add_option("corpus", corpus_path)->required();
  folds->add_option("--prompt", fold_prompts, "Prompts (default: all)");
  folds->add_option("-k", k)->capture_default_str();
  folds->add_option("--seed", seed)->capture_default_str();
  folds->add_option("-o,--out-dir", folds_dir)->capture_default_str();
  add_columns(folds, columns);

  // train
  auto* train = app.add_subcommand("train", "Run the cross-validated experiment");
  std::string config_path, output_dir;
  std::vector<int> train_prompts, train_folds;
  std::optional<int> epochs_original, epochs_augmented;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> train_seed;
  bool checkpoints = false;
  std::vector<std::string> overrides;
  train->add_option("config", config_path, "Experiment JSON")->required();
  train->add_option("--set", overrides, "Override a config field: key.path=value");
  train->add_option("--prompt", train_prompts, "Override the prompt list");
  train->add_option("--fold", train_folds, "Run only these folds");
  train->add_option("--epochs-original", epochs_original);
  train->add_option("--epochs-augmented", epochs_augmented);
  train->add_option("--workers", workers);
  train->add_option("--seed", train_seed);
  train->add_option("-o,--output", output_dir);
  train->add_flag("--checkpoints", checkpoints, "Save the best model of every fold");

  // report
  auto* report = app.add_subcommand("report", "Rebuild the summary from stored results");
  std::string results_dir;
  bool report_csv = false;
  report->add_option("dir", results_dir, "Experiment output directory")->required();
  report->add_flag("--csv", report_csv);

  // score
  auto* score = app.add_subcommand("score", "Score essays with a saved checkpoint");
  std::string checkpoint_path;
  int score_prompt = 0;
  score->add_option("checkpoint", checkpoint_path)->required();
  score->add_option("corpus", corpus_path)->required();
  score->add_option("--prompt", score_prompt)->required();
  add_columns(score, columns);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  spdlog::set_default_logger(spdlog::default_logger()->clone("aesaug"));

  try {
    const auto table = PromptTable::asap();

    if (*ingest) {
      const auto records = load_asap(corpus_path, columns, table);
      std::map<int, std::size_t> per_prompt;
      for (const auto& r : records) ++per_prompt[r.prompt_id];
      for (const auto& [p, n] : per_prompt) std::cout << "prompt " << p << ": " << n << " essays\n";
      std::cout << "total: " << records.size() << "\n";
      if (!ingest_out.empty()) write_asap(ingest_out, records);
    } else if (*stats) {
      const auto records = load_asap(corpus_path, columns, table);
      const auto all = compute_all_stats(records);
      std::cout << (stats_csv ? render_stats_csv(all, table) : render_stats_text(all, table));
    } else if (*oov) {
      const auto records = load_asap(corpus_path, columns, table);
      std::vector<TokenSequence> seqs;
      for (const auto& r : records) seqs.push_back(tokenize(r));
      const auto vocab = build_vocab(seqs);
      const auto loaded = load_embeddings(embeddings_path, vocab, embed_dim, seqs);
      std::cout << "vocabulary: " << vocab.size() - 2 << " words, " << loaded.report.vocab_found
                << " defined\n";
      for (const auto& [p, o] : loaded.report.per_prompt) {
        std::printf("prompt %d: %zu/%zu types undefined, %zu/%zu tokens undefined\n", p,
                    o.types_undefined, o.types_total, o.tokens_undefined, o.tokens_total);
      }
    } else if (*bt_import) {
      const auto out = import_tsv(import_path, pivot, id_col, text_col, backend_label);
      write_augmentation_set(bt_out, out);
      std::cout << "imported " << out.size() << " back-translations\n";
    } else if (*bt_gen) {
      if (identity_backend == !endpoint.empty()) {
        throw Error("cli.usage", "give exactly one of --endpoint and --identity");
      }
      auto records = load_asap(corpus_path, columns, table);
      if (!bt_prompts.empty()) {
        const std::set<int> keep(bt_prompts.begin(), bt_prompts.end());
        std::erase_if(records, [&](const EssayRecord& r) { return !keep.count(r.prompt_id); });
      }
      std::unique_ptr<TranslatorBackend> backend;
      if (identity_backend) {
        backend = std::make_unique<IdentityTranslator>();
      } else {
        HttpBackendConfig hb;
        hb.endpoint = endpoint;
        hb.requests_per_second = rps;
        backend = std::make_unique<HttpTranslator>(hb);
      }
      std::optional<TranslationCache> cache;
      if (!cache_path.empty()) cache.emplace(cache_path);
      BackTranslateOptions options;
      if (cache) options.cache = &*cache;
      const auto out = back_translate_all(records, pivot, *backend, options, max_in_flight);
      write_augmentation_set(bt_out, out);
      std::cout << "back-translated " << out.size() << " essays via " << pivot << "\n";
    } else if (*bt_check) {
      const auto records = load_asap(corpus_path, columns, table);
      std::map<EssayId, const EssayRecord*> by_id;
      for (const auto& r : records) by_id[r.essay_id] = &r;
      std::size_t dirty = 0;
      const auto set = load_precomputed(set_path, records);
      for (const auto& b : set) {
        auto it = by_id.find(b.essay_id);
        if (it == by_id.end()) continue;
        const auto rep = verify_entity_preservation(*it->second, b);
        if (rep.clean()) continue;
        ++dirty;
        std::cout << "essay " << b.essay_id << ":";
        for (const auto& [t, n] : rep.missing) std::cout << " -" << t << "x" << n;
        for (const auto& [t, n] : rep.extra) std::cout << " +" << t << "x" << n;
        for (const auto& [t, n] : rep.mutated) std::cout << " ~" << t << "x" << n;
        std::cout << "\n";
      }
      std::cout << dirty << " of " << set.size() << " essays altered placeholders\n";
    } else if (*adjust) {
      if (list_plans) {
        for (const auto& n : builtin_plan_names()) std::cout << n << "\n";
        return 0;
      }
      if (corpus_path.empty() || set_paths.empty()) {
        throw Error("cli.usage", "adjust needs a corpus and at least one --set");
      }
      const auto records = load_asap(corpus_path, columns, table);
      std::vector<BackTranslationRecord> bts;
      for (const auto& f : set_paths) {
        auto part = load_precomputed(f, records);
        bts.insert(bts.end(), part.begin(), part.end());
      }
      const auto plan = plan_file.empty() ? builtin_plan(plan_name, {strict}) : load_rule_plan(plan_file);
      const auto pairs = pair_with_sources(records, bts);
      const auto augmented = apply_rule_plan(pairs, compute_all_stats(records), plan, table);
      std::printf("%-8s%10s%10s%10s\n", "prompt", "total", "fired", "changed");
      for (const auto& [p, s] : augmented.summary) {
        std::printf("%-8d%10zu%10zu%10zu\n", p, s.total, s.processed, s.changed);
      }
      if (!adjust_out.empty()) {
        std::vector<EssayRecord> out;
        for (const auto& a : augmented.augmented) out.push_back(a.record);
        write_asap(adjust_out, out);
      }
    } else if (*folds) {
      const auto records = load_asap(corpus_path, columns, table);
      if (fold_prompts.empty()) {
        std::set<int> ps;
        for (const auto& r : records) ps.insert(r.prompt_id);
        fold_prompts.assign(ps.begin(), ps.end());
      }
      std::filesystem::create_directories(folds_dir);
      for (int p : fold_prompts) {
        const auto prompt_records = records_for_prompt(records, p);
        const auto f = make_folds(prompt_records, k, seed);
        check_partition(f, prompt_records);
        const auto path = std::filesystem::path(folds_dir) / ("folds_prompt" + std::to_string(p) + ".json");
        write_partitions(path, f);
        std::cout << "wrote " << path.string() << "\n";
      }
    } else if (*train) {
      auto config = load_experiment_config(config_path, overrides);
      if (!train_prompts.empty()) config.prompts = train_prompts;
      if (!train_folds.empty()) config.fold_subset = train_folds;
      if (epochs_original) config.epochs_original = *epochs_original;
      if (epochs_augmented) config.epochs_augmented = *epochs_augmented;
      if (workers) config.workers = *workers;
      if (train_seed) config.seed = *train_seed;
      if (!output_dir.empty()) config.output_dir = output_dir;
      if (checkpoints) config.save_checkpoints = true;
      const auto result = run_experiment(config);
      std::cout << render_summary_text(result.summary);
    } else if (*report) {
      const auto result = load_results(results_dir);
      std::cout << (report_csv ? render_summary_csv(result.summary)
                               : render_summary_text(result.summary));
    } else if (*score) {
      const auto cp = load_checkpoint(checkpoint_path);
      const Vocabulary vocab(cp.vocab_tokens);
      const auto spec = table.at(score_prompt);
      const auto records = records_for_prompt(load_asap(corpus_path, columns, table), score_prompt);
      if (cp.config.use_content_features && !cp.levels) {
        throw Error("cli.checkpoint", "checkpoint uses content features but stores no levels");
      }
      const double alpha = cp.levels && !cp.levels->levels.empty()
                               ? cp.levels->levels.front().distribution.alpha
                               : 1.0 / static_cast<double>(vocab.size());
      std::vector<Example> examples;
      for (const auto& r : records) {
        const auto seq = tokenize(r);
        Example e;
        e.tokens = vocab.encode(seq.tokens);
        if (e.tokens.empty()) e.tokens.push_back(Vocabulary::kUnk);
        if (cp.config.use_content_features) {
          e.content = content_features(word_distribution(seq.tokens, vocab, alpha), *cp.levels);
        }
        examples.push_back(std::move(e));
      }
      const auto predictions = predict(examples, cp.params, cp.config);
      std::cout << "essay_id\tpredicted\tactual\n";
      for (std::size_t i = 0; i < records.size(); ++i) {
        std::cout << records[i].essay_id << '\t' << denormalize_score(predictions[i], spec) << '\t'
                  << records[i].score << '\n';
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

#include "aesaug/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "aesaug/error.hpp"

namespace aesaug {

namespace {

using json = nlohmann::ordered_json;

json tensors_to_json(const Parameters& p) {
  json out = json::object();
  for (const auto& [name, values] : p.tensors()) {
    out[std::string(name)] = std::vector<double>(values.begin(), values.end());
  }
  return out;
}

void tensors_from_json(const json& in, Parameters& p) {
  for (auto [name, values] : p.tensors()) {
    const auto stored = in.at(std::string(name)).get<std::vector<double>>();
    if (stored.size() != values.size()) {
      throw Error("checkpoint.shape", "tensor " + std::string(name) + " has " +
                                          std::to_string(stored.size()) + " values, expected " +
                                          std::to_string(values.size()));
    }
    std::copy(stored.begin(), stored.end(), values.begin());
  }
}

json config_to_json(const ModelConfig& c) {
  return {{"cell_type", std::string(to_string(c.cell_type))},
          {"cell_size", c.cell_size},
          {"embed_dim", c.embed_dim},
          {"vocab_size", c.vocab_size},
          {"use_content_features", c.use_content_features},
          {"content_dim", c.content_dim},
          {"pooling_divisor", c.pooling_divisor},
          {"max_seq_len", c.max_seq_len},
          {"embedding_mode", c.embedding_mode == EmbeddingMode::kFrozen ? "frozen" : "fine_tune"},
          {"seed", c.seed},
          {"init_scale", c.init_scale}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.cell_type = parse_cell_type(j.at("cell_type").get<std::string>());
  c.cell_size = j.at("cell_size").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.use_content_features = j.at("use_content_features").get<bool>();
  c.content_dim = j.at("content_dim").get<int>();
  c.pooling_divisor = j.at("pooling_divisor").get<double>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.embedding_mode =
      j.at("embedding_mode").get<std::string>() == "frozen" ? EmbeddingMode::kFrozen
                                                             : EmbeddingMode::kFineTune;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.init_scale = j.at("init_scale").get<double>();
  c.validate();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  json doc;
  doc["format"] = "aesaug-checkpoint";
  doc["version"] = Checkpoint::kVersion;
  doc["config"] = config_to_json(checkpoint.config);
  doc["vocab_hash"] = checkpoint.vocab_hash;
  doc["vocab"] = checkpoint.vocab_tokens;
  doc["parameters"] = tensors_to_json(checkpoint.params);
  if (checkpoint.optimizer) {
    doc["optimizer"] = {{"step", checkpoint.optimizer->step},
                        {"first_moment", tensors_to_json(checkpoint.optimizer->first_moment)},
                        {"second_moment", tensors_to_json(checkpoint.optimizer->second_moment)}};
  }
  if (checkpoint.levels) {
    json levels = json::array();
    for (const auto& level : checkpoint.levels->levels) {
      levels.push_back({{"low_score", level.low_score},
                        {"high_score", level.high_score},
                        {"essay_ids", level.essay_ids},
                        {"alpha", level.distribution.alpha},
                        {"probabilities", level.distribution.probabilities}});
    }
    doc["levels"] = {{"degenerate", checkpoint.levels->degenerate}, {"bands", levels}};
  }
  std::ofstream out(path);
  if (!out) throw Error("checkpoint.io", "cannot write " + path.string());
  out << doc.dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("checkpoint.io", "cannot open " + path.string());
  Checkpoint cp;
  try {
    const auto doc = json::parse(in);
    if (doc.at("format") != "aesaug-checkpoint") {
      throw Error("checkpoint.format", path.string() + " is not a checkpoint");
    }
    if (doc.at("version").get<int>() != Checkpoint::kVersion) {
      throw Error("checkpoint.version", "unsupported checkpoint version " +
                                            doc.at("version").dump());
    }
    cp.config = config_from_json(doc.at("config"));
    cp.vocab_hash = doc.at("vocab_hash").get<std::string>();
    cp.vocab_tokens = doc.at("vocab").get<std::vector<std::string>>();
    cp.params = Parameters::zeros_like(cp.config);
    tensors_from_json(doc.at("parameters"), cp.params);
    if (doc.contains("optimizer")) {
      AdamState state = AdamState::zeros_like(cp.config);
      state.step = doc["optimizer"].at("step").get<long>();
      tensors_from_json(doc["optimizer"].at("first_moment"), state.first_moment);
      tensors_from_json(doc["optimizer"].at("second_moment"), state.second_moment);
      cp.optimizer = std::move(state);
    }
    if (doc.contains("levels")) {
      LevelPartition levels;
      levels.degenerate = doc["levels"].at("degenerate").get<bool>();
      for (const auto& band : doc["levels"].at("bands")) {
        ScoreLevel level;
        level.low_score = band.at("low_score").get<int>();
        level.high_score = band.at("high_score").get<int>();
        level.essay_ids = band.at("essay_ids").get<std::set<EssayId>>();
        level.distribution.alpha = band.at("alpha").get<double>();
        level.distribution.probabilities = band.at("probabilities").get<std::vector<double>>();
        levels.levels.push_back(std::move(level));
      }
      cp.levels = std::move(levels);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint.format", path.string() + ": " + e.what());
  }
  if (!cp.vocab_tokens.empty() && Vocabulary(cp.vocab_tokens).hash() != cp.vocab_hash) {
    throw Error("checkpoint.vocab", path.string() + ": vocabulary does not match its hash");
  }
  return cp;
}

}  // namespace aesaug

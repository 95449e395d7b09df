#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aesaug/features.hpp"
#include "aesaug/model.hpp"

namespace aesaug {

// JSON container for a trained scorer: everything needed to rebuild the
// model and the content features it was trained with.
struct Checkpoint {
  static constexpr int kVersion = 1;

  ModelConfig config;
  Parameters params;
  std::optional<AdamState> optimizer;
  std::string vocab_hash;
  std::vector<std::string> vocab_tokens;
  std::optional<LevelPartition> levels;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace aesaug

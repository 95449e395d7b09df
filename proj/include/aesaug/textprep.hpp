#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "aesaug/corpus.hpp"

namespace aesaug {

struct TokenSequence {
  EssayId essay_id = 0;
  int prompt_id = 0;
  std::vector<std::string> tokens;
};

/// Treebank-style word splitting: contractions split ("can't" -> "ca" "n't"),
/// punctuation separated, a sentence-final period split off unless the word
/// looks like an abbreviation. `@`-placeholders such as `@PERSON1` survive as
/// one token and keep their case; every other token is lowercased.
std::vector<std::string> tokenize_text(std::string_view text);
TokenSequence tokenize(const EssayRecord& record);

bool is_placeholder(std::string_view token);

/// Extracts every `@` + alphanumeric run, in order of appearance.
std::vector<std::string> find_placeholders(std::string_view text);

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();
  /// Restores a vocabulary from its token list (specials first).
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  std::size_t index(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<std::size_t> encode(std::span<const std::string> tokens) const;

  /// SHA-256 over the ordered token list; stored in checkpoints.
  std::string hash() const;

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Every token seen at least `min_count` times, most frequent first, ties in
/// lexicographic order. `max_size` (0 = unlimited) caps the non-special rows.
Vocabulary build_vocab(std::span<const TokenSequence> sequences, std::size_t min_count = 1,
                       std::size_t max_size = 0);

struct EmbeddingMatrix {
  Eigen::MatrixXd values;  // one row per vocabulary entry
  int dim = 0;
};

struct PromptOov {
  std::size_t types_total = 0;
  std::size_t types_undefined = 0;
  std::size_t tokens_total = 0;
  std::size_t tokens_undefined = 0;
};

struct OovReport {
  std::size_t vocab_found = 0;
  std::vector<std::string> vocab_missing;  // vocabulary order, specials excluded
  std::map<int, PromptOov> per_prompt;
};

struct LoadedEmbeddings {
  EmbeddingMatrix matrix;
  OovReport report;
};

/// Reads a `token v1 ... vd` text file. Vocabulary rows found in the file get
/// its vectors; padding, unknown and missing rows stay zero. When `corpus` is
/// given, the report also counts per prompt the words the file does not define.
LoadedEmbeddings load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                 int dim, std::span<const TokenSequence> corpus = {});

}  // namespace aesaug

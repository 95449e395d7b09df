#include "aesaug/textprep.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <set>
#include <unordered_set>

#include "aesaug/error.hpp"
#include "hash.hpp"
#include "strings.hpp"

namespace aesaug {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool iends_with(std::string_view s, std::string_view suffix) {
  if (s.size() < suffix.size()) return false;
  return lower(s.substr(s.size() - suffix.size())) == suffix;
}

constexpr std::array<std::string_view, 9> kAbbreviations = {"mr", "mrs", "ms", "dr", "st",
                                                            "jr", "sr", "vs", "prof"};

// Single words that split into two tokens regardless of punctuation.
constexpr std::array<std::pair<std::string_view, std::size_t>, 8> kFusedWords = {{
    {"cannot", 3}, {"gonna", 3}, {"gotta", 3}, {"wanna", 3}, {"gimme", 3}, {"lemme", 3},
    {"d'ye", 1}, {"more'n", 4}}};

bool is_clitic(std::string_view w) {
  const auto l = lower(w);
  return l == "'s" || l == "'m" || l == "'d" || l == "'ll" || l == "'re" || l == "'ve" ||
         l == "n't";
}

// "cannot" -> "can" "not" and similar; applies to stems left after a clitic
// or quote is cut off, as the reference tokenizer does.
void emit_fused(std::string_view w, std::vector<std::string>& out) {
  for (const auto& [word, cut] : kFusedWords) {
    if (lower(w) == word) {
      out.emplace_back(w.substr(0, cut));
      out.emplace_back(w.substr(cut));
      return;
    }
  }
  out.emplace_back(w);
}

void split_clitics(std::string_view w, std::vector<std::string>& out) {
  if (w.empty()) return;
  if (w == "''" || w == "'" || is_clitic(w)) {
    out.emplace_back(w);
    return;
  }
  // Leading single quote, unless it begins a clitic ('s, 're, ...).
  if (w.front() == '\'') {
    out.emplace_back("'");
    split_clitics(w.substr(1), out);
    return;
  }
  // Two passes, as in the reference tokenizer: first 's 'm 'd or a bare
  // closing quote, then 'll 're 've n't on what remains. Each pass cuts at
  // most once, so "shouldn't've" keeps "shouldn't" whole.
  std::string_view first_cut;
  for (std::string_view suffix : {"'s", "'m", "'d", "'"}) {
    if (w.size() > suffix.size() && iends_with(w, suffix) &&
        w[w.size() - suffix.size() - 1] != '\'') {
      first_cut = w.substr(w.size() - suffix.size());
      w.remove_suffix(suffix.size());
      break;
    }
  }
  std::string_view second_cut;
  for (std::string_view suffix : {"'ll", "'re", "'ve", "n't"}) {
    if (w.size() > suffix.size() && iends_with(w, suffix)) {
      second_cut = w.substr(w.size() - suffix.size());
      w.remove_suffix(suffix.size());
      break;
    }
  }
  emit_fused(w, out);
  if (!second_cut.empty()) out.emplace_back(second_cut);
  if (!first_cut.empty()) out.emplace_back(first_cut);
}

void split_word(std::string_view w, std::vector<std::string>& out) {
  if (w.empty()) return;
  if (w.find_first_not_of('.') == std::string_view::npos) {
    out.emplace_back(w);
    return;
  }
  std::size_t run = 0;
  while (run < w.size() && w[w.size() - 1 - run] == '.') ++run;
  if (run >= 2) {
    split_clitics(w.substr(0, w.size() - run), out);
    out.emplace_back(w.substr(w.size() - run));
    return;
  }
  if (run == 1) {
    const auto stem = w.substr(0, w.size() - 1);
    const bool abbreviation =
        stem.find('.') != std::string_view::npos ||
        std::find(kAbbreviations.begin(), kAbbreviations.end(), lower(stem)) !=
            kAbbreviations.end();
    if (!abbreviation) {
      split_clitics(stem, out);
      out.emplace_back(".");
      return;
    }
  }
  split_clitics(w, out);
}

// Tokenizes one whitespace-free, placeholder-free segment. `opening` tells
// whether a double quote here would open a quotation.
void split_segment(std::string_view seg, bool opening, std::vector<std::string>& out) {
  std::string word;
  auto flush = [&] {
    split_word(word, out);
    word.clear();
  };
  for (std::size_t i = 0; i < seg.size(); ++i) {
    const char c = seg[i];
    const char next = i + 1 < seg.size() ? seg[i + 1] : '\0';
    const char prev = i > 0 ? seg[i - 1] : '\0';
    if (std::string_view("?!;#$%&()[]{}<>@").find(c) != std::string_view::npos) {
      flush();
      out.emplace_back(1, c);
    } else if (c == '"') {
      flush();
      const bool opens = (i == 0 && opening) ||
                         (i > 0 && std::string_view("([{<").find(prev) != std::string_view::npos);
      out.emplace_back(opens ? "``" : "''");
    } else if (c == '`') {
      flush();
      if (next == '`') {
        out.emplace_back("``");
        ++i;
      } else {
        out.emplace_back("`");
      }
    } else if (c == '\'' && next == '\'') {
      flush();
      out.emplace_back("''");
      ++i;
    } else if (c == '-' && next == '-') {
      flush();
      out.emplace_back("--");
      ++i;
    } else if (c == '.' && next == '.') {
      flush();
      std::size_t end = i;
      while (end < seg.size() && seg[end] == '.') ++end;
      out.emplace_back(seg.substr(i, end - i));
      i = end - 1;
    } else if ((c == ',' || c == ':') && !(is_digit(prev) && is_digit(next))) {
      flush();
      out.emplace_back(1, c);
    } else {
      word += c;
    }
  }
  flush();
}

std::size_t placeholder_length(std::string_view text, std::size_t at) {
  if (text[at] != '@') return 0;
  std::size_t end = at + 1;
  while (end < text.size() && is_alnum(text[end])) ++end;
  return end - at > 1 ? end - at : 0;
}

}  // namespace

bool is_placeholder(std::string_view token) {
  return !token.empty() && placeholder_length(token, 0) == token.size();
}

std::vector<std::string> find_placeholders(std::string_view text) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (auto len = placeholder_length(text, i)) {
      out.emplace_back(text.substr(i, len));
      i += len - 1;
    }
  }
  return out;
}

std::vector<std::string> tokenize_text(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    const auto chunk = text.substr(start, i - start);

    std::size_t seg_start = 0;
    for (std::size_t j = 0; j < chunk.size(); ++j) {
      const auto len = placeholder_length(chunk, j);
      if (len == 0) continue;
      const std::size_t before = tokens.size();
      split_segment(chunk.substr(seg_start, j - seg_start), seg_start == 0, tokens);
      for (auto k = before; k < tokens.size(); ++k) tokens[k] = lower(tokens[k]);
      tokens.emplace_back(chunk.substr(j, len));
      j += len - 1;
      seg_start = j + 1;
    }
    const std::size_t before = tokens.size();
    split_segment(chunk.substr(seg_start), seg_start == 0, tokens);
    for (auto k = before; k < tokens.size(); ++k) tokens[k] = lower(tokens[k]);
  }
  // The period ending the text always splits, even after "u.s" or "mr".
  auto last = tokens.end();
  while (last != tokens.begin()) {
    const auto& t = *std::prev(last);
    if (t != ")" && t != "]" && t != "}" && t != ">" && t != "''" && t != "'") break;
    --last;
  }
  if (last != tokens.begin()) {
    auto& t = *std::prev(last);
    if (t.size() > 1 && t.back() == '.' && t[t.size() - 2] != '.' && !is_placeholder(t)) {
      t.pop_back();
      tokens.insert(last, ".");
    }
  }
  return tokens;
}

TokenSequence tokenize(const EssayRecord& record) {
  return {record.essay_id, record.prompt_id, tokenize_text(record.text)};
}

Vocabulary::Vocabulary() {
  add(std::string(kPadToken));
  add(std::string(kUnkToken));
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  if (tokens.size() < 2 || tokens[kPad] != kPadToken || tokens[kUnk] != kUnkToken) {
    throw Error("textprep.vocab", "vocabulary must start with the padding and unknown tokens");
  }
  for (auto& t : tokens) add(std::move(t));
  if (index_.size() != tokens_.size()) {
    throw Error("textprep.vocab", "vocabulary tokens must be unique");
  }
}

void Vocabulary::add(std::string token) {
  index_.emplace(token, tokens_.size());
  tokens_.push_back(std::move(token));
}

std::size_t Vocabulary::index(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

std::vector<std::size_t> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(index(t));
  return ids;
}

std::string Vocabulary::hash() const {
  std::string joined;
  for (const auto& t : tokens_) {
    joined += t;
    joined += '\n';
  }
  return detail::sha256_hex(joined);
}

Vocabulary build_vocab(std::span<const TokenSequence> sequences, std::size_t min_count,
                       std::size_t max_size) {
  if (min_count < 1) throw Error("textprep.vocab", "min_count must be at least 1");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& seq : sequences) {
    for (const auto& t : seq.tokens) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> entries;
  for (auto& [token, count] : counts) {
    if (count >= min_count && token != Vocabulary::kPadToken && token != Vocabulary::kUnkToken) {
      entries.emplace_back(token, count);
    }
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (max_size != 0 && entries.size() > max_size) entries.resize(max_size);

  std::vector<std::string> tokens{std::string(Vocabulary::kPadToken),
                                  std::string(Vocabulary::kUnkToken)};
  for (auto& [token, _] : entries) tokens.push_back(std::move(token));
  return Vocabulary(std::move(tokens));
}

LoadedEmbeddings load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                 int dim, std::span<const TokenSequence> corpus) {
  if (dim <= 0) throw Error("textprep.embeddings", "embedding dimension must be positive");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("textprep.io", "cannot open embedding file " + path.string());

  std::unordered_set<std::string> corpus_types;
  for (const auto& seq : corpus) corpus_types.insert(seq.tokens.begin(), seq.tokens.end());
  std::unordered_set<std::string> defined;  // corpus types present in the file

  LoadedEmbeddings result;
  result.matrix.dim = dim;
  result.matrix.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(vocab.size()), dim);
  std::vector<bool> found(vocab.size(), false);

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto view = detail::trim(line);
    if (view.empty()) continue;

    std::vector<std::string_view> fields;
    for (auto f : detail::split(view, ' ')) {
      if (!f.empty()) fields.push_back(f);
    }
    // word2vec-style "<count> <dim>" header line
    if (line_no == 1 && fields.size() == 2 && detail::parse_int<long>(fields[0]) &&
        detail::parse_int<long>(fields[1])) {
      continue;
    }
    if (fields.size() != static_cast<std::size_t>(dim) + 1) {
      throw Error("textprep.dimension",
                  path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(dim) + " values, found " +
                      std::to_string(fields.size() - 1));
    }
    const std::string token(fields[0]);
    if (corpus_types.count(token)) defined.insert(token);
    if (!vocab.contains(token)) continue;
    const auto row = vocab.index(token);
    if (row == Vocabulary::kPad || row == Vocabulary::kUnk || found[row]) continue;
    for (int d = 0; d < dim; ++d) {
      const auto field = fields[static_cast<std::size_t>(d) + 1];
      double value = 0.0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
      if (ec != std::errc{} || ptr != field.data() + field.size()) {
        throw Error("textprep.embeddings", path.string() + ":" + std::to_string(line_no) +
                                               ": cannot parse value '" + std::string(field) +
                                               "'");
      }
      result.matrix.values(static_cast<Eigen::Index>(row), d) = value;
    }
    found[row] = true;
  }
  if (in.bad()) throw Error("textprep.io", "read failed for " + path.string());

  for (std::size_t i = 2; i < vocab.size(); ++i) {
    if (found[i]) {
      ++result.report.vocab_found;
    } else {
      result.report.vocab_missing.push_back(vocab.token(i));
    }
  }

  std::map<int, std::set<std::string>> types_by_prompt;
  for (const auto& seq : corpus) {
    auto& entry = result.report.per_prompt[seq.prompt_id];
    for (const auto& t : seq.tokens) {
      ++entry.tokens_total;
      if (!defined.count(t)) ++entry.tokens_undefined;
      types_by_prompt[seq.prompt_id].insert(t);
    }
  }
  for (const auto& [prompt, types] : types_by_prompt) {
    auto& entry = result.report.per_prompt[prompt];
    entry.types_total = types.size();
    entry.types_undefined = static_cast<std::size_t>(
        std::count_if(types.begin(), types.end(), [&](const auto& t) { return !defined.count(t); }));
  }
  return result;
}

}  // namespace aesaug

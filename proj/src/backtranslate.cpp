#include "aesaug/backtranslate.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <ctime>
#include <exception>
#include <fstream>
#include <set>
#include <thread>
#include <unordered_set>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "aesaug/textprep.hpp"
#include "hash.hpp"
#include "strings.hpp"
#include "utf8.hpp"

namespace aesaug {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

// [start, end) byte spans of placeholders in `text`.
std::vector<std::pair<std::size_t, std::size_t>> placeholder_spans(std::string_view text) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '@') continue;
    std::size_t end = i + 1;
    while (end < text.size() && std::isalnum(static_cast<unsigned char>(text[end]))) ++end;
    if (end > i + 1) {
      spans.emplace_back(i, end);
      i = end - 1;
    }
  }
  return spans;
}

std::string request_with_retry(std::string_view piece, std::string_view src,
                               std::string_view dst, TranslatorBackend& backend,
                               const BackTranslateOptions& options) {
  std::string key;
  if (options.cache) {
    key = TranslationCache::key(piece, src, dst, backend.id());
    if (auto hit = options.cache->get(key)) return *hit;
  }
  const auto& retry = options.retry;
  auto backoff = retry.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      auto result = backend.translate(piece, src, dst);
      if (options.cache) options.cache->put(key, result);
      return result;
    } catch (const TranslateError& e) {
      const bool retryable = e.failure() == TranslateFailure::kTransient ||
                             e.failure() == TranslateFailure::kRateLimited;
      if (!retryable || attempt >= retry.attempts) throw;
      auto wait = backoff;
      if (e.failure() == TranslateFailure::kRateLimited && e.retry_after()) {
        wait = std::max(wait, *e.retry_after());
      }
      spdlog::warn("translation {}->{} failed (attempt {}/{}): {}; retrying in {} ms", src, dst,
                   attempt, retry.attempts, e.what(), wait.count());
      if (retry.sleep) {
        retry.sleep(wait);
      } else {
        std::this_thread::sleep_for(wait);
      }
      backoff *= 2;
    }
  }
}

std::string translate_text(std::string_view text, std::string_view src, std::string_view dst,
                           TranslatorBackend& backend, const BackTranslateOptions& options) {
  std::string out;
  for (const auto& piece : split_for_request(text, backend.max_chars())) {
    // Translators drop surrounding whitespace, so it is carried over verbatim.
    const auto core = detail::trim(piece);
    if (core.empty()) {
      out += piece;
      continue;
    }
    const auto lead = static_cast<std::size_t>(core.data() - piece.data());
    out.append(piece, 0, lead);
    out += request_with_retry(core, src, dst, backend, options);
    out.append(piece, lead + core.size());
  }
  return out;
}

}  // namespace

TranslateError::TranslateError(TranslateFailure failure, const std::string& message,
                               std::optional<std::chrono::milliseconds> retry_after)
    : Error(failure == TranslateFailure::kRateLimited ? "backtranslate.rate_limited"
                                                      : "backtranslate.backend",
            message),
      failure_(failure),
      retry_after_(retry_after) {}

std::vector<std::string> split_for_request(std::string_view text, std::size_t max_chars) {
  if (max_chars == 0) throw Error("backtranslate.chunk", "request cap must be positive");
  const auto spans = placeholder_spans(text);
  auto inside_placeholder = [&](std::size_t cut) -> std::optional<std::size_t> {
    for (const auto& [s, e] : spans) {
      if (s < cut && cut < e) return s;
    }
    return std::nullopt;
  };

  std::vector<std::string> pieces;
  std::size_t pos = 0;
  while (text.size() - pos > max_chars) {
    std::size_t cut = 0;
    for (std::size_t k = max_chars; k-- > 0;) {
      const std::size_t at = pos + k;
      if (std::string_view(".?!").find(text[at]) != std::string_view::npos &&
          at + 1 < text.size() && is_space(text[at + 1])) {
        cut = std::min(k + 2, max_chars);
        break;
      }
    }
    if (cut == 0) {
      for (std::size_t k = max_chars; k-- > 0;) {
        if (is_space(text[pos + k])) {
          cut = k + 1;
          break;
        }
      }
    }
    if (cut == 0) {
      cut = max_chars;
      while (cut > 1 && (static_cast<unsigned char>(text[pos + cut]) & 0xC0) == 0x80) --cut;
    }
    if (auto start = inside_placeholder(pos + cut); start && *start > pos) cut = *start - pos;
    pieces.emplace_back(text.substr(pos, cut));
    pos += cut;
  }
  if (pos < text.size()) pieces.emplace_back(text.substr(pos));
  return pieces;
}

TranslationCache::TranslationCache(std::filesystem::path file) : file_(std::move(file)) {
  std::ifstream in(*file_);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    try {
      auto entry = nlohmann::json::parse(line);
      entries_[entry.at("key").get<std::string>()] = entry.at("value").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      // A torn final line from an interrupted run is expected; skip it.
      spdlog::warn("{}:{}: skipping unreadable cache entry ({})", file_->string(), line_no,
                   e.what());
    }
  }
}

std::string TranslationCache::key(std::string_view text, std::string_view src,
                                  std::string_view dst, std::string_view backend_id) {
  std::string material = normalize_whitespace(text);
  for (auto part : {src, dst, backend_id}) {
    material += '\0';
    material += part;
  }
  return detail::sha256_hex(material);
}

std::optional<std::string> TranslationCache::get(const std::string& key) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void TranslationCache::put(const std::string& key, const std::string& value) {
  std::unique_lock lock(mutex_);
  entries_[key] = value;
  if (file_) {
    std::ofstream out(*file_, std::ios::app);
    out << nlohmann::json{{"key", key}, {"value", value}}.dump(
               -1, ' ', false, nlohmann::json::error_handler_t::replace)
        << '\n';
  }
}

std::size_t TranslationCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

BackTranslationRecord back_translate(const EssayRecord& record, const std::string& pivot,
                                     TranslatorBackend& backend,
                                     const BackTranslateOptions& options) {
  const auto& src = options.source_language;
  if (!backend.supports(src, pivot) || !backend.supports(pivot, src)) {
    throw TranslateError(TranslateFailure::kUnsupported,
                         backend.id() + " cannot translate " + src + "<->" + pivot);
  }
  const auto forward = translate_text(record.text, src, pivot, backend, options);
  auto back = translate_text(forward, pivot, src, backend, options);

  BackTranslationRecord out;
  out.essay_id = record.essay_id;
  out.pivot = pivot;
  out.text = std::move(back);
  out.backend = backend.id();
  out.ts = options.clock ? options.clock() : utc_now();
  return out;
}

std::vector<BackTranslationRecord> back_translate_all(std::span<const EssayRecord> records,
                                                      const std::string& pivot,
                                                      TranslatorBackend& backend,
                                                      const BackTranslateOptions& options,
                                                      std::size_t max_in_flight) {
  std::vector<BackTranslationRecord> out(records.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&] {
    while (!failed) {
      const std::size_t i = next++;
      if (i >= records.size()) return;
      try {
        out[i] = back_translate(records[i], pivot, backend, options);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(max_in_flight, 1, std::max<std::size_t>(records.size(), 1));
  std::vector<std::jthread> workers;
  for (std::size_t w = 0; w < n_workers; ++w) workers.emplace_back(worker);
  workers.clear();
  if (error) std::rethrow_exception(error);
  return out;
}

std::vector<BackTranslationRecord> load_precomputed(const std::filesystem::path& path,
                                                    std::span<const EssayRecord> corpus,
                                                    UnknownIdPolicy policy) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("backtranslate.io", "cannot open augmentation set " + path.string());

  std::unordered_set<EssayId> known;
  for (const auto& r : corpus) known.insert(r.essay_id);

  std::vector<BackTranslationRecord> records;
  std::set<std::pair<EssayId, std::string>> seen;
  std::string line;
  std::size_t line_no = 0;
  std::size_t unknown = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    detail::sanitize_utf8(line);

    BackTranslationRecord r;
    try {
      const auto obj = nlohmann::json::parse(line);
      r.essay_id = obj.at("essay_id").get<EssayId>();
      r.pivot = obj.at("pivot").get<std::string>();
      r.text = obj.at("text").get<std::string>();
      r.backend = obj.value("backend", std::string{});
      r.ts = obj.value("ts", std::string{});
    } catch (const nlohmann::json::exception& e) {
      throw Error("backtranslate.format", where + ": " + e.what());
    }
    if (!seen.emplace(r.essay_id, r.pivot).second) {
      throw Error("backtranslate.duplicate", where + ": duplicate (essay_id " +
                                                 std::to_string(r.essay_id) + ", pivot " +
                                                 r.pivot + ")");
    }
    if (!corpus.empty() && !known.count(r.essay_id)) {
      const std::string msg = where + ": essay_id " + std::to_string(r.essay_id) +
                              " is not in the corpus";
      if (policy == UnknownIdPolicy::kFail) throw Error("backtranslate.unknown_id", msg);
      ++unknown;
      if (policy == UnknownIdPolicy::kWarn && unknown <= 5) spdlog::warn("{}", msg);
    }
    records.push_back(std::move(r));
  }
  if (unknown > 5 && policy == UnknownIdPolicy::kWarn) {
    spdlog::warn("{}: {} records reference essays outside the corpus", path.string(), unknown);
  }
  return records;
}

void write_augmentation_set(const std::filesystem::path& path,
                            std::span<const BackTranslationRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("backtranslate.io", "cannot write " + path.string());
  for (const auto& r : records) {
    nlohmann::ordered_json obj;
    obj["essay_id"] = r.essay_id;
    obj["pivot"] = r.pivot;
    obj["text"] = r.text;
    obj["backend"] = r.backend;
    obj["ts"] = r.ts;
    out << obj.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace) << '\n';
  }
  if (!out) throw Error("backtranslate.io", "write failed for " + path.string());
}

std::vector<BackTranslationRecord> import_tsv(const std::filesystem::path& path,
                                              const std::string& pivot,
                                              const std::string& id_column,
                                              const std::string& text_column,
                                              const std::string& backend) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("backtranslate.io", "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("backtranslate.format", path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split(line, '\t');
  auto find = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (detail::trim(header[i]) == name) return i;
    }
    throw Error("backtranslate.format", path.string() + ": missing column '" + name + "'");
  };
  const auto id_col = find(id_column);
  const auto text_col = find(text_column);

  std::vector<BackTranslationRecord> records;
  std::set<EssayId> seen;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    detail::sanitize_utf8(line);
    const auto fields = detail::split(line, '\t');
    const std::string where = path.string() + ":" + std::to_string(row);
    if (fields.size() <= std::max(id_col, text_col)) {
      throw Error("backtranslate.format", where + ": too few fields");
    }
    auto id = detail::parse_int<EssayId>(fields[id_col]);
    if (!id) throw Error("backtranslate.format", where + ": cannot parse essay id");
    if (!seen.insert(*id).second) {
      throw Error("backtranslate.duplicate",
                  where + ": duplicate (essay_id " + std::to_string(*id) + ", pivot " + pivot + ")");
    }
    records.push_back({*id, pivot, std::string(detail::trim(fields[text_col])), backend, ""});
  }
  return records;
}

PreservationReport verify_entity_preservation(const EssayRecord& original,
                                              const BackTranslationRecord& bt) {
  PreservationReport report;
  report.essay_id = original.essay_id;
  std::map<std::string, int> before, after;
  for (auto& p : find_placeholders(original.text)) ++before[p];
  for (auto& p : find_placeholders(bt.text)) ++after[p];

  for (auto& [p, n] : before) {
    auto it = after.find(p);
    if (it == after.end()) continue;
    const int common = std::min(n, it->second);
    n -= common;
    it->second -= common;
  }
  auto upper = [](std::string s) {
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
  };
  for (auto& [p, n] : before) {
    for (auto& [q, m] : after) {
      if (n == 0) break;
      if (m == 0 || upper(p) != upper(q)) continue;
      const int paired = std::min(n, m);
      report.mutated[p] += paired;
      n -= paired;
      m -= paired;
    }
  }
  for (const auto& [p, n] : before) {
    if (n > 0) report.missing[p] = n;
  }
  for (const auto& [q, m] : after) {
    if (m > 0) report.extra[q] = m;
  }
  return report;
}

}  // namespace aesaug

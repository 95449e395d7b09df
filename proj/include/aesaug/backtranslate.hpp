#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "aesaug/corpus.hpp"
#include "aesaug/error.hpp"

namespace aesaug {

struct BackTranslationRecord {
  EssayId essay_id = 0;
  std::string pivot;    // language code, e.g. "zh", "fr"
  std::string text;     // round-trip English text
  std::string backend;  // provenance
  std::string ts;       // ISO-8601 UTC

  bool operator==(const BackTranslationRecord&) const = default;
};

enum class TranslateFailure { kTransient, kRateLimited, kUnsupported, kPermanent };

class TranslateError : public Error {
 public:
  TranslateError(TranslateFailure failure, const std::string& message,
                 std::optional<std::chrono::milliseconds> retry_after = std::nullopt);

  TranslateFailure failure() const { return failure_; }
  std::optional<std::chrono::milliseconds> retry_after() const { return retry_after_; }

 private:
  TranslateFailure failure_;
  std::optional<std::chrono::milliseconds> retry_after_;
};

class TranslatorBackend {
 public:
  virtual ~TranslatorBackend() = default;

  virtual std::string id() const = 0;
  virtual std::size_t max_chars() const = 0;
  virtual bool supports(std::string_view src, std::string_view dst) const = 0;
  /// Returns the translation or throws TranslateError.
  virtual std::string translate(std::string_view text, std::string_view src,
                                std::string_view dst) = 0;
};

/// Splits records into `n_parts` contiguous parts whose sizes differ by at
/// most one, larger parts first.
template <typename T>
std::vector<std::vector<T>> chunk_corpus(std::span<const T> records, std::size_t n_parts) {
  if (n_parts < 1) throw Error("backtranslate.chunk", "part count must be at least 1");
  if (n_parts > records.size()) {
    throw Error("backtranslate.chunk", "cannot split " + std::to_string(records.size()) +
                                           " records into " + std::to_string(n_parts) + " parts");
  }
  std::vector<std::vector<T>> parts(n_parts);
  const std::size_t base = records.size() / n_parts;
  const std::size_t extra = records.size() % n_parts;
  auto it = records.begin();
  for (std::size_t p = 0; p < n_parts; ++p) {
    const std::size_t size = base + (p < extra ? 1 : 0);
    parts[p].assign(it, it + static_cast<std::ptrdiff_t>(size));
    it += static_cast<std::ptrdiff_t>(size);
  }
  return parts;
}

/// Cuts `text` into pieces of at most `max_chars` bytes whose concatenation is
/// `text`. Each cut prefers the last sentence end (". ", "? ", "! ") within
/// the cap, then the last whitespace, and never lands inside a placeholder.
std::vector<std::string> split_for_request(std::string_view text, std::size_t max_chars);

/// Thread-safe memo of single translation requests, keyed by
/// SHA-256(normalized text, src, dst, backend id). With a backing file every
/// new entry is appended as a JSON line so interrupted runs can resume.
class TranslationCache {
 public:
  TranslationCache() = default;
  explicit TranslationCache(std::filesystem::path file);

  static std::string key(std::string_view text, std::string_view src, std::string_view dst,
                         std::string_view backend_id);

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& value);
  std::size_t size() const;

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, std::string> entries_;
  std::optional<std::filesystem::path> file_;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to this_thread::sleep_for
};

struct BackTranslateOptions {
  RetryPolicy retry;
  TranslationCache* cache = nullptr;
  std::string source_language = "en";
  std::function<std::string()> clock;  // ISO-8601 timestamp; defaults to system UTC time
};

/// Round trip en -> pivot -> en, chunk by chunk.
BackTranslationRecord back_translate(const EssayRecord& record, const std::string& pivot,
                                     TranslatorBackend& backend,
                                     const BackTranslateOptions& options = {});

/// Translates many essays with at most `max_in_flight` concurrent requests.
/// Output order follows the input order.
std::vector<BackTranslationRecord> back_translate_all(std::span<const EssayRecord> records,
                                                      const std::string& pivot,
                                                      TranslatorBackend& backend,
                                                      const BackTranslateOptions& options,
                                                      std::size_t max_in_flight = 4);

enum class UnknownIdPolicy { kIgnore, kWarn, kFail };

/// Augmentation-set file: one JSON object per line with essay_id, pivot,
/// text, backend, ts. If `corpus` is given, ids missing from it are handled
/// per `policy`.
std::vector<BackTranslationRecord> load_precomputed(
    const std::filesystem::path& path, std::span<const EssayRecord> corpus = {},
    UnknownIdPolicy policy = UnknownIdPolicy::kWarn);

void write_augmentation_set(const std::filesystem::path& path,
                            std::span<const BackTranslationRecord> records);

/// Imports a tab-separated file of already back-translated essays, as
/// distributed alongside published augmentation data.
std::vector<BackTranslationRecord> import_tsv(const std::filesystem::path& path,
                                              const std::string& pivot,
                                              const std::string& id_column = "essay_id",
                                              const std::string& text_column = "essay",
                                              const std::string& backend = "import");

struct PreservationReport {
  EssayId essay_id = 0;
  std::map<std::string, int> missing;  // in the original, absent after the round trip
  std::map<std::string, int> extra;    // introduced by the round trip
  std::map<std::string, int> mutated;  // original spelling -> count changed in case only

  bool clean() const { return missing.empty() && extra.empty() && mutated.empty(); }
};

PreservationReport verify_entity_preservation(const EssayRecord& original,
                                              const BackTranslationRecord& bt);

struct HttpBackendConfig {
  std::string endpoint;  // e.g. "https://translate.example.org/translate"
  std::string token_env = "AESAUG_TRANSLATE_TOKEN";
  std::string auth_header = "Authorization";
  std::string auth_prefix = "Bearer ";
  std::size_t max_chars = 5000;
  double requests_per_second = 5.0;
  std::vector<std::string> languages = {"en", "zh", "fr"};
  std::chrono::seconds timeout{60};
};

/// Vendor-neutral JSON-over-HTTP adapter. Sends
/// {"q": text, "source": src, "target": dst, "format": "text"} and reads
/// "translatedText" from the response. HTTP 429 maps to kRateLimited (with
/// Retry-After), 5xx and network errors to kTransient.
class HttpTranslator : public TranslatorBackend {
 public:
  explicit HttpTranslator(HttpBackendConfig config);
  ~HttpTranslator() override;

  std::string id() const override;
  std::size_t max_chars() const override { return config_.max_chars; }
  bool supports(std::string_view src, std::string_view dst) const override;
  std::string translate(std::string_view text, std::string_view src,
                        std::string_view dst) override;

 private:
  void throttle();

  HttpBackendConfig config_;
  std::string token_;
  std::mutex throttle_mutex_;
  std::chrono::steady_clock::time_point next_slot_{};
};

}  // namespace aesaug

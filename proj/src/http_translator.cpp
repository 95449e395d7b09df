#include <algorithm>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "aesaug/backtranslate.hpp"
#include "strings.hpp"

namespace aesaug {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint parse_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error("backtranslate.config", "endpoint '" + url + "' lacks a scheme");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpTranslator::HttpTranslator(HttpBackendConfig config) : config_(std::move(config)) {
  parse_endpoint(config_.endpoint);
  if (config_.max_chars == 0) throw Error("backtranslate.config", "max_chars must be positive");
  if (!config_.token_env.empty()) {
    if (const char* token = std::getenv(config_.token_env.c_str())) token_ = token;
  }
}

HttpTranslator::~HttpTranslator() = default;

std::string HttpTranslator::id() const { return "http:" + config_.endpoint; }

bool HttpTranslator::supports(std::string_view src, std::string_view dst) const {
  auto known = [&](std::string_view lang) {
    return std::find(config_.languages.begin(), config_.languages.end(), lang) !=
           config_.languages.end();
  };
  return src != dst && known(src) && known(dst);
}

void HttpTranslator::throttle() {
  if (config_.requests_per_second <= 0.0) return;
  const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(1.0 / config_.requests_per_second));
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(throttle_mutex_);
    slot = std::max(std::chrono::steady_clock::now(), next_slot_);
    next_slot_ = slot + interval;
  }
  std::this_thread::sleep_until(slot);
}

std::string HttpTranslator::translate(std::string_view text, std::string_view src,
                                      std::string_view dst) {
  if (!supports(src, dst)) {
    throw TranslateError(TranslateFailure::kUnsupported,
                         id() + " does not support " + std::string(src) + "->" + std::string(dst));
  }
  throttle();

  const auto endpoint = parse_endpoint(config_.endpoint);
  httplib::Client client(endpoint.origin);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);

  httplib::Headers headers;
  if (!token_.empty()) headers.emplace(config_.auth_header, config_.auth_prefix + token_);
  const nlohmann::json body = {
      {"q", text}, {"source", src}, {"target", dst}, {"format", "text"}};

  auto res = client.Post(endpoint.path, headers,
                         body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace),
                         "application/json");
  if (!res) {
    throw TranslateError(TranslateFailure::kTransient,
                         "request to " + config_.endpoint + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status == 429) {
    std::optional<std::chrono::milliseconds> retry_after;
    if (auto seconds = detail::parse_int<long>(res->get_header_value("Retry-After"))) {
      retry_after = std::chrono::seconds(*seconds);
    }
    throw TranslateError(TranslateFailure::kRateLimited, config_.endpoint + " rate limited",
                         retry_after);
  }
  if (res->status >= 500) {
    throw TranslateError(TranslateFailure::kTransient,
                         config_.endpoint + " returned HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw TranslateError(TranslateFailure::kPermanent, config_.endpoint + " returned HTTP " +
                                                           std::to_string(res->status) + ": " +
                                                           res->body.substr(0, 200));
  }
  try {
    return nlohmann::json::parse(res->body).at("translatedText").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw TranslateError(TranslateFailure::kPermanent,
                         config_.endpoint + " sent an unreadable response: " + e.what());
  }
}

}  // namespace aesaug

#include "utf8.hpp"

namespace aesaug::detail {

namespace {

constexpr const char kReplacement[] = "\xEF\xBF\xBD";

// Length of the valid sequence starting at i, or 0 if invalid.
std::size_t valid_sequence(const std::string& s, std::size_t i) {
  const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
  const unsigned char c = byte(i);
  if (c < 0x80) return 1;
  std::size_t len = 0;
  unsigned char lo = 0x80, hi = 0xBF;
  if (c >= 0xC2 && c <= 0xDF) {
    len = 2;
  } else if (c >= 0xE0 && c <= 0xEF) {
    len = 3;
    if (c == 0xE0) lo = 0xA0;
    if (c == 0xED) hi = 0x9F;
  } else if (c >= 0xF0 && c <= 0xF4) {
    len = 4;
    if (c == 0xF0) lo = 0x90;
    if (c == 0xF4) hi = 0x8F;
  } else {
    return 0;
  }
  if (i + len > s.size()) return 0;
  if (byte(i + 1) < lo || byte(i + 1) > hi) return 0;
  for (std::size_t k = 2; k < len; ++k) {
    if (byte(i + k) < 0x80 || byte(i + k) > 0xBF) return 0;
  }
  return len;
}

}  // namespace

std::size_t sanitize_utf8(std::string& text) {
  std::string out;
  std::size_t replaced = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    auto len = valid_sequence(text, i);
    if (len == 0) {
      if (replaced == 0) out.assign(text, 0, i);
      out += kReplacement;
      ++replaced;
      ++i;
      continue;
    }
    if (replaced != 0) out.append(text, i, len);
    i += len;
  }
  if (replaced != 0) text = std::move(out);
  return replaced;
}

}  // namespace aesaug::detail

#pragma once

#include <cstddef>
#include <string>

namespace aesaug::detail {

// Replaces every invalid UTF-8 sequence with U+FFFD; returns how many
// replacements were made.
std::size_t sanitize_utf8(std::string& text);

}  // namespace aesaug::detail

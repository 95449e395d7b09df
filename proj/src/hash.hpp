#pragma once

#include <string>
#include <string_view>

namespace aesaug::detail {

std::string sha256_hex(std::string_view data);

}  // namespace aesaug::detail

#pragma once

#include <stdexcept>
#include <string>

namespace aesaug {

// Every failure raised by the library carries a short machine-readable kind
// (e.g. "corpus.range", "model.non_finite") next to the human message.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message);

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

}  // namespace aesaug

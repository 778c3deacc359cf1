#include "vlmech/tokenizer.hpp"

#include "vlmech/errors.hpp"

namespace vlmech {

std::vector<std::size_t> tokenize(std::string_view text) {
  std::vector<std::size_t> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(static_cast<unsigned char>(c));
  return ids;
}

std::string detokenize(std::span<const std::size_t> ids) {
  std::string out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= tokens::kByteCount) {
      throw ValidationError("token " + std::to_string(ids[i]) + " at index " + std::to_string(i) +
                            " is not a text byte");
    }
    out.push_back(static_cast<char>(static_cast<unsigned char>(ids[i])));
  }
  return out;
}

}  // namespace vlmech

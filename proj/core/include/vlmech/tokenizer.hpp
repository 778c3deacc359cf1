#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vlmech {

/// Byte-level toy tokenizer. Ids 0..255 are raw bytes; the specials below
/// delimit visual content and never appear in tokenized text.
namespace tokens {
inline constexpr std::size_t kByteCount = 256;
inline constexpr std::size_t kVisionStart = 256;
inline constexpr std::size_t kVisionEnd = 257;
inline constexpr std::size_t kImagePad = 258;
inline constexpr std::size_t kVideoPad = 259;
inline constexpr std::size_t kVocabSize = 260;
}  // namespace tokens

std::vector<std::size_t> tokenize(std::string_view text);

/// Inverse of tokenize. Throws ValidationError on special or out-of-range ids.
std::string detokenize(std::span<const std::size_t> ids);

}  // namespace vlmech

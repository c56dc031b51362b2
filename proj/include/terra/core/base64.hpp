#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace terra {

/// Standard alphabet with '=' padding.
std::string base64_encode(std::span<const uint8_t> bytes);
/// Rejects characters outside the alphabet and malformed padding (FormatError).
std::vector<uint8_t> base64_decode(std::string_view text);

}  // namespace terra

#pragma once

// Byte-level helpers for archive metadata: base64 and SHA-256 via OpenSSL.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qtt::detail {

std::string base64_encode(std::span<const unsigned char> bytes);
std::vector<unsigned char> base64_decode(const std::string& text);

std::string encode_u32_array(std::span<const std::uint32_t> values);
std::vector<std::uint32_t> decode_u32_array(const std::string& text);

std::string sha256_hex(const std::string& text);

}  // namespace qtt::detail

#include "codec.hpp"

#include <cstring>

#include <openssl/evp.h>

#include "qtt/errors.hpp"

namespace qtt::detail {

std::string base64_encode(std::span<const unsigned char> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
    if (text.size() % 4 != 0) throw FormatError("base64 payload has invalid length");
    std::vector<unsigned char> out(3 * (text.size() / 4));
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
    if (n < 0) throw FormatError("base64 payload is malformed");
    // EVP_DecodeBlock keeps the bytes produced by '=' padding
    std::size_t pad = 0;
    if (!text.empty() && text.back() == '=') ++pad;
    if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

std::string encode_u32_array(std::span<const std::uint32_t> values) {
    std::vector<unsigned char> bytes(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i)
        for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<unsigned char>(values[i] >> (8 * b));
    return base64_encode(bytes);
}

std::vector<std::uint32_t> decode_u32_array(const std::string& text) {
    const auto bytes = base64_decode(text);
    if (bytes.size() % 4 != 0) throw FormatError("u32 array payload is not a multiple of 4 bytes");
    std::vector<std::uint32_t> v(bytes.size() / 4);
    for (std::size_t i = 0; i < v.size(); ++i)
        for (int b = 0; b < 4; ++b) v[i] |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
    return v;
}

std::string sha256_hex(const std::string& text) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 computation failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

}  // namespace qtt::detail

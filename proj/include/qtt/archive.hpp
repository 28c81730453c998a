#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "json.hpp"
#include "qtt/tt.hpp"

namespace qtt {

inline constexpr std::uint32_t kTtc1Version = 1;

struct TTArchive {
    TTTensor tt;
    nlohmann::json metadata;
};

/// "TTC1" archive: magic, u32 version, u32 d, (d+1) u64 ranks, d u64 dims, f64 cores,
/// then a u64 length-prefixed UTF-8 JSON metadata blob. Little-endian throughout.
std::vector<char> encode_ttc1(const TTTensor& tt, const nlohmann::json& metadata);
TTArchive decode_ttc1(std::vector<char> bytes, const std::string& source = "archive");

void write_ttc1(const std::filesystem::path& path, const TTTensor& tt, const nlohmann::json& metadata);
TTArchive read_ttc1(const std::filesystem::path& path);

}  // namespace qtt

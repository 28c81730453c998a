#include "qtt/archive.hpp"

#include "binary_io.hpp"
#include "qtt/errors.hpp"

namespace qtt {

std::vector<char> encode_ttc1(const TTTensor& tt, const nlohmann::json& metadata) {
    detail::ByteWriter w;
    w.put_bytes("TTC1");
    w.put<std::uint32_t>(kTtc1Version);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(tt.order()));
    for (auto r : tt.ranks()) w.put<std::uint64_t>(r);
    for (auto n : tt.dims()) w.put<std::uint64_t>(n);
    for (const auto& c : tt.cores()) w.put_doubles(c.values());
    const std::string meta = metadata.dump();
    w.put<std::uint64_t>(meta.size());
    w.put_bytes(meta);
    return w.bytes();
}

TTArchive decode_ttc1(std::vector<char> bytes, const std::string& source) {
    detail::ByteReader r(std::move(bytes), source);
    if (r.get_bytes(4) != "TTC1") r.fail("bad magic (expected TTC1)");
    const auto version = r.get<std::uint32_t>();
    if (version != kTtc1Version) r.fail("unsupported version " + std::to_string(version));
    const auto d = r.get<std::uint32_t>();
    if (d == 0) r.fail("zero-order tensor");
    if (d > r.remaining() / 16) r.fail("order " + std::to_string(d) + " exceeds file size");
    std::vector<std::size_t> ranks(d + 1), dims(d);
    for (auto& x : ranks) x = r.get<std::uint64_t>();
    for (auto& x : dims) x = r.get<std::uint64_t>();
    if (ranks.front() != 1 || ranks.back() != 1) r.fail("boundary ranks must be 1");
    std::vector<TTCore> cores;
    for (std::size_t k = 0; k < d; ++k) {
        const std::size_t a = ranks[k], n = dims[k], b = ranks[k + 1];
        if (a == 0 || n == 0 || b == 0) r.fail("zero extent in core " + std::to_string(k + 1));
        const std::size_t cap = r.remaining() / sizeof(double);
        if (a > cap || n > cap / a || b > cap / (a * n)) r.fail("core " + std::to_string(k + 1) + " exceeds file size");
        cores.emplace_back(a, n, b, r.get_doubles(a * n * b));
    }
    const auto len = r.get<std::uint64_t>();
    if (len > r.remaining()) r.fail("metadata length " + std::to_string(len) + " exceeds file size");
    const auto text = r.get_bytes(len);
    if (r.remaining() != 0) r.fail("trailing bytes after metadata");
    TTArchive out;
    try {
        out.metadata = text.empty() ? nlohmann::json::object() : nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(source + ": metadata is not valid JSON: " + e.what());
    }
    out.tt = TTTensor(std::move(cores));
    return out;
}

void write_ttc1(const std::filesystem::path& path, const TTTensor& tt, const nlohmann::json& metadata) {
    const auto bytes = encode_ttc1(tt, metadata);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("cannot write '" + path.string() + "'");
}

TTArchive read_ttc1(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path.string() + "'");
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_ttc1(std::move(bytes), path.string());
}

}  // namespace qtt

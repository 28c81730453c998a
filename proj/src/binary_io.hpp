#pragma once

// Little-endian byte buffers shared by the DT64/TTC1 readers and writers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qtt/errors.hpp"

namespace qtt::detail {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class ByteWriter {
public:
    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const char*>(&value);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }

    void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

    void put_doubles(std::span<const double> values) {
        const auto* p = reinterpret_cast<const char*>(values.data());
        bytes_.insert(bytes_.end(), p, p + values.size_bytes());
    }

    const std::vector<char>& bytes() const noexcept { return bytes_; }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open '" + path.string() + "' for writing");
        out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
        if (!out) throw Error("write to '" + path.string() + "' failed");
    }

private:
    std::vector<char> bytes_;
};

class ByteReader {
public:
    ByteReader(std::vector<char> bytes, std::string what)
        : bytes_(std::move(bytes)), what_(std::move(what)) {}

    static ByteReader load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw FormatError("cannot open '" + path.string() + "'");
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return ByteReader(std::move(bytes), path.string());
    }

    template <typename T>
    T get() {
        require(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::string get_bytes(std::size_t n) {
        require(n);
        std::string s(bytes_.data() + pos_, n);
        pos_ += n;
        return s;
    }

    std::vector<double> get_doubles(std::size_t n) {
        if (n > remaining() / sizeof(double)) require(n * sizeof(double));
        std::vector<double> values(n);
        std::memcpy(values.data(), bytes_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
        return values;
    }

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
    const std::string& what() const noexcept { return what_; }

    [[noreturn]] void fail(const std::string& msg) const {
        throw FormatError(what_ + ": " + msg + " at byte offset " + std::to_string(pos_));
    }

private:
    void require(std::size_t n) const {
        if (n > remaining())
            fail("truncated file (need " + std::to_string(n) + " bytes, " +
                 std::to_string(remaining()) + " left)");
    }

    std::vector<char> bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

}  // namespace qtt::detail

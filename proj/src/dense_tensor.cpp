#include "qtt/dense_tensor.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "binary_io.hpp"
#include "qtt/errors.hpp"

namespace qtt {

namespace {

void check_dims(const Extents& dims) {
    if (dims.empty()) throw ShapeError("tensor must have at least one dimension");
    for (auto n : dims)
        if (n == 0) throw ShapeError("tensor extents must be positive");
}

std::string dims_string(std::span<const std::size_t> dims) {
    std::string s = "[";
    for (std::size_t k = 0; k < dims.size(); ++k) {
        if (k) s += ",";
        s += std::to_string(dims[k]);
    }
    return s + "]";
}

}  // namespace

std::size_t num_entries(std::span<const std::size_t> dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t long_index(std::span<const std::size_t> indices, std::span<const std::size_t> dims) {
    if (indices.size() != dims.size())
        throw RangeError("index has " + std::to_string(indices.size()) + " entries, tensor has " +
                         std::to_string(dims.size()) + " dimensions");
    std::size_t idx = 0;
    std::size_t stride = 1;
    for (std::size_t j = 0; j < dims.size(); ++j) {
        if (indices[j] < 1 || indices[j] > dims[j])
            throw RangeError("index " + std::to_string(indices[j]) + " out of range 1.." +
                             std::to_string(dims[j]) + " on axis " + std::to_string(j + 1));
        idx += stride * (indices[j] - 1);
        stride *= dims[j];
    }
    return idx + 1;
}

MultiIndex multi_index(std::size_t long_idx, std::span<const std::size_t> dims) {
    if (long_idx < 1 || long_idx > num_entries(dims))
        throw RangeError("long index " + std::to_string(long_idx) + " out of range for " +
                         dims_string(dims));
    MultiIndex out(dims.size());
    std::size_t rem = long_idx - 1;
    for (std::size_t j = 0; j < dims.size(); ++j) {
        out[j] = rem % dims[j] + 1;
        rem /= dims[j];
    }
    return out;
}

// DenseMatrix ---------------------------------------------------------------

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_)
        throw ShapeError("matrix " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                         " given " + std::to_string(values_.size()) + " values");
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

double DenseMatrix::at(std::size_t row, std::size_t col) const {
    if (row < 1 || row > rows_ || col < 1 || col > cols_)
        throw RangeError("matrix index (" + std::to_string(row) + "," + std::to_string(col) +
                         ") out of range");
    return (*this)(row - 1, col - 1);
}

DenseMatrix DenseMatrix::transposed() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t c = 0; c < cols_; ++c)
        for (std::size_t r = 0; r < rows_; ++r) t(c, r) = (*this)(r, c);
    return t;
}

// DenseTensor ---------------------------------------------------------------

DenseTensor::DenseTensor(Extents dims, std::vector<double> values)
    : dims_(std::move(dims)), values_(std::move(values)) {
    check_dims(dims_);
    if (values_.size() != num_entries(dims_))
        throw ShapeError("tensor " + dims_string(dims_) + " given " + std::to_string(values_.size()) +
                         " values");
}

DenseTensor DenseTensor::zeros(Extents dims) {
    check_dims(dims);
    auto n = num_entries(dims);
    return DenseTensor(std::move(dims), std::vector<double>(n, 0.0));
}

double DenseTensor::at(std::span<const std::size_t> indices) const {
    return values_[long_index(indices, dims_) - 1];
}

double DenseTensor::at(std::initializer_list<std::size_t> indices) const {
    return at(std::span<const std::size_t>(indices.begin(), indices.size()));
}

DenseTensor reshape(const DenseTensor& t, Extents new_dims) {
    return reshape(DenseTensor(t), std::move(new_dims));
}

DenseTensor reshape(DenseTensor&& t, Extents new_dims) {
    check_dims(new_dims);
    if (num_entries(new_dims) != t.size())
        throw ShapeError("cannot reshape " + dims_string(t.dims()) + " into " + dims_string(new_dims));
    return DenseTensor(std::move(new_dims), std::move(t).release());
}

DenseMatrix unfold(const DenseTensor& t, std::size_t k) {
    const auto d = t.order();
    if (k < 1 || k + 1 > d)
        throw RangeError("unfolding position " + std::to_string(k) + " out of range 1.." +
                         std::to_string(d == 0 ? 0 : d - 1));
    const auto& dims = t.dims();
    std::size_t rows = 1;
    for (std::size_t j = 0; j < k; ++j) rows *= dims[j];
    std::size_t cols = t.size() / rows;
    return DenseMatrix(rows, cols, std::vector<double>(t.values().begin(), t.values().end()));
}

double frobenius_norm(std::span<const double> values) {
    // Two-pass scaled sum keeps tiny and huge entries from under/overflowing.
    double scale = 0.0;
    for (double v : values) scale = std::max(scale, std::abs(v));
    if (scale == 0.0 || !std::isfinite(scale)) return scale;
    double sum = 0.0;
    for (double v : values) {
        double s = v / scale;
        sum += s * s;
    }
    return scale * std::sqrt(sum);
}

double frobenius_norm(const DenseTensor& t) { return frobenius_norm(t.values()); }

double frobenius_norm(const DenseMatrix& m) { return frobenius_norm(m.values()); }

DenseTensor permute_axes(const DenseTensor& t, std::span<const std::size_t> perm) {
    const auto d = t.order();
    if (perm.size() != d) throw ShapeError("axis permutation has wrong length");
    std::vector<bool> seen(d, false);
    for (auto p : perm) {
        if (p >= d || seen[p]) throw ShapeError("invalid axis permutation");
        seen[p] = true;
    }
    const auto& in_dims = t.dims();
    Extents out_dims(d);
    for (std::size_t j = 0; j < d; ++j) out_dims[j] = in_dims[perm[j]];

    std::vector<std::size_t> in_strides(d);
    std::size_t s = 1;
    for (std::size_t j = 0; j < d; ++j) {
        in_strides[j] = s;
        s *= in_dims[j];
    }
    // stride in the input for each output axis
    std::vector<std::size_t> step(d);
    for (std::size_t j = 0; j < d; ++j) step[j] = in_strides[perm[j]];

    std::vector<double> out(t.size());
    std::vector<std::size_t> counter(d, 0);
    std::size_t src = 0;
    const auto in = t.values();
    for (std::size_t dst = 0; dst < out.size(); ++dst) {
        out[dst] = in[src];
        for (std::size_t j = 0; j < d; ++j) {
            if (++counter[j] < out_dims[j]) {
                src += step[j];
                break;
            }
            src -= step[j] * (out_dims[j] - 1);
            counter[j] = 0;
        }
    }
    return DenseTensor(std::move(out_dims), std::move(out));
}

void write_dt64(const std::filesystem::path& path, const DenseTensor& t) {
    detail::ByteWriter w;
    w.put_bytes("DT64");
    w.put(static_cast<std::uint32_t>(t.order()));
    for (auto n : t.dims()) w.put(static_cast<std::uint64_t>(n));
    w.put_doubles(t.values());
    w.save(path);
}

DenseTensor read_dt64(const std::filesystem::path& path) {
    auto r = detail::ByteReader::load(path);
    if (r.get_bytes(4) != "DT64") r.fail("bad magic (expected DT64)");
    auto d = r.get<std::uint32_t>();
    if (d == 0) r.fail("zero-dimensional tensor");
    Extents dims(d);
    std::size_t total = 1;
    for (auto& n : dims) {
        auto v = r.get<std::uint64_t>();
        if (v == 0) r.fail("zero extent");
        n = static_cast<std::size_t>(v);
        if (total > r.remaining() / n) r.fail("extents exceed file size");
        total *= n;
    }
    auto values = r.get_doubles(total);
    if (r.remaining() != 0) r.fail("trailing bytes after tensor values");
    return DenseTensor(std::move(dims), std::move(values));
}

}  // namespace qtt

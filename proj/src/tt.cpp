#include "qtt/tt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "eigen_view.hpp"
#include "qtt/errors.hpp"
#include "qtt/lowrank.hpp"

namespace qtt {

namespace {

std::string chain_error(std::size_t k, const char* what) {
    return "core " + std::to_string(k + 1) + ": " + what;
}

// Core k <- core values reinterpreted from a column-major matrix.
TTCore core_from(std::size_t r_left, std::size_t n, std::size_t r_right, const Eigen::MatrixXd& m) {
    return TTCore(r_left, n, r_right, std::vector<double>(m.data(), m.data() + m.size()));
}

Eigen::Map<const Eigen::MatrixXd> horizontal_view(const TTCore& c) {
    return {c.values().data(), static_cast<Eigen::Index>(c.r_left()),
            static_cast<Eigen::Index>(c.extent() * c.r_right())};
}

Eigen::Map<const Eigen::MatrixXd> vertical_view(const TTCore& c) {
    return {c.values().data(), static_cast<Eigen::Index>(c.r_left() * c.extent()),
            static_cast<Eigen::Index>(c.r_right())};
}

void check_tau(double tau) {
    if (!(tau >= 0.0) || !std::isfinite(tau)) throw RangeError("relative tolerance must be finite and >= 0");
}

}  // namespace

// TTCore --------------------------------------------------------------------

TTCore::TTCore(std::size_t r_left, std::size_t n, std::size_t r_right)
    : r_left_(r_left), n_(n), r_right_(r_right), values_(r_left * n * r_right, 0.0) {}

TTCore::TTCore(std::size_t r_left, std::size_t n, std::size_t r_right, std::vector<double> values)
    : r_left_(r_left), n_(n), r_right_(r_right), values_(std::move(values)) {
    if (values_.size() != r_left_ * n_ * r_right_)
        throw StructureError("core " + std::to_string(r_left_) + "x" + std::to_string(n_) + "x" +
                             std::to_string(r_right_) + " given " + std::to_string(values_.size()) +
                             " values");
}

DenseMatrix TTCore::horizontal() const {
    return DenseMatrix(r_left_, n_ * r_right_, values_);
}

DenseMatrix TTCore::vertical() const {
    return DenseMatrix(r_left_ * n_, r_right_, values_);
}

// TTTensor ------------------------------------------------------------------

TTTensor::TTTensor(std::vector<TTCore> cores) : cores_(std::move(cores)) {
    if (cores_.empty()) throw StructureError("TT tensor needs at least one core");
    for (std::size_t k = 0; k < cores_.size(); ++k) {
        const auto& c = cores_[k];
        if (c.r_left() == 0 || c.extent() == 0 || c.r_right() == 0)
            throw StructureError(chain_error(k, "zero extent or rank"));
        if (c.size() != c.r_left() * c.extent() * c.r_right())
            throw StructureError(chain_error(k, "value count does not match shape"));
        if (k > 0 && cores_[k - 1].r_right() != c.r_left())
            throw StructureError(chain_error(k, "left rank does not match previous core"));
    }
    if (cores_.front().r_left() != 1) throw StructureError("boundary rank r_0 must be 1");
    if (cores_.back().r_right() != 1) throw StructureError("boundary rank r_d must be 1");
}

TTTensor TTTensor::zeros(const Extents& dims) {
    if (dims.empty()) throw ShapeError("TT tensor needs at least one dimension");
    std::vector<TTCore> cores;
    cores.reserve(dims.size());
    for (auto n : dims) {
        if (n == 0) throw ShapeError("tensor extents must be positive");
        cores.emplace_back(1, n, 1);
    }
    return TTTensor(std::move(cores));
}

Extents TTTensor::dims() const {
    Extents d;
    d.reserve(cores_.size());
    for (const auto& c : cores_) d.push_back(c.extent());
    return d;
}

std::vector<std::size_t> TTTensor::ranks() const {
    std::vector<std::size_t> r;
    if (cores_.empty()) return r;
    r.reserve(cores_.size() + 1);
    r.push_back(cores_.front().r_left());
    for (const auto& c : cores_) r.push_back(c.r_right());
    return r;
}

std::size_t TTTensor::storage() const noexcept {
    std::size_t s = 0;
    for (const auto& c : cores_) s += c.size();
    return s;
}

// TT-SVD --------------------------------------------------------------------

TTTensor tt_svd(const DenseTensor& x, double tau_rel_frob) {
    check_tau(tau_rel_frob);
    for (double v : x.values())
        if (!std::isfinite(v)) throw DataError("tt_svd: tensor has non-finite entries");

    const auto& dims = x.dims();
    const auto d = dims.size();
    if (d == 1) {
        return TTTensor({TTCore(1, dims[0], 1, std::vector<double>(x.values().begin(), x.values().end()))});
    }
    const double norm = frobenius_norm(x);
    if (norm == 0.0) return TTTensor::zeros(dims);

    const double delta = tau_rel_frob * norm / std::sqrt(static_cast<double>(d - 1));

    std::vector<TTCore> cores;
    cores.reserve(d);
    std::size_t r_prev = 1;
    std::size_t remaining = x.size();
    DenseMatrix m(dims[0], remaining / dims[0], std::vector<double>(x.values().begin(), x.values().end()));

    for (std::size_t k = 0; k + 1 < d; ++k) {
        auto svd = truncated_svd(m, delta, false);
        const auto r = svd.rank();
        cores.emplace_back(r_prev, dims[k], r, std::vector<double>(svd.U.values().begin(), svd.U.values().end()));

        // M <- reshape(U^T M, [r n_{k+1}, n_{k+2} ... n_d]); projecting keeps round-off in V out of later cores
        remaining /= dims[k];
        const std::size_t next_rows = r * dims[k + 1];
        std::vector<double> next(r * remaining);
        Eigen::Map<Eigen::MatrixXd>(next.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(remaining)) =
            detail::view(svd.U).transpose() * detail::view(m);
        m = DenseMatrix(next_rows, remaining / dims[k + 1], std::move(next));
        r_prev = r;
    }
    cores.emplace_back(r_prev, dims[d - 1], 1, std::vector<double>(m.values().begin(), m.values().end()));
    return TTTensor(std::move(cores));
}

// Orthogonalization and rounding --------------------------------------------

namespace {

// In-place right-to-left QR sweep over cores d..2; core 1 absorbs the R factors.
void right_orthogonalize_cores(std::vector<TTCore>& cores) {
    for (std::size_t k = cores.size(); k-- > 1;) {
        const auto& ck = cores[k];
        // Q R = M^T with M = reshape(Y_k, [r_{k-1}, n_k r_k])
        DenseMatrix mt(ck.extent() * ck.r_right(), ck.r_left());
        detail::view(mt) = horizontal_view(ck).transpose();
        auto qr = rank_revealing_qr(mt);
        const auto r_new = qr.rank;

        Eigen::MatrixXd qt = detail::view(qr.Q).transpose();
        TTCore new_k = core_from(r_new, ck.extent(), ck.r_right(), qt);

        const auto& prev = cores[k - 1];
        Eigen::MatrixXd merged = vertical_view(prev) * detail::view(qr.R).transpose();
        cores[k - 1] = core_from(prev.r_left(), prev.extent(), r_new, merged);
        cores[k] = std::move(new_k);
    }
}

}  // namespace

TTTensor right_orthogonalize(const TTTensor& t) {
    auto cores = t.cores();
    right_orthogonalize_cores(cores);
    return TTTensor(std::move(cores));
}

namespace {

// One QR + SVD sweep with the threshold relative to the norm of t (order >= 2).
TTTensor round_sweep(const TTTensor& t, double tau_rel_frob) {
    auto cores = t.cores();
    const auto d = cores.size();
    right_orthogonalize_cores(cores);
    const double norm = frobenius_norm(cores.front().values());
    if (norm == 0.0) return TTTensor::zeros(t.dims());

    const double delta = tau_rel_frob * norm / std::sqrt(static_cast<double>(d - 1));

    for (std::size_t k = 0; k + 1 < d; ++k) {
        const auto& ck = cores[k];
        auto svd = truncated_svd(ck.vertical(), delta, false);
        const auto r_new = svd.rank();
        TTCore new_k(ck.r_left(), ck.extent(), r_new,
                     std::vector<double>(svd.U.values().begin(), svd.U.values().end()));

        // Y_{k+1} <- (U^T Y_k) reshape(Y_{k+1}, [r_k, n_{k+1} r_{k+1}])
        const auto& next = cores[k + 1];
        Eigen::MatrixXd svt = detail::view(svd.U).transpose() * vertical_view(ck);
        Eigen::MatrixXd merged = svt * horizontal_view(next);
        cores[k + 1] = core_from(r_new, next.extent(), next.r_right(), merged);
        cores[k] = std::move(new_k);
    }
    return TTTensor(std::move(cores));
}

// a - b with block-diagonal interior cores.
TTTensor tt_difference(const TTTensor& a, const TTTensor& b) {
    const auto d = a.order();
    std::vector<TTCore> cores;
    for (std::size_t k = 0; k < d; ++k) {
        const auto& ca = a.core(k);
        const auto& cb = b.core(k);
        const std::size_t rl = k == 0 ? 1 : ca.r_left() + cb.r_left();
        const std::size_t rr = k + 1 == d ? 1 : ca.r_right() + cb.r_right();
        const std::size_t ol = k == 0 ? 0 : ca.r_left(), orr = k + 1 == d ? 0 : ca.r_right();
        const double sign = k == 0 ? -1.0 : 1.0;
        TTCore c(rl, ca.extent(), rr);
        for (std::size_t i = 0; i < ca.extent(); ++i) {
            for (std::size_t x = 0; x < ca.r_left(); ++x)
                for (std::size_t y = 0; y < ca.r_right(); ++y) c(x, i, y) = ca(x, i, y);
            for (std::size_t x = 0; x < cb.r_left(); ++x)
                for (std::size_t y = 0; y < cb.r_right(); ++y) c(ol + x, i, orr + y) = sign * cb(x, i, y);
        }
        cores.push_back(std::move(c));
    }
    return TTTensor(std::move(cores));
}

}  // namespace

TTTensor tt_round(const TTTensor& t, double tau_rel_frob) {
    check_tau(tau_rel_frob);
    if (t.order() == 0) throw StructureError("tt_round: empty TT tensor");
    if (t.order() == 1) return t;

    TTTensor y = round_sweep(t, tau_rel_frob);
    if (tau_rel_frob == 0.0) return y;
    // A single sweep can leave ranks that a second sweep at the same tolerance would drop.
    // Sweep again while the measured error against t stays within budget.
    const double norm = tt_norm(t);
    const double budget = tau_rel_frob * norm - 1e-13 * norm;
    while (true) {
        TTTensor z = round_sweep(y, tau_rel_frob);
        if (z.ranks() == y.ranks() || !(tt_norm(tt_difference(t, z)) <= budget)) return y;
        y = std::move(z);
    }
}

// Access and reconstruction -------------------------------------------------

double tt_get(const TTTensor& t, std::span<const std::size_t> indices) {
    const auto& cores = t.cores();
    if (indices.size() != cores.size())
        throw RangeError("tt_get: index has " + std::to_string(indices.size()) + " entries, tensor has " +
                         std::to_string(cores.size()) + " dimensions");
    for (std::size_t k = 0; k < cores.size(); ++k)
        if (indices[k] < 1 || indices[k] > cores[k].extent())
            throw RangeError("tt_get: index " + std::to_string(indices[k]) + " out of range 1.." +
                             std::to_string(cores[k].extent()) + " on axis " + std::to_string(k + 1));

    std::vector<double> row{1.0};
    std::vector<double> next;
    for (std::size_t k = 0; k < cores.size(); ++k) {
        const auto& c = cores[k];
        const auto i = indices[k] - 1;
        next.assign(c.r_right(), 0.0);
        for (std::size_t b = 0; b < c.r_right(); ++b) {
            double s = 0.0;
            for (std::size_t a = 0; a < c.r_left(); ++a) s += row[a] * c(a, i, b);
            next[b] = s;
        }
        row.swap(next);
    }
    return row[0];
}

std::size_t default_memory_cap() {
    if (const char* env = std::getenv("QTT_MEMORY_CAP_ENTRIES")) {
        char* end = nullptr;
        auto v = std::strtoull(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    }
    return std::size_t{1} << 31;
}

DenseTensor tt_full(const TTTensor& t, std::optional<std::size_t> cap) {
    const auto limit = cap.value_or(default_memory_cap());
    const auto dims = t.dims();
    double total = 1.0;
    for (auto n : dims) total *= static_cast<double>(n);
    if (total > static_cast<double>(limit))
        throw CapacityError("tt_full: " + std::to_string(static_cast<unsigned long long>(total)) +
                            " entries exceed the cap of " + std::to_string(limit));

    const auto& cores = t.cores();
    // W has shape (n_1 ... n_k) x r_k; W <- reshape(W reshape(core_{k+1}, [r_k, n r]), [.., r])
    Eigen::MatrixXd w = vertical_view(cores.front());
    std::size_t leading = cores.front().extent();
    for (std::size_t k = 1; k < cores.size(); ++k) {
        const auto& c = cores[k];
        if (static_cast<double>(leading) * static_cast<double>(c.extent() * c.r_right()) > static_cast<double>(limit))
            throw CapacityError("tt_full: intermediate product exceeds the memory cap");
        Eigen::MatrixXd prod = w * horizontal_view(c);
        leading *= c.extent();
        w = Eigen::Map<Eigen::MatrixXd>(prod.data(), static_cast<Eigen::Index>(leading),
                                        static_cast<Eigen::Index>(c.r_right()));
    }
    return DenseTensor(dims, std::vector<double>(w.data(), w.data() + w.size()));
}

double tt_norm(const TTTensor& t) {
    auto cores = t.cores();
    if (cores.size() > 1) right_orthogonalize_cores(cores);
    return frobenius_norm(cores.front().values());
}

double compression_ratio(const TTTensor& t) {
    double full = 1.0;
    for (auto n : t.dims()) full *= static_cast<double>(n);
    return full / static_cast<double>(t.storage());
}

// Combination primitives -----------------------------------------------------

TTTensor tt_concat_existing(const TTTensor& a, const TTTensor& b, std::size_t axis) {
    const auto da = a.dims();
    const auto db = b.dims();
    if (da.size() != db.size())
        throw ShapeError("tt_concat_existing: tensors have different orders");
    if (axis < 1 || axis > da.size())
        throw RangeError("tt_concat_existing: axis " + std::to_string(axis) + " out of range");
    const auto ax = axis - 1;
    for (std::size_t k = 0; k < da.size(); ++k)
        if (k != ax && da[k] != db[k])
            throw ShapeError("tt_concat_existing: extents differ on axis " + std::to_string(k + 1));

    const auto d = da.size();
    if (d == 1) {
        std::vector<double> v(a.core(0).values().begin(), a.core(0).values().end());
        v.insert(v.end(), b.core(0).values().begin(), b.core(0).values().end());
        return TTTensor({TTCore(1, da[0] + db[0], 1, std::move(v))});
    }

    std::vector<TTCore> cores;
    cores.reserve(d);
    for (std::size_t k = 0; k < d; ++k) {
        const auto& ca = a.core(k);
        const auto& cb = b.core(k);
        const bool first = k == 0;
        const bool last = k + 1 == d;
        // boundary ranks are shared; interior blocks sit on the diagonal
        const std::size_t rl = first ? 1 : ca.r_left() + cb.r_left();
        const std::size_t rr = last ? 1 : ca.r_right() + cb.r_right();
        const std::size_t b_row = first ? 0 : ca.r_left();
        const std::size_t b_col = last ? 0 : ca.r_right();
        const std::size_t n = k == ax ? ca.extent() + cb.extent() : ca.extent();
        const std::size_t b_mode = k == ax ? ca.extent() : 0;

        TTCore c(rl, n, rr);
        for (std::size_t i = 0; i < ca.extent(); ++i)
            for (std::size_t q = 0; q < ca.r_right(); ++q)
                for (std::size_t p = 0; p < ca.r_left(); ++p) c(p, i, q) = ca(p, i, q);
        for (std::size_t i = 0; i < cb.extent(); ++i)
            for (std::size_t q = 0; q < cb.r_right(); ++q)
                for (std::size_t p = 0; p < cb.r_left(); ++p) c(b_row + p, b_mode + i, b_col + q) = cb(p, i, q);
        cores.push_back(std::move(c));
    }
    return TTTensor(std::move(cores));
}

TTTensor tt_stack_new(std::span<const TTTensor> parts) {
    if (parts.empty()) throw ShapeError("tt_stack_new: need at least one part");
    const auto dims = parts.front().dims();
    for (std::size_t p = 1; p < parts.size(); ++p)
        if (parts[p].dims() != dims)
            throw ShapeError("tt_stack_new: part " + std::to_string(p + 1) + " has different extents");

    const auto d = dims.size();
    const auto l = parts.size();
    std::vector<TTCore> cores;
    cores.reserve(d + 1);
    std::vector<std::size_t> row_off(l, 0), col_off(l, 0);
    std::size_t rl_total = 1;
    for (std::size_t k = 0; k < d; ++k) {
        std::size_t rr_total = 0;
        for (std::size_t p = 0; p < l; ++p) {
            col_off[p] = rr_total;
            rr_total += parts[p].core(k).r_right();
        }
        TTCore c(rl_total, dims[k], rr_total);
        for (std::size_t p = 0; p < l; ++p) {
            const auto& cp = parts[p].core(k);
            const std::size_t ro = k == 0 ? 0 : row_off[p];
            for (std::size_t i = 0; i < cp.extent(); ++i)
                for (std::size_t q = 0; q < cp.r_right(); ++q)
                    for (std::size_t a = 0; a < cp.r_left(); ++a) c(ro + a, i, col_off[p] + q) = cp(a, i, q);
        }
        cores.push_back(std::move(c));
        row_off = col_off;
        rl_total = rr_total;
    }
    // trailing core: slice i is the i-th canonical basis column of the l x l identity
    TTCore e(l, l, 1);
    for (std::size_t i = 0; i < l; ++i) e(i, i, 0) = 1.0;
    cores.push_back(std::move(e));
    return TTTensor(std::move(cores));
}

}  // namespace qtt

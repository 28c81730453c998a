#include "qtt/tensorize.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <numeric>

#include "qtt/errors.hpp"

namespace qtt {

namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t log2_exact(std::size_t n) {
    std::size_t d = 0;
    while ((std::size_t{1} << d) < n) ++d;
    return d;
}

std::size_t product(std::span<const std::size_t> v) {
    return std::accumulate(v.begin(), v.end(), std::size_t{1}, std::multiplies<>());
}

// inner x n x outer view of a tensor along one axis (0-based)
struct AxisSplit {
    std::size_t inner = 1, n = 1, outer = 1;
};

AxisSplit split_at(const Extents& dims, std::size_t axis) {
    AxisSplit s;
    for (std::size_t j = 0; j < axis; ++j) s.inner *= dims[j];
    s.n = dims[axis];
    for (std::size_t j = axis + 1; j < dims.size(); ++j) s.outer *= dims[j];
    return s;
}

std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> perm) {
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t k = 0; k < perm.size(); ++k) inv[perm[k]] = k;
    return inv;
}

const char* pad_name(PadStrategy s) { return s == PadStrategy::replicate ? "replicate" : "none"; }

}  // namespace

std::optional<std::vector<std::size_t>> factor_dims(std::size_t n, std::size_t max_factor) {
    if (n < 1) throw RangeError("factor_dims: extent must be >= 1");
    if (max_factor < 2) throw RangeError("factor_dims: max_factor must be >= 2");
    std::vector<std::size_t> f;
    for (std::size_t p = 2; p <= max_factor && n > 1; ++p) {
        while (n % p == 0) {
            f.push_back(p);
            n /= p;
        }
    }
    if (n != 1) return std::nullopt;
    return f;
}

std::size_t next_smooth(std::size_t n, std::size_t max_factor) {
    if (max_factor < 2) throw RangeError("next_smooth: max_factor must be >= 2");
    std::size_t m = std::max<std::size_t>(n, 1);
    while (!factor_dims(m, max_factor)) ++m;
    return m;
}

DenseTensor tensorize_vector(const DenseTensor& v, std::size_t level) {
    if (v.order() != 1) throw ShapeError("tensorize_vector: expected a vector");
    const std::size_t n = v.dims()[0];
    if (!is_power_of_two(n)) throw PlanError("tensorize_vector: length " + std::to_string(n) + " is not a power of two");
    const std::size_t d = log2_exact(n);
    if (level < 1 || level > std::max<std::size_t>(d, 1))
        throw PlanError("tensorize_vector: level must lie in [1, " + std::to_string(d) + "]");
    Extents dims{std::size_t{1} << (d - level + 1)};
    if (d == 0) dims[0] = 1;
    for (std::size_t k = 1; k < level; ++k) dims.push_back(2);
    return reshape(v, dims);
}

DenseTensor tensorize_matrix_interlaced(const DenseMatrix& m, std::size_t level) {
    if (m.rows() != m.cols() || !is_power_of_two(m.rows()))
        throw PlanError("tensorize_matrix_interlaced: matrix must be square with power-of-two side");
    const std::size_t d = log2_exact(m.rows());
    if (level < 1 || level > std::max<std::size_t>(d, 1))
        throw PlanError("tensorize_matrix_interlaced: level must lie in [1, " + std::to_string(d) + "]");
    TensorizePlan plan = make_plan({m.rows(), m.cols()}, PlanOptions{2, {level, level}, {0, 1}, {}});
    DenseTensor t({m.rows(), m.cols()}, std::vector<double>(m.values().begin(), m.values().end()));
    return apply_plan(t, plan);
}

DenseMatrix untensorize_matrix_interlaced(const DenseTensor& t, std::size_t level) {
    const std::size_t n = std::sqrt(static_cast<double>(t.size())) + 0.5;
    if (n * n != t.size() || !is_power_of_two(n))
        throw PlanError("untensorize_matrix_interlaced: tensor does not hold a square power-of-two matrix");
    TensorizePlan plan = make_plan({n, n}, PlanOptions{2, {level, level}, {0, 1}, {}});
    auto back = invert_plan(t, plan);
    return DenseMatrix(n, n, std::move(back).release());
}

std::pair<DenseTensor, PadRecord> pad_replicate(const DenseTensor& t, std::size_t axis, std::size_t target_extent) {
    if (axis < 1 || axis > t.order()) throw RangeError("pad_replicate: axis out of range");
    const auto s = split_at(t.dims(), axis - 1);
    if (target_extent < s.n) throw RangeError("pad_replicate: target extent below current extent");
    if (s.n == 0) throw ShapeError("pad_replicate: cannot replicate an empty axis");
    PadRecord rec{s.n, target_extent, target_extent > s.n ? PadStrategy::replicate : PadStrategy::none};
    if (target_extent == s.n) return {t, rec};

    Extents dims = t.dims();
    dims[axis - 1] = target_extent;
    std::vector<double> out(num_entries(dims));
    const auto src = t.values();
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t k = 0; k < target_extent; ++k) {
            const std::size_t ks = std::min(k, s.n - 1);
            std::copy_n(src.begin() + s.inner * (ks + s.n * o), s.inner,
                        out.begin() + s.inner * (k + target_extent * o));
        }
    }
    return {DenseTensor(std::move(dims), std::move(out)), rec};
}

DenseTensor crop(const DenseTensor& t, std::size_t axis, std::size_t extent) {
    if (axis < 1 || axis > t.order()) throw RangeError("crop: axis out of range");
    const auto s = split_at(t.dims(), axis - 1);
    if (extent > s.n) throw RangeError("crop: extent exceeds current extent");
    if (extent == s.n) return t;
    Extents dims = t.dims();
    dims[axis - 1] = extent;
    std::vector<double> out(num_entries(dims));
    const auto src = t.values();
    for (std::size_t o = 0; o < s.outer; ++o)
        std::copy_n(src.begin() + s.inner * s.n * o, s.inner * extent, out.begin() + s.inner * extent * o);
    return DenseTensor(std::move(dims), std::move(out));
}

std::vector<std::size_t> AxisPlan::grouped_dims() const {
    if (factors.empty()) return {1};
    const std::size_t leaf_count = factors.size() - level + 1;
    std::vector<std::size_t> g{product(std::span(factors).first(leaf_count))};
    g.insert(g.end(), factors.begin() + leaf_count, factors.end());
    return g;
}

Extents TensorizePlan::padded_dims() const {
    Extents d;
    for (const auto& a : axes) d.push_back(a.pad.padded_extent);
    return d;
}

Extents TensorizePlan::split_dims() const {
    Extents d;
    for (const auto& a : axes) {
        auto g = a.grouped_dims();
        d.insert(d.end(), g.begin(), g.end());
    }
    return d;
}

std::vector<std::size_t> TensorizePlan::axis_permutation() const {
    std::vector<std::vector<std::size_t>> groups;
    std::size_t pos = 0;
    for (const auto& a : axes) {
        std::vector<std::size_t> g(a.grouped_dims().size());
        std::iota(g.begin(), g.end(), pos);
        pos += g.size();
        groups.push_back(std::move(g));
    }
    std::vector<std::size_t> perm;
    const std::size_t first = interlace.empty() ? axes.size() : *std::min_element(interlace.begin(), interlace.end());
    for (std::size_t a = 0; a < axes.size(); ++a) {
        const bool member = std::find(interlace.begin(), interlace.end(), a) != interlace.end();
        if (a == first) {
            for (std::size_t k = 0; k < groups[interlace.front()].size(); ++k)
                for (auto s : interlace) perm.push_back(groups[s][k]);
        } else if (!member) {
            perm.insert(perm.end(), groups[a].begin(), groups[a].end());
        }
    }
    return perm;
}

Extents TensorizePlan::tensorized_dims() const {
    const auto split = split_dims();
    Extents d;
    for (auto p : axis_permutation()) d.push_back(split[p]);
    return d;
}

bool TensorizePlan::has_padding() const {
    return std::any_of(axes.begin(), axes.end(),
                       [](const AxisPlan& a) { return a.pad.padded_extent != a.pad.original_extent; });
}

bool TensorizePlan::is_identity() const {
    return !has_padding() && interlace.empty() &&
           std::all_of(axes.begin(), axes.end(), [](const AxisPlan& a) { return a.grouped_dims().size() == 1; });
}

void validate_plan(const TensorizePlan& plan) {
    if (plan.axes.size() != plan.original_dims.size()) throw PlanError("plan: axis count does not match original dims");
    for (std::size_t k = 0; k < plan.axes.size(); ++k) {
        const auto& a = plan.axes[k];
        const std::string where = "plan axis " + std::to_string(k + 1) + ": ";
        if (a.pad.original_extent != plan.original_dims[k]) throw PlanError(where + "pad record disagrees with original extent");
        if (a.pad.padded_extent < a.pad.original_extent) throw PlanError(where + "padded extent below original");
        if (product(a.factors) != a.pad.padded_extent) throw PlanError(where + "factor product differs from padded extent");
        if (a.level < 1 || a.level > a.depth()) throw PlanError(where + "level outside [1, depth]");
        if ((a.pad.strategy == PadStrategy::none) != (a.pad.padded_extent == a.pad.original_extent))
            throw PlanError(where + "pad strategy inconsistent with extents");
    }
    if (!plan.interlace.empty()) {
        std::vector<std::size_t> seen;
        for (auto s : plan.interlace) {
            if (s >= plan.axes.size()) throw PlanError("plan: interlace axis out of range");
            if (std::find(seen.begin(), seen.end(), s) != seen.end()) throw PlanError("plan: repeated interlace axis");
            seen.push_back(s);
            if (plan.axes[s].grouped_dims().size() != plan.axes[plan.interlace.front()].grouped_dims().size())
                throw PlanError("plan: interlaced axes must have equal levels");
        }
    }
}

TensorizePlan identity_plan(const Extents& dims) {
    TensorizePlan plan;
    plan.original_dims = dims;
    for (auto n : dims) plan.axes.push_back(AxisPlan{n == 1 ? std::vector<std::size_t>{} : std::vector<std::size_t>{n}, 1,
                                                     PadRecord{n, n, PadStrategy::none}});
    return plan;
}

TensorizePlan make_plan(const Extents& dims, const PlanOptions& options) {
    TensorizePlan plan;
    plan.original_dims = dims;
    plan.interlace = options.interlace;
    for (std::size_t k = 0; k < dims.size(); ++k) {
        const std::size_t n = dims[k];
        if (n == 0) throw ShapeError("make_plan: zero extent");
        const std::size_t requested = k < options.levels.size() ? options.levels[k] : 0;
        AxisPlan a;
        a.pad = PadRecord{n, n, PadStrategy::none};
        if (requested == 1) {
            if (n > 1) a.factors = {n};
            a.level = 1;
        } else {
            const std::size_t target = k < options.pad_to.size() ? options.pad_to[k] : 0;
            auto f = factor_dims(n, options.max_factor);
            if (target != 0 && target != n) {
                if (target < n) throw PlanError("make_plan: pad target below extent on axis " + std::to_string(k + 1));
                a.pad.padded_extent = target;
                a.pad.strategy = PadStrategy::replicate;
                f = factor_dims(target, options.max_factor);
                if (!f) throw PlanError("make_plan: pad target " + std::to_string(target) + " is not factorable");
            } else if (!f) {
                a.pad.padded_extent = next_smooth(n, options.max_factor);
                a.pad.strategy = PadStrategy::replicate;
                f = factor_dims(a.pad.padded_extent, options.max_factor);
            }
            a.factors = *f;
            a.level = requested == 0 ? a.depth() : requested;
            if (a.level > a.depth())
                throw PlanError("make_plan: level " + std::to_string(requested) + " exceeds depth " +
                                std::to_string(a.depth()) + " of axis " + std::to_string(k + 1));
        }
        plan.axes.push_back(std::move(a));
    }
    validate_plan(plan);
    return plan;
}

DenseTensor apply_plan(const DenseTensor& data, const TensorizePlan& plan) {
    validate_plan(plan);
    if (data.dims() != plan.original_dims) throw PlanError("apply_plan: data dims do not match plan");
    DenseTensor t = data;
    for (std::size_t k = 0; k < plan.axes.size(); ++k)
        if (plan.axes[k].pad.strategy == PadStrategy::replicate)
            t = pad_replicate(t, k + 1, plan.axes[k].pad.padded_extent).first;
    t = reshape(std::move(t), plan.split_dims());
    if (!plan.interlace.empty()) t = permute_axes(t, plan.axis_permutation());
    return t;
}

DenseTensor invert_plan(const DenseTensor& data, const TensorizePlan& plan) {
    validate_plan(plan);
    if (data.dims() != plan.tensorized_dims()) throw PlanError("invert_plan: data dims do not match plan");
    DenseTensor t = data;
    if (!plan.interlace.empty()) t = permute_axes(t, inverse_permutation(plan.axis_permutation()));
    t = reshape(std::move(t), plan.padded_dims());
    for (std::size_t k = 0; k < plan.axes.size(); ++k)
        if (plan.axes[k].pad.strategy == PadStrategy::replicate) t = crop(t, k + 1, plan.axes[k].pad.original_extent);
    return t;
}

MultiIndex tensorized_index(const TensorizePlan& plan, std::span<const std::size_t> original) {
    if (original.size() != plan.axes.size()) throw RangeError("tensorized_index: index order mismatch");
    MultiIndex split;
    for (std::size_t k = 0; k < plan.axes.size(); ++k) {
        if (original[k] < 1 || original[k] > plan.axes[k].pad.original_extent)
            throw RangeError("tensorized_index: index out of range on axis " + std::to_string(k + 1));
        std::size_t r = original[k] - 1;
        for (auto g : plan.axes[k].grouped_dims()) {
            split.push_back(r % g + 1);
            r /= g;
        }
    }
    if (plan.interlace.empty()) return split;
    MultiIndex out;
    for (auto p : plan.axis_permutation()) out.push_back(split[p]);
    return out;
}

void to_json(nlohmann::json& j, const TensorizePlan& plan) {
    j = nlohmann::json::object();
    j["original_dims"] = plan.original_dims;
    j["interlace"] = plan.interlace;
    auto axes = nlohmann::json::array();
    for (const auto& a : plan.axes)
        axes.push_back({{"factors", a.factors},
                        {"level", a.level},
                        {"original_extent", a.pad.original_extent},
                        {"padded_extent", a.pad.padded_extent},
                        {"pad", pad_name(a.pad.strategy)}});
    j["axes"] = std::move(axes);
}

void from_json(const nlohmann::json& j, TensorizePlan& plan) {
    try {
        plan.original_dims = j.at("original_dims").get<Extents>();
        plan.interlace = j.at("interlace").get<std::vector<std::size_t>>();
        plan.axes.clear();
        for (const auto& a : j.at("axes")) {
            AxisPlan ap;
            ap.factors = a.at("factors").get<std::vector<std::size_t>>();
            ap.level = a.at("level").get<std::size_t>();
            ap.pad.original_extent = a.at("original_extent").get<std::size_t>();
            ap.pad.padded_extent = a.at("padded_extent").get<std::size_t>();
            const auto s = a.at("pad").get<std::string>();
            if (s == "replicate") ap.pad.strategy = PadStrategy::replicate;
            else if (s == "none") ap.pad.strategy = PadStrategy::none;
            else throw PlanError("plan JSON: unknown pad strategy '" + s + "'");
            plan.axes.push_back(std::move(ap));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("plan JSON: ") + e.what());
    }
    validate_plan(plan);
}

}  // namespace qtt

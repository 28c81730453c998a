#include "qtt/spatial_order.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "qtt/errors.hpp"

namespace qtt {

DomainTransform fit_domain(std::span<const Point3> points) {
    if (points.empty()) throw ShapeError("fit_domain: no points");
    Point3 lo = points[0], hi = points[0];
    for (const auto& p : points) {
        for (int a = 0; a < 3; ++a) {
            if (!std::isfinite(p[a])) throw DataError("fit_domain: non-finite coordinate");
            lo[a] = std::min(lo[a], p[a]);
            hi[a] = std::max(hi[a], p[a]);
        }
    }
    DomainTransform t;
    for (int a = 0; a < 3; ++a) {
        const double extent = hi[a] - lo[a];
        if (extent > 0.0) {
            t.shift[a] = lo[a];
            t.scale[a] = 1.0 / (extent * (1.0 + kDomainMargin));
            // guard against rounding pushing the maximum onto 1
            while ((hi[a] - t.shift[a]) * t.scale[a] >= 1.0) t.scale[a] = std::nextafter(t.scale[a], 0.0);
        } else {
            t.shift[a] = lo[a] - 0.5;
            t.scale[a] = 1.0;
        }
    }
    return t;
}

MortonKey morton_id(const Point3& p, unsigned b) {
    if (b < 1 || b > kMaxMortonBits) throw RangeError("morton_id: bit depth must lie in [1, 21]");
    std::array<std::uint64_t, 3> q{};
    const double cells = std::ldexp(1.0, static_cast<int>(b));
    for (int a = 0; a < 3; ++a) {
        if (!(p[a] >= 0.0 && p[a] < 1.0))
            throw RangeError("morton_id: coordinate " + std::to_string(p[a]) + " outside [0, 1)");
        q[a] = static_cast<std::uint64_t>(p[a] * cells);
    }
    std::uint64_t key = 0;
    for (int level = static_cast<int>(b) - 1; level >= 0; --level)
        key = (key << 3) | (((q[0] >> level) & 1) << 2) | (((q[1] >> level) & 1) << 1) | ((q[2] >> level) & 1);
    return {key, b};
}

unsigned choose_bits(double min_extent) {
    if (!(min_extent > 0.0)) return kDefaultMortonBits;
    unsigned b = 1;
    while (b < kMaxMortonBits && !(std::ldexp(1.0, -static_cast<int>(b)) < min_extent)) ++b;
    return b;
}

std::vector<std::size_t> morton_sort(std::span<const Point3> points, unsigned b) {
    std::vector<std::uint64_t> keys(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) keys[i] = morton_id(points[i], b).bits;
    std::vector<std::size_t> perm(points.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::stable_sort(perm.begin(), perm.end(), [&](std::size_t x, std::size_t y) { return keys[x] < keys[y]; });
    return perm;
}

std::vector<std::size_t> morton_order(std::span<const Point3> points, unsigned b) {
    const auto t = fit_domain(points);
    std::vector<Point3> mapped(points.size());
    std::transform(points.begin(), points.end(), mapped.begin(), [&](const Point3& p) { return t.apply(p); });
    return morton_sort(mapped, b);
}

}  // namespace qtt

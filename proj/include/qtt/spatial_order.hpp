#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace qtt {

using Point3 = std::array<double, 3>;

/// Affine map p -> (p - shift) * scale into the half-open unit cube.
struct DomainTransform {
    Point3 shift{0.0, 0.0, 0.0};
    Point3 scale{1.0, 1.0, 1.0};

    Point3 apply(const Point3& p) const noexcept {
        return {(p[0] - shift[0]) * scale[0], (p[1] - shift[1]) * scale[1], (p[2] - shift[2]) * scale[2]};
    }
};

inline constexpr double kDomainMargin = 1e-9;
inline constexpr unsigned kMaxMortonBits = 21;
inline constexpr unsigned kDefaultMortonBits = 16;

/// Bounding-box normalization with a small relative margin so maxima stay below 1.
/// A zero-extent axis keeps scale 1 and is centred at 0.5.
DomainTransform fit_domain(std::span<const Point3> points);

struct MortonKey {
    std::uint64_t bits = 0;
    unsigned b = 0;

    friend bool operator==(const MortonKey&, const MortonKey&) = default;
};

/// Interlaces the first b binary digits of x, y, z, most significant level first.
MortonKey morton_id(const Point3& p, unsigned b);

/// Smallest b with 2^-b < min_extent, clamped to [1, 21]; the default for nonpositive input.
unsigned choose_bits(double min_extent);

/// Stable ordering by Morton key; entry k is the 0-based original index of the k-th point.
std::vector<std::size_t> morton_sort(std::span<const Point3> points, unsigned b);

/// fit_domain followed by morton_sort on the mapped points.
std::vector<std::size_t> morton_order(std::span<const Point3> points, unsigned b);

}  // namespace qtt

#include "qtt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include "qtt/errors.hpp"

namespace qtt {

namespace {

void require_same_size(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ShapeError("metric inputs differ in size");
    if (x.empty()) throw ShapeError("metric inputs are empty");
}

}  // namespace

double nrmse(std::span<const double> x, std::span<const double> y) {
    require_same_size(x, y);
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) throw DegenerateError("nrmse: reference data is constant");
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - y[i]) * (x[i] - y[i]);
    return std::sqrt(sq / static_cast<double>(x.size())) / range;
}

double nrmse(const DenseTensor& x, const DenseTensor& y) {
    if (x.dims() != y.dims()) throw ShapeError("nrmse: dims differ");
    return nrmse(x.values(), y.values());
}

double rel_frob(std::span<const double> x, std::span<const double> y) {
    require_same_size(x, y);
    const double nx = frobenius_norm(x);
    if (!(nx > 0.0)) throw DegenerateError("rel_frob: reference data has zero norm");
    std::vector<double> diff(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) diff[i] = x[i] - y[i];
    return frobenius_norm(diff) / nx;
}

double rel_frob(const DenseTensor& x, const DenseTensor& y) {
    if (x.dims() != y.dims()) throw ShapeError("rel_frob: dims differ");
    return rel_frob(x.values(), y.values());
}

double autocorrelation(std::span<const double> y, std::size_t k) {
    const std::size_t n = y.size();
    if (n < 2) throw ShapeError("autocorrelation: series needs at least two values");
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : y) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    if (!(var > 0.0)) throw DegenerateError("autocorrelation: series has zero variance");
    if (k == 0) return 1.0;
    if (k >= n) return 0.0;
    double cov = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) cov += (y[i] - mean) * (y[i + k] - mean);
    cov /= static_cast<double>(n - k);
    return cov / var;
}

AutocorrelationProfile autocorrelation_profile(const DenseTensor& data, std::size_t time_axis, std::size_t max_lag) {
    if (time_axis < 1 || time_axis > data.order()) throw RangeError("autocorrelation_profile: time axis out of range");
    const auto& dims = data.dims();
    std::size_t inner = 1, outer = 1;
    for (std::size_t j = 0; j + 1 < time_axis; ++j) inner *= dims[j];
    for (std::size_t j = time_axis; j < dims.size(); ++j) outer *= dims[j];
    const std::size_t n = dims[time_axis - 1];

    AutocorrelationProfile prof;
    prof.mean.assign(max_lag + 1, 0.0);
    std::vector<double> fiber(n);
    const auto v = data.values();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            for (std::size_t t = 0; t < n; ++t) fiber[t] = v[i + inner * (t + n * o)];
            try {
                for (std::size_t k = 0; k <= max_lag; ++k) prof.mean[k] += autocorrelation(fiber, k);
                ++prof.fibers_used;
            } catch (const DegenerateError&) {
                ++prof.fibers_degenerate;
            }
        }
    }
    if (prof.fibers_used == 0) throw DegenerateError("autocorrelation_profile: every fiber is constant");
    for (auto& m : prof.mean) m /= static_cast<double>(prof.fibers_used);
    return prof;
}

MetricsReport measure(std::span<const double> x, std::span<const double> y) {
    require_same_size(x, y);
    MetricsReport r;
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    r.x_min = *lo;
    r.x_max = *hi;
    r.entry_count = x.size();
    r.rel_frob = frobenius_norm(x) > 0.0 ? rel_frob(x, y) : NAN;
    if (r.x_max > r.x_min) {
        r.nrmse = nrmse(x, y);
    } else {
        // constant data: only an exact reconstruction has a meaningful nRMSE
        bool exact = std::equal(x.begin(), x.end(), y.begin());
        r.nrmse = exact ? 0.0 : NAN;
    }
    return r;
}

void to_json(nlohmann::json& j, const MetricsReport& r) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    j = {{"variable", r.variable},
         {"level", r.level},
         {"nrmse", num(r.nrmse)},
         {"rel_frob", num(r.rel_frob)},
         {"compression_ratio_cores_only", num(r.compression_ratio_cores_only)},
         {"compression_ratio_total_archive", num(r.compression_ratio_total_archive)},
         {"entry_count", r.entry_count},
         {"x_min", r.x_min},
         {"x_max", r.x_max}};
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsReport> reports) {
    out << "variable,level,nrmse,rel_frob,ratio_cores,ratio_archive,entries,x_min,x_max\n";
    out << std::setprecision(10);
    for (const auto& r : reports)
        out << r.variable << ',' << r.level << ',' << r.nrmse << ',' << r.rel_frob << ','
            << r.compression_ratio_cores_only << ',' << r.compression_ratio_total_archive << ',' << r.entry_count
            << ',' << r.x_min << ',' << r.x_max << '\n';
}

}  // namespace qtt

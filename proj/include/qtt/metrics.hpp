#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "qtt/dense_tensor.hpp"

namespace qtt {

/// sqrt(mean squared error) / (x_max - x_min), extrema from x. DegenerateError for constant x.
double nrmse(std::span<const double> x, std::span<const double> y);
double nrmse(const DenseTensor& x, const DenseTensor& y);

/// ||x - y||_F / ||x||_F. DegenerateError for zero x.
double rel_frob(std::span<const double> x, std::span<const double> y);
double rel_frob(const DenseTensor& x, const DenseTensor& y);

/// k-lag sample autocorrelation; 1 at k = 0, 0 for k >= n. DegenerateError for zero variance.
double autocorrelation(std::span<const double> series, std::size_t k);

struct AutocorrelationProfile {
    std::vector<double> mean;          // index k = lag
    std::size_t fibers_used = 0;
    std::size_t fibers_degenerate = 0;
};

/// Autocorrelation of every fiber along `time_axis` (1-based), averaged over all other axes,
/// for lags 0..max_lag. Constant fibers are skipped and counted.
AutocorrelationProfile autocorrelation_profile(const DenseTensor& data, std::size_t time_axis, std::size_t max_lag);

struct MetricsReport {
    std::string variable;
    std::size_t level = 0;
    double nrmse = 0.0;
    double rel_frob = 0.0;
    double compression_ratio_cores_only = 0.0;
    double compression_ratio_total_archive = 0.0;
    std::size_t entry_count = 0;
    double x_min = 0.0;
    double x_max = 0.0;
};

/// Metrics of y against the original x; ratios are filled in by the caller.
MetricsReport measure(std::span<const double> x, std::span<const double> y);

void to_json(nlohmann::json& j, const MetricsReport& r);
/// Fixed header: variable,level,nrmse,rel_frob,ratio_cores,ratio_archive,entries,x_min,x_max
void write_metrics_csv(std::ostream& out, std::span<const MetricsReport> reports);

}  // namespace qtt

#include "qtt/streaming.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <regex>

#include "codec.hpp"
#include "parallel.hpp"
#include "qtt/archive.hpp"
#include "qtt/errors.hpp"
#include "qtt/spatial_order.hpp"

namespace qtt {

namespace {

constexpr int kSegmentFormatVersion = 1;

std::size_t product(std::span<const std::size_t> v) {
    return std::accumulate(v.begin(), v.end(), std::size_t{1}, std::multiplies<>());
}

using detail::parallel_for;

// First `count` slices of axis 1 starting at `first`.
DenseTensor slice_leading(const DenseTensor& t, std::size_t first, std::size_t count) {
    const std::size_t n = t.dims()[0];
    const std::size_t rest = t.size() / n;
    Extents dims = t.dims();
    dims[0] = count;
    std::vector<double> v(count * rest);
    const auto src = t.values();
    for (std::size_t r = 0; r < rest; ++r)
        std::copy_n(src.begin() + first + n * r, count, v.begin() + count * r);
    return DenseTensor(std::move(dims), std::move(v));
}

bool stores_padding(const CompressedSegment& s) {
    return s.plan.has_padding() || s.timesteps() < s.segment_length() * s.base_segments();
}

// sqrt(sum (tau_i ||X_i||)^2) / ||X||: bound on the exact union before any rounding
double union_spent(std::span<const CompressedSegment> parts, const SegmentStats& merged) {
    if (!(merged.frobenius_norm > 0.0)) return 0.0;
    double sq = 0.0;
    for (const auto& p : parts) {
        const double e = p.tolerance_spent * p.stats.frobenius_norm;
        sq += e * e;
    }
    return std::sqrt(sq) / merged.frobenius_norm;
}

double budget_for(ToleranceKind kind, double value, const SegmentStats& stats) {
    if (kind == ToleranceKind::relfrob) return value;
    return nrmse_to_relfrob(value, stats).value_or(0.0);
}

SegmentStats union_stats(std::span<const CompressedSegment> parts) {
    SegmentStats s = parts.front().stats;
    for (std::size_t i = 1; i < parts.size(); ++i) s = SegmentStats::combine(s, parts[i].stats);
    return s;
}

// Rounds a merged TT so the added error stays below tau_round ||X|| with X the unpadded data.
TTTensor round_merged(const TTTensor& merged, double tau_round, double data_norm, bool padded) {
    if (!(tau_round > 0.0)) return merged;
    double tau = tau_round;
    if (padded) {
        const double n = tt_norm(merged);
        if (n > 0.0) tau *= std::min(1.0, data_norm / n);
    }
    return tt_round(merged, tau);
}

void finish_merge(CompressedSegment& out, std::span<const CompressedSegment> parts, double tau_round) {
    out.stats = union_stats(parts);
    out.tolerance_kind = parts.front().tolerance_kind;
    out.tolerance_value = parts.front().tolerance_value;
    out.tolerance_spent = compose_tolerance(union_spent(parts, out.stats), tau_round);
    out.tolerance_budget = budget_for(out.tolerance_kind, out.tolerance_value, out.stats);
    out.config_hash = parts.front().config_hash;
    out.level = 0;
    for (const auto& p : parts) out.level = std::max(out.level, p.level + 1);
}

void check_common(std::span<const CompressedSegment> parts, const char* what) {
    if (parts.empty()) throw MergeError(std::string(what) + ": no segments given");
    for (const auto& p : parts) {
        if (p.tolerance_kind != parts.front().tolerance_kind)
            throw MergeError(std::string(what) + ": segments use different tolerance kinds");
        if (p.tolerance_value != parts.front().tolerance_value)
            throw MergeError(std::string(what) + ": segments use different tolerance values");
    }
}

void check_contiguous(std::span<const CompressedSegment> parts, const char* what) {
    for (std::size_t i = 1; i < parts.size(); ++i)
        if (parts[i].time_range[0] != parts[i - 1].time_range[1] + 1)
            throw MergeError(std::string(what) + ": time ranges [" + std::to_string(parts[i - 1].time_range[0]) + ", " +
                             std::to_string(parts[i - 1].time_range[1]) + "] and [" +
                             std::to_string(parts[i].time_range[0]) + ", " + std::to_string(parts[i].time_range[1]) +
                             "] are not contiguous");
}

const PermutationBlock* block_for(const std::vector<PermutationBlock>& blocks, std::size_t t_global) {
    for (const auto& b : blocks)
        if (t_global >= b.time_first && t_global <= b.time_last) return &b;
    return nullptr;
}

unsigned pick_bits(const SnapshotBatch& batch, const CompressionConfig& c, std::span<const Point3> positions) {
    if (c.morton_bits != 0) return c.morton_bits;
    if (!batch.particle_radius || !(*batch.particle_radius > 0.0)) return kDefaultMortonBits;
    const auto t = fit_domain(positions);
    const double smallest_scale = *std::min_element(t.scale.begin(), t.scale.end());
    return choose_bits(2.0 * *batch.particle_radius * smallest_scale);
}

nlohmann::json stats_json(const SegmentStats& s) {
    return {{"x_min", s.x_min}, {"x_max", s.x_max}, {"frobenius_norm", s.frobenius_norm}, {"entry_count", s.entry_count}};
}

}  // namespace

std::string to_string(ToleranceKind k) { return k == ToleranceKind::nrmse ? "nrmse" : "relfrob"; }

std::string to_string(ReorderPolicy p) {
    switch (p) {
        case ReorderPolicy::none: return "none";
        case ReorderPolicy::per_segment: return "segment";
        case ReorderPolicy::per_timestep: return "timestep";
    }
    return "none";
}

std::string to_string(MergeMode m) { return m == MergeMode::stack ? "stack" : "concat"; }

ToleranceKind parse_tolerance_kind(const std::string& s) {
    if (s == "nrmse") return ToleranceKind::nrmse;
    if (s == "relfrob") return ToleranceKind::relfrob;
    throw ConfigError("unknown tolerance kind '" + s + "' (expected nrmse or relfrob)");
}

ReorderPolicy parse_reorder_policy(const std::string& s) {
    if (s == "segment") return ReorderPolicy::per_segment;
    if (s == "timestep") return ReorderPolicy::per_timestep;
    if (s == "none") return ReorderPolicy::none;
    throw ConfigError("unknown reorder policy '" + s + "' (expected segment, timestep or none)");
}

MergeMode parse_merge_mode(const std::string& s) {
    if (s == "stack") return MergeMode::stack;
    if (s == "concat") return MergeMode::concat;
    throw ConfigError("unknown merge mode '" + s + "' (expected stack or concat)");
}

void validate_config(const CompressionConfig& c) {
    if (!(c.tolerance >= 0.0) || !std::isfinite(c.tolerance)) throw ConfigError("tolerance must be finite and >= 0");
    if (c.segment_length < 1) throw ConfigError("segment_length must be >= 1");
    if (c.merge_arity < 2) throw ConfigError("merge_arity must be >= 2");
    if (c.max_factor < 2) throw ConfigError("max_factor must be >= 2");
    if (c.morton_bits > kMaxMortonBits) throw ConfigError("morton_bits must be <= 21");
    if (!(c.segment_share > 0.0 && c.segment_share <= 1.0)) throw ConfigError("segment_share must lie in (0, 1]");
    if (c.jobs < 1) throw ConfigError("jobs must be >= 1");
}

void to_json(nlohmann::json& j, const CompressionConfig& c) {
    j = {{"tolerance_kind", to_string(c.tolerance_kind)},
         {"tolerance", c.tolerance},
         {"segment_length", c.segment_length},
         {"merge_arity", c.merge_arity},
         {"merge_mode", to_string(c.merge_mode)},
         {"level", c.level},
         {"max_factor", c.max_factor},
         {"reorder", to_string(c.reorder)},
         {"morton_bits", c.morton_bits},
         {"segment_share", c.segment_share},
         {"jobs", c.jobs}};
}

void from_json(const nlohmann::json& j, CompressionConfig& c) {
    static const std::vector<std::string> known{"tolerance_kind", "tolerance", "segment_length", "merge_arity",
                                                "merge_mode",     "level",     "max_factor",     "reorder",
                                                "morton_bits",    "segment_share", "jobs"};
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown config key '" + key + "'");
    try {
        if (j.contains("tolerance_kind")) c.tolerance_kind = parse_tolerance_kind(j.at("tolerance_kind").get<std::string>());
        if (j.contains("tolerance")) c.tolerance = j.at("tolerance").get<double>();
        if (j.contains("segment_length")) c.segment_length = j.at("segment_length").get<std::size_t>();
        if (j.contains("merge_arity")) c.merge_arity = j.at("merge_arity").get<std::size_t>();
        if (j.contains("merge_mode")) c.merge_mode = parse_merge_mode(j.at("merge_mode").get<std::string>());
        if (j.contains("level")) c.level = j.at("level").get<std::size_t>();
        if (j.contains("max_factor")) c.max_factor = j.at("max_factor").get<std::size_t>();
        if (j.contains("reorder")) c.reorder = parse_reorder_policy(j.at("reorder").get<std::string>());
        if (j.contains("morton_bits")) c.morton_bits = j.at("morton_bits").get<unsigned>();
        if (j.contains("segment_share")) c.segment_share = j.at("segment_share").get<double>();
        if (j.contains("jobs")) c.jobs = j.at("jobs").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid config value: ") + e.what());
    }
    validate_config(c);
}

std::string config_hash(const CompressionConfig& c) {
    nlohmann::json j = c;
    j.erase("jobs");
    return detail::sha256_hex(j.dump());
}

SegmentStats SegmentStats::of(std::span<const double> values) {
    SegmentStats s;
    if (values.empty()) return s;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    s.x_min = *lo;
    s.x_max = *hi;
    s.frobenius_norm = qtt::frobenius_norm(values);
    s.entry_count = values.size();
    return s;
}

SegmentStats SegmentStats::combine(const SegmentStats& a, const SegmentStats& b) {
    if (a.entry_count == 0) return b;
    if (b.entry_count == 0) return a;
    return {std::min(a.x_min, b.x_min), std::max(a.x_max, b.x_max), std::hypot(a.frobenius_norm, b.frobenius_norm),
            a.entry_count + b.entry_count};
}

std::optional<double> nrmse_to_relfrob(double tau_nrmse, const SegmentStats& stats) {
    if (!(tau_nrmse >= 0.0)) throw RangeError("nRMSE tolerance must be >= 0");
    const double range = stats.x_max - stats.x_min;
    if (!(range > 0.0) || !(stats.frobenius_norm > 0.0)) return std::nullopt;
    return range * std::sqrt(static_cast<double>(stats.entry_count)) / stats.frobenius_norm * tau_nrmse;
}

std::size_t CompressedSegment::base_segments() const { return product(stack_extents); }

Extents CompressedSegment::data_dims() const {
    Extents d = plan.original_dims;
    d[0] = timesteps();
    return d;
}

double CompressedSegment::compression_ratio() const {
    return static_cast<double>(stats.entry_count) / static_cast<double>(tt.storage());
}

CompressedSegment compress_tensor_segment(const DenseTensor& data, const CompressionConfig& config,
                                          std::size_t first_timestep, std::vector<PermutationBlock> permutations,
                                          const std::optional<SegmentStats>& running) {
    validate_config(config);
    if (data.order() < 1 || data.size() == 0) throw ShapeError("segment data is empty");
    const std::size_t nt = data.dims()[0];
    if (nt > config.segment_length) throw ShapeError("segment holds more timesteps than segment_length");

    CompressedSegment seg;
    seg.stats = SegmentStats::of(data.values());
    seg.time_range = {first_timestep, first_timestep + nt - 1};
    seg.permutations = std::move(permutations);
    seg.tolerance_kind = config.tolerance_kind;
    seg.tolerance_value = config.tolerance;
    seg.config_hash = config_hash(config);

    // a short final segment is padded in time so it shares the plan of full segments
    DenseTensor padded = data;
    if (config.merge_mode == MergeMode::stack && nt < config.segment_length)
        padded = pad_replicate(data, 1, config.segment_length).first;

    PlanOptions opt;
    opt.max_factor = config.max_factor;
    const auto probe = make_plan(padded.dims(), opt);
    for (std::size_t k = 0; k < padded.order(); ++k)
        opt.levels.push_back(config.level == 0 ? 0 : std::min(config.level, probe.axes[k].depth()));
    if (config.merge_mode == MergeMode::concat) opt.levels[0] = 1;
    seg.plan = make_plan(padded.dims(), opt);
    const DenseTensor x = apply_plan(padded, seg.plan);

    SegmentStats conversion = seg.stats;
    if (running && running->entry_count > 0) {
        conversion.x_min = std::min(conversion.x_min, running->x_min);
        conversion.x_max = std::max(conversion.x_max, running->x_max);
    }
    const double total = budget_for(config.tolerance_kind, config.tolerance, conversion);
    seg.tolerance_budget = total;
    const double tau = config.segment_share * total;
    seg.tolerance_spent = tau;

    if (seg.stats.x_min == seg.stats.x_max) {
        // constant data (padding included) is an exact rank-1 tensor
        std::vector<TTCore> cores;
        for (auto n : x.dims()) cores.emplace_back(1, n, 1, std::vector<double>(n, 1.0));
        for (auto& v : cores.front().values()) v = seg.stats.x_min;
        seg.tt = TTTensor(std::move(cores));
        seg.tolerance_spent = 0.0;
        return seg;
    }
    double tau_svd = tau;
    const double padded_norm = frobenius_norm(x);
    if (padded_norm > 0.0 && x.size() != data.size()) tau_svd *= seg.stats.frobenius_norm / padded_norm;
    seg.tt = tt_svd(x, tau_svd);
    return seg;
}

std::pair<DenseTensor, std::vector<PermutationBlock>> reorder_particles(const SnapshotBatch& batch,
                                                                        const CompressionConfig& config) {
    validate_batch(batch);
    const std::size_t nt = batch.n_t(), np = batch.n_p(), nc = batch.n_c();
    std::vector<PermutationBlock> blocks;
    if (config.reorder == ReorderPolicy::none || batch.positions_first.empty()) return {batch.data, blocks};
    if (np > std::numeric_limits<std::uint32_t>::max()) throw CapacityError("particle count exceeds u32 permutations");

    auto make_block = [&](std::span<const Point3> positions, std::size_t t0, std::size_t t1) {
        const auto order = morton_order(positions, pick_bits(batch, config, positions));
        PermutationBlock b{batch.first_timestep + t0, batch.first_timestep + t1, {}};
        b.perm.assign(order.begin(), order.end());
        return b;
    };
    if (config.reorder == ReorderPolicy::per_segment) {
        blocks.push_back(make_block(batch.positions_first, 0, nt - 1));
    } else {
        if (batch.positions_all.size() != nt) throw ConfigError("per-timestep reordering needs positions for every timestep");
        for (std::size_t t = 0; t < nt; ++t) blocks.push_back(make_block(batch.positions_all[t], t, t));
    }

    const auto src = batch.data.values();
    std::vector<double> v(src.size());
    for (const auto& b : blocks) {
        for (std::size_t t = b.time_first - batch.first_timestep; t <= b.time_last - batch.first_timestep; ++t)
            for (std::size_t c = 0; c < nc; ++c)
                for (std::size_t k = 0; k < np; ++k) v[t + nt * (k + np * c)] = src[t + nt * (b.perm[k] + np * c)];
    }
    return {DenseTensor(batch.data.dims(), std::move(v)), std::move(blocks)};
}

CompressedSegment compress_segment(const SnapshotBatch& batch, const CompressionConfig& config,
                                   const std::optional<SegmentStats>& running) {
    auto [data, blocks] = reorder_particles(batch, config);
    return compress_tensor_segment(data, config, batch.first_timestep, std::move(blocks), running);
}

CompressedSegment merge_stack(std::span<const CompressedSegment> parts, double tau_round) {
    check_common(parts, "merge_stack");
    if (!(tau_round >= 0.0)) throw RangeError("merge_stack: tau_round must be >= 0");
    const auto& first = parts.front();
    const nlohmann::json plan_json = first.plan;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const auto& p = parts[i];
        if (nlohmann::json(p.plan) != plan_json) throw MergeError("merge_stack: segments use different tensorization plans");
        if (p.stack_extents != first.stack_extents) throw MergeError("merge_stack: segments have different stack depths");
        if (i + 1 < parts.size() && p.timesteps() != p.segment_length() * p.base_segments())
            throw MergeError("merge_stack: only the last segment may be shorter than a full segment");
    }
    check_contiguous(parts, "merge_stack");

    std::vector<TTTensor> tts;
    for (const auto& p : parts) tts.push_back(p.tt);
    CompressedSegment out;
    out.plan = first.plan;
    out.stack_extents = first.stack_extents;
    out.stack_extents.push_back(parts.size());
    out.time_range = {first.time_range[0], parts.back().time_range[1]};
    for (const auto& p : parts) out.permutations.insert(out.permutations.end(), p.permutations.begin(), p.permutations.end());
    finish_merge(out, parts, tau_round);
    const bool padded = std::any_of(parts.begin(), parts.end(), stores_padding);
    out.tt = round_merged(tt_stack_new(tts), tau_round, out.stats.frobenius_norm, padded);
    return out;
}

CompressedSegment merge_concat(std::span<const CompressedSegment> parts, std::size_t dim, double tau_round) {
    check_common(parts, "merge_concat");
    if (!(tau_round >= 0.0)) throw RangeError("merge_concat: tau_round must be >= 0");
    const auto& first = parts.front();
    const std::size_t d = first.plan.original_dims.size();
    if (dim < 1 || dim > d) throw RangeError("merge_concat: axis out of range");
    const std::size_t ax = dim - 1;

    for (const auto& p : parts) {
        if (!p.stack_extents.empty()) throw MergeError("merge_concat: stacked segments cannot be concatenated");
        if (!p.plan.interlace.empty()) throw MergeError("merge_concat: interlaced plans cannot be concatenated");
        if (p.plan.original_dims.size() != d) throw MergeError("merge_concat: segments differ in order");
        const auto& a = p.plan.axes[ax];
        if (a.grouped_dims().size() != 1 || a.pad.strategy != PadStrategy::none)
            throw MergeError("merge_concat: axis " + std::to_string(dim) + " is tensorized or padded");
        for (std::size_t k = 0; k < d; ++k) {
            if (k == ax) continue;
            const nlohmann::json ja = nlohmann::json(p.plan)["axes"][k], jb = nlohmann::json(first.plan)["axes"][k];
            if (ja != jb) throw MergeError("merge_concat: segments differ on axis " + std::to_string(k + 1));
        }
    }
    if (ax == 0) {
        for (const auto& p : parts)
            if (p.timesteps() != p.segment_length()) throw MergeError("merge_concat: segment time axis is padded");
        check_contiguous(parts, "merge_concat");
    } else {
        for (const auto& p : parts) {
            if (p.time_range != first.time_range) throw MergeError("merge_concat: segments cover different timesteps");
            if (ax == 1 && !p.permutations.empty())
                throw MergeError("merge_concat: reordered particles cannot be concatenated along the particle axis");
        }
    }

    std::size_t position = 1;
    for (std::size_t k = 0; k < ax; ++k) position += first.plan.axes[k].grouped_dims().size();
    TTTensor acc = first.tt;
    std::size_t extent = first.plan.original_dims[ax];
    for (std::size_t i = 1; i < parts.size(); ++i) {
        acc = tt_concat_existing(acc, parts[i].tt, position);
        extent += parts[i].plan.original_dims[ax];
    }

    CompressedSegment out;
    out.plan = first.plan;
    out.plan.original_dims[ax] = extent;
    out.plan.axes[ax] = AxisPlan{extent == 1 ? std::vector<std::size_t>{} : std::vector<std::size_t>{extent}, 1,
                                 PadRecord{extent, extent, PadStrategy::none}};
    validate_plan(out.plan);
    if (ax == 0) {
        out.time_range = {first.time_range[0], parts.back().time_range[1]};
        for (const auto& p : parts) out.permutations.insert(out.permutations.end(), p.permutations.begin(), p.permutations.end());
    } else {
        out.time_range = first.time_range;
        out.permutations = first.permutations;
    }
    finish_merge(out, parts, tau_round);
    const bool padded = std::any_of(parts.begin(), parts.end(), stores_padding);
    out.tt = round_merged(acc, tau_round, out.stats.frobenius_norm, padded);
    return out;
}

std::size_t merge_level_count(std::size_t segments, std::size_t arity, MergeMode mode) {
    if (segments == 0) throw ConfigError("merge tree needs at least one segment");
    if (arity < 2) throw ConfigError("merge arity must be >= 2");
    std::size_t levels = 0;
    while (segments > 1) {
        if (mode == MergeMode::stack && segments % arity != 0)
            throw ConfigError("cannot stack " + std::to_string(segments) + " segments in groups of " +
                              std::to_string(arity) + "; choose a segment count that is a power of the arity");
        segments = (segments + arity - 1) / arity;
        ++levels;
    }
    return levels;
}

std::vector<double> rounding_schedule(double budget, double spent, std::size_t levels) {
    std::vector<double> s(levels, 0.0);
    if (levels == 0 || !(budget > spent)) return s;
    // shrink slightly so composing the schedule never overshoots through rounding
    const double r = (std::pow((1.0 + budget) / (1.0 + spent), 1.0 / static_cast<double>(levels)) - 1.0) * (1.0 - 1e-12);
    std::fill(s.begin(), s.end(), std::max(0.0, r));
    return s;
}

double global_budget(std::span<const CompressedSegment> segments) {
    if (segments.empty()) throw ConfigError("no segments given");
    return budget_for(segments.front().tolerance_kind, segments.front().tolerance_value, union_stats(segments));
}

double global_spent(std::span<const CompressedSegment> segments) {
    if (segments.empty()) throw ConfigError("no segments given");
    return union_spent(segments, union_stats(segments));
}

std::vector<double> default_rounding_schedule(std::span<const CompressedSegment> segments, std::size_t arity,
                                              MergeMode mode) {
    const std::size_t levels = merge_level_count(segments.size(), arity, mode);
    return rounding_schedule(global_budget(segments), global_spent(segments), levels);
}

std::vector<std::vector<CompressedSegment>> merge_tree(std::vector<CompressedSegment> segments, std::size_t arity,
                                                       std::span<const double> tau_schedule, MergeMode mode,
                                                       std::size_t jobs) {
    const std::size_t levels = merge_level_count(segments.size(), arity, mode);
    if (tau_schedule.size() < levels)
        throw ConfigError("rounding schedule has " + std::to_string(tau_schedule.size()) + " entries, " +
                          std::to_string(levels) + " levels needed");
    check_common(segments, "merge_tree");
    const double budget = global_budget(segments);
    double predicted = union_spent(segments, union_stats(segments));
    for (std::size_t k = 0; k < levels; ++k) {
        if (!(tau_schedule[k] >= 0.0)) throw ConfigError("rounding tolerances must be >= 0");
        predicted = compose_tolerance(predicted, tau_schedule[k]);
    }
    if (predicted > budget * (1.0 + 1e-9) + 1e-300)
        throw ConfigError("error budget exhausted: the schedule reaches " + std::to_string(predicted) +
                          " against a budget of " + std::to_string(budget));

    std::vector<std::vector<CompressedSegment>> out;
    out.push_back(std::move(segments));
    for (std::size_t k = 0; k < levels; ++k) {
        const auto& prev = out.back();
        const std::size_t groups = (prev.size() + arity - 1) / arity;
        std::vector<CompressedSegment> next(groups);
        parallel_for(groups, jobs, [&](std::size_t g) {
            const std::size_t lo = g * arity, hi = std::min(prev.size(), lo + arity);
            std::span<const CompressedSegment> group(prev.data() + lo, hi - lo);
            next[g] = mode == MergeMode::stack ? merge_stack(group, tau_schedule[k]) : merge_concat(group, 1, tau_schedule[k]);
        });
        out.push_back(std::move(next));
    }
    return out;
}

DenseTensor reconstruct(const CompressedSegment& seg, std::optional<std::size_t> cap) {
    const DenseTensor full = tt_full(seg.tt, cap);
    const Extents tdims = seg.plan.tensorized_dims();
    const std::size_t base_size = num_entries(tdims);
    const std::size_t L = seg.segment_length();
    const Extents out_dims = seg.data_dims();
    const std::size_t T = out_dims[0];
    const std::size_t P = out_dims.size() > 1 ? out_dims[1] : 1;
    const std::size_t R = num_entries(out_dims) / std::max<std::size_t>(T * P, 1);
    std::vector<double> out(num_entries(out_dims));

    for (std::size_t s = 0; s < seg.base_segments(); ++s) {
        const std::size_t t_offset = s * L;
        if (t_offset >= T) break;
        const std::size_t valid = std::min(L, T - t_offset);
        const auto first = full.values().begin() + static_cast<std::ptrdiff_t>(s * base_size);
        DenseTensor part(tdims, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(base_size)));
        const DenseTensor base = invert_plan(part, seg.plan);
        const auto v = base.values();
        for (std::size_t t = 0; t < valid; ++t) {
            const std::size_t tg = t_offset + t;
            const PermutationBlock* b = block_for(seg.permutations, seg.time_range[0] + tg);
            const bool permuted = b != nullptr && !b->perm.empty();
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t k = 0; k < P; ++k) {
                    const std::size_t p = permuted ? b->perm[k] : k;
                    out[tg + T * (p + P * r)] = v[t + L * (k + P * r)];
                }
        }
    }
    return DenseTensor(out_dims, std::move(out));
}

SegmentAccessor::SegmentAccessor(const CompressedSegment& seg) : seg_(seg) {
    for (const auto& b : seg.permutations) {
        std::vector<std::uint32_t> inv(b.perm.size());
        for (std::size_t k = 0; k < b.perm.size(); ++k) inv[b.perm[k]] = static_cast<std::uint32_t>(k);
        inverse_.push_back(std::move(inv));
    }
}

double SegmentAccessor::get(std::span<const std::size_t> index) const {
    const Extents dims = seg_.data_dims();
    if (index.size() != dims.size()) throw RangeError("segment index has the wrong order");
    for (std::size_t k = 0; k < dims.size(); ++k)
        if (index[k] < 1 || index[k] > dims[k])
            throw RangeError("index " + std::to_string(index[k]) + " out of range on axis " + std::to_string(k + 1) +
                             " (extent " + std::to_string(dims[k]) + ")");
    const std::size_t L = seg_.segment_length();
    const std::size_t t0 = index[0] - 1;
    MultiIndex local(index.begin(), index.end());
    local[0] = t0 % L + 1;
    if (local.size() > 1) {
        const std::size_t tg = seg_.time_range[0] + t0;
        for (std::size_t b = 0; b < seg_.permutations.size(); ++b) {
            const auto& blk = seg_.permutations[b];
            if (tg >= blk.time_first && tg <= blk.time_last) {
                if (!blk.perm.empty()) local[1] = inverse_[b][index[1] - 1] + 1;
                break;
            }
        }
    }
    MultiIndex full = tensorized_index(seg_.plan, local);
    if (!seg_.stack_extents.empty()) {
        const auto s = multi_index(t0 / L + 1, seg_.stack_extents);
        full.insert(full.end(), s.begin(), s.end());
    }
    return tt_get(seg_.tt, full);
}

DenseTensor SegmentAccessor::region(std::span<const std::size_t> lo, std::span<const std::size_t> hi) const {
    const Extents dims = seg_.data_dims();
    if (lo.size() != dims.size() || hi.size() != dims.size()) throw RangeError("region bounds have the wrong order");
    Extents box(dims.size());
    for (std::size_t k = 0; k < dims.size(); ++k) {
        if (lo[k] < 1 || hi[k] < lo[k] || hi[k] > dims[k])
            throw RangeError("region [" + std::to_string(lo[k]) + ", " + std::to_string(hi[k]) + "] invalid on axis " +
                             std::to_string(k + 1) + " (extent " + std::to_string(dims[k]) + ")");
        box[k] = hi[k] - lo[k] + 1;
    }
    std::vector<double> v(num_entries(box));
    MultiIndex idx(lo.begin(), lo.end());
    for (std::size_t n = 0; n < v.size(); ++n) {
        v[n] = get(idx);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            if (++idx[k] <= hi[k]) break;
            idx[k] = lo[k];
        }
    }
    return DenseTensor(std::move(box), std::move(v));
}

nlohmann::json segment_metadata(const CompressedSegment& seg) {
    auto perms = nlohmann::json::array();
    for (const auto& b : seg.permutations)
        perms.push_back({{"time_first", b.time_first}, {"time_last", b.time_last}, {"perm_u32le", detail::encode_u32_array(b.perm)}});
    return {{"format", "qtt-segment"},
            {"format_version", kSegmentFormatVersion},
            {"plan", seg.plan},
            {"stack_extents", seg.stack_extents},
            {"time_range", seg.time_range},
            {"stats", stats_json(seg.stats)},
            {"tolerance",
             {{"kind", to_string(seg.tolerance_kind)},
              {"value", seg.tolerance_value},
              {"spent_relfrob", seg.tolerance_spent},
              {"budget_relfrob", seg.tolerance_budget}}},
            {"permutations", perms},
            {"config_hash", seg.config_hash},
            {"level", seg.level}};
}

CompressedSegment segment_from_archive(TTTensor tt, const nlohmann::json& m) {
    CompressedSegment seg;
    try {
        if (m.at("format").get<std::string>() != "qtt-segment") throw FormatError("archive is not a segment archive");
        if (m.at("format_version").get<int>() != kSegmentFormatVersion) throw FormatError("unsupported segment format version");
        seg.plan = m.at("plan").get<TensorizePlan>();
        seg.stack_extents = m.at("stack_extents").get<std::vector<std::size_t>>();
        seg.time_range = m.at("time_range").get<std::array<std::size_t, 2>>();
        const auto& s = m.at("stats");
        seg.stats = {s.at("x_min").get<double>(), s.at("x_max").get<double>(), s.at("frobenius_norm").get<double>(),
                     s.at("entry_count").get<std::size_t>()};
        const auto& t = m.at("tolerance");
        seg.tolerance_kind = parse_tolerance_kind(t.at("kind").get<std::string>());
        seg.tolerance_value = t.at("value").get<double>();
        seg.tolerance_spent = t.at("spent_relfrob").get<double>();
        seg.tolerance_budget = t.at("budget_relfrob").get<double>();
        for (const auto& b : m.at("permutations"))
            seg.permutations.push_back({b.at("time_first").get<std::size_t>(), b.at("time_last").get<std::size_t>(),
                                        detail::decode_u32_array(b.at("perm_u32le").get<std::string>())});
        seg.config_hash = m.at("config_hash").get<std::string>();
        seg.level = m.at("level").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("segment metadata: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("segment metadata: ") + e.what());
    }
    Extents expect = seg.plan.tensorized_dims();
    expect.insert(expect.end(), seg.stack_extents.begin(), seg.stack_extents.end());
    if (tt.dims() != expect) throw FormatError("segment metadata: TT dims do not match the plan");
    if (seg.time_range[1] < seg.time_range[0] || seg.timesteps() > seg.segment_length() * seg.base_segments())
        throw FormatError("segment metadata: time range inconsistent with plan");
    const std::size_t np = seg.plan.original_dims.size() > 1 ? seg.plan.original_dims[1] : 0;
    for (const auto& b : seg.permutations) {
        if (b.perm.empty()) continue;
        if (b.perm.size() != np) throw FormatError("segment metadata: permutation length differs from particle count");
        std::vector<bool> seen(np, false);
        for (auto p : b.perm) {
            if (p >= np || seen[p]) throw FormatError("segment metadata: permutation is not a bijection");
            seen[p] = true;
        }
    }
    seg.tt = std::move(tt);
    return seg;
}

std::string segment_file_name(const CompressedSegment& seg) {
    return "seg_" + std::to_string(seg.time_range[0]) + "_" + std::to_string(seg.time_range[1]) + ".ttc";
}

std::filesystem::path write_segment(const std::filesystem::path& dir, const CompressedSegment& seg) {
    std::filesystem::create_directories(dir);
    const auto path = dir / segment_file_name(seg);
    write_ttc1(path, seg.tt, segment_metadata(seg));
    return path;
}

CompressedSegment read_segment(const std::filesystem::path& path) {
    auto a = read_ttc1(path);
    return segment_from_archive(std::move(a.tt), a.metadata);
}

std::vector<std::filesystem::path> list_segments(const std::filesystem::path& dir) {
    static const std::regex pattern(R"(seg_(\d+)_(\d+)\.ttc)");
    std::vector<std::pair<std::size_t, std::filesystem::path>> found;
    if (!std::filesystem::is_directory(dir)) throw IngestionError("not a directory: " + dir.string());
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = e.path().filename().string();
        if (std::regex_match(name, m, pattern)) found.emplace_back(std::stoull(m[1]), e.path());
    }
    std::sort(found.begin(), found.end());
    std::vector<std::filesystem::path> out;
    for (auto& f : found) out.push_back(std::move(f.second));
    return out;
}

namespace {

template <typename Slice, typename Compress>
std::vector<CompressedSegment> compress_segments(std::size_t nt, const CompressionConfig& config, bool will_merge,
                                                 Slice&& slice_stats, Compress&& compress) {
    validate_config(config);
    const std::size_t L = config.segment_length;
    const std::size_t count = (nt + L - 1) / L;
    CompressionConfig cfg = config;
    if (!will_merge || count < 2) cfg.segment_share = 1.0;

    // running statistics before each segment, fixed up front so workers are independent
    std::vector<std::optional<SegmentStats>> running(count);
    SegmentStats acc;
    for (std::size_t s = 0; s < count; ++s) {
        if (acc.entry_count > 0) running[s] = acc;
        acc = SegmentStats::combine(acc, slice_stats(s * L, std::min(L, nt - s * L)));
    }
    std::vector<CompressedSegment> out(count);
    const std::string hash = config_hash(config);
    parallel_for(count, config.jobs, [&](std::size_t s) {
        out[s] = compress(s * L, std::min(L, nt - s * L), cfg, running[s]);
        out[s].config_hash = hash;
    });
    return out;
}

}  // namespace

std::vector<CompressedSegment> compress_stream(const SnapshotBatch& batch, const CompressionConfig& config,
                                               bool will_merge) {
    validate_batch(batch);
    return compress_segments(
        batch.n_t(), config, will_merge,
        [&](std::size_t first, std::size_t count) {
            return SegmentStats::of(slice_leading(batch.data, first, count).values());
        },
        [&](std::size_t first, std::size_t count, const CompressionConfig& cfg, const std::optional<SegmentStats>& run) {
            return compress_segment(batch.slice_time(first, count), cfg, run);
        });
}

std::vector<CompressedSegment> compress_stream(const DenseTensor& data, const CompressionConfig& config,
                                               bool will_merge) {
    if (data.order() < 1 || data.size() == 0) throw ShapeError("cannot compress an empty tensor");
    return compress_segments(
        data.dims()[0], config, will_merge,
        [&](std::size_t first, std::size_t count) { return SegmentStats::of(slice_leading(data, first, count).values()); },
        [&](std::size_t first, std::size_t count, const CompressionConfig& cfg, const std::optional<SegmentStats>& run) {
            return compress_tensor_segment(slice_leading(data, first, count), cfg, first, {}, run);
        });
}

}  // namespace qtt

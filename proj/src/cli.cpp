#include "qtt/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <new>
#include <optional>
#include <regex>
#include <sstream>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qtt/archive.hpp"
#include "qtt/bench.hpp"
#include "qtt/errors.hpp"
#include "qtt/metrics.hpp"
#include "qtt/streaming.hpp"
#include "qtt/synth_data.hpp"

#ifndef QTT_VERSION
#define QTT_VERSION "0.0.0"
#endif

namespace qtt {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class Stopwatch {
public:
    double lap() {
        const auto now = std::chrono::steady_clock::now();
        const double s = std::chrono::duration<double>(now - last_).count();
        last_ = now;
        return s;
    }

private:
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

std::uintmax_t path_bytes(const fs::path& p) {
    if (!fs::is_directory(p)) return fs::file_size(p);
    std::uintmax_t total = 0;
    for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file()) total += e.file_size();
    return total;
}

json read_json_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot read " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << text;
    if (!out) throw IngestionError("cannot write " + p.string());
}

// Config flags shared by compress and bench streaming. Unset flags leave the base value.
struct ConfigFlags {
    std::string config_path;
    std::optional<double> tolerance;
    std::optional<std::string> tolerance_kind;
    std::optional<std::size_t> segment_length;
    std::optional<std::size_t> level;
    std::optional<std::size_t> merge_arity;
    std::optional<std::string> merge_mode;
    std::optional<std::string> reorder;
    std::optional<unsigned> morton_bits;
    std::optional<double> segment_share;
    std::optional<std::size_t> jobs;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "JSON config file (a run manifest is accepted too)");
        app->add_option("--tolerance", tolerance, "Error tolerance; 0 is lossless");
        app->add_option("--tolerance-kind", tolerance_kind, "nrmse or relfrob")
            ->check(CLI::IsMember({"nrmse", "relfrob"}));
        app->add_option("--segment-length", segment_length, "Timesteps per segment");
        app->add_option("--level", level, "Tensorization level; 0 = full depth, 1 = none");
        app->add_option("--merge-arity", merge_arity, "Segments per merge group");
        app->add_option("--merge-mode", merge_mode, "stack or concat")->check(CLI::IsMember({"stack", "concat"}));
        app->add_option("--reorder", reorder, "Morton reordering: segment, timestep or none")
            ->check(CLI::IsMember({"segment", "timestep", "none"}));
        app->add_option("--morton-bits", morton_bits, "Bits per coordinate; 0 picks from the particle radius");
        app->add_option("--segment-share", segment_share, "Budget share of segment compression when merging");
        app->add_option("--jobs", jobs, "Worker threads");
    }

    CompressionConfig resolve(CompressionConfig c) const {
        if (!config_path.empty()) {
            json j = read_json_file(config_path);
            if (j.contains("config") && j.contains("tool")) j = j.at("config");
            from_json(j, c);
        }
        if (tolerance) c.tolerance = *tolerance;
        if (tolerance_kind) c.tolerance_kind = parse_tolerance_kind(*tolerance_kind);
        if (segment_length) c.segment_length = *segment_length;
        if (level) c.level = *level;
        if (merge_arity) c.merge_arity = *merge_arity;
        if (merge_mode) c.merge_mode = parse_merge_mode(*merge_mode);
        if (reorder) c.reorder = parse_reorder_policy(*reorder);
        if (morton_bits) c.morton_bits = *morton_bits;
        if (segment_share) c.segment_share = *segment_share;
        if (jobs) c.jobs = *jobs;
        validate_config(c);
        return c;
    }
};

std::size_t max_rank(const TTTensor& t) {
    const auto r = t.ranks();
    return *std::max_element(r.begin(), r.end());
}

std::size_t data_entries(std::span<const CompressedSegment> level) {
    std::size_t n = 0;
    for (const auto& s : level) n += num_entries(s.data_dims());
    return n;
}

// Segments of a compress output: a single archive, a level directory, or the output root
// (whose highest level is used).
std::vector<CompressedSegment> load_segments(const fs::path& input) {
    if (!fs::exists(input)) throw IngestionError("no such file or directory: " + input.string());
    std::vector<CompressedSegment> segs;
    if (!fs::is_directory(input)) {
        segs.push_back(read_segment(input));
        return segs;
    }
    fs::path dir = input;
    static const std::regex level_re(R"(level_(\d+))");
    long best = -1;
    for (const auto& e : fs::directory_iterator(input)) {
        std::smatch m;
        const std::string name = e.path().filename().string();
        if (e.is_directory() && std::regex_match(name, m, level_re) && std::stol(m[1]) > best) {
            best = std::stol(m[1]);
            dir = e.path();
        }
    }
    for (const auto& p : list_segments(dir)) segs.push_back(read_segment(p));
    if (segs.empty()) throw IngestionError("no segment archives in " + dir.string());
    return segs;
}

Extents joint_dims(std::span<const CompressedSegment> segs) {
    Extents dims = segs.front().data_dims();
    dims[0] = 0;
    for (std::size_t i = 0; i < segs.size(); ++i) {
        const Extents d = segs[i].data_dims();
        if (!std::equal(d.begin() + 1, d.end(), dims.begin() + 1, dims.end()))
            throw ShapeError("segments differ in shape");
        if (i > 0 && segs[i].time_range[0] != segs[i - 1].time_range[1] + 1)
            throw ShapeError("segments are not contiguous in time");
        dims[0] += d[0];
    }
    return dims;
}

// "a:b,c,:" with 1-based inclusive bounds; an empty field or ':' spans the axis.
std::pair<MultiIndex, MultiIndex> parse_region(const std::string& text, const Extents& dims) {
    std::vector<std::string> fields;
    std::stringstream ss(text);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (text.empty() || text.back() == ',') fields.emplace_back();
    if (fields.size() != dims.size())
        throw RangeError("region has " + std::to_string(fields.size()) + " axes, data has " + std::to_string(dims.size()));
    auto number = [&](const std::string& s) {
        std::size_t v = 0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size()) throw RangeError("bad region bound '" + s + "'");
        return v;
    };
    MultiIndex lo(dims.size()), hi(dims.size());
    for (std::size_t k = 0; k < dims.size(); ++k) {
        const std::string& f = fields[k];
        const auto colon = f.find(':');
        if (colon == std::string::npos) {
            lo[k] = hi[k] = f.empty() ? 0 : number(f);
            if (f.empty()) lo[k] = 1, hi[k] = dims[k];
        } else {
            lo[k] = colon == 0 ? 1 : number(f.substr(0, colon));
            hi[k] = colon + 1 == f.size() ? dims[k] : number(f.substr(colon + 1));
        }
        if (lo[k] < 1 || hi[k] > dims[k] || lo[k] > hi[k])
            throw RangeError("region axis " + std::to_string(k + 1) + " [" + std::to_string(lo[k]) + ", " +
                             std::to_string(hi[k]) + "] outside 1.." + std::to_string(dims[k]));
    }
    return {lo, hi};
}

// Box of entries across time-contiguous segments, read element-wise from the cores.
DenseTensor extract_region(std::span<const CompressedSegment> segs, const MultiIndex& lo, const MultiIndex& hi) {
    Extents out_dims(lo.size());
    for (std::size_t k = 0; k < lo.size(); ++k) out_dims[k] = hi[k] - lo[k] + 1;
    const std::size_t T = out_dims[0], rest = num_entries(out_dims) / T;
    std::vector<double> values(T * rest);
    std::size_t first = 1;
    for (const auto& s : segs) {
        const std::size_t last = first + s.timesteps() - 1;
        const std::size_t a = std::max(first, lo[0]), b = std::min(last, hi[0]);
        if (a <= b) {
            MultiIndex llo = lo, lhi = hi;
            llo[0] = a - first + 1;
            lhi[0] = b - first + 1;
            const DenseTensor part = SegmentAccessor(s).region(llo, lhi);
            const std::size_t m = b - a + 1, offset = a - lo[0];
            const auto src = part.values();
            for (std::size_t r = 0; r < rest; ++r)
                std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(m * r), m,
                            values.begin() + static_cast<std::ptrdiff_t>(offset + T * r));
        }
        first = last + 1;
    }
    return DenseTensor(std::move(out_dims), std::move(values));
}

void print_entries(std::ostream& out, const DenseTensor& t, const MultiIndex& lo) {
    out << std::setprecision(17);
    const auto dims = t.dims();
    const auto v = t.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        const MultiIndex idx = multi_index(i + 1, dims);
        for (std::size_t k = 0; k < idx.size(); ++k) out << idx[k] + lo[k] - 1 << ',';
        out << v[i] << '\n';
    }
}

json level_summary(std::size_t k, std::span<const CompressedSegment> level, std::span<const fs::path> files) {
    std::size_t storage = 0, rank = 0;
    std::uintmax_t bytes = 0;
    for (const auto& s : level) {
        storage += s.tt.storage();
        rank = std::max(rank, max_rank(s.tt));
    }
    for (const auto& f : files) bytes += fs::file_size(f);
    const double entries = static_cast<double>(data_entries(level));
    return {{"level", k},
            {"segments", level.size()},
            {"ratio_cores_only", entries / static_cast<double>(storage)},
            {"ratio_total_archive", entries * sizeof(double) / static_cast<double>(bytes)},
            {"archive_bytes", bytes},
            {"max_rank", rank},
            {"tolerance_spent", global_spent(level)},
            {"tolerance_budget", global_budget(level)}};
}

int cmd_compress(const std::string& input, const fs::path& output, const ConfigFlags& flags, bool merge, bool verify,
                 bool force, std::ostream& out) {
    Stopwatch clock;
    json timings;
    const CompressionConfig config = flags.resolve(CompressionConfig{});
    const fs::path manifest_path = output / "manifest.json";
    if (fs::exists(manifest_path) && !force)
        throw ConfigError(output.string() + " already holds a compress run (use --force to replace it)");

    std::optional<SnapshotBatch> batch;
    std::optional<DenseTensor> tensor;
    if (fs::is_directory(input))
        batch = load_snapshots(input);
    else if (fs::exists(input))
        tensor = read_dt64(input);
    else
        throw IngestionError("no such file or directory: " + input);
    const DenseTensor& original = batch ? batch->data : *tensor;
    timings["ingest_s"] = clock.lap();

    std::vector<std::vector<CompressedSegment>> levels;
    auto segments = batch ? compress_stream(*batch, config, merge) : compress_stream(*tensor, config, merge);
    timings["compress_s"] = clock.lap();
    if (merge && segments.size() > 1) {
        const auto schedule = default_rounding_schedule(segments, config.merge_arity, config.merge_mode);
        levels = merge_tree(std::move(segments), config.merge_arity, schedule, config.merge_mode, config.jobs);
    } else {
        levels.push_back(std::move(segments));
    }
    timings["merge_s"] = clock.lap();

    if (force) {
        static const std::regex level_re(R"(level_\d+)");
        if (fs::is_directory(output))
            for (const auto& e : fs::directory_iterator(output))
                if (e.is_directory() && std::regex_match(e.path().filename().string(), level_re))
                    for (const auto& p : list_segments(e.path())) fs::remove(p);
    }
    json outputs = json::array(), level_rows = json::array();
    for (std::size_t k = 0; k < levels.size(); ++k) {
        const fs::path dir = output / ("level_" + std::to_string(k));
        fs::create_directories(dir);
        std::vector<fs::path> files;
        for (const auto& s : levels[k]) {
            files.push_back(write_segment(dir, s));
            outputs.push_back({{"path", files.back().string()}, {"bytes", fs::file_size(files.back())}});
        }
        level_rows.push_back(level_summary(k, levels[k], files));
    }
    timings["write_s"] = clock.lap();

    json metrics = json::array();
    if (verify) {
        for (std::size_t k = 0; k < levels.size(); ++k) {
            const DenseTensor y = reconstruct_level(levels[k]);
            MetricsReport r = measure(original.values(), y.values());
            r.variable = "all";
            r.level = k;
            r.compression_ratio_cores_only = level_rows[k]["ratio_cores_only"];
            r.compression_ratio_total_archive = level_rows[k]["ratio_total_archive"];
            metrics.push_back(r);
        }
        timings["verify_s"] = clock.lap();
    }

    json cfg;
    to_json(cfg, config);
    json manifest = {{"tool", "qttc"},
                     {"version", tool_version()},
                     {"command", "compress"},
                     {"config", cfg},
                     {"config_hash", config_hash(config)},
                     {"merge", merge},
                     {"memory_cap_entries", default_memory_cap()},
                     {"inputs", json::array({{{"path", input}, {"bytes", path_bytes(input)}}})},
                     {"outputs", outputs},
                     {"levels", level_rows},
                     {"metrics", metrics},
                     {"timings", timings}};
    write_text(manifest_path, manifest.dump(2) + "\n");

    const auto& top = level_rows.back();
    out << "compressed " << original.size() << " entries into " << levels.front().size() << " segment(s), "
        << levels.size() << " level(s)\n"
        << "final level ratio: cores " << top["ratio_cores_only"].get<double>() << ", archive "
        << top["ratio_total_archive"].get<double>() << '\n';
    if (verify) {
        const json& m = metrics.back();
        out << "final level nrmse " << m["nrmse"].dump() << ", rel_frob " << m["rel_frob"].dump() << '\n';
    }
    out << "manifest: " << manifest_path.string() << '\n';
    return kExitOk;
}

int cmd_reconstruct(const std::string& input, const std::string& region, const std::string& output,
                    std::ostream& out) {
    const auto segs = load_segments(input);
    const Extents dims = joint_dims(segs);
    if (region.empty()) {
        const DenseTensor full = reconstruct_level(segs);
        if (output.empty())
            print_entries(out, full, MultiIndex(dims.size(), 1));
        else
            write_dt64(output, full);
        return kExitOk;
    }
    const auto [lo, hi] = parse_region(region, dims);
    const DenseTensor box = extract_region(segs, lo, hi);
    if (output.empty())
        print_entries(out, box, lo);
    else
        write_dt64(output, box);
    return kExitOk;
}

json archive_info(const fs::path& path) {
    const TTArchive a = read_ttc1(path);
    const auto bytes = fs::file_size(path);
    json j = {{"path", path.string()},
              {"file_bytes", bytes},
              {"order", a.tt.order()},
              {"dims", a.tt.dims()},
              {"ranks", a.tt.ranks()},
              {"storage_entries", a.tt.storage()},
              {"metadata", a.metadata}};
    double entries = 1.0;
    for (auto n : a.tt.dims()) entries *= static_cast<double>(n);
    if (a.metadata.is_object() && a.metadata.value("format", "") == "qtt-segment") {
        const CompressedSegment s = segment_from_archive(a.tt, a.metadata);
        entries = static_cast<double>(num_entries(s.data_dims()));
        j["segment"] = {{"data_dims", s.data_dims()},
                        {"time_range", s.time_range},
                        {"level", s.level},
                        {"base_segments", s.base_segments()},
                        {"stack_extents", s.stack_extents},
                        {"tolerance",
                         {{"kind", to_string(s.tolerance_kind)},
                          {"value", s.tolerance_value},
                          {"spent_relfrob", s.tolerance_spent},
                          {"budget_relfrob", s.tolerance_budget}}},
                        {"config_hash", s.config_hash}};
    }
    j["entries"] = entries;
    j["ratio_cores_only"] = entries / static_cast<double>(a.tt.storage());
    j["ratio_total_archive"] = entries * sizeof(double) / static_cast<double>(bytes);
    return j;
}

int cmd_info(const std::string& input, bool as_json, std::ostream& out) {
    const json j = archive_info(input);
    if (as_json) {
        out << j.dump(2) << '\n';
        return kExitOk;
    }
    auto chain = [](const json& a, const char* sep) {
        std::string s;
        for (std::size_t i = 0; i < a.size(); ++i) s += (i ? sep : "") + a[i].dump();
        return s;
    };
    out << std::setprecision(6) << "archive: " << j["path"].get<std::string>() << " (" << j["file_bytes"] << " bytes)\n"
        << "dims:    " << chain(j["dims"], " x ") << '\n'
        << "ranks:   " << chain(j["ranks"], "-") << '\n'
        << "ratio:   cores " << j["ratio_cores_only"].get<double>() << ", archive "
        << j["ratio_total_archive"].get<double>() << '\n';
    if (j.contains("segment")) {
        const json& s = j["segment"];
        out << "data:    " << chain(s["data_dims"], " x ") << ", timesteps " << s["time_range"][0] << ".."
            << s["time_range"][1] << ", merge level " << s["level"] << '\n'
            << "tolerance: " << s["tolerance"]["kind"].get<std::string>() << ' ' << s["tolerance"]["value"].get<double>()
            << ", spent " << s["tolerance"]["spent_relfrob"].get<double>() << " of "
            << s["tolerance"]["budget_relfrob"].get<double>() << " (relfrob)\n"
            << "config:  " << s["config_hash"].get<std::string>() << '\n';
    } else if (!j["metadata"].empty()) {
        out << "metadata: " << j["metadata"].dump() << '\n';
    }
    return kExitOk;
}

int cmd_merge(const std::vector<std::string>& inputs, const fs::path& output, std::optional<double> tau_round,
              const std::string& mode_name, std::size_t axis, std::ostream& out) {
    std::vector<CompressedSegment> parts;
    for (const auto& in : inputs) {
        auto segs = load_segments(in);
        for (auto& s : segs) parts.push_back(std::move(s));
    }
    if (parts.size() < 2) throw MergeError("merge needs at least two segments");
    const MergeMode mode = parse_merge_mode(mode_name);
    CompressedSegment merged;
    if (mode == MergeMode::concat && axis != 1) {
        merged = merge_concat(parts, axis, tau_round.value_or(0.0));
    } else {
        std::sort(parts.begin(), parts.end(),
                  [](const auto& a, const auto& b) { return a.time_range[0] < b.time_range[0]; });
        const std::size_t n = parts.size();
        const std::vector<double> schedule =
            tau_round ? std::vector<double>{*tau_round} : default_rounding_schedule(parts, n, mode);
        merged = std::move(merge_tree(std::move(parts), n, schedule, mode).back().front());
    }
    fs::path file = output;
    if (fs::is_directory(output) || !output.has_extension()) {
        fs::create_directories(output);
        file = write_segment(output, merged);
    } else {
        if (output.has_parent_path()) fs::create_directories(output.parent_path());
        write_ttc1(output, merged.tt, segment_metadata(merged));
    }
    out << "merged into " << file.string() << ": ranks " << max_rank(merged.tt) << " max, ratio "
        << merged.compression_ratio() << ", spent " << merged.tolerance_spent << " of " << merged.tolerance_budget
        << '\n';
    return kExitOk;
}

template <class Writer>
void emit_csv(const std::string& output, std::ostream& out, Writer&& write) {
    if (output.empty()) {
        write(out);
        return;
    }
    std::ostringstream s;
    write(s);
    write_text(output, s.str());
}

int cmd_synth(const fs::path& output, const std::string& scenario, std::size_t n_p, std::size_t n_t,
              std::uint64_t seed, const SynthOptions& options, std::ostream& out) {
    const SnapshotBatch b = synth_particles(n_p, n_t, parse_scenario(scenario), seed, options);
    if (output.extension() == ".dt64")
        write_dt64(output, b.data);
    else
        write_snapshots(output, b);
    out << "wrote " << scenario << " run (" << n_t << " timesteps, " << n_p << " particles, seed " << seed << ") to "
        << output.string() << '\n';
    return kExitOk;
}

int dispatch(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Tensor-train compression of particle simulation data", "qttc"};
    app.require_subcommand(1);
    app.set_version_flag("--version", tool_version());

    // compress
    auto* compress = app.add_subcommand("compress", "Compress a run directory or DT64 file into TTC1 segments");
    std::string c_input, c_output;
    bool c_merge = false, c_verify = false, c_force = false;
    ConfigFlags c_flags;
    compress->add_option("input", c_input, "Run directory or .dt64 file")->required();
    compress->add_option("--output,-o", c_output, "Output directory")->required();
    compress->add_flag("--merge", c_merge, "Merge segments level by level within the error budget");
    compress->add_flag("--verify", c_verify, "Reconstruct every level and record measured errors");
    compress->add_flag("--force", c_force, "Replace a previous run in the output directory");
    c_flags.attach(compress);

    // reconstruct
    auto* rec = app.add_subcommand("reconstruct", "Reconstruct archives to DT64 or print entries");
    std::string r_input, r_region, r_output;
    rec->add_option("input", r_input, "Archive, level directory or compress output directory")->required();
    rec->add_option("--region", r_region, "Box per axis, 1-based inclusive, e.g. 1:32,7,:");
    rec->add_option("--output,-o", r_output, "DT64 output; entries are printed as CSV when omitted");

    // info
    auto* info = app.add_subcommand("info", "Summarize a TTC1 archive");
    std::string i_input;
    bool i_json = false;
    info->add_option("archive", i_input, "TTC1 file")->required();
    info->add_flag("--json", i_json, "JSON output");

    // merge
    auto* merge = app.add_subcommand("merge", "Merge segment archives into one");
    std::vector<std::string> m_inputs;
    std::string m_output, m_mode = "stack";
    std::optional<double> m_tau;
    std::size_t m_axis = 1;
    merge->add_option("inputs", m_inputs, "Archives or directories")->required();
    merge->add_option("--output,-o", m_output, "Output archive or directory")->required();
    merge->add_option("--tau-round", m_tau, "Rounding tolerance; defaults to what the budget leaves");
    merge->add_option("--mode", m_mode, "stack or concat")->check(CLI::IsMember({"stack", "concat"}));
    merge->add_option("--axis", m_axis, "Concatenation axis (1 = time)")->check(CLI::PositiveNumber);

    // bench
    auto* bench = app.add_subcommand("bench", "Structured-data and streaming studies as CSV");
    bench->require_subcommand(1);
    std::string b_output;
    std::size_t b_jobs = 1;
    bench->add_option("--output,-o", b_output, "CSV file; stdout when omitted");
    bench->add_option("--jobs", b_jobs, "Worker threads")->check(CLI::PositiveNumber);

    Fig3Options f3;
    auto* fig3 = bench->add_subcommand("fig3", "Univariate sweep over (delta, tau, level)");
    fig3->add_option("--d", f3.d, "log2 of the sample count")->check(CLI::Range(1, 26));
    fig3->add_option("--deltas", f3.deltas)->delimiter(',');
    fig3->add_option("--taus", f3.taus)->delimiter(',');
    fig3->add_option("--level-min", f3.level_min);
    fig3->add_option("--level-max", f3.level_max);

    Table1Options t1;
    std::string t1_archives;
    auto* table1 = bench->add_subcommand("table1", "Kernel matrix sweep over (level, tau) with spectral errors");
    table1->add_option("--d", t1.d, "log2 of the matrix side")->check(CLI::Range(1, 12));
    table1->add_option("--delta", t1.delta);
    table1->add_option("--levels", t1.levels)->delimiter(',');
    table1->add_option("--taus", t1.taus)->delimiter(',');
    table1->add_option("--archive-dir", t1_archives, "Also write each cell's TT as a TTC1 archive");

    StreamingBenchOptions st;
    std::string st_scenario = "settle";
    ConfigFlags st_flags;
    auto* streaming = bench->add_subcommand("streaming", "Segment compression and merge-tree levels");
    streaming->add_option("--particles", st.n_p)->check(CLI::PositiveNumber);
    streaming->add_option("--timesteps", st.n_t)->check(CLI::PositiveNumber);
    streaming->add_option("--scenario", st_scenario)->check(CLI::IsMember({"ballistic", "settle", "noise"}));
    streaming->add_option("--seed", st.seed);
    st_flags.attach(streaming);

    auto* tensorization = bench->add_subcommand("tensorization", "Per-segment ratios with and without tensorization");
    std::size_t tz_particles = 4096, tz_timesteps = 1024;
    std::uint64_t tz_seed = 1;
    std::string tz_scenario = "settle";
    ConfigFlags tz_flags;
    tensorization->add_option("--particles", tz_particles)->check(CLI::PositiveNumber);
    tensorization->add_option("--timesteps", tz_timesteps)->check(CLI::PositiveNumber);
    tensorization->add_option("--scenario", tz_scenario)->check(CLI::IsMember({"ballistic", "settle", "noise"}));
    tensorization->add_option("--seed", tz_seed);
    tz_flags.attach(tensorization);

    // synth
    auto* synth = app.add_subcommand("synth", "Write a synthetic particle run");
    std::string s_output, s_scenario = "settle";
    std::size_t s_particles = 1024, s_timesteps = 256;
    std::uint64_t s_seed = 1;
    SynthOptions s_opts;
    synth->add_option("--output,-o", s_output, "Run directory, or a .dt64 file")->required();
    synth->add_option("--scenario", s_scenario)->check(CLI::IsMember({"ballistic", "settle", "noise"}));
    synth->add_option("--particles", s_particles)->check(CLI::PositiveNumber);
    synth->add_option("--timesteps", s_timesteps)->check(CLI::PositiveNumber);
    synth->add_option("--seed", s_seed);
    synth->add_option("--dt", s_opts.dt)->check(CLI::PositiveNumber);
    synth->add_option("--radius", s_opts.particle_radius, "Particle radius recorded in meta.json");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUser;
    }

    if (compress->parsed()) return cmd_compress(c_input, c_output, c_flags, c_merge, c_verify, c_force, out);
    if (rec->parsed()) return cmd_reconstruct(r_input, r_region, r_output, out);
    if (info->parsed()) return cmd_info(i_input, i_json, out);
    if (merge->parsed()) return cmd_merge(m_inputs, m_output, m_tau, m_mode, m_axis, out);
    if (synth->parsed()) return cmd_synth(s_output, s_scenario, s_particles, s_timesteps, s_seed, s_opts, out);
    if (fig3->parsed()) {
        f3.jobs = b_jobs;
        const auto rows = bench_fig3(f3);
        emit_csv(b_output, out, [&](std::ostream& o) { write_fig3_csv(o, rows); });
    } else if (table1->parsed()) {
        t1.jobs = b_jobs;
        t1.archive_dir = t1_archives;
        const auto rows = bench_table1(t1);
        emit_csv(b_output, out, [&](std::ostream& o) { write_table1_csv(o, rows); });
    } else if (streaming->parsed()) {
        st.scenario = parse_scenario(st_scenario);
        st.config.jobs = b_jobs;
        st.config = st_flags.resolve(st.config);
        const auto rows = bench_streaming(st);
        emit_csv(b_output, out, [&](std::ostream& o) { write_streaming_csv(o, rows); });
    } else if (tensorization->parsed()) {
        CompressionConfig c = st.config;
        c.tolerance = 1e-1;
        c.jobs = b_jobs;
        c = tz_flags.resolve(c);
        const auto batch = synth_particles(tz_particles, tz_timesteps, parse_scenario(tz_scenario), tz_seed);
        const auto rows = bench_tensorization(batch, c);
        emit_csv(b_output, out, [&](std::ostream& o) {
            o << "segment,ratio_tensorized,ratio_untensorized,nrmse_tensorized,nrmse_untensorized\n"
              << std::setprecision(10);
            for (const auto& r : rows)
                o << r.segment << ',' << r.ratio_tensorized << ',' << r.ratio_untensorized << ','
                  << r.nrmse_tensorized << ',' << r.nrmse_untensorized << '\n';
        });
    }
    return kExitOk;
}

}  // namespace

std::string tool_version() { return QTT_VERSION; }

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
    try {
        return dispatch(args, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUser;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUser;
    } catch (const nlohmann::json::exception& e) {
        err << "error: malformed JSON: " << e.what() << '\n';
        return kExitUser;
    } catch (const std::bad_alloc&) {
        err << "internal error: out of memory\n";
        return kExitInternal;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
}

}  // namespace qtt

// pindic — command-line front end for the displacement-field toolkit.
//
// Subcommands:
//   simulate   synthesize a speckle benchmark pair with known displacement
//   solve      recover displacement with the network-based solver
//   subset     recover displacement with the classical subset baseline
//   compare    score a result field against a truth field
//   strain     differentiate a displacement field into strain components
//   render     map a scalar field to an 8-bit heatmap + histogram
//
// Every run writes a manifest.txt of resolved settings plus input hashes;
// re-running `pindic <cmd> --config manifest.txt --out-dir NEW` reproduces
// the outputs (command-line flags override manifest values).
//
// Exit codes: 0 success, 2 usage/validation, 3 I/O or file format,
// 4 numerical failure, 1 unexpected internal error.

#include <CLI11.hpp>

#include <pindic/pindic.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fs = std::filesystem;
using namespace pindic;

namespace {

constexpr const char* kVersion = "1.0.0";

// ---- small formatting helpers ---------------------------------------------

std::string fmt(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(int v) { return std::to_string(v); }

std::string fnv1a64_hex(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    for (int i = 15; i >= 0; --i) {
        buf[i] = "0123456789abcdef"[h & 0xF];
        h >>= 4;
    }
    return std::string(buf, 16);
}

void write_text(const fs::path& path, const std::string& text) {
    detail::write_file_bytes(path, text);
}

// ---- manifest --------------------------------------------------------------

// Resolved key=value settings for one run. Keys are the long flag names
// without the leading dashes, so the file doubles as a --config input.
class Manifest {
public:
    explicit Manifest(std::string command) : command_(std::move(command)) {}

    void set(const std::string& key, const std::string& value) {
        kv_.emplace_back(key, "\"" + value + "\"");
    }
    void set(const std::string& key, const char* value) { set(key, std::string(value)); }
    void set(const std::string& key, double value) { kv_.emplace_back(key, fmt(value)); }
    void set(const std::string& key, int value) { kv_.emplace_back(key, fmt(value)); }
    void set(const std::string& key, std::uint64_t value) { kv_.emplace_back(key, fmt(value)); }
    void set_flag(const std::string& key, bool value) {
        if (value) kv_.emplace_back(key, "true");
    }
    void hash_input(const std::string& label, const fs::path& file) {
        hashes_.emplace_back(label, fnv1a64_hex(detail::read_file_bytes(file)));
    }

    void write(const fs::path& out_dir) const {
        std::string text;
        text += "# pindic run manifest; rerun with: pindic " + command_ +
                " --config manifest.txt --out-dir NEWDIR\n";
        text += "command=" + command_ + "\n";
        text += "version=" + std::string(kVersion) + "\n";
        for (const auto& [label, hex] : hashes_) text += "input-hash-" + label + "=" + hex + "\n";
        text += "[" + command_ + "]\n";
        for (const auto& [k, v] : kv_) text += k + "=" + v + "\n";
        write_text(out_dir / "manifest.txt", text);
    }

private:
    std::string command_;
    std::vector<std::pair<std::string, std::string>> kv_;
    std::vector<std::pair<std::string, std::string>> hashes_;
};

// ---- summaries -------------------------------------------------------------

// key=value lines: printed to stdout (the only stdout traffic) and saved
// as summary.txt next to the other outputs.
class Summary {
public:
    void add(const std::string& key, const std::string& value) { lines_ += key + "=" + value + "\n"; }
    void add(const std::string& key, const char* value) { add(key, std::string(value)); }
    void add(const std::string& key, double value) { add(key, fmt(value)); }
    void add(const std::string& key, int value) { add(key, fmt(value)); }
    void add(const std::string& key, std::uint64_t value) { add(key, fmt(value)); }

    void emit(const fs::path& out_dir) const {
        write_text(out_dir / "summary.txt", lines_);
        std::cout << lines_;
    }
    void emit_stdout_only() const { std::cout << lines_; }

private:
    std::string lines_;
};

// ---- shared parsing --------------------------------------------------------

SampleScheme parse_scheme(const std::string& name) {
    if (name == "bilinear") return SampleScheme::bilinear();
    if (name == "bicubic") return SampleScheme::bicubic();
    throw usage_error("unknown interpolation scheme \"" + name +
                      "\" (expected bilinear or bicubic)");
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t comma = text.find(',', pos);
        std::string_view cell(text.data() + pos,
                              (comma == std::string::npos ? text.size() : comma) - pos);
        int v = 0;
        auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
            throw usage_error("bad integer list \"" + text + "\"");
        }
        out.push_back(v);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (out.empty()) throw usage_error("empty integer list");
    return out;
}

fs::path make_out_dir(const std::string& out_dir) {
    fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw io_error("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

ScalarField mask_to_image(const RoiMask& mask) {
    ScalarField img(mask.width, mask.height, 0.0);
    for (std::size_t i = 0; i < mask.inside.size(); ++i) img.values[i] = mask.inside[i] ? 255.0 : 0.0;
    return img;
}

// ---- heatmap rendering -----------------------------------------------------

struct HeatmapStats {
    double min = 0.0, max = 0.0;
    bool degenerate = false;  // min == max, or no pixels selected
};

// Linear min->0, max->255 over selected pixels; unselected pixels render 0.
// A degenerate (constant) field renders uniform mid-gray 128.
HeatmapStats render_heatmap(const std::vector<double>& values, int width, int height,
                            const std::vector<std::uint8_t>* select, const fs::path& pgm_path) {
    HeatmapStats st;
    bool any = false;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (select && !(*select)[i]) continue;
        if (!any) {
            st.min = st.max = values[i];
            any = true;
        } else {
            st.min = std::min(st.min, values[i]);
            st.max = std::max(st.max, values[i]);
        }
    }
    st.degenerate = !any || st.min == st.max;
    ScalarField img(width, height, 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (select && !(*select)[i]) continue;
        img.values[i] = st.degenerate ? 128.0 : (values[i] - st.min) / (st.max - st.min) * 255.0;
    }
    detail::write_file_bytes(pgm_path, encode_pgm(img));
    return st;
}

void write_minmax(const fs::path& path, const HeatmapStats& st) {
    std::string text;
    text += "min=" + fmt(st.min) + "\n";
    text += "max=" + fmt(st.max) + "\n";
    text += std::string("degenerate=") + (st.degenerate ? "1" : "0") + "\n";
    write_text(path, text);
}

// |value| histogram over log-spaced buckets 10^0..10^3.
void write_histogram(const fs::path& path, const std::vector<double>& values) {
    constexpr double edges[] = {1.0, 10.0, 100.0, 1000.0};
    std::size_t counts[5] = {0, 0, 0, 0, 0};
    for (double v : values) {
        const double a = std::abs(v);
        int b = 4;
        for (int i = 0; i < 4; ++i) {
            if (a < edges[i]) {
                b = i;
                break;
            }
        }
        ++counts[b];
    }
    std::string text = "lo,hi,count\n";
    const char* lo[] = {"0", "1", "10", "100", "1000"};
    const char* hi[] = {"1", "10", "100", "1000", "inf"};
    for (int i = 0; i < 5; ++i) {
        text += std::string(lo[i]) + "," + hi[i] + "," + std::to_string(counts[i]) + "\n";
    }
    write_text(path, text);
}

// ---- subcommand: simulate --------------------------------------------------

struct SimulateOpts {
    int width = 256, height = 256;
    std::string field = "rigid";
    double u0 = 0.0, v0 = 0.0;
    double ulo = -1.0, uhi = 1.0, vlo = -1.0, vhi = 1.0;
    double pmin = 10.0, pmax = 120.0;
    double noise_sigma = 0.0;
    std::uint64_t noise_seed = 1;
    std::uint64_t seed = 1;
    std::string preset;
    int speckles = 0;
    double radius = 2.0, peak = 200.0, background = 20.0;
    std::string scheme = "bicubic";
    std::string out_dir;
};

void require_no_conflicts(const CLI::App* sub, const std::string& field,
                          std::initializer_list<const char*> flags) {
    for (const char* f : flags) {
        if (sub->count(f) > 0) {
            throw usage_error(std::string(f) + " does not apply to --field " + field);
        }
    }
}

void run_simulate(const CLI::App* sub, const SimulateOpts& o) {
    FieldSpec field;
    if (o.field == "rigid") {
        require_no_conflicts(sub, o.field,
                             {"--ulo", "--uhi", "--vlo", "--vhi", "--pmin", "--pmax"});
        field = FieldSpec::rigid(o.u0, o.v0);
    } else if (o.field == "linear") {
        require_no_conflicts(sub, o.field, {"--u0", "--v0", "--pmin", "--pmax"});
        field = FieldSpec::linear(o.ulo, o.uhi, o.vlo, o.vhi);
    } else if (o.field == "star") {
        require_no_conflicts(sub, o.field, {"--u0", "--v0", "--ulo", "--uhi", "--vlo", "--vhi"});
        if (o.pmin <= 0.0 || o.pmax < o.pmin) {
            throw usage_error("star field needs 0 < --pmin <= --pmax");
        }
        field = FieldSpec::star(o.pmin, o.pmax);
    } else {
        throw usage_error("unknown --field \"" + o.field + "\" (expected rigid, linear, or star)");
    }

    SpeckleConfig scfg;
    scfg.width = o.width;
    scfg.height = o.height;
    scfg.seed = o.seed;
    scfg.radius = o.radius;
    scfg.peak = o.peak;
    scfg.background = o.background;
    if (!o.preset.empty()) {
        const SpecklePreset* found = nullptr;
        for (const auto& p : speckle_presets()) {
            if (o.preset == p.name) found = &p;
        }
        if (!found) {
            throw usage_error("unknown --preset \"" + o.preset + "\" (expected r1..r6)");
        }
        scfg = preset_config(*found, o.width, o.height, o.seed);
        scfg.peak = o.peak;
        scfg.background = o.background;
        if (sub->count("--radius") > 0) scfg.radius = o.radius;
        if (sub->count("--speckles") > 0) scfg.num_speckles = o.speckles;
    } else if (sub->count("--speckles") > 0) {
        scfg.num_speckles = o.speckles;
    } else {
        // Default density matches preset r2 scaled to the image area.
        scfg.num_speckles = static_cast<int>(std::lround(
            1300.0 * (static_cast<double>(o.width) * o.height) / (256.0 * 256.0)));
    }

    Benchmark bench = make_benchmark(scfg, field, parse_scheme(o.scheme), o.noise_sigma,
                                     o.noise_sigma, o.noise_seed);

    const fs::path dir = make_out_dir(o.out_dir);
    detail::write_file_bytes(dir / "ref.pgm", encode_pgm(bench.ref));
    detail::write_file_bytes(dir / "def.pgm", encode_pgm(bench.def));
    save_field(bench.truth, dir / "truth.dicf", FieldFormat::dicf);

    Manifest man("simulate");
    man.set("width", o.width);
    man.set("height", o.height);
    man.set("field", o.field);
    if (o.field == "rigid") {
        man.set("u0", o.u0);
        man.set("v0", o.v0);
    } else if (o.field == "linear") {
        man.set("ulo", o.ulo);
        man.set("uhi", o.uhi);
        man.set("vlo", o.vlo);
        man.set("vhi", o.vhi);
    } else {
        man.set("pmin", o.pmin);
        man.set("pmax", o.pmax);
    }
    man.set("noise-sigma", o.noise_sigma);
    man.set("noise-seed", o.noise_seed);
    man.set("seed", o.seed);
    if (!o.preset.empty()) man.set("preset", o.preset);
    man.set("speckles", scfg.num_speckles);
    man.set("radius", scfg.radius);
    man.set("peak", scfg.peak);
    man.set("background", scfg.background);
    man.set("scheme", o.scheme);
    man.set("out-dir", o.out_dir);
    man.write(dir);

    Summary sum;
    sum.add("command", "simulate");
    sum.add("width", o.width);
    sum.add("height", o.height);
    sum.add("field", o.field);
    sum.add("speckles", scfg.num_speckles);
    sum.add("radius", scfg.radius);
    sum.add("noise_sigma", o.noise_sigma);
    sum.add("margin", bench.margin);
    sum.add("ref", (dir / "ref.pgm").string());
    sum.add("def", (dir / "def.pgm").string());
    sum.add("truth", (dir / "truth.dicf").string());
    sum.emit_stdout_only();
}

// ---- subcommand: solve -----------------------------------------------------

struct SolveOpts {
    std::string ref, def, mask;
    bool no_warmup = false;
    std::uint64_t seed = 0;
    int adam_iters = 1000;
    int lbfgs_iters = 2000;
    std::string scheme = "bicubic";
    int hidden_layers = 4;
    int hidden_width = 50;
    double output_scale = 10.0;
    double stop_warmup = 3.0;
    double stop_formal = 0.1;
    bool deterministic = false;
    std::string out_dir;
};

void append_trace_csv(std::string& text, const char* stage, const StageTrace& trace) {
    for (std::size_t i = 0; i < trace.loss.size(); ++i) {
        text += std::string(stage) + "," + std::to_string(i) + "," +
                std::to_string(static_cast<int>(trace.optimizer[i])) + "," + fmt(trace.loss[i]) +
                "," + fmt(trace.mean_abs_gray_error[i]) + "\n";
    }
}

void run_solve(const SolveOpts& o) {
    ScalarField ref = load_image(o.ref);
    ScalarField def = load_image(o.def);
    RoiMask roi =
        o.mask.empty() ? RoiMask::full(ref.width, ref.height) : load_mask(o.mask);
    require_mask_matches(roi, ref.width, ref.height);

    SolveConfig cfg = SolveConfig::defaults();
    cfg.mlp.hidden_layers = o.hidden_layers;
    cfg.mlp.hidden_width = o.hidden_width;
    cfg.mlp.output_scale = o.output_scale;
    cfg.scheme = parse_scheme(o.scheme);
    cfg.warmup_enabled = !o.no_warmup;
    cfg.seed = o.seed;
    cfg.deterministic = o.deterministic;
    for (StageConfig* stage : {&cfg.warmup, &cfg.formal}) {
        stage->adam.max_iters = o.adam_iters;
        stage->lbfgs.max_iters = o.lbfgs_iters;
        stage->max_iters = o.adam_iters + o.lbfgs_iters;
    }
    cfg.warmup.stop_mean_gray_error = o.stop_warmup;
    cfg.formal.stop_mean_gray_error = o.stop_formal;

    auto progress = [](const char* stage, int iter, double loss, double mae) {
        if (iter % 100 == 0) {
            std::cerr << stage << " iter=" << iter << " loss=" << fmt(loss) << " mae=" << fmt(mae)
                      << "\n";
        }
    };
    SolveReport rep = solve(ref, def, roi, cfg, progress);

    const fs::path dir = make_out_dir(o.out_dir);
    save_field(rep.displacement, dir / "disp.dicf", FieldFormat::dicf);
    save_network(rep.network, rep.width, rep.height, dir / "net.dicp");

    std::string trace = "stage,record,optimizer,loss,mean_abs_gray_error\n";
    if (rep.warmup_ran) append_trace_csv(trace, "warmup", rep.warmup_trace);
    append_trace_csv(trace, "formal", rep.formal_trace);
    write_text(dir / "trace.csv", trace);

    Manifest man("solve");
    man.hash_input("ref", o.ref);
    man.hash_input("def", o.def);
    if (!o.mask.empty()) man.hash_input("mask", o.mask);
    man.set("ref", o.ref);
    man.set("def", o.def);
    if (!o.mask.empty()) man.set("mask", o.mask);
    man.set_flag("no-warmup", o.no_warmup);
    man.set("seed", o.seed);
    man.set("adam-iters", o.adam_iters);
    man.set("lbfgs-iters", o.lbfgs_iters);
    man.set("scheme", o.scheme);
    man.set("hidden-layers", o.hidden_layers);
    man.set("hidden-width", o.hidden_width);
    man.set("output-scale", o.output_scale);
    man.set("stop-warmup", o.stop_warmup);
    man.set("stop-formal", o.stop_formal);
    man.set_flag("deterministic", o.deterministic);
    man.set("out-dir", o.out_dir);
    man.write(dir);

    Summary sum;
    sum.add("command", "solve");
    sum.add("width", rep.width);
    sum.add("height", rep.height);
    sum.add("roi_pixels", rep.roi_pixels);
    sum.add("warmup_ran", rep.warmup_ran ? "true" : "false");
    if (rep.warmup_ran) {
        sum.add("warmup_stop", to_string(rep.warmup_trace.stop));
        sum.add("warmup_steps", rep.warmup_trace.steps);
    }
    sum.add("formal_stop", to_string(rep.formal_trace.stop));
    sum.add("formal_steps", rep.formal_trace.steps);
    sum.add("final_loss", rep.final_loss);
    sum.add("final_mean_abs_gray_error", rep.final_mean_abs_gray_error);
    sum.add("wall_seconds", rep.wall_seconds);
    sum.add("points_per_second", rep.points_per_second);
    for (const std::string& w : rep.warnings) sum.add("warning", w);
    sum.add("disp", (dir / "disp.dicf").string());
    sum.add("net", (dir / "net.dicp").string());
    sum.emit(dir);
}

// ---- subcommand: subset ----------------------------------------------------

struct SubsetOpts {
    std::string ref, def, mask;
    int subset = 31;
    int step = 1;
    int radius = 10;
    std::string order = "first";
    std::string scheme = "bicubic";
    int max_iters = 50;
    double tol = 1e-4;
    std::string out_dir;
};

void run_subset(const SubsetOpts& o) {
    ScalarField ref = load_image(o.ref);
    ScalarField def = load_image(o.def);
    RoiMask roi =
        o.mask.empty() ? RoiMask::full(ref.width, ref.height) : load_mask(o.mask);
    require_mask_matches(roi, ref.width, ref.height);

    SubsetConfig cfg;
    cfg.subset_size = o.subset;
    cfg.step = o.step;
    cfg.search_radius = o.radius;
    if (o.order == "zero") {
        cfg.order = SubsetConfig::Order::zero;
    } else if (o.order == "first") {
        cfg.order = SubsetConfig::Order::first;
    } else {
        throw usage_error("unknown --order \"" + o.order + "\" (expected zero or first)");
    }
    cfg.scheme = parse_scheme(o.scheme);
    cfg.max_iters = o.max_iters;
    cfg.conv_tol = o.tol;

    const auto t0 = std::chrono::steady_clock::now();
    SubsetResult res = subset_solve(ref, def, roi, cfg);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::size_t valid_count = res.valid.count_inside();
    const double pps = wall > 0.0 ? static_cast<double>(valid_count) / wall : 0.0;

    const fs::path dir = make_out_dir(o.out_dir);
    save_field(res.disp, dir / "disp.dicf", FieldFormat::dicf);
    detail::write_file_bytes(dir / "valid.pgm", encode_pgm(mask_to_image(res.valid)));

    Manifest man("subset");
    man.hash_input("ref", o.ref);
    man.hash_input("def", o.def);
    if (!o.mask.empty()) man.hash_input("mask", o.mask);
    man.set("ref", o.ref);
    man.set("def", o.def);
    if (!o.mask.empty()) man.set("mask", o.mask);
    man.set("subset", o.subset);
    man.set("step", o.step);
    man.set("radius", o.radius);
    man.set("order", o.order);
    man.set("scheme", o.scheme);
    man.set("max-iters", o.max_iters);
    man.set("tol", o.tol);
    man.set("out-dir", o.out_dir);
    man.write(dir);

    Summary sum;
    sum.add("command", "subset");
    sum.add("width", ref.width);
    sum.add("height", ref.height);
    sum.add("subset", o.subset);
    sum.add("step", o.step);
    sum.add("order", o.order);
    sum.add("edge_band", edge_band(cfg));
    sum.add("valid_count", valid_count);
    sum.add("wall_seconds", wall);
    sum.add("points_per_second", pps);
    sum.add("disp", (dir / "disp.dicf").string());
    sum.add("valid", (dir / "valid.pgm").string());
    sum.emit(dir);
}

// ---- subcommand: compare ---------------------------------------------------

struct CompareOpts {
    std::string result, truth, mask;
    std::string columns = "128,512,896";
    std::string out_dir;
};

void run_compare(const CompareOpts& o) {
    VectorField2 result = load_vector_field(o.result);
    VectorField2 truth = load_vector_field(o.truth);
    RoiMask roi =
        o.mask.empty() ? RoiMask::full(result.width, result.height) : load_mask(o.mask);
    require_mask_matches(roi, result.width, result.height);

    ErrorMetrics m = error_metrics(result, truth, roi);
    const fs::path dir = make_out_dir(o.out_dir);

    std::string metrics;
    metrics += "count=" + fmt(m.count) + "\n";
    metrics += "mae_u=" + fmt(m.mae_u) + "\n";
    metrics += "mae_v=" + fmt(m.mae_v) + "\n";
    metrics += "rmse_u=" + fmt(m.rmse_u) + "\n";
    metrics += "rmse_v=" + fmt(m.rmse_v) + "\n";
    write_text(dir / "metrics.txt", metrics);

    std::vector<int> written_columns;
    for (int col : parse_int_list(o.columns)) {
        if (col < 0 || col >= result.width) {
            std::cerr << "column " << col << " outside image width " << result.width
                      << ", skipped\n";
            continue;
        }
        ColumnProfile prof = column_profile(result, truth, roi, col);
        std::string csv = "row,err_u,err_v\n";
        for (std::size_t i = 0; i < prof.rows.size(); ++i) {
            csv += std::to_string(prof.rows[i]) + "," + fmt(prof.err_u[i]) + "," +
                   fmt(prof.err_v[i]) + "\n";
        }
        write_text(dir / ("col_" + std::to_string(col) + ".csv"), csv);
        written_columns.push_back(col);
    }

    Manifest man("compare");
    man.hash_input("result", o.result);
    man.hash_input("truth", o.truth);
    if (!o.mask.empty()) man.hash_input("mask", o.mask);
    man.set("result", o.result);
    man.set("truth", o.truth);
    if (!o.mask.empty()) man.set("mask", o.mask);
    man.set("columns", o.columns);
    man.set("out-dir", o.out_dir);
    man.write(dir);

    Summary sum;
    sum.add("command", "compare");
    sum.add("count", m.count);
    sum.add("mae_u", m.mae_u);
    sum.add("mae_v", m.mae_v);
    sum.add("rmse_u", m.rmse_u);
    sum.add("rmse_v", m.rmse_v);
    for (int col : written_columns) {
        sum.add("column", (dir / ("col_" + std::to_string(col) + ".csv")).string());
    }
    sum.add("metrics", (dir / "metrics.txt").string());
    sum.emit_stdout_only();
}

// ---- subcommand: strain ----------------------------------------------------

struct StrainOpts {
    std::string disp, mask;
    int window = 11;
    std::string method = "plane";
    std::string net;
    std::string out_dir;
};

void run_strain(const StrainOpts& o) {
    VectorField2 disp = load_vector_field(o.disp);
    RoiMask roi =
        o.mask.empty() ? RoiMask::full(disp.width, disp.height) : load_mask(o.mask);
    require_mask_matches(roi, disp.width, disp.height);

    StrainField sf;
    if (o.method == "plane") {
        if (!o.net.empty()) throw usage_error("--net requires --method network");
        sf = strain(disp, roi, StrainMethod::central_diff, o.window);
    } else if (o.method == "network") {
        if (o.net.empty()) throw usage_error("--method network requires --net");
        NetworkCheckpoint ck = load_network(o.net);
        require_same_shape(ck.width, ck.height, disp.width, disp.height,
                           "network checkpoint vs displacement field");
        sf = strain(disp, roi, StrainMethod::network_jacobian, o.window, &ck.params);
    } else {
        throw usage_error("unknown --method \"" + o.method + "\" (expected plane or network)");
    }

    const fs::path dir = make_out_dir(o.out_dir);
    auto save_component = [&](const std::vector<double>& values, const char* name) {
        ScalarField f(sf.width, sf.height);
        f.values = values;
        save_field(f, dir / name, FieldFormat::dicf);
    };
    save_component(sf.exx, "exx.dicf");
    save_component(sf.eyy, "eyy.dicf");
    save_component(sf.exy, "exy.dicf");
    save_component(sf.gamma_max, "gamma.dicf");
    RoiMask valid(sf.width, sf.height);
    valid.inside = sf.valid;
    detail::write_file_bytes(dir / "valid.pgm", encode_pgm(mask_to_image(valid)));

    HeatmapStats st = render_heatmap(sf.gamma_max, sf.width, sf.height, &sf.valid,
                                     dir / "gamma.pgm");
    write_minmax(dir / "gamma.minmax.txt", st);

    Manifest man("strain");
    man.hash_input("disp", o.disp);
    if (!o.mask.empty()) man.hash_input("mask", o.mask);
    if (!o.net.empty()) man.hash_input("net", o.net);
    man.set("disp", o.disp);
    if (!o.mask.empty()) man.set("mask", o.mask);
    man.set("window", o.window);
    man.set("method", o.method);
    if (!o.net.empty()) man.set("net", o.net);
    man.set("out-dir", o.out_dir);
    man.write(dir);

    Summary sum;
    sum.add("command", "strain");
    sum.add("width", sf.width);
    sum.add("height", sf.height);
    sum.add("method", o.method);
    sum.add("window", o.window);
    sum.add("valid_count", valid.count_inside());
    sum.add("gamma_min", st.min);
    sum.add("gamma_max", st.max);
    sum.add("degenerate", st.degenerate ? "1" : "0");
    sum.add("gamma_heatmap", (dir / "gamma.pgm").string());
    sum.emit(dir);
}

// ---- subcommand: render ----------------------------------------------------

struct RenderOpts {
    std::string in;
    std::string channel;
    std::string out_dir;
};

void run_render(const RenderOpts& o) {
    const fs::path in_path(o.in);
    const std::string ext = in_path.extension().string();
    ScalarField field;
    if (ext == ".dicf") {
        std::string bytes = detail::read_file_bytes(in_path);
        if (dicf_channels(bytes) == 2) {
            if (o.channel != "u" && o.channel != "v") {
                throw usage_error("2-channel field needs --channel u or --channel v");
            }
            VectorField2 vec = decode_dicf_vector(bytes);
            field = ScalarField(vec.width, vec.height);
            field.values = o.channel == "u" ? vec.u : vec.v;
        } else {
            if (!o.channel.empty()) {
                throw usage_error("--channel applies only to 2-channel fields");
            }
            field = decode_dicf_scalar(bytes);
        }
    } else if (ext == ".csv" || ext == ".pgm") {
        if (!o.channel.empty()) {
            throw usage_error("--channel applies only to 2-channel fields");
        }
        field = load_scalar_field(in_path);
    } else {
        throw usage_error("unsupported input format \"" + ext + "\" (expected .dicf, .csv, or .pgm)");
    }

    const fs::path dir = make_out_dir(o.out_dir);
    std::string stem = in_path.stem().string();
    if (!o.channel.empty()) stem += "_" + o.channel;
    HeatmapStats st = render_heatmap(field.values, field.width, field.height, nullptr,
                                     dir / (stem + ".pgm"));
    write_minmax(dir / (stem + ".minmax.txt"), st);
    write_histogram(dir / (stem + ".hist.csv"), field.values);

    Manifest man("render");
    man.hash_input("in", o.in);
    man.set("in", o.in);
    if (!o.channel.empty()) man.set("channel", o.channel);
    man.set("out-dir", o.out_dir);
    man.write(dir);

    Summary sum;
    sum.add("command", "render");
    sum.add("width", field.width);
    sum.add("height", field.height);
    sum.add("min", st.min);
    sum.add("max", st.max);
    sum.add("degenerate", st.degenerate ? "1" : "0");
    sum.add("heatmap", (dir / (stem + ".pgm")).string());
    sum.add("histogram", (dir / (stem + ".hist.csv")).string());
    sum.emit_stdout_only();
}

// ---- wiring ----------------------------------------------------------------

// Lets `--config` (owned by the root app, which alone processes config files)
// be written after the subcommand name, the natural spot in a rerun command.
void configure_common(CLI::App* sub) { sub->fallthrough(true); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pindic: full-field displacement measurement from speckle image pairs"};
    app.set_version_flag("--version", std::string("pindic ") + kVersion);
    app.require_subcommand(1);
    // Manifests double as config files; values live under a [subcommand]
    // section, and the informational keys above it (command=, version=,
    // input-hash-*) are skipped here rather than treated as errors.
    app.set_config("--config", "", "read options from a key=value file (a run manifest works)");
    app.allow_config_extras(CLI::config_extras_mode::ignore_all);

    auto sim = std::make_shared<SimulateOpts>();
    CLI::App* sim_cmd = app.add_subcommand("simulate", "synthesize a speckle benchmark pair");
    configure_common(sim_cmd);
    sim_cmd->add_option("--width", sim->width, "image width, pixels")->check(CLI::Range(8, 1 << 16));
    sim_cmd->add_option("--height", sim->height, "image height, pixels")
        ->check(CLI::Range(8, 1 << 16));
    sim_cmd->add_option("--field", sim->field, "displacement field: rigid, linear, or star");
    sim_cmd->add_option("--u0", sim->u0, "rigid: horizontal shift, pixels");
    sim_cmd->add_option("--v0", sim->v0, "rigid: vertical shift, pixels");
    sim_cmd->add_option("--ulo", sim->ulo, "linear: u at left edge, pixels");
    sim_cmd->add_option("--uhi", sim->uhi, "linear: u at right edge, pixels");
    sim_cmd->add_option("--vlo", sim->vlo, "linear: v at top edge, pixels");
    sim_cmd->add_option("--vhi", sim->vhi, "linear: v at bottom edge, pixels");
    sim_cmd->add_option("--pmin", sim->pmin, "star: smallest period, pixels");
    sim_cmd->add_option("--pmax", sim->pmax, "star: largest period, pixels");
    sim_cmd->add_option("--noise-sigma", sim->noise_sigma, "gaussian noise sigma, gray units")
        ->check(CLI::NonNegativeNumber);
    sim_cmd->add_option("--noise-seed", sim->noise_seed, "noise stream seed");
    sim_cmd->add_option("--seed", sim->seed, "speckle placement seed");
    sim_cmd->add_option("--preset", sim->preset, "speckle preset r1..r6 (radius/count pairs)");
    sim_cmd->add_option("--speckles", sim->speckles, "speckle count (default: preset density)")
        ->check(CLI::PositiveNumber);
    sim_cmd->add_option("--radius", sim->radius, "speckle gaussian radius, pixels")
        ->check(CLI::PositiveNumber);
    sim_cmd->add_option("--peak", sim->peak, "speckle peak brightness, gray units");
    sim_cmd->add_option("--background", sim->background, "background gray level");
    sim_cmd->add_option("--scheme", sim->scheme, "warp interpolation: bilinear or bicubic");
    sim_cmd->add_option("--out-dir", sim->out_dir, "output directory")->required();
    sim_cmd->callback([sim, sim_cmd] { run_simulate(sim_cmd, *sim); });

    auto sol = std::make_shared<SolveOpts>();
    CLI::App* sol_cmd = app.add_subcommand("solve", "recover displacement with the network solver");
    configure_common(sol_cmd);
    sol_cmd->add_option("--ref", sol->ref, "reference image (.pgm or .dicf)")->required();
    sol_cmd->add_option("--def", sol->def, "deformed image (.pgm or .dicf)")->required();
    sol_cmd->add_option("--mask", sol->mask, "ROI mask PGM (nonzero = inside)");
    sol_cmd->add_flag("--no-warmup", sol->no_warmup, "skip the log-residual warm-up stage");
    sol_cmd->add_option("--seed", sol->seed, "network initialization seed");
    sol_cmd->add_option("--adam-iters", sol->adam_iters, "Adam iterations per stage")
        ->check(CLI::NonNegativeNumber);
    sol_cmd->add_option("--lbfgs-iters", sol->lbfgs_iters, "L-BFGS iterations per stage")
        ->check(CLI::NonNegativeNumber);
    sol_cmd->add_option("--scheme", sol->scheme, "image interpolation: bilinear or bicubic");
    sol_cmd->add_option("--hidden-layers", sol->hidden_layers, "MLP hidden layer count")
        ->check(CLI::PositiveNumber);
    sol_cmd->add_option("--hidden-width", sol->hidden_width, "MLP hidden layer width")
        ->check(CLI::PositiveNumber);
    sol_cmd->add_option("--output-scale", sol->output_scale, "output scale, pixels per unit");
    sol_cmd->add_option("--stop-warmup", sol->stop_warmup,
                        "warm-up stop threshold on mean |gray error|");
    sol_cmd->add_option("--stop-formal", sol->stop_formal,
                        "formal stop threshold on mean |gray error|");
    sol_cmd->add_flag("--deterministic", sol->deterministic, "force single-threaded reductions");
    sol_cmd->add_option("--out-dir", sol->out_dir, "output directory")->required();
    sol_cmd->callback([sol] { run_solve(*sol); });

    auto sub = std::make_shared<SubsetOpts>();
    CLI::App* sub_cmd = app.add_subcommand("subset", "recover displacement with the subset baseline");
    configure_common(sub_cmd);
    sub_cmd->add_option("--ref", sub->ref, "reference image (.pgm or .dicf)")->required();
    sub_cmd->add_option("--def", sub->def, "deformed image (.pgm or .dicf)")->required();
    sub_cmd->add_option("--mask", sub->mask, "ROI mask PGM (nonzero = inside)");
    sub_cmd->add_option("--subset", sub->subset, "subset size, odd pixels");
    sub_cmd->add_option("--step", sub->step, "evaluation grid pitch, pixels");
    sub_cmd->add_option("--radius", sub->radius, "integer search radius, pixels");
    sub_cmd->add_option("--order", sub->order, "shape function order: zero or first");
    sub_cmd->add_option("--scheme", sub->scheme, "image interpolation: bilinear or bicubic");
    sub_cmd->add_option("--max-iters", sub->max_iters, "Gauss-Newton iteration cap");
    sub_cmd->add_option("--tol", sub->tol, "convergence tolerance on the update norm");
    sub_cmd->add_option("--out-dir", sub->out_dir, "output directory")->required();
    sub_cmd->callback([sub] { run_subset(*sub); });

    auto cmp = std::make_shared<CompareOpts>();
    CLI::App* cmp_cmd = app.add_subcommand("compare", "score a result field against a truth field");
    configure_common(cmp_cmd);
    cmp_cmd->add_option("--result", cmp->result, "result displacement field (.dicf, 2-channel)")
        ->required();
    cmp_cmd->add_option("--truth", cmp->truth, "truth displacement field (.dicf, 2-channel)")
        ->required();
    cmp_cmd->add_option("--mask", cmp->mask, "ROI mask PGM (nonzero = inside)");
    cmp_cmd->add_option("--columns", cmp->columns, "comma-separated columns for error profiles");
    cmp_cmd->add_option("--out-dir", cmp->out_dir, "output directory")->required();
    cmp_cmd->callback([cmp] { run_compare(*cmp); });

    auto str = std::make_shared<StrainOpts>();
    CLI::App* str_cmd = app.add_subcommand("strain", "differentiate displacement into strain");
    configure_common(str_cmd);
    str_cmd->add_option("--disp", str->disp, "displacement field (.dicf, 2-channel)")->required();
    str_cmd->add_option("--mask", str->mask, "ROI mask PGM (nonzero = inside)");
    str_cmd->add_option("--window", str->window, "plane-fit window size, odd pixels");
    str_cmd->add_option("--method", str->method, "differentiation: plane or network");
    str_cmd->add_option("--net", str->net, "network checkpoint (.dicp) for --method network");
    str_cmd->add_option("--out-dir", str->out_dir, "output directory")->required();
    str_cmd->callback([str] { run_strain(*str); });

    auto ren = std::make_shared<RenderOpts>();
    CLI::App* ren_cmd = app.add_subcommand("render", "map a scalar field to a heatmap + histogram");
    configure_common(ren_cmd);
    ren_cmd->add_option("--in", ren->in, "input field (.dicf, .csv, or .pgm)")->required();
    ren_cmd->add_option("--channel", ren->channel, "u or v, for 2-channel inputs");
    ren_cmd->add_option("--out-dir", ren->out_dir, "output directory")->required();
    ren_cmd->callback([ren] { run_render(*ren); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::FileError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const numerical_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const format_error& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 3;
    } catch (const io_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

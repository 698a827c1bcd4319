#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "pindic/grid.hpp"
#include "pindic/interp.hpp"
#include "pindic/rng.hpp"

// Synthetic speckle benchmark generator.
//
// Reference images are sums of Gaussian spots on a constant background,
//   I(x) = clip(background + sum_s peak * exp(-|x - c_s|^2 / (2 r^2)), 0, 255),
// with centers drawn uniformly over the image rectangle. The deformed image
// is the reference resampled through the prescribed field with the warp
// convention the solver inverts, I_D(x) = I_R(x - u(x)), so a synthesized
// pair and its ground truth are exactly consistent. Additive Gaussian noise
// is applied after synthesis, unclamped, with independent draws per image;
// the lossless float container keeps those real values intact.

namespace pindic {

struct SpeckleConfig {
    int width = 256;
    int height = 256;
    int num_speckles = 1300;
    double radius = 2.0;      // Gaussian sigma of a spot, pixels
    double peak = 200.0;      // gray units
    double background = 20.0; // gray units
    std::uint64_t seed = 1;
};

struct FieldSpec {
    enum class Kind { rigid, linear, star };
    Kind kind = Kind::rigid;
    double u0 = 0.0, v0 = 0.0;                          // rigid
    double ulo = 0.0, uhi = 0.0, vlo = 0.0, vhi = 0.0;  // linear, corner to corner
    double pmin = 10.0, pmax = 120.0;                   // star period range, pixels

    static FieldSpec rigid(double u0, double v0) {
        FieldSpec f;
        f.kind = Kind::rigid;
        f.u0 = u0;
        f.v0 = v0;
        return f;
    }
    static FieldSpec linear(double ulo, double uhi, double vlo, double vhi) {
        FieldSpec f;
        f.kind = Kind::linear;
        f.ulo = ulo;
        f.uhi = uhi;
        f.vlo = vlo;
        f.vhi = vhi;
        return f;
    }
    static FieldSpec star(double pmin, double pmax) {
        FieldSpec f;
        f.kind = Kind::star;
        f.pmin = pmin;
        f.pmax = pmax;
        return f;
    }
};

inline std::vector<std::array<double, 2>> speckle_centers(const SpeckleConfig& cfg) {
    Rng rng(cfg.seed);
    std::vector<std::array<double, 2>> centers;
    centers.reserve(static_cast<std::size_t>(std::max(0, cfg.num_speckles)));
    for (int s = 0; s < cfg.num_speckles; ++s) {
        const double x = rng.uniform(0.0, static_cast<double>(cfg.width - 1));
        const double y = rng.uniform(0.0, static_cast<double>(cfg.height - 1));
        centers.push_back({x, y});
    }
    return centers;
}

// Deterministic core: accumulate the given spots, then clip. Each spot only
// touches pixels within 5 radii; beyond that a 200-peak spot contributes
// under 1e-3 gray, far below anything the solver can see.
inline ScalarField render_speckles(const SpeckleConfig& cfg,
                                   std::span<const std::array<double, 2>> centers) {
    ScalarField acc(cfg.width, cfg.height, 0.0);
    const double inv2r2 = 1.0 / (2.0 * cfg.radius * cfg.radius);
    const int reach = static_cast<int>(std::ceil(5.0 * cfg.radius));
    for (const auto& c : centers) {
        const int x0 = std::max(0, static_cast<int>(std::floor(c[0])) - reach);
        const int x1 = std::min(cfg.width - 1, static_cast<int>(std::ceil(c[0])) + reach);
        const int y0 = std::max(0, static_cast<int>(std::floor(c[1])) - reach);
        const int y1 = std::min(cfg.height - 1, static_cast<int>(std::ceil(c[1])) + reach);
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double dx = static_cast<double>(x) - c[0];
                const double dy = static_cast<double>(y) - c[1];
                acc.at(x, y) += cfg.peak * std::exp(-(dx * dx + dy * dy) * inv2r2);
            }
        }
    }
    for (double& v : acc.values) v = std::clamp(cfg.background + v, 0.0, 255.0);
    return acc;
}

inline ScalarField gen_speckle(const SpeckleConfig& cfg) {
    const auto centers = speckle_centers(cfg);
    return render_speckles(cfg, centers);
}

// Six spot-size presets, fine to coarse. Densities hold n * radius^2 fixed,
// which keeps the covered-area fraction (and the ~10% of pixels that clip at
// 255) constant across presets, near the density that maximizes gradient
// content; the patterns differ in feature scale, not contrast budget. Counts
// are per 256x256 and scale with area.
struct SpecklePreset {
    const char* name;
    double radius;
    int speckles_per_256;
};

inline const std::array<SpecklePreset, 6>& speckle_presets() {
    static const std::array<SpecklePreset, 6> presets{{
        {"r1", 1.0, 5200},
        {"r2", 2.0, 1300},
        {"r3", 3.0, 580},
        {"r4", 4.0, 325},
        {"r5", 5.0, 210},
        {"r6", 6.0, 145},
    }};
    return presets;
}

inline SpeckleConfig preset_config(const SpecklePreset& preset, int width, int height,
                                   std::uint64_t seed) {
    SpeckleConfig cfg;
    cfg.width = width;
    cfg.height = height;
    cfg.radius = preset.radius;
    cfg.num_speckles = static_cast<int>(std::lround(
        static_cast<double>(preset.speckles_per_256) *
        (static_cast<double>(width) * height) / (256.0 * 256.0)));
    cfg.seed = seed;
    return cfg;
}

// Prescribed displacement field sampled on the pixel grid.
inline VectorField2 eval_field(const FieldSpec& spec, int width, int height) {
    VectorField2 out(width, height);
    switch (spec.kind) {
        case FieldSpec::Kind::rigid:
            for (std::size_t i = 0; i < out.size(); ++i) {
                out.u[i] = spec.u0;
                out.v[i] = spec.v0;
            }
            break;
        case FieldSpec::Kind::linear:
            for (int y = 0; y < height; ++y) {
                const double fy = height > 1 ? static_cast<double>(y) / (height - 1) : 0.0;
                const double v = spec.vlo + (spec.vhi - spec.vlo) * fy;
                for (int x = 0; x < width; ++x) {
                    const double fx = width > 1 ? static_cast<double>(x) / (width - 1) : 0.0;
                    out.u_at(x, y) = spec.ulo + (spec.uhi - spec.ulo) * fx;
                    out.v_at(x, y) = v;
                }
            }
            break;
        case FieldSpec::Kind::star:
            // v = cos(2 pi (y - H/2) / A(x)), A(x) = pmin + x (pmax - pmin) / L;
            // period grows left to right, u stays zero.
            for (int y = 0; y < height; ++y) {
                const double dy = static_cast<double>(y) - 0.5 * height;
                for (int x = 0; x < width; ++x) {
                    const double period =
                        spec.pmin + static_cast<double>(x) * (spec.pmax - spec.pmin) / width;
                    out.u_at(x, y) = 0.0;
                    out.v_at(x, y) = std::cos(2.0 * std::numbers::pi * dy / period);
                }
            }
            break;
    }
    return out;
}

// I_D(x) = I_R(x - u(x)). Border policy error by default: a field that walks
// off the reference raises instead of silently inventing data.
inline ScalarField synthesize_deformed(const ScalarField& ref, const VectorField2& truth,
                                       SampleScheme scheme,
                                       BorderPolicy border = BorderPolicy::error) {
    require_same_shape(ref.width, ref.height, truth.width, truth.height,
                       "reference vs truth field");
    ScalarField out(ref.width, ref.height);
    for (int y = 0; y < ref.height; ++y) {
        for (int x = 0; x < ref.width; ++x) {
            const double sx = static_cast<double>(x) - truth.u_at(x, y);
            const double sy = static_cast<double>(y) - truth.v_at(x, y);
            try {
                out.at(x, y) = sample(ref, sx, sy, scheme, border);
            } catch (const bounds_error&) {
                throw bounds_error(
                    "deformed-image synthesis sampled outside the reference at pixel (" +
                    std::to_string(x) + ", " + std::to_string(y) +
                    "); enlarge the reference margins or shrink the field");
            }
        }
    }
    return out;
}

// Additive Gaussian noise, unclamped: synthesized data stays real-valued and
// the 8-bit export is the only lossy step.
inline ScalarField add_noise(const ScalarField& img, double sigma, std::uint64_t seed) {
    ScalarField out = img;
    if (sigma == 0.0) return out;
    Rng rng(seed);
    for (double& v : out.values) v += sigma * rng.gaussian();
    return out;
}

inline ScalarField crop(const ScalarField& img, int x0, int y0, int width, int height) {
    ScalarField out(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) out.at(x, y) = img.at(x0 + x, y0 + y);
    }
    return out;
}

struct Benchmark {
    ScalarField ref, def;
    VectorField2 truth;
    int margin = 0;          // padding used during synthesis
    std::uint64_t noise_seed = 0;
};

// Full benchmark: synthesize on a padded canvas so every warped sample stays
// in bounds even for fields that push past the image edge, then crop back.
// Speckle count scales with the padded area to keep density unchanged.
// Noise streams: reference = stream(noise_seed, 0), deformed = stream(1).
inline Benchmark make_benchmark(const SpeckleConfig& cfg, const FieldSpec& field,
                                SampleScheme scheme, double sigma_ref, double sigma_def,
                                std::uint64_t noise_seed) {
    Benchmark b;
    b.noise_seed = noise_seed;
    b.truth = eval_field(field, cfg.width, cfg.height);
    double max_disp = 0.0;
    for (std::size_t i = 0; i < b.truth.size(); ++i) {
        max_disp = std::max({max_disp, std::abs(b.truth.u[i]), std::abs(b.truth.v[i])});
    }
    const int margin = static_cast<int>(std::ceil(max_disp)) + 3;
    b.margin = margin;

    SpeckleConfig padded = cfg;
    padded.width = cfg.width + 2 * margin;
    padded.height = cfg.height + 2 * margin;
    padded.num_speckles = static_cast<int>(std::lround(
        static_cast<double>(cfg.num_speckles) *
        (static_cast<double>(padded.width) * padded.height) /
        (static_cast<double>(cfg.width) * cfg.height)));
    const ScalarField canvas = gen_speckle(padded);

    b.def = ScalarField(cfg.width, cfg.height);
    for (int y = 0; y < cfg.height; ++y) {
        for (int x = 0; x < cfg.width; ++x) {
            const double sx = static_cast<double>(x + margin) - b.truth.u_at(x, y);
            const double sy = static_cast<double>(y + margin) - b.truth.v_at(x, y);
            try {
                b.def.at(x, y) = sample(canvas, sx, sy, scheme, BorderPolicy::error);
            } catch (const bounds_error&) {
                throw bounds_error(
                    "benchmark synthesis sampled outside the padded reference at pixel (" +
                    std::to_string(x) + ", " + std::to_string(y) +
                    "); enlarge the reference margins or shrink the field");
            }
        }
    }
    b.ref = crop(canvas, margin, margin, cfg.width, cfg.height);
    if (sigma_ref > 0.0) b.ref = add_noise(b.ref, sigma_ref, Rng::stream(noise_seed, 0).next_u64());
    if (sigma_def > 0.0) b.def = add_noise(b.def, sigma_def, Rng::stream(noise_seed, 1).next_u64());
    return b;
}

}  // namespace pindic

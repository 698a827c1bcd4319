#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pindic/grid.hpp"
#include "pindic/interp.hpp"
#include "pindic/parallel.hpp"

// Classical subset correlation baseline: integer ZNCC search for the initial
// guess, then inverse-compositional Gauss-Newton on the ZNSSD criterion with
// a zero- or first-order subset shape function. Each evaluation point is
// solved independently; points whose subset leaves the image or the ROI, or
// whose refinement diverges, are reported invalid rather than guessed.

namespace pindic {

struct SubsetConfig {
    int subset_size = 31;  // odd, pixels
    int step = 1;          // evaluation grid pitch, pixels
    int search_radius = 10;
    enum class Order { zero, first } order = Order::first;
    SampleScheme scheme = SampleScheme::bicubic();
    int max_iters = 50;
    double conv_tol = 1e-4;  // on the scaled parameter update norm
};

// Half-width of the subset: no point closer than this to the image edge can
// carry a full subset, so validity always excludes this border band.
inline int edge_band(const SubsetConfig& cfg) { return cfg.subset_size / 2; }

struct SubsetResult {
    VectorField2 disp;  // 0 where not evaluated or invalid
    RoiMask valid;      // evaluated and converged
};

namespace detail {

// In-place Gauss-Jordan solve A x = b with partial pivoting; false if A is
// numerically singular. A is n x n row-major, clobbered.
inline bool solve_dense(int n, double* A, double* b) {
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        double best = std::abs(A[col * n + col]);
        for (int r = col + 1; r < n; ++r) {
            const double v = std::abs(A[r * n + col]);
            if (v > best) {
                best = v;
                pivot = r;
            }
        }
        if (!(best > 1e-12)) return false;
        if (pivot != col) {
            for (int c = 0; c < n; ++c) std::swap(A[col * n + c], A[pivot * n + c]);
            std::swap(b[col], b[pivot]);
        }
        const double inv = 1.0 / A[col * n + col];
        for (int c = col; c < n; ++c) A[col * n + c] *= inv;
        b[col] *= inv;
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = A[r * n + col];
            if (f == 0.0) continue;
            for (int c = col; c < n; ++c) A[r * n + c] -= f * A[col * n + c];
            b[r] -= f * b[col];
        }
    }
    return true;
}

struct SubsetPoint {
    int x, y;
};

}  // namespace detail

inline SubsetResult subset_solve(const ScalarField& ref, const ScalarField& def,
                                 const RoiMask& roi, const SubsetConfig& cfg) {
    require_same_shape(ref.width, ref.height, def.width, def.height, "reference vs deformed");
    require_same_shape(ref.width, ref.height, roi.width, roi.height, "image vs mask");
    if (cfg.subset_size < 3 || cfg.subset_size % 2 == 0) {
        throw usage_error("subset size must be odd and at least 3");
    }
    if (cfg.step < 1) throw usage_error("step must be at least 1");

    const int half = edge_band(cfg);
    const int W = ref.width, H = ref.height;
    const int np = cfg.order == SubsetConfig::Order::first ? 6 : 2;

    SubsetResult result;
    result.disp = VectorField2(W, H);
    result.valid = RoiMask(W, H, 0);

    // evaluation grid: every step-th pixel whose full subset lies inside both
    // the image and the ROI
    std::vector<detail::SubsetPoint> points;
    for (int y = 0; y < H; y += cfg.step) {
        for (int x = 0; x < W; x += cfg.step) {
            if (!roi.at(x, y)) continue;
            if (x - half < 0 || x + half >= W || y - half < 0 || y + half >= H) continue;
            bool ok = true;
            for (int e = -half; e <= half && ok; ++e) {
                for (int d = -half; d <= half; ++d) {
                    if (!roi.at(x + d, y + e)) {
                        ok = false;
                        break;
                    }
                }
            }
            if (ok) points.push_back({x, y});
        }
    }

    const std::size_t side = static_cast<std::size_t>(cfg.subset_size);
    const std::size_t npix = side * side;

    for_chunks(points.size(), 4, [&](std::size_t, std::size_t, std::size_t begin,
                                     std::size_t end) {
        std::vector<double> f(npix), fx(npix), fy(npix), g(npix), e(npix);
        std::vector<double> sd(npix * static_cast<std::size_t>(np));
        for (std::size_t pi = begin; pi < end; ++pi) {
            const int x0 = points[pi].x, y0 = points[pi].y;

            // reference subset and its interpolant gradient at the nodes
            double fsum = 0.0;
            std::size_t k = 0;
            for (int e2 = -half; e2 <= half; ++e2) {
                for (int d = -half; d <= half; ++d, ++k) {
                    const Sample s = sample_grad(ref, x0 + d, y0 + e2, cfg.scheme,
                                                 BorderPolicy::clamp);
                    f[k] = s.value;
                    fx[k] = s.dx;
                    fy[k] = s.dy;
                    fsum += s.value;
                }
            }
            const double fmean = fsum / static_cast<double>(npix);
            double fnorm2 = 0.0;
            for (k = 0; k < npix; ++k) {
                f[k] -= fmean;
                fnorm2 += f[k] * f[k];
            }
            if (!(fnorm2 > 1e-12)) continue;  // featureless subset
            const double fnorm = std::sqrt(fnorm2);

            // integer ZNCC search for the starting displacement
            int best_dx = 0, best_dy = 0;
            double best_score = -2.0;
            for (int dy = -cfg.search_radius; dy <= cfg.search_radius; ++dy) {
                for (int dx = -cfg.search_radius; dx <= cfg.search_radius; ++dx) {
                    const int cx = x0 + dx, cy = y0 + dy;
                    if (cx - half < 0 || cx + half >= W || cy - half < 0 || cy + half >= H) {
                        continue;
                    }
                    double gsum = 0.0;
                    k = 0;
                    for (int e2 = -half; e2 <= half; ++e2) {
                        const double* row =
                            def.values.data() + static_cast<std::size_t>(cy + e2) * W;
                        for (int d = -half; d <= half; ++d, ++k) {
                            g[k] = row[cx + d];
                            gsum += g[k];
                        }
                    }
                    const double gmean = gsum / static_cast<double>(npix);
                    double cross = 0.0, gnorm2 = 0.0;
                    for (k = 0; k < npix; ++k) {
                        const double gt = g[k] - gmean;
                        cross += f[k] * gt;
                        gnorm2 += gt * gt;
                    }
                    if (!(gnorm2 > 1e-12)) continue;
                    const double score = cross / (fnorm * std::sqrt(gnorm2));
                    if (score > best_score) {
                        best_score = score;
                        best_dx = dx;
                        best_dy = dy;
                    }
                }
            }
            if (best_score <= -2.0) continue;  // no candidate window fit

            // steepest-descent images and Hessian for the inverse-compositional
            // update (both stay fixed on the reference subset)
            k = 0;
            for (int e2 = -half; e2 <= half; ++e2) {
                for (int d = -half; d <= half; ++d, ++k) {
                    double* row = sd.data() + k * static_cast<std::size_t>(np);
                    if (cfg.order == SubsetConfig::Order::first) {
                        row[0] = fx[k];
                        row[1] = fx[k] * d;
                        row[2] = fx[k] * e2;
                        row[3] = fy[k];
                        row[4] = fy[k] * d;
                        row[5] = fy[k] * e2;
                    } else {
                        row[0] = fx[k];
                        row[1] = fy[k];
                    }
                }
            }
            std::array<double, 36> hess{};
            for (k = 0; k < npix; ++k) {
                const double* row = sd.data() + k * static_cast<std::size_t>(np);
                for (int a = 0; a < np; ++a) {
                    for (int b2 = 0; b2 < np; ++b2) hess[a * np + b2] += row[a] * row[b2];
                }
            }

            // p = (u, ux, uy, v, vx, vy); start from the integer search
            std::array<double, 6> p{static_cast<double>(best_dx), 0.0, 0.0,
                                    static_cast<double>(best_dy), 0.0, 0.0};
            bool converged = false, dead = false;
            for (int iter = 0; iter < cfg.max_iters && !converged && !dead; ++iter) {
                double gsum = 0.0;
                k = 0;
                for (int e2 = -half; e2 <= half && !dead; ++e2) {
                    for (int d = -half; d <= half; ++d, ++k) {
                        const double wx = x0 + d + p[0] + p[1] * d + p[2] * e2;
                        const double wy = y0 + e2 + p[3] + p[4] * d + p[5] * e2;
                        if (wx < 0.0 || wx > W - 1 || wy < 0.0 || wy > H - 1) {
                            dead = true;  // walked off the deformed image
                            break;
                        }
                        g[k] = sample(def, wx, wy, cfg.scheme, BorderPolicy::clamp);
                        gsum += g[k];
                    }
                }
                if (dead) break;
                const double gmean = gsum / static_cast<double>(npix);
                double gnorm2 = 0.0;
                for (k = 0; k < npix; ++k) {
                    g[k] -= gmean;
                    gnorm2 += g[k] * g[k];
                }
                if (!(gnorm2 > 1e-12)) {
                    dead = true;
                    break;
                }
                const double ratio = fnorm / std::sqrt(gnorm2);
                for (k = 0; k < npix; ++k) e[k] = f[k] - ratio * g[k];

                std::array<double, 6> rhs{};
                for (k = 0; k < npix; ++k) {
                    const double* row = sd.data() + k * static_cast<std::size_t>(np);
                    for (int a = 0; a < np; ++a) rhs[a] += row[a] * e[k];
                }
                std::array<double, 36> A = hess;
                std::array<double, 6> dp = rhs;
                if (!detail::solve_dense(np, A.data(), dp.data())) {
                    dead = true;
                    break;
                }
                for (int a = 0; a < np; ++a) dp[a] = -dp[a];

                if (cfg.order == SubsetConfig::Order::first) {
                    // W(p) <- W(p) . W(dp)^-1 on the affine warp matrices
                    const double a00 = 1.0 + dp[1], a01 = dp[2], a10 = dp[4], a11 = 1.0 + dp[5];
                    const double det = a00 * a11 - a01 * a10;
                    if (!(std::abs(det) > 1e-12)) {
                        dead = true;
                        break;
                    }
                    const double i00 = a11 / det, i01 = -a01 / det;
                    const double i10 = -a10 / det, i11 = a00 / det;
                    const double it0 = -(i00 * dp[0] + i01 * dp[3]);
                    const double it1 = -(i10 * dp[0] + i11 * dp[3]);
                    const double c00 = 1.0 + p[1], c01 = p[2], c10 = p[4], c11 = 1.0 + p[5];
                    const double n00 = c00 * i00 + c01 * i10;
                    const double n01 = c00 * i01 + c01 * i11;
                    const double n10 = c10 * i00 + c11 * i10;
                    const double n11 = c10 * i01 + c11 * i11;
                    const double nt0 = c00 * it0 + c01 * it1 + p[0];
                    const double nt1 = c10 * it0 + c11 * it1 + p[3];
                    p = {nt0, n00 - 1.0, n01, nt1, n10, n11 - 1.0};
                } else {
                    p[0] -= dp[0];
                    p[3] -= dp[1];
                }

                double upd;
                if (cfg.order == SubsetConfig::Order::first) {
                    upd = std::sqrt(dp[0] * dp[0] + dp[3] * dp[3] +
                                    (dp[1] * dp[1] + dp[2] * dp[2] + dp[4] * dp[4] +
                                     dp[5] * dp[5]) *
                                        static_cast<double>(half) * half);
                } else {
                    upd = std::sqrt(dp[0] * dp[0] + dp[1] * dp[1]);
                }
                if (!std::isfinite(upd)) {
                    dead = true;
                    break;
                }
                if (upd < cfg.conv_tol) converged = true;
            }

            const double pu = p[0], pv = p[3];
            if (converged && std::isfinite(pu) && std::isfinite(pv)) {
                result.disp.u_at(x0, y0) = pu;
                result.disp.v_at(x0, y0) = pv;
                result.valid.set(x0, y0, true);
            }
        }
    });

    return result;
}

}  // namespace pindic

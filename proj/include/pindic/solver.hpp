#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pindic/grid.hpp"
#include "pindic/network.hpp"
#include "pindic/objective.hpp"
#include "pindic/optim.hpp"
#include "pindic/parallel.hpp"

// End-to-end displacement solver: initialize the coordinate network, run the
// two-stage schedule (log-residual warm-up, then mean-squared formal stage),
// and extract the displacement at every ROI pixel from the best iterate.
// Derived quantities: strain fields via local plane fits or the network's
// own input Jacobian, and error metrics against a ground-truth field.

namespace pindic {

struct SolveConfig {
    MlpConfig mlp;                 // mlp.seed is overwritten by `seed` at solve time
    SampleScheme scheme = SampleScheme::bicubic();
    bool warmup_enabled = true;
    StageConfig warmup;
    StageConfig formal;
    std::uint64_t seed = 0;
    bool deterministic = false;    // force a single worker thread

    static SolveConfig defaults() {
        SolveConfig cfg;
        cfg.warmup.kind = LossKind::log_residual;
        cfg.warmup.stop_mean_gray_error = 3.0;
        cfg.formal.kind = LossKind::mse;
        cfg.formal.stop_mean_gray_error = 0.1;
        return cfg;
    }
};

struct SolveReport {
    VectorField2 displacement;     // 0 outside the ROI
    bool warmup_ran = false;
    StageTrace warmup_trace;
    StageTrace formal_trace;
    double wall_seconds = 0.0;
    double points_per_second = 0.0;
    double final_loss = 0.0;               // at the returned (best) iterate
    double final_mean_abs_gray_error = 0.0;
    MlpParams network;                     // best iterate across the schedule
    int width = 0, height = 0;
    std::size_t roi_pixels = 0;
    SolveConfig config;                    // resolved configuration echo
    std::vector<std::string> warnings;
};

namespace detail {

struct ThreadBudgetGuard {
    int saved;
    explicit ThreadBudgetGuard(bool force_single) : saved(thread_budget_override()) {
        if (force_single) set_thread_budget(1);
    }
    ~ThreadBudgetGuard() { thread_budget_override() = saved; }
};

}  // namespace detail

using SolveObserver = std::function<void(const char* stage, int iter, double loss, double mae)>;

inline SolveReport solve(const ScalarField& ref, const ScalarField& def, const RoiMask& roi,
                         SolveConfig config, const SolveObserver& observer = {}) {
    detail::ThreadBudgetGuard budget_guard(config.deterministic);
    config.mlp.seed = config.seed;

    SolveReport report;
    report.width = ref.width;
    report.height = ref.height;

    const auto t0 = std::chrono::steady_clock::now();
    Objective objective(ref, def, roi, config.scheme, config.mlp);
    report.roi_pixels = objective.roi_count();

    const std::size_t n_params = param_count(config.mlp.hidden_layers, config.mlp.hidden_width);
    if (report.roi_pixels < 10 * n_params) {
        report.warnings.push_back(
            "ROI has " + std::to_string(report.roi_pixels) + " pixels for " +
            std::to_string(n_params) + " network parameters; the fit is weakly constrained");
    }

    MlpParams params = init_network(config.mlp);
    MlpParams scratch = params;

    auto stage_fn = [&](LossKind kind) {
        return StageFn([&objective, &scratch, kind](std::span<const double> x,
                                                    std::span<double> g, double& mae) {
            scratch.flat.assign(x.begin(), x.end());
            ObjectiveEval ev = objective.evaluate(scratch, kind, true);
            std::copy(ev.param_grad.begin(), ev.param_grad.end(), g.begin());
            mae = ev.mean_abs_gray_error;
            return ev.loss;
        });
    };

    double best_mae = std::numeric_limits<double>::infinity();
    double best_loss = 0.0;
    std::vector<double> best_params = params.flat;
    bool aborted = false;

    if (config.warmup_enabled) {
        auto obs = [&](int iter, double loss, double mae, bool) {
            if (observer) observer("warmup", iter, loss, mae);
        };
        StageResult sr = run_stage(params.flat, stage_fn(config.warmup.kind), config.warmup, obs);
        report.warmup_ran = true;
        report.warmup_trace = std::move(sr.trace);
        if (sr.best_mae < best_mae) {
            best_mae = sr.best_mae;
            best_loss = sr.best_loss;
            best_params = std::move(sr.best_params);
        }
        aborted = report.warmup_trace.stop == StopCause::numerical_error;
    }

    if (!aborted) {
        auto obs = [&](int iter, double loss, double mae, bool) {
            if (observer) observer("formal", iter, loss, mae);
        };
        StageResult sr = run_stage(params.flat, stage_fn(config.formal.kind), config.formal, obs);
        report.formal_trace = std::move(sr.trace);
        if (sr.best_mae < best_mae) {
            best_mae = sr.best_mae;
            best_loss = sr.best_loss;
            best_params = std::move(sr.best_params);
        }
    }

    params.flat = std::move(best_params);
    report.displacement = objective.extract_displacement(params);
    report.network = params;
    report.final_loss = best_loss;
    report.final_mean_abs_gray_error = best_mae;
    report.config = config;

    const auto t1 = std::chrono::steady_clock::now();
    report.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    report.points_per_second =
        report.wall_seconds > 0.0 ? static_cast<double>(report.roi_pixels) / report.wall_seconds
                                  : 0.0;
    return report;
}

inline SolveReport solve(const ScalarField& ref, const ScalarField& def, SolveConfig config,
                         const SolveObserver& observer = {}) {
    return solve(ref, def, RoiMask::full(ref.width, ref.height), std::move(config), observer);
}

// ---- Strain ----------------------------------------------------------------

enum class StrainMethod { central_diff, network_jacobian };

struct StrainField {
    int width = 0, height = 0;
    std::vector<double> exx, eyy, exy, gamma_max;
    std::vector<std::uint8_t> valid;

    StrainField() = default;
    StrainField(int w, int h)
        : width(w),
          height(h),
          exx(ScalarField::checked_size(w, h), 0.0),
          eyy(exx.size(), 0.0),
          exy(exx.size(), 0.0),
          gamma_max(exx.size(), 0.0),
          valid(exx.size(), 0) {}
};

namespace detail {

// Least-squares plane u ~ a + b dx + c dy over the window points; returns
// false when the normal system is singular (under 3 points, or collinear).
inline bool plane_slopes(const double* sums, double& bx, double& by) {
    // sums: n, sx, sy, sxx, sxy, syy, su, sux, suy
    const double n = sums[0], sx = sums[1], sy = sums[2];
    const double sxx = sums[3], sxy = sums[4], syy = sums[5];
    const double su = sums[6], sux = sums[7], suy = sums[8];
    const double det = n * (sxx * syy - sxy * sxy) - sx * (sx * syy - sxy * sy) +
                       sy * (sx * sxy - sxx * sy);
    if (!(std::abs(det) > 1e-9)) return false;
    // Cramer on the 3x3 normal system, slopes only
    const double det_b = n * (sux * syy - sxy * suy) - su * (sx * syy - sxy * sy) +
                         sy * (sx * suy - sux * sy);
    const double det_c = n * (sxx * suy - sux * sxy) - sx * (sx * suy - sux * sy) +
                         su * (sx * sxy - sxx * sy);
    bx = det_b / det;
    by = det_c / det;
    return true;
}

}  // namespace detail

// gamma_max = 2 sqrt(((exx - eyy)/2)^2 + exy^2): the full in-plane shear,
// twice the maximum-shear-strain radius of Mohr's circle.
inline double gamma_max_of(double exx, double eyy, double exy) {
    const double half_diff = 0.5 * (exx - eyy);
    return 2.0 * std::sqrt(half_diff * half_diff + exy * exy);
}

inline StrainField strain(const VectorField2& disp, const RoiMask& roi, StrainMethod method,
                          int window = 11, const MlpParams* net = nullptr) {
    require_same_shape(disp.width, disp.height, roi.width, roi.height, "field vs mask");
    StrainField out(disp.width, disp.height);

    if (method == StrainMethod::network_jacobian) {
        if (!net) throw usage_error("network strain needs the solved network parameters");
        const CoordMap map{disp.width, disp.height};
        const double sx = map.dnx_dx(), sy = map.dny_dy();
        for (int y = 0; y < disp.height; ++y) {
            for (int x = 0; x < disp.width; ++x) {
                if (!roi.at(x, y)) continue;
                const auto jac = input_jacobian(*net, map.nx(x), map.ny(y));
                const std::size_t i = static_cast<std::size_t>(y) * disp.width + x;
                const double dudx = jac[0] * sx, dudy = jac[1] * sy;
                const double dvdx = jac[2] * sx, dvdy = jac[3] * sy;
                out.exx[i] = dudx;
                out.eyy[i] = dvdy;
                out.exy[i] = 0.5 * (dudy + dvdx);
                out.gamma_max[i] = gamma_max_of(out.exx[i], out.eyy[i], out.exy[i]);
                out.valid[i] = 1;
            }
        }
        return out;
    }

    if (window < 3 || window % 2 == 0) {
        throw usage_error("strain window must be an odd size of at least 3");
    }
    const int half = window / 2;
    for (int y = 0; y < disp.height; ++y) {
        for (int x = 0; x < disp.width; ++x) {
            if (!roi.at(x, y)) continue;
            double su[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
            double sv_u = 0.0, sv_x = 0.0, sv_y = 0.0;
            int count = 0;
            const int y0 = std::max(0, y - half), y1 = std::min(disp.height - 1, y + half);
            const int x0 = std::max(0, x - half), x1 = std::min(disp.width - 1, x + half);
            for (int yy = y0; yy <= y1; ++yy) {
                for (int xx = x0; xx <= x1; ++xx) {
                    if (!roi.at(xx, yy)) continue;
                    const double dx = xx - x, dy = yy - y;
                    const double uv = disp.u_at(xx, yy), vv = disp.v_at(xx, yy);
                    su[0] += 1.0;
                    su[1] += dx;
                    su[2] += dy;
                    su[3] += dx * dx;
                    su[4] += dx * dy;
                    su[5] += dy * dy;
                    su[6] += uv;
                    su[7] += uv * dx;
                    su[8] += uv * dy;
                    sv_u += vv;
                    sv_x += vv * dx;
                    sv_y += vv * dy;
                    ++count;
                }
            }
            const std::size_t i = static_cast<std::size_t>(y) * disp.width + x;
            if (count < 3) continue;  // marked invalid
            double dudx, dudy, dvdx, dvdy;
            if (!detail::plane_slopes(su, dudx, dudy)) continue;
            su[6] = sv_u;
            su[7] = sv_x;
            su[8] = sv_y;
            if (!detail::plane_slopes(su, dvdx, dvdy)) continue;
            out.exx[i] = dudx;
            out.eyy[i] = dvdy;
            out.exy[i] = 0.5 * (dudy + dvdx);
            out.gamma_max[i] = gamma_max_of(out.exx[i], out.eyy[i], out.exy[i]);
            out.valid[i] = 1;
        }
    }
    return out;
}

// ---- Error metrics ---------------------------------------------------------

struct ErrorMetrics {
    double mae_u = 0.0, mae_v = 0.0;
    double rmse_u = 0.0, rmse_v = 0.0;
    ScalarField err_u, err_v;  // signed result - truth, 0 outside the ROI
    std::size_t count = 0;
};

inline ErrorMetrics error_metrics(const VectorField2& result, const VectorField2& truth,
                                  const RoiMask& roi) {
    require_same_shape(result.width, result.height, truth.width, truth.height,
                       "result vs truth");
    require_same_shape(result.width, result.height, roi.width, roi.height, "field vs mask");
    ErrorMetrics m;
    m.err_u = ScalarField(result.width, result.height, 0.0);
    m.err_v = ScalarField(result.width, result.height, 0.0);
    double sau = 0.0, sav = 0.0, squ = 0.0, sqv = 0.0;
    for (int y = 0; y < result.height; ++y) {
        for (int x = 0; x < result.width; ++x) {
            if (!roi.at(x, y)) continue;
            const double eu = result.u_at(x, y) - truth.u_at(x, y);
            const double ev = result.v_at(x, y) - truth.v_at(x, y);
            m.err_u.at(x, y) = eu;
            m.err_v.at(x, y) = ev;
            sau += std::abs(eu);
            sav += std::abs(ev);
            squ += eu * eu;
            sqv += ev * ev;
            ++m.count;
        }
    }
    if (m.count == 0) throw empty_roi_error("no pixels to compare");
    const double n = static_cast<double>(m.count);
    m.mae_u = sau / n;
    m.mae_v = sav / n;
    m.rmse_u = std::sqrt(squ / n);
    m.rmse_v = std::sqrt(sqv / n);
    return m;
}

// Signed error along one image column, ROI rows only.
struct ColumnProfile {
    int column = 0;
    std::vector<int> rows;
    std::vector<double> err_u, err_v;
};

inline ColumnProfile column_profile(const VectorField2& result, const VectorField2& truth,
                                    const RoiMask& roi, int column) {
    require_same_shape(result.width, result.height, truth.width, truth.height,
                       "result vs truth");
    require_same_shape(result.width, result.height, roi.width, roi.height, "field vs mask");
    if (column < 0 || column >= result.width) {
        throw usage_error("column " + std::to_string(column) + " outside image width " +
                          std::to_string(result.width));
    }
    ColumnProfile p;
    p.column = column;
    for (int y = 0; y < result.height; ++y) {
        if (!roi.at(column, y)) continue;
        p.rows.push_back(y);
        p.err_u.push_back(result.u_at(column, y) - truth.u_at(column, y));
        p.err_v.push_back(result.v_at(column, y) - truth.v_at(column, y));
    }
    return p;
}

}  // namespace pindic

#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "pindic/error.hpp"
#include "pindic/objective.hpp"

// Optimizers and the two-stage schedule driver.
//
// Each stage runs its Adam budget, then hands the iterate to L-BFGS. A stage
// stops when the mean absolute gray error drops to its threshold, when the
// loss plateaus (relative change below 1% between consecutive 100-iteration
// epoch marks, three epoch pairs in a row), when the iteration budget is
// spent, or when an L-BFGS line search fails. The returned solution is the
// best iterate seen (lowest mean absolute gray error), not the last one.

namespace pindic {

// ---- Adam ------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;  // coupled L2: g' = g + wd * theta
    int max_iters = 1000;
};

struct AdamState {
    std::vector<double> m, v;
    long t = 0;
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

inline void adam_step(std::vector<double>& params, std::span<const double> grad, AdamState& st,
                      const AdamConfig& cfg) {
    assert(grad.size() == params.size() && st.m.size() == params.size());
    ++st.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i] + cfg.weight_decay * params[i];
        st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g;
        st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

// ---- L-BFGS with strong Wolfe line search ----------------------------------

struct LbfgsConfig {
    double lr = 1.0;      // initial trial step per iteration
    int max_iters = 2000;
    int history = 10;
    double c1 = 1e-4;     // sufficient decrease
    double c2 = 0.9;      // curvature
    int max_line_trials = 25;
    double grad_tol = 1e-10;  // on the gradient infinity norm
};

enum class LbfgsStatus { converged, max_iters, line_search_failure, stopped };

struct LbfgsResult {
    LbfgsStatus status = LbfgsStatus::max_iters;
    int iterations = 0;
};

// f(x, grad_out) -> loss. grad_out has x's size and must be fully written.
using ValueGradFn = std::function<double(std::span<const double>, std::span<double>)>;

// Called after each accepted iteration, with x already updated and the
// objective's most recent evaluation taken exactly at x. Return false to stop.
using LbfgsMonitor = std::function<bool(int iter, double f, std::span<const double> x)>;

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double inf_norm(const std::vector<double>& a) {
    double s = 0.0;
    for (double v : a) s = std::max(s, std::abs(v));
    return s;
}

}  // namespace detail

inline LbfgsResult lbfgs_run(std::vector<double>& x, const ValueGradFn& fn,
                             const LbfgsConfig& cfg, const LbfgsMonitor& monitor = {}) {
    const std::size_t n = x.size();
    std::vector<double> g(n), x_new(n), g_new(n), d(n), q(n);
    double f = fn(x, g);
    if (detail::inf_norm(g) <= cfg.grad_tol) return {LbfgsStatus::converged, 0};

    const int hist_cap = std::max(1, cfg.history);
    std::vector<std::vector<double>> s_hist(hist_cap, std::vector<double>(n)),
        y_hist(hist_cap, std::vector<double>(n));
    std::vector<double> rho_hist(hist_cap, 0.0), alpha_hist;
    int stored = 0, head = 0;  // ring buffer; head = next write slot

    auto pair_at = [&](int back) {  // back = 0 newest
        return (head - 1 - back + 2 * hist_cap) % hist_cap;
    };

    for (int iter = 1; iter <= cfg.max_iters; ++iter) {
        // two-loop recursion: d = -H g
        q = g;
        alpha_hist.assign(static_cast<std::size_t>(stored), 0.0);
        for (int b = 0; b < stored; ++b) {
            const int i = pair_at(b);
            const double a = rho_hist[i] * detail::dot(s_hist[i], q);
            alpha_hist[b] = a;
            for (std::size_t k = 0; k < n; ++k) q[k] -= a * y_hist[i][k];
        }
        if (stored > 0) {
            const int newest = pair_at(0);
            const double gamma = 1.0 / (rho_hist[newest] * detail::dot(y_hist[newest], y_hist[newest]));
            for (std::size_t k = 0; k < n; ++k) q[k] *= gamma;
        }
        for (int b = stored - 1; b >= 0; --b) {
            const int i = pair_at(b);
            const double beta = rho_hist[i] * detail::dot(y_hist[i], q);
            for (std::size_t k = 0; k < n; ++k) q[k] += (alpha_hist[b] - beta) * s_hist[i][k];
        }
        for (std::size_t k = 0; k < n; ++k) d[k] = -q[k];

        double dg0 = detail::dot(d, g);
        if (!(dg0 < 0.0)) {  // not a descent direction: drop history, steepest descent
            stored = 0;
            head = 0;
            for (std::size_t k = 0; k < n; ++k) d[k] = -g[k];
            dg0 = -detail::dot(g, g);
        }

        // strong Wolfe line search (bracket, then zoom)
        int trials = 0;
        auto phi = [&](double alpha, double& dphi) {
            for (std::size_t k = 0; k < n; ++k) x_new[k] = x[k] + alpha * d[k];
            const double fa = fn(x_new, g_new);
            dphi = detail::dot(g_new, d);
            ++trials;
            return fa;
        };

        double accepted_alpha = -1.0, f_acc = 0.0;
        double alpha_lo = 0.0, f_lo = f, dphi_lo = dg0;
        double alpha_hi = 0.0, f_hi = 0.0;
        bool bracketed = false;

        double alpha_prev = 0.0, f_prev = f, dphi_prev = dg0;
        double alpha = cfg.lr;
        while (trials < cfg.max_line_trials) {
            double dphi_a;
            const double f_a = phi(alpha, dphi_a);
            if (f_a > f + cfg.c1 * alpha * dg0 || (trials > 1 && f_a >= f_prev)) {
                alpha_lo = alpha_prev; f_lo = f_prev; dphi_lo = dphi_prev;
                alpha_hi = alpha; f_hi = f_a;
                bracketed = true;
                break;
            }
            if (std::abs(dphi_a) <= -cfg.c2 * dg0) {
                accepted_alpha = alpha;
                f_acc = f_a;
                break;
            }
            if (dphi_a >= 0.0) {
                alpha_lo = alpha; f_lo = f_a; dphi_lo = dphi_a;
                alpha_hi = alpha_prev; f_hi = f_prev;
                bracketed = true;
                break;
            }
            alpha_prev = alpha; f_prev = f_a; dphi_prev = dphi_a;
            alpha *= 2.0;
        }

        if (bracketed && accepted_alpha < 0.0) {
            while (trials < cfg.max_line_trials) {
                const double span = alpha_hi - alpha_lo;
                // quadratic interpolation from (f_lo, dphi_lo, f_hi), bisection fallback
                double alpha_j;
                const double denom = 2.0 * (f_hi - f_lo - dphi_lo * span);
                if (denom != 0.0) {
                    alpha_j = alpha_lo - dphi_lo * span * span / denom;
                } else {
                    alpha_j = alpha_lo + 0.5 * span;
                }
                const double lo = std::min(alpha_lo, alpha_hi), hi = std::max(alpha_lo, alpha_hi);
                const double margin = 0.1 * (hi - lo);
                if (!std::isfinite(alpha_j) || alpha_j < lo + margin || alpha_j > hi - margin) {
                    alpha_j = alpha_lo + 0.5 * span;
                }
                double dphi_j;
                const double f_j = phi(alpha_j, dphi_j);
                if (f_j > f + cfg.c1 * alpha_j * dg0 || f_j >= f_lo) {
                    alpha_hi = alpha_j; f_hi = f_j;
                } else {
                    if (std::abs(dphi_j) <= -cfg.c2 * dg0) {
                        accepted_alpha = alpha_j;
                        f_acc = f_j;
                        break;
                    }
                    if (dphi_j * (alpha_hi - alpha_lo) >= 0.0) {
                        alpha_hi = alpha_lo; f_hi = f_lo;
                    }
                    alpha_lo = alpha_j; f_lo = f_j; dphi_lo = dphi_j;
                }
                if (alpha_hi == alpha_lo) break;
            }
        }

        if (accepted_alpha < 0.0) {
            return {LbfgsStatus::line_search_failure, iter - 1};
        }

        // every accepted step satisfies both strong Wolfe conditions
        assert(f_acc <= f + cfg.c1 * accepted_alpha * dg0);
        assert(std::abs(detail::dot(g_new, d)) <= -cfg.c2 * dg0);
        assert(f_acc <= f);  // monotone decrease

        // curvature pair, skipped when y.s is numerically vacuous
        {
            std::vector<double>& s_slot = s_hist[head];
            std::vector<double>& y_slot = y_hist[head];
            for (std::size_t k = 0; k < n; ++k) {
                s_slot[k] = x_new[k] - x[k];
                y_slot[k] = g_new[k] - g[k];
            }
            const double sty = detail::dot(s_slot, y_slot);
            const double ns = std::sqrt(detail::dot(s_slot, s_slot));
            const double ny = std::sqrt(detail::dot(y_slot, y_slot));
            if (sty > 1e-10 * ns * ny) {
                rho_hist[head] = 1.0 / sty;
                head = (head + 1) % hist_cap;
                stored = std::min(stored + 1, hist_cap);
            }
        }

        x.swap(x_new);
        g.swap(g_new);
        f = f_acc;

        if (monitor && !monitor(iter, f, x)) return {LbfgsStatus::stopped, iter};
        if (detail::inf_norm(g) <= cfg.grad_tol) return {LbfgsStatus::converged, iter};
    }
    return {LbfgsStatus::max_iters, cfg.max_iters};
}

// ---- Plateau rule ----------------------------------------------------------

struct PlateauConfig {
    int epoch = 100;       // iterations per epoch mark
    double rel_tol = 0.01; // relative loss change considered flat
    int patience = 3;      // consecutive flat epoch pairs required
};

class PlateauDetector {
public:
    explicit PlateauDetector(const PlateauConfig& cfg) : cfg_(cfg) {}

    // Feed one loss per iteration; true once the rule fires.
    bool push(double loss) {
        ++count_;
        if (count_ % cfg_.epoch != 0) return false;
        if (has_prev_) {
            const double rel = std::abs(loss - prev_) / std::max(prev_, 1e-30);
            streak_ = rel < cfg_.rel_tol ? streak_ + 1 : 0;
        }
        prev_ = loss;
        has_prev_ = true;
        return streak_ >= cfg_.patience;
    }

private:
    PlateauConfig cfg_;
    long count_ = 0;
    double prev_ = 0.0;
    bool has_prev_ = false;
    int streak_ = 0;
};

// ---- Stage runner ----------------------------------------------------------

enum class StopCause {
    gray_error_threshold,
    plateau,
    max_iters,
    line_search_failure,
    numerical_error,
};

inline const char* to_string(StopCause c) {
    switch (c) {
        case StopCause::gray_error_threshold: return "gray_error_threshold";
        case StopCause::plateau: return "plateau";
        case StopCause::max_iters: return "max_iters";
        case StopCause::line_search_failure: return "line_search_failure";
        case StopCause::numerical_error: return "numerical_error";
    }
    return "unknown";
}

struct StageConfig {
    LossKind kind = LossKind::mse;
    AdamConfig adam;
    LbfgsConfig lbfgs;
    int max_iters = 4000;  // cap on total optimizer steps in the stage
    double stop_mean_gray_error = 0.1;
    PlateauConfig plateau;
};

struct StageTrace {
    std::vector<double> loss;
    std::vector<double> mean_abs_gray_error;
    std::vector<std::uint8_t> optimizer;  // 0 = adam, 1 = lbfgs
    StopCause stop = StopCause::max_iters;
    int steps = 0;  // optimizer steps actually taken
};

struct StageResult {
    StageTrace trace;
    double best_mae = std::numeric_limits<double>::infinity();
    double best_loss = 0.0;
    std::vector<double> best_params;  // iterate with the lowest recorded mae
    double final_loss = 0.0;
    double final_mae = 0.0;
};

// f(x, grad_out, mae_out) -> loss; grad_out always filled.
using StageFn = std::function<double(std::span<const double>, std::span<double>, double&)>;
using StageObserver = std::function<void(int iter, double loss, double mae, bool lbfgs_phase)>;

inline StageResult run_stage(std::vector<double>& params, const StageFn& fn,
                             const StageConfig& cfg, const StageObserver& observer = {}) {
    StageResult res;
    PlateauDetector detector(cfg.plateau);
    std::vector<double> grad(params.size());
    double mae = 0.0;
    int recorded = 0;

    // 0 = keep going, otherwise the stop cause for this record
    auto record = [&](double loss, double m, std::uint8_t opt) -> int {
        res.trace.loss.push_back(loss);
        res.trace.mean_abs_gray_error.push_back(m);
        res.trace.optimizer.push_back(opt);
        if (m < res.best_mae) {
            res.best_mae = m;
            res.best_loss = loss;
            res.best_params = params;
        }
        res.final_loss = loss;
        res.final_mae = m;
        if (observer) observer(recorded, loss, m, opt != 0);
        ++recorded;
        const bool flat = detector.push(loss);
        if (m <= cfg.stop_mean_gray_error) return 1;
        if (flat) return 2;
        return 0;
    };
    auto cause_of = [](int rc) {
        return rc == 1 ? StopCause::gray_error_threshold : StopCause::plateau;
    };

    try {
        AdamState adam_state(params.size());
        const int adam_budget = std::min(cfg.adam.max_iters, cfg.max_iters);
        for (int i = 0; i < adam_budget; ++i) {
            const double loss = fn(params, grad, mae);
            if (const int rc = record(loss, mae, 0)) {
                res.trace.stop = cause_of(rc);
                return res;
            }
            adam_step(params, grad, adam_state, cfg.adam);
            ++res.trace.steps;
        }

        // boundary evaluation: the post-Adam iterate gets the same checks
        {
            const double loss = fn(params, grad, mae);
            if (const int rc = record(loss, mae, 1)) {
                res.trace.stop = cause_of(rc);
                return res;
            }
        }

        const int lbfgs_budget = std::min(cfg.lbfgs.max_iters, cfg.max_iters - res.trace.steps);
        if (lbfgs_budget > 0) {
            LbfgsConfig lcfg = cfg.lbfgs;
            lcfg.max_iters = lbfgs_budget;
            double last_mae = mae;
            auto wrapped = [&](std::span<const double> x, std::span<double> g) {
                double m;
                const double f = fn(x, g, m);
                last_mae = m;
                return f;
            };
            int rc_seen = 0;
            auto monitor = [&](int, double floss, std::span<const double>) {
                ++res.trace.steps;
                rc_seen = record(floss, last_mae, 1);
                return rc_seen == 0;
            };
            const LbfgsResult lr = lbfgs_run(params, wrapped, lcfg, monitor);
            if (lr.status == LbfgsStatus::stopped) {
                res.trace.stop = cause_of(rc_seen);
            } else if (lr.status == LbfgsStatus::line_search_failure) {
                res.trace.stop = StopCause::line_search_failure;
            } else {
                res.trace.stop = StopCause::max_iters;  // budget spent (or gradient flat)
            }
        } else {
            res.trace.stop = StopCause::max_iters;
        }
    } catch (const numerical_error&) {
        res.trace.stop = StopCause::numerical_error;
        if (!res.best_params.empty()) params = res.best_params;
    }
    return res;
}

}  // namespace pindic

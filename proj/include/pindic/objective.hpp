#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "pindic/grid.hpp"
#include "pindic/interp.hpp"
#include "pindic/network.hpp"
#include "pindic/parallel.hpp"

// Photometric consistency objective. The network proposes a displacement
// field u(x); the reference image warped by it, I_PD(x) = I_R(x - u(x)),
// should match the deformed image on the ROI:
//
//   r_i = I_D(x_i) - I_R(x_i - u(x_i))
//   L   = (1/N) sum_i rho(r_i),  rho = r^2 (mse) or log10(1 + r^2) (warm-up)
//
// N is the ROI pixel count, gray values stay in 0..255 units, and the mean
// absolute gray error (1/N) sum |r_i| is tracked alongside every evaluation
// because the stopping rules are phrased in it.
//
// Evaluation is chunked: partial sums and partial gradients accumulate per
// fixed-size chunk and reduce in chunk order, so results do not depend on how
// many threads ran the chunks.

namespace pindic {

enum class LossKind { mse, log_residual };

struct ObjectiveEval {
    double loss = 0.0;
    double mean_abs_gray_error = 0.0;
    std::vector<double> param_grad;  // flat layout; empty unless requested
};

class Objective {
public:
    static constexpr std::size_t grain = 8192;

    Objective(const ScalarField& ref, const ScalarField& def, const RoiMask& roi,
              SampleScheme scheme, const MlpConfig& net_config,
              BorderPolicy border = BorderPolicy::clamp)
        : ref_(&ref),
          def_(&def),
          scheme_(scheme),
          border_(border),
          layout_(net_config.hidden_layers, net_config.hidden_width) {
        require_same_shape(ref.width, ref.height, def.width, def.height,
                           "reference vs deformed");
        require_same_shape(ref.width, ref.height, roi.width, roi.height, "image vs mask");
        map_ = CoordMap{ref.width, ref.height};
        for (int y = 0; y < ref.height; ++y) {
            for (int x = 0; x < ref.width; ++x) {
                if (!roi.at(x, y)) continue;
                xs_.push_back(x);
                ys_.push_back(y);
                coords_.push_back(map_.nx(x));
                coords_.push_back(map_.ny(y));
                def_values_.push_back(def.at(x, y));
            }
        }
        if (xs_.empty()) throw empty_roi_error("region of interest selects no pixels");
    }

    std::size_t roi_count() const { return xs_.size(); }
    const CoordMap& coord_map() const { return map_; }

    ObjectiveEval evaluate(const MlpParams& params, LossKind kind, bool want_grad) {
        check_finite(params);
        const std::size_t n = xs_.size();
        const std::size_t chunks = (n + grain - 1) / grain;
        ensure_workers(params);

        std::vector<double> chunk_loss(chunks, 0.0), chunk_abs(chunks, 0.0);
        std::vector<std::vector<double>> chunk_grad;
        if (want_grad) chunk_grad.assign(chunks, std::vector<double>());

        const double wn = 1.0 / static_cast<double>(n);
        const double inv_ln10 = 1.0 / std::numbers::ln10;

        for_chunks(n, grain, [&](std::size_t worker, std::size_t chunk, std::size_t begin,
                                 std::size_t end) {
            Worker& wk = *workers_[worker];
            double* grad = nullptr;
            if (want_grad) {
                chunk_grad[chunk].assign(layout_.total, 0.0);
                grad = chunk_grad[chunk].data();
            }
            double loss_acc = 0.0, abs_acc = 0.0;
            for (std::size_t at = begin; at < end; at += MlpEngine::block) {
                const int cnt = static_cast<int>(
                    std::min<std::size_t>(MlpEngine::block, end - at));
                wk.engine.forward_block(coords_.data() + 2 * at, cnt, wk.out.data());
                for (int p = 0; p < cnt; ++p) {
                    const std::size_t i = at + p;
                    const double u = wk.out[2 * p], v = wk.out[2 * p + 1];
                    if (!std::isfinite(u) || !std::isfinite(v)) throw_at_pixel(i);
                    const Sample s =
                        sample_grad(*ref_, static_cast<double>(xs_[i]) - u,
                                    static_cast<double>(ys_[i]) - v, scheme_, border_);
                    const double r = def_values_[i] - s.value;
                    if (!std::isfinite(r)) throw_at_pixel(i);
                    const double r2 = r * r;
                    loss_acc += kind == LossKind::mse ? r2 : std::log10(1.0 + r2);
                    abs_acc += std::abs(r);
                    if (want_grad) {
                        // dL/du_i = w * rho'(r) * dS/dx  (two sign flips cancel)
                        const double rho_p =
                            kind == LossKind::mse ? 2.0 * r : 2.0 * r / (1.0 + r2) * inv_ln10;
                        wk.cot[2 * p] = wn * rho_p * s.dx;
                        wk.cot[2 * p + 1] = wn * rho_p * s.dy;
                    }
                }
                if (want_grad) {
                    wk.engine.backward_block(wk.cot.data(), cnt, grad);
                }
            }
            chunk_loss[chunk] = loss_acc;
            chunk_abs[chunk] = abs_acc;
        });

        ObjectiveEval ev;
        double loss = 0.0, abs_sum = 0.0;
        for (std::size_t c = 0; c < chunks; ++c) {
            loss += chunk_loss[c];
            abs_sum += chunk_abs[c];
        }
        ev.loss = loss * wn;
        ev.mean_abs_gray_error = abs_sum * wn;
        if (!std::isfinite(ev.loss)) throw numerical_error("non-finite loss over ROI");
        if (want_grad) {
            ev.param_grad.assign(layout_.total, 0.0);
            for (std::size_t c = 0; c < chunks; ++c) {
                const double* g = chunk_grad[c].data();
                double* acc = ev.param_grad.data();
                for (std::size_t i = 0; i < layout_.total; ++i) acc[i] += g[i];
            }
        }
        return ev;
    }

    // Squared residual per ROI pixel, 0 outside.
    ScalarField residual_field(const MlpParams& params) {
        check_finite(params);
        ensure_workers(params);
        ScalarField out(ref_->width, ref_->height, 0.0);
        const std::size_t n = xs_.size();
        for_chunks(n, grain, [&](std::size_t worker, std::size_t, std::size_t begin,
                                 std::size_t end) {
            Worker& wk = *workers_[worker];
            for (std::size_t at = begin; at < end; at += MlpEngine::block) {
                const int cnt = static_cast<int>(
                    std::min<std::size_t>(MlpEngine::block, end - at));
                wk.engine.forward_block(coords_.data() + 2 * at, cnt, wk.out.data());
                for (int p = 0; p < cnt; ++p) {
                    const std::size_t i = at + p;
                    const double u = wk.out[2 * p], v = wk.out[2 * p + 1];
                    if (!std::isfinite(u) || !std::isfinite(v)) throw_at_pixel(i);
                    const Sample s =
                        sample_grad(*ref_, static_cast<double>(xs_[i]) - u,
                                    static_cast<double>(ys_[i]) - v, scheme_, border_);
                    const double r = def_values_[i] - s.value;
                    if (!std::isfinite(r)) throw_at_pixel(i);
                    out.at(xs_[i], ys_[i]) = r * r;
                }
            }
        });
        return out;
    }

    // Network displacement at every ROI pixel, 0 outside.
    VectorField2 extract_displacement(const MlpParams& params) {
        check_finite(params);
        ensure_workers(params);
        VectorField2 out(ref_->width, ref_->height);
        const std::size_t n = xs_.size();
        for_chunks(n, grain, [&](std::size_t worker, std::size_t, std::size_t begin,
                                 std::size_t end) {
            Worker& wk = *workers_[worker];
            for (std::size_t at = begin; at < end; at += MlpEngine::block) {
                const int cnt = static_cast<int>(
                    std::min<std::size_t>(MlpEngine::block, end - at));
                wk.engine.forward_block(coords_.data() + 2 * at, cnt, wk.out.data());
                for (int p = 0; p < cnt; ++p) {
                    const std::size_t i = at + p;
                    out.u_at(xs_[i], ys_[i]) = wk.out[2 * p];
                    out.v_at(xs_[i], ys_[i]) = wk.out[2 * p + 1];
                }
            }
        });
        return out;
    }

private:
    struct Worker {
        MlpEngine engine;
        std::vector<double> out, cot;
        explicit Worker(const MlpLayout& lay)
            : engine(lay), out(2 * MlpEngine::block), cot(2 * MlpEngine::block) {}
    };

    [[noreturn]] void throw_at_pixel(std::size_t i) const {
        throw numerical_error("non-finite residual at pixel (" + std::to_string(xs_[i]) + ", " +
                              std::to_string(ys_[i]) + ")");
    }

    void ensure_workers(const MlpParams& params) {
        const std::size_t need = static_cast<std::size_t>(std::max(1, thread_budget()));
        while (workers_.size() < need) workers_.push_back(std::make_unique<Worker>(layout_));
        for (auto& w : workers_) w->engine.bind(params);
    }

    const ScalarField* ref_;
    const ScalarField* def_;
    SampleScheme scheme_;
    BorderPolicy border_;
    MlpLayout layout_;
    CoordMap map_;
    std::vector<int> xs_, ys_;
    std::vector<double> coords_, def_values_;
    std::vector<std::unique_ptr<Worker>> workers_;
};

inline ObjectiveEval evaluate(const MlpParams& params, const ScalarField& ref,
                              const ScalarField& def, const RoiMask& roi, SampleScheme scheme,
                              LossKind kind, bool want_grad) {
    Objective obj(ref, def, roi, scheme, params.config);
    return obj.evaluate(params, kind, want_grad);
}

inline ScalarField residual_field(const MlpParams& params, const ScalarField& ref,
                                  const ScalarField& def, const RoiMask& roi,
                                  SampleScheme scheme) {
    Objective obj(ref, def, roi, scheme, params.config);
    return obj.residual_field(params);
}

}  // namespace pindic

#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pindic/error.hpp"
#include "pindic/io.hpp"
#include "pindic/rng.hpp"

// Fully connected coordinate network: (x, y) normalized to [-1,1]^2 in,
// (u, v) in pixels out. Hidden layers use a per-layer adaptive slope,
// y = tanh(s_l * z) with s_l = gain * a_l, where a_l is the trainable entry
// and the effective slope s_l starts at 1. Storing the slope divided by a
// fixed gain makes per-parameter-normalized optimizers (Adam takes ~lr-sized
// steps in parameter space) move the effective slope gain times faster per
// step than the weights — the whole point of the adaptive activation: the
// network can raise its frequency reach early instead of crawling there
// through weight growth. The output layer is affine, scaled by output_scale
// so a unit network output spans a usable displacement range in pixels.
//
// Parameters live in one flat vector:
//   [W0 b0][W1 b1]...[Wh bh][a_1..a_h]
// with each W stored input-major (w[i*out + j]), which is also the layout the
// forward kernel consumes. Gradients use the same layout. Batch evaluation
// processes points independently in fixed order, so a batch result is
// bit-identical to evaluating the points one at a time.

namespace pindic {

enum class Activation { adaptive_tanh, fixed_tanh };

// Fixed amplification between the stored slope entries and the effective
// tanh slope; effective slope = adaptive_slope_gain * stored value.
inline constexpr double adaptive_slope_gain = 10.0;

struct MlpConfig {
    int hidden_layers = 4;
    int hidden_width = 50;
    Activation activation = Activation::adaptive_tanh;
    double output_scale = 10.0;  // pixels per unit network output
    std::uint64_t seed = 0;
};

inline std::size_t weight_bias_count(int hidden_layers, int hidden_width) {
    const std::size_t h = static_cast<std::size_t>(hidden_layers);
    const std::size_t m = static_cast<std::size_t>(hidden_width);
    return (2 * m + m) + (h - 1) * (m * m + m) + (2 * m + 2);
}

// Total trainable parameters: weights + biases + one slope per hidden layer.
inline std::size_t param_count(int hidden_layers, int hidden_width) {
    return weight_bias_count(hidden_layers, hidden_width) +
           static_cast<std::size_t>(hidden_layers);
}

struct MlpLayout {
    int h = 0;  // hidden layers
    int m = 0;  // hidden width
    std::vector<std::size_t> w_off, b_off;
    std::size_t slope_off = 0;
    std::size_t total = 0;

    MlpLayout() = default;
    MlpLayout(int hidden_layers, int hidden_width) : h(hidden_layers), m(hidden_width) {
        if (h < 1 || m < 1) throw usage_error("network needs at least one hidden layer and unit");
        std::size_t off = 0;
        for (int l = 0; l <= h; ++l) {
            w_off.push_back(off);
            off += static_cast<std::size_t>(in_dim(l)) * out_dim(l);
            b_off.push_back(off);
            off += static_cast<std::size_t>(out_dim(l));
        }
        slope_off = off;
        total = off + static_cast<std::size_t>(h);
    }

    int layers() const { return h + 1; }
    int in_dim(int l) const { return l == 0 ? 2 : m; }
    int out_dim(int l) const { return l == h ? 2 : m; }
};

struct MlpParams {
    MlpConfig config;
    std::vector<double> flat;

    MlpLayout layout() const { return MlpLayout(config.hidden_layers, config.hidden_width); }
};

// Glorot-uniform weights drawn from a single stream in storage order,
// biases 0, effective slopes 1. Same seed, same bits, on any platform.
inline MlpParams init_network(const MlpConfig& config) {
    MlpLayout layout(config.hidden_layers, config.hidden_width);
    MlpParams p;
    p.config = config;
    p.flat.assign(layout.total, 0.0);
    Rng rng(config.seed);
    for (int l = 0; l < layout.layers(); ++l) {
        const int fan_in = layout.in_dim(l), fan_out = layout.out_dim(l);
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        double* w = p.flat.data() + layout.w_off[l];
        for (int i = 0; i < fan_in * fan_out; ++i) w[i] = rng.uniform(-limit, limit);
    }
    for (int l = 0; l < layout.h; ++l) p.flat[layout.slope_off + l] = 1.0 / adaptive_slope_gain;
    return p;
}

inline void check_finite(const MlpParams& p) {
    const MlpLayout layout = p.layout();
    for (int l = 0; l < layout.layers(); ++l) {
        const std::size_t begin = layout.w_off[l];
        const std::size_t end = l + 1 < layout.layers() ? layout.w_off[l + 1] : layout.slope_off;
        for (std::size_t i = begin; i < end; ++i) {
            if (!std::isfinite(p.flat[i])) {
                throw numerical_error("non-finite parameter in layer " + std::to_string(l));
            }
        }
    }
    for (int l = 0; l < layout.h; ++l) {
        if (!std::isfinite(p.flat[layout.slope_off + l])) {
            throw numerical_error("non-finite slope for hidden layer " + std::to_string(l + 1));
        }
    }
}

// Pixel grid <-> normalized [-1,1]^2 chart over the full image rectangle.
struct CoordMap {
    int width = 0, height = 0;

    double nx(double x) const { return width > 1 ? 2.0 * x / (width - 1) - 1.0 : 0.0; }
    double ny(double y) const { return height > 1 ? 2.0 * y / (height - 1) - 1.0 : 0.0; }
    double dnx_dx() const { return width > 1 ? 2.0 / (width - 1) : 0.0; }
    double dny_dy() const { return height > 1 ? 2.0 / (height - 1) : 0.0; }
};

// Batch evaluation engine. One instance per thread; bind() after every
// parameter change. forward_block keeps the layer activations, which the
// matching backward_block consumes.
class MlpEngine {
public:
    static constexpr int block = 64;

    explicit MlpEngine(const MlpLayout& layout) : lay_(layout) {
        wt_.resize(lay_.total);
        const std::size_t bm = static_cast<std::size_t>(block) * lay_.m;
        for (int l = 0; l <= lay_.h; ++l) {
            z_.emplace_back(bm, 0.0);
            y_.emplace_back(bm, 0.0);
        }
        dy_.assign(bm, 0.0);
        dz_.assign(bm, 0.0);
    }

    void bind(const MlpParams& p) {
        params_ = &p;
        scale_ = p.config.output_scale;
        adaptive_ = p.config.activation == Activation::adaptive_tanh;
        // transpose each weight matrix for the backward input-gradient pass
        for (int l = 0; l < lay_.layers(); ++l) {
            const int ni = lay_.in_dim(l), no = lay_.out_dim(l);
            const double* w = p.flat.data() + lay_.w_off[l];
            double* wt = wt_.data() + lay_.w_off[l];
            for (int i = 0; i < ni; ++i) {
                for (int j = 0; j < no; ++j) wt[static_cast<std::size_t>(j) * ni + i] = w[static_cast<std::size_t>(i) * no + j];
            }
        }
    }

    double slope(int l) const {
        return adaptive_ ? adaptive_slope_gain * params_->flat[lay_.slope_off + l] : 1.0;
    }

    // coords: 2n interleaved normalized coordinates; out: 2n (u, v) pixels.
    void forward_block(const double* coords, int n, double* out) {
        assert(n >= 1 && n <= block);
        n_ = n;
        coords_ = coords;
        const double* flat = params_->flat.data();
        const int m = lay_.m;
        for (int p = 0; p < n; ++p) {
            const double* yin = coords + 2 * p;
            int ni = 2;
            for (int l = 0; l < lay_.h; ++l) {
                const double* w = flat + lay_.w_off[l];
                const double* b = flat + lay_.b_off[l];
                double* z = z_[l].data() + static_cast<std::size_t>(p) * m;
                double* yl = y_[l].data() + static_cast<std::size_t>(p) * m;
                for (int j = 0; j < m; ++j) z[j] = b[j];
                for (int k = 0; k < ni; ++k) {
                    const double yk = yin[k];
                    const double* wrow = w + static_cast<std::size_t>(k) * m;
                    for (int j = 0; j < m; ++j) z[j] += yk * wrow[j];
                }
                const double a = slope(l);
                for (int j = 0; j < m; ++j) yl[j] = std::tanh(a * z[j]);
                yin = yl;
                ni = m;
            }
            const double* w = flat + lay_.w_off[lay_.h];
            const double* b = flat + lay_.b_off[lay_.h];
            double zu = b[0], zv = b[1];
            for (int k = 0; k < m; ++k) {
                zu += yin[k] * w[2 * k];
                zv += yin[k] * w[2 * k + 1];
            }
            out[2 * p] = scale_ * zu;
            out[2 * p + 1] = scale_ * zv;
        }
    }

    // cot: 2n interleaved dL/d(u,v); grad: flat-layout accumulator (+=).
    // Must follow a forward_block over the same coords.
    void backward_block(const double* cot, int n, double* grad) {
        assert(n == n_);
        const double* flat = params_->flat.data();
        const int m = lay_.m;
        for (int p = 0; p < n; ++p) {
            // output layer: out = scale * (W y + b)
            const double du = cot[2 * p] * scale_;
            const double dv = cot[2 * p + 1] * scale_;
            {
                const double* yprev =
                    y_[lay_.h - 1].data() + static_cast<std::size_t>(p) * m;
                double* gw = grad + lay_.w_off[lay_.h];
                double* gb = grad + lay_.b_off[lay_.h];
                const double* w = flat + lay_.w_off[lay_.h];
                gb[0] += du;
                gb[1] += dv;
                double* dyp = dy_.data();
                for (int k = 0; k < m; ++k) {
                    gw[2 * k] += yprev[k] * du;
                    gw[2 * k + 1] += yprev[k] * dv;
                    dyp[k] = w[2 * k] * du + w[2 * k + 1] * dv;
                }
            }
            // hidden layers, top down: y = tanh(a z)
            for (int l = lay_.h - 1; l >= 0; --l) {
                const double a = slope(l);
                const double* z = z_[l].data() + static_cast<std::size_t>(p) * m;
                const double* yl = y_[l].data() + static_cast<std::size_t>(p) * m;
                const double* yprev =
                    l == 0 ? coords_ + 2 * p : y_[l - 1].data() + static_cast<std::size_t>(p) * m;
                const int ni = lay_.in_dim(l);
                double* gw = grad + lay_.w_off[l];
                double* gb = grad + lay_.b_off[l];
                double* dyp = dy_.data();
                double* dz = dz_.data();
                double ga = 0.0;
                for (int j = 0; j < m; ++j) {
                    const double sech2 = 1.0 - yl[j] * yl[j];
                    ga += dyp[j] * sech2 * z[j];
                    dz[j] = dyp[j] * a * sech2;
                }
                // ga is dL/d(effective slope); the stored entry is 1/gain of it
                if (adaptive_) grad[lay_.slope_off + l] += adaptive_slope_gain * ga;
                for (int j = 0; j < m; ++j) gb[j] += dz[j];
                for (int k = 0; k < ni; ++k) {
                    const double yk = yprev[k];
                    double* gwrow = gw + static_cast<std::size_t>(k) * m;
                    for (int j = 0; j < m; ++j) gwrow[j] += yk * dz[j];
                }
                if (l > 0) {
                    const double* wt = wt_.data() + lay_.w_off[l];
                    for (int k = 0; k < ni; ++k) dyp[k] = 0.0;
                    for (int j = 0; j < m; ++j) {
                        const double dzj = dz[j];
                        const double* wtrow = wt + static_cast<std::size_t>(j) * ni;
                        for (int k = 0; k < ni; ++k) dyp[k] += dzj * wtrow[k];
                    }
                }
            }
        }
    }

private:
    MlpLayout lay_;
    const MlpParams* params_ = nullptr;
    const double* coords_ = nullptr;
    double scale_ = 1.0;
    bool adaptive_ = true;
    int n_ = 0;
    std::vector<double> wt_;
    std::vector<std::vector<double>> z_, y_;
    std::vector<double> dy_, dz_;
};

// Convenience batch forward: coords and out are 2n interleaved.
inline void forward(const MlpParams& params, std::span<const double> coords,
                    std::span<double> out) {
    if (coords.size() % 2 != 0 || out.size() != coords.size()) {
        throw usage_error("forward expects interleaved (x, y) pairs and matching output size");
    }
    check_finite(params);
    MlpEngine engine(params.layout());
    engine.bind(params);
    const int n = static_cast<int>(coords.size() / 2);
    for (int at = 0; at < n; at += MlpEngine::block) {
        const int cnt = std::min(MlpEngine::block, n - at);
        engine.forward_block(coords.data() + 2 * at, cnt, out.data() + 2 * at);
    }
}

inline std::vector<double> forward(const MlpParams& params, std::span<const double> coords) {
    std::vector<double> out(coords.size());
    forward(params, coords, out);
    return out;
}

// Parameter gradient of sum_i cot_i . net(x_i); returned in flat layout.
inline std::vector<double> backward(const MlpParams& params, std::span<const double> coords,
                                    std::span<const double> cot) {
    if (coords.size() % 2 != 0 || cot.size() != coords.size()) {
        throw usage_error("backward expects interleaved pairs of coords and cotangents");
    }
    check_finite(params);
    MlpEngine engine(params.layout());
    engine.bind(params);
    std::vector<double> grad(params.flat.size(), 0.0);
    std::vector<double> out(2 * MlpEngine::block);
    const int n = static_cast<int>(coords.size() / 2);
    for (int at = 0; at < n; at += MlpEngine::block) {
        const int cnt = std::min(MlpEngine::block, n - at);
        engine.forward_block(coords.data() + 2 * at, cnt, out.data());
        engine.backward_block(cot.data() + 2 * at, cnt, grad.data());
    }
    return grad;
}

// d(u,v)/d(x_norm,y_norm) at one point, forward-mode: {du/dxn, du/dyn,
// dv/dxn, dv/dyn}.
inline std::array<double, 4> input_jacobian(const MlpParams& params, double xn, double yn) {
    const MlpLayout lay = params.layout();
    const double* flat = params.flat.data();
    const int m = lay.m;
    std::vector<double> y{xn, yn}, tx{1.0, 0.0}, ty{0.0, 1.0};
    std::vector<double> ynew(m), tx2(m), ty2(m);
    int ni = 2;
    const bool adaptive = params.config.activation == Activation::adaptive_tanh;
    for (int l = 0; l < lay.h; ++l) {
        const double* w = flat + lay.w_off[l];
        const double* b = flat + lay.b_off[l];
        const double a = adaptive ? adaptive_slope_gain * flat[lay.slope_off + l] : 1.0;
        for (int j = 0; j < m; ++j) {
            double zj = b[j], txj = 0.0, tyj = 0.0;
            for (int k = 0; k < ni; ++k) {
                zj += y[k] * w[static_cast<std::size_t>(k) * m + j];
                txj += tx[k] * w[static_cast<std::size_t>(k) * m + j];
                tyj += ty[k] * w[static_cast<std::size_t>(k) * m + j];
            }
            const double yj = std::tanh(a * zj);
            const double dact = a * (1.0 - yj * yj);
            ynew[j] = yj;
            tx2[j] = dact * txj;
            ty2[j] = dact * tyj;
        }
        y.assign(ynew.begin(), ynew.end());
        tx.assign(tx2.begin(), tx2.end());
        ty.assign(ty2.begin(), ty2.end());
        ni = m;
    }
    const double* w = flat + lay.w_off[lay.h];
    std::array<double, 4> jac{0.0, 0.0, 0.0, 0.0};
    for (int k = 0; k < m; ++k) {
        jac[0] += tx[k] * w[2 * k];
        jac[1] += ty[k] * w[2 * k];
        jac[2] += tx[k] * w[2 * k + 1];
        jac[3] += ty[k] * w[2 * k + 1];
    }
    const double s = params.config.output_scale;
    for (double& j : jac) j *= s;
    return jac;
}

// ---- Checkpoint (DICP) -----------------------------------------------------
//
//   magic "DICP" | u16 version=1 | u16 activation | u32 hidden_layers |
//   u32 hidden_width | u32 norm_width | u32 norm_height | f64 output_scale |
//   u64 seed | u64 param_count | f64 params...
//
// norm_width/height record the image rectangle the coordinate chart was
// built over, so a reloaded network can be evaluated on the same grid.

struct NetworkCheckpoint {
    MlpParams params;
    int width = 0, height = 0;
};

inline void save_network(const MlpParams& params, int width, int height,
                         const std::filesystem::path& path) {
    std::string out = "DICP";
    detail::put_u16(out, 1);
    detail::put_u16(out, params.config.activation == Activation::fixed_tanh ? 1 : 0);
    detail::put_u32(out, static_cast<std::uint32_t>(params.config.hidden_layers));
    detail::put_u32(out, static_cast<std::uint32_t>(params.config.hidden_width));
    detail::put_u32(out, static_cast<std::uint32_t>(width));
    detail::put_u32(out, static_cast<std::uint32_t>(height));
    detail::put_f64(out, params.config.output_scale);
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((params.config.seed >> (8 * i)) & 0xff));
    }
    const std::uint64_t n = params.flat.size();
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((n >> (8 * i)) & 0xff));
    for (double v : params.flat) detail::put_f64(out, v);
    detail::write_file_bytes(path, out);
}

inline NetworkCheckpoint load_network(const std::filesystem::path& path) {
    std::string bytes = detail::read_file_bytes(path);
    if (bytes.size() < 4 || std::string_view(bytes).substr(0, 4) != "DICP") {
        throw format_error("bad magic, expected \"DICP\"", 0);
    }
    detail::ByteReader r{bytes, 4};
    const std::uint16_t version = r.u16("version");
    if (version != 1) throw format_error("unsupported version " + std::to_string(version), 4);
    const std::uint16_t act = r.u16("activation");
    if (act > 1) throw format_error("bad activation code " + std::to_string(act), 6);
    NetworkCheckpoint cp;
    cp.params.config.activation = act ? Activation::fixed_tanh : Activation::adaptive_tanh;
    cp.params.config.hidden_layers = static_cast<int>(r.u32("hidden layers"));
    cp.params.config.hidden_width = static_cast<int>(r.u32("hidden width"));
    cp.width = static_cast<int>(r.u32("width"));
    cp.height = static_cast<int>(r.u32("height"));
    cp.params.config.output_scale = r.f64("output scale");
    std::uint64_t seed = 0, n = 0;
    for (int i = 0; i < 8; ++i) seed |= static_cast<std::uint64_t>(r.u8()) << (8 * i);
    for (int i = 0; i < 8; ++i) n |= static_cast<std::uint64_t>(r.u8()) << (8 * i);
    cp.params.config.seed = seed;
    if (cp.params.config.hidden_layers < 1 || cp.params.config.hidden_width < 1 ||
        n != param_count(cp.params.config.hidden_layers, cp.params.config.hidden_width)) {
        throw format_error("parameter count does not match architecture", 8);
    }
    cp.params.flat.resize(n);
    r.need(8 * n, "parameters");
    for (double& v : cp.params.flat) v = r.f64("parameters");
    return cp;
}

}  // namespace pindic

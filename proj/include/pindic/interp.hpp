#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "pindic/error.hpp"
#include "pindic/grid.hpp"

// Sub-pixel image sampling with analytic first derivatives.
//
// Bilinear uses the cell [floor(x), floor(x)+1); on the last column/row the
// cell index clamps to n-2, so x = n-1 is still well-defined and an integer
// coordinate takes its right-hand cell (the derivative there is the right
// cell's slope). Bicubic is the Keys cubic-convolution kernel, C1 across cell
// boundaries and exact at the nodes:
//
//   w(s) = (a+2)|s|^3 - (a+3)|s|^2 + 1          |s| <= 1
//   w(s) = a(|s|^3 - 5|s|^2 + 8|s| - 4)         1 < |s| < 2
//
// with a = -0.5 by default. Border taps replicate the edge pixel. Derivatives
// are the analytic kernel derivatives, in pixel units.

namespace pindic {

struct SampleScheme {
    enum class Kind { bilinear, bicubic };
    Kind kind = Kind::bicubic;
    double a = -0.5;  // bicubic kernel parameter

    static SampleScheme bilinear() { return {Kind::bilinear, -0.5}; }
    static SampleScheme bicubic(double a = -0.5) { return {Kind::bicubic, a}; }
};

enum class BorderPolicy { clamp, error };

struct Sample {
    double value = 0.0;
    double dx = 0.0;
    double dy = 0.0;
};

namespace detail {

[[noreturn]] inline void throw_bounds(double x, double y, int w, int h) {
    throw bounds_error("sample (" + std::to_string(x) + ", " + std::to_string(y) +
                       ") outside image " + std::to_string(w) + "x" + std::to_string(h));
}

// Per-axis setup shared by both kernels: resolves the border policy and the
// cell index. A clamped or degenerate (n == 1) axis has zero derivative.
struct Axis {
    int cell = 0;       // left tap index (bilinear) / center-left tap (bicubic)
    double t = 0.0;     // fractional position in [0, 1]
    bool flat = false;  // derivative forced to zero (clamped or single-pixel axis)
};

inline Axis resolve_axis(double x, int n, BorderPolicy border, double xq, double yq, int w,
                         int h) {
    Axis ax;
    if (n == 1) {
        ax.flat = true;
        if (border == BorderPolicy::error && (x < 0.0 || x > 0.0)) throw_bounds(xq, yq, w, h);
        return ax;
    }
    if (x < 0.0 || x > static_cast<double>(n - 1)) {
        if (border == BorderPolicy::error) throw_bounds(xq, yq, w, h);
        x = std::clamp(x, 0.0, static_cast<double>(n - 1));
        ax.flat = true;
    }
    ax.cell = std::min(static_cast<int>(std::floor(x)), n - 2);
    ax.t = x - static_cast<double>(ax.cell);
    return ax;
}

struct CubicWeights {
    double w[4];
    double dw[4];
};

inline CubicWeights cubic_weights(double t, double a) {
    CubicWeights cw;
    const double s0 = 1.0 + t;  // tap at cell-1
    const double s2 = 1.0 - t;  // tap at cell+1
    const double s3 = 2.0 - t;  // tap at cell+2
    cw.w[0] = a * (((s0 - 5.0) * s0 + 8.0) * s0 - 4.0);
    cw.w[1] = ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    cw.w[2] = ((a + 2.0) * s2 - (a + 3.0)) * s2 * s2 + 1.0;
    cw.w[3] = a * (((s3 - 5.0) * s3 + 8.0) * s3 - 4.0);
    cw.dw[0] = a * ((3.0 * s0 - 10.0) * s0 + 8.0);
    cw.dw[1] = (3.0 * (a + 2.0) * t - 2.0 * (a + 3.0)) * t;
    cw.dw[2] = -((3.0 * (a + 2.0) * s2 - 2.0 * (a + 3.0)) * s2);
    cw.dw[3] = -(a * ((3.0 * s3 - 10.0) * s3 + 8.0));
    return cw;
}

}  // namespace detail

inline Sample sample_grad(const ScalarField& img, double x, double y, SampleScheme scheme,
                          BorderPolicy border) {
    const int w = img.width, h = img.height;
    detail::Axis ax = detail::resolve_axis(x, w, border, x, y, w, h);
    detail::Axis ay = detail::resolve_axis(y, h, border, x, y, w, h);
    const double* v = img.values.data();
    Sample s;

    if (scheme.kind == SampleScheme::Kind::bilinear) {
        const int x0 = ax.cell, y0 = ay.cell;
        const int x1 = w == 1 ? x0 : x0 + 1;
        const int y1 = h == 1 ? y0 : y0 + 1;
        const double v00 = v[static_cast<std::size_t>(y0) * w + x0];
        const double v10 = v[static_cast<std::size_t>(y0) * w + x1];
        const double v01 = v[static_cast<std::size_t>(y1) * w + x0];
        const double v11 = v[static_cast<std::size_t>(y1) * w + x1];
        const double tx = ax.t, ty = ay.t;
        const double top = v00 + tx * (v10 - v00);
        const double bot = v01 + tx * (v11 - v01);
        s.value = top + ty * (bot - top);
        s.dx = ax.flat ? 0.0 : (v10 - v00) + ty * ((v11 - v01) - (v10 - v00));
        s.dy = ay.flat ? 0.0 : bot - top;
        return s;
    }

    auto wx = detail::cubic_weights(ax.t, scheme.a);
    auto wy = detail::cubic_weights(ay.t, scheme.a);
    int tx[4], ty[4];
    for (int i = 0; i < 4; ++i) {
        tx[i] = std::clamp(ax.cell - 1 + i, 0, w - 1);
        ty[i] = std::clamp(ay.cell - 1 + i, 0, h - 1);
    }
    double val = 0.0, ddx = 0.0, ddy = 0.0;
    for (int j = 0; j < 4; ++j) {
        const double* row = v + static_cast<std::size_t>(ty[j]) * w;
        double rs = 0.0, drs = 0.0;
        for (int i = 0; i < 4; ++i) {
            rs += wx.w[i] * row[tx[i]];
            drs += wx.dw[i] * row[tx[i]];
        }
        val += wy.w[j] * rs;
        ddx += wy.w[j] * drs;
        ddy += wy.dw[j] * rs;
    }
    s.value = val;
    s.dx = ax.flat ? 0.0 : ddx;
    s.dy = ay.flat ? 0.0 : ddy;
    return s;
}

inline double sample(const ScalarField& img, double x, double y, SampleScheme scheme,
                     BorderPolicy border) {
    return sample_grad(img, x, y, scheme, border).value;
}

// Backward warp: out(x) = ref(x - u(x)) on the ROI, 0 elsewhere.
inline ScalarField warp(const ScalarField& ref, const VectorField2& disp, const RoiMask& roi,
                        SampleScheme scheme, BorderPolicy border) {
    require_same_shape(ref.width, ref.height, disp.width, disp.height, "image vs displacement");
    require_same_shape(ref.width, ref.height, roi.width, roi.height, "image vs mask");
    ScalarField out(ref.width, ref.height, 0.0);
    for (int y = 0; y < ref.height; ++y) {
        for (int x = 0; x < ref.width; ++x) {
            if (!roi.at(x, y)) continue;
            const double sx = static_cast<double>(x) - disp.u_at(x, y);
            const double sy = static_cast<double>(y) - disp.v_at(x, y);
            out.at(x, y) = sample(ref, sx, sy, scheme, border);
        }
    }
    return out;
}

}  // namespace pindic

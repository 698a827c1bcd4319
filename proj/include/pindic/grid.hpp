#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pindic/error.hpp"

namespace pindic {

// Row-major scalar grid of doubles; values[y*width + x], y down, x right.
// Gray values live in native 0..255 units end to end -- nothing in the
// pipeline rescales intensities to [0,1].
struct ScalarField {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    ScalarField() = default;
    ScalarField(int w, int h, double fill = 0.0)
        : width(w), height(h), values(checked_size(w, h), fill) {}

    double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return values.size(); }

    static std::size_t checked_size(int w, int h) {
        if (w < 1 || h < 1) throw dimension_error("field dimensions must be at least 1x1");
        return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    }
};

// Two-channel grid (u = x-displacement, v = y-displacement), same layout.
struct VectorField2 {
    int width = 0;
    int height = 0;
    std::vector<double> u;
    std::vector<double> v;

    VectorField2() = default;
    VectorField2(int w, int h, double fill_u = 0.0, double fill_v = 0.0)
        : width(w),
          height(h),
          u(ScalarField::checked_size(w, h), fill_u),
          v(ScalarField::checked_size(w, h), fill_v) {}

    double& u_at(int x, int y) { return u[static_cast<std::size_t>(y) * width + x]; }
    double u_at(int x, int y) const { return u[static_cast<std::size_t>(y) * width + x]; }
    double& v_at(int x, int y) { return v[static_cast<std::size_t>(y) * width + x]; }
    double v_at(int x, int y) const { return v[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return u.size(); }
};

// Region of interest; nonzero marks a pixel as inside.
struct RoiMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> inside;

    RoiMask() = default;
    RoiMask(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), inside(ScalarField::checked_size(w, h), fill) {}

    static RoiMask full(int w, int h) { return RoiMask(w, h, 1); }

    bool at(int x, int y) const {
        return inside[static_cast<std::size_t>(y) * width + x] != 0;
    }
    void set(int x, int y, bool in) {
        inside[static_cast<std::size_t>(y) * width + x] = in ? 1 : 0;
    }
    std::size_t count_inside() const {
        std::size_t n = 0;
        for (std::uint8_t b : inside) n += (b != 0);
        return n;
    }
};

inline void require_same_shape(int wa, int ha, int wb, int hb, const char* what) {
    if (wa != wb || ha != hb) {
        throw dimension_error(std::string(what) + ": " + std::to_string(wa) + "x" +
                              std::to_string(ha) + " vs " + std::to_string(wb) + "x" +
                              std::to_string(hb));
    }
}

}  // namespace pindic

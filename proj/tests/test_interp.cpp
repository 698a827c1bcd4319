#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "pindic/interp.hpp"

using namespace pindic;

namespace {

double fd_dx(const ScalarField& f, double x, double y, SampleScheme s, double h = 1e-5) {
    return (sample(f, x + h, y, s, BorderPolicy::clamp) -
            sample(f, x - h, y, s, BorderPolicy::clamp)) /
           (2.0 * h);
}

double fd_dy(const ScalarField& f, double x, double y, SampleScheme s, double h = 1e-5) {
    return (sample(f, x, y + h, s, BorderPolicy::clamp) -
            sample(f, x, y - h, s, BorderPolicy::clamp)) /
           (2.0 * h);
}

void check_close_rel(double got, double want, double rel) {
    REQUIRE(std::abs(got - want) <= rel * std::max(1.0, std::abs(want)));
}

}  // namespace

TEST_CASE("both kernels reproduce node values exactly") {
    ScalarField f = testutil::random_field(7, 5, 42);
    for (auto scheme : {SampleScheme::bilinear(), SampleScheme::bicubic()}) {
        for (int y = 0; y < f.height; ++y) {
            for (int x = 0; x < f.width; ++x) {
                REQUIRE(sample(f, x, y, scheme, BorderPolicy::error) == f.at(x, y));
            }
        }
    }
}

TEST_CASE("bilinear center of a 2x2 cell is the four-pixel mean") {
    ScalarField f(2, 2);
    f.values = {0.0, 10.0, 20.0, 30.0};
    REQUIRE(sample(f, 0.5, 0.5, SampleScheme::bilinear(), BorderPolicy::error) == 15.0);

    const Sample s = sample_grad(f, 0.25, 0.25, SampleScheme::bilinear(), BorderPolicy::error);
    REQUIRE(s.dx == 10.0);
    REQUIRE(s.dy == 20.0);
}

TEST_CASE("bicubic on a constant field returns the constant with zero gradient") {
    ScalarField f(6, 6, 77.25);
    for (double x : {0.0, 0.3, 2.5, 4.99, 5.0}) {
        for (double y : {0.0, 1.7, 3.25, 5.0}) {
            const Sample s = sample_grad(f, x, y, SampleScheme::bicubic(), BorderPolicy::error);
            REQUIRE(std::abs(s.value - 77.25) < 1e-12);
            REQUIRE(std::abs(s.dx) < 1e-12);
            REQUIRE(std::abs(s.dy) < 1e-12);
        }
    }
}

TEST_CASE("analytic gradients match central differences") {
    ScalarField f = testutil::random_field(8, 8, 7);
    // keep FD stencils away from cell boundaries, where bilinear is not C1
    const double coords[][2] = {{2.3, 3.7}, {1.6, 5.2}, {4.45, 2.85}, {3.1, 3.9}, {5.5, 5.5}};
    for (auto scheme : {SampleScheme::bilinear(), SampleScheme::bicubic()}) {
        for (const auto& c : coords) {
            const Sample s = sample_grad(f, c[0], c[1], scheme, BorderPolicy::error);
            check_close_rel(s.dx, fd_dx(f, c[0], c[1], scheme), 1e-6);
            check_close_rel(s.dy, fd_dy(f, c[0], c[1], scheme), 1e-6);
        }
    }
}

TEST_CASE("integer coordinates take the right-hand cell's slope") {
    ScalarField f(5, 1);
    f.values = {0.0, 1.0, 4.0, 9.0, 16.0};  // x^2 at the nodes
    const Sample s = sample_grad(f, 2.0, 0.0, SampleScheme::bilinear(), BorderPolicy::error);
    REQUIRE(s.value == 4.0);
    REQUIRE(s.dx == 5.0);  // cell [2,3]: 9 - 4

    // the last node has no right cell; it falls back to the final cell
    const Sample e = sample_grad(f, 4.0, 0.0, SampleScheme::bilinear(), BorderPolicy::error);
    REQUIRE(e.value == 16.0);
    REQUIRE(e.dx == 7.0);  // cell [3,4]: 16 - 9
}

TEST_CASE("clamp policy pins outside samples to the edge with zero gradient") {
    ScalarField f = testutil::random_field(6, 4, 9);
    const Sample s = sample_grad(f, -3.0, -2.0, SampleScheme::bicubic(), BorderPolicy::clamp);
    REQUIRE(s.value == f.at(0, 0));
    REQUIRE(s.dx == 0.0);
    REQUIRE(s.dy == 0.0);

    const Sample t = sample_grad(f, 2.5, 9.0, SampleScheme::bilinear(), BorderPolicy::clamp);
    REQUIRE(t.dy == 0.0);
    REQUIRE(t.dx != 0.0);  // x was in range; only the clamped axis flattens
}

TEST_CASE("error policy raises on out-of-bounds samples") {
    ScalarField f(4, 4, 1.0);
    REQUIRE_THROWS_AS(sample(f, -0.001, 2.0, SampleScheme::bilinear(), BorderPolicy::error),
                      bounds_error);
    REQUIRE_THROWS_AS(sample(f, 2.0, 3.001, SampleScheme::bicubic(), BorderPolicy::error),
                      bounds_error);
    REQUIRE_NOTHROW(sample(f, 3.0, 3.0, SampleScheme::bicubic(), BorderPolicy::error));
}

TEST_CASE("single-row and single-column images sample as constants along the flat axis") {
    ScalarField f(1, 4);
    f.values = {0.0, 3.0, 6.0, 9.0};
    const Sample s = sample_grad(f, 0.0, 1.5, SampleScheme::bilinear(), BorderPolicy::error);
    REQUIRE(s.value == 4.5);
    REQUIRE(s.dx == 0.0);
    REQUIRE(s.dy == 3.0);
}

TEST_CASE("warping by a zero field is the identity on the ROI") {
    ScalarField ref = testutil::random_field(9, 6, 21);
    VectorField2 zero(9, 6);
    RoiMask roi(9, 6, 0);
    for (int y = 1; y < 5; ++y) {
        for (int x = 2; x < 7; ++x) roi.set(x, y, true);
    }
    ScalarField out = warp(ref, zero, roi, SampleScheme::bicubic(), BorderPolicy::error);
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 9; ++x) {
            if (roi.at(x, y)) {
                REQUIRE(out.at(x, y) == ref.at(x, y));
            } else {
                REQUIRE(out.at(x, y) == 0.0);
            }
        }
    }
}

TEST_CASE("warping by an integer shift reproduces shifted pixels exactly") {
    ScalarField ref = testutil::random_field(10, 7, 33);
    VectorField2 shift(10, 7, 2.0, 1.0);  // u = 2, v = 1
    RoiMask roi = RoiMask::full(10, 7);
    ScalarField out = warp(ref, shift, roi, SampleScheme::bicubic(), BorderPolicy::clamp);
    for (int y = 1; y < 7; ++y) {
        for (int x = 2; x < 10; ++x) REQUIRE(out.at(x, y) == ref.at(x - 2, y - 1));
    }
}

TEST_CASE("warp equals a per-pixel sampling loop") {
    ScalarField ref = testutil::random_field(12, 9, 5);
    VectorField2 disp = testutil::random_vector_field(12, 9, 6, -1.5, 1.5);
    RoiMask roi = RoiMask::full(12, 9);
    ScalarField got = warp(ref, disp, roi, SampleScheme::bicubic(), BorderPolicy::clamp);
    for (int y = 0; y < 9; ++y) {
        for (int x = 0; x < 12; ++x) {
            const double want = sample(ref, x - disp.u_at(x, y), y - disp.v_at(x, y),
                                       SampleScheme::bicubic(), BorderPolicy::clamp);
            REQUIRE(got.at(x, y) == want);
        }
    }
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "pindic/objective.hpp"

using namespace pindic;

namespace {

void check_close_rel(double got, double want, double rel) {
    REQUIRE(std::abs(got - want) <= rel * std::max(1.0, std::abs(want)));
}

MlpParams zero_params(int h, int m) {
    MlpConfig cfg;
    cfg.hidden_layers = h;
    cfg.hidden_width = m;
    MlpParams p = init_network(cfg);
    std::fill(p.flat.begin(), p.flat.end(), 0.0);
    return p;
}

}  // namespace

TEST_CASE("identical images with a zero network give zero loss and gradient") {
    ScalarField ref = testutil::random_field(12, 10, 3);
    const MlpParams p = zero_params(2, 4);
    const ObjectiveEval ev = evaluate(p, ref, ref, RoiMask::full(12, 10),
                                      SampleScheme::bicubic(), LossKind::mse, true);
    REQUIRE(ev.loss == 0.0);
    REQUIRE(ev.mean_abs_gray_error == 0.0);
    REQUIRE(ev.param_grad.size() == p.flat.size());
    for (double g : ev.param_grad) REQUIRE(g == 0.0);
}

TEST_CASE("a uniform +3 gray offset hits the textbook loss values") {
    // 16x16 keeps the ROI count a power of two, so the averages are exact
    ScalarField ref = testutil::random_field(16, 16, 5);
    ScalarField def = ref;
    for (double& v : def.values) v += 3.0;
    const MlpParams p = zero_params(1, 3);

    const ObjectiveEval mse = evaluate(p, ref, def, RoiMask::full(16, 16),
                                       SampleScheme::bilinear(), LossKind::mse, false);
    REQUIRE(mse.loss == 9.0);
    REQUIRE(mse.mean_abs_gray_error == 3.0);
    REQUIRE(mse.param_grad.empty());

    const ObjectiveEval lg = evaluate(p, ref, def, RoiMask::full(16, 16),
                                      SampleScheme::bilinear(), LossKind::log_residual, false);
    REQUIRE(lg.loss == 1.0);  // log10(1 + 9)
    REQUIRE(lg.mean_abs_gray_error == 3.0);
}

TEST_CASE("a negative offset shows up as its absolute gray error") {
    ScalarField ref = testutil::random_field(16, 16, 6);
    ScalarField def = ref;
    for (double& v : def.values) v -= 2.5;
    const ObjectiveEval ev = evaluate(zero_params(1, 2), ref, def, RoiMask::full(16, 16),
                                      SampleScheme::bicubic(), LossKind::mse, false);
    REQUIRE(ev.mean_abs_gray_error == 2.5);
    REQUIRE(ev.loss == 6.25);
}

TEST_CASE("parameter gradient matches finite differences of the whole pipeline") {
    ScalarField ref = testutil::random_field(8, 8, 17);
    ScalarField def = testutil::random_field(8, 8, 18);
    RoiMask roi(8, 8, 0);
    for (int y = 1; y <= 6; ++y) {
        for (int x = 1; x <= 6; ++x) roi.set(x, y, true);
    }

    MlpConfig cfg;
    cfg.hidden_layers = 1;
    cfg.hidden_width = 3;
    cfg.output_scale = 0.5;  // keeps every sample safely inside the image
    cfg.seed = 40;
    const MlpParams p = init_network(cfg);

    for (LossKind kind : {LossKind::mse, LossKind::log_residual}) {
        Objective obj(ref, def, roi, SampleScheme::bicubic(), cfg);
        const ObjectiveEval ev = obj.evaluate(p, kind, true);
        REQUIRE(ev.param_grad.size() == p.flat.size());

        const double h = 1e-6;
        for (std::size_t i = 0; i < p.flat.size(); ++i) {
            MlpParams q = p;
            q.flat[i] = p.flat[i] + h;
            const double up = obj.evaluate(q, kind, false).loss;
            q.flat[i] = p.flat[i] - h;
            const double dn = obj.evaluate(q, kind, false).loss;
            check_close_rel(ev.param_grad[i], (up - dn) / (2.0 * h), 1e-5);
        }
    }
}

TEST_CASE("loss and gradient over a union are the count-weighted averages") {
    ScalarField ref = testutil::random_field(10, 6, 23);
    ScalarField def = testutil::random_field(10, 6, 24);
    RoiMask left(10, 6, 0), right(10, 6, 0), both(10, 6, 0);
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 10; ++x) {
            (x < 4 ? left : right).set(x, y, true);
            both.set(x, y, true);
        }
    }
    MlpConfig cfg;
    cfg.hidden_layers = 1;
    cfg.hidden_width = 2;
    cfg.output_scale = 0.3;
    cfg.seed = 9;
    const MlpParams p = init_network(cfg);

    const auto scheme = SampleScheme::bicubic();
    const ObjectiveEval ea = evaluate(p, ref, def, left, scheme, LossKind::mse, true);
    const ObjectiveEval eb = evaluate(p, ref, def, right, scheme, LossKind::mse, true);
    const ObjectiveEval eab = evaluate(p, ref, def, both, scheme, LossKind::mse, true);

    const double na = 24, nb = 36, nab = 60;
    check_close_rel(eab.loss, (na * ea.loss + nb * eb.loss) / nab, 1e-12);
    for (std::size_t i = 0; i < eab.param_grad.size(); ++i) {
        check_close_rel(eab.param_grad[i],
                        (na * ea.param_grad[i] + nb * eb.param_grad[i]) / nab, 1e-11);
    }
}

TEST_CASE("residual field and displacement extraction match a per-pixel loop") {
    ScalarField ref = testutil::random_field(11, 9, 31);
    ScalarField def = testutil::random_field(11, 9, 32);
    RoiMask roi(11, 9, 0);
    for (int y = 2; y <= 6; ++y) {
        for (int x = 3; x <= 8; ++x) roi.set(x, y, true);
    }
    MlpConfig cfg;
    cfg.hidden_layers = 2;
    cfg.hidden_width = 3;
    cfg.output_scale = 0.4;
    cfg.seed = 77;
    const MlpParams p = init_network(cfg);
    const CoordMap map{11, 9};

    Objective obj(ref, def, roi, SampleScheme::bicubic(), cfg);
    const ScalarField res = obj.residual_field(p);
    const VectorField2 disp = obj.extract_displacement(p);

    for (int y = 0; y < 9; ++y) {
        for (int x = 0; x < 11; ++x) {
            if (!roi.at(x, y)) {
                REQUIRE(res.at(x, y) == 0.0);
                REQUIRE(disp.u_at(x, y) == 0.0);
                REQUIRE(disp.v_at(x, y) == 0.0);
                continue;
            }
            const double c[2] = {map.nx(x), map.ny(y)};
            const std::vector<double> uv = forward(p, std::span<const double>(c, 2));
            REQUIRE(disp.u_at(x, y) == uv[0]);
            REQUIRE(disp.v_at(x, y) == uv[1]);
            const double s = sample(ref, x - uv[0], y - uv[1], SampleScheme::bicubic(),
                                    BorderPolicy::clamp);
            const double r = def.at(x, y) - s;
            REQUIRE(res.at(x, y) == r * r);
        }
    }
}

TEST_CASE("a non-finite pixel is reported with its coordinates") {
    ScalarField ref = testutil::random_field(8, 6, 2);
    ScalarField def = ref;
    def.at(2, 3) = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_MATCHES(
        evaluate(zero_params(1, 2), ref, def, RoiMask::full(8, 6), SampleScheme::bilinear(),
                 LossKind::mse, false),
        numerical_error,
        Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("(2, 3)")));
}

TEST_CASE("degenerate inputs are rejected up front") {
    ScalarField ref = testutil::random_field(6, 6, 1);
    REQUIRE_THROWS_AS(
        evaluate(zero_params(1, 2), ref, ref, RoiMask(6, 6, 0), SampleScheme::bilinear(),
                 LossKind::mse, false),
        empty_roi_error);

    ScalarField def = testutil::random_field(6, 5, 1);
    REQUIRE_THROWS_AS(
        evaluate(zero_params(1, 2), ref, def, RoiMask::full(6, 6), SampleScheme::bilinear(),
                 LossKind::mse, false),
        dimension_error);
}

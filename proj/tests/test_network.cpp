#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <vector>

#include "helpers.hpp"
#include "pindic/network.hpp"

using namespace pindic;

namespace {

// structural oracle: count parameters by walking the layers
std::size_t enumerate_params(int h, int m) {
    std::size_t n = 0;
    for (int l = 0; l <= h; ++l) {
        const int in = (l == 0) ? 2 : m;
        const int out = (l == h) ? 2 : m;
        n += static_cast<std::size_t>(in) * out + out;
    }
    return n + static_cast<std::size_t>(h);
}

void check_close_rel(double got, double want, double rel) {
    REQUIRE(std::abs(got - want) <= rel * std::max(1.0, std::abs(want)));
}

MlpParams small_net(int h, int m, std::uint64_t seed) {
    MlpConfig cfg;
    cfg.hidden_layers = h;
    cfg.hidden_width = m;
    cfg.seed = seed;
    return init_network(cfg);
}

}  // namespace

TEST_CASE("parameter count formula matches layer enumeration") {
    for (int h = 1; h <= 5; ++h) {
        for (int m = 1; m <= 64; ++m) {
            REQUIRE(param_count(h, m) == enumerate_params(h, m));
            REQUIRE(MlpLayout(h, m).total == param_count(h, m));
        }
    }
}

TEST_CASE("50-wide networks hit the documented counts") {
    REQUIRE(weight_bias_count(3, 50) == 5352);
    REQUIRE(weight_bias_count(4, 50) == 7902);
    REQUIRE(param_count(3, 50) == 5355);
    REQUIRE(param_count(4, 50) == 7906);
    // three hidden layers of 50 plus four layer slopes reconcile to 5356
    REQUIRE(weight_bias_count(3, 50) + 4 == 5356);
}

TEST_CASE("initialization is deterministic and respects the documented ranges") {
    MlpConfig cfg;
    cfg.seed = 1234;
    const MlpParams a = init_network(cfg);
    const MlpParams b = init_network(cfg);
    REQUIRE(a.flat == b.flat);

    cfg.seed = 1235;
    const MlpParams c = init_network(cfg);
    REQUIRE(a.flat != c.flat);

    const MlpLayout lay = a.layout();
    for (int l = 0; l < lay.layers(); ++l) {
        const double limit = std::sqrt(6.0 / (lay.in_dim(l) + lay.out_dim(l)));
        for (int i = 0; i < lay.in_dim(l) * lay.out_dim(l); ++i) {
            const double w = a.flat[lay.w_off[l] + i];
            REQUIRE(std::abs(w) <= limit);
        }
        for (int j = 0; j < lay.out_dim(l); ++j) {
            REQUIRE(a.flat[lay.b_off[l] + j] == 0.0);
        }
    }
    // stored slope entries are 1/gain so the effective slope starts at exactly 1
    for (int l = 0; l < lay.h; ++l) {
        REQUIRE(a.flat[lay.slope_off + l] == 1.0 / adaptive_slope_gain);
        REQUIRE(adaptive_slope_gain * a.flat[lay.slope_off + l] == 1.0);
    }
}

TEST_CASE("batch forward equals per-point evaluation bit for bit") {
    const MlpParams p = small_net(3, 17, 5);
    Rng rng(8);
    std::vector<double> coords(2 * 150);
    for (double& c : coords) c = rng.uniform(-1.0, 1.0);

    const std::vector<double> batch = forward(p, coords);
    for (int i = 0; i < 150; ++i) {
        const double one[2] = {coords[2 * i], coords[2 * i + 1]};
        std::vector<double> out = forward(p, std::span<const double>(one, 2));
        REQUIRE(batch[2 * i] == out[0]);
        REQUIRE(batch[2 * i + 1] == out[1]);
    }
}

TEST_CASE("hand-built width-one network evaluates as written") {
    MlpConfig cfg;
    cfg.hidden_layers = 1;
    cfg.hidden_width = 1;
    cfg.output_scale = 10.0;
    MlpParams p;
    p.config = cfg;
    p.flat = {
        0.3, -0.2,    // input weights (x, y)
        0.1,          // hidden bias
        0.7, -0.4,    // output weights (u, v)
        0.05, -0.06,  // output biases
        0.15,         // stored slope entry; effective slope = gain * 0.15 = 1.5
    };
    REQUIRE(p.flat.size() == param_count(1, 1));

    const double xn = 0.5, yn = -0.25;
    const double z = 0.1 + xn * 0.3 + yn * -0.2;
    const double y = std::tanh(1.5 * z);
    const double coords[2] = {xn, yn};
    std::vector<double> out = forward(p, std::span<const double>(coords, 2));
    REQUIRE(out[0] == Catch::Approx(10.0 * (0.05 + y * 0.7)).margin(1e-14));
    REQUIRE(out[1] == Catch::Approx(10.0 * (-0.06 + y * -0.4)).margin(1e-14));

    SECTION("a unit effective slope behaves exactly like plain tanh") {
        MlpParams fixed = p;
        fixed.flat.back() = 1.0 / adaptive_slope_gain;
        MlpParams plain = fixed;
        plain.config.activation = Activation::fixed_tanh;
        std::vector<double> a = forward(fixed, std::span<const double>(coords, 2));
        std::vector<double> b = forward(plain, std::span<const double>(coords, 2));
        REQUIRE(a == b);
    }
}

TEST_CASE("parameter gradients match end-to-end finite differences") {
    MlpParams p = small_net(2, 3, 11);
    Rng rng(12);
    std::vector<double> coords(8), cot(8);
    for (double& c : coords) c = rng.uniform(-1.0, 1.0);
    for (double& c : cot) c = rng.uniform(-1.0, 1.0);

    auto phi = [&](const MlpParams& q) {
        std::vector<double> out = forward(q, coords);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += cot[i] * out[i];
        return s;
    };

    const std::vector<double> grad = backward(p, coords, cot);
    REQUIRE(grad.size() == p.flat.size());
    const double h = 1e-6;
    for (std::size_t i = 0; i < p.flat.size(); ++i) {
        MlpParams q = p;
        q.flat[i] += h;
        const double up = phi(q);
        q.flat[i] = p.flat[i] - h;
        const double dn = phi(q);
        check_close_rel(grad[i], (up - dn) / (2.0 * h), 1e-5);
    }
}

TEST_CASE("fixed tanh ignores the slope entries") {
    MlpParams p = small_net(2, 4, 3);
    p.config.activation = Activation::fixed_tanh;
    Rng rng(4);
    std::vector<double> coords(6), cot(6);
    for (double& c : coords) c = rng.uniform(-1.0, 1.0);
    for (double& c : cot) c = rng.uniform(-1.0, 1.0);
    const std::vector<double> grad = backward(p, coords, cot);
    const MlpLayout lay = p.layout();
    for (int l = 0; l < lay.h; ++l) REQUIRE(grad[lay.slope_off + l] == 0.0);

    MlpParams adaptive = p;
    adaptive.config.activation = Activation::adaptive_tanh;
    const std::vector<double> ag = backward(adaptive, coords, cot);
    // effective slopes are still 1, so everything but the slope entries agrees
    for (std::size_t i = 0; i < lay.slope_off; ++i) REQUIRE(grad[i] == ag[i]);
    bool any_slope = false;
    for (int l = 0; l < lay.h; ++l) any_slope |= ag[lay.slope_off + l] != 0.0;
    REQUIRE(any_slope);
}

TEST_CASE("input jacobian matches finite differences and the analytic case") {
    SECTION("all-zero parameters give a zero matrix") {
        MlpParams p = small_net(2, 5, 1);
        std::fill(p.flat.begin(), p.flat.end(), 0.0);
        const auto jac = input_jacobian(p, 0.3, -0.7);
        for (double j : jac) REQUIRE(j == 0.0);
    }

    SECTION("random network vs central differences") {
        const MlpParams p = small_net(3, 8, 21);
        const double xn = 0.2, yn = -0.45, h = 1e-6;
        const auto jac = input_jacobian(p, xn, yn);
        auto at = [&](double x, double y) {
            const double c[2] = {x, y};
            return forward(p, std::span<const double>(c, 2));
        };
        const auto xp = at(xn + h, yn), xm = at(xn - h, yn);
        const auto yp = at(xn, yn + h), ym = at(xn, yn - h);
        check_close_rel(jac[0], (xp[0] - xm[0]) / (2 * h), 1e-6);
        check_close_rel(jac[1], (yp[0] - ym[0]) / (2 * h), 1e-6);
        check_close_rel(jac[2], (xp[1] - xm[1]) / (2 * h), 1e-6);
        check_close_rel(jac[3], (yp[1] - ym[1]) / (2 * h), 1e-6);
    }

    SECTION("width-one network at the origin") {
        MlpConfig cfg;
        cfg.hidden_layers = 1;
        cfg.hidden_width = 1;
        cfg.output_scale = 10.0;
        MlpParams p;
        p.config = cfg;
        p.flat = {0.3, -0.2, 0.0, 0.7, -0.4, 0.05, -0.06, 0.15};  // effective slope 1.5
        // z = 0 at the origin, so d tanh = effective slope exactly
        const auto jac = input_jacobian(p, 0.0, 0.0);
        REQUIRE(jac[0] == Catch::Approx(10.0 * (0.7 * (1.5 * 0.3))).margin(1e-13));
        REQUIRE(jac[1] == Catch::Approx(10.0 * (0.7 * (1.5 * -0.2))).margin(1e-13));
        REQUIRE(jac[2] == Catch::Approx(10.0 * (-0.4 * (1.5 * 0.3))).margin(1e-13));
        REQUIRE(jac[3] == Catch::Approx(10.0 * (-0.4 * (1.5 * -0.2))).margin(1e-13));
    }
}

TEST_CASE("outputs stay finite at the corners of the chart") {
    const MlpParams p = small_net(4, 50, 7);
    const double coords[8] = {-1, -1, -1, 1, 1, -1, 1, 1};
    std::vector<double> out = forward(p, std::span<const double>(coords, 8));
    for (double v : out) REQUIRE(std::isfinite(v));
}

TEST_CASE("non-finite parameters are reported with their layer") {
    MlpParams p = small_net(3, 4, 2);
    const MlpLayout lay = p.layout();
    p.flat[lay.w_off[1]] = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_MATCHES(check_finite(p), numerical_error,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("layer 1")));

    MlpParams q = small_net(3, 4, 2);
    q.flat[q.layout().slope_off + 2] = std::numeric_limits<double>::infinity();
    REQUIRE_THROWS_MATCHES(check_finite(q), numerical_error,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("slope")));
}

TEST_CASE("mismatched spans are rejected") {
    const MlpParams p = small_net(1, 2, 0);
    const double c[3] = {0.0, 0.0, 0.0};
    REQUIRE_THROWS_AS(forward(p, std::span<const double>(c, 3)), usage_error);
    REQUIRE_THROWS_AS(backward(p, std::span<const double>(c, 2),
                               std::span<const double>(c, 3)),
                      usage_error);
}

TEST_CASE("checkpoint files round-trip bit for bit") {
    testutil::TempDir dir;
    MlpParams p = small_net(2, 5, 99);
    p.config.output_scale = 12.5;
    const auto path = dir.file("net.dicp");
    save_network(p, 320, 200, path);

    const NetworkCheckpoint cp = load_network(path);
    REQUIRE(cp.width == 320);
    REQUIRE(cp.height == 200);
    REQUIRE(cp.params.config.hidden_layers == 2);
    REQUIRE(cp.params.config.hidden_width == 5);
    REQUIRE(cp.params.config.output_scale == 12.5);
    REQUIRE(cp.params.config.seed == 99);
    REQUIRE(cp.params.config.activation == Activation::adaptive_tanh);
    REQUIRE(cp.params.flat.size() == p.flat.size());
    REQUIRE(std::memcmp(cp.params.flat.data(), p.flat.data(),
                        p.flat.size() * sizeof(double)) == 0);

    SECTION("truncated payload is a format error") {
        std::string bytes = detail::read_file_bytes(path);
        detail::write_file_bytes(path, bytes.substr(0, bytes.size() - 9));
        REQUIRE_THROWS_AS(load_network(path), format_error);
    }

    SECTION("wrong magic is a format error") {
        std::string bytes = detail::read_file_bytes(path);
        bytes[0] = 'X';
        detail::write_file_bytes(path, bytes);
        REQUIRE_THROWS_AS(load_network(path), format_error);
    }
}

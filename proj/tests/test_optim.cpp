#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "pindic/optim.hpp"
#include "pindic/rng.hpp"

using namespace pindic;

namespace {

// independent dense solve (Gaussian elimination, partial pivoting)
std::vector<double> solve_linear(std::vector<std::vector<double>> a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r) {
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        }
        std::swap(a[c], a[piv]);
        std::swap(b[c], b[piv]);
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = a[r][c] / a[c][c];
            for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
            b[r] -= f * b[c];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
        x[i] = s / a[i][i];
    }
    return x;
}

}  // namespace

TEST_CASE("first Adam step follows the update rule to the letter") {
    AdamConfig cfg;
    cfg.weight_decay = 0.0;
    std::vector<double> p{1.0};
    AdamState st(1);
    const double g[1] = {0.5};
    adam_step(p, std::span<const double>(g, 1), st, cfg);
    // bias correction makes the first step lr * g / (|g| + eps)
    REQUIRE(p[0] == Catch::Approx(1.0 - 0.001 * (0.5 / (0.5 + 1e-8))).margin(1e-15));
    REQUIRE(st.t == 1);
}

TEST_CASE("zero gradient and zero decay leave parameters untouched") {
    AdamConfig cfg;
    cfg.weight_decay = 0.0;
    std::vector<double> p{0.25, -3.0, 17.5};
    const std::vector<double> orig = p;
    AdamState st(3);
    const std::vector<double> g{0.0, 0.0, 0.0};
    for (int i = 0; i < 25; ++i) adam_step(p, g, st, cfg);
    REQUIRE(p == orig);
}

TEST_CASE("weight decay alone shrinks parameters toward zero") {
    AdamConfig cfg;
    cfg.weight_decay = 0.1;
    std::vector<double> p{2.0};
    AdamState st(1);
    const std::vector<double> g{0.0};
    double prev = p[0];
    for (int i = 0; i < 50; ++i) {
        adam_step(p, g, st, cfg);
        REQUIRE(p[0] < prev);
        REQUIRE(p[0] > 0.0);
        prev = p[0];
    }
}

TEST_CASE("Adam walks a separable quadratic to its minimum") {
    AdamConfig cfg;
    cfg.weight_decay = 0.0;
    const std::vector<double> c{0.3, -0.2, 0.45};
    std::vector<double> p{0.0, 0.0, 0.0};
    AdamState st(3);
    std::vector<double> g(3);
    for (int i = 0; i < 2000; ++i) {
        for (int k = 0; k < 3; ++k) g[k] = 2.0 * (p[k] - c[k]);
        adam_step(p, g, st, cfg);
    }
    for (int k = 0; k < 3; ++k) REQUIRE(std::abs(p[k] - c[k]) < 0.01);
}

TEST_CASE("the quasi-Newton loop solves a random SPD system to 1e-8") {
    const std::size_t n = 8;
    Rng rng(314);
    std::vector<std::vector<double>> m(n, std::vector<double>(n));
    for (auto& row : m) {
        for (double& v : row) v = rng.uniform(-1.0, 1.0);
    }
    // A = M^T M + I is symmetric positive definite
    std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t k = 0; k < n; ++k) a[i][j] += m[k][i] * m[k][j];
        }
        a[i][i] += 1.0;
    }
    std::vector<double> b(n);
    for (double& v : b) v = rng.uniform(-2.0, 2.0);
    const std::vector<double> want = solve_linear(a, b);

    auto fn = [&](std::span<const double> x, std::span<double> g) {
        double f = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double ax = 0.0;
            for (std::size_t j = 0; j < n; ++j) ax += a[i][j] * x[j];
            g[i] = ax - b[i];
            f += 0.5 * x[i] * ax - b[i] * x[i];
        }
        return f;
    };

    std::vector<double> x(n, 0.0);
    LbfgsConfig cfg;
    cfg.max_iters = 200;
    const LbfgsResult r = lbfgs_run(x, fn, cfg);
    REQUIRE(r.status == LbfgsStatus::converged);
    for (std::size_t i = 0; i < n; ++i) REQUIRE(std::abs(x[i] - want[i]) < 1e-8);
}

TEST_CASE("the quasi-Newton loop drives Rosenbrock below 1e-10") {
    auto fn = [](std::span<const double> x, std::span<double> g) {
        const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
        g[0] = -2.0 * a - 400.0 * b * x[0];
        g[1] = 200.0 * b;
        return a * a + 100.0 * b * b;
    };
    std::vector<double> x{-1.2, 1.0};
    LbfgsConfig cfg;
    cfg.max_iters = 500;
    const LbfgsResult r = lbfgs_run(x, fn, cfg);
    std::vector<double> g(2);
    const double f = fn(x, g);
    REQUIRE(f < 1e-10);
    REQUIRE(r.status == LbfgsStatus::converged);
    REQUIRE(std::abs(x[0] - 1.0) < 1e-5);
    REQUIRE(std::abs(x[1] - 1.0) < 1e-5);
}

TEST_CASE("a flat start exits immediately without touching the iterate") {
    auto fn = [](std::span<const double>, std::span<double> g) {
        for (double& v : g) v = 0.0;
        return 4.5;
    };
    std::vector<double> x{1.0, 2.0};
    const std::vector<double> orig = x;
    const LbfgsResult r = lbfgs_run(x, fn, LbfgsConfig{});
    REQUIRE(r.status == LbfgsStatus::converged);
    REQUIRE(r.iterations == 0);
    REQUIRE(x == orig);
}

TEST_CASE("a lying gradient ends in a reported line-search failure") {
    // the claimed slope never flattens, so the curvature test can never pass
    auto fn = [](std::span<const double> x, std::span<double> g) {
        g[0] = 1.0;
        return x[0] * x[0];
    };
    std::vector<double> x{1.0};
    const LbfgsResult r = lbfgs_run(x, fn, LbfgsConfig{});
    REQUIRE(r.status == LbfgsStatus::line_search_failure);
}

TEST_CASE("the monitor can stop the loop after any accepted step") {
    auto fn = [](std::span<const double> x, std::span<double> g) {
        double f = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            g[i] = 2.0 * (x[i] - 1.0);
            f += (x[i] - 1.0) * (x[i] - 1.0);
        }
        return f;
    };
    std::vector<double> x{5.0, -4.0, 2.0};
    int calls = 0;
    auto monitor = [&](int iter, double, std::span<const double>) {
        ++calls;
        return iter < 3;
    };
    const LbfgsResult r = lbfgs_run(x, fn, LbfgsConfig{}, monitor);
    REQUIRE(r.status == LbfgsStatus::stopped);
    REQUIRE(r.iterations == 3);
    REQUIRE(calls == 3);
}

TEST_CASE("plateau rule fires after three flat hundred-iteration marks") {
    SECTION("constant loss trips at iteration 400") {
        PlateauDetector det{PlateauConfig{}};
        for (int i = 1; i <= 399; ++i) REQUIRE_FALSE(det.push(10.0));
        REQUIRE(det.push(10.0));
    }

    SECTION("five percent decay per epoch never trips") {
        PlateauDetector det{PlateauConfig{}};
        double loss = 10.0;
        for (int e = 0; e < 8; ++e) {
            for (int i = 0; i < 100; ++i) REQUIRE_FALSE(det.push(loss));
            loss *= 0.95;
        }
    }

    SECTION("a drop resets the streak") {
        PlateauDetector det{PlateauConfig{}};
        auto epoch = [&](double loss) {
            bool fired = false;
            for (int i = 0; i < 100; ++i) fired = det.push(loss);
            return fired;
        };
        REQUIRE_FALSE(epoch(10.0));  // first mark
        REQUIRE_FALSE(epoch(10.0));  // streak 1
        REQUIRE_FALSE(epoch(10.0));  // streak 2
        REQUIRE_FALSE(epoch(5.0));   // reset
        REQUIRE_FALSE(epoch(5.0));   // streak 1
        REQUIRE_FALSE(epoch(5.0));   // streak 2
        REQUIRE(epoch(5.0));         // streak 3 -> fire at iteration 700
    }
}

TEST_CASE("a stage that starts below threshold stops before any step") {
    auto fn = [](std::span<const double>, std::span<double> g, double& mae) {
        for (double& v : g) v = 1.0;
        mae = 0.05;
        return 0.5;
    };
    std::vector<double> p{1.0, 2.0};
    const std::vector<double> orig = p;
    StageConfig cfg;
    const StageResult res = run_stage(p, fn, cfg);
    REQUIRE(res.trace.stop == StopCause::gray_error_threshold);
    REQUIRE(res.trace.steps == 0);
    REQUIRE(res.trace.loss.size() == 1);
    REQUIRE(res.best_mae == 0.05);
    REQUIRE(p == orig);
}

TEST_CASE("a stage with frozen loss stops on the plateau rule at record 400") {
    auto fn = [](std::span<const double>, std::span<double> g, double& mae) {
        for (double& v : g) v = 0.01;
        mae = 5.0;
        return 7.0;
    };
    std::vector<double> p{0.0};
    StageConfig cfg;
    const StageResult res = run_stage(p, fn, cfg);
    REQUIRE(res.trace.stop == StopCause::plateau);
    REQUIRE(res.trace.loss.size() == 400);
    REQUIRE(res.trace.steps == 399);
    REQUIRE(res.final_loss == 7.0);
}

TEST_CASE("a stage hands off from Adam to the quasi-Newton phase and converges") {
    const std::vector<double> c{0.4, -0.1};
    auto fn = [&](std::span<const double> x, std::span<double> g, double& mae) {
        double f = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            g[i] = 2.0 * (x[i] - c[i]);
            f += (x[i] - c[i]) * (x[i] - c[i]);
        }
        mae = std::sqrt(f);
        return f;
    };
    std::vector<double> p{0.0, 0.0};
    StageConfig cfg;
    cfg.adam.max_iters = 30;
    cfg.adam.weight_decay = 0.0;
    cfg.lbfgs.max_iters = 200;
    cfg.stop_mean_gray_error = 1e-6;
    const StageResult res = run_stage(p, fn, cfg);
    REQUIRE(res.trace.stop == StopCause::gray_error_threshold);
    REQUIRE(std::abs(p[0] - c[0]) < 1e-6);
    REQUIRE(std::abs(p[1] - c[1]) < 1e-6);
    REQUIRE(res.trace.optimizer.front() == 0);
    REQUIRE(res.trace.optimizer.back() == 1);
    REQUIRE(res.best_mae <= 1e-6);
}

TEST_CASE("a numerical abort returns the best iterate seen so far") {
    int call = 0;
    std::vector<double> best_seen;
    auto fn = [&](std::span<const double> x, std::span<double> g, double& mae) {
        for (double& v : g) v = 1.0;
        const int i = call++;
        if (i >= 6) throw numerical_error("synthetic blow-up");
        mae = (i == 1) ? 3.0 : 5.0 - 0.01 * i;
        if (i == 1) best_seen.assign(x.begin(), x.end());
        return mae * mae;
    };
    std::vector<double> p{1.0, -2.0};
    StageConfig cfg;
    const StageResult res = run_stage(p, fn, cfg);
    REQUIRE(res.trace.stop == StopCause::numerical_error);
    REQUIRE(res.best_mae == 3.0);
    REQUIRE(p == best_seen);
    REQUIRE(res.best_params == best_seen);
}

TEST_CASE("the stage-level iteration cap limits the Adam budget") {
    auto fn = [](std::span<const double> x, std::span<double> g, double& mae) {
        double f = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            g[i] = 2.0 * x[i];
            f += x[i] * x[i];
        }
        mae = std::sqrt(f) + 1.0;  // never reaches the threshold
        return f;
    };
    std::vector<double> p{4.0};
    StageConfig cfg;
    cfg.max_iters = 50;
    const StageResult res = run_stage(p, fn, cfg);
    REQUIRE(res.trace.stop == StopCause::max_iters);
    REQUIRE(res.trace.steps == 50);
    REQUIRE(res.trace.loss.size() == 51);  // 50 Adam records + the boundary check
}

#include "adampnp/adaptive.hpp"
#include "adampnp/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace adampnp;

TEST_CASE("median of squared residuals against a sort-based oracle") {
    Rng rng(31);
    for (int n : {1, 2, 5, 6, 101, 2000}) {
        Vec y = rng.gaussian_vec(n);
        Vec f = rng.gaussian_vec(n);
        std::vector<double> sq(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) sq[size_t(i)] = (y[i] - f[i]) * (y[i] - f[i]);
        std::sort(sq.begin(), sq.end());
        double med = n % 2 == 1 ? sq[size_t(n / 2)]
                                : 0.5 * (sq[size_t(n / 2) - 1] + sq[size_t(n / 2)]);
        double kappa = 1.0 / 0.4549;
        CHECK(median_residual_variance(y, f, kappa) ==
              doctest::Approx(kappa * med).epsilon(1e-12));
    }
    CHECK_THROWS_AS(median_residual_variance(Vec::Zero(3), Vec::Zero(2), 1.0),
                    DimensionError);
    CHECK_THROWS_AS(median_residual_variance(Vec(), Vec(), 1.0), DimensionError);
}

TEST_CASE("median estimator is calibrated for gaussian residuals") {
    // For r ~ N(0, sigma^2), median(r^2) ~ 0.4549 sigma^2; the kappa
    // rescaling must therefore recover sigma^2 on large samples.
    Rng rng(32);
    double sigma = 0.35;
    Vec y = sigma * rng.gaussian_vec(200000);
    Vec f = Vec::Zero(y.size());
    double est = median_residual_variance(y, f, 1.0 / 0.4549);
    CHECK(est == doctest::Approx(sigma * sigma).epsilon(0.02));
}

TEST_CASE("bias correction subtracts the schedule term and floors at epsilon") {
    AdaptiveParams p;  // kappa 1/0.4549, gamma 0.5, epsilon 1e-6, decay 0.9
    double raw = 0.04, t_norm = 0.25, tau = 0.3, lip = 0.5;
    double want = raw - 0.5 * (1.0 - t_norm) * (lip * tau) * (lip * tau);
    CHECK(bias_corrected_variance(raw, t_norm, tau, lip, p) ==
          doctest::Approx(want).epsilon(1e-12));
    // Oversized correction pins the estimate to the floor exactly.
    CHECK(bias_corrected_variance(0.001, 0.0, 1.0, 10.0, p) == p.epsilon);
    CHECK(bias_corrected_variance(0.0, 1.0, 0.0, 0.0, p) == p.epsilon);
}

TEST_CASE("adaptive params validation") {
    AdaptiveParams p;
    p.validate();
    p.kappa = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = AdaptiveParams{};
    p.ema_decay = 1.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = AdaptiveParams{};
    p.epsilon = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = AdaptiveParams{};
    p.gamma = -0.5;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("ema smoothing unrolls as decay * old + (1 - decay) * new") {
    AdaptiveParams params;
    params.ema_decay = 0.9;
    AdaptiveState state({1.0}, params);
    CHECK(!state.initialized(0));
    CHECK_THROWS_AS(state.sigma_hat_sq(0), std::logic_error);
    CHECK_THROWS_AS(state.weights(), std::logic_error);

    // First update seeds the average with the corrected value itself.
    double v1 = state.update(0, 0.05, 1.0, 0.0);  // no correction at t_norm = 1
    CHECK(v1 == doctest::Approx(0.05).epsilon(1e-12));
    // Second update blends: 0.9 * 0.05 + 0.1 * 0.02.
    double v2 = state.update(0, 0.02, 1.0, 0.0);
    CHECK(v2 == doctest::Approx(0.9 * 0.05 + 0.1 * 0.02).epsilon(1e-12));
    CHECK(state.sigma_hat_sq(0) == doctest::Approx(v2).epsilon(1e-12));
    // The smoothed estimate never drops below the floor.
    for (int k = 0; k < 400; ++k) state.update(0, 0.0, 1.0, 0.0);
    CHECK(state.sigma_hat_sq(0) >= params.epsilon);
}

TEST_CASE("bias correction inside the tracker uses sensitivity and time") {
    AdaptiveParams params;
    AdaptiveState state({2.0}, params);
    double raw = 0.5, t_norm = 0.4, tau = 0.6;
    double corrected = raw - params.gamma * (1.0 - t_norm) * (2.0 * tau) * (2.0 * tau);
    double got = state.update(0, raw, t_norm, tau);
    CHECK(got == doctest::Approx(std::max(params.epsilon, corrected)).epsilon(1e-12));
}

TEST_CASE("precision weights sum to the modality count and order by variance") {
    std::vector<double> est{0.01, 0.04, 1.0};
    std::vector<double> w = dynamic_weights(est, 1e-6);
    REQUIRE(w.size() == 3);
    double sum = w[0] + w[1] + w[2];
    CHECK(std::abs(sum - 3.0) <= 1e-12);
    CHECK(w[0] > w[1]);
    CHECK(w[1] > w[2]);
    // Hand value: w_i = (1/(v_i + eps)) * M / sum_j 1/(v_j + eps).
    double inv0 = 1.0 / (0.01 + 1e-6), inv1 = 1.0 / (0.04 + 1e-6), inv2 = 1.0 / (1.0 + 1e-6);
    CHECK(w[0] == doctest::Approx(3.0 * inv0 / (inv0 + inv1 + inv2)).epsilon(1e-12));

    // A floored modality takes nearly everything.
    std::vector<double> w2 = dynamic_weights({1e-6, 10.0}, 1e-6);
    CHECK(w2[0] > 1.99);
    CHECK(w2[0] + w2[1] == doctest::Approx(2.0).epsilon(1e-12));

    // Equal variances share weight exactly.
    std::vector<double> w3 = dynamic_weights({0.3, 0.3, 0.3, 0.3}, 1e-6);
    for (double v : w3) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("tracker weights require every modality to report once") {
    AdaptiveParams params;
    AdaptiveState state({1.0, 1.0}, params);
    state.update(0, 0.1, 0.5, 0.2);
    CHECK_THROWS_AS(state.weights(), std::logic_error);
    state.update(1, 0.4, 0.5, 0.2);
    std::vector<double> w = state.weights();
    CHECK(std::abs(w[0] + w[1] - 2.0) <= 1e-12);
    CHECK(w[0] > w[1]);
}

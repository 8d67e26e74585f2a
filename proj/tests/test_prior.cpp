#include "adampnp/prior.hpp"
#include "adampnp/rng.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>

using namespace adampnp;

namespace {

GaussianMixturePrior small_mixture_1d() {
    GaussianMixturePrior p;
    p.means = {Vec::Constant(1, -2.0), Vec::Constant(1, 0.5), Vec::Constant(1, 3.0)};
    p.weights = {0.5, 0.2, 0.3};
    p.component_std = 0.7;
    return p;
}

// Posterior mean E[z0 | z_t] by trapezoid quadrature over a wide clean-latent
// grid, from the joint density p(z0) N(z_t; sqrt(ab) z0, tau^2). Independent
// of the closed-form path under test.
double quadrature_posterior_mean_1d(double z_t, int t, const GaussianMixturePrior& p,
                                    const NoiseSchedule& sched) {
    double ab = sched.alpha_bar(t);
    double tau2 = sched.tau(t) * sched.tau(t);
    auto prior_pdf = [&](double z0) {
        double total = 0.0;
        for (size_t c = 0; c < p.means.size(); ++c) {
            double d = z0 - p.means[c][0];
            total += p.weights[c] *
                     std::exp(-0.5 * d * d / (p.component_std * p.component_std)) /
                     (p.component_std * std::sqrt(2.0 * M_PI));
        }
        return total;
    };
    double lo = -12.0, hi = 12.0;
    int n = 200000;
    double h = (hi - lo) / n;
    double num = 0.0, den = 0.0;
    for (int i = 0; i <= n; ++i) {
        double z0 = lo + i * h;
        double d = z_t - std::sqrt(ab) * z0;
        double lik = tau2 > 0.0 ? std::exp(-0.5 * d * d / tau2) : (i == 0 ? 1.0 : 0.0);
        double w = (i == 0 || i == n) ? 0.5 : 1.0;
        num += w * z0 * prior_pdf(z0) * lik;
        den += w * prior_pdf(z0) * lik;
    }
    return num / den;
}

} // namespace

TEST_CASE("schedule endpoints and spot values") {
    NoiseSchedule sched(200);
    CHECK(sched.beta(1) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(sched.beta(200) == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(sched.alpha_bar(0) == 1.0);
    CHECK(sched.tau(0) == 0.0);
    // Derived corruption levels along the ramp.
    CHECK(sched.tau(10) == doctest::Approx(0.11).epsilon(0.05));
    CHECK(sched.tau(20) == doctest::Approx(0.22).epsilon(0.05));
    CHECK(sched.tau(30) == doctest::Approx(0.33).epsilon(0.05));
    CHECK(sched.alpha_bar(200) == doctest::Approx(0.0067).epsilon(0.02));
}

TEST_CASE("schedule matches an independent cumulative recurrence") {
    NoiseSchedule sched(200);
    // Recompute alpha_bar by direct accumulation of the documented ramp.
    double acc = 0.0;
    for (int t = 1; t <= 200; ++t) {
        double beta = 1e-4 + (0.05 - 1e-4) * double(t - 1) / 199.0;
        acc += beta;
        CHECK(sched.beta(t) == doctest::Approx(beta).epsilon(1e-12));
        CHECK(sched.alpha_bar(t) == doctest::Approx(std::exp(-acc)).epsilon(1e-10));
    }
}

TEST_CASE("forward transition composes to the marginal at every t") {
    NoiseSchedule sched(200);
    for (int t = 1; t <= 200; ++t) {
        double a = sched.step_alpha(t), s = sched.step_tau(t);
        CHECK(std::abs(a * a * sched.alpha_bar(t - 1) - sched.alpha_bar(t)) <= 1e-10);
        double tau2 = a * a * sched.tau(t - 1) * sched.tau(t - 1) + s * s;
        CHECK(std::abs(tau2 - sched.tau(t) * sched.tau(t)) <= 1e-10);
    }
    CHECK_THROWS_AS(sched.beta(0), std::out_of_range);
    CHECK_THROWS_AS(sched.alpha_bar(201), std::out_of_range);
}

TEST_CASE("mixture posterior mean agrees with quadrature") {
    NoiseSchedule sched(200);
    GaussianMixturePrior p = small_mixture_1d();
    for (int t : {5, 40, 120, 200}) {
        for (double z_t : {-1.5, 0.0, 0.8, 2.5}) {
            Vec z(1);
            z[0] = z_t;
            double got = mixture_denoise(z, t, p, sched)[0];
            double want = quadrature_posterior_mean_1d(z_t, t, p, sched);
            CHECK(got == doctest::Approx(want).epsilon(1e-6));
        }
    }
}

TEST_CASE("responsibilities are a distribution and favor the nearest mean") {
    NoiseSchedule sched(200);
    GaussianMixturePrior p = small_mixture_1d();
    Vec z(1);
    z[0] = std::sqrt(sched.alpha_bar(30)) * 3.0;  // sits on the third mean
    auto r = mixture_responsibilities(z, 30, p, sched);
    REQUIRE(r.size() == 3);
    double sum = 0.0;
    for (double v : r) {
        CHECK(v >= 0.0);
        sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r[2] > r[0]);
    CHECK(r[2] > r[1]);
}

TEST_CASE("single-component denoising reduces to the affine shrinkage formula") {
    NoiseSchedule sched(200);
    GaussianMixturePrior p;
    p.means = {Vec::Constant(3, 1.5)};
    p.weights = {1.0};
    p.component_std = 0.6;
    Rng rng(5);
    for (int t : {1, 50, 150}) {
        Vec z = rng.gaussian_vec(3);
        double ab = sched.alpha_bar(t), tau2 = sched.tau(t) * sched.tau(t);
        double gain = std::sqrt(ab) * p.component_std * p.component_std /
                      (ab * p.component_std * p.component_std + tau2);
        Vec want = p.means[0] + gain * (z - std::sqrt(ab) * p.means[0]);
        CHECK((mixture_denoise(z, t, p, sched) - want).norm() < 1e-12);
    }
}

TEST_CASE("denoising at t=0 returns the latent unchanged") {
    NoiseSchedule sched(200);
    GaussianMixturePrior p = small_mixture_1d();
    Vec z(1);
    z[0] = 0.37;
    CHECK(mixture_denoise(z, 0, p, sched)[0] == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("mixture validation rejects inconsistent parameters") {
    GaussianMixturePrior p = small_mixture_1d();
    p.weights = {0.5, 0.5};
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = small_mixture_1d();
    p.weights[0] = -0.1;
    p.weights[2] = 0.9;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = small_mixture_1d();
    p.component_std = -0.5;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = small_mixture_1d();
    p.means[1] = Vec::Zero(2);
    CHECK_THROWS_AS(p.validate(), DimensionError);

    // Zero width is the documented point-mass case, not an error: the
    // denoiser collapses onto the responsibility-weighted means.
    p = small_mixture_1d();
    p.component_std = 0.0;
    CHECK_NOTHROW(p.validate());
    NoiseSchedule sched(200);
    Vec z(1);
    z[0] = std::sqrt(sched.alpha_bar(40)) * p.means[0][0] + 0.01;
    double zhat = mixture_denoise(z, 40, p, sched)[0];
    double lo = std::min(p.means[0][0], p.means.back()[0]);
    double hi = std::max(p.means[0][0], p.means.back()[0]);
    CHECK(zhat >= lo);
    CHECK(zhat <= hi);
}

TEST_CASE("identity covariance factor is a scaled identity") {
    CovarianceFactor r(CovarianceKind::identity, 8, 2.5);
    Rng rng(11);
    Vec z = rng.gaussian_vec(r.dim());
    CHECK((r.apply(z) - 2.5 * z).norm() < 1e-14);
    CHECK((r.solve(r.apply(z)) - z).norm() < 1e-12);
    CHECK((r.apply_transpose(z) - 2.5 * z).norm() < 1e-14);
    CHECK(r.operator_norm() == doctest::Approx(2.5).epsilon(1e-6));
}

TEST_CASE("chain covariance factor matches its dense materialization") {
    const int n_atoms = 6;
    CovarianceFactor r(CovarianceKind::chain, n_atoms, 1.7);
    Eigen::Index d = r.dim();
    // Materialize R column by column, then check all three products and the
    // norm against dense linear algebra.
    Eigen::MatrixXd dense(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
        Vec e = Vec::Zero(d);
        e[j] = 1.0;
        dense.col(j) = r.apply(e);
    }
    Rng rng(3);
    Vec z = rng.gaussian_vec(d);
    CHECK((r.apply(z) - dense * z).norm() < 1e-12);
    CHECK((r.apply_transpose(z) - dense.transpose() * z).norm() < 1e-12);
    CHECK((dense * r.solve(z) - z).norm() < 1e-10);
    double spectral = dense.jacobiSvd().singularValues()[0];
    CHECK(r.operator_norm() == doctest::Approx(spectral).epsilon(1e-5));
    for (int a = 0; a < n_atoms; ++a)
        for (int b = 0; b < n_atoms; ++b) {
            // One axis of atom a is row 3a of R.
            double want = dense.row(3 * a).dot(dense.row(3 * b));
            CHECK(r.atom_gram(a, b) == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("whiten then unwhiten is the identity to 1e-10") {
    Rng rng(21);
    for (CovarianceKind kind : {CovarianceKind::identity, CovarianceKind::chain}) {
        CovarianceFactor r(kind, 16, 1.3);
        Vec x = rng.gaussian_vec(r.dim());
        CHECK((unwhiten(r, whiten(r, x)) - x).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((whiten(r, unwhiten(r, x)) - x).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("unconditional sampling is deterministic in the seed") {
    NoiseSchedule sched(200);
    GaussianMixturePrior p;
    p.means = {Vec::Constant(6, -1.0), Vec::Constant(6, 1.0)};
    p.weights = {0.5, 0.5};
    p.component_std = 0.3;
    MixtureDenoiser den(p, sched);
    LangevinParams params;
    Vec a = sample_unconditional_latent(den, sched, params, 42);
    Vec b = sample_unconditional_latent(den, sched, params, 42);
    Vec c = sample_unconditional_latent(den, sched, params, 43);
    CHECK((a - b).norm() == 0.0);
    CHECK((a - c).norm() > 0.0);
    // The sample should land near one of the two component means.
    double d0 = (a - p.means[0]).norm(), d1 = (a - p.means[1]).norm();
    CHECK(std::min(d0, d1) < 3.0 * p.component_std * std::sqrt(6.0));
}

TEST_CASE("deterministic reverse step contracts toward the clean manifold") {
    NoiseSchedule sched(200);
    GaussianMixturePrior p;
    p.means = {Vec::Constant(4, 2.0)};
    p.weights = {1.0};
    p.component_std = 0.2;
    MixtureDenoiser den(p, sched);
    LangevinParams params;
    params.noise_scale = 0.0;  // pure drift
    Rng rng(9);
    Vec z = rng.gaussian_vec(4);
    Vec z1 = langevin_reverse_step(z, 150, den, sched, params, rng);
    Vec z2 = langevin_reverse_step(z, 150, den, sched, params, rng);
    CHECK((z1 - z2).norm() == 0.0);  // no randomness consumed
    CHECK_THROWS_AS(langevin_reverse_step(z, 0, den, sched, params, rng), std::logic_error);
}

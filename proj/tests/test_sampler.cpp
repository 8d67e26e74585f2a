#include "adampnp/sampler.hpp"
#include "adampnp/rng.hpp"
#include "adampnp/synthetic.hpp"

#include <doctest.h>

#include <cmath>
#include <memory>
#include <sstream>

using namespace adampnp;

namespace {

struct TinyProblem {
    Backbone truth;
    std::shared_ptr<CovarianceFactor> cov;
    NoiseSchedule sched{200};
    GaussianMixturePrior prior;
    std::vector<Measurement> measurements;

    TinyProblem() {
        truth = center(make_hairpin(10));
        cov = std::make_shared<CovarianceFactor>(CovarianceKind::identity, truth.n_atoms());
        prior.means = {cov->solve(truth.coords),
                       cov->solve(block_rotated(truth, 4).coords)};
        prior.weights = {0.5, 0.5};
        prior.component_std = 1.0;
        auto p_model = std::make_shared<CoordinateSelection>(truth.calpha_indices(),
                                                             truth.n_atoms());
        auto d_model = std::make_shared<PairDistances>(random_calpha_pairs(10, 20, 2, 9),
                                                       truth.n_atoms());
        measurements.push_back(simulate_measurement(p_model, truth.coords, 0.05, 11));
        measurements.push_back(simulate_measurement(d_model, truth.coords, 0.05, 12));
    }
};

} // namespace

TEST_CASE("modality gradient assembles the whitened adjoint chain") {
    TinyProblem tp;
    Rng rng(51);
    Vec z0 = tp.cov->solve(tp.truth.coords) + 0.1 * rng.gaussian_vec(tp.truth.dim());
    const Measurement& m = tp.measurements[0];
    double sigma_sq = 0.04;

    Vec got = modality_gradient(z0, m, sigma_sq, *tp.cov);
    Vec x = tp.cov->apply(z0);
    Vec want = tp.cov->apply_transpose(m.model->vjp(x, m.y - m.model->apply(x))) / sigma_sq;
    CHECK((got - want).norm() == 0.0);

    // Against finite differences of the log-likelihood in z: the gradient
    // is the ascent direction of -0.5/sigma^2 ||y - F(R z)||^2.
    double h = 1e-6;
    for (int k : {0, 7, 31}) {
        Vec zp = z0, zm = z0;
        zp[k] += h;
        zm[k] -= h;
        double up = -0.5 / sigma_sq * (m.y - m.model->apply(tp.cov->apply(zp))).squaredNorm();
        double dn = -0.5 / sigma_sq * (m.y - m.model->apply(tp.cov->apply(zm))).squaredNorm();
        CHECK(got[k] == doctest::Approx((up - dn) / (2 * h)).epsilon(1e-5));
    }
}

TEST_CASE("guidance step unrolls momentum by hand and clips by rms") {
    GuidanceConfig cfg;
    cfg.eta = 0.2;
    cfg.rho = 0.5;
    cfg.max_step_rms = 100.0;
    Vec z0 = Vec::Zero(4);
    Vec v = Vec::Zero(4);
    Vec g1 = Vec::Constant(4, 1.0), g2 = Vec::Constant(4, -3.0);

    Vec z1 = guidance_step(v, z0, {g1}, {1.0}, cfg);
    // v1 = 0.5 * 0 + 0.5 * g1; step = eta * v1.
    CHECK((v - 0.5 * g1).norm() < 1e-15);
    CHECK((z1 - (z0 - 0.2 * 0.5 * g1)).norm() < 1e-15);

    Vec z2 = guidance_step(v, z1, {g2}, {1.0}, cfg);
    Vec v2 = 0.5 * (0.5 * g1) + 0.5 * g2;
    CHECK((v - v2).norm() < 1e-15);
    CHECK((z2 - (z1 - 0.2 * v2)).norm() < 1e-15);

    // Weighted two-modality accumulation.
    v.setZero();
    Vec z3 = guidance_step(v, z0, {g1, g2}, {1.5, 0.5}, cfg);
    CHECK((v - 0.5 * (1.5 * g1 + 0.5 * g2)).norm() < 1e-15);

    // A huge gradient saturates the clip at exactly max_step_rms.
    cfg.max_step_rms = 0.25;
    v.setZero();
    bool clipped = false;
    double rms = 0.0;
    Vec z4 = guidance_step(v, z0, {Vec::Constant(4, 1e6)}, {1.0}, cfg, &clipped, &rms);
    CHECK(clipped);
    CHECK(rms == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(std::sqrt((z4 - z0).squaredNorm() / 4.0) == doctest::Approx(0.25).epsilon(1e-12));

    // Degenerate shapes are rejected.
    CHECK_THROWS_AS(guidance_step(v, z0, {g1}, {1.0, 2.0}, cfg), DimensionError);
}

TEST_CASE("reverse step matches the transition moments") {
    NoiseSchedule sched(200);
    Rng rng(61);
    Vec zhat = rng.gaussian_vec(3);

    // t = 1 re-corrupts to time zero: exactly the clean estimate.
    Rng r1(1);
    CHECK((reverse_step(zhat, 1, sched, r1) - zhat).norm() == 0.0);

    // noise_scale = 0 keeps only the deterministic part.
    Rng r2(2);
    Vec det = reverse_step(zhat, 120, sched, r2, 0.0);
    CHECK((det - std::sqrt(sched.alpha_bar(119)) * zhat).norm() < 1e-15);

    // Sample mean and variance of the stochastic part at t = 120.
    int n = 40000;
    Rng r3(3);
    double mean_acc = 0.0, var_acc = 0.0;
    for (int k = 0; k < n; ++k) {
        Vec z = reverse_step(zhat, 120, sched, r3);
        Vec noise = z - det;
        mean_acc += noise[0];
        var_acc += noise.squaredNorm();
    }
    double tau2 = sched.tau(119) * sched.tau(119);
    CHECK(std::abs(mean_acc / n) < 0.02);
    CHECK(var_acc / (3 * n) == doctest::Approx(tau2).epsilon(0.03));
    CHECK_THROWS_AS(reverse_step(zhat, 0, sched, r3), std::out_of_range);
}

TEST_CASE("guided sampling is deterministic and fills every result field") {
    TinyProblem tp;
    MixtureDenoiser den(tp.prior, tp.sched);
    GuidanceConfig cfg;

    SamplerResult a = run_adam_pnp(tp.measurements, den, tp.sched, *tp.cov, cfg, 77, true,
                                   &tp.truth);
    SamplerResult b = run_adam_pnp(tp.measurements, den, tp.sched, *tp.cov, cfg, 77, true,
                                   &tp.truth);
    SamplerResult c = run_adam_pnp(tp.measurements, den, tp.sched, *tp.cov, cfg, 78, false,
                                   nullptr);
    CHECK((a.z0 - b.z0).norm() == 0.0);
    CHECK(a.data_misfit == b.data_misfit);
    CHECK((a.z0 - c.z0).norm() > 0.0);

    REQUIRE(a.sigma_hat_sq.size() == 2);
    REQUIRE(a.weights.size() == 2);
    REQUIRE(a.residual_sq.size() == 2);
    CHECK((a.x - tp.cov->apply(a.z0)).norm() == 0.0);
    for (size_t i = 0; i < 2; ++i) {
        CHECK(a.sigma_hat_sq[i] >= cfg.adaptive_params.epsilon);
        Vec f = tp.measurements[i].model->apply(a.x);
        CHECK(a.residual_sq[i] ==
              doctest::Approx((tp.measurements[i].y - f).squaredNorm()).epsilon(1e-12));
    }
    CHECK(std::abs(a.weights[0] + a.weights[1] - 2.0) <= 1e-9);

    // The final misfit is the weighted residual sum at the final point.
    double misfit = 0.0;
    for (size_t i = 0; i < 2; ++i)
        misfit += 0.5 * a.weights[i] / a.sigma_hat_sq[i] * a.residual_sq[i];
    CHECK(a.data_misfit == doctest::Approx(misfit).epsilon(1e-12));

    // Tracing records every step with per-modality channels.
    REQUIRE(a.trace.size() == 200);
    CHECK(a.trace.front().t == 200);
    CHECK(a.trace.back().t == 1);
    for (const StepRecord& rec : a.trace) {
        CHECK(rec.sigma_hat_sq.size() == 2);
        CHECK(rec.weights.size() == 2);
        CHECK(rec.residual_rms.size() == 2);
        CHECK(std::abs(rec.weights[0] + rec.weights[1] - 2.0) <= 1e-9);
        CHECK(rec.rmsd >= 0.0);  // reference was provided
    }
    CHECK(c.trace.empty());
}

TEST_CASE("fixed-noise mode uses the given levels and unit weights") {
    TinyProblem tp;
    MixtureDenoiser den(tp.prior, tp.sched);
    GuidanceConfig cfg;
    cfg.adaptive = false;
    cfg.fixed_sigmas = {0.2, 0.3};

    SamplerResult res = run_adam_pnp(tp.measurements, den, tp.sched, *tp.cov, cfg, 5, false,
                                     nullptr);
    CHECK(res.sigma_hat_sq[0] == doctest::Approx(0.04).epsilon(1e-12));
    CHECK(res.sigma_hat_sq[1] == doctest::Approx(0.09).epsilon(1e-12));
    CHECK(res.weights[0] == 1.0);
    CHECK(res.weights[1] == 1.0);

    // Without fixed sigmas the measurements' generating noise is used.
    cfg.fixed_sigmas.clear();
    SamplerResult res2 = run_adam_pnp(tp.measurements, den, tp.sched, *tp.cov, cfg, 5, false,
                                      nullptr);
    CHECK(res2.sigma_hat_sq[0] == doctest::Approx(0.0025).epsilon(1e-12));
}

TEST_CASE("guidance converges tightly in the data basin and separates basins by residual") {
    // A single trajectory commits to whichever prior basin its noise draw
    // favors (roughly the 50/50 mixture weights); guidance does not teleport
    // it across basins. What it does guarantee, and what sample selection
    // downstream relies on, is (a) trajectories that land in the truth basin
    // are pulled far inside the prior's component width, and (b) their raw
    // data residuals are orders of magnitude below those of decoy-basin
    // trajectories.
    TinyProblem tp;
    Backbone decoy = block_rotated(tp.truth, 4);
    MixtureDenoiser den(tp.prior, tp.sched);
    GuidanceConfig cfg;

    std::vector<double> truth_res_p, decoy_res_p;
    int tight_hits = 0;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        SamplerResult res =
            run_adam_pnp(tp.measurements, den, tp.sched, *tp.cov, cfg, seed, false, nullptr);
        Backbone bb = backbone_from_coords(tp.truth.n_residues, res.x);
        double to_truth = calpha_rmsd(bb, tp.truth);
        double to_decoy = calpha_rmsd(bb, decoy);
        if (to_truth < to_decoy) {
            // Deep inside the truth basin: the prior component has unit
            // width, the guided endpoint must be much tighter.
            CHECK(to_truth < 1.0);
            ++tight_hits;
            truth_res_p.push_back(res.residual_sq[0]);
        } else {
            decoy_res_p.push_back(res.residual_sq[0]);
        }
    }
    CHECK(tight_hits >= 2);

    // Every truth-basin sample beats every decoy-basin sample on the raw
    // coordinate residual by a factor of 10 or more; this is the signal
    // multi-sample selection uses.
    for (double tr : truth_res_p)
        for (double dr : decoy_res_p) CHECK(tr * 10.0 < dr);
}

TEST_CASE("trace csv lists one row per step with modality columns") {
    TinyProblem tp;
    MixtureDenoiser den(tp.prior, tp.sched);
    GuidanceConfig cfg;
    SamplerResult res = run_adam_pnp(tp.measurements, den, tp.sched, *tp.cov, cfg, 7, true,
                                     &tp.truth);
    std::ostringstream out;
    write_trace_csv(res.trace, {"P", "D"}, out);
    std::istringstream in(out.str());
    std::string header;
    std::getline(in, header);
    CHECK(header.find("sigma_hat_sq_P") != std::string::npos);
    CHECK(header.find("residual_rms_D") != std::string::npos);
    CHECK(header.find("step_rms") != std::string::npos);
    int rows = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 200);
}

TEST_CASE("invalid guidance configurations are rejected up front") {
    TinyProblem tp;
    MixtureDenoiser den(tp.prior, tp.sched);
    GuidanceConfig cfg;
    cfg.eta = 0.0;
    CHECK_THROWS_AS(run_adam_pnp(tp.measurements, den, tp.sched, *tp.cov, cfg, 1, false,
                                 nullptr),
                    ConfigError);
    cfg = GuidanceConfig{};
    cfg.fixed_sigmas = {0.1};  // two measurements
    CHECK_THROWS_AS(run_adam_pnp(tp.measurements, den, tp.sched, *tp.cov, cfg, 1, false,
                                 nullptr),
                    ConfigError);
    cfg = GuidanceConfig{};
    CHECK_THROWS_AS(run_adam_pnp({}, den, tp.sched, *tp.cov, cfg, 1, false, nullptr),
                    ConfigError);
}

#pragma once

#include "adampnp/geometry.hpp"
#include "adampnp/rng.hpp"
#include "adampnp/types.hpp"

#include <memory>
#include <vector>

namespace adampnp {

// Square root R of the prior covariance over atom coordinates: x = R z maps
// whitened latents to coordinates. Two factors are supported:
//   identity: R = scale * I (isotropic atoms),
//   chain:    cumulative sums along the chain per axis, scaled by
//             scale / sqrt(n_atoms), so atom a is the running sum of the
//             first a+1 latent displacements. This couples atoms like a
//             discrete random walk and R^{-1} is the first difference.
// Both apply / solve / apply_transpose are O(n).
enum class CovarianceKind { identity, chain };

class CovarianceFactor {
public:
    CovarianceFactor(CovarianceKind kind, int n_atoms, double scale = 1.0);

    CovarianceKind kind() const { return kind_; }
    int n_atoms() const { return n_atoms_; }
    Eigen::Index dim() const { return Eigen::Index(3) * n_atoms_; }
    double scale() const { return scale_; }

    Vec apply(const Vec& z) const;            // R z
    Vec solve(const Vec& x) const;            // R^{-1} x
    Vec apply_transpose(const Vec& v) const;  // R^T v

    // Spectral norm of R, estimated by power iteration on R^T R to a
    // relative tolerance of 1e-6. Cached after the first call.
    double operator_norm() const;

    // Inner product between the rows of R belonging to atoms a and b (for
    // one axis; the three axes are identical and independent). The row
    // norm of atom a is sqrt(atom_gram(a, a)).
    double atom_gram(int a, int b) const;

private:
    CovarianceKind kind_;
    int n_atoms_;
    double scale_;
    mutable double cached_norm_ = -1.0;
};

inline Vec whiten(const CovarianceFactor& r, const Vec& x) { return r.solve(x); }
inline Vec unwhiten(const CovarianceFactor& r, const Vec& z) { return r.apply(z); }

// Variance-preserving diffusion schedule. beta(t) ramps linearly from
// beta_min to beta_max over t = 1..n_steps; the signal retention is
// alpha_bar(t) = exp(-sum_{s<=t} beta(s)) with alpha_bar(0) = 1, and the
// marginal corruption level is tau(t) = sqrt(1 - alpha_bar(t)).
// step_alpha / step_tau describe the forward transition from t-1 to t:
//   z_t = step_alpha(t) z_{t-1} + step_tau(t) xi,
// and satisfy alpha_bar(t) = step_alpha(t)^2 alpha_bar(t-1) and
// tau(t)^2 = step_alpha(t)^2 tau(t-1)^2 + step_tau(t)^2.
class NoiseSchedule {
public:
    NoiseSchedule(int n_steps, double beta_min = 1e-4, double beta_max = 0.05);

    int n_steps() const { return n_steps_; }
    double beta(int t) const;        // t in [1, n_steps]
    double alpha_bar(int t) const;   // t in [0, n_steps]
    double tau(int t) const;         // sqrt(1 - alpha_bar(t))
    double step_alpha(int t) const;  // t in [1, n_steps]
    double step_tau(int t) const;

private:
    void check_t(int t, int lo) const;
    int n_steps_;
    std::vector<double> betas_;      // betas_[t-1] = beta(t)
    std::vector<double> alpha_bar_;  // alpha_bar_[t], t in [0, n_steps]
};

// Posterior-mean denoiser in whitened coordinates: maps a corrupted latent
// z_t at diffusion time t to an estimate of the clean latent z_0.
class DenoiserInterface {
public:
    virtual ~DenoiserInterface() = default;
    virtual Vec denoise(const Vec& z_t, int t) const = 0;
    virtual Eigen::Index dim() const = 0;
};

// Isotropic Gaussian mixture over clean whitened latents: components with
// means `means[c]`, shared standard deviation `component_std`, and mixing
// weights `weights[c]` (positive, summing to 1).
struct GaussianMixturePrior {
    std::vector<Vec> means;
    std::vector<double> weights;
    double component_std = 0.0;

    Eigen::Index dim() const { return means.empty() ? 0 : means.front().size(); }
    void validate() const;
};

// Exact posterior mean E[z_0 | z_t] under the mixture prior and the
// schedule's marginal z_t = sqrt(alpha_bar(t)) z_0 + tau(t) xi. Component
// responsibilities are computed with log-sum-exp; each conditional mean is
// the standard Gaussian posterior mean. t in [0, n_steps].
Vec mixture_denoise(const Vec& z_t, int t, const GaussianMixturePrior& prior,
                    const NoiseSchedule& sched);

// Posterior component responsibilities at (z_t, t); exposed for testing
// against quadrature.
std::vector<double> mixture_responsibilities(const Vec& z_t, int t,
                                             const GaussianMixturePrior& prior,
                                             const NoiseSchedule& sched);

class MixtureDenoiser final : public DenoiserInterface {
public:
    MixtureDenoiser(GaussianMixturePrior prior, const NoiseSchedule& sched)
        : prior_(std::move(prior)), sched_(&sched) {
        prior_.validate();
    }
    Vec denoise(const Vec& z_t, int t) const override {
        return mixture_denoise(z_t, t, prior_, *sched_);
    }
    Eigen::Index dim() const override { return prior_.dim(); }
    const GaussianMixturePrior& prior() const { return prior_; }

private:
    GaussianMixturePrior prior_;
    const NoiseSchedule* sched_;
};

// Knobs of the hybrid reverse-time update used for unconditional sampling:
// the score term is weighted by (lambda(t) + lambda0 * psi / 2) and the
// injected noise by sqrt(beta(t) * (1 + psi)) * noise_scale. Defaults
// reduce to the plain reverse diffusion; noise_scale = 0 makes a step
// deterministic (used in tests).
struct LangevinParams {
    double lambda0 = 1.0;
    double psi = 0.0;
    std::vector<double> lambda_table;  // per-step lambda(t), index t-1; empty = all 1
    double noise_scale = 1.0;

    double lambda(int t) const {
        if (lambda_table.empty()) return 1.0;
        return lambda_table.at(size_t(t) - 1);
    }
};

// One Euler step of the reverse-time hybrid update from t to t-1, in
// whitened coordinates. The score is recovered from the denoiser via
// s(z_t, t) = (sqrt(alpha_bar(t)) zhat_0 - z_t) / tau(t)^2.
Vec langevin_reverse_step(const Vec& z_t, int t, const DenoiserInterface& denoiser,
                          const NoiseSchedule& sched, const LangevinParams& params,
                          Rng& rng);

// Runs the full reverse pass from z_T ~ N(0, I) to z_0. Deterministic in
// `seed`. Throws DivergenceError if the state becomes non-finite.
Vec sample_unconditional_latent(const DenoiserInterface& denoiser,
                                const NoiseSchedule& sched,
                                const LangevinParams& params, std::uint64_t seed);

// Same, mapped through R into a backbone (requires R.n_atoms() divisible
// by 4).
Backbone sample_unconditional(const DenoiserInterface& denoiser,
                              const NoiseSchedule& sched, const CovarianceFactor& r,
                              const LangevinParams& params, std::uint64_t seed);

} // namespace adampnp

#include "adampnp/prior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace adampnp {

CovarianceFactor::CovarianceFactor(CovarianceKind kind, int n_atoms, double scale)
    : kind_(kind), n_atoms_(n_atoms), scale_(scale) {
    if (n_atoms <= 0) throw ConfigError("covariance factor needs at least one atom");
    if (!(scale > 0.0)) throw ConfigError("covariance scale must be positive");
}

Vec CovarianceFactor::apply(const Vec& z) const {
    if (z.size() != dim())
        throw DimensionError("covariance apply: size " + std::to_string(z.size()) +
                             ", expected " + std::to_string(dim()));
    if (kind_ == CovarianceKind::identity) return scale_ * z;
    // Cumulative sum over atoms, separately per axis.
    double s = scale_ / std::sqrt(double(n_atoms_));
    Vec x(dim());
    for (int axis = 0; axis < 3; ++axis) {
        double run = 0.0;
        for (int a = 0; a < n_atoms_; ++a) {
            run += z[3 * a + axis];
            x[3 * a + axis] = s * run;
        }
    }
    return x;
}

Vec CovarianceFactor::solve(const Vec& x) const {
    if (x.size() != dim())
        throw DimensionError("covariance solve: size " + std::to_string(x.size()) +
                             ", expected " + std::to_string(dim()));
    if (kind_ == CovarianceKind::identity) return x / scale_;
    // Inverse of the cumulative sum: scaled first differences.
    double s = scale_ / std::sqrt(double(n_atoms_));
    Vec z(dim());
    for (int axis = 0; axis < 3; ++axis) {
        for (int a = n_atoms_ - 1; a >= 1; --a)
            z[3 * a + axis] = (x[3 * a + axis] - x[3 * (a - 1) + axis]) / s;
        z[axis] = x[axis] / s;
    }
    return z;
}

Vec CovarianceFactor::apply_transpose(const Vec& v) const {
    if (v.size() != dim())
        throw DimensionError("covariance apply_transpose: size " + std::to_string(v.size()) +
                             ", expected " + std::to_string(dim()));
    if (kind_ == CovarianceKind::identity) return scale_ * v;
    // Transpose of cumsum is the reverse cumulative sum.
    double s = scale_ / std::sqrt(double(n_atoms_));
    Vec z(dim());
    for (int axis = 0; axis < 3; ++axis) {
        double run = 0.0;
        for (int a = n_atoms_ - 1; a >= 0; --a) {
            run += v[3 * a + axis];
            z[3 * a + axis] = s * run;
        }
    }
    return z;
}

double CovarianceFactor::operator_norm() const {
    if (cached_norm_ > 0.0) return cached_norm_;
    if (kind_ == CovarianceKind::identity) {
        cached_norm_ = scale_;
        return cached_norm_;
    }
    // Power iteration on R^T R with a fixed-seed start vector.
    Rng rng(0x9d2c5680u);
    Vec v = rng.gaussian_vec(dim());
    v /= v.norm();
    double prev = 0.0;
    for (int it = 0; it < 10000; ++it) {
        Vec w = apply_transpose(apply(v));
        double lambda = w.norm();
        if (lambda == 0.0) {
            cached_norm_ = 0.0;
            return 0.0;
        }
        v = w / lambda;
        double sigma = std::sqrt(lambda);
        if (it > 0 && std::abs(sigma - prev) <= 1e-6 * sigma) {
            cached_norm_ = sigma;
            return sigma;
        }
        prev = sigma;
    }
    cached_norm_ = prev;
    return prev;
}

double CovarianceFactor::atom_gram(int a, int b) const {
    if (a < 0 || a >= n_atoms_ || b < 0 || b >= n_atoms_)
        throw DimensionError("atom index out of range");
    if (kind_ == CovarianceKind::identity)
        return a == b ? scale_ * scale_ : 0.0;
    // Chain rows are running sums: row a has entries s on atoms 0..a, so
    // the overlap of rows a and b is s^2 * (min(a, b) + 1).
    double s = scale_ / std::sqrt(double(n_atoms_));
    return s * s * double(std::min(a, b) + 1);
}

NoiseSchedule::NoiseSchedule(int n_steps, double beta_min, double beta_max)
    : n_steps_(n_steps) {
    if (n_steps < 1) throw ConfigError("schedule needs at least one step");
    if (!(beta_min > 0.0) || !(beta_max >= beta_min) || beta_max >= 1.0)
        throw ConfigError("schedule betas must satisfy 0 < beta_min <= beta_max < 1");
    betas_.resize(n_steps);
    alpha_bar_.resize(n_steps + 1);
    alpha_bar_[0] = 1.0;
    double log_ab = 0.0;
    for (int t = 1; t <= n_steps; ++t) {
        double frac = n_steps == 1 ? 0.0 : double(t - 1) / double(n_steps - 1);
        betas_[t - 1] = beta_min + frac * (beta_max - beta_min);
        log_ab -= betas_[t - 1];
        alpha_bar_[t] = std::exp(log_ab);
    }
}

void NoiseSchedule::check_t(int t, int lo) const {
    if (t < lo || t > n_steps_)
        throw std::out_of_range("schedule time " + std::to_string(t) + " outside [" +
                                std::to_string(lo) + ", " + std::to_string(n_steps_) + "]");
}

double NoiseSchedule::beta(int t) const {
    check_t(t, 1);
    return betas_[t - 1];
}

double NoiseSchedule::alpha_bar(int t) const {
    check_t(t, 0);
    return alpha_bar_[t];
}

double NoiseSchedule::tau(int t) const {
    check_t(t, 0);
    return std::sqrt(std::max(0.0, 1.0 - alpha_bar_[t]));
}

double NoiseSchedule::step_alpha(int t) const {
    check_t(t, 1);
    return std::sqrt(alpha_bar_[t] / alpha_bar_[t - 1]);
}

double NoiseSchedule::step_tau(int t) const {
    check_t(t, 1);
    return std::sqrt(std::max(0.0, 1.0 - alpha_bar_[t] / alpha_bar_[t - 1]));
}

void GaussianMixturePrior::validate() const {
    if (means.empty()) throw ConfigError("mixture prior needs at least one component");
    if (weights.size() != means.size())
        throw ConfigError("mixture prior: weight count does not match component count");
    Eigen::Index d = means.front().size();
    double sum = 0.0;
    for (size_t c = 0; c < means.size(); ++c) {
        if (means[c].size() != d) throw DimensionError("mixture component dimensions differ");
        if (!(weights[c] > 0.0)) throw ConfigError("mixture weights must be positive");
        sum += weights[c];
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("mixture weights must sum to 1");
    if (component_std < 0.0) throw ConfigError("component_std must be non-negative");
}

std::vector<double> mixture_responsibilities(const Vec& z_t, int t,
                                             const GaussianMixturePrior& prior,
                                             const NoiseSchedule& sched) {
    prior.validate();
    if (z_t.size() != prior.dim())
        throw DimensionError("mixture denoise: latent size " + std::to_string(z_t.size()) +
                             ", expected " + std::to_string(prior.dim()));
    double ab = sched.alpha_bar(t);
    double sqrt_ab = std::sqrt(ab);
    double s2 = prior.component_std * prior.component_std;
    // Marginal variance of z_t given the component: ab * s^2 + tau^2.
    double denom = std::max(ab * s2 + sched.tau(t) * sched.tau(t),
                            std::numeric_limits<double>::min());

    size_t n = prior.means.size();
    std::vector<double> logp(n);
    double max_logp = -std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < n; ++c) {
        double d2 = (z_t - sqrt_ab * prior.means[c]).squaredNorm();
        logp[c] = std::log(prior.weights[c]) - 0.5 * d2 / denom;
        max_logp = std::max(max_logp, logp[c]);
    }
    double z = 0.0;
    for (size_t c = 0; c < n; ++c) {
        logp[c] = std::exp(logp[c] - max_logp);
        z += logp[c];
    }
    for (size_t c = 0; c < n; ++c) logp[c] /= z;
    return logp;
}

Vec mixture_denoise(const Vec& z_t, int t, const GaussianMixturePrior& prior,
                    const NoiseSchedule& sched) {
    std::vector<double> r = mixture_responsibilities(z_t, t, prior, sched);
    double ab = sched.alpha_bar(t);
    double sqrt_ab = std::sqrt(ab);
    double s2 = prior.component_std * prior.component_std;
    double denom = ab * s2 + sched.tau(t) * sched.tau(t);
    // Per-component posterior mean: mu + gain * (z_t - sqrt(ab) mu). When
    // both the component variance and tau vanish the posterior collapses
    // onto the mean itself.
    double gain = denom > 0.0 ? sqrt_ab * s2 / denom : 0.0;

    Vec out = Vec::Zero(z_t.size());
    for (size_t c = 0; c < prior.means.size(); ++c) {
        const Vec& mu = prior.means[c];
        out += r[c] * (mu + gain * (z_t - sqrt_ab * mu));
    }
    return out;
}

Vec langevin_reverse_step(const Vec& z_t, int t, const DenoiserInterface& denoiser,
                          const NoiseSchedule& sched, const LangevinParams& params,
                          Rng& rng) {
    if (t < 1 || t > sched.n_steps())
        throw std::out_of_range("reverse step time out of range");
    double beta = sched.beta(t);
    double tau2 = sched.tau(t) * sched.tau(t);
    if (tau2 <= 0.0) throw std::logic_error("reverse step at zero corruption level");
    Vec zhat0 = denoiser.denoise(z_t, t);
    Vec score = (std::sqrt(sched.alpha_bar(t)) * zhat0 - z_t) / tau2;
    double score_weight = params.lambda(t) + 0.5 * params.lambda0 * params.psi;
    Vec z = z_t + beta * (0.5 * z_t + score_weight * score);
    if (params.noise_scale != 0.0) {
        double amp = std::sqrt(beta * (1.0 + params.psi)) * params.noise_scale;
        z += amp * rng.gaussian_vec(z_t.size());
    }
    return z;
}

Vec sample_unconditional_latent(const DenoiserInterface& denoiser,
                                const NoiseSchedule& sched,
                                const LangevinParams& params, std::uint64_t seed) {
    Rng rng(seed);
    Vec z = rng.gaussian_vec(denoiser.dim());
    for (int t = sched.n_steps(); t >= 1; --t) {
        z = langevin_reverse_step(z, t, denoiser, sched, params, rng);
        if (!z.allFinite())
            throw DivergenceError("unconditional sampling produced non-finite state", t);
    }
    return z;
}

Backbone sample_unconditional(const DenoiserInterface& denoiser,
                              const NoiseSchedule& sched, const CovarianceFactor& r,
                              const LangevinParams& params, std::uint64_t seed) {
    if (r.dim() != denoiser.dim())
        throw DimensionError("covariance factor and denoiser dimensions differ");
    if (r.n_atoms() % Backbone::kAtomsPerResidue != 0)
        throw DimensionError("atom count is not a whole number of residues");
    Vec z0 = sample_unconditional_latent(denoiser, sched, params, seed);
    return backbone_from_coords(r.n_atoms() / Backbone::kAtomsPerResidue, r.apply(z0));
}

} // namespace adampnp

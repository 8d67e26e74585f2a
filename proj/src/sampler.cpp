#include "adampnp/sampler.hpp"

#include "adampnp/detail/format.hpp"

#include <cmath>
#include <ostream>

namespace adampnp {

void GuidanceConfig::validate() const {
    if (!(eta > 0.0)) throw ConfigError("eta must be positive");
    if (rho < 0.0 || rho >= 1.0) throw ConfigError("rho must lie in [0, 1)");
    if (ascent_sign != 1 && ascent_sign != -1)
        throw ConfigError("ascent_sign must be +1 or -1");
    if (noise_scale < 0.0) throw ConfigError("noise_scale must be non-negative");
    adaptive_params.validate();
    for (double s : fixed_sigmas)
        if (!(s > 0.0)) throw ConfigError("fixed sigmas must be positive");
    for (double s : sensitivities)
        if (!(s >= 0.0)) throw ConfigError("sensitivities must be non-negative");
}

Vec modality_gradient(const Vec& z0, const Measurement& m, double sigma_sq,
                      const CovarianceFactor& r) {
    m.validate();
    if (!(sigma_sq > 0.0)) throw ConfigError("sigma_sq must be positive");
    if (z0.size() != r.dim()) throw DimensionError("latent size does not match covariance");
    if (r.n_atoms() != m.model->n_atoms())
        throw DimensionError("covariance and forward model disagree on atom count");
    Vec x = r.apply(z0);
    Vec residual = m.y - m.model->apply(x);
    return r.apply_transpose(m.model->vjp(x, residual)) / sigma_sq;
}

Vec guidance_step(Vec& v, const Vec& z0, const std::vector<Vec>& gradients,
                  const std::vector<double>& weights, const GuidanceConfig& cfg,
                  bool* clipped, double* step_rms_out) {
    cfg.validate();
    if (gradients.size() != weights.size())
        throw DimensionError("gradient and weight counts differ");
    if (v.size() != z0.size()) throw DimensionError("momentum size does not match latent");

    Vec total = Vec::Zero(z0.size());
    for (size_t i = 0; i < gradients.size(); ++i) {
        if (gradients[i].size() != z0.size())
            throw DimensionError("gradient size does not match latent");
        total += weights[i] * gradients[i];
    }
    v = cfg.rho * v + (1.0 - cfg.rho) * total;

    Vec step = cfg.eta * v;
    double rms = std::sqrt(step.squaredNorm() / double(step.size()));
    bool did_clip = false;
    if (cfg.max_step_rms > 0.0 && rms > cfg.max_step_rms) {
        step *= cfg.max_step_rms / rms;
        rms = cfg.max_step_rms;
        did_clip = true;
    }
    if (clipped) *clipped = did_clip;
    if (step_rms_out) *step_rms_out = rms;
    return z0 - step;
}

Vec reverse_step(const Vec& zhat0, int t, const NoiseSchedule& sched, Rng& rng,
                 double noise_scale) {
    if (t < 1 || t > sched.n_steps())
        throw std::out_of_range("reverse step time out of range");
    double a = std::sqrt(sched.alpha_bar(t - 1));
    double tau = sched.tau(t - 1);
    Vec z = a * zhat0;
    if (tau > 0.0 && noise_scale != 0.0)
        z += tau * noise_scale * rng.gaussian_vec(zhat0.size());
    return z;
}

namespace {

void check_finite(const Vec& v, const char* what, int t) {
    if (!v.allFinite())
        throw DivergenceError(std::string(what) + " became non-finite", t);
}

} // namespace

SamplerResult run_adam_pnp(const std::vector<Measurement>& measurements,
                           const DenoiserInterface& denoiser, const NoiseSchedule& sched,
                           const CovarianceFactor& r, const GuidanceConfig& cfg,
                           std::uint64_t seed, bool record_trace,
                           const Backbone* reference) {
    cfg.validate();
    if (measurements.empty())
        throw ConfigError("guided sampling needs at least one measurement");
    size_t m_count = measurements.size();
    for (const auto& m : measurements) {
        m.validate();
        if (m.model->n_atoms() != r.n_atoms())
            throw DimensionError("measurement model atom count does not match covariance");
    }
    if (denoiser.dim() != r.dim())
        throw DimensionError("denoiser dimension does not match covariance");
    if (!cfg.fixed_sigmas.empty() && cfg.fixed_sigmas.size() != m_count)
        throw ConfigError("fixed_sigmas count does not match measurement count");
    if (!cfg.sensitivities.empty() && cfg.sensitivities.size() != m_count)
        throw ConfigError("sensitivities count does not match measurement count");

    // Fixed noise levels when the estimator is off.
    std::vector<double> fixed_sq(m_count, 0.0);
    if (!cfg.adaptive) {
        for (size_t i = 0; i < m_count; ++i) {
            double s = !cfg.fixed_sigmas.empty() ? cfg.fixed_sigmas[i]
                                                 : measurements[i].true_sigma;
            if (!(s > 0.0))
                throw ConfigError("adaptive estimation is off and no positive noise level "
                                  "is available for measurement " + std::to_string(i));
            fixed_sq[i] = s * s;
        }
    }

    std::vector<double> sens(m_count, 0.0);
    for (size_t i = 0; i < m_count; ++i)
        sens[i] = !cfg.sensitivities.empty()
                      ? cfg.sensitivities[i]
                      : measurements[i].model->component_sensitivity(r);
    AdaptiveState adaptive(sens, cfg.adaptive_params);

    Rng rng(seed);
    Vec z = rng.gaussian_vec(denoiser.dim());
    Vec v = Vec::Zero(denoiser.dim());

    SamplerResult result;
    result.clipped_steps = 0;
    std::vector<double> sigma_sq(m_count, 0.0);
    std::vector<double> weights(m_count, 1.0);
    int t_total = sched.n_steps();

    for (int t = t_total; t >= 1; --t) {
        Vec z0 = denoiser.denoise(z, t);
        check_finite(z0, "denoised estimate", t);
        Vec x0 = r.apply(z0);

        std::vector<Vec> directions(m_count);
        std::vector<double> residual_rms(m_count, 0.0);
        double t_norm = double(t) / double(t_total);
        for (size_t i = 0; i < m_count; ++i) {
            Vec f = measurements[i].model->apply(x0);
            residual_rms[i] =
                std::sqrt((measurements[i].y - f).squaredNorm() / double(f.size()));
            if (cfg.adaptive) {
                double med = median_residual_variance(measurements[i].y, f,
                                                      cfg.adaptive_params.kappa);
                sigma_sq[i] = adaptive.update(int(i), med, t_norm, sched.tau(t));
            } else {
                sigma_sq[i] = fixed_sq[i];
            }
        }
        weights = cfg.adaptive ? adaptive.weights()
                               : std::vector<double>(m_count, 1.0);

        // Invariants of the weighting scheme, enforced on every step.
        double wsum = 0.0;
        for (double w : weights) wsum += w;
        if (std::abs(wsum - double(m_count)) > 1e-9)
            throw std::logic_error("modality weights do not sum to the modality count");
        if (cfg.adaptive)
            for (size_t i = 0; i < m_count; ++i)
                if (sigma_sq[i] < cfg.adaptive_params.epsilon)
                    throw std::logic_error("variance estimate fell below epsilon");

        for (size_t i = 0; i < m_count; ++i) {
            Vec g = modality_gradient(z0, measurements[i], sigma_sq[i], r);
            directions[i] = cfg.ascent_sign == 1 ? g : Vec(-g);
        }

        bool clipped = false;
        double step_rms = 0.0;
        Vec zhat0 = guidance_step(v, z0, directions, weights, cfg, &clipped, &step_rms);
        check_finite(zhat0, "guided estimate", t);
        if (clipped) ++result.clipped_steps;

        if (record_trace) {
            StepRecord rec;
            rec.t = t;
            rec.t_norm = t_norm;
            rec.sigma_hat_sq = sigma_sq;
            rec.weights = weights;
            rec.residual_rms = residual_rms;
            rec.step_rms = step_rms;
            rec.rmsd = -1.0;
            if (reference && r.n_atoms() % Backbone::kAtomsPerResidue == 0) {
                Backbone b = backbone_from_coords(r.n_atoms() / Backbone::kAtomsPerResidue,
                                                  r.apply(zhat0));
                if (b.n_residues == reference->n_residues)
                    rec.rmsd = calpha_rmsd(b, *reference);
            }
            result.trace.push_back(std::move(rec));
        }

        z = reverse_step(zhat0, t, sched, rng, cfg.noise_scale);
        check_finite(z, "diffusion state", t);
    }

    result.z0 = z;
    result.x = r.apply(z);
    result.sigma_hat_sq = sigma_sq;
    result.weights = weights;
    result.data_misfit = 0.0;
    result.residual_sq.resize(m_count);
    for (size_t i = 0; i < m_count; ++i) {
        Vec f = measurements[i].model->apply(result.x);
        result.residual_sq[i] = (measurements[i].y - f).squaredNorm();
        result.data_misfit += 0.5 * weights[i] / sigma_sq[i] * result.residual_sq[i];
    }
    return result;
}

void write_trace_csv(const std::vector<StepRecord>& trace,
                     const std::vector<std::string>& modality_labels, std::ostream& out) {
    using detail::format_double;
    out << "step,t_norm";
    for (const auto& l : modality_labels)
        out << ",sigma_hat_sq_" << l << ",weight_" << l << ",residual_rms_" << l;
    out << ",step_rms,rmsd\n";
    for (const auto& rec : trace) {
        out << rec.t << "," << format_double(rec.t_norm);
        for (size_t i = 0; i < modality_labels.size(); ++i)
            out << "," << format_double(rec.sigma_hat_sq.at(i)) << ","
                << format_double(rec.weights.at(i)) << ","
                << format_double(rec.residual_rms.at(i));
        out << "," << format_double(rec.step_rms) << "," << format_double(rec.rmsd) << "\n";
    }
}

} // namespace adampnp

#pragma once

#include "adampnp/adaptive.hpp"
#include "adampnp/forward_models.hpp"
#include "adampnp/prior.hpp"

#include <optional>
#include <string>
#include <vector>

namespace adampnp {

// Configuration of the measurement-guided sampler.
//   eta:             step size applied to the momentum-filtered gradient.
//   rho:             momentum decay.
//   adaptive:        when true, noise levels are estimated online; when
//                    false, fixed_sigmas (or the measurements' true noise
//                    levels) are used and all weights are 1.
//   sensitivities:   per-modality scales for the estimator's bias
//                    correction; empty = use each model's
//                    component_sensitivity.
//   max_step_rms:    safety clip on the guidance step eta * v, expressed
//                    as a per-coordinate RMS in latent units; <= 0 turns
//                    the clip off.
//   ascent_sign:     +1 moves z along the raw likelihood-ascent update
//                    rule (which diverges and exists only for comparison);
//                    -1 (default) applies the gradient as a descent on the
//                    negative log-likelihood so guidance pulls the sample
//                    toward the data.
struct GuidanceConfig {
    double eta = 0.1;
    double rho = 0.9;
    bool adaptive = true;
    std::vector<double> fixed_sigmas;
    std::vector<double> sensitivities;
    AdaptiveParams adaptive_params;
    double max_step_rms = 1.0;
    int ascent_sign = -1;
    double noise_scale = 1.0;  // scales the re-corruption noise; 0 = deterministic

    void validate() const;
};

// Likelihood gradient of one modality with respect to the whitened clean
// estimate, in the ascent direction:
//   (1 / sigma_sq) R^T J(R z0)^T (y - F(R z0)).
Vec modality_gradient(const Vec& z0, const Measurement& m, double sigma_sq,
                      const CovarianceFactor& r);

// Momentum-filtered guidance update (in place on `v`): accumulates the
// weighted total gradient into the velocity and returns the corrected
// clean estimate zhat0 = z0 - eta * v. `gradients` must already point in
// the intended update direction.
Vec guidance_step(Vec& v, const Vec& z0, const std::vector<Vec>& gradients,
                  const std::vector<double>& weights, const GuidanceConfig& cfg,
                  bool* clipped = nullptr, double* step_rms_out = nullptr);

// Re-corrupts the corrected clean estimate to diffusion time t - 1:
//   z_{t-1} = sqrt(alpha_bar(t-1)) zhat0 + tau(t-1) * noise_scale * xi.
// At t = 1 this is exactly zhat0 (alpha_bar(0) = 1, tau(0) = 0).
Vec reverse_step(const Vec& zhat0, int t, const NoiseSchedule& sched, Rng& rng,
                 double noise_scale = 1.0);

// Everything recorded about one diffusion step when tracing is on.
struct StepRecord {
    int t;
    double t_norm;
    std::vector<double> sigma_hat_sq;    // per modality
    std::vector<double> weights;         // per modality
    std::vector<double> residual_rms;    // per modality, ||y - F(R z0)|| / sqrt(dim)
    double step_rms;                     // RMS of the applied guidance step
    double rmsd;                         // CA-RMSD to reference, -1 if unknown
};

struct SamplerResult {
    Vec z0;                      // final whitened latent
    Vec x;                       // final coordinates R z0
    std::vector<double> sigma_hat_sq;  // final per-modality estimates
    std::vector<double> weights;       // final per-modality weights
    std::vector<double> residual_sq;   // per modality, ||y_i - F_i(x)||^2 at the final x
    double data_misfit;          // sum_i w_i / sigma_hat_sq_i * ||y_i - F_i(x)||^2 / 2
    int clipped_steps = 0;       // how often the safety clip engaged
    std::vector<StepRecord> trace;     // empty unless tracing was requested
};

// Mutable state of one guided trajectory; advanced by run_adam_pnp but
// exposed so callers can drive steps manually.
struct SamplerState {
    Vec z;   // current latent z_t
    Vec v;   // momentum accumulator
    int t;   // current diffusion time
};

// Runs the full guided reverse pass. `reference` (optional) is only used
// to fill the RMSD column of the trace. Throws DivergenceError when the
// state turns non-finite, ConfigError on inconsistent setup.
SamplerResult run_adam_pnp(const std::vector<Measurement>& measurements,
                           const DenoiserInterface& denoiser, const NoiseSchedule& sched,
                           const CovarianceFactor& r, const GuidanceConfig& cfg,
                           std::uint64_t seed, bool record_trace = false,
                           const Backbone* reference = nullptr);

void write_trace_csv(const std::vector<StepRecord>& trace,
                     const std::vector<std::string>& modality_labels, std::ostream& out);

} // namespace adampnp

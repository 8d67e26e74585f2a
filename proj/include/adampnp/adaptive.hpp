#pragma once

#include "adampnp/types.hpp"

#include <vector>

namespace adampnp {

// Knobs of the online noise estimator.
//   kappa:     bias correction of the median of squared residuals; the
//              median of sigma^2 chi^2_1 is about 0.4549 sigma^2, so the
//              default rescales by 1/0.4549.
//   gamma:     strength of the model-error correction subtracted from the
//              raw estimate (scaled by (1 - t/T) (L tau_t)^2).
//   epsilon:   floor for variance estimates and weight denominators.
//   ema_decay: exponential smoothing of the per-step estimates across the
//              trajectory (first update initializes the average).
struct AdaptiveParams {
    double kappa = 1.0 / 0.4549;
    double gamma = 0.5;
    double epsilon = 1e-6;
    double ema_decay = 0.9;

    void validate() const;
};

// Robust per-step variance estimate: kappa times the median of the
// component-wise squared residuals (y - f)^2. Even-length inputs use the
// mean of the two middle order statistics.
double median_residual_variance(const Vec& y, const Vec& f, double kappa);

// One bias-corrected estimate before smoothing: subtracts the expected
// denoiser-error inflation gamma (1 - t_norm) (lipschitz * tau_t)^2 from
// the raw median estimate and floors at epsilon.
double bias_corrected_variance(double median_estimate, double t_norm, double tau_t,
                               double lipschitz, const AdaptiveParams& p);

// Precision weights w_i proportional to 1 / (sigma_hat_sq_i + epsilon),
// normalized so they sum to the number of modalities.
std::vector<double> dynamic_weights(const std::vector<double>& sigma_hat_sq, double epsilon);

// Per-modality noise tracker carried through a sampling trajectory. Holds
// one EMA-smoothed variance estimate per modality plus the sensitivity
// scale used in the bias correction.
class AdaptiveState {
public:
    AdaptiveState(std::vector<double> sensitivities, AdaptiveParams params);

    int n_modalities() const { return int(sens_.size()); }
    const AdaptiveParams& params() const { return params_; }
    double sensitivity(int i) const { return sens_.at(i); }

    // Feeds one raw median estimate for modality i at diffusion time
    // t_norm = t / T with marginal noise tau_t. Returns the smoothed
    // variance estimate (always >= epsilon).
    double update(int i, double median_estimate, double t_norm, double tau_t);

    bool initialized(int i) const { return init_.at(i); }
    double sigma_hat_sq(int i) const;

    // Current precision weights; requires every modality to have been
    // updated at least once.
    std::vector<double> weights() const;

private:
    std::vector<double> sens_;
    std::vector<double> sigma_hat_sq_;
    std::vector<bool> init_;
    AdaptiveParams params_;
};

} // namespace adampnp

#include "adampnp/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace adampnp {

void AdaptiveParams::validate() const {
    if (!(kappa > 0.0)) throw ConfigError("kappa must be positive");
    if (gamma < 0.0) throw ConfigError("gamma must be non-negative");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (ema_decay < 0.0 || ema_decay >= 1.0)
        throw ConfigError("ema_decay must lie in [0, 1)");
}

double median_residual_variance(const Vec& y, const Vec& f, double kappa) {
    if (y.size() != f.size()) throw DimensionError("residual operand sizes differ");
    if (y.size() == 0) throw DimensionError("cannot take a median of zero residuals");
    if (!(kappa > 0.0)) throw ConfigError("kappa must be positive");
    std::vector<double> sq(size_t(y.size()));
    for (Eigen::Index k = 0; k < y.size(); ++k) {
        double r = y[k] - f[k];
        sq[size_t(k)] = r * r;
    }
    size_t n = sq.size();
    size_t mid = n / 2;
    std::nth_element(sq.begin(), sq.begin() + mid, sq.end());
    double med = sq[mid];
    if (n % 2 == 0) {
        // Lower middle: the largest element below the upper middle.
        double lower = *std::max_element(sq.begin(), sq.begin() + mid);
        med = 0.5 * (med + lower);
    }
    return kappa * med;
}

double bias_corrected_variance(double median_estimate, double t_norm, double tau_t,
                               double lipschitz, const AdaptiveParams& p) {
    p.validate();
    if (median_estimate < 0.0) throw ConfigError("median estimate must be non-negative");
    if (t_norm < 0.0 || t_norm > 1.0) throw ConfigError("t_norm must lie in [0, 1]");
    double correction = p.gamma * (1.0 - t_norm) * (lipschitz * tau_t) * (lipschitz * tau_t);
    return std::max(p.epsilon, median_estimate - correction);
}

std::vector<double> dynamic_weights(const std::vector<double>& sigma_hat_sq, double epsilon) {
    if (sigma_hat_sq.empty()) throw ConfigError("no modalities to weight");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    std::vector<double> prec(sigma_hat_sq.size());
    double total = 0.0;
    for (size_t i = 0; i < sigma_hat_sq.size(); ++i) {
        if (sigma_hat_sq[i] < 0.0) throw ConfigError("negative variance estimate");
        prec[i] = 1.0 / (sigma_hat_sq[i] + epsilon);
        total += prec[i];
    }
    double m = double(sigma_hat_sq.size());
    for (double& w : prec) w *= m / total;
    return prec;
}

AdaptiveState::AdaptiveState(std::vector<double> sensitivities, AdaptiveParams params)
    : sens_(std::move(sensitivities)),
      sigma_hat_sq_(sens_.size(), 0.0),
      init_(sens_.size(), false),
      params_(params) {
    params_.validate();
    if (sens_.empty()) throw ConfigError("adaptive state needs at least one modality");
    for (double s : sens_)
        if (!(s >= 0.0)) throw ConfigError("sensitivities must be non-negative");
}

double AdaptiveState::update(int i, double median_estimate, double t_norm, double tau_t) {
    double raw = bias_corrected_variance(median_estimate, t_norm, tau_t,
                                         sens_.at(size_t(i)), params_);
    if (!init_[size_t(i)]) {
        sigma_hat_sq_[size_t(i)] = raw;
        init_[size_t(i)] = true;
    } else {
        sigma_hat_sq_[size_t(i)] =
            params_.ema_decay * sigma_hat_sq_[size_t(i)] + (1.0 - params_.ema_decay) * raw;
    }
    return sigma_hat_sq_[size_t(i)];
}

double AdaptiveState::sigma_hat_sq(int i) const {
    if (!init_.at(size_t(i)))
        throw std::logic_error("modality " + std::to_string(i) + " has no estimate yet");
    return sigma_hat_sq_[size_t(i)];
}

std::vector<double> AdaptiveState::weights() const {
    std::vector<double> est(sens_.size());
    for (size_t i = 0; i < sens_.size(); ++i) est[i] = sigma_hat_sq(int(i));
    return dynamic_weights(est, params_.epsilon);
}

} // namespace adampnp

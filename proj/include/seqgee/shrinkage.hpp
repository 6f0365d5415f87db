#pragma once

#include "seqgee/model.hpp"

#include <vector>

namespace seqgee {

/// Tuning constants of the adaptive shrinkage estimate. The constructor rejects
/// theta outside (1/2, 1/2 + gamma*delta), the range in which the scaling
/// kappa = L^{-theta} satisfies both rate conditions.
class ShrinkConfig {
public:
    ShrinkConfig() = default;
    ShrinkConfig(double gamma, double delta, double theta, double epsilon = 1.0, double rate_alpha = 0.05);

    double gamma() const { return gamma_; }
    double delta() const { return delta_; }
    double theta() const { return theta_; }
    double epsilon() const { return epsilon_; }
    double rate_alpha() const { return rate_alpha_; }

    ShrinkConfig with_epsilon(double epsilon) const;

private:
    double gamma_ = 1.0;
    double delta_ = 0.45;
    double theta_ = 0.65;
    double epsilon_ = 1.0;
    double rate_alpha_ = 0.05;
};

struct AseResult {
    std::vector<int> indicators;
    Vector beta_ase;
    int p0_hat = 0;
    double l_rate = 0.0;
    double shrink_scale = 0.0;

    std::vector<Index> selected() const;
};

struct EigenRates {
    double lambda_max = 0.0;
    double lambda_min = 0.0;
};

/// Extreme eigenvalues of the stacked Gram matrix sum X_i' X_i.
EigenRates design_eigen_rates(ClusterSpan data);
EigenRates design_eigen_rates(const Matrix& gram);

/// {(lmax log lmax)^{1/2} (log log lmax)^{1/2 + rate_alpha}} / lmin.
/// The log and log-log factors are floored at 1 for small lmax.
double l_rate(double lambda_max, double lambda_min, double rate_alpha);

/// Reciprocal of l_rate. This is the quantity that grows with the sample and is
/// what the indicator statistic is driven by (see README, "Shrinkage rate").
double shrinkage_rate(double lambda_max, double lambda_min, double rate_alpha);

/// Indicator_j = 1 iff L^{1/2} kappa |b_j|^{-gamma} < epsilon, kappa = L^{-theta}.
AseResult ase(const Vector& beta_tilde, double l_rate, const ShrinkConfig& config);

/// All-ones indicators; used when shrinkage is disabled.
AseResult no_shrinkage(const Vector& beta_tilde);

}  // namespace seqgee

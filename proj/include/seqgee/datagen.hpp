#pragma once

#include "seqgee/model.hpp"
#include "seqgee/sampling.hpp"

#include <functional>
#include <string>
#include <vector>

namespace seqgee {

/// Source of independent standard normal draws; tests substitute deterministic stubs.
using NormalDraw = std::function<double()>;

NormalDraw normal_source(Rng& rng);

/// How rows of one adaptive covariate matrix relate to each other.
/// per_row: every row is its own N(mean, I) draw.
/// per_cluster: one N(mean, I) draw shared by all m rows of the cluster.
enum class CovariateLayout { per_row, per_cluster };

std::string_view to_string(CovariateLayout layout);
CovariateLayout parse_covariate_layout(std::string_view name);

/// Gaussian responses on adaptively generated covariates, y_i = X_i beta0 + e_i.
struct ContinuousScenario {
    int p = 24;
    int m = 5;
    Vector beta0;
    CorrelationKind error_structure = CorrelationKind::ar1;
    double alpha = 0.7;
    int pool_size = 1000;
    CovariateLayout layout = CovariateLayout::per_row;

    /// beta0 = (1, -1.1, 1.5, -2, 0, ..., 0) of length p (p >= 4).
    static ContinuousScenario with_zeros(int pk, CorrelationKind structure, double alpha);
    int p0() const;
};

/// Logistic marginal model with AR(1)-correlated binary responses.
struct LogisticScenario {
    int p = 15;
    int m = 3;
    Vector beta0;
    double response_alpha = 0.3;
    double covar_rho = 0.5;
    double covar_var = 0.2;
    int pool_size = 5000;

    /// beta0 = (0.6, -0.5, 0.4, 0, ..., 0) of length p (p >= 3).
    static LogisticScenario with_zeros(int pk, double response_alpha);
    int p0() const;
};

/// X_1 rows ~ N(0, I); X_n rows ~ N(mean of all earlier rows, I).
std::vector<Matrix> gen_adaptive_covariates(int n, const ContinuousScenario& scenario, const NormalDraw& draw);
std::vector<Matrix> gen_adaptive_covariates(int n, const ContinuousScenario& scenario, Rng& rng);

/// Zero-mean Gaussian vector with unit variances and the requested correlation.
Vector gen_correlated_normal_errors(CorrelationKind structure, double alpha, int m, const NormalDraw& draw);
Vector gen_correlated_normal_errors(CorrelationKind structure, double alpha, int m, Rng& rng);

ClusterObservation gen_continuous_cluster(const ContinuousScenario& scenario, const Matrix& X, Rng& rng, long id = 0);

/// Rows ~ N(0, covar_var * AR1(covar_rho)).
Matrix gen_logistic_covariates(const LogisticScenario& scenario, Rng& rng);

struct BinaryDraw {
    Vector y;
    int clamp_events = 0;
};

/// Conditional-linear AR(1) binary chain with marginals mu and lag-1 correlation alpha:
/// y_1 ~ B(mu_1), y_j | y_{j-1} ~ B(mu_j + alpha sqrt(v_j / v_{j-1}) (y_{j-1} - mu_{j-1})).
BinaryDraw gen_ar1_binary(const Vector& mu, double alpha, Rng& rng);

std::vector<ClusterObservation> gen_continuous_pool(const ContinuousScenario& scenario, Rng& rng);

struct LogisticPool {
    std::vector<ClusterObservation> clusters;
    int clamp_events = 0;
};

LogisticPool gen_logistic_pool(const LogisticScenario& scenario, Rng& rng);

/// Writes clusters in the long CSV pool layout: cluster,order,y,x1..xp.
void write_pool_csv(const std::string& path, const std::vector<ClusterObservation>& clusters);

}  // namespace seqgee

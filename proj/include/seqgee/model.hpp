#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace seqgee {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// One subject: m repeated responses and the m x p covariate matrix (row j is x_ij').
struct ClusterObservation {
    long id = 0;
    Vector y;
    Matrix X;

    Index m() const { return y.size(); }
    Index p() const { return X.cols(); }
};

using ClusterSpan = std::span<const ClusterObservation>;

/// Throws DataError unless every cluster is finite, non-empty and shares m and p.
void validate_clusters(ClusterSpan data);

enum class LinkKind { identity, logit };

struct LinkSpec {
    LinkKind kind = LinkKind::identity;

    double mean(double eta) const;
    double derivative(double eta) const;
    double variance(double mu) const;
};

enum class CorrelationKind { independence, exchangeable, ar1 };

std::string_view to_string(LinkKind kind);
std::string_view to_string(CorrelationKind kind);
LinkKind parse_link(std::string_view name);
CorrelationKind parse_correlation(std::string_view name);

struct WorkingCorrelation {
    CorrelationKind kind = CorrelationKind::independence;
    double alpha = 0.0;

    bool valid_for(Index m) const;
    /// R(alpha), m x m. Throws NumericalDomainError when alpha is outside the legal range.
    Matrix matrix(Index m) const;
    /// Projects alpha into the open legal interval for this kind and cluster size.
    static double clip(CorrelationKind kind, double alpha, Index m);
};

/// Link, working correlation and dispersion; V_i = phi A^{1/2} R A^{1/2}.
struct GeeModel {
    LinkSpec link;
    WorkingCorrelation corr;
    double phi = 1.0;
};

/// Logit means are clamped into [kMuFloor, 1 - kMuFloor].
inline constexpr double kMuFloor = 1e-10;
inline constexpr double kDerivativeFloor = 1e-10;

struct MeanDerivative {
    Vector mu;
    Vector a;  // diagonal of A
};

MeanDerivative mean_and_derivative(const LinkSpec& link, const Matrix& X, const Vector& beta);

Vector score(ClusterSpan data, const Vector& beta, const GeeModel& model);

struct InformationMatrices {
    Matrix H;
    Matrix M;
};

InformationMatrices information_matrices(ClusterSpan data, const Vector& beta, const GeeModel& model);

/// Moment matrix of standardized residuals, (1/n) sum A^{-1/2} e e' A^{-1/2}.
/// Derivatives below kDerivativeFloor are clamped; the count is added to *clamped.
Matrix rbar(ClusterSpan data, const Vector& beta, const LinkSpec& link, std::size_t* clamped = nullptr);

/// sum X' A^{1/2} Rbar^{-1} A^{1/2} X. Rbar is ridge-regularized when badly conditioned.
Matrix g_matrix(ClusterSpan data, const Vector& beta, const LinkSpec& link, const Matrix& rbar);

/// Inverse of Rbar after the conditioning guard used by g_matrix.
Matrix regularized_rbar_inverse(const Matrix& rbar);

struct NuisanceEstimate {
    double alpha = 0.0;
    double phi = 1.0;
};

NuisanceEstimate estimate_alpha(ClusterSpan data, const Vector& beta, const LinkSpec& link, CorrelationKind kind);

struct FitOptions {
    double tol = 1e-8;
    int max_iter = 50;
    bool fix_dispersion = false;
};

struct GeeFit {
    Vector beta;
    CorrelationKind kind = CorrelationKind::independence;
    double alpha_hat = 0.0;
    double phi_hat = 1.0;  // dispersion folded into V (1 when fixed)
    Matrix H;
    Matrix M;
    Matrix G;  // empty when Rbar cannot be regularized
    Matrix Rbar;
    bool converged = false;
    int iterations = 0;
    double score_norm = 0.0;
    std::vector<std::string> warnings;

    GeeModel model(LinkSpec link) const { return {link, {kind, alpha_hat}, phi_hat}; }
};

/// Zeros for logit, stacked least squares for identity.
Vector initial_beta(ClusterSpan data, const LinkSpec& link);

GeeFit fit_mqle(ClusterSpan data, const LinkSpec& link, CorrelationKind kind, const Vector& beta_init,
                const FitOptions& options = {});

double qic(const GeeFit& fit, ClusterSpan data, const LinkSpec& link);

/// Stacked Gram matrix sum X_i' X_i.
Matrix design_gram(ClusterSpan data);

}  // namespace seqgee

#include "seqgee/shrinkage.hpp"

#include "seqgee/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace seqgee {

ShrinkConfig::ShrinkConfig(double gamma, double delta, double theta, double epsilon, double rate_alpha)
    : gamma_(gamma), delta_(delta), theta_(theta), epsilon_(epsilon), rate_alpha_(rate_alpha)
{
    std::ostringstream os;
    if (!(gamma > 0.0)) {
        os << "gamma must be positive (got " << gamma << ")";
    } else if (!(delta > 0.0 && delta < 0.5)) {
        os << "delta must lie in (0, 1/2) (got " << delta << ")";
    } else if (!(theta > 0.5 && theta < 0.5 + gamma * delta)) {
        os << "theta must lie in (1/2, " << 0.5 + gamma * delta << ") (got " << theta << ")";
    } else if (!(epsilon > 0.0)) {
        os << "epsilon must be positive (got " << epsilon << ")";
    } else if (!(rate_alpha > 0.0)) {
        os << "rate_alpha must be positive (got " << rate_alpha << ")";
    } else {
        return;
    }
    throw ConfigError(os.str());
}

ShrinkConfig ShrinkConfig::with_epsilon(double epsilon) const
{
    return ShrinkConfig(gamma_, delta_, theta_, epsilon, rate_alpha_);
}

std::vector<Index> AseResult::selected() const
{
    std::vector<Index> out;
    for (std::size_t j = 0; j < indicators.size(); ++j) {
        if (indicators[j] != 0) {
            out.push_back(static_cast<Index>(j));
        }
    }
    return out;
}

EigenRates design_eigen_rates(const Matrix& gram)
{
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
    // Round-off can push a zero eigenvalue slightly negative.
    return {std::max(es.eigenvalues().maxCoeff(), 0.0), std::max(es.eigenvalues().minCoeff(), 0.0)};
}

EigenRates design_eigen_rates(ClusterSpan data) { return design_eigen_rates(design_gram(data)); }

double l_rate(double lambda_max, double lambda_min, double rate_alpha)
{
    if (!(lambda_min > 0.0)) {
        throw RankDeficiencyError("minimum design eigenvalue is zero; recruit more data before shrinking");
    }
    const double log_term = std::max(std::log(lambda_max), 1.0);
    const double loglog_term = lambda_max > std::exp(1.0) ? std::max(std::log(std::log(lambda_max)), 1.0) : 1.0;
    return std::sqrt(lambda_max * log_term) * std::pow(loglog_term, 0.5 + rate_alpha) / lambda_min;
}

double shrinkage_rate(double lambda_max, double lambda_min, double rate_alpha)
{
    return 1.0 / l_rate(lambda_max, lambda_min, rate_alpha);
}

AseResult ase(const Vector& beta_tilde, double l_rate, const ShrinkConfig& config)
{
    if (!(l_rate > 0.0) || !std::isfinite(l_rate)) {
        throw NumericalDomainError("ase: rate must be positive and finite");
    }
    AseResult out;
    out.l_rate = l_rate;
    out.shrink_scale = std::pow(l_rate, -config.theta());
    const double scale = std::sqrt(l_rate) * out.shrink_scale;
    const Index p = beta_tilde.size();
    out.indicators.assign(static_cast<std::size_t>(p), 0);
    out.beta_ase = Vector::Zero(p);
    for (Index j = 0; j < p; ++j) {
        const double b = std::abs(beta_tilde(j));
        if (b == 0.0) {
            continue;
        }
        const double statistic = scale * std::pow(b, -config.gamma());
        if (statistic < config.epsilon()) {
            out.indicators[static_cast<std::size_t>(j)] = 1;
            out.beta_ase(j) = beta_tilde(j);
            ++out.p0_hat;
        }
    }
    return out;
}

AseResult no_shrinkage(const Vector& beta_tilde)
{
    AseResult out;
    out.indicators.assign(static_cast<std::size_t>(beta_tilde.size()), 1);
    out.beta_ase = beta_tilde;
    out.p0_hat = static_cast<int>(beta_tilde.size());
    out.l_rate = std::numeric_limits<double>::quiet_NaN();
    out.shrink_scale = std::numeric_limits<double>::quiet_NaN();
    return out;
}

}  // namespace seqgee

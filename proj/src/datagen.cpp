#include "seqgee/datagen.hpp"

#include "seqgee/errors.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>

namespace seqgee {

NormalDraw normal_source(Rng& rng)
{
    return [&rng, dist = std::normal_distribution<double>(0.0, 1.0)]() mutable { return dist(rng); };
}

std::string_view to_string(CovariateLayout layout)
{
    return layout == CovariateLayout::per_row ? "per_row" : "per_cluster";
}

CovariateLayout parse_covariate_layout(std::string_view name)
{
    if (name == "per_row" || name == "row") {
        return CovariateLayout::per_row;
    }
    if (name == "per_cluster" || name == "cluster") {
        return CovariateLayout::per_cluster;
    }
    throw ConfigError("unknown covariate layout '" + std::string(name) + "'");
}

ContinuousScenario ContinuousScenario::with_zeros(int pk, CorrelationKind structure, double alpha)
{
    if (pk < 0) {
        throw ConfigError("number of zero coefficients must be non-negative");
    }
    ContinuousScenario s;
    s.p = 4 + pk;
    s.beta0 = Vector::Zero(s.p);
    s.beta0.head(4) << 1.0, -1.1, 1.5, -2.0;
    s.error_structure = structure;
    s.alpha = alpha;
    return s;
}

int ContinuousScenario::p0() const { return static_cast<int>((beta0.array() != 0.0).count()); }

LogisticScenario LogisticScenario::with_zeros(int pk, double response_alpha)
{
    if (pk < 0) {
        throw ConfigError("number of zero coefficients must be non-negative");
    }
    LogisticScenario s;
    s.p = 3 + pk;
    s.beta0 = Vector::Zero(s.p);
    s.beta0.head(3) << 0.6, -0.5, 0.4;
    s.response_alpha = response_alpha;
    return s;
}

int LogisticScenario::p0() const { return static_cast<int>((beta0.array() != 0.0).count()); }

std::vector<Matrix> gen_adaptive_covariates(int n, const ContinuousScenario& scenario, const NormalDraw& draw)
{
    if (n < 1) {
        throw ConfigError("gen_adaptive_covariates: n must be at least 1");
    }
    const Index m = scenario.m;
    const Index p = scenario.p;
    std::vector<Matrix> out;
    out.reserve(static_cast<std::size_t>(n));
    Vector running_sum = Vector::Zero(p);
    double rows_so_far = 0.0;
    for (int i = 0; i < n; ++i) {
        const Vector mean = rows_so_far > 0.0 ? Vector(running_sum / rows_so_far) : Vector::Zero(p);
        Matrix X(m, p);
        if (scenario.layout == CovariateLayout::per_row) {
            for (Index j = 0; j < m; ++j) {
                for (Index k = 0; k < p; ++k) {
                    X(j, k) = mean(k) + draw();
                }
            }
        } else {
            Vector row(p);
            for (Index k = 0; k < p; ++k) {
                row(k) = mean(k) + draw();
            }
            X = row.transpose().replicate(m, 1);
        }
        running_sum += X.colwise().sum().transpose();
        rows_so_far += static_cast<double>(m);
        out.push_back(std::move(X));
    }
    return out;
}

std::vector<Matrix> gen_adaptive_covariates(int n, const ContinuousScenario& scenario, Rng& rng)
{
    return gen_adaptive_covariates(n, scenario, normal_source(rng));
}

Vector gen_correlated_normal_errors(CorrelationKind structure, double alpha, int m, const NormalDraw& draw)
{
    if (m < 1) {
        throw ConfigError("gen_correlated_normal_errors: m must be at least 1");
    }
    Vector z(m);
    for (int j = 0; j < m; ++j) {
        z(j) = draw();
    }
    if (m == 1 || structure == CorrelationKind::independence) {
        return z;
    }
    const Matrix R = WorkingCorrelation{structure, alpha}.matrix(m);
    Eigen::LLT<Matrix> llt(R);
    if (llt.info() != Eigen::Success) {
        throw NumericalDomainError("error correlation matrix is not positive definite");
    }
    return llt.matrixL() * z;
}

Vector gen_correlated_normal_errors(CorrelationKind structure, double alpha, int m, Rng& rng)
{
    return gen_correlated_normal_errors(structure, alpha, m, normal_source(rng));
}

ClusterObservation gen_continuous_cluster(const ContinuousScenario& scenario, const Matrix& X, Rng& rng, long id)
{
    if (X.cols() != scenario.beta0.size()) {
        throw ConfigError("gen_continuous_cluster: X does not match beta0");
    }
    ClusterObservation c;
    c.id = id;
    c.X = X;
    c.y = X * scenario.beta0 +
          gen_correlated_normal_errors(scenario.error_structure, scenario.alpha, static_cast<int>(X.rows()), rng);
    return c;
}

namespace {

Matrix logistic_covariate_factor(const LogisticScenario& scenario)
{
    const Matrix cov = scenario.covar_var * WorkingCorrelation{CorrelationKind::ar1, scenario.covar_rho}.matrix(scenario.p);
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw NumericalDomainError("covariate covariance is not positive definite");
    }
    return llt.matrixL();
}

Matrix draw_logistic_covariates(const LogisticScenario& scenario, const Matrix& factor, Rng& rng)
{
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix Z(scenario.m, scenario.p);
    for (Index j = 0; j < Z.rows(); ++j) {
        for (Index k = 0; k < Z.cols(); ++k) {
            Z(j, k) = dist(rng);
        }
    }
    return Z * factor.transpose();
}

}  // namespace

Matrix gen_logistic_covariates(const LogisticScenario& scenario, Rng& rng)
{
    return draw_logistic_covariates(scenario, logistic_covariate_factor(scenario), rng);
}

BinaryDraw gen_ar1_binary(const Vector& mu, double alpha, Rng& rng)
{
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    BinaryDraw out{Vector::Zero(mu.size()), 0};
    for (Index j = 0; j < mu.size(); ++j) {
        if (!(mu(j) > 0.0 && mu(j) < 1.0)) {
            throw NumericalDomainError("gen_ar1_binary: marginal means must lie in (0, 1)");
        }
        double prob = mu(j);
        if (j > 0) {
            const double v_now = mu(j) * (1.0 - mu(j));
            const double v_prev = mu(j - 1) * (1.0 - mu(j - 1));
            prob += alpha * std::sqrt(v_now / v_prev) * (out.y(j - 1) - mu(j - 1));
            if (prob < 0.0 || prob > 1.0) {
                prob = std::clamp(prob, 0.0, 1.0);
                ++out.clamp_events;
            }
        }
        out.y(j) = unif(rng) < prob ? 1.0 : 0.0;
    }
    return out;
}

std::vector<ClusterObservation> gen_continuous_pool(const ContinuousScenario& scenario, Rng& rng)
{
    const std::vector<Matrix> xs = gen_adaptive_covariates(scenario.pool_size, scenario, rng);
    std::vector<ClusterObservation> out;
    out.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out.push_back(gen_continuous_cluster(scenario, xs[i], rng, static_cast<long>(i)));
    }
    return out;
}

LogisticPool gen_logistic_pool(const LogisticScenario& scenario, Rng& rng)
{
    const Matrix factor = logistic_covariate_factor(scenario);
    const LinkSpec logit{LinkKind::logit};
    LogisticPool out;
    out.clusters.reserve(static_cast<std::size_t>(scenario.pool_size));
    for (int i = 0; i < scenario.pool_size; ++i) {
        ClusterObservation c;
        c.id = i;
        c.X = draw_logistic_covariates(scenario, factor, rng);
        const Vector eta = c.X * scenario.beta0;
        Vector mu(eta.size());
        for (Index j = 0; j < eta.size(); ++j) {
            mu(j) = logit.mean(eta(j));
        }
        BinaryDraw draw = gen_ar1_binary(mu, scenario.response_alpha, rng);
        c.y = std::move(draw.y);
        out.clamp_events += draw.clamp_events;
        out.clusters.push_back(std::move(c));
    }
    return out;
}

void write_pool_csv(const std::string& path, const std::vector<ClusterObservation>& clusters)
{
    std::ofstream os(path);
    if (!os) {
        throw DataError("cannot open '" + path + "' for writing");
    }
    const Index p = clusters.empty() ? 0 : clusters.front().p();
    os << "cluster,order,y";
    for (Index k = 0; k < p; ++k) {
        os << ",x" << (k + 1);
    }
    os << '\n' << std::setprecision(17);
    for (const auto& c : clusters) {
        for (Index j = 0; j < c.m(); ++j) {
            os << c.id << ',' << j << ',' << c.y(j);
            for (Index k = 0; k < p; ++k) {
                os << ',' << c.X(j, k);
            }
            os << '\n';
        }
    }
}

}  // namespace seqgee

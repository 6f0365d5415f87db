#include "seqgee/sequential.hpp"

#include "seqgee/errors.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <limits>
#include <sstream>

namespace seqgee {

namespace {

Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

double condition_number(const Matrix& a)
{
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a), Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

Matrix spd_inverse(const Matrix& a, const char* what)
{
    Eigen::LLT<Matrix> llt(symmetrize(a));
    if (llt.info() != Eigen::Success) {
        std::ostringstream os;
        os << what << " is singular (condition number " << condition_number(a) << ")";
        throw LinearSolveError(os.str());
    }
    return symmetrize(llt.solve(Matrix::Identity(a.rows(), a.cols())));
}

std::vector<Index> unselected_positions(const std::vector<int>& indicators)
{
    std::vector<Index> out;
    for (std::size_t j = 0; j < indicators.size(); ++j) {
        if (indicators[j] == 0) {
            out.push_back(static_cast<Index>(j));
        }
    }
    return out;
}

}  // namespace

void StoppingPolicy::validate() const
{
    if (!(d > 0.0) || !std::isfinite(d)) {
        throw ConfigError("stopping policy: d must be positive");
    }
    if (!(conf_level > 0.0 && conf_level < 1.0)) {
        throw ConfigError("stopping policy: conf_level must lie in (0, 1)");
    }
    if (n0 < 2) {
        throw ConfigError("stopping policy: n0 must be at least 2");
    }
}

double EllipsoidSet::max_semi_axis() const
{
    Eigen::SelfAdjointEigenSolver<Matrix> es(shape, Eigen::EigenvaluesOnly);
    return std::sqrt(radius_sq / es.eigenvalues().minCoeff());
}

PartitionedSigma partition_sigma(const Matrix& H, const Matrix& M, const std::vector<int>& indicators)
{
    const std::vector<Index> sel = selected_positions(indicators);
    if (sel.empty()) {
        throw NoVariablesSelectedError("partition_sigma: no variables selected");
    }
    Eigen::LLT<Matrix> m_llt(symmetrize(M));
    if (m_llt.info() != Eigen::Success) {
        std::ostringstream os;
        os << "partition_sigma: M is singular (condition number " << condition_number(M) << ")";
        throw LinearSolveError(os.str());
    }
    const Matrix sigma = symmetrize(H * m_llt.solve(H));
    const std::vector<Index> rest = unselected_positions(indicators);
    if (rest.empty()) {
        return {sigma, sel};
    }

    const Matrix s11 = select_block(sigma, sel, sel);
    const Matrix s12 = select_block(sigma, sel, rest);
    const Matrix s22 = select_block(sigma, rest, rest);
    const Matrix s11_inv = spd_inverse(s11, "Sigma_11");
    const Matrix s22_1 = s22 - s12.transpose() * s11_inv * s12;
    const Matrix s22_1_inv = spd_inverse(s22_1, "Sigma_22.1");
    const Matrix left = s11_inv * s12;
    const Matrix tilde_inv = s11_inv + left * s22_1_inv * left.transpose();
    return {spd_inverse(tilde_inv, "Sigma~_11^{-1}"), sel};
}

double nu_max(const Matrix& H, const Matrix& M, const std::vector<int>& indicators)
{
    const std::vector<Index> sel = selected_positions(indicators);
    if (sel.empty()) {
        throw NoVariablesSelectedError("nu_max: no variables selected");
    }
    Eigen::LLT<Matrix> h_llt(symmetrize(H));
    if (h_llt.info() != Eigen::Success) {
        throw LinearSolveError("nu_max: H is singular");
    }
    const Matrix hinv_m = h_llt.solve(M);
    const Matrix sandwich = symmetrize(h_llt.solve(hinv_m.transpose()));
    const Matrix block = select_block(sandwich, sel, sel);
    Eigen::SelfAdjointEigenSolver<Matrix> es(block, Eigen::EigenvaluesOnly);
    const double nu = es.eigenvalues().maxCoeff();
    if (!(nu > 0.0)) {
        throw LinearSolveError("nu_max: selected block of the sandwich variance is not positive");
    }
    return nu;
}

double chi2_quantile(int df, double prob)
{
    if (df < 1) {
        throw NumericalDomainError("chi2_quantile: df must be at least 1");
    }
    if (!(prob > 0.0 && prob < 1.0)) {
        throw NumericalDomainError("chi2_quantile: prob must lie in (0, 1)");
    }
    const double shape = 0.5 * df;
    auto cdf = [&](double x) { return boost::math::gamma_p(shape, 0.5 * x); };
    auto pdf = [&](double x) { return 0.5 * boost::math::gamma_p_derivative(shape, 0.5 * x); };

    double lo = 0.0;
    double hi = df + 10.0 * std::sqrt(2.0 * df) + 20.0;
    while (cdf(hi) < prob) {
        lo = hi;
        hi *= 2.0;
    }

    // Wilson-Hilferty start, then safeguarded Newton.
    const double z = std::sqrt(2.0) * boost::math::erf_inv(2.0 * prob - 1.0);
    const double c = 2.0 / (9.0 * df);
    double x = df * std::pow(1.0 - c + z * std::sqrt(c), 3);
    if (!(x > lo && x < hi)) {
        x = 0.5 * (lo + hi);
    }
    for (int iter = 0; iter < 200; ++iter) {
        const double f = cdf(x) - prob;
        if (f == 0.0) {
            return x;
        }
        if (f < 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        const double slope = pdf(x);
        double next = slope > 0.0 ? x - f / slope : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) {
            next = 0.5 * (lo + hi);
        }
        if (std::abs(next - x) <= 1e-15 * std::max(x, 1e-300)) {
            return next;
        }
        x = next;
    }
    return x;
}

StopDecision should_stop(int k, const StoppingPolicy& policy, double nu_k, int p0_hat_k)
{
    if (k < policy.n0 || p0_hat_k < 1) {
        return StopDecision::recruit;
    }
    const double a_sq = chi2_quantile(p0_hat_k, policy.conf_level);
    return nu_k <= policy.d * policy.d / a_sq ? StopDecision::stop : StopDecision::recruit;
}

EllipsoidSet confidence_set(const GeeFit& fit, const AseResult& ase, const StoppingPolicy& policy)
{
    return confidence_set(InformationMatrices{fit.H, fit.M}, ase, policy);
}

EllipsoidSet confidence_set(const InformationMatrices& info, const AseResult& ase, const StoppingPolicy& policy)
{
    PartitionedSigma part = partition_sigma(info.H, info.M, ase.indicators);
    const double nu = nu_max(info.H, info.M, ase.indicators);
    EllipsoidSet out;
    out.p = info.H.rows();
    out.selected = std::move(part.selected);
    out.center.resize(static_cast<Index>(out.selected.size()));
    for (std::size_t k = 0; k < out.selected.size(); ++k) {
        out.center(static_cast<Index>(k)) = ase.beta_ase(out.selected[k]);
    }
    out.shape = std::move(part.sigma_tilde_11);
    out.radius_sq = policy.d * policy.d / nu;
    return out;
}

bool contains(const EllipsoidSet& ellipsoid, const Vector& beta)
{
    if (beta.size() != ellipsoid.p) {
        throw NumericalDomainError("contains: beta has the wrong dimension");
    }
    std::vector<bool> is_selected(static_cast<std::size_t>(ellipsoid.p), false);
    for (Index j : ellipsoid.selected) {
        is_selected[static_cast<std::size_t>(j)] = true;
    }
    for (Index j = 0; j < ellipsoid.p; ++j) {
        if (!is_selected[static_cast<std::size_t>(j)] && std::abs(beta(j)) > 1e-12) {
            return false;
        }
    }
    return contains_on_selected(ellipsoid, beta);
}

bool contains_on_selected(const EllipsoidSet& ellipsoid, const Vector& beta)
{
    if (beta.size() != ellipsoid.p) {
        throw NumericalDomainError("contains: beta has the wrong dimension");
    }
    Vector diff(static_cast<Index>(ellipsoid.selected.size()));
    for (std::size_t k = 0; k < ellipsoid.selected.size(); ++k) {
        diff(static_cast<Index>(k)) = beta(ellipsoid.selected[k]) - ellipsoid.center(static_cast<Index>(k));
    }
    return diff.dot(ellipsoid.shape * diff) <= ellipsoid.radius_sq;
}

double efficiency_ratio(double d, int n_stop, double a_sq, double nu)
{
    const double n = static_cast<double>(n_stop);
    const double rho_nu = n * nu;
    return d * d * n / (a_sq * rho_nu);
}

double raw_efficiency_ratio(double d, int n_stop, double a_sq, double nu)
{
    return d * d * static_cast<double>(n_stop) / (a_sq * nu);
}

namespace {

class Session {
public:
    Session(DataPool& pool, SelectorKind selector, const ModelConfig& model, const StoppingPolicy& policy, Rng& rng)
        : pool_(pool), selector_(selector), model_(model), policy_(policy), rng_(rng)
    {
    }

    SequentialOutcome run()
    {
        policy_.validate();
        if (pool_.inactive_count() < static_cast<std::size_t>(policy_.n0)) {
            throw InsufficientDataError("pool has fewer inactive clusters than the pilot size n0");
        }
        for (int i = 0; i < policy_.n0; ++i) {
            add(select_random(pool_, rng_));
        }

        while (true) {
            if (!refit()) {
                if (pool_.inactive_count() == 0) {
                    return finish_exhausted();
                }
                add(select_random(pool_, rng_));
                continue;
            }
            shrink();

            StepRecord step;
            step.k = static_cast<int>(data_.size());
            step.p0_hat = ase_.p0_hat;
            step.nu = std::numeric_limits<double>::quiet_NaN();
            if (ase_.p0_hat >= 1) {
                step.nu = nu_max(info_.H, info_.M, ase_.indicators);
                step.a_sq = chi2_quantile(ase_.p0_hat, policy_.conf_level);
                if (should_stop(step.k, policy_, step.nu, ase_.p0_hat) == StopDecision::stop) {
                    out_.history.push_back(step);
                    return finish(true);
                }
            }
            if (pool_.inactive_count() == 0) {
                out_.history.push_back(step);
                return finish_exhausted();
            }
            const std::size_t next = choose_next();
            step.recruited_id = pool_.cluster(next).id;
            out_.history.push_back(step);
            add(next);
        }
    }

private:
    void add(std::size_t index)
    {
        pool_.recruit(index);
        const ClusterObservation& c = pool_.cluster(index);
        data_.push_back(c);
        if (gram_.size() == 0) {
            gram_ = Matrix::Zero(c.p(), c.p());
        }
        gram_.noalias() += c.X.transpose() * c.X;
        out_.recruited_ids.push_back(c.id);
    }

    // Up to three attempts warm-started at the last converged estimate, each with a larger
    // iteration budget. Returns false when all fail; the caller then adds a random cluster.
    bool refit()
    {
        Vector start = fit_ ? fit_->beta : Vector();
        for (int attempt = 0; attempt < 3; ++attempt) {
            FitOptions options = model_.fit;
            options.max_iter = model_.fit.max_iter << attempt;
            try {
                if (start.size() == 0) {
                    start = initial_beta(data_, model_.link);
                }
                GeeFit candidate = fit_mqle(data_, model_.link, model_.kind, start, options);
                if (candidate.converged) {
                    fit_ = std::move(candidate);
                    return true;
                }
            } catch (const Error& e) {
                last_failure_ = e.what();
            }
            ++out_.fit_failures;
        }
        return false;
    }

    void shrink()
    {
        shrink_indicators();
        if (!policy_.shrinkage_enabled || ase_.p0_hat == 0) {
            info_ = {fit_->H, fit_->M};
        } else {
            // Sandwich pieces at the shrunken estimate. The MQLE residuals are nearly
            // interpolated while k is close to p, which would collapse M.
            info_ = information_matrices(data_, ase_.beta_ase, fit_->model(model_.link));
        }
    }

    void shrink_indicators()
    {
        if (!policy_.shrinkage_enabled) {
            ase_ = no_shrinkage(fit_->beta);
            return;
        }
        const EigenRates rates = design_eigen_rates(gram_);
        if (!(rates.lambda_min > 0.0)) {
            // Rank-deficient design: nothing can be declared effective yet.
            ase_ = AseResult{};
            ase_.indicators.assign(static_cast<std::size_t>(fit_->beta.size()), 0);
            ase_.beta_ase = Vector::Zero(fit_->beta.size());
            return;
        }
        const double rate = shrinkage_rate(rates.lambda_max, rates.lambda_min, policy_.shrink.rate_alpha());
        ase_ = ase(fit_->beta, rate, policy_.shrink);
    }

    std::size_t choose_next()
    {
        if (selector_ == SelectorKind::d_optimal && ase_.p0_hat >= 1) {
            try {
                DOptimalState state;
                state.beta = ase_.beta_ase;
                state.link = model_.link;
                state.indicators = ase_.indicators;
                state.rbar = rbar(data_, state.beta, model_.link);
                state.G = g_matrix(data_, state.beta, model_.link, state.rbar);
                return select_d_optimal(pool_, state);
            } catch (const LinearSolveError& e) {
                out_.warnings.push_back(std::string("D-criterion unavailable, recruited at random: ") + e.what());
            }
        }
        return select_random(pool_, rng_);
    }

    SequentialOutcome finish(bool stopped)
    {
        out_.stopped = stopped;
        out_.n_stop = static_cast<int>(data_.size());
        out_.fit = *fit_;
        out_.ase = ase_;
        out_.info = info_;
        if (ase_.p0_hat >= 1) {
            out_.nu_stop = nu_max(info_.H, info_.M, ase_.indicators);
            out_.a_sq_stop = chi2_quantile(ase_.p0_hat, policy_.conf_level);
            out_.efficiency_ratio = efficiency_ratio(policy_.d, out_.n_stop, out_.a_sq_stop, out_.nu_stop);
            out_.efficiency_ratio_raw = raw_efficiency_ratio(policy_.d, out_.n_stop, out_.a_sq_stop, out_.nu_stop);
            if (stopped) {
                out_.ellipsoid = confidence_set(info_, ase_, policy_);
            } else {
                try {
                    out_.ellipsoid = confidence_set(info_, ase_, policy_);
                } catch (const LinearSolveError& e) {
                    out_.warnings.push_back(std::string("no ellipsoid on exhaustion: ") + e.what());
                }
            }
        }
        return std::move(out_);
    }

    SequentialOutcome finish_exhausted()
    {
        out_.pool_exhausted = true;
        if (!fit_) {
            throw ConvergenceError("sequential session never produced a converged fit: " + last_failure_);
        }
        if (ase_.indicators.empty()) {
            shrink();
        }
        return finish(false);
    }

    DataPool& pool_;
    SelectorKind selector_;
    const ModelConfig& model_;
    const StoppingPolicy& policy_;
    Rng& rng_;

    std::vector<ClusterObservation> data_;
    Matrix gram_;
    std::optional<GeeFit> fit_;
    AseResult ase_;
    InformationMatrices info_;
    std::string last_failure_;
    SequentialOutcome out_;
};

}  // namespace

SequentialOutcome run_sequential(DataPool& pool, SelectorKind selector, const ModelConfig& model,
                                 const StoppingPolicy& policy, Rng& rng)
{
    return Session(pool, selector, model, policy, rng).run();
}

}  // namespace seqgee

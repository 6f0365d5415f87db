#include "seqgee/model.hpp"

#include "seqgee/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace seqgee {

namespace {

constexpr double kRbarMaxCondition = 1e12;
constexpr double kRbarRidge = 1e-8;
constexpr double kHessianWarnCondition = 1e12;
constexpr double kAlphaMargin = 1e-6;

double sup_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

void require_nonempty(ClusterSpan data, const char* what)
{
    if (data.empty()) {
        throw InsufficientDataError(std::string(what) + ": no clusters supplied");
    }
}

void require_dims(ClusterSpan data, const Vector& beta, const char* what)
{
    require_nonempty(data, what);
    for (const auto& c : data) {
        if (c.X.cols() != beta.size() || c.X.rows() != c.y.size()) {
            std::ostringstream os;
            os << what << ": dimension mismatch in cluster " << c.id << " (X is " << c.X.rows() << "x"
               << c.X.cols() << ", y has " << c.y.size() << ", beta has " << beta.size() << ")";
            throw NumericalDomainError(os.str());
        }
    }
}

// Per-cluster pieces shared by score / H / M: Z = A^{1/2} X, r = A^{-1/2}(y - mu).
// Then X'AV^{-1}e = Z'R^{-1}r / phi and X'AV^{-1}AX = Z'R^{-1}Z / phi.
class ClusterKernel {
public:
    ClusterKernel(const GeeModel& model, Index m) : model_(model)
    {
        if (!(model.phi > 0.0) || !std::isfinite(model.phi)) {
            throw NumericalDomainError("dispersion must be positive and finite");
        }
        const Matrix R = model.corr.matrix(m);
        llt_.compute(R);
        if (llt_.info() != Eigen::Success) {
            std::ostringstream os;
            os << "working correlation (" << to_string(model.corr.kind) << ", alpha=" << model.corr.alpha
               << ") is not positive definite";
            throw LinearSolveError(os.str());
        }
    }

    // Returns R^{-1} Z and fills z, r for the cluster.
    void load(const ClusterObservation& c, const Vector& beta)
    {
        const MeanDerivative md = mean_and_derivative(model_.link, c.X, beta);
        d_ = md.a.cwiseSqrt();
        if (!d_.allFinite() || d_.minCoeff() <= 0.0) {
            std::ostringstream os;
            os << "V_i is singular for cluster " << c.id;
            throw LinearSolveError(os.str());
        }
        z_ = d_.asDiagonal() * c.X;
        r_ = (c.y - md.mu).cwiseQuotient(d_);
        rinv_z_ = llt_.solve(z_);
    }

    Vector score_term() const { return rinv_z_.transpose() * r_ / model_.phi; }
    Matrix h_term() const { return z_.transpose() * rinv_z_ / model_.phi; }

private:
    const GeeModel& model_;
    Eigen::LLT<Matrix> llt_;
    Vector d_;
    Matrix z_;
    Vector r_;
    Matrix rinv_z_;
};

Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

}  // namespace

void validate_clusters(ClusterSpan data)
{
    if (data.empty()) {
        return;
    }
    const Index m = data.front().m();
    const Index p = data.front().p();
    for (const auto& c : data) {
        std::ostringstream os;
        if (c.m() < 1 || c.p() < 1) {
            os << "cluster " << c.id << " is empty";
        } else if (c.X.rows() != c.y.size()) {
            os << "cluster " << c.id << ": y has " << c.y.size() << " entries but X has " << c.X.rows() << " rows";
        } else if (c.m() != m || c.p() != p) {
            os << "cluster " << c.id << " has shape " << c.m() << "x" << c.p() << ", expected " << m << "x" << p;
        } else if (!c.y.allFinite() || !c.X.allFinite()) {
            os << "cluster " << c.id << " contains non-finite values";
        } else {
            continue;
        }
        throw DataError(os.str());
    }
}

double LinkSpec::mean(double eta) const
{
    switch (kind) {
    case LinkKind::identity:
        return eta;
    case LinkKind::logit: {
        const double mu = 1.0 / (1.0 + std::exp(-eta));
        return std::clamp(mu, kMuFloor, 1.0 - kMuFloor);
    }
    }
    return eta;
}

double LinkSpec::derivative(double eta) const
{
    if (kind == LinkKind::identity) {
        return 1.0;
    }
    const double mu = mean(eta);
    return mu * (1.0 - mu);
}

double LinkSpec::variance(double mu) const
{
    if (kind == LinkKind::identity) {
        return 1.0;
    }
    const double m = std::clamp(mu, kMuFloor, 1.0 - kMuFloor);
    return m * (1.0 - m);
}

std::string_view to_string(LinkKind kind) { return kind == LinkKind::identity ? "identity" : "logit"; }

std::string_view to_string(CorrelationKind kind)
{
    switch (kind) {
    case CorrelationKind::independence:
        return "ind";
    case CorrelationKind::exchangeable:
        return "exch";
    case CorrelationKind::ar1:
        return "ar1";
    }
    return "ind";
}

LinkKind parse_link(std::string_view name)
{
    if (name == "identity" || name == "gaussian") {
        return LinkKind::identity;
    }
    if (name == "logit" || name == "binomial") {
        return LinkKind::logit;
    }
    throw ConfigError("unknown link '" + std::string(name) + "'");
}

CorrelationKind parse_correlation(std::string_view name)
{
    if (name == "ind" || name == "independence") {
        return CorrelationKind::independence;
    }
    if (name == "exch" || name == "exchangeable") {
        return CorrelationKind::exchangeable;
    }
    if (name == "ar1") {
        return CorrelationKind::ar1;
    }
    throw ConfigError("unknown correlation structure '" + std::string(name) + "'");
}

bool WorkingCorrelation::valid_for(Index m) const
{
    switch (kind) {
    case CorrelationKind::independence:
        return true;
    case CorrelationKind::exchangeable:
        if (m <= 1) {
            return std::isfinite(alpha);
        }
        return alpha > -1.0 / static_cast<double>(m - 1) && alpha < 1.0;
    case CorrelationKind::ar1:
        return std::abs(alpha) < 1.0;
    }
    return false;
}

Matrix WorkingCorrelation::matrix(Index m) const
{
    if (!valid_for(m)) {
        std::ostringstream os;
        os << "alpha=" << alpha << " is outside the legal range for " << to_string(kind) << " with m=" << m;
        throw NumericalDomainError(os.str());
    }
    Matrix R = Matrix::Identity(m, m);
    for (Index j = 0; j < m; ++j) {
        for (Index k = 0; k < m; ++k) {
            if (j == k) {
                continue;
            }
            switch (kind) {
            case CorrelationKind::independence:
                break;
            case CorrelationKind::exchangeable:
                R(j, k) = alpha;
                break;
            case CorrelationKind::ar1:
                R(j, k) = std::pow(alpha, static_cast<double>(std::abs(j - k)));
                break;
            }
        }
    }
    return R;
}

double WorkingCorrelation::clip(CorrelationKind kind, double alpha, Index m)
{
    switch (kind) {
    case CorrelationKind::independence:
        return 0.0;
    case CorrelationKind::exchangeable: {
        const double lower = m > 1 ? -1.0 / static_cast<double>(m - 1) : -1.0;
        return std::clamp(alpha, lower + kAlphaMargin, 1.0 - kAlphaMargin);
    }
    case CorrelationKind::ar1:
        return std::clamp(alpha, -1.0 + kAlphaMargin, 1.0 - kAlphaMargin);
    }
    return 0.0;
}

MeanDerivative mean_and_derivative(const LinkSpec& link, const Matrix& X, const Vector& beta)
{
    if (X.cols() != beta.size()) {
        throw NumericalDomainError("mean_and_derivative: X has " + std::to_string(X.cols()) + " columns, beta has " +
                                   std::to_string(beta.size()) + " entries");
    }
    const Vector eta = X * beta;
    if (!eta.allFinite()) {
        throw NumericalDomainError("non-finite linear predictor");
    }
    MeanDerivative out{Vector(eta.size()), Vector(eta.size())};
    for (Index j = 0; j < eta.size(); ++j) {
        out.mu(j) = link.mean(eta(j));
        out.a(j) = link.kind == LinkKind::identity ? 1.0 : out.mu(j) * (1.0 - out.mu(j));
    }
    return out;
}

Vector score(ClusterSpan data, const Vector& beta, const GeeModel& model)
{
    require_dims(data, beta, "score");
    ClusterKernel kernel(model, data.front().m());
    Vector s = Vector::Zero(beta.size());
    for (const auto& c : data) {
        kernel.load(c, beta);
        s += kernel.score_term();
    }
    return s;
}

InformationMatrices information_matrices(ClusterSpan data, const Vector& beta, const GeeModel& model)
{
    require_dims(data, beta, "information_matrices");
    const Index p = beta.size();
    ClusterKernel kernel(model, data.front().m());
    InformationMatrices out{Matrix::Zero(p, p), Matrix::Zero(p, p)};
    for (const auto& c : data) {
        kernel.load(c, beta);
        const Vector s = kernel.score_term();
        out.H += kernel.h_term();
        out.M.noalias() += s * s.transpose();
    }
    out.H = symmetrize(out.H);
    out.M = symmetrize(out.M);
    return out;
}

Matrix rbar(ClusterSpan data, const Vector& beta, const LinkSpec& link, std::size_t* clamped)
{
    require_dims(data, beta, "rbar");
    const Index m = data.front().m();
    Matrix out = Matrix::Zero(m, m);
    std::size_t floor_hits = 0;
    for (const auto& c : data) {
        const MeanDerivative md = mean_and_derivative(link, c.X, beta);
        Vector u = c.y - md.mu;
        for (Index j = 0; j < m; ++j) {
            double a = md.a(j);
            if (a < kDerivativeFloor) {
                a = kDerivativeFloor;
                ++floor_hits;
            }
            u(j) /= std::sqrt(a);
        }
        out.noalias() += u * u.transpose();
    }
    if (clamped != nullptr) {
        *clamped += floor_hits;
    }
    return symmetrize(out / static_cast<double>(data.size()));
}

Matrix regularized_rbar_inverse(const Matrix& rbar)
{
    auto condition = [](const Eigen::SelfAdjointEigenSolver<Matrix>& es) {
        const double lo = es.eigenvalues().minCoeff();
        const double hi = es.eigenvalues().maxCoeff();
        if (lo <= 0.0) {
            return std::numeric_limits<double>::infinity();
        }
        return hi / lo;
    };
    Matrix work = symmetrize(rbar);
    Eigen::SelfAdjointEigenSolver<Matrix> es(work);
    if (!(condition(es) <= kRbarMaxCondition)) {
        work += kRbarRidge * Matrix::Identity(work.rows(), work.cols());
        es.compute(work);
        if (!(condition(es) <= kRbarMaxCondition)) {
            throw LinearSolveError(
                "Rbar is singular even after ridge regularization; increase the pilot sample size");
        }
    }
    const Matrix& V = es.eigenvectors();
    return symmetrize(V * es.eigenvalues().cwiseInverse().asDiagonal() * V.transpose());
}

Matrix g_matrix(ClusterSpan data, const Vector& beta, const LinkSpec& link, const Matrix& rbar)
{
    require_dims(data, beta, "g_matrix");
    const Index m = data.front().m();
    if (rbar.rows() != m || rbar.cols() != m) {
        throw NumericalDomainError("g_matrix: Rbar must be m x m");
    }
    const Matrix rinv = regularized_rbar_inverse(rbar);
    const Index p = beta.size();
    Matrix G = Matrix::Zero(p, p);
    for (const auto& c : data) {
        const MeanDerivative md = mean_and_derivative(link, c.X, beta);
        const Vector d = md.a.cwiseMax(kDerivativeFloor).cwiseSqrt();
        const Matrix z = d.asDiagonal() * c.X;
        G.noalias() += z.transpose() * rinv * z;
    }
    return symmetrize(G);
}

NuisanceEstimate estimate_alpha(ClusterSpan data, const Vector& beta, const LinkSpec& link, CorrelationKind kind)
{
    require_dims(data, beta, "estimate_alpha");
    if (data.size() < 2) {
        throw InsufficientDataError("estimate_alpha needs at least 2 clusters");
    }
    const auto n = static_cast<double>(data.size());
    const Index m = data.front().m();
    const auto md = static_cast<double>(m);
    const auto p = static_cast<double>(beta.size());

    double sum_sq = 0.0;
    double cross = 0.0;
    for (const auto& c : data) {
        const MeanDerivative mdv = mean_and_derivative(link, c.X, beta);
        Vector r(m);
        for (Index j = 0; j < m; ++j) {
            r(j) = (c.y(j) - mdv.mu(j)) / std::sqrt(link.variance(mdv.mu(j)));
        }
        sum_sq += r.squaredNorm();
        if (kind == CorrelationKind::exchangeable) {
            const double total = r.sum();
            cross += 0.5 * (total * total - r.squaredNorm());
        } else if (kind == CorrelationKind::ar1) {
            for (Index j = 0; j + 1 < m; ++j) {
                cross += r(j) * r(j + 1);
            }
        }
    }

    const double phi_den = n * md - p;
    if (phi_den <= 0.0) {
        throw InsufficientDataError("estimate_alpha: n*m - p <= 0");
    }
    NuisanceEstimate out;
    out.phi = sum_sq / phi_den;

    double pair_den = 0.0;
    switch (kind) {
    case CorrelationKind::independence:
        out.alpha = 0.0;
        return out;
    case CorrelationKind::exchangeable:
        pair_den = n * md * (md - 1.0) / 2.0 - p;
        break;
    case CorrelationKind::ar1:
        pair_den = n * (md - 1.0) - p;
        break;
    }
    if (pair_den <= 0.0) {
        throw InsufficientDataError("estimate_alpha: too few within-cluster pairs for the correlation moment");
    }
    out.alpha = out.phi > 0.0 ? cross / (out.phi * pair_den) : 0.0;
    out.alpha = WorkingCorrelation::clip(kind, out.alpha, m);
    return out;
}

Matrix design_gram(ClusterSpan data)
{
    require_nonempty(data, "design_gram");
    const Index p = data.front().p();
    Matrix gram = Matrix::Zero(p, p);
    for (const auto& c : data) {
        gram.noalias() += c.X.transpose() * c.X;
    }
    return symmetrize(gram);
}

Vector initial_beta(ClusterSpan data, const LinkSpec& link)
{
    require_nonempty(data, "initial_beta");
    const Index p = data.front().p();
    if (link.kind == LinkKind::logit) {
        return Vector::Zero(p);
    }
    Matrix gram = Matrix::Zero(p, p);
    Vector xty = Vector::Zero(p);
    for (const auto& c : data) {
        gram.noalias() += c.X.transpose() * c.X;
        xty.noalias() += c.X.transpose() * c.y;
    }
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) {
        throw RankDeficiencyError("stacked design does not have full column rank");
    }
    return llt.solve(xty);
}

GeeFit fit_mqle(ClusterSpan data, const LinkSpec& link, CorrelationKind kind, const Vector& beta_init,
                const FitOptions& options)
{
    require_dims(data, beta_init, "fit_mqle");
    if (!(options.tol > 0.0) || options.max_iter < 0) {
        throw ConfigError("fit_mqle: tol must be positive and max_iter non-negative");
    }
    const Index p = beta_init.size();

    GeeFit fit;
    fit.kind = kind;
    fit.beta = beta_init;

    auto model_at = [&](const Vector& beta) {
        const NuisanceEstimate nu = estimate_alpha(data, beta, link, kind);
        GeeModel model{link, {kind, nu.alpha}, 1.0};
        if (!options.fix_dispersion && nu.phi > 0.0) {
            model.phi = nu.phi;
        }
        return model;
    };

    GeeModel model{link, {kind, 0.0}, 1.0};
    for (int iter = 0;; ++iter) {
        model = model_at(fit.beta);
        ClusterKernel kernel(model, data.front().m());
        Vector S = Vector::Zero(p);
        Matrix H = Matrix::Zero(p, p);
        for (const auto& c : data) {
            kernel.load(c, fit.beta);
            S += kernel.score_term();
            H += kernel.h_term();
        }
        fit.score_norm = sup_norm(S);
        fit.iterations = iter;
        if (fit.score_norm <= options.tol) {
            fit.converged = true;
            break;
        }
        if (iter >= options.max_iter) {
            break;
        }
        Eigen::LLT<Matrix> llt(symmetrize(H));
        if (llt.info() != Eigen::Success) {
            throw LinearSolveError("fit_mqle: working Hessian H is singular");
        }
        Vector step = llt.solve(S);
        Vector candidate = fit.beta + step;
        for (int halving = 0; halving < 10; ++halving) {
            if (candidate.allFinite() && sup_norm(score(data, candidate, model)) < fit.score_norm) {
                break;
            }
            step *= 0.5;
            candidate = fit.beta + step;
        }
        fit.beta = candidate;
    }

    fit.alpha_hat = model.corr.alpha;
    fit.phi_hat = model.phi;
    InformationMatrices info = information_matrices(data, fit.beta, model);
    fit.H = std::move(info.H);
    fit.M = std::move(info.M);

    Eigen::SelfAdjointEigenSolver<Matrix> es(fit.H, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (lo <= 0.0 || hi / lo > kHessianWarnCondition) {
        std::ostringstream os;
        os << "H is ill-conditioned (eigenvalues " << lo << " .. " << hi << ")";
        fit.warnings.push_back(os.str());
    }

    std::size_t clamped = 0;
    fit.Rbar = rbar(data, fit.beta, link, &clamped);
    if (clamped > 0) {
        fit.warnings.push_back("Rbar: " + std::to_string(clamped) + " derivative entries clamped");
    }
    try {
        fit.G = g_matrix(data, fit.beta, link, fit.Rbar);
    } catch (const LinearSolveError& e) {
        fit.G.resize(0, 0);
        fit.warnings.emplace_back(e.what());
    }
    return fit;
}

double qic(const GeeFit& fit, ClusterSpan data, const LinkSpec& link)
{
    if (!fit.converged) {
        throw InvariantError("qic requires a converged fit");
    }
    require_dims(data, fit.beta, "qic");
    const Index p = fit.beta.size();
    double quasi = 0.0;
    Matrix omega = Matrix::Zero(p, p);
    for (const auto& c : data) {
        const MeanDerivative md = mean_and_derivative(link, c.X, fit.beta);
        for (Index j = 0; j < c.m(); ++j) {
            const double mu = md.mu(j);
            if (link.kind == LinkKind::identity) {
                quasi -= 0.5 * (c.y(j) - mu) * (c.y(j) - mu);
            } else {
                quasi += c.y(j) * std::log(mu) + (1.0 - c.y(j)) * std::log(1.0 - mu);
            }
        }
        omega.noalias() += c.X.transpose() * md.a.asDiagonal() * c.X;
    }
    quasi /= fit.phi_hat;
    omega /= fit.phi_hat;

    Eigen::LLT<Matrix> omega_llt(symmetrize(omega));
    if (omega_llt.info() != Eigen::Success) {
        throw LinearSolveError("qic: independence information matrix is singular");
    }
    Eigen::LLT<Matrix> h_llt(fit.H);
    if (h_llt.info() != Eigen::Success) {
        throw LinearSolveError("qic: H is singular");
    }
    const Matrix hinv_m = h_llt.solve(fit.M);
    const Matrix sandwich = h_llt.solve(hinv_m.transpose());
    return -2.0 * quasi + 2.0 * (omega * sandwich).trace();
}

}  // namespace seqgee

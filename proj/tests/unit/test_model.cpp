#include "doctest.h"

#include "../oracles.hpp"

#include "seqgee/errors.hpp"
#include "seqgee/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

using namespace seqgee;

namespace {

double sup(const Matrix& a) { return a.cwiseAbs().maxCoeff(); }

std::vector<ClusterObservation> logistic_clusters(std::mt19937_64& rng, int n, Index m, const Vector& beta)
{
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u;
    std::vector<ClusterObservation> out;
    for (int i = 0; i < n; ++i) {
        ClusterObservation c;
        c.id = i;
        c.X.resize(m, beta.size());
        c.y.resize(m);
        for (Index j = 0; j < m; ++j) {
            for (Index k = 0; k < beta.size(); ++k) {
                c.X(j, k) = z(rng);
            }
            c.y(j) = u(rng) < oracle::logistic(c.X.row(j).dot(beta)) ? 1.0 : 0.0;
        }
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace

TEST_CASE("logistic mean and derivative")
{
    Matrix X(2, 1);
    X << 0.0, 2.0;
    Vector beta(1);
    beta << 1.0;
    const MeanDerivative md = mean_and_derivative({LinkKind::logit}, X, beta);
    CHECK(md.mu(0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(md.a(0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(md.mu(1) == doctest::Approx(0.880797077977882).epsilon(1e-12));
    CHECK(md.a(1) == doctest::Approx(0.104993585403507).epsilon(1e-12));

    const MeanDerivative id = mean_and_derivative({LinkKind::identity}, X, beta);
    CHECK(id.mu(1) == 2.0);
    CHECK(id.a(1) == 1.0);

    beta << std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(mean_and_derivative({LinkKind::logit}, X, beta), NumericalDomainError);
}

TEST_CASE("logit means stay strictly inside the unit interval")
{
    Matrix X(2, 1);
    X << 800.0, -800.0;
    Vector beta(1);
    beta << 1.0;
    const MeanDerivative md = mean_and_derivative({LinkKind::logit}, X, beta);
    CHECK(md.mu(0) < 1.0);
    CHECK(md.mu(1) > 0.0);
}

TEST_CASE("working correlation matrices")
{
    CHECK(WorkingCorrelation{CorrelationKind::ar1, 0.5}.matrix(3)(0, 2) == doctest::Approx(0.25));
    CHECK(WorkingCorrelation{CorrelationKind::exchangeable, 0.3}.matrix(4)(1, 3) == doctest::Approx(0.3));
    CHECK(WorkingCorrelation{CorrelationKind::independence, 0.9}.matrix(3).isIdentity());
    CHECK_FALSE(WorkingCorrelation{CorrelationKind::exchangeable, -0.5}.valid_for(4));
    CHECK(WorkingCorrelation{CorrelationKind::exchangeable, -0.3}.valid_for(4));
    CHECK_FALSE(WorkingCorrelation{CorrelationKind::ar1, 1.0}.valid_for(4));
    CHECK_THROWS_AS((WorkingCorrelation{CorrelationKind::ar1, 1.2}.matrix(3)), NumericalDomainError);
    const double clipped = WorkingCorrelation::clip(CorrelationKind::exchangeable, -0.9, 5);
    CHECK(WorkingCorrelation{CorrelationKind::exchangeable, clipped}.valid_for(5));
}

TEST_CASE("score reduces to the least-squares gradient")
{
    std::mt19937_64 rng(11);
    const auto data = oracle::random_clusters(rng, 1, 4, 3);
    Vector beta(3);
    beta << 0.2, -0.1, 0.4;
    const GeeModel model{{LinkKind::identity}, {CorrelationKind::independence, 0.0}, 1.0};
    const Vector expected = data[0].X.transpose() * (data[0].y - data[0].X * beta);
    CHECK(sup(score(data, beta, model) - expected) < 1e-12);

    std::vector<ClusterObservation> exact = data;
    exact[0].y = exact[0].X * beta;
    CHECK(score(exact, beta, model).isZero(0.0));
    const InformationMatrices im = information_matrices(exact, beta, model);
    CHECK(im.M.isZero(0.0));
    CHECK(sup(im.H - data[0].X.transpose() * data[0].X) < 1e-12);
}

TEST_CASE("score, H and M match term-by-term assembly")
{
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 10);
        const Index m = 2 + static_cast<Index>(rng() % 4);
        const Index p = 1 + static_cast<Index>(rng() % 6);
        const CorrelationKind kind = static_cast<CorrelationKind>(trial % 3);
        const double alpha = kind == CorrelationKind::exchangeable ? 0.3 : 0.5;
        const double phi = 0.7 + 0.1 * (trial % 5);
        const bool logit = trial % 2 == 1;

        std::vector<ClusterObservation> data;
        Vector beta(p);
        std::normal_distribution<double> z;
        for (Index k = 0; k < p; ++k) {
            beta(k) = 0.5 * z(rng);
        }
        data = logit ? logistic_clusters(rng, n, m, beta) : oracle::random_clusters(rng, n, m, p);

        const LinkKind link = logit ? LinkKind::logit : LinkKind::identity;
        const GeeModel model{{link}, {kind, alpha}, phi};
        const oracle::Dense dense = oracle::assemble(data, beta, link, kind, alpha, phi);
        const InformationMatrices im = information_matrices(data, beta, model);

        const double scale = std::max(1.0, sup(dense.H));
        CHECK(sup(score(data, beta, model) - dense.score) < 1e-10 * std::max(1.0, sup(dense.score)));
        CHECK(sup(im.H - dense.H) < 1e-10 * scale);
        CHECK(sup(im.M - dense.M) < 1e-10 * std::max(1.0, sup(dense.M)));
        CHECK(sup(im.H - im.H.transpose()) <= 1e-12 * scale);
        CHECK(sup(im.M - im.M.transpose()) <= 1e-12 * std::max(1.0, sup(dense.M)));
    }
}

TEST_CASE("two clusters with AR(1) working correlation")
{
    std::vector<ClusterObservation> data(2);
    data[0].X = Matrix{{1.0, 0.5}, {0.2, -1.0}};
    data[0].y = Vector{{1.0, -0.5}};
    data[1].X = Matrix{{-0.3, 1.5}, {0.8, 0.1}};
    data[1].y = Vector{{0.2, 0.9}};
    const Vector beta{{0.1, 0.3}};
    const GeeModel model{{LinkKind::identity}, {CorrelationKind::ar1, 0.5}, 1.0};

    // R^{-1} for AR(1) with m = 2 is [[1, -a], [-a, 1]] / (1 - a^2).
    Matrix r_inv{{1.0, -0.5}, {-0.5, 1.0}};
    r_inv /= 0.75;
    Vector expected = Vector::Zero(2);
    for (const auto& c : data) {
        expected += c.X.transpose() * r_inv * (c.y - c.X * beta);
    }
    CHECK(sup(score(data, beta, model) - expected) < 1e-14);
}

TEST_CASE("rbar and G")
{
    ClusterObservation c;
    c.X = Matrix{{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}};
    const Vector beta{{0.4, -0.2}};
    const Vector u{{0.3, -1.0, 0.5}};
    c.y = c.X * beta + u;
    const std::vector<ClusterObservation> one{c};
    CHECK(sup(rbar(one, beta, {LinkKind::identity}) - u * u.transpose()) < 1e-14);

    std::vector<ClusterObservation> exact{c};
    exact[0].y = c.X * beta;
    CHECK(rbar(exact, beta, {LinkKind::identity}).isZero(0.0));

    std::mt19937_64 rng(13);
    const auto data = oracle::random_clusters(rng, 5, 3, 2);
    Matrix expected = Matrix::Zero(3, 3);
    for (const auto& d : data) {
        const Vector e = d.y - d.X * beta;
        expected += e * e.transpose();
    }
    expected /= 5.0;
    CHECK(sup(rbar(data, beta, {LinkKind::identity}) - expected) < 1e-13);
    CHECK(sup(g_matrix(data, beta, {LinkKind::identity}, Matrix::Identity(3, 3)) - design_gram(data)) < 1e-12);
}

TEST_CASE("G for a logit model matches dense assembly")
{
    std::mt19937_64 rng(14);
    const Vector beta{{0.5, -0.4, 0.2}};
    const auto data = logistic_clusters(rng, 4, 3, beta);
    const Matrix rb = rbar(data, beta, {LinkKind::logit});
    const Matrix rb_inv = oracle::inverse(rb);
    Matrix expected = Matrix::Zero(3, 3);
    for (const auto& c : data) {
        Vector root(3);
        for (Index j = 0; j < 3; ++j) {
            const double mu = oracle::logistic(c.X.row(j).dot(beta));
            root(j) = std::sqrt(mu * (1.0 - mu));
        }
        const Matrix U = root.asDiagonal() * c.X;
        expected += U.transpose() * rb_inv * U;
    }
    CHECK(sup(g_matrix(data, beta, {LinkKind::logit}, rb) - expected) < 1e-9 * std::max(1.0, sup(expected)));
}

TEST_CASE("a singular Rbar is regularized")
{
    const Matrix singular = Vector::Ones(3) * Vector::Ones(3).transpose();
    const Matrix inv = regularized_rbar_inverse(singular);
    CHECK(inv.allFinite());
    // The ridge alone rescues an all-zero matrix but not a wide eigenvalue spread.
    CHECK(regularized_rbar_inverse(Matrix::Zero(3, 3)).isApprox(1e8 * Matrix::Identity(3, 3)));
    const Matrix spread = Vector{{1e6, 0.0, 0.0}}.asDiagonal();
    CHECK_THROWS_AS(regularized_rbar_inverse(spread), LinearSolveError);
}

TEST_CASE("moment estimates of alpha and phi")
{
    // Two clusters of length 2 with residuals (1, 1) and (1, -1): lag-1 products cancel.
    std::vector<ClusterObservation> data(2);
    data[0].X = Matrix::Zero(2, 1);
    data[0].y = Vector{{1.0, 1.0}};
    data[1].X = Matrix::Zero(2, 1);
    data[1].y = Vector{{1.0, -1.0}};
    const Vector beta = Vector::Zero(1);
    const NuisanceEstimate ar = estimate_alpha(data, beta, {LinkKind::identity}, CorrelationKind::ar1);
    CHECK(ar.alpha == doctest::Approx(0.0));
    CHECK(ar.phi == doctest::Approx(4.0 / 3.0));
    const NuisanceEstimate ind = estimate_alpha(data, beta, {LinkKind::identity}, CorrelationKind::independence);
    CHECK(ind.alpha == 0.0);
    CHECK(ind.phi == doctest::Approx(4.0 / 3.0));

    // Hand-computed moments: phi = sum r^2 / (nm - p), alpha = sum r_j r_{j+1} / (phi (n(m-1) - p)).
    std::vector<ClusterObservation> three(3);
    const double r[3][3] = {{1.0, 0.5, -0.2}, {0.3, 0.9, 1.1}, {-0.7, -0.4, 0.2}};
    double ss = 0.0;
    double lag = 0.0;
    double pairs = 0.0;
    for (int i = 0; i < 3; ++i) {
        three[i].X = Matrix::Zero(3, 1);
        three[i].y = Vector{{r[i][0], r[i][1], r[i][2]}};
        for (int j = 0; j < 3; ++j) {
            ss += r[i][j] * r[i][j];
        }
        lag += r[i][0] * r[i][1] + r[i][1] * r[i][2];
        pairs += r[i][0] * r[i][1] + r[i][0] * r[i][2] + r[i][1] * r[i][2];
    }
    const double phi = ss / (9.0 - 1.0);
    const NuisanceEstimate a1 = estimate_alpha(three, beta, {LinkKind::identity}, CorrelationKind::ar1);
    CHECK(a1.phi == doctest::Approx(phi).epsilon(1e-14));
    CHECK(a1.alpha == doctest::Approx(lag / (phi * (6.0 - 1.0))).epsilon(1e-14));
    const NuisanceEstimate ex = estimate_alpha(three, beta, {LinkKind::identity}, CorrelationKind::exchangeable);
    CHECK(ex.alpha == doctest::Approx(pairs / (phi * (9.0 - 1.0))).epsilon(1e-14));

    CHECK_THROWS_AS(estimate_alpha({data.begin(), 1}, beta, {LinkKind::identity}, CorrelationKind::ar1),
                    InsufficientDataError);
}

TEST_CASE("alpha estimate recovers an AR(1) process")
{
    std::mt19937_64 rng(15);
    std::normal_distribution<double> z;
    const double alpha = 0.5;
    std::vector<ClusterObservation> data(10000);
    for (auto& c : data) {
        c.X = Matrix::Zero(5, 1);
        c.y.resize(5);
        c.y(0) = z(rng);
        for (int j = 1; j < 5; ++j) {
            c.y(j) = alpha * c.y(j - 1) + std::sqrt(1.0 - alpha * alpha) * z(rng);
        }
    }
    const NuisanceEstimate est = estimate_alpha(data, Vector::Zero(1), {LinkKind::identity}, CorrelationKind::ar1);
    CHECK(std::abs(est.alpha - alpha) < 0.02);
}

TEST_CASE("identity link with independence reproduces stacked least squares")
{
    std::mt19937_64 rng(16);
    const auto data = oracle::random_clusters(rng, 30, 5, 4);
    const GeeFit fit = fit_mqle(data, {LinkKind::identity}, CorrelationKind::independence, Vector::Zero(4));
    CHECK(fit.converged);
    CHECK(sup(fit.beta - oracle::stacked_least_squares(data)) < 1e-8);
    CHECK(fit.score_norm <= 1e-8);
}

TEST_CASE("noise-free data are fitted exactly")
{
    std::mt19937_64 rng(17);
    auto data = oracle::random_clusters(rng, 10, 4, 3, 0.0);
    const Vector truth = oracle::stacked_least_squares(data);
    const GeeFit fit = fit_mqle(data, {LinkKind::identity}, CorrelationKind::ar1, initial_beta(data, {LinkKind::identity}));
    CHECK(fit.converged);
    CHECK(sup(fit.beta - truth) < 1e-10);
}

TEST_CASE("logistic fit converges")
{
    std::mt19937_64 rng(18);
    const Vector beta{{0.6, -0.5, 0.4}};
    const auto data = logistic_clusters(rng, 200, 3, beta);
    const GeeFit fit = fit_mqle(data, {LinkKind::logit}, CorrelationKind::ar1, initial_beta(data, {LinkKind::logit}));
    REQUIRE(fit.converged);
    CHECK(score(data, fit.beta, fit.model({LinkKind::logit})).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(sup(fit.H - fit.H.transpose()) == 0.0);
    Eigen::SelfAdjointEigenSolver<Matrix> es(fit.M);
    CHECK(es.eigenvalues().minCoeff() > -1e-10);
    CHECK(fit.Rbar.diagonal().minCoeff() >= 0.0);
}

TEST_CASE("cluster order does not matter")
{
    std::mt19937_64 rng(19);
    auto data = oracle::random_clusters(rng, 12, 3, 3);
    auto shuffled = data;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const LinkSpec link{LinkKind::identity};
    const GeeFit a = fit_mqle(data, link, CorrelationKind::exchangeable, Vector::Zero(3));
    const GeeFit b = fit_mqle(shuffled, link, CorrelationKind::exchangeable, Vector::Zero(3));
    CHECK(sup(a.beta - b.beta) < 1e-12);
    CHECK(sup(a.H - b.H) < 1e-12 * sup(a.H));
    CHECK(sup(a.M - b.M) < 1e-12 * std::max(1.0, sup(a.M)));
    CHECK(sup(a.G - b.G) < 1e-12 * sup(a.G));
    CHECK(sup(rbar(data, a.beta, link) - rbar(shuffled, a.beta, link)) < 1e-12);
}

TEST_CASE("rank-deficient designs")
{
    std::vector<ClusterObservation> data(3);
    for (auto& c : data) {
        c.X = Matrix{{1.0, 2.0}, {1.0, 2.0}};
        c.y = Vector{{0.1, 0.2}};
    }
    CHECK_THROWS_AS(initial_beta(data, {LinkKind::identity}), RankDeficiencyError);
}

TEST_CASE("cluster validation")
{
    std::vector<ClusterObservation> data(2);
    data[0].X = Matrix::Ones(2, 2);
    data[0].y = Vector::Ones(2);
    data[1].X = Matrix::Ones(3, 2);
    data[1].y = Vector::Ones(3);
    CHECK_THROWS_AS(validate_clusters(data), DataError);
    data[1].X = Matrix::Ones(2, 2);
    data[1].y = Vector::Ones(2);
    data[1].y(0) = std::nan("");
    CHECK_THROWS_AS(validate_clusters(data), DataError);
}

TEST_CASE("QIC")
{
    std::mt19937_64 rng(20);
    const auto data = oracle::random_clusters(rng, 40, 4, 3);
    const LinkSpec link{LinkKind::identity};
    const GeeFit fit = fit_mqle(data, link, CorrelationKind::independence, Vector::Zero(3));
    CHECK(qic(fit, data, link) == qic(fit, data, link));

    // Penalty is 2p when the sandwich collapses to the model-based variance.
    GeeFit collapsed = fit;
    collapsed.M = fit.H;
    double quasi = 0.0;
    for (const auto& c : data) {
        quasi += -0.5 * (c.y - c.X * fit.beta).squaredNorm();
    }
    const double expected = -2.0 * quasi / fit.phi_hat + 2.0 * 3.0;
    CHECK(qic(collapsed, data, link) == doctest::Approx(expected).epsilon(1e-10));

    GeeFit unconverged = fit;
    unconverged.converged = false;
    CHECK_THROWS(qic(unconverged, data, link));
}

TEST_CASE("QIC prefers the generating structure")
{
    int wins = 0;
    for (int rep = 0; rep < 100; ++rep) {
        std::mt19937_64 rng(1000 + static_cast<unsigned>(rep));
        std::normal_distribution<double> z;
        std::vector<ClusterObservation> data(80);
        for (auto& c : data) {
            c.X.resize(4, 2);
            c.y.resize(4);
            double prev = z(rng);
            for (Index j = 0; j < 4; ++j) {
                c.X(j, 0) = z(rng);
                c.X(j, 1) = z(rng);
                const double e = j == 0 ? prev : 0.7 * prev + std::sqrt(1.0 - 0.49) * z(rng);
                prev = e;
                c.y(j) = c.X(j, 0) - 0.5 * c.X(j, 1) + e;
            }
        }
        const LinkSpec link{LinkKind::identity};
        const GeeFit ar = fit_mqle(data, link, CorrelationKind::ar1, Vector::Zero(2));
        const GeeFit ind = fit_mqle(data, link, CorrelationKind::independence, Vector::Zero(2));
        wins += qic(ar, data, link) < qic(ind, data, link);
    }
    CHECK(wins >= 60);
}

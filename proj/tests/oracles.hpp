#pragma once

// Independent reference computations for the tests. Nothing here calls into the
// library's numerical kernels: matrices are assembled term by term, inverses go
// through full-pivot LU or SVD, and the chi-square CDF has its own series.

#include "seqgee/model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

using seqgee::ClusterObservation;
using seqgee::CorrelationKind;
using seqgee::Index;
using seqgee::LinkKind;
using seqgee::Matrix;
using seqgee::Vector;

inline double logistic(double t) { return static_cast<double>(1.0L / (1.0L + std::exp(-static_cast<long double>(t)))); }

inline Matrix correlation(CorrelationKind kind, double alpha, Index m)
{
    Matrix R = Matrix::Identity(m, m);
    for (Index j = 0; j < m; ++j) {
        for (Index k = 0; k < m; ++k) {
            if (j == k) {
                continue;
            }
            if (kind == CorrelationKind::exchangeable) {
                R(j, k) = alpha;
            } else if (kind == CorrelationKind::ar1) {
                R(j, k) = std::pow(alpha, static_cast<double>(std::abs(j - k)));
            }
        }
    }
    return R;
}

inline Matrix inverse(const Matrix& a) { return a.fullPivLu().inverse(); }

inline Matrix pinv(const Matrix& a)
{
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector& s = svd.singularValues();
    const double tol = std::numeric_limits<double>::epsilon() * static_cast<double>(a.rows()) * s(0);
    Vector s_inv = Vector::Zero(s.size());
    for (Index i = 0; i < s.size(); ++i) {
        if (s(i) > tol) {
            s_inv(i) = 1.0 / s(i);
        }
    }
    return svd.matrixV() * s_inv.asDiagonal() * svd.matrixU().transpose();
}

inline double det(const Matrix& a) { return a.fullPivLu().determinant(); }

struct Dense {
    Vector score;
    Matrix H;
    Matrix M;
};

// Score, H and M written out as in the estimating equations with V = phi A^{1/2} R A^{1/2}.
inline Dense assemble(const std::vector<ClusterObservation>& data, const Vector& beta, LinkKind link,
                      CorrelationKind kind, double alpha, double phi)
{
    const Index p = beta.size();
    Dense out{Vector::Zero(p), Matrix::Zero(p, p), Matrix::Zero(p, p)};
    for (const ClusterObservation& c : data) {
        const Index m = c.y.size();
        Vector mu(m);
        Vector a(m);
        Vector v(m);
        for (Index j = 0; j < m; ++j) {
            const double eta = c.X.row(j).dot(beta);
            if (link == LinkKind::identity) {
                mu(j) = eta;
                a(j) = 1.0;
                v(j) = 1.0;
            } else {
                mu(j) = logistic(eta);
                a(j) = mu(j) * (1.0 - mu(j));
                v(j) = a(j);
            }
        }
        const Matrix A = a.asDiagonal();
        const Matrix root = v.cwiseSqrt().asDiagonal();
        const Matrix V = phi * root * correlation(kind, alpha, m) * root;
        const Matrix V_inv = inverse(V);
        const Vector e = c.y - mu;
        const Matrix D = c.X.transpose() * A * V_inv;
        out.score += D * e;
        out.H += D * A * c.X;
        out.M += D * e * e.transpose() * D.transpose();
    }
    return out;
}

inline Vector stacked_least_squares(const std::vector<ClusterObservation>& data)
{
    const Index m = data.front().y.size();
    const Index p = data.front().X.cols();
    Matrix X(static_cast<Index>(data.size()) * m, p);
    Vector y(X.rows());
    for (std::size_t i = 0; i < data.size(); ++i) {
        X.middleRows(static_cast<Index>(i) * m, m) = data[i].X;
        y.segment(static_cast<Index>(i) * m, m) = data[i].y;
    }
    return X.colPivHouseholderQr().solve(y);
}

// Regularized lower incomplete gamma P(s, x): series below s + 1, Lentz continued fraction above.
inline long double gamma_p(long double s, long double x)
{
    if (x <= 0.0L) {
        return 0.0L;
    }
    const long double log_prefix = s * std::log(x) - x - std::lgamma(s);
    if (x < s + 1.0L) {
        long double term = 1.0L / s;
        long double sum = term;
        for (int n = 1; n < 100000; ++n) {
            term *= x / (s + n);
            sum += term;
            if (std::fabs(term) < std::fabs(sum) * 1e-21L) {
                break;
            }
        }
        return sum * std::exp(log_prefix);
    }
    const long double tiny = 1e-300L;
    long double b = x + 1.0L - s;
    long double c = 1.0L / tiny;
    long double d = 1.0L / b;
    long double h = d;
    for (int n = 1; n < 100000; ++n) {
        const long double an = -n * (n - s);
        b += 2.0L;
        d = an * d + b;
        if (std::fabs(d) < tiny) {
            d = tiny;
        }
        c = b + an / c;
        if (std::fabs(c) < tiny) {
            c = tiny;
        }
        d = 1.0L / d;
        const long double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0L) < 1e-21L) {
            break;
        }
    }
    return 1.0L - std::exp(log_prefix) * h;
}

inline double chi2_cdf(int df, double x) { return static_cast<double>(gamma_p(0.5L * df, 0.5L * x)); }

// Plain bisection on the CDF.
inline double chi2_quantile(int df, double prob)
{
    long double lo = 0.0L;
    long double hi = 1.0L;
    while (gamma_p(0.5L * df, 0.5L * hi) < prob) {
        hi *= 2.0L;
    }
    for (int i = 0; i < 200; ++i) {
        const long double mid = 0.5L * (lo + hi);
        (gamma_p(0.5L * df, 0.5L * mid) < prob ? lo : hi) = mid;
    }
    return static_cast<double>(0.5L * (lo + hi));
}

inline Matrix random_spd(std::mt19937_64& rng, Index p, double lo = 0.5, double hi = 5.0)
{
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix g(p, p);
    for (Index i = 0; i < p; ++i) {
        for (Index j = 0; j < p; ++j) {
            g(i, j) = z(rng);
        }
    }
    const Matrix q = g.householderQr().householderQ();
    Vector ev(p);
    for (Index i = 0; i < p; ++i) {
        ev(i) = u(rng);
    }
    return q * ev.asDiagonal() * q.transpose();
}

inline std::vector<ClusterObservation> random_clusters(std::mt19937_64& rng, int n, Index m, Index p, double noise = 1.0)
{
    std::normal_distribution<double> z;
    std::vector<ClusterObservation> out;
    Vector beta(p);
    for (Index k = 0; k < p; ++k) {
        beta(k) = z(rng);
    }
    for (int i = 0; i < n; ++i) {
        ClusterObservation c;
        c.id = i;
        c.X.resize(m, p);
        c.y.resize(m);
        for (Index j = 0; j < m; ++j) {
            for (Index k = 0; k < p; ++k) {
                c.X(j, k) = z(rng);
            }
            c.y(j) = c.X.row(j).dot(beta) + noise * z(rng);
        }
        out.push_back(std::move(c));
    }
    return out;
}

inline std::vector<Index> positions(const std::vector<int>& indicators)
{
    std::vector<Index> out;
    for (std::size_t j = 0; j < indicators.size(); ++j) {
        if (indicators[j]) {
            out.push_back(static_cast<Index>(j));
        }
    }
    return out;
}

inline Matrix block(const Matrix& a, const std::vector<Index>& idx)
{
    Matrix out(static_cast<Index>(idx.size()), static_cast<Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < idx.size(); ++j) {
            out(static_cast<Index>(i), static_cast<Index>(j)) = a(idx[i], idx[j]);
        }
    }
    return out;
}

// Selected block of the full inverse of Sigma = H M^{-1} H, then inverted back.
inline Matrix sigma_tilde_11(const Matrix& H, const Matrix& M, const std::vector<int>& indicators)
{
    const Matrix sigma = H * inverse(M) * H;
    return inverse(block(inverse(sigma), positions(indicators)));
}

// Largest eigenvalue of I (H M^{-1} H)^+ I with a Moore-Penrose inverse.
inline double nu_max(const Matrix& H, const Matrix& M, const std::vector<int>& indicators)
{
    const Matrix sigma = H * inverse(M) * H;
    Matrix mask = Matrix::Zero(H.rows(), H.cols());
    for (std::size_t j = 0; j < indicators.size(); ++j) {
        mask(static_cast<Index>(j), static_cast<Index>(j)) = indicators[j];
    }
    const Matrix masked = mask * pinv(sigma) * mask;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (masked + masked.transpose()));
    return es.eigenvalues().maxCoeff();
}

// det(G_sel + g_sel) with g assembled from A^{1/2} X and the inverse of Rbar.
inline double d_criterion(const Matrix& G, const ClusterObservation& c, const Vector& beta, LinkKind link,
                          const Matrix& rbar, const std::vector<int>& indicators)
{
    const std::vector<Index> sel = positions(indicators);
    const Index m = c.y.size();
    Vector root(m);
    for (Index j = 0; j < m; ++j) {
        const double eta = c.X.row(j).dot(beta);
        root(j) = link == LinkKind::identity ? 1.0 : std::sqrt(logistic(eta) * (1.0 - logistic(eta)));
    }
    Matrix Xs(m, static_cast<Index>(sel.size()));
    for (std::size_t k = 0; k < sel.size(); ++k) {
        Xs.col(static_cast<Index>(k)) = c.X.col(sel[k]);
    }
    const Matrix U = root.asDiagonal() * Xs;
    return det(block(G, sel) + U.transpose() * inverse(rbar) * U);
}

}  // namespace oracle

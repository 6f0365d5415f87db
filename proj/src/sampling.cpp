#include "seqgee/sampling.hpp"

#include "seqgee/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace seqgee {

DataPool::DataPool(std::vector<ClusterObservation> clusters, std::uint64_t rng_seed)
    : clusters_(std::move(clusters)), recruited_(clusters_.size(), false), rng_seed_(rng_seed)
{
    validate_clusters(clusters_);
}

std::vector<std::size_t> DataPool::inactive_indices() const
{
    std::vector<std::size_t> out;
    out.reserve(inactive_count());
    for (std::size_t i = 0; i < clusters_.size(); ++i) {
        if (!recruited_[i]) {
            out.push_back(i);
        }
    }
    return out;
}

void DataPool::recruit(std::size_t index)
{
    if (index >= clusters_.size()) {
        throw InvariantError("recruit: index " + std::to_string(index) + " is outside the pool");
    }
    if (recruited_[index]) {
        throw InvariantError("recruit: cluster " + std::to_string(clusters_[index].id) + " is already recruited");
    }
    recruited_[index] = true;
    order_.push_back(index);
}

std::string_view to_string(SelectorKind kind) { return kind == SelectorKind::random ? "random" : "d_optimal"; }

std::size_t select_random(const DataPool& pool, Rng& rng)
{
    const std::size_t remaining = pool.inactive_count();
    if (remaining == 0) {
        throw PoolExhaustedError("no inactive clusters left in the pool");
    }
    std::uniform_int_distribution<std::size_t> pick(0, remaining - 1);
    std::size_t target = pick(rng);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool.is_recruited(i)) {
            continue;
        }
        if (target == 0) {
            return i;
        }
        --target;
    }
    throw InvariantError("select_random: inactive count out of sync with pool mask");
}

std::vector<Index> selected_positions(const std::vector<int>& indicators)
{
    std::vector<Index> out;
    for (std::size_t j = 0; j < indicators.size(); ++j) {
        if (indicators[j] != 0) {
            out.push_back(static_cast<Index>(j));
        }
    }
    return out;
}

Matrix select_block(const Matrix& a, const std::vector<Index>& rows, const std::vector<Index>& cols)
{
    Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
            out(static_cast<Index>(i), static_cast<Index>(j)) = a(rows[i], cols[j]);
        }
    }
    return out;
}

namespace {

double gain_with_selection(const Matrix& g_sel_inverse, const ClusterObservation& candidate, const Vector& beta,
                           const LinkSpec& link, const Matrix& rbar, const std::vector<Index>& sel)
{
    const MeanDerivative md = mean_and_derivative(link, candidate.X, beta);
    const Vector d = md.a.cwiseMax(kDerivativeFloor).cwiseSqrt();
    Matrix z(candidate.m(), static_cast<Index>(sel.size()));
    for (std::size_t k = 0; k < sel.size(); ++k) {
        z.col(static_cast<Index>(k)) = d.cwiseProduct(candidate.X.col(sel[k]));
    }
    const Matrix inner = rbar + z * g_sel_inverse * z.transpose();
    return inner.determinant();
}

}  // namespace

double d_gain(const Matrix& g_sel_inverse, const ClusterObservation& candidate, const Vector& beta,
              const LinkSpec& link, const Matrix& rbar, const std::vector<int>& indicators)
{
    const std::vector<Index> sel = selected_positions(indicators);
    if (sel.empty()) {
        throw NoVariablesSelectedError("d_gain: no variables selected");
    }
    if (g_sel_inverse.rows() != static_cast<Index>(sel.size())) {
        throw NumericalDomainError("d_gain: G_sel^{-1} does not match the number of selected variables");
    }
    return gain_with_selection(g_sel_inverse, candidate, beta, link, rbar, sel);
}

std::size_t select_d_optimal(const DataPool& pool, const DOptimalState& state)
{
    if (pool.inactive_count() == 0) {
        throw PoolExhaustedError("no inactive clusters left in the pool");
    }
    const std::vector<Index> sel = selected_positions(state.indicators);
    if (sel.empty()) {
        throw NoVariablesSelectedError("select_d_optimal: no variables selected");
    }
    const Matrix g_sel = select_block(state.G, sel, sel);
    Eigen::LLT<Matrix> llt(g_sel);
    if (llt.info() != Eigen::Success) {
        throw LinearSolveError("select_d_optimal: G restricted to the selected variables is singular");
    }
    const Matrix g_sel_inverse = llt.solve(Matrix::Identity(g_sel.rows(), g_sel.cols()));

    std::size_t best = pool.size();
    double best_gain = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool.is_recruited(i)) {
            continue;
        }
        const ClusterObservation& c = pool.cluster(i);
        const double gain = gain_with_selection(g_sel_inverse, c, state.beta, state.link, state.rbar, sel);
        if (best == pool.size() || gain > best_gain || (gain == best_gain && c.id < pool.cluster(best).id)) {
            best = i;
            best_gain = gain;
        }
    }
    return best;
}

}  // namespace seqgee

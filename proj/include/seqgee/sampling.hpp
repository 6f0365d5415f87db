#pragma once

#include "seqgee/model.hpp"

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace seqgee {

using Rng = std::mt19937_64;

/// Candidate pool split into the recruited set and the inactive set.
/// Recruitment is irreversible.
class DataPool {
public:
    DataPool() = default;
    explicit DataPool(std::vector<ClusterObservation> clusters, std::uint64_t rng_seed = 0);

    std::size_t size() const { return clusters_.size(); }
    std::size_t recruited_count() const { return order_.size(); }
    std::size_t inactive_count() const { return clusters_.size() - order_.size(); }
    bool is_recruited(std::size_t index) const { return recruited_.at(index); }
    std::uint64_t rng_seed() const { return rng_seed_; }

    const ClusterObservation& cluster(std::size_t index) const { return clusters_.at(index); }
    const std::vector<ClusterObservation>& clusters() const { return clusters_; }

    /// Pool indices in recruitment order.
    const std::vector<std::size_t>& recruitment_order() const { return order_; }
    std::vector<std::size_t> inactive_indices() const;

    /// Throws InvariantError on double recruitment or an out-of-range index.
    void recruit(std::size_t index);

private:
    std::vector<ClusterObservation> clusters_;
    std::vector<bool> recruited_;
    std::vector<std::size_t> order_;
    std::uint64_t rng_seed_ = 0;
};

enum class SelectorKind { random, d_optimal };

std::string_view to_string(SelectorKind kind);

/// Uniform over inactive clusters. Throws PoolExhaustedError when none remain.
std::size_t select_random(const DataPool& pool, Rng& rng);

/// det(Rbar + Z G_sel^{-1} Z') with Z = A^{1/2} X restricted to the selected columns.
/// Proportional to det(G_sel + g_sel) with a factor shared by all candidates.
double d_gain(const Matrix& g_sel_inverse, const ClusterObservation& candidate, const Vector& beta,
              const LinkSpec& link, const Matrix& rbar, const std::vector<int>& indicators);

struct DOptimalState {
    Vector beta;
    Matrix rbar;
    Matrix G;
    std::vector<int> indicators;
    LinkSpec link;
};

/// Argmax of d_gain over the inactive set; ties go to the lowest cluster id.
std::size_t select_d_optimal(const DataPool& pool, const DOptimalState& state);

/// Rows and columns of a square matrix at the given positions.
Matrix select_block(const Matrix& a, const std::vector<Index>& rows, const std::vector<Index>& cols);
std::vector<Index> selected_positions(const std::vector<int>& indicators);

}  // namespace seqgee

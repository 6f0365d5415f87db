#pragma once

#include "seqgee/model.hpp"
#include "seqgee/sampling.hpp"
#include "seqgee/shrinkage.hpp"

#include <optional>
#include <string>
#include <vector>

namespace seqgee {

struct StoppingPolicy {
    double d = 0.2;            // half-length of the largest ellipsoid axis
    double conf_level = 0.95;  // 1 - alpha
    int n0 = 25;               // pilot size; the stopping rule is never checked below it
    ShrinkConfig shrink;
    bool shrinkage_enabled = true;

    void validate() const;
};

struct EllipsoidSet {
    std::vector<Index> selected;
    Vector center;      // selected components of the shrunken estimate
    Matrix shape;       // Sigma~_11 on the selected block
    double radius_sq = 0.0;
    Index p = 0;        // full parameter dimension

    double max_semi_axis() const;
};

struct PartitionedSigma {
    Matrix sigma_tilde_11;
    std::vector<Index> selected;
};

/// Sigma~_11 from the blocks of Sigma = H M^{-1} H, selected coordinates first:
/// [S11^{-1} + S11^{-1} S12 S22.1^{-1} S21 S11^{-1}]^{-1}, S22.1 = S22 - S21 S11^{-1} S12.
PartitionedSigma partition_sigma(const Matrix& H, const Matrix& M, const std::vector<int>& indicators);

/// Largest eigenvalue of the selected block of (H M^{-1} H)^{-1} = H^{-1} M H^{-1}.
double nu_max(const Matrix& H, const Matrix& M, const std::vector<int>& indicators);

/// a^2 with P(chi2_df <= a^2) = prob.
double chi2_quantile(int df, double prob);

enum class StopDecision { stop, recruit };

StopDecision should_stop(int k, const StoppingPolicy& policy, double nu_k, int p0_hat_k);

EllipsoidSet confidence_set(const GeeFit& fit, const AseResult& ase, const StoppingPolicy& policy);
/// Same, with H and M supplied (the session evaluates them at the shrunken estimate).
EllipsoidSet confidence_set(const InformationMatrices& info, const AseResult& ase, const StoppingPolicy& policy);

bool contains(const EllipsoidSet& ellipsoid, const Vector& beta);

/// The quadratic-form test alone: beta's unselected coordinates are ignored.
bool contains_on_selected(const EllipsoidSet& ellipsoid, const Vector& beta);

/// d^2 N / (a^2 rho(N) nu) with rho(N) = N, which tends to 1 as d -> 0.
double efficiency_ratio(double d, int n_stop, double a_sq, double nu);

/// d^2 N / (a^2 nu) with the unnormalized nu.
double raw_efficiency_ratio(double d, int n_stop, double a_sq, double nu);

struct ModelConfig {
    LinkSpec link;
    CorrelationKind kind = CorrelationKind::independence;
    FitOptions fit;
};

struct StepRecord {
    int k = 0;
    double nu = 0.0;     // NaN while no variable is selected
    double a_sq = 0.0;
    int p0_hat = 0;
    long recruited_id = -1;  // cluster recruited after this check, -1 when none
};

struct SequentialOutcome {
    int n_stop = 0;
    bool stopped = false;          // stopping rule fired
    bool pool_exhausted = false;   // pool ran out first; the final state is emitted anyway
    GeeFit fit;
    AseResult ase;
    InformationMatrices info;  // H and M at the shrunken estimate; these drive nu and the ellipsoid
    std::optional<EllipsoidSet> ellipsoid;
    double nu_stop = 0.0;
    double a_sq_stop = 0.0;
    double efficiency_ratio = 0.0;
    double efficiency_ratio_raw = 0.0;
    int fit_failures = 0;
    std::vector<StepRecord> history;
    std::vector<long> recruited_ids;
    std::vector<std::string> warnings;
};

/// Pilot of n0 random clusters, then: recruit one cluster, refit, shrink, check the rule.
SequentialOutcome run_sequential(DataPool& pool, SelectorKind selector, const ModelConfig& model,
                                 const StoppingPolicy& policy, Rng& rng);

}  // namespace seqgee

#pragma once

#include "seqgee/datagen.hpp"
#include "seqgee/sequential.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace seqgee {

enum class Method { oracle, ase_d, ase_r, gee_full };

std::string_view to_string(Method method);
Method parse_method(std::string_view name);

enum class ScenarioKind { continuous, logistic, external };

std::string_view to_string(ScenarioKind kind);
ScenarioKind parse_scenario(std::string_view name);

/// Column mapping for a long-format CSV pool.
struct PoolSchema {
    std::string cluster_column = "cluster";
    std::string order_column = "order";
    std::string response_column = "y";
    std::vector<std::string> covariates;  // empty: every other column
    bool intercept = false;
    bool standardize = false;
    LinkKind link = LinkKind::identity;
};

/// Reads a schema file:
///   [pool]
///   cluster = id
///   order = time
///   response = y
///   covariates = x1, x2, x3
///   intercept = false
///   standardize = true
///   link = identity
PoolSchema load_pool_schema(const std::string& path);

struct ColumnScaling {
    std::string name;
    double mean = 0.0;
    double sd = 1.0;
};

struct LoadedPool {
    std::vector<ClusterObservation> clusters;
    std::vector<std::string> covariate_names;
    std::vector<ColumnScaling> scaling;  // empty unless standardized
};

/// Throws DataError on ragged clusters (naming the ids), non-numeric cells (row and column),
/// missing columns and duplicate order values within a cluster.
LoadedPool load_csv_pool(const std::string& path, const PoolSchema& schema);

struct ExperimentConfig {
    ScenarioKind scenario = ScenarioKind::continuous;
    Method method = Method::ase_d;
    StoppingPolicy policy;
    CorrelationKind fit_structure = CorrelationKind::ar1;
    CorrelationKind gen_structure = CorrelationKind::ar1;
    double gen_alpha = 0.7;
    int pk = 20;
    CovariateLayout layout = CovariateLayout::per_cluster;
    int pool_size = 0;  // 0 keeps the scenario default
    FitOptions fit;
    int replications = 200;
    std::uint64_t base_seed = 1;
    int threads = 1;

    // external pools only
    std::string data_path;
    PoolSchema schema;

    /// Pilot 25, per-cluster covariates, 4:20 design, AR(1) 0.7, epsilon 2.
    static ExperimentConfig continuous_preset();
    /// Pilot 200, 3:12 design, AR(1) 0.3, epsilon 3.75.
    static ExperimentConfig logistic_preset();

    void validate() const;
    std::string cell_label() const;
};

struct ReplicationMetrics {
    int index = 0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;

    int n_stop = 0;
    bool stopped = false;
    std::optional<bool> covered;           // empty for external pools
    std::optional<bool> covered_selected;  // same test on the selected coordinates only
    double efficiency_ratio = 0.0;
    double efficiency_ratio_raw = 0.0;
    int num_correct_zero = 0;
    int num_incorrect_zero = 0;
    int p0_hat = 0;
    double alpha_hat = 0.0;
    bool pool_exhausted = false;
    int clamp_events = 0;
    int fit_failures = 0;
    std::vector<int> indicators;  // over the full covariate list
    std::vector<double> beta;     // shrunken estimate, full length
    double max_full_axis = 0.0;   // 0 when no ellipsoid was emitted
    double wall_time = 0.0;       // seconds
};

struct Report {
    ExperimentConfig config;
    int replications = 0;
    int failures = 0;
    double mean_n = 0.0;
    double sd_n = 0.0;
    std::optional<double> coverage;
    std::optional<double> coverage_selected;
    double mean_efficiency_ratio = 0.0;
    double mean_efficiency_ratio_raw = 0.0;
    std::optional<double> mean_num_correct_zero;
    std::optional<double> mean_num_incorrect_zero;
    int n_plus = 0;
    double mean_p0_hat = 0.0;
    double mean_alpha_hat = 0.0;
    long clamp_events = 0;
    std::vector<std::string> covariate_names;
    std::vector<double> selection_frequency;
    std::vector<ColumnScaling> scaling;
    std::vector<ReplicationMetrics> rows;  // replication-index order
};

/// Pool for one replication, already restricted to the true support for the oracle method.
struct ReplicationPool {
    std::vector<ClusterObservation> clusters;
    std::optional<Vector> beta0;     // full-length truth, synthetic scenarios only
    std::vector<Index> columns;      // full-length positions of the pool's columns
    int clamp_events = 0;
};

/// Experiment-wide state shared read-only across replications (the loaded external pool).
struct ExperimentContext {
    std::optional<LoadedPool> external;
};

ExperimentContext prepare_experiment(const ExperimentConfig& config);

ReplicationPool build_replication_pool(const ExperimentConfig& config, const ExperimentContext& context, Rng& rng);

/// seed = base_seed + index. Library errors mark the row failed; they are never dropped.
ReplicationMetrics run_replication(const ExperimentConfig& config, const ExperimentContext& context, int index);

/// Aggregates rows in index order; failed rows are counted but excluded from the means.
Report aggregate(const ExperimentConfig& config, std::vector<ReplicationMetrics> rows,
                 const ExperimentContext& context);

/// Replications run on config.threads workers; aggregation is in index order.
Report run_experiment(const ExperimentConfig& config);
Report run_experiment(const ExperimentConfig& config, const ExperimentContext& context);

/// report.csv, report.json and replications.jsonl under dir (created if missing).
void write_reports(const std::string& dir, const std::vector<Report>& cells);

std::string format_report_table(const std::string& report_json_path);

}  // namespace seqgee

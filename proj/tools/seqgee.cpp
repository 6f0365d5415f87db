// seqgee: sequential GEE estimation experiments from the command line.

#include "seqgee/errors.hpp"
#include "seqgee/harness.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kDataError = 3, kNumericalFailure = 4 };

// Options common to both experiment subcommands. Unset optionals keep the preset value.
struct CommonOptions {
    std::vector<std::string> methods;
    std::vector<double> d;
    std::optional<int> reps;
    std::optional<std::uint64_t> seed;
    std::optional<int> n0;
    std::optional<double> epsilon;
    std::optional<double> conf_level;
    std::optional<std::string> fit_structure;
    std::optional<int> threads;
    std::optional<int> max_iter;
    std::string out = "seqgee-out";
};

struct SimulateOptions {
    std::string scenario = "continuous";
    std::optional<double> alpha;
    std::optional<std::string> structure;
    std::optional<int> pk;
    std::optional<std::string> layout;
    std::optional<int> pool_size;
    std::string save_pool;
};

struct PoolOptions {
    std::string data;
    std::string schema;
    bool standardize = false;
    bool intercept = false;
    std::optional<std::string> link;
};

void add_common(CLI::App* cmd, CommonOptions& o)
{
    cmd->add_option("--method", o.methods, "oracle, ase-d, ase-r, gee (comma-separated list allowed)")
        ->delimiter(',');
    cmd->add_option("--d", o.d, "half-length of the largest ellipsoid axis (list allowed)")->delimiter(',');
    cmd->add_option("--reps", o.reps, "replications per cell");
    cmd->add_option("--seed", o.seed, "base seed; replication i uses seed + i");
    cmd->add_option("--n0", o.n0, "pilot size");
    cmd->add_option("--epsilon", o.epsilon, "shrinkage threshold");
    cmd->add_option("--conf-level", o.conf_level, "confidence level of the ellipsoid");
    cmd->add_option("--fit-structure", o.fit_structure, "working correlation: ind, exch, ar1");
    cmd->add_option("--threads", o.threads, "worker threads");
    cmd->add_option("--max-iter", o.max_iter, "Fisher scoring iteration budget");
    cmd->add_option("--out", o.out, "output directory");
}

void apply_common(const CommonOptions& o, seqgee::ExperimentConfig& c)
{
    if (o.reps) {
        c.replications = *o.reps;
    }
    if (o.seed) {
        c.base_seed = *o.seed;
    }
    if (o.n0) {
        c.policy.n0 = *o.n0;
    }
    if (o.epsilon) {
        c.policy.shrink = c.policy.shrink.with_epsilon(*o.epsilon);
    }
    if (o.conf_level) {
        c.policy.conf_level = *o.conf_level;
    }
    if (o.fit_structure) {
        c.fit_structure = seqgee::parse_correlation(*o.fit_structure);
    }
    if (o.threads) {
        c.threads = *o.threads;
    }
    if (o.max_iter) {
        c.fit.max_iter = *o.max_iter;
    }
}

// One cell per (method, d) pair, methods outermost.
std::vector<seqgee::ExperimentConfig> expand_cells(const seqgee::ExperimentConfig& base, const CommonOptions& o,
                                                   seqgee::Method default_method)
{
    std::vector<seqgee::Method> methods;
    for (const std::string& m : o.methods) {
        methods.push_back(seqgee::parse_method(m));
    }
    if (methods.empty()) {
        methods.push_back(default_method);
    }
    std::vector<double> ds = o.d;
    if (ds.empty()) {
        ds.push_back(base.policy.d);
    }
    std::vector<seqgee::ExperimentConfig> cells;
    for (seqgee::Method m : methods) {
        for (double d : ds) {
            seqgee::ExperimentConfig c = base;
            c.method = m;
            c.policy.d = d;
            c.validate();
            cells.push_back(std::move(c));
        }
    }
    return cells;
}

int run_cells(const std::vector<seqgee::ExperimentConfig>& cells, const std::string& out)
{
    const seqgee::ExperimentContext context = seqgee::prepare_experiment(cells.front());
    std::vector<seqgee::Report> reports;
    bool any_cell_all_failed = false;
    for (const seqgee::ExperimentConfig& cell : cells) {
        std::cerr << "running " << cell.cell_label() << " (" << cell.replications << " replications)\n";
        reports.push_back(seqgee::run_experiment(cell, context));
        const seqgee::Report& r = reports.back();
        if (r.failures > 0) {
            std::cerr << "  " << r.failures << " replication(s) failed; see report.json\n";
        }
        any_cell_all_failed = any_cell_all_failed || r.failures == r.replications;
    }
    seqgee::write_reports(out, reports);
    std::cout << seqgee::format_report_table((std::filesystem::path(out) / "report.json").string());
    return any_cell_all_failed ? kNumericalFailure : kOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Sequential GEE estimation with adaptive shrinkage and D-optimal recruitment"};
    app.set_config("--config", "", "INI/TOML file with one section per subcommand; flags override it");
    app.require_subcommand(1);

    CommonOptions sim_common;
    SimulateOptions sim;
    CLI::App* simulate = app.add_subcommand("simulate", "replicate a synthetic scenario");
    simulate->add_option("--scenario", sim.scenario, "continuous or logistic")
        ->check(CLI::IsMember({"continuous", "logistic"}));
    add_common(simulate, sim_common);
    simulate->add_option("--alpha", sim.alpha, "generator correlation parameter");
    simulate->add_option("--structure", sim.structure, "generator correlation: ind, exch, ar1");
    simulate->add_option("--pk", sim.pk, "number of zero coefficients");
    simulate->add_option("--layout", sim.layout, "continuous covariates: per_cluster or per_row");
    simulate->add_option("--pool-size", sim.pool_size, "clusters in each generated pool");
    simulate->add_option("--save-pool", sim.save_pool, "write the first replication's pool as CSV");

    CommonOptions pool_common;
    PoolOptions pool;
    CLI::App* run_pool = app.add_subcommand("run-pool", "run the procedure on a CSV pool");
    run_pool->add_option("--data", pool.data, "long-format CSV pool")->required();
    run_pool->add_option("--schema", pool.schema, "schema file mapping the CSV columns");
    add_common(run_pool, pool_common);
    run_pool->add_flag("--standardize", pool.standardize, "center and scale every covariate");
    run_pool->add_flag("--intercept", pool.intercept, "prepend an intercept column");
    run_pool->add_option("--link", pool.link, "identity or logit");

    std::string report_in;
    CLI::App* report = app.add_subcommand("report", "print the tables of an earlier run");
    report->add_option("--in", report_in, "output directory of simulate or run-pool")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*simulate) {
            const seqgee::ScenarioKind kind = seqgee::parse_scenario(sim.scenario);
            seqgee::ExperimentConfig base = kind == seqgee::ScenarioKind::continuous
                                                ? seqgee::ExperimentConfig::continuous_preset()
                                                : seqgee::ExperimentConfig::logistic_preset();
            apply_common(sim_common, base);
            if (sim.alpha) {
                base.gen_alpha = *sim.alpha;
            }
            if (sim.structure) {
                base.gen_structure = seqgee::parse_correlation(*sim.structure);
            }
            if (sim.pk) {
                base.pk = *sim.pk;
            }
            if (sim.layout) {
                base.layout = seqgee::parse_covariate_layout(*sim.layout);
            }
            if (sim.pool_size) {
                base.pool_size = *sim.pool_size;
            }
            const auto cells = expand_cells(base, sim_common, seqgee::Method::ase_d);
            if (!sim.save_pool.empty()) {
                seqgee::Rng rng(cells.front().base_seed);
                seqgee::ExperimentConfig full = cells.front();
                full.method = seqgee::Method::ase_r;
                const seqgee::ReplicationPool rp = seqgee::build_replication_pool(full, {}, rng);
                seqgee::write_pool_csv(sim.save_pool, rp.clusters);
            }
            return run_cells(cells, sim_common.out);
        }
        if (*run_pool) {
            seqgee::ExperimentConfig base;
            base.scenario = seqgee::ScenarioKind::external;
            base.data_path = pool.data;
            base.replications = 50;
            base.policy.n0 = 25;
            if (!pool.schema.empty()) {
                base.schema = seqgee::load_pool_schema(pool.schema);
            }
            base.schema.standardize = base.schema.standardize || pool.standardize;
            base.schema.intercept = base.schema.intercept || pool.intercept;
            if (pool.link) {
                base.schema.link = seqgee::parse_link(*pool.link);
            }
            apply_common(pool_common, base);
            return run_cells(expand_cells(base, pool_common, seqgee::Method::ase_d), pool_common.out);
        }
        std::cout << seqgee::format_report_table((std::filesystem::path(report_in) / "report.json").string());
        return kOk;
    } catch (const seqgee::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kConfigError;
    } catch (const seqgee::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const seqgee::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumericalFailure;
    }
}

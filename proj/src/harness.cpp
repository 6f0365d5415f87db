#include "seqgee/harness.hpp"

#include "seqgee/errors.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace seqgee {

std::string_view to_string(Method method)
{
    switch (method) {
    case Method::oracle:
        return "oracle";
    case Method::ase_d:
        return "ase-d";
    case Method::ase_r:
        return "ase-r";
    case Method::gee_full:
        return "gee";
    }
    return "?";
}

Method parse_method(std::string_view name)
{
    if (name == "oracle") {
        return Method::oracle;
    }
    if (name == "ase-d" || name == "ase_d") {
        return Method::ase_d;
    }
    if (name == "ase-r" || name == "ase_r") {
        return Method::ase_r;
    }
    if (name == "gee" || name == "gee_full" || name == "gee-full") {
        return Method::gee_full;
    }
    throw ConfigError("unknown method '" + std::string(name) + "' (oracle, ase-d, ase-r, gee)");
}

std::string_view to_string(ScenarioKind kind)
{
    switch (kind) {
    case ScenarioKind::continuous:
        return "continuous";
    case ScenarioKind::logistic:
        return "logistic";
    case ScenarioKind::external:
        return "external";
    }
    return "?";
}

ScenarioKind parse_scenario(std::string_view name)
{
    if (name == "continuous") {
        return ScenarioKind::continuous;
    }
    if (name == "logistic") {
        return ScenarioKind::logistic;
    }
    if (name == "external") {
        return ScenarioKind::external;
    }
    throw ConfigError("unknown scenario '" + std::string(name) + "' (continuous, logistic)");
}

ExperimentConfig ExperimentConfig::continuous_preset()
{
    ExperimentConfig c;
    c.scenario = ScenarioKind::continuous;
    c.policy.d = 0.2;
    c.policy.n0 = 25;
    c.policy.shrink = c.policy.shrink.with_epsilon(2.0);
    c.fit_structure = CorrelationKind::ar1;
    c.gen_structure = CorrelationKind::ar1;
    c.gen_alpha = 0.7;
    c.pk = 20;
    c.layout = CovariateLayout::per_cluster;
    return c;
}

ExperimentConfig ExperimentConfig::logistic_preset()
{
    ExperimentConfig c;
    c.scenario = ScenarioKind::logistic;
    c.policy.d = 0.5;
    c.policy.n0 = 200;
    c.policy.shrink = c.policy.shrink.with_epsilon(3.75);
    c.fit_structure = CorrelationKind::ar1;
    c.gen_structure = CorrelationKind::ar1;
    c.gen_alpha = 0.3;
    c.pk = 12;
    return c;
}

void ExperimentConfig::validate() const
{
    policy.validate();
    if (replications < 1) {
        throw ConfigError("replications must be at least 1");
    }
    if (threads < 1) {
        throw ConfigError("threads must be at least 1");
    }
    if (pool_size < 0) {
        throw ConfigError("pool size must be non-negative");
    }
    if (scenario == ScenarioKind::external) {
        if (method == Method::oracle) {
            throw ConfigError("the oracle method needs the true support and is only available for synthetic scenarios");
        }
        if (data_path.empty()) {
            throw ConfigError("external scenario needs a data file");
        }
        return;
    }
    if (pk < 0) {
        throw ConfigError("pk must be non-negative");
    }
    const int m = scenario == ScenarioKind::continuous ? ContinuousScenario{}.m : LogisticScenario{}.m;
    if (!WorkingCorrelation{gen_structure, gen_alpha}.valid_for(m)) {
        std::ostringstream os;
        os << "generator correlation " << gen_alpha << " is not valid for " << to_string(gen_structure)
           << " with m = " << m;
        throw ConfigError(os.str());
    }
    if (scenario == ScenarioKind::logistic && gen_structure != CorrelationKind::ar1) {
        throw ConfigError("the binary generator only produces AR(1) responses");
    }
}

std::string ExperimentConfig::cell_label() const
{
    std::ostringstream os;
    os << to_string(scenario) << '/' << to_string(method) << "/d=" << policy.d;
    return os.str();
}

ExperimentContext prepare_experiment(const ExperimentConfig& config)
{
    config.validate();
    ExperimentContext context;
    if (config.scenario == ScenarioKind::external) {
        context.external = load_csv_pool(config.data_path, config.schema);
    }
    return context;
}

namespace {

LinkSpec scenario_link(const ExperimentConfig& config)
{
    switch (config.scenario) {
    case ScenarioKind::continuous:
        return {LinkKind::identity};
    case ScenarioKind::logistic:
        return {LinkKind::logit};
    case ScenarioKind::external:
        return {config.schema.link};
    }
    return {};
}

std::vector<Index> support_of(const Vector& beta0)
{
    std::vector<Index> out;
    for (Index j = 0; j < beta0.size(); ++j) {
        if (beta0(j) != 0.0) {
            out.push_back(j);
        }
    }
    return out;
}

}  // namespace

ReplicationPool build_replication_pool(const ExperimentConfig& config, const ExperimentContext& context, Rng& rng)
{
    ReplicationPool out;
    switch (config.scenario) {
    case ScenarioKind::continuous: {
        ContinuousScenario s = ContinuousScenario::with_zeros(config.pk, config.gen_structure, config.gen_alpha);
        s.layout = config.layout;
        if (config.pool_size > 0) {
            s.pool_size = config.pool_size;
        }
        out.clusters = gen_continuous_pool(s, rng);
        out.beta0 = s.beta0;
        break;
    }
    case ScenarioKind::logistic: {
        LogisticScenario s = LogisticScenario::with_zeros(config.pk, config.gen_alpha);
        if (config.pool_size > 0) {
            s.pool_size = config.pool_size;
        }
        LogisticPool pool = gen_logistic_pool(s, rng);
        out.clusters = std::move(pool.clusters);
        out.clamp_events = pool.clamp_events;
        out.beta0 = s.beta0;
        break;
    }
    case ScenarioKind::external:
        if (!context.external) {
            throw InvariantError("external scenario without a loaded pool");
        }
        out.clusters = context.external->clusters;
        break;
    }

    const Index p = out.clusters.front().p();
    if (config.method == Method::oracle) {
        out.columns = support_of(*out.beta0);
        Eigen::VectorXi cols(static_cast<Index>(out.columns.size()));
        for (std::size_t k = 0; k < out.columns.size(); ++k) {
            cols(static_cast<Index>(k)) = static_cast<int>(out.columns[k]);
        }
        for (ClusterObservation& c : out.clusters) {
            c.X = Matrix(c.X(Eigen::all, cols));
        }
    } else {
        out.columns.resize(static_cast<std::size_t>(p));
        for (Index j = 0; j < p; ++j) {
            out.columns[static_cast<std::size_t>(j)] = j;
        }
    }
    return out;
}

ReplicationMetrics run_replication(const ExperimentConfig& config, const ExperimentContext& context, int index)
{
    const auto t0 = std::chrono::steady_clock::now();
    ReplicationMetrics r;
    r.index = index;
    r.seed = config.base_seed + static_cast<std::uint64_t>(index);
    try {
        Rng rng(r.seed);
        ReplicationPool rp = build_replication_pool(config, context, rng);
        r.clamp_events = rp.clamp_events;
        const Index p_full = rp.beta0 ? rp.beta0->size() : rp.clusters.front().p();

        DataPool pool(std::move(rp.clusters), r.seed);
        const ModelConfig model{scenario_link(config), config.fit_structure, config.fit};
        StoppingPolicy policy = config.policy;
        policy.shrinkage_enabled = config.method == Method::ase_d || config.method == Method::ase_r;
        const SelectorKind selector = config.method == Method::ase_d ? SelectorKind::d_optimal : SelectorKind::random;

        const SequentialOutcome out = run_sequential(pool, selector, model, policy, rng);
        r.n_stop = out.n_stop;
        r.stopped = out.stopped;
        r.pool_exhausted = out.pool_exhausted;
        r.efficiency_ratio = out.efficiency_ratio;
        r.efficiency_ratio_raw = out.efficiency_ratio_raw;
        r.p0_hat = out.ase.p0_hat;
        r.alpha_hat = out.fit.alpha_hat;
        r.fit_failures = out.fit_failures;

        r.indicators.assign(static_cast<std::size_t>(p_full), 0);
        r.beta.assign(static_cast<std::size_t>(p_full), 0.0);
        for (std::size_t k = 0; k < rp.columns.size(); ++k) {
            const auto j = static_cast<std::size_t>(rp.columns[k]);
            r.indicators[j] = out.ase.indicators[k];
            r.beta[j] = out.ase.beta_ase(static_cast<Index>(k));
        }
        // Zero classification counts only the coordinates the method actually modelled.
        if (rp.beta0) {
            for (Index j : rp.columns) {
                const bool truly_zero = (*rp.beta0)(j) == 0.0;
                const bool declared_zero = r.indicators[static_cast<std::size_t>(j)] == 0;
                r.num_correct_zero += truly_zero && declared_zero;
                r.num_incorrect_zero += !truly_zero && declared_zero;
            }
        }
        if (out.ellipsoid) {
            r.max_full_axis = 2.0 * out.ellipsoid->max_semi_axis();
        }
        if (rp.beta0) {
            bool covered = false;
            bool covered_selected = false;
            if (out.ellipsoid) {
                Vector truth(static_cast<Index>(rp.columns.size()));
                for (std::size_t k = 0; k < rp.columns.size(); ++k) {
                    truth(static_cast<Index>(k)) = (*rp.beta0)(rp.columns[k]);
                }
                covered = contains(*out.ellipsoid, truth);
                covered_selected = contains_on_selected(*out.ellipsoid, truth);
            }
            r.covered = covered;
            r.covered_selected = covered_selected;
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        r.failed = true;
        r.error = e.what();
    }
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

Report aggregate(const ExperimentConfig& config, std::vector<ReplicationMetrics> rows, const ExperimentContext& context)
{
    Report rep;
    rep.config = config;
    rep.replications = static_cast<int>(rows.size());
    const double nan = std::numeric_limits<double>::quiet_NaN();

    double n_sum = 0.0;
    double eff_sum = 0.0;
    double eff_raw_sum = 0.0;
    double numc_sum = 0.0;
    double numic_sum = 0.0;
    double p0_sum = 0.0;
    double alpha_sum = 0.0;
    int covered = 0;
    int covered_selected = 0;
    int covered_rows = 0;
    int ok = 0;
    std::vector<double> selected;
    for (const ReplicationMetrics& r : rows) {
        rep.clamp_events += r.clamp_events;
        if (r.failed) {
            ++rep.failures;
            continue;
        }
        ++ok;
        n_sum += r.n_stop;
        eff_sum += r.efficiency_ratio;
        eff_raw_sum += r.efficiency_ratio_raw;
        numc_sum += r.num_correct_zero;
        numic_sum += r.num_incorrect_zero;
        p0_sum += r.p0_hat;
        alpha_sum += r.alpha_hat;
        rep.n_plus += r.pool_exhausted;
        if (r.covered) {
            ++covered_rows;
            covered += *r.covered;
            covered_selected += r.covered_selected.value_or(false);
        }
        if (selected.empty()) {
            selected.assign(r.indicators.size(), 0.0);
        }
        for (std::size_t j = 0; j < r.indicators.size(); ++j) {
            selected[j] += r.indicators[j];
        }
    }

    if (ok == 0) {
        rep.mean_n = rep.sd_n = rep.mean_efficiency_ratio = rep.mean_efficiency_ratio_raw = nan;
        rep.mean_p0_hat = rep.mean_alpha_hat = nan;
    } else {
        rep.mean_n = n_sum / ok;
        double ss = 0.0;
        for (const ReplicationMetrics& r : rows) {
            if (!r.failed) {
                ss += (r.n_stop - rep.mean_n) * (r.n_stop - rep.mean_n);
            }
        }
        rep.sd_n = ok > 1 ? std::sqrt(ss / (ok - 1)) : 0.0;
        rep.mean_efficiency_ratio = eff_sum / ok;
        rep.mean_efficiency_ratio_raw = eff_raw_sum / ok;
        rep.mean_p0_hat = p0_sum / ok;
        rep.mean_alpha_hat = alpha_sum / ok;
        if (config.scenario != ScenarioKind::external) {
            rep.mean_num_correct_zero = numc_sum / ok;
            rep.mean_num_incorrect_zero = numic_sum / ok;
        }
        for (double& s : selected) {
            s /= ok;
        }
    }
    if (covered_rows > 0) {
        rep.coverage = static_cast<double>(covered) / covered_rows;
        rep.coverage_selected = static_cast<double>(covered_selected) / covered_rows;
    }
    rep.selection_frequency = std::move(selected);

    if (context.external) {
        rep.covariate_names = context.external->covariate_names;
        rep.scaling = context.external->scaling;
    } else {
        for (std::size_t j = 0; j < rep.selection_frequency.size(); ++j) {
            rep.covariate_names.push_back("x" + std::to_string(j + 1));
        }
    }
    rep.rows = std::move(rows);
    return rep;
}

Report run_experiment(const ExperimentConfig& config)
{
    return run_experiment(config, prepare_experiment(config));
}

Report run_experiment(const ExperimentConfig& config, const ExperimentContext& context)
{
    config.validate();
    std::vector<ReplicationMetrics> rows(static_cast<std::size_t>(config.replications));
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&] {
        while (true) {
            const int i = next.fetch_add(1);
            if (i >= config.replications) {
                return;
            }
            try {
                rows[static_cast<std::size_t>(i)] = run_replication(config, context, i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) {
                    first_error = std::current_exception();
                }
                next.store(config.replications);
                return;
            }
        }
    };

    const int n_threads = std::min(config.threads, config.replications);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) {
            pool.emplace_back(worker);
        }
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
    return aggregate(config, std::move(rows), context);
}

}  // namespace seqgee

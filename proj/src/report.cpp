#include "seqgee/harness.hpp"

#include "seqgee/errors.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace seqgee {

namespace {

using nlohmann::json;

std::string fixed(double v, int digits = 6)
{
    if (!std::isfinite(v)) {
        return "NA";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string fixed(const std::optional<double>& v, int digits = 6) { return v ? fixed(*v, digits) : "NA"; }

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
json number_or_null(const std::optional<double>& v) { return v ? number_or_null(*v) : json(nullptr); }

json config_json(const ExperimentConfig& c)
{
    json j;
    j["scenario"] = to_string(c.scenario);
    j["method"] = to_string(c.method);
    j["d"] = c.policy.d;
    j["conf_level"] = c.policy.conf_level;
    j["n0"] = c.policy.n0;
    j["epsilon"] = c.policy.shrink.epsilon();
    j["gamma"] = c.policy.shrink.gamma();
    j["delta"] = c.policy.shrink.delta();
    j["theta"] = c.policy.shrink.theta();
    j["fit_structure"] = to_string(c.fit_structure);
    j["replications"] = c.replications;
    j["base_seed"] = c.base_seed;
    if (c.scenario == ScenarioKind::external) {
        j["data"] = c.data_path;
        j["link"] = to_string(c.schema.link);
        j["standardize"] = c.schema.standardize;
        j["intercept"] = c.schema.intercept;
    } else {
        j["gen_structure"] = to_string(c.gen_structure);
        j["alpha"] = c.gen_alpha;
        j["pk"] = c.pk;
        if (c.scenario == ScenarioKind::continuous) {
            j["layout"] = to_string(c.layout);
        }
        if (c.pool_size > 0) {
            j["pool_size"] = c.pool_size;
        }
    }
    return j;
}

json cell_json(const Report& r)
{
    json j;
    j["config"] = config_json(r.config);
    j["replications"] = r.replications;
    j["failures"] = r.failures;
    j["N_mean"] = number_or_null(r.mean_n);
    j["N_sd"] = number_or_null(r.sd_n);
    j["coverage"] = number_or_null(r.coverage);
    j["coverage_selected"] = number_or_null(r.coverage_selected);
    j["efficiency_ratio"] = number_or_null(r.mean_efficiency_ratio);
    j["efficiency_ratio_raw"] = number_or_null(r.mean_efficiency_ratio_raw);
    j["Num_c"] = number_or_null(r.mean_num_correct_zero);
    j["Num_ic"] = number_or_null(r.mean_num_incorrect_zero);
    j["N_plus"] = r.n_plus;
    j["p0_hat"] = number_or_null(r.mean_p0_hat);
    j["alpha_hat"] = number_or_null(r.mean_alpha_hat);
    j["clamp_events"] = r.clamp_events;

    json freq = json::array();
    for (std::size_t k = 0; k < r.selection_frequency.size(); ++k) {
        freq.push_back({{"name", k < r.covariate_names.size() ? r.covariate_names[k] : std::to_string(k)},
                        {"frequency", r.selection_frequency[k]}});
    }
    j["selection_frequency"] = std::move(freq);
    if (!r.scaling.empty()) {
        json scaling = json::array();
        for (const ColumnScaling& s : r.scaling) {
            scaling.push_back({{"name", s.name}, {"mean", s.mean}, {"sd", s.sd}});
        }
        j["scaling"] = std::move(scaling);
    }
    json failures = json::array();
    for (const ReplicationMetrics& m : r.rows) {
        if (m.failed) {
            failures.push_back({{"index", m.index}, {"seed", m.seed}, {"error", m.error}});
        }
    }
    j["failures_detail"] = std::move(failures);

    // Per-replication detail without timing, so the file stays reproducible.
    json reps = json::array();
    for (const ReplicationMetrics& m : r.rows) {
        json row;
        row["index"] = m.index;
        row["seed"] = m.seed;
        row["failed"] = m.failed;
        if (!m.failed) {
            row["n_stop"] = m.n_stop;
            row["stopped"] = m.stopped;
            row["covered"] = m.covered ? json(*m.covered) : json(nullptr);
            row["covered_selected"] = m.covered_selected ? json(*m.covered_selected) : json(nullptr);
            row["efficiency_ratio"] = number_or_null(m.efficiency_ratio);
            row["num_correct_zero"] = m.num_correct_zero;
            row["num_incorrect_zero"] = m.num_incorrect_zero;
            row["p0_hat"] = m.p0_hat;
            row["alpha_hat"] = number_or_null(m.alpha_hat);
            row["pool_exhausted"] = m.pool_exhausted;
        }
        reps.push_back(std::move(row));
    }
    j["replication_rows"] = std::move(reps);
    return j;
}

json replication_json(const Report& cell, const ReplicationMetrics& m)
{
    json j;
    j["cell"] = cell.config.cell_label();
    j["index"] = m.index;
    j["seed"] = m.seed;
    j["failed"] = m.failed;
    if (m.failed) {
        j["error"] = m.error;
    }
    j["n_stop"] = m.n_stop;
    j["stopped"] = m.stopped;
    j["covered"] = m.covered ? json(*m.covered) : json(nullptr);
    j["covered_selected"] = m.covered_selected ? json(*m.covered_selected) : json(nullptr);
    j["efficiency_ratio"] = number_or_null(m.efficiency_ratio);
    j["efficiency_ratio_raw"] = number_or_null(m.efficiency_ratio_raw);
    j["num_correct_zero"] = m.num_correct_zero;
    j["num_incorrect_zero"] = m.num_incorrect_zero;
    j["p0_hat"] = m.p0_hat;
    j["alpha_hat"] = number_or_null(m.alpha_hat);
    j["pool_exhausted"] = m.pool_exhausted;
    j["clamp_events"] = m.clamp_events;
    j["fit_failures"] = m.fit_failures;
    j["max_full_axis"] = m.max_full_axis;
    j["indicators"] = m.indicators;
    j["beta"] = m.beta;
    j["wall_time"] = m.wall_time;
    return j;
}

void write_file(const std::filesystem::path& path, const std::string& content)
{
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw DataError("cannot write '" + path.string() + "'");
    }
    os << content;
}

}  // namespace

void write_reports(const std::string& dir, const std::vector<Report>& cells)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw DataError("cannot create output directory '" + dir + "': " + ec.message());
    }

    std::ostringstream csv;
    csv << "scenario,method,alpha,d,n0,epsilon,fit_structure,replications,failures,"
           "N,N_sd,CP,CP_selected,kappa,kappa_raw,Num_c,Num_ic,N_plus,p0_hat,alpha_hat,clamp_events\n";
    for (const Report& r : cells) {
        const ExperimentConfig& c = r.config;
        csv << to_string(c.scenario) << ',' << to_string(c.method) << ','
            << (c.scenario == ScenarioKind::external ? "NA" : fixed(c.gen_alpha, 3)) << ',' << fixed(c.policy.d, 4)
            << ',' << c.policy.n0 << ',' << fixed(c.policy.shrink.epsilon(), 3) << ',' << to_string(c.fit_structure)
            << ',' << r.replications << ',' << r.failures << ',' << fixed(r.mean_n, 3) << ',' << fixed(r.sd_n, 3)
            << ',' << fixed(r.coverage, 3) << ',' << fixed(r.coverage_selected, 3) << ','
            << fixed(r.mean_efficiency_ratio, 3) << ','
            << fixed(r.mean_efficiency_ratio_raw, 3) << ',' << fixed(r.mean_num_correct_zero, 3) << ','
            << fixed(r.mean_num_incorrect_zero, 3) << ',' << r.n_plus << ',' << fixed(r.mean_p0_hat, 3) << ','
            << fixed(r.mean_alpha_hat, 4) << ',' << r.clamp_events << '\n';
    }
    write_file(fs::path(dir) / "report.csv", csv.str());

    json doc;
    doc["cells"] = json::array();
    for (const Report& r : cells) {
        doc["cells"].push_back(cell_json(r));
    }
    write_file(fs::path(dir) / "report.json", doc.dump(2) + "\n");

    std::ostringstream lines;
    for (const Report& r : cells) {
        for (const ReplicationMetrics& m : r.rows) {
            lines << replication_json(r, m).dump() << '\n';
        }
    }
    write_file(fs::path(dir) / "replications.jsonl", lines.str());
}

std::string format_report_table(const std::string& report_json_path)
{
    std::ifstream in(report_json_path);
    if (!in) {
        throw DataError("cannot open '" + report_json_path + "'");
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw DataError("'" + report_json_path + "' is not a report: " + e.what());
    }
    auto num = [](const json& v, int digits) {
        return v.is_number() ? fixed(v.get<double>(), digits) : std::string("-");
    };

    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof line, "%-11s %-7s %6s %6s %18s %6s %6s %7s %7s %7s %4s %6s\n", "scenario", "method",
                  "alpha", "d", "N (sd)", "C.P.", "C.P.s", "kappa", "Num_c", "Num_ic", "N+", "fails");
    os << line;
    for (const json& cell : doc.at("cells")) {
        const json& c = cell.at("config");
        const std::string n_sd = num(cell.at("N_mean"), 3) + " (" + num(cell.at("N_sd"), 3) + ")";
        std::snprintf(line, sizeof line, "%-11s %-7s %6s %6s %18s %6s %6s %7s %7s %7s %4d %6d\n",
                      c.at("scenario").get<std::string>().c_str(), c.at("method").get<std::string>().c_str(),
                      c.contains("alpha") ? num(c.at("alpha"), 2).c_str() : "-", num(c.at("d"), 3).c_str(),
                      n_sd.c_str(), num(cell.at("coverage"), 3).c_str(),
                      num(cell.at("coverage_selected"), 3).c_str(), num(cell.at("efficiency_ratio"), 3).c_str(),
                      num(cell.at("Num_c"), 3).c_str(), num(cell.at("Num_ic"), 3).c_str(),
                      cell.at("N_plus").get<int>(), cell.at("failures").get<int>());
        os << line;
        if (cell.contains("scaling") || c.at("scenario") == "external") {
            os << "  selection frequency:";
            for (const json& f : cell.at("selection_frequency")) {
                os << ' ' << f.at("name").get<std::string>() << '=' << num(f.at("frequency"), 2);
            }
            os << '\n';
        }
    }
    return os.str();
}

}  // namespace seqgee

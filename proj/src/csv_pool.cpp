#include "seqgee/harness.hpp"

#include "seqgee/errors.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace seqgee {

namespace {

std::string trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    s = s.substr(first, last - first + 1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
        s = s.substr(1, s.size() - 2);
    }
    return std::string(s);
}

// Plain comma splitting; quoted fields may not contain commas.
std::vector<std::string> split(std::string_view line, char sep = ',')
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start)));
        if (pos == std::string_view::npos) {
            return out;
        }
        start = pos + 1;
    }
}

std::optional<double> to_number(const std::string& cell)
{
    double value = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    if (!cell.empty() && *begin == '+') {
        ++begin;
    }
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || begin == end || !std::isfinite(value)) {
        return std::nullopt;
    }
    return value;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name, const std::string& role)
{
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
        throw DataError("pool file has no " + role + " column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
}

struct RawRow {
    double order = 0.0;
    double y = 0.0;
    std::vector<double> x;
    std::size_t line = 0;
};

}  // namespace

PoolSchema load_pool_schema(const std::string& path)
{
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(path, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("cannot read schema '" + path + "': " + e.what());
    }
    PoolSchema schema;
    try {
        const pt::ptree& pool = tree.get_child("pool", tree);
        schema.cluster_column = pool.get<std::string>("cluster", schema.cluster_column);
        schema.order_column = pool.get<std::string>("order", schema.order_column);
        schema.response_column = pool.get<std::string>("response", schema.response_column);
        schema.intercept = pool.get<bool>("intercept", schema.intercept);
        schema.standardize = pool.get<bool>("standardize", schema.standardize);
        schema.link = parse_link(pool.get<std::string>("link", std::string(to_string(schema.link))));
        const std::string covariates = pool.get<std::string>("covariates", "");
        if (!trim(covariates).empty()) {
            for (std::string& name : split(covariates)) {
                if (!name.empty()) {
                    schema.covariates.push_back(std::move(name));
                }
            }
        }
    } catch (const pt::ptree_error& e) {
        throw ConfigError("schema '" + path + "': " + e.what());
    }
    return schema;
}

LoadedPool load_csv_pool(const std::string& path, const PoolSchema& schema)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open pool file '" + path + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("pool file '" + path + "' is empty");
    }
    const std::vector<std::string> header = split(line);
    const std::size_t c_col = column_index(header, schema.cluster_column, "cluster");
    const std::size_t o_col = column_index(header, schema.order_column, "order");
    const std::size_t y_col = column_index(header, schema.response_column, "response");

    LoadedPool out;
    std::vector<std::size_t> x_cols;
    if (schema.covariates.empty()) {
        for (std::size_t j = 0; j < header.size(); ++j) {
            if (j != c_col && j != o_col && j != y_col) {
                x_cols.push_back(j);
                out.covariate_names.push_back(header[j]);
            }
        }
    } else {
        for (const std::string& name : schema.covariates) {
            x_cols.push_back(column_index(header, name, "covariate"));
            out.covariate_names.push_back(name);
        }
    }
    if (x_cols.empty() && !schema.intercept) {
        throw DataError("pool file '" + path + "' has no covariate columns");
    }

    // Clusters keep first-appearance order.
    std::vector<std::string> keys;
    std::unordered_map<std::string, std::size_t> key_index;
    std::vector<std::vector<RawRow>> groups;

    auto numeric = [&](const std::vector<std::string>& cells, std::size_t col, std::size_t line_no) {
        const std::optional<double> v = to_number(cells[col]);
        if (!v) {
            std::ostringstream os;
            os << path << ": row " << line_no << ", column '" << header[col] << "': "
               << (cells[col].empty() ? "missing value" : "non-numeric value '" + cells[col] + "'");
            throw DataError(os.str());
        }
        return *v;
    };

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const std::vector<std::string> cells = split(line);
        if (cells.size() != header.size()) {
            std::ostringstream os;
            os << path << ": row " << line_no << " has " << cells.size() << " fields, header has " << header.size();
            throw DataError(os.str());
        }
        const std::string& key = cells[c_col];
        if (key.empty()) {
            std::ostringstream os;
            os << path << ": row " << line_no << ", column '" << header[c_col] << "': missing value";
            throw DataError(os.str());
        }
        auto [it, inserted] = key_index.try_emplace(key, keys.size());
        if (inserted) {
            keys.push_back(key);
            groups.emplace_back();
        }
        RawRow row;
        row.line = line_no;
        row.order = numeric(cells, o_col, line_no);
        row.y = numeric(cells, y_col, line_no);
        row.x.reserve(x_cols.size());
        for (std::size_t col : x_cols) {
            row.x.push_back(numeric(cells, col, line_no));
        }
        groups[it->second].push_back(std::move(row));
    }
    if (groups.empty()) {
        throw DataError("pool file '" + path + "' has no data rows");
    }

    // Equal cluster sizes: report every cluster that differs from the most common size.
    std::map<std::size_t, std::size_t> size_counts;
    for (const auto& g : groups) {
        ++size_counts[g.size()];
    }
    if (size_counts.size() > 1) {
        const std::size_t m = std::max_element(size_counts.begin(), size_counts.end(), [](auto& a, auto& b) {
                                  return a.second < b.second;
                              })->first;
        std::ostringstream os;
        os << path << ": ragged clusters (expected " << m << " rows each):";
        for (std::size_t i = 0; i < groups.size(); ++i) {
            if (groups[i].size() != m) {
                os << ' ' << keys[i] << " (" << groups[i].size() << ")";
            }
        }
        throw DataError(os.str());
    }

    for (std::size_t i = 0; i < groups.size(); ++i) {
        auto& g = groups[i];
        std::stable_sort(g.begin(), g.end(), [](const RawRow& a, const RawRow& b) { return a.order < b.order; });
        for (std::size_t j = 1; j < g.size(); ++j) {
            if (g[j].order == g[j - 1].order) {
                std::ostringstream os;
                os << path << ": cluster " << keys[i] << " repeats order value " << g[j].order << " (rows "
                   << g[j - 1].line << " and " << g[j].line << ")";
                throw DataError(os.str());
            }
        }
    }

    // Integer keys become ids; anything else is numbered by first appearance.
    std::vector<long> ids(keys.size());
    bool integer_keys = true;
    for (std::size_t i = 0; i < keys.size() && integer_keys; ++i) {
        const auto [ptr, ec] = std::from_chars(keys[i].data(), keys[i].data() + keys[i].size(), ids[i]);
        integer_keys = ec == std::errc() && ptr == keys[i].data() + keys[i].size();
    }
    if (!integer_keys) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            ids[i] = static_cast<long>(i);
        }
    }

    const Index q = static_cast<Index>(x_cols.size());
    std::vector<ColumnScaling> scaling;
    if (schema.standardize) {
        Vector sum = Vector::Zero(q);
        double rows = 0.0;
        for (const auto& g : groups) {
            for (const RawRow& r : g) {
                sum += Eigen::Map<const Vector>(r.x.data(), q);
                rows += 1.0;
            }
        }
        if (rows < 2.0) {
            throw DataError("standardization needs at least two rows");
        }
        const Vector mean = sum / rows;
        Vector ss = Vector::Zero(q);
        for (const auto& g : groups) {
            for (const RawRow& r : g) {
                ss += (Eigen::Map<const Vector>(r.x.data(), q) - mean).array().square().matrix();
            }
        }
        for (Index k = 0; k < q; ++k) {
            const double sd = std::sqrt(ss(k) / (rows - 1.0));
            if (!(sd > 0.0)) {
                throw DataError("covariate '" + out.covariate_names[static_cast<std::size_t>(k)] +
                                "' is constant and cannot be standardized");
            }
            scaling.push_back({out.covariate_names[static_cast<std::size_t>(k)], mean(k), sd});
        }
    }

    const Index offset = schema.intercept ? 1 : 0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const auto& g = groups[i];
        ClusterObservation c;
        c.id = ids[i];
        c.y.resize(static_cast<Index>(g.size()));
        c.X.resize(static_cast<Index>(g.size()), q + offset);
        for (std::size_t j = 0; j < g.size(); ++j) {
            const Index row = static_cast<Index>(j);
            c.y(row) = g[j].y;
            if (schema.intercept) {
                c.X(row, 0) = 1.0;
            }
            for (Index k = 0; k < q; ++k) {
                double v = g[j].x[static_cast<std::size_t>(k)];
                if (!scaling.empty()) {
                    v = (v - scaling[static_cast<std::size_t>(k)].mean) / scaling[static_cast<std::size_t>(k)].sd;
                }
                c.X(row, k + offset) = v;
            }
        }
        out.clusters.push_back(std::move(c));
    }
    if (schema.intercept) {
        out.covariate_names.insert(out.covariate_names.begin(), "(intercept)");
    }
    out.scaling = std::move(scaling);
    validate_clusters(out.clusters);
    return out;
}

}  // namespace seqgee

#include "cips/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cips/rng.hpp"

namespace cips {

using nlohmann::json;

std::string to_string(Role r) {
    switch (r) {
        case Role::Treatment: return "treatment";
        case Role::Confounder: return "confounder";
        case Role::Adjustment: return "adjustment";
        case Role::Outcome: return "outcome";
    }
    return "?";
}

std::string to_string(Kind k) {
    switch (k) {
        case Kind::Continuous: return "continuous";
        case Kind::Binary: return "binary";
        case Kind::Ordinal: return "ordinal";
        case Kind::Nominal: return "nominal";
    }
    return "?";
}

Role role_from_string(const std::string& s) {
    if (s == "treatment") return Role::Treatment;
    if (s == "confounder") return Role::Confounder;
    if (s == "adjustment") return Role::Adjustment;
    if (s == "outcome") return Role::Outcome;
    throw std::runtime_error("unknown role: " + s);
}

Kind kind_from_string(const std::string& s) {
    if (s == "continuous") return Kind::Continuous;
    if (s == "binary") return Kind::Binary;
    if (s == "ordinal") return Kind::Ordinal;
    if (s == "nominal") return Kind::Nominal;
    throw std::runtime_error("unknown kind: " + s);
}

std::vector<std::size_t> Dataset::columns_with_role(Role role) const {
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < schema.size(); ++c)
        if (schema[c].role == role) out.push_back(c);
    return out;
}

std::size_t Dataset::outcome_column() const {
    auto cols = columns_with_role(Role::Outcome);
    if (cols.size() != 1) throw std::runtime_error("dataset: expected exactly one outcome column");
    return cols.front();
}

std::size_t Dataset::column_index(const std::string& name) const {
    for (std::size_t c = 0; c < schema.size(); ++c)
        if (schema[c].name == name) return c;
    throw std::runtime_error("dataset: unknown column " + name);
}

Dataset Dataset::select_rows(const std::vector<std::size_t>& rows) const {
    Dataset out;
    out.schema = schema;
    out.values = Matrix(rows.size(), n_cols());
    out.mask.assign(rows.size() * n_cols(), 1);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t c = 0; c < n_cols(); ++c) {
            out.values(i, c) = values(rows[i], c);
            out.set_observed(i, c, observed(rows[i], c));
        }
    return out;
}

bool Dataset::fully_observed() const {
    return std::all_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; });
}

bool operator==(const VariableSpec& a, const VariableSpec& b) {
    return a.name == b.name && a.role == b.role && a.kind == b.kind && a.categories == b.categories;
}

bool operator==(const Dataset& a, const Dataset& b) {
    if (!(a.schema == b.schema) || a.mask != b.mask) return false;
    if (a.values.rows != b.values.rows || a.values.cols != b.values.cols) return false;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        bool obs = a.mask[i] != 0;
        if (obs && a.values.data[i] != b.values.data[i]) return false;
    }
    return true;
}

void validate_schema(const std::vector<VariableSpec>& schema) {
    std::set<std::string> names;
    std::size_t n_outcome = 0;
    for (const auto& v : schema) {
        if (!names.insert(v.name).second)
            throw std::runtime_error("schema: duplicate column name " + v.name);
        if (v.role == Role::Outcome) {
            ++n_outcome;
            if (v.kind != Kind::Continuous)
                throw std::runtime_error("schema: outcome column " + v.name +
                                         " must be continuous");
        }
        if (v.is_categorical() && v.n_categories() < 2)
            throw std::runtime_error("schema: categorical column " + v.name +
                                     " needs at least 2 categories");
        if (v.kind == Kind::Binary && v.n_categories() != 2)
            throw std::runtime_error("schema: binary column " + v.name +
                                     " must have exactly 2 categories");
        if (!v.is_categorical() && !v.categories.empty())
            throw std::runtime_error("schema: continuous column " + v.name +
                                     " must not list categories");
    }
    if (n_outcome != 1)
        throw std::runtime_error("schema: expected exactly one outcome column, found " +
                                 std::to_string(n_outcome));
}

std::string schema_to_json(const std::vector<VariableSpec>& schema) {
    json arr = json::array();
    for (const auto& v : schema) {
        arr.push_back({{"name", v.name},
                       {"role", to_string(v.role)},
                       {"kind", to_string(v.kind)},
                       {"categories", v.categories}});
    }
    return arr.dump(2);
}

std::vector<VariableSpec> schema_from_json(const std::string& json_text) {
    json arr = json::parse(json_text);
    if (!arr.is_array()) throw std::runtime_error("schema: top-level JSON must be an array");
    std::vector<VariableSpec> schema;
    for (const auto& item : arr) {
        VariableSpec v;
        v.name = item.at("name").get<std::string>();
        v.role = role_from_string(item.at("role").get<std::string>());
        v.kind = kind_from_string(item.at("kind").get<std::string>());
        if (item.contains("categories"))
            v.categories = item.at("categories").get<std::vector<std::string>>();
        schema.push_back(std::move(v));
    }
    validate_schema(schema);
    return schema;
}

std::vector<VariableSpec> load_schema(const std::string& schema_path) {
    std::ifstream in(schema_path);
    if (!in) throw std::runtime_error("cannot open schema file " + schema_path);
    std::stringstream ss;
    ss << in.rdbuf();
    return schema_from_json(ss.str());
}

void save_schema(const std::vector<VariableSpec>& schema, const std::string& schema_path) {
    std::ofstream out(schema_path);
    if (!out) throw std::runtime_error("cannot write schema file " + schema_path);
    out << schema_to_json(schema) << "\n";
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    cells.push_back(cur);
    return cells;
}

double parse_cell(const std::string& cell, const VariableSpec& spec, std::size_t row,
                  std::size_t col) {
    auto fail = [&](const std::string& why) {
        throw std::runtime_error("load: " + why + " at row " + std::to_string(row) + ", column '" +
                                 spec.name + "' (index " + std::to_string(col) + "): '" + cell +
                                 "'");
    };
    if (spec.is_categorical()) {
        auto it = std::find(spec.categories.begin(), spec.categories.end(), cell);
        if (it == spec.categories.end()) fail("unknown category");
        return static_cast<double>(it - spec.categories.begin());
    }
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(cell, &pos);
    } catch (const std::exception&) {
        fail("unparsable numeric cell");
    }
    if (pos != cell.size()) fail("unparsable numeric cell");
    if (!std::isfinite(v)) fail("non-finite value");
    return v;
}

std::string format_value(double v, const VariableSpec& spec) {
    if (spec.is_categorical()) {
        auto idx = static_cast<std::size_t>(std::llround(v));
        if (idx >= spec.n_categories())
            throw std::runtime_error("save: category index out of range in column " + spec.name);
        return spec.categories[idx];
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

Dataset load_dataset(const std::string& csv_path, const std::string& schema_path) {
    auto schema = load_schema(schema_path);
    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("cannot open CSV file " + csv_path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load: empty CSV " + csv_path);
    auto header = split_csv_line(line);
    if (header.size() != schema.size())
        throw std::runtime_error("load: header has " + std::to_string(header.size()) +
                                 " columns, schema has " + std::to_string(schema.size()));
    for (std::size_t c = 0; c < schema.size(); ++c)
        if (header[c] != schema[c].name)
            throw std::runtime_error("load: header column '" + header[c] +
                                     "' does not match schema column '" + schema[c].name + "'");

    std::vector<double> values;
    std::vector<std::uint8_t> mask;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty() && in.eof()) break;
        auto cells = split_csv_line(line);
        if (cells.size() != schema.size())
            throw std::runtime_error("load: row " + std::to_string(row) + " has " +
                                     std::to_string(cells.size()) + " cells, expected " +
                                     std::to_string(schema.size()));
        for (std::size_t c = 0; c < schema.size(); ++c) {
            if (cells[c].empty()) {
                if (schema[c].role != Role::Confounder)
                    throw std::runtime_error("load: missing value in " +
                                             to_string(schema[c].role) + " column '" +
                                             schema[c].name + "' at row " + std::to_string(row));
                values.push_back(std::nan(""));
                mask.push_back(0);
            } else {
                values.push_back(parse_cell(cells[c], schema[c], row, c));
                mask.push_back(1);
            }
        }
        ++row;
    }

    Dataset ds;
    ds.schema = std::move(schema);
    ds.values = Matrix(row, ds.schema.size(), std::move(values));
    ds.mask = std::move(mask);
    return ds;
}

void save_dataset(const Dataset& ds, const std::string& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot write CSV file " + csv_path);
    for (std::size_t c = 0; c < ds.schema.size(); ++c)
        out << (c ? "," : "") << ds.schema[c].name;
    out << "\n";
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        for (std::size_t c = 0; c < ds.n_cols(); ++c) {
            if (c) out << ",";
            if (ds.observed(r, c)) out << format_value(ds.values(r, c), ds.schema[c]);
        }
        out << "\n";
    }
}

SplitResult split(const Dataset& ds, double train_frac, double valid_frac, std::uint64_t seed) {
    if (!(train_frac > 0.0) || !(valid_frac > 0.0) || train_frac + valid_frac >= 1.0)
        throw std::runtime_error("split: fractions must be positive and sum to less than 1");
    std::size_t n = ds.n_rows();
    if (n < 3) throw std::runtime_error("split: need at least 3 rows");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    RngStream rng(seed, /*stream=*/0xA11CE);
    rng.shuffle(idx);
    auto n_train = static_cast<std::size_t>(std::llround(train_frac * n));
    auto n_valid = static_cast<std::size_t>(std::llround(valid_frac * n));
    n_train = std::max<std::size_t>(1, std::min(n_train, n - 2));
    n_valid = std::max<std::size_t>(1, std::min(n_valid, n - n_train - 1));
    SplitResult res;
    res.train_rows.assign(idx.begin(), idx.begin() + n_train);
    res.valid_rows.assign(idx.begin() + n_train, idx.begin() + n_train + n_valid);
    res.test_rows.assign(idx.begin() + n_train + n_valid, idx.end());
    res.train = ds.select_rows(res.train_rows);
    res.valid = ds.select_rows(res.valid_rows);
    res.test = ds.select_rows(res.test_rows);
    return res;
}

std::string to_string(MissScenario s) {
    switch (s) {
        case MissScenario::None: return "none";
        case MissScenario::Moderate: return "moderate";
        case MissScenario::Substantial: return "substantial";
    }
    return "?";
}

MissScenario scenario_from_string(const std::string& s) {
    if (s == "none") return MissScenario::None;
    if (s == "moderate") return MissScenario::Moderate;
    if (s == "substantial") return MissScenario::Substantial;
    throw std::runtime_error("unknown missingness scenario: " + s);
}

Dataset simulate_missingness(const Dataset& ds, MissScenario scenario, std::uint64_t seed,
                             double moderate_rate, double substantial_rate, MissFlavor flavor) {
    if (scenario == MissScenario::None) return ds;
    double rate = scenario == MissScenario::Moderate ? moderate_rate : substantial_rate;
    auto conf_cols = ds.columns_with_role(Role::Confounder);
    Dataset out = ds;
    RngStream rng(seed, /*stream=*/0x3155);
    if (flavor == MissFlavor::Mcar) {
        for (std::size_t r = 0; r < ds.n_rows(); ++r)
            for (std::size_t c : conf_cols)
                if (rng.uniform() < rate) {
                    out.set_observed(r, c, false);
                    out.values(r, c) = std::nan("");
                }
    } else {
        // time-structured flavor: trailing confounder columns wholly unobserved
        auto n_masked = static_cast<std::size_t>(std::llround(rate * conf_cols.size()));
        for (std::size_t k = conf_cols.size() - n_masked; k < conf_cols.size(); ++k) {
            std::size_t c = conf_cols[k];
            for (std::size_t r = 0; r < ds.n_rows(); ++r) {
                out.set_observed(r, c, false);
                out.values(r, c) = std::nan("");
            }
        }
    }
    return out;
}

std::pair<Dataset, ScalingParams> standardize(const Dataset& train) {
    ScalingParams params;
    params.mean_std.resize(train.n_cols());
    for (std::size_t c = 0; c < train.n_cols(); ++c) {
        if (train.schema[c].is_categorical()) continue;
        double sum = 0.0, sumsq = 0.0;
        std::size_t n = 0;
        for (std::size_t r = 0; r < train.n_rows(); ++r)
            if (train.observed(r, c)) {
                sum += train.values(r, c);
                sumsq += train.values(r, c) * train.values(r, c);
                ++n;
            }
        if (n < 2)
            throw std::runtime_error("standardize: column " + train.schema[c].name +
                                     " has fewer than 2 observed values");
        double mean = sum / n;
        double var = sumsq / n - mean * mean;  // population variance
        if (!(var > 0.0))
            throw std::runtime_error("standardize: column " + train.schema[c].name +
                                     " is constant");
        params.mean_std[c] = std::make_pair(mean, std::sqrt(var));
    }
    return {apply_scaling(train, params), params};
}

Dataset apply_scaling(const Dataset& ds, const ScalingParams& params) {
    if (params.mean_std.size() != ds.n_cols())
        throw std::runtime_error("apply_scaling: params do not match dataset width");
    Dataset out = ds;
    for (std::size_t c = 0; c < ds.n_cols(); ++c) {
        if (!params.mean_std[c]) continue;
        auto [mean, sd] = *params.mean_std[c];
        for (std::size_t r = 0; r < ds.n_rows(); ++r)
            if (ds.observed(r, c)) out.values(r, c) = (ds.values(r, c) - mean) / sd;
    }
    return out;
}

Dataset invert_scaling(const Dataset& ds, const ScalingParams& params) {
    if (params.mean_std.size() != ds.n_cols())
        throw std::runtime_error("invert_scaling: params do not match dataset width");
    Dataset out = ds;
    for (std::size_t c = 0; c < ds.n_cols(); ++c) {
        if (!params.mean_std[c]) continue;
        auto [mean, sd] = *params.mean_std[c];
        for (std::size_t r = 0; r < ds.n_rows(); ++r)
            if (ds.observed(r, c)) out.values(r, c) = ds.values(r, c) * sd + mean;
    }
    return out;
}

}  // namespace cips

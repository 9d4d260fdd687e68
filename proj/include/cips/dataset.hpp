#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cips/matrix.hpp"

namespace cips {

enum class Role { Treatment, Confounder, Adjustment, Outcome };
enum class Kind { Continuous, Binary, Ordinal, Nominal };

std::string to_string(Role r);
std::string to_string(Kind k);
Role role_from_string(const std::string& s);
Kind kind_from_string(const std::string& s);

struct VariableSpec {
    std::string name;
    Role role = Role::Confounder;
    Kind kind = Kind::Continuous;
    std::vector<std::string> categories;  // empty for continuous

    bool is_categorical() const { return kind != Kind::Continuous; }
    std::size_t n_categories() const { return categories.size(); }
};

/// Tabular data with causal-role annotations. Values are doubles; categorical
/// cells hold the category index. Missing cells carry NaN and mask false.
struct Dataset {
    std::vector<VariableSpec> schema;
    Matrix values;                   // N x D
    std::vector<std::uint8_t> mask;  // N x D row-major, 1 = observed

    std::size_t n_rows() const { return values.rows; }
    std::size_t n_cols() const { return values.cols; }
    bool observed(std::size_t r, std::size_t c) const { return mask[r * n_cols() + c] != 0; }
    void set_observed(std::size_t r, std::size_t c, bool v) { mask[r * n_cols() + c] = v ? 1 : 0; }

    std::vector<std::size_t> columns_with_role(Role role) const;
    std::size_t outcome_column() const;
    std::size_t column_index(const std::string& name) const;
    Dataset select_rows(const std::vector<std::size_t>& rows) const;
    bool fully_observed() const;
};

bool operator==(const VariableSpec& a, const VariableSpec& b);
bool operator==(const Dataset& a, const Dataset& b);

/// Validates role/category invariants shared by load paths. Throws
/// std::runtime_error on violation.
void validate_schema(const std::vector<VariableSpec>& schema);

std::vector<VariableSpec> load_schema(const std::string& schema_path);
void save_schema(const std::vector<VariableSpec>& schema, const std::string& schema_path);
std::string schema_to_json(const std::vector<VariableSpec>& schema);
std::vector<VariableSpec> schema_from_json(const std::string& json_text);

Dataset load_dataset(const std::string& csv_path, const std::string& schema_path);
void save_dataset(const Dataset& ds, const std::string& csv_path);

struct SplitResult {
    Dataset train, valid, test;
    std::vector<std::size_t> train_rows, valid_rows, test_rows;
};
SplitResult split(const Dataset& ds, double train_frac, double valid_frac, std::uint64_t seed);

enum class MissScenario { None, Moderate, Substantial };
enum class MissFlavor { Mcar, ColumnPrefix };
std::string to_string(MissScenario s);
MissScenario scenario_from_string(const std::string& s);

/// Masks confounder cells per scenario; never touches other roles.
Dataset simulate_missingness(const Dataset& ds, MissScenario scenario, std::uint64_t seed,
                             double moderate_rate = 0.3, double substantial_rate = 0.6,
                             MissFlavor flavor = MissFlavor::Mcar);

struct ScalingParams {
    // entry per column; disengaged for categorical columns
    std::vector<std::optional<std::pair<double, double>>> mean_std;
};

std::pair<Dataset, ScalingParams> standardize(const Dataset& train);
Dataset apply_scaling(const Dataset& ds, const ScalingParams& params);
Dataset invert_scaling(const Dataset& ds, const ScalingParams& params);

}  // namespace cips

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cips/baselines.hpp"
#include "cips/impute.hpp"
#include "cips/intervene.hpp"
#include "cips/synthcausal.hpp"
#include "cips/vae.hpp"

namespace cips {

/// Mean absolute percentage error in percent. Throws std::invalid_argument on
/// length mismatch or empty input and std::domain_error when any target is
/// exactly zero.
double mape(const std::vector<double>& pred, const std::vector<double>& target);

struct MapeResult {
    double value = 0.0;
    std::size_t n_used = 0;
    std::size_t n_excluded = 0;  // |target| < min_abs_target
};

/// MAPE that drops near-zero targets instead of failing; the exclusion count
/// is reported. Throws std::domain_error when every target is excluded.
MapeResult mape_filtered(const std::vector<double>& pred, const std::vector<double>& target,
                         double min_abs_target = 1e-6);

enum class ModelKind { CipsFcs, CipsSmi, Lasso, Knn };
std::string to_string(ModelKind m);
ModelKind model_from_string(const std::string& s);

struct CellResult {
    ModelKind model = ModelKind::CipsFcs;
    MissScenario scenario = MissScenario::None;
    std::uint64_t seed = 0;
    double mape = 0.0;
    std::size_t n_used = 0;
    std::size_t n_excluded = 0;
    std::string error;  // non-empty when the cell failed

    bool ok() const { return error.empty(); }
};

struct ScenarioReport {
    std::vector<CellResult> cells;

    std::vector<const CellResult*> select(ModelKind model, MissScenario scenario) const;
    /// Across-seed mean of a cell group; throws when any selected cell failed.
    double mean_mape(ModelKind model, MissScenario scenario) const;
    /// Across-seed standard error (sample std over sqrt(n), divisor n - 1).
    double stderr_mape(ModelKind model, MissScenario scenario) const;
};

struct RunConfig {
    ScmConfig scm;
    VaeConfig vae;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::vector<MissScenario> scenarios = {MissScenario::None, MissScenario::Moderate,
                                           MissScenario::Substantial};
    std::vector<ModelKind> models = {ModelKind::CipsFcs, ModelKind::CipsSmi, ModelKind::Lasso,
                                     ModelKind::Knn};
    std::size_t m_imputations = 5;
    std::size_t burn_in = 10;
    std::size_t latent_samples = 64;
    std::size_t knn_k = 10;
    double lasso_lambda = 0.1;
    std::size_t jobs = 1;
};

/// Full benchmark grid: per seed, simulate the structural model, split
/// 60/20/20, mask test confounders per scenario, impute (chained-equations
/// multiple imputation or single mean fill), and score every model's factual
/// interventional predictions against the closed-form oracle by MAPE.
/// Per-cell failures are captured in CellResult::error.
ScenarioReport run_scenarios(const RunConfig& cfg);

std::string report_to_csv(const ScenarioReport& report);
std::string report_to_json(const ScenarioReport& report);
/// Mean +/- stderr per model x scenario as a fixed-width text table.
std::string report_to_table(const ScenarioReport& report);
ScenarioReport report_from_csv(const std::string& text);

}  // namespace cips

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cips/dataset.hpp"
#include "cips/matrix.hpp"
#include "cips/rng.hpp"

namespace cips {

enum class CondKind { LinearGaussian, Logistic, OrdinalLinear, NominalDiscriminant };

/// Per-column conditional imputation model refit at every Gibbs sweep.
struct ConditionalModel {
    std::size_t target_col = 0;
    CondKind kind = CondKind::LinearGaussian;
    Matrix coef;                     // p x 1 (linear / logistic / ordinal)
    double residual_variance = 0.0;  // linear / ordinal
    Matrix class_means;              // K x p-1 (discriminant, no intercept)
    std::vector<double> pooled_var;  // per predictor (discriminant)
    std::vector<double> priors;      // per class (discriminant)
};

/// Mutable state of one chained-equations chain.
struct ChainState {
    Dataset source;   // original data with its missingness mask
    Dataset working;  // all cells filled
    std::size_t iteration = 0;
    std::vector<ConditionalModel> models;  // latest sweep, one per incomplete column
};

struct ImputedSet {
    std::vector<Dataset> imputations;
    std::vector<std::uint8_t> source_mask;
    std::uint64_t seed = 0;
    std::size_t burn_in = 0;

    std::size_t m() const { return imputations.size(); }
};

struct PredictionResult {
    std::vector<double> mean;
    std::vector<double> stderr_;
    std::size_t m = 0;
    bool single_imputation = false;
};

/// Fills missing cells with draws from each column's observed empirical
/// distribution. Throws when a column has no observed value.
ChainState init_chain(const Dataset& ds, std::uint64_t seed);

/// One Gibbs sweep: per incomplete column, draw model parameters from their
/// (approximate) posterior given the current fills, then redraw the missing
/// cells. Uses within-sweep updated columns as predictors.
void gibbs_sweep(ChainState& state, RngStream& rng);

ImputedSet multiple_impute(const Dataset& ds, std::size_t m, std::size_t burn_in,
                           std::uint64_t seed, std::size_t jobs = 1);

Dataset single_mean_impute(const Dataset& ds);

PredictionResult pool_predictions(const std::vector<std::vector<double>>& per_imputation_preds);

void save_imputed_set(const ImputedSet& set, const std::string& dir);
ImputedSet load_imputed_set(const std::string& dir);

}  // namespace cips

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cips/impute.hpp"
#include "cips/vae.hpp"

namespace cips {

/// Treatment assignment for an intervention, one raw value per treatment
/// column in schema order. Binary treatments take 0 or 1.
struct DoQuery {
    std::vector<double> treatment;
};

struct DoPrediction {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t latent_samples = 0;
    std::size_t n_imputations = 0;
};

struct DoBatchResult {
    std::vector<double> mean;
    std::vector<double> stderr_;
    std::size_t latent_samples = 0;
    std::size_t n_imputations = 0;
    std::uint64_t seed = 0;
};

/// Interventional outcome prediction for one subject. `completions` holds the
/// M imputed versions of the subject's dataset (identical values where
/// observed). For each completion the subject's treatment columns are replaced
/// by the query, the auxiliary head supplies a surrogate outcome for encoding,
/// L latent draws are pushed through the outcome head, and the per-completion
/// estimates are pooled (mean and between-imputation standard error).
/// Randomness derives from (seed, row, completion) so rows are independent.
DoPrediction predict_do(const VaeModel& model, const ImputedSet& completions, std::size_t row,
                        const DoQuery& query, std::size_t latent_samples = 64,
                        std::uint64_t seed = 0);

DoBatchResult predict_do_batch(const VaeModel& model, const ImputedSet& completions,
                               const DoQuery& query, std::size_t latent_samples = 64,
                               std::uint64_t seed = 0, std::size_t jobs = 1);

/// Observational variant: keeps each subject's recorded treatment.
DoBatchResult predict_factual_batch(const VaeModel& model, const ImputedSet& completions,
                                    std::size_t latent_samples = 64, std::uint64_t seed = 0,
                                    std::size_t jobs = 1);

/// CSV with one row per subject: row_id, y_pred_mean, y_pred_stderr, L, M, seed.
void save_predictions(const DoBatchResult& result, const std::string& path);
DoBatchResult load_predictions(const std::string& path);

}  // namespace cips

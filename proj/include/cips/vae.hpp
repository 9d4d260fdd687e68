#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cips/dataset.hpp"
#include "cips/gaussian.hpp"
#include "cips/graph.hpp"
#include "cips/matrix.hpp"
#include "cips/rng.hpp"

namespace cips {

struct VaeConfig {
    std::size_t latent_dim = 8;
    std::size_t hidden_width = 64;
    std::size_t hidden_depth = 2;
    double learning_rate = 1e-3;
    std::size_t batch_size = 128;
    std::size_t epochs = 200;
    std::size_t patience = 10;  // early stopping on validation ELBO
    std::uint64_t seed = 0;
    double variance_floor = 1e-6;

    void validate() const;
};

std::string vae_config_to_json(const VaeConfig& cfg);
VaeConfig vae_config_from_json(const std::string& text);

/// Row-major encoding of a dataset's feature blocks for network input:
/// continuous as (scaled) value, binary as 0/1, ordinal as index, nominal as
/// one-hot. Widths are schema-determined.
struct FeatureCodec {
    std::vector<VariableSpec> schema;

    std::size_t block_width(Role role) const;
    /// Encodes the given role's columns over all rows; ds must be complete
    /// (and already scaled for continuous columns).
    Matrix encode_block(const Dataset& ds, Role role) const;
    std::vector<double> encode_row(const Dataset& ds, std::size_t row, Role role) const;
};

struct VaeModel {
    VaeConfig cfg;
    std::vector<VariableSpec> schema;
    ScalingParams scaling;
    std::uint64_t schema_fingerprint = 0;
    std::map<std::string, Matrix> params;

    FeatureCodec codec() const { return FeatureCodec{schema}; }
    bool trained() const { return !params.empty(); }
};

std::uint64_t fingerprint_schema(const std::vector<VariableSpec>& schema);

/// Batch counterpart of DiagGaussian: per-row mean and variance.
struct BatchGaussian {
    Matrix mean;
    Matrix variance;
};

/// q(z | x, t, y). Inputs are encoded feature vectors in the model's scaled
/// space; y is the scaled outcome.
DiagGaussian encode(const VaeModel& model, const std::vector<double>& x_enc,
                    const std::vector<double>& t_enc, double y_scaled);
BatchGaussian encode_batch(const VaeModel& model, const Matrix& x_enc, const Matrix& t_enc,
                           const Matrix& y_scaled);

/// Auxiliary q(y | x, m, t); 1-dim in the scaled outcome space.
DiagGaussian auxiliary_y(const VaeModel& model, const std::vector<double>& x_enc,
                         const std::vector<double>& m_enc, const std::vector<double>& t_enc);
BatchGaussian auxiliary_y_batch(const VaeModel& model, const Matrix& x_enc, const Matrix& m_enc,
                                const Matrix& t_enc);

/// Per-feature factorized decoder distribution.
struct FeatureDist {
    Kind kind = Kind::Continuous;
    double mean = 0.0;
    double variance = 0.0;         // continuous
    double p = 0.0;                // binary
    std::vector<double> probs;     // nominal / ordinal
};

struct DecodeResult {
    std::vector<FeatureDist> x_features;
    std::vector<FeatureDist> t_features;
};

DecodeResult decode(const VaeModel& model, const std::vector<double>& z);

/// p(y | m, t, z); 1-dim in the scaled outcome space.
DiagGaussian outcome_head(const VaeModel& model, const std::vector<double>& m_enc,
                          const std::vector<double>& t_enc, const std::vector<double>& z);
BatchGaussian outcome_head_batch(const VaeModel& model, const Matrix& m_enc, const Matrix& t_enc,
                                 const Matrix& z);

struct ElboReport {
    double total = 0.0;
    double recon_x = 0.0;
    double recon_t = 0.0;
    double recon_y = 0.0;
    double kl = 0.0;   // subtracted inside total
    double aux = 0.0;  // auxiliary log-likelihood at the observed outcomes
    /// total without the auxiliary term, i.e. the evidence lower bound proper.
    double generative_elbo() const { return total - aux; }
};

struct ElboResult {
    ElboReport report;
    std::map<std::string, Matrix> gradients;  // d(total)/d(param)
};

/// Single-sample reparameterized ELBO over a complete, scaled batch. `eps` is
/// the frozen standard-normal draw, one row per subject.
ElboResult elbo_batch(const VaeModel& model, const Dataset& batch_scaled, const Matrix& eps);
ElboResult elbo_batch(const VaeModel& model, const Dataset& batch_scaled, RngStream& rng);

/// Trains by minibatch gradient ascent on the ELBO objective with adaptive
/// moments, early-stopped on the validation ELBO. Both datasets must be
/// complete; scaling is fit on ds_complete and stored in the model.
VaeModel train(const Dataset& ds_complete, const Dataset& valid, const VaeConfig& cfg);

void save_model(const VaeModel& model, const std::string& path);
VaeModel load_model(const std::string& path);

}  // namespace cips

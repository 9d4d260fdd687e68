#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cips/dataset.hpp"
#include "cips/matrix.hpp"

namespace cips {

/// Generative specification of a synthetic causal world: hidden confounder z
/// drives proxies x and (via `confounding`) the treatment assignment, while
/// adjustment variables m stay independent of both.
struct ScmConfig {
    std::size_t latent_dim = 2;
    std::size_t proxy_dim = 10;
    std::size_t treatment_dim = 1;  // binary treatments
    std::size_t adjustment_dim = 3;
    double confounding = 2.0;  // logit scale of z -> t
    std::vector<double> beta_t;       // per treatment dim; default filled on generate
    std::vector<double> beta_m;       // per adjustment dim
    std::vector<double> beta_z;       // per latent dim
    double beta_tm = 1.5;             // t-bar * m-bar interaction
    double outcome_intercept = 10.0;  // keeps |y| away from 0 so MAPE is stable
    double proxy_noise = 0.5;
    double outcome_noise = 0.3;
    bool quadratic = false;  // adds a z^2 outcome term; closed-form oracle unavailable
    double beta_quad = 0.5;
    std::size_t n_rows = 5000;
    std::uint64_t seed = 1;

    void validate() const;
    /// Fills empty coefficient vectors with the released defaults.
    void finalize_defaults();
};

std::string scm_config_to_json(const ScmConfig& cfg);
ScmConfig scm_config_from_json(const std::string& json_text);

/// Exact interventional expectations for a generated world.
struct OracleHandle {
    ScmConfig cfg;
    Matrix proxy_loading;    // D_x x D_z
    Matrix treat_loading;    // D_t x D_z
    Matrix posterior_gain;   // D_z x D_x: E[z|x] = gain * x
    Matrix posterior_cov;    // D_z x D_z
    Matrix true_latent;      // N x D_z

    /// Noise-free structural outcome.
    double f_y(const std::vector<double>& z, const std::vector<double>& t,
               const std::vector<double>& m) const;
    std::vector<double> posterior_mean(const std::vector<double>& x) const;
};

std::pair<Dataset, OracleHandle> generate(const ScmConfig& cfg);

/// Closed-form E[y | x, m, do(t)]; throws for nonlinear (quadratic) configs.
double oracle_do(const OracleHandle& handle, const std::vector<double>& x,
                 const std::vector<double>& m, const std::vector<double>& t);

/// Monte Carlo oracle over the exact Gaussian posterior p(z|x).
double oracle_do_mc(const OracleHandle& handle, const std::vector<double>& x,
                    const std::vector<double>& m, const std::vector<double>& t,
                    std::size_t samples, std::uint64_t seed = 0);

/// Per-row oracle over a dataset laid out by generate()'s schema, evaluated at
/// each row's own (x, m) and the given intervention t (or the row's observed t
/// when `t` is empty).
std::vector<double> oracle_do_rows(const OracleHandle& handle, const Dataset& ds,
                                   const std::vector<double>& t = {});

}  // namespace cips

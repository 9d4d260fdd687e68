#include "cips/synthcausal.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "cips/rng.hpp"

namespace cips {

using nlohmann::json;

void ScmConfig::validate() const {
    if (latent_dim < 1 || proxy_dim < 1 || treatment_dim < 1 || adjustment_dim < 1)
        throw std::invalid_argument("ScmConfig: all dimensions must be >= 1");
    if (!(proxy_noise > 0.0) || !(outcome_noise > 0.0))
        throw std::invalid_argument("ScmConfig: noise scales must be positive");
    if (n_rows < 1) throw std::invalid_argument("ScmConfig: n_rows must be >= 1");
    if (!beta_t.empty() && beta_t.size() != treatment_dim)
        throw std::invalid_argument("ScmConfig: beta_t length != treatment_dim");
    if (!beta_m.empty() && beta_m.size() != adjustment_dim)
        throw std::invalid_argument("ScmConfig: beta_m length != adjustment_dim");
    if (!beta_z.empty() && beta_z.size() != latent_dim)
        throw std::invalid_argument("ScmConfig: beta_z length != latent_dim");
}

void ScmConfig::finalize_defaults() {
    if (beta_t.empty()) beta_t.assign(treatment_dim, 2.0);
    if (beta_m.empty()) {
        beta_m.resize(adjustment_dim);
        for (std::size_t j = 0; j < adjustment_dim; ++j)
            beta_m[j] = 1.0 * (j % 2 == 0 ? 1.0 : -0.5);
    }
    if (beta_z.empty()) {
        beta_z.resize(latent_dim);
        for (std::size_t j = 0; j < latent_dim; ++j)
            beta_z[j] = 1.5 * (j % 2 == 0 ? 1.0 : -1.0);
    }
    validate();
}

std::string scm_config_to_json(const ScmConfig& cfg) {
    json j;
    j["latent_dim"] = cfg.latent_dim;
    j["proxy_dim"] = cfg.proxy_dim;
    j["treatment_dim"] = cfg.treatment_dim;
    j["adjustment_dim"] = cfg.adjustment_dim;
    j["confounding"] = cfg.confounding;
    j["beta_t"] = cfg.beta_t;
    j["beta_m"] = cfg.beta_m;
    j["beta_z"] = cfg.beta_z;
    j["beta_tm"] = cfg.beta_tm;
    j["outcome_intercept"] = cfg.outcome_intercept;
    j["proxy_noise"] = cfg.proxy_noise;
    j["outcome_noise"] = cfg.outcome_noise;
    j["quadratic"] = cfg.quadratic;
    j["beta_quad"] = cfg.beta_quad;
    j["n_rows"] = cfg.n_rows;
    j["seed"] = cfg.seed;
    return j.dump(2);
}

ScmConfig scm_config_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    ScmConfig cfg;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("latent_dim", cfg.latent_dim);
    get("proxy_dim", cfg.proxy_dim);
    get("treatment_dim", cfg.treatment_dim);
    get("adjustment_dim", cfg.adjustment_dim);
    get("confounding", cfg.confounding);
    get("beta_t", cfg.beta_t);
    get("beta_m", cfg.beta_m);
    get("beta_z", cfg.beta_z);
    get("beta_tm", cfg.beta_tm);
    get("outcome_intercept", cfg.outcome_intercept);
    get("proxy_noise", cfg.proxy_noise);
    get("outcome_noise", cfg.outcome_noise);
    get("quadratic", cfg.quadratic);
    get("beta_quad", cfg.beta_quad);
    get("n_rows", cfg.n_rows);
    get("seed", cfg.seed);
    cfg.validate();
    return cfg;
}

double OracleHandle::f_y(const std::vector<double>& z, const std::vector<double>& t,
                         const std::vector<double>& m) const {
    double y = cfg.outcome_intercept;
    double t_bar = 0.0, m_bar = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) y += cfg.beta_z[j] * z[j];
    for (std::size_t j = 0; j < t.size(); ++j) {
        y += cfg.beta_t[j] * t[j];
        t_bar += t[j];
    }
    for (std::size_t j = 0; j < m.size(); ++j) {
        y += cfg.beta_m[j] * m[j];
        m_bar += m[j];
    }
    t_bar /= t.size();
    m_bar /= m.size();
    y += cfg.beta_tm * t_bar * m_bar;
    if (cfg.quadratic) {
        double q = 0.0;
        for (double zj : z) q += zj * zj;
        y += cfg.beta_quad * q / z.size();
    }
    return y;
}

std::vector<double> OracleHandle::posterior_mean(const std::vector<double>& x) const {
    if (x.size() != cfg.proxy_dim)
        throw std::invalid_argument("posterior_mean: proxy dimension mismatch");
    std::vector<double> mu(cfg.latent_dim, 0.0);
    for (std::size_t j = 0; j < cfg.latent_dim; ++j)
        for (std::size_t k = 0; k < cfg.proxy_dim; ++k)
            mu[j] += posterior_gain(j, k) * x[k];
    return mu;
}

std::pair<Dataset, OracleHandle> generate(const ScmConfig& cfg_in) {
    ScmConfig cfg = cfg_in;
    cfg.finalize_defaults();

    OracleHandle handle;
    handle.cfg = cfg;

    RngStream root(cfg.seed, /*stream=*/0x5C4);
    RngStream structure = root.substream(0);
    handle.proxy_loading = Matrix(cfg.proxy_dim, cfg.latent_dim);
    for (double& v : handle.proxy_loading.data) v = structure.normal(0.0, 1.0);
    handle.treat_loading = Matrix(cfg.treatment_dim, cfg.latent_dim);
    for (double& v : handle.treat_loading.data) v = structure.normal(0.0, 1.0);

    // z | x is Gaussian: cov = (I + A'A / s^2)^-1, mean = cov A' x / s^2
    double s2 = cfg.proxy_noise * cfg.proxy_noise;
    Matrix prec = Matrix::identity(cfg.latent_dim);
    Matrix ata = matmul(transpose(handle.proxy_loading), handle.proxy_loading);
    for (std::size_t i = 0; i < prec.size(); ++i) prec.data[i] += ata.data[i] / s2;
    handle.posterior_cov = inverse_spd(prec);
    handle.posterior_gain =
        scale(matmul(handle.posterior_cov, transpose(handle.proxy_loading)), 1.0 / s2);

    std::vector<VariableSpec> schema;
    for (std::size_t j = 0; j < cfg.treatment_dim; ++j)
        schema.push_back({"t" + std::to_string(j + 1), Role::Treatment, Kind::Binary, {"0", "1"}});
    for (std::size_t j = 0; j < cfg.proxy_dim; ++j)
        schema.push_back({"x" + std::to_string(j + 1), Role::Confounder, Kind::Continuous, {}});
    for (std::size_t j = 0; j < cfg.adjustment_dim; ++j)
        schema.push_back({"m" + std::to_string(j + 1), Role::Adjustment, Kind::Continuous, {}});
    schema.push_back({"y", Role::Outcome, Kind::Continuous, {}});
    validate_schema(schema);

    std::size_t d = schema.size();
    Dataset ds;
    ds.schema = schema;
    ds.values = Matrix(cfg.n_rows, d);
    ds.mask.assign(cfg.n_rows * d, 1);
    handle.true_latent = Matrix(cfg.n_rows, cfg.latent_dim);

    RngStream rows_root = root.substream(1);
    for (std::size_t r = 0; r < cfg.n_rows; ++r) {
        RngStream rng = rows_root.substream(r);
        std::vector<double> z(cfg.latent_dim), t(cfg.treatment_dim), m(cfg.adjustment_dim);
        for (std::size_t j = 0; j < cfg.latent_dim; ++j) {
            z[j] = rng.normal();
            handle.true_latent(r, j) = z[j];
        }
        for (std::size_t j = 0; j < cfg.treatment_dim; ++j) {
            double logit = 0.0;
            for (std::size_t k = 0; k < cfg.latent_dim; ++k)
                logit += handle.treat_loading(j, k) * z[k];
            logit *= cfg.confounding;
            double p = 1.0 / (1.0 + std::exp(-logit));
            t[j] = rng.uniform() < p ? 1.0 : 0.0;
        }
        for (std::size_t j = 0; j < cfg.adjustment_dim; ++j) m[j] = rng.normal();

        std::size_t c = 0;
        for (std::size_t j = 0; j < cfg.treatment_dim; ++j) ds.values(r, c++) = t[j];
        for (std::size_t j = 0; j < cfg.proxy_dim; ++j) {
            double x = 0.0;
            for (std::size_t k = 0; k < cfg.latent_dim; ++k)
                x += handle.proxy_loading(j, k) * z[k];
            ds.values(r, c++) = x + cfg.proxy_noise * rng.normal();
        }
        for (std::size_t j = 0; j < cfg.adjustment_dim; ++j) ds.values(r, c++) = m[j];
        ds.values(r, c) = handle.f_y(z, t, m) + cfg.outcome_noise * rng.normal();
    }
    return {std::move(ds), std::move(handle)};
}

double oracle_do(const OracleHandle& handle, const std::vector<double>& x,
                 const std::vector<double>& m, const std::vector<double>& t) {
    if (handle.cfg.quadratic)
        throw std::runtime_error(
            "oracle_do: no closed form for the quadratic outcome; use oracle_do_mc");
    return handle.f_y(handle.posterior_mean(x), t, m);
}

double oracle_do_mc(const OracleHandle& handle, const std::vector<double>& x,
                    const std::vector<double>& m, const std::vector<double>& t,
                    std::size_t samples, std::uint64_t seed) {
    if (samples < 1) throw std::invalid_argument("oracle_do_mc: samples must be >= 1");
    auto mu = handle.posterior_mean(x);
    Matrix chol = cholesky(handle.posterior_cov);
    RngStream rng(seed, /*stream=*/0x0DAC1E);
    std::size_t dz = handle.cfg.latent_dim;
    std::vector<double> z(dz), eps(dz);
    double acc = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        for (double& e : eps) e = rng.normal();
        for (std::size_t j = 0; j < dz; ++j) {
            z[j] = mu[j];
            for (std::size_t k = 0; k <= j; ++k) z[j] += chol(j, k) * eps[k];
        }
        acc += handle.f_y(z, t, m);
    }
    return acc / samples;
}

std::vector<double> oracle_do_rows(const OracleHandle& handle, const Dataset& ds,
                                   const std::vector<double>& t_override) {
    auto t_cols = ds.columns_with_role(Role::Treatment);
    auto x_cols = ds.columns_with_role(Role::Confounder);
    auto m_cols = ds.columns_with_role(Role::Adjustment);
    std::vector<double> out(ds.n_rows());
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        std::vector<double> x, m, t;
        for (std::size_t c : x_cols) x.push_back(ds.values(r, c));
        for (std::size_t c : m_cols) m.push_back(ds.values(r, c));
        if (t_override.empty())
            for (std::size_t c : t_cols) t.push_back(ds.values(r, c));
        else
            t = t_override;
        out[r] = oracle_do(handle, x, m, t);
    }
    return out;
}

}  // namespace cips

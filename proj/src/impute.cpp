#include "cips/impute.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace cips {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kRidgeFallback = 1e-4;

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

/// Encoded predictor row for target column `target`: intercept, then every
/// other column (continuous/binary/ordinal as value, nominal one-hot minus
/// first level).
std::vector<double> encode_row(const Dataset& ds, std::size_t r, std::size_t target) {
    std::vector<double> x{1.0};
    for (std::size_t c = 0; c < ds.n_cols(); ++c) {
        if (c == target) continue;
        const VariableSpec& spec = ds.schema[c];
        if (spec.kind == Kind::Nominal) {
            auto idx = static_cast<std::size_t>(std::llround(ds.values(r, c)));
            for (std::size_t k = 1; k < spec.n_categories(); ++k)
                x.push_back(idx == k ? 1.0 : 0.0);
        } else {
            x.push_back(ds.values(r, c));
        }
    }
    return x;
}

CondKind cond_kind_for(const VariableSpec& spec) {
    switch (spec.kind) {
        case Kind::Continuous: return CondKind::LinearGaussian;
        case Kind::Binary: return CondKind::Logistic;
        case Kind::Ordinal: return CondKind::OrdinalLinear;
        case Kind::Nominal: return CondKind::NominalDiscriminant;
    }
    return CondKind::LinearGaussian;
}

Matrix build_design(const Dataset& ds, const std::vector<std::size_t>& rows, std::size_t target) {
    auto first = encode_row(ds, rows.empty() ? 0 : rows[0], target);
    Matrix x(rows.size(), first.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto enc = encode_row(ds, rows[i], target);
        for (std::size_t j = 0; j < enc.size(); ++j) x(i, j) = enc[j];
    }
    return x;
}

/// Draws (theta, sigma^2) from the normal-inverse-gamma posterior of a linear
/// model, ridge-regularized when X'X is singular.
void draw_linear(const Matrix& x, const std::vector<double>& y, RngStream& rng, Matrix& theta_out,
                 double& sigma2_out) {
    std::size_t n = x.rows, p = x.cols;
    Matrix xtx = matmul(transpose(x), x);
    Matrix xty(p, 1);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) xty(j, 0) += x(i, j) * y[i];

    Matrix chol;
    try {
        chol = cholesky(xtx);
    } catch (const std::runtime_error&) {
        Matrix ridged = xtx;
        for (std::size_t j = 0; j < p; ++j) ridged(j, j) += kRidgeFallback * std::max(1.0, xtx(j, j));
        chol = cholesky(ridged);
    }
    Matrix theta_hat = cholesky_solve(chol, xty);

    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double pred = 0.0;
        for (std::size_t j = 0; j < p; ++j) pred += x(i, j) * theta_hat(j, 0);
        double d = y[i] - pred;
        ssr += d * d;
    }
    double df = n > p + 2 ? static_cast<double>(n - p) : 2.0;
    double sigma2 = (ssr + 1e-9) / rng.chi_squared(df);

    // theta ~ N(theta_hat, sigma2 * (X'X)^-1); sample via the solve of L^T u = eps
    Matrix eps(p, 1);
    for (std::size_t j = 0; j < p; ++j) eps(j, 0) = rng.normal();
    // Solve L^T u = eps so that Cov(u) = (L L^T)^-1 = (X'X)^-1
    Matrix u(p, 1);
    for (std::size_t ii = p; ii-- > 0;) {
        double s = eps(ii, 0);
        for (std::size_t j = ii + 1; j < p; ++j) s -= chol(j, ii) * u(j, 0);
        u(ii, 0) = s / chol(ii, ii);
    }
    theta_out = theta_hat;
    double sd = std::sqrt(sigma2);
    for (std::size_t j = 0; j < p; ++j) theta_out(j, 0) += sd * u(j, 0);
    sigma2_out = sigma2;
}

/// Logistic MLE via ridge-stabilized IRLS, then an asymptotic-normal
/// parameter draw theta ~ N(theta_hat, (X'WX)^-1).
Matrix draw_logistic(const Matrix& x, const std::vector<double>& y, RngStream& rng) {
    std::size_t n = x.rows, p = x.cols;
    Matrix theta(p, 1);
    Matrix xtwx_chol;
    const double ridge = 1e-6 * n + 1e-8;
    for (int iter = 0; iter < 25; ++iter) {
        Matrix xtwx(p, p);
        Matrix grad(p, 1);
        for (std::size_t i = 0; i < n; ++i) {
            double eta = 0.0;
            for (std::size_t j = 0; j < p; ++j) eta += x(i, j) * theta(j, 0);
            double mu = stable_sigmoid(eta);
            double w = std::max(mu * (1.0 - mu), 1e-6);
            for (std::size_t j = 0; j < p; ++j) {
                grad(j, 0) += x(i, j) * (y[i] - mu);
                for (std::size_t k = 0; k <= j; ++k) xtwx(j, k) += w * x(i, j) * x(i, k);
            }
        }
        for (std::size_t j = 0; j < p; ++j) {
            for (std::size_t k = 0; k < j; ++k) xtwx(k, j) = xtwx(j, k);
            xtwx(j, j) += ridge;
            grad(j, 0) -= ridge * theta(j, 0);
        }
        xtwx_chol = cholesky(xtwx);
        Matrix step = cholesky_solve(xtwx_chol, grad);
        double step_norm = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            theta(j, 0) += step(j, 0);
            step_norm += step(j, 0) * step(j, 0);
        }
        if (step_norm < 1e-12) break;
    }
    // draw from N(theta_hat, (X'WX)^-1) via L^T u = eps
    Matrix eps(p, 1);
    for (std::size_t j = 0; j < p; ++j) eps(j, 0) = rng.normal();
    Matrix u(p, 1);
    for (std::size_t ii = p; ii-- > 0;) {
        double s = eps(ii, 0);
        for (std::size_t j = ii + 1; j < p; ++j) s -= xtwx_chol(j, ii) * u(j, 0);
        u(ii, 0) = s / xtwx_chol(ii, ii);
    }
    for (std::size_t j = 0; j < p; ++j) theta(j, 0) += u(j, 0);
    return theta;
}

std::vector<std::size_t> observed_rows(const Dataset& source, std::size_t col) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < source.n_rows(); ++r)
        if (source.observed(r, col)) rows.push_back(r);
    return rows;
}

std::vector<std::size_t> missing_rows(const Dataset& source, std::size_t col) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < source.n_rows(); ++r)
        if (!source.observed(r, col)) rows.push_back(r);
    return rows;
}

void impute_column(ChainState& state, std::size_t col, RngStream& rng) {
    const VariableSpec& spec = state.source.schema[col];
    auto obs = observed_rows(state.source, col);
    auto mis = missing_rows(state.source, col);
    if (mis.empty()) return;

    ConditionalModel model;
    model.target_col = col;
    model.kind = cond_kind_for(spec);

    Matrix x_obs = build_design(state.working, obs, col);
    Matrix x_mis = build_design(state.working, mis, col);
    std::vector<double> y(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) y[i] = state.working.values(obs[i], col);

    switch (model.kind) {
        case CondKind::LinearGaussian:
        case CondKind::OrdinalLinear: {
            draw_linear(x_obs, y, rng, model.coef, model.residual_variance);
            double sd = std::sqrt(model.residual_variance);
            double max_cat = spec.is_categorical() ? spec.n_categories() - 1.0 : 0.0;
            for (std::size_t i = 0; i < mis.size(); ++i) {
                double mu = 0.0;
                for (std::size_t j = 0; j < x_mis.cols; ++j)
                    mu += x_mis(i, j) * model.coef(j, 0);
                double draw = mu + sd * rng.normal();
                if (model.kind == CondKind::OrdinalLinear)
                    draw = std::clamp(std::round(draw), 0.0, max_cat);
                state.working.values(mis[i], col) = draw;
            }
            break;
        }
        case CondKind::Logistic: {
            model.coef = draw_logistic(x_obs, y, rng);
            for (std::size_t i = 0; i < mis.size(); ++i) {
                double eta = 0.0;
                for (std::size_t j = 0; j < x_mis.cols; ++j)
                    eta += x_mis(i, j) * model.coef(j, 0);
                state.working.values(mis[i], col) =
                    rng.uniform() < stable_sigmoid(eta) ? 1.0 : 0.0;
            }
            break;
        }
        case CondKind::NominalDiscriminant: {
            std::size_t n_class = spec.n_categories();
            std::size_t p = x_obs.cols - 1;  // drop intercept for discriminant scores
            model.class_means = Matrix(n_class, p);
            model.pooled_var.assign(p, 0.0);
            model.priors.assign(n_class, 0.0);
            std::vector<std::size_t> counts(n_class, 0);
            for (std::size_t i = 0; i < obs.size(); ++i) {
                auto k = static_cast<std::size_t>(std::llround(y[i]));
                counts[k]++;
                for (std::size_t f = 0; f < p; ++f) model.class_means(k, f) += x_obs(i, f + 1);
            }
            for (std::size_t k = 0; k < n_class; ++k) {
                model.priors[k] = (counts[k] + 0.5) / (obs.size() + 0.5 * n_class);
                if (counts[k])
                    for (std::size_t f = 0; f < p; ++f) model.class_means(k, f) /= counts[k];
            }
            for (std::size_t i = 0; i < obs.size(); ++i) {
                auto k = static_cast<std::size_t>(std::llround(y[i]));
                for (std::size_t f = 0; f < p; ++f) {
                    double d = x_obs(i, f + 1) - model.class_means(k, f);
                    model.pooled_var[f] += d * d;
                }
            }
            for (std::size_t f = 0; f < p; ++f)
                model.pooled_var[f] = std::max(model.pooled_var[f] / std::max<std::size_t>(obs.size() - n_class, 1), 1e-6);
            // parameter uncertainty: perturb class means by their sampling noise
            Matrix drawn = model.class_means;
            for (std::size_t k = 0; k < n_class; ++k) {
                double nk = std::max<double>(counts[k], 1.0);
                for (std::size_t f = 0; f < p; ++f)
                    drawn(k, f) += rng.normal() * std::sqrt(model.pooled_var[f] / nk);
            }
            for (std::size_t i = 0; i < mis.size(); ++i) {
                std::vector<double> score(n_class);
                double mx = -1e300;
                for (std::size_t k = 0; k < n_class; ++k) {
                    double s = std::log(model.priors[k]);
                    for (std::size_t f = 0; f < p; ++f) {
                        double d = x_mis(i, f + 1) - drawn(k, f);
                        s -= 0.5 * (d * d / model.pooled_var[f] + std::log(model.pooled_var[f]));
                    }
                    score[k] = s;
                    mx = std::max(mx, s);
                }
                double z = 0.0;
                for (double& s : score) {
                    s = std::exp(s - mx);
                    z += s;
                }
                double u = rng.uniform() * z, acc = 0.0;
                std::size_t pick = n_class - 1;
                for (std::size_t k = 0; k < n_class; ++k) {
                    acc += score[k];
                    if (u < acc) {
                        pick = k;
                        break;
                    }
                }
                state.working.values(mis[i], col) = static_cast<double>(pick);
            }
            break;
        }
    }

    auto it = std::find_if(state.models.begin(), state.models.end(),
                           [col](const ConditionalModel& m) { return m.target_col == col; });
    if (it == state.models.end())
        state.models.push_back(std::move(model));
    else
        *it = std::move(model);
}

void run_parallel(std::size_t n_items, std::size_t jobs, const std::function<void(std::size_t)>& fn);

}  // namespace

ChainState init_chain(const Dataset& ds, std::uint64_t seed) {
    ChainState state;
    state.source = ds;
    state.working = ds;
    RngStream rng(seed, /*stream=*/0xC4A1);
    for (std::size_t c = 0; c < ds.n_cols(); ++c) {
        auto obs = observed_rows(ds, c);
        if (obs.empty())
            throw std::runtime_error("init_chain: column " + ds.schema[c].name +
                                     " has no observed values");
        for (std::size_t r = 0; r < ds.n_rows(); ++r) {
            if (ds.observed(r, c)) continue;
            std::size_t pick = obs[rng.uniform_int(obs.size())];
            state.working.values(r, c) = ds.values(pick, c);
            state.working.set_observed(r, c, true);
        }
    }
    return state;
}

void gibbs_sweep(ChainState& state, RngStream& rng) {
    for (std::size_t c = 0; c < state.source.n_cols(); ++c) impute_column(state, c, rng);
    state.iteration++;
}

namespace {
void run_parallel(std::size_t n_items, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n_items));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n_items; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(jobs);
    for (std::size_t t = 0; t < jobs; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n_items; i += jobs) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}
}  // namespace

ImputedSet multiple_impute(const Dataset& ds, std::size_t m, std::size_t burn_in,
                           std::uint64_t seed, std::size_t jobs) {
    if (m < 1) throw std::invalid_argument("multiple_impute: M must be >= 1");
    if (burn_in < 1) throw std::invalid_argument("multiple_impute: burn_in must be >= 1");
    ImputedSet set;
    set.imputations.resize(m);
    set.source_mask = ds.mask;
    set.seed = seed;
    set.burn_in = burn_in;
    RngStream root(seed, /*stream=*/0xFC5);
    std::vector<RngStream> chain_rngs;
    for (std::size_t chain = 0; chain < m; ++chain) chain_rngs.push_back(root.substream(chain));
    run_parallel(m, jobs, [&](std::size_t chain) {
        RngStream rng = chain_rngs[chain];
        ChainState state = init_chain(ds, rng.next_u64());
        for (std::size_t t = 0; t < burn_in; ++t) gibbs_sweep(state, rng);
        set.imputations[chain] = std::move(state.working);
    });
    return set;
}

Dataset single_mean_impute(const Dataset& ds) {
    Dataset out = ds;
    for (std::size_t c = 0; c < ds.n_cols(); ++c) {
        auto obs = observed_rows(ds, c);
        if (obs.empty())
            throw std::runtime_error("single_mean_impute: column " + ds.schema[c].name +
                                     " has no observed values");
        double fill;
        if (ds.schema[c].is_categorical()) {
            std::map<long long, std::size_t> counts;
            for (std::size_t r : obs) counts[std::llround(ds.values(r, c))]++;
            long long mode = counts.begin()->first;
            std::size_t best = counts.begin()->second;
            for (auto& [cat, n] : counts)
                if (n > best) {  // ties resolve to the lowest category index
                    best = n;
                    mode = cat;
                }
            fill = static_cast<double>(mode);
        } else {
            double sum = 0.0;
            for (std::size_t r : obs) sum += ds.values(r, c);
            fill = sum / obs.size();
        }
        for (std::size_t r = 0; r < ds.n_rows(); ++r)
            if (!ds.observed(r, c)) {
                out.values(r, c) = fill;
                out.set_observed(r, c, true);
            }
    }
    return out;
}

PredictionResult pool_predictions(const std::vector<std::vector<double>>& preds) {
    if (preds.empty()) throw std::invalid_argument("pool_predictions: M must be >= 1");
    std::size_t m = preds.size(), n = preds.front().size();
    for (const auto& p : preds)
        if (p.size() != n) throw std::invalid_argument("pool_predictions: length mismatch");
    PredictionResult res;
    res.m = m;
    res.single_imputation = (m == 1);
    res.mean.assign(n, 0.0);
    res.stderr_.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t k = 0; k < m; ++k) sum += preds[k][i];
        res.mean[i] = sum / m;
        if (m > 1) {
            double ss = 0.0;
            for (std::size_t k = 0; k < m; ++k) {
                double d = preds[k][i] - res.mean[i];
                ss += d * d;
            }
            res.stderr_[i] = std::sqrt(ss / (m - 1));
        }
    }
    return res;
}

void save_imputed_set(const ImputedSet& set, const std::string& dir) {
    fs::create_directories(dir);
    json prov;
    prov["seed"] = set.seed;
    prov["burn_in"] = set.burn_in;
    prov["M"] = set.m();
    std::vector<std::string> columns;
    for (const auto& v : set.imputations.front().schema) columns.push_back(v.name);
    prov["columns"] = columns;
    std::ofstream(fs::path(dir) / "provenance.json") << prov.dump(2) << "\n";
    save_schema(set.imputations.front().schema, (fs::path(dir) / "schema.json").string());
    for (std::size_t k = 0; k < set.m(); ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "imp_%03zu.csv", k + 1);
        save_dataset(set.imputations[k], (fs::path(dir) / name).string());
    }
    json mask_json = json::array();
    for (auto b : set.source_mask) mask_json.push_back(b != 0);
    std::ofstream(fs::path(dir) / "source_mask.json") << mask_json.dump() << "\n";
}

ImputedSet load_imputed_set(const std::string& dir) {
    std::ifstream prov_in(fs::path(dir) / "provenance.json");
    if (!prov_in) throw std::runtime_error("load_imputed_set: missing provenance.json in " + dir);
    json prov = json::parse(prov_in);
    ImputedSet set;
    set.seed = prov.at("seed").get<std::uint64_t>();
    set.burn_in = prov.at("burn_in").get<std::size_t>();
    auto m = prov.at("M").get<std::size_t>();
    std::string schema_path = (fs::path(dir) / "schema.json").string();
    for (std::size_t k = 0; k < m; ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "imp_%03zu.csv", k + 1);
        set.imputations.push_back(load_dataset((fs::path(dir) / name).string(), schema_path));
    }
    std::ifstream mask_in(fs::path(dir) / "source_mask.json");
    if (mask_in) {
        json mask_json = json::parse(mask_in);
        for (const auto& b : mask_json) set.source_mask.push_back(b.get<bool>() ? 1 : 0);
    }
    return set;
}

}  // namespace cips

#include "cips/intervene.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace cips {

namespace {

std::vector<Dataset> scaled_completions(const VaeModel& model, const ImputedSet& completions,
                                        const DoQuery* query) {
    if (completions.m() == 0) throw std::invalid_argument("predict_do: no imputations");
    if (!(model.schema == completions.imputations.front().schema))
        throw std::invalid_argument("predict_do: model/completions schema mismatch");
    auto t_cols = completions.imputations.front().columns_with_role(Role::Treatment);
    if (query && query->treatment.size() != t_cols.size())
        throw std::invalid_argument("predict_do: query treatment length mismatch");

    std::vector<Dataset> scaled;
    scaled.reserve(completions.m());
    for (const Dataset& imp : completions.imputations) {
        Dataset ds = imp;
        if (query)
            for (std::size_t r = 0; r < ds.n_rows(); ++r)
                for (std::size_t j = 0; j < t_cols.size(); ++j)
                    ds.values(r, t_cols[j]) = query->treatment[j];
        scaled.push_back(apply_scaling(ds, model.scaling));
    }
    return scaled;
}

/// Per-subject estimate under each completion, pooled across completions.
DoPrediction predict_row_scaled(const VaeModel& model, const std::vector<Dataset>& scaled,
                                std::size_t row, std::size_t latent_samples,
                                const RngStream& row_rng) {
    FeatureCodec codec = model.codec();
    std::size_t dz = model.cfg.latent_dim;
    std::size_t y_col = scaled.front().outcome_column();
    const auto& y_scale = model.scaling.mean_std[y_col];

    std::vector<std::vector<double>> per_imp;
    for (std::size_t i = 0; i < scaled.size(); ++i) {
        const Dataset& ds = scaled[i];
        std::vector<double> x_enc = codec.encode_row(ds, row, Role::Confounder);
        std::vector<double> m_enc = codec.encode_row(ds, row, Role::Adjustment);
        std::vector<double> t_enc = codec.encode_row(ds, row, Role::Treatment);

        // surrogate outcome under the intervention, then posterior over z
        DiagGaussian yq = auxiliary_y(model, x_enc, m_enc, t_enc);
        DiagGaussian q = encode(model, x_enc, t_enc, yq.mean[0]);

        RngStream rng = row_rng.substream(i);
        Matrix z(latent_samples, dz);
        for (std::size_t l = 0; l < latent_samples; ++l)
            for (std::size_t j = 0; j < dz; ++j)
                z(l, j) = q.mean[j] + std::sqrt(q.variance[j]) * rng.normal();

        Matrix m_rep(latent_samples, m_enc.size());
        Matrix t_rep(latent_samples, t_enc.size());
        for (std::size_t l = 0; l < latent_samples; ++l) {
            for (std::size_t j = 0; j < m_enc.size(); ++j) m_rep(l, j) = m_enc[j];
            for (std::size_t j = 0; j < t_enc.size(); ++j) t_rep(l, j) = t_enc[j];
        }
        BatchGaussian out = outcome_head_batch(model, m_rep, t_rep, z);
        double acc = 0.0;
        for (std::size_t l = 0; l < latent_samples; ++l) acc += out.mean(l, 0);
        double y_scaled = acc / latent_samples;
        double y_raw = y_scale ? y_scaled * y_scale->second + y_scale->first : y_scaled;
        per_imp.push_back({y_raw});
    }
    PredictionResult pooled = pool_predictions(per_imp);
    DoPrediction pred;
    pred.mean = pooled.mean[0];
    pred.stderr_ = pooled.stderr_[0];
    pred.latent_samples = latent_samples;
    pred.n_imputations = scaled.size();
    return pred;
}

DoBatchResult predict_batch_impl(const VaeModel& model, const ImputedSet& completions,
                                 const DoQuery* query, std::size_t latent_samples,
                                 std::uint64_t seed, std::size_t jobs) {
    if (latent_samples < 1) throw std::invalid_argument("predict_do: latent_samples must be >= 1");
    std::vector<Dataset> scaled = scaled_completions(model, completions, query);
    std::size_t n = scaled.front().n_rows();

    DoBatchResult res;
    res.mean.resize(n);
    res.stderr_.resize(n);
    res.latent_samples = latent_samples;
    res.n_imputations = scaled.size();
    res.seed = seed;

    RngStream root(seed, /*stream=*/0xD0);
    auto work = [&](std::size_t r) {
        DoPrediction p = predict_row_scaled(model, scaled, r, latent_samples, root.substream(r));
        res.mean[r] = p.mean;
        res.stderr_[r] = p.stderr_;
    };
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t r = 0; r < n; ++r) work(r);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(jobs);
        for (std::size_t t = 0; t < jobs; ++t)
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t r = t; r < n; r += jobs) work(r);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    return res;
}

}  // namespace

DoPrediction predict_do(const VaeModel& model, const ImputedSet& completions, std::size_t row,
                        const DoQuery& query, std::size_t latent_samples, std::uint64_t seed) {
    if (latent_samples < 1) throw std::invalid_argument("predict_do: latent_samples must be >= 1");
    std::vector<Dataset> scaled = scaled_completions(model, completions, &query);
    if (row >= scaled.front().n_rows()) throw std::out_of_range("predict_do: row out of range");
    RngStream root(seed, /*stream=*/0xD0);
    return predict_row_scaled(model, scaled, row, latent_samples, root.substream(row));
}

DoBatchResult predict_do_batch(const VaeModel& model, const ImputedSet& completions,
                               const DoQuery& query, std::size_t latent_samples,
                               std::uint64_t seed, std::size_t jobs) {
    return predict_batch_impl(model, completions, &query, latent_samples, seed, jobs);
}

DoBatchResult predict_factual_batch(const VaeModel& model, const ImputedSet& completions,
                                    std::size_t latent_samples, std::uint64_t seed,
                                    std::size_t jobs) {
    return predict_batch_impl(model, completions, nullptr, latent_samples, seed, jobs);
}

void save_predictions(const DoBatchResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_predictions: cannot write " + path);
    out << "row_id,y_pred_mean,y_pred_stderr,latent_samples,n_imputations,seed\n";
    char buf[64];
    for (std::size_t r = 0; r < result.mean.size(); ++r) {
        out << r << ",";
        std::snprintf(buf, sizeof buf, "%.17g", result.mean[r]);
        out << buf << ",";
        std::snprintf(buf, sizeof buf, "%.17g", result.stderr_[r]);
        out << buf << "," << result.latent_samples << "," << result.n_imputations << ","
            << result.seed << "\n";
    }
}

DoBatchResult load_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_predictions: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) ||
        line != "row_id,y_pred_mean,y_pred_stderr,latent_samples,n_imputations,seed")
        throw std::runtime_error("load_predictions: bad header in " + path);
    DoBatchResult res;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 6) throw std::runtime_error("load_predictions: bad row in " + path);
        res.mean.push_back(std::stod(fields[1]));
        res.stderr_.push_back(std::stod(fields[2]));
        res.latent_samples = std::stoul(fields[3]);
        res.n_imputations = std::stoul(fields[4]);
        res.seed = std::stoull(fields[5]);
    }
    return res;
}

}  // namespace cips

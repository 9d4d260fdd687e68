#include "cips/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace cips {

using nlohmann::json;

double mape(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size()) throw std::invalid_argument("mape: length mismatch");
    if (pred.empty()) throw std::invalid_argument("mape: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (target[i] == 0.0) throw std::domain_error("mape: zero target");
        acc += std::abs((pred[i] - target[i]) / target[i]);
    }
    return 100.0 * acc / pred.size();
}

MapeResult mape_filtered(const std::vector<double>& pred, const std::vector<double>& target,
                         double min_abs_target) {
    if (pred.size() != target.size())
        throw std::invalid_argument("mape_filtered: length mismatch");
    MapeResult res;
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (std::abs(target[i]) < min_abs_target) {
            res.n_excluded++;
            continue;
        }
        acc += std::abs((pred[i] - target[i]) / target[i]);
        res.n_used++;
    }
    if (res.n_used == 0) throw std::domain_error("mape_filtered: every target near zero");
    res.value = 100.0 * acc / res.n_used;
    return res;
}

std::string to_string(ModelKind m) {
    switch (m) {
        case ModelKind::CipsFcs: return "cips_fcs";
        case ModelKind::CipsSmi: return "cips_smi";
        case ModelKind::Lasso: return "lasso";
        case ModelKind::Knn: return "knn";
    }
    throw std::logic_error("to_string(ModelKind): bad value");
}

ModelKind model_from_string(const std::string& s) {
    if (s == "cips_fcs") return ModelKind::CipsFcs;
    if (s == "cips_smi") return ModelKind::CipsSmi;
    if (s == "lasso") return ModelKind::Lasso;
    if (s == "knn") return ModelKind::Knn;
    throw std::invalid_argument("model_from_string: unknown model " + s);
}

std::vector<const CellResult*> ScenarioReport::select(ModelKind model,
                                                      MissScenario scenario) const {
    std::vector<const CellResult*> out;
    for (const auto& c : cells)
        if (c.model == model && c.scenario == scenario) out.push_back(&c);
    return out;
}

double ScenarioReport::mean_mape(ModelKind model, MissScenario scenario) const {
    auto sel = select(model, scenario);
    if (sel.empty()) throw std::invalid_argument("mean_mape: no cells for selection");
    double acc = 0.0;
    for (const auto* c : sel) {
        if (!c->ok()) throw std::runtime_error("mean_mape: failed cell: " + c->error);
        acc += c->mape;
    }
    return acc / sel.size();
}

double ScenarioReport::stderr_mape(ModelKind model, MissScenario scenario) const {
    auto sel = select(model, scenario);
    if (sel.empty()) throw std::invalid_argument("stderr_mape: no cells for selection");
    if (sel.size() == 1) return 0.0;
    double mean = mean_mape(model, scenario);
    double ss = 0.0;
    for (const auto* c : sel) ss += (c->mape - mean) * (c->mape - mean);
    return std::sqrt(ss / (sel.size() - 1)) / std::sqrt(static_cast<double>(sel.size()));
}

namespace {

Dataset concat_rows(const Dataset& a, const Dataset& b) {
    if (!(a.schema == b.schema)) throw std::invalid_argument("concat_rows: schema mismatch");
    Dataset out;
    out.schema = a.schema;
    out.values = vconcat({a.values, b.values});
    out.mask = a.mask;
    out.mask.insert(out.mask.end(), b.mask.begin(), b.mask.end());
    return out;
}

/// Raw values of every non-outcome column, in schema order.
Matrix feature_matrix(const Dataset& ds) {
    std::size_t y_col = ds.outcome_column();
    Matrix out(ds.n_rows(), ds.n_cols() - 1);
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        std::size_t o = 0;
        for (std::size_t c = 0; c < ds.n_cols(); ++c)
            if (c != y_col) out(r, o++) = ds.values(r, c);
    }
    return out;
}

std::vector<double> outcome_vector(const Dataset& ds) {
    std::size_t y_col = ds.outcome_column();
    std::vector<double> out(ds.n_rows());
    for (std::size_t r = 0; r < ds.n_rows(); ++r) out[r] = ds.values(r, y_col);
    return out;
}

/// Extracts the trailing n_test rows of every imputation as a test-only set.
ImputedSet slice_test(const ImputedSet& combined, std::size_t n_train, std::size_t n_test) {
    std::vector<std::size_t> rows(n_test);
    for (std::size_t i = 0; i < n_test; ++i) rows[i] = n_train + i;
    ImputedSet out;
    out.seed = combined.seed;
    out.burn_in = combined.burn_in;
    for (const Dataset& imp : combined.imputations) out.imputations.push_back(imp.select_rows(rows));
    std::size_t d = combined.imputations.front().n_cols();
    for (std::size_t i = 0; i < n_test; ++i)
        for (std::size_t c = 0; c < d; ++c)
            out.source_mask.push_back(combined.source_mask[(n_train + i) * d + c]);
    return out;
}

}  // namespace

ScenarioReport run_scenarios(const RunConfig& cfg) {
    ScenarioReport report;
    bool want_cips =
        std::any_of(cfg.models.begin(), cfg.models.end(), [](ModelKind m) {
            return m == ModelKind::CipsFcs || m == ModelKind::CipsSmi;
        });

    for (std::uint64_t seed : cfg.seeds) {
        ScmConfig scm = cfg.scm;
        scm.seed = seed;
        auto [ds, oracle] = generate(scm);
        SplitResult sp = split(ds, 0.6, 0.2, seed);
        std::vector<double> target = oracle_do_rows(oracle, sp.test, {});

        VaeModel model;
        std::string train_error;
        if (want_cips) {
            try {
                VaeConfig vcfg = cfg.vae;
                vcfg.seed = seed;
                model = train(sp.train, sp.valid, vcfg);
            } catch (const std::exception& e) {
                train_error = e.what();
            }
        }

        for (MissScenario scenario : cfg.scenarios) {
            Dataset masked_test = simulate_missingness(sp.test, scenario, seed);
            Dataset combined = concat_rows(sp.train, masked_test);
            std::size_t n_train = sp.train.n_rows(), n_test = masked_test.n_rows();

            // single fill shared by the baselines and the single-imputation run
            ImputedSet smi_test;
            std::string smi_error;
            try {
                ImputedSet one;
                one.seed = seed;
                one.imputations.push_back(single_mean_impute(combined));
                one.source_mask = combined.mask;
                smi_test = slice_test(one, n_train, n_test);
            } catch (const std::exception& e) {
                smi_error = e.what();
            }

            // complete data makes every imputer a no-op; reuse the single fill
            ImputedSet mi_test;
            std::string mi_error;
            bool need_mi = std::any_of(cfg.models.begin(), cfg.models.end(),
                                       [](ModelKind m) { return m == ModelKind::CipsFcs; });
            if (need_mi) {
                if (combined.fully_observed()) {
                    mi_test = smi_test;
                    mi_error = smi_error;
                } else {
                    try {
                        ImputedSet mi = multiple_impute(combined, cfg.m_imputations, cfg.burn_in,
                                                        seed, cfg.jobs);
                        mi_test = slice_test(mi, n_train, n_test);
                    } catch (const std::exception& e) {
                        mi_error = e.what();
                    }
                }
            }

            for (ModelKind mk : cfg.models) {
                CellResult cell;
                cell.model = mk;
                cell.scenario = scenario;
                cell.seed = seed;
                try {
                    std::vector<double> pred;
                    switch (mk) {
                        case ModelKind::CipsFcs:
                        case ModelKind::CipsSmi: {
                            if (!train_error.empty()) throw std::runtime_error(train_error);
                            const ImputedSet& comp = mk == ModelKind::CipsFcs ? mi_test : smi_test;
                            const std::string& ierr =
                                mk == ModelKind::CipsFcs ? mi_error : smi_error;
                            if (!ierr.empty()) throw std::runtime_error(ierr);
                            pred = predict_factual_batch(model, comp, cfg.latent_samples, seed,
                                                         cfg.jobs)
                                       .mean;
                            break;
                        }
                        case ModelKind::Lasso: {
                            if (!smi_error.empty()) throw std::runtime_error(smi_error);
                            LassoModel lm = fit_lasso(feature_matrix(sp.train),
                                                      outcome_vector(sp.train), cfg.lasso_lambda);
                            pred = lasso_predict_batch(
                                lm, feature_matrix(smi_test.imputations.front()));
                            break;
                        }
                        case ModelKind::Knn: {
                            if (!smi_error.empty()) throw std::runtime_error(smi_error);
                            KnnModel km = fit_knn(feature_matrix(sp.train),
                                                  outcome_vector(sp.train), cfg.knn_k);
                            pred = knn_predict_batch(
                                km, feature_matrix(smi_test.imputations.front()), cfg.jobs);
                            break;
                        }
                    }
                    MapeResult mr = mape_filtered(pred, target);
                    cell.mape = mr.value;
                    cell.n_used = mr.n_used;
                    cell.n_excluded = mr.n_excluded;
                } catch (const std::exception& e) {
                    cell.error = e.what();
                }
                report.cells.push_back(cell);
            }
        }
    }
    return report;
}

namespace {

std::string sanitize(const std::string& s) {
    std::string out = s;
    for (char& c : out)
        if (c == ',' || c == '\n') c = ';';
    return out;
}

}  // namespace

std::string report_to_csv(const ScenarioReport& report) {
    std::ostringstream out;
    out << "model,scenario,seed,mape,n_used,n_excluded,error\n";
    char buf[64];
    for (const auto& c : report.cells) {
        std::snprintf(buf, sizeof buf, "%.17g", c.mape);
        out << to_string(c.model) << "," << to_string(c.scenario) << "," << c.seed << "," << buf
            << "," << c.n_used << "," << c.n_excluded << "," << sanitize(c.error) << "\n";
    }
    return out.str();
}

ScenarioReport report_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "model,scenario,seed,mape,n_used,n_excluded,error")
        throw std::runtime_error("report_from_csv: bad header");
    ScenarioReport report;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::vector<std::string> fields;
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        while (fields.size() < 7) fields.push_back("");
        CellResult c;
        c.model = model_from_string(fields[0]);
        c.scenario = scenario_from_string(fields[1]);
        c.seed = std::stoull(fields[2]);
        c.mape = std::stod(fields[3]);
        c.n_used = std::stoul(fields[4]);
        c.n_excluded = std::stoul(fields[5]);
        c.error = fields[6];
        report.cells.push_back(c);
    }
    return report;
}

std::string report_to_json(const ScenarioReport& report) {
    json cells = json::array();
    for (const auto& c : report.cells)
        cells.push_back({{"model", to_string(c.model)},
                         {"scenario", to_string(c.scenario)},
                         {"seed", c.seed},
                         {"mape", c.mape},
                         {"n_used", c.n_used},
                         {"n_excluded", c.n_excluded},
                         {"error", c.error}});
    json j;
    j["format_version"] = 1;
    j["cells"] = cells;
    return j.dump(2);
}

std::string report_to_table(const ScenarioReport& report) {
    std::vector<ModelKind> models;
    std::vector<MissScenario> scenarios;
    for (const auto& c : report.cells) {
        if (std::find(models.begin(), models.end(), c.model) == models.end())
            models.push_back(c.model);
        if (std::find(scenarios.begin(), scenarios.end(), c.scenario) == scenarios.end())
            scenarios.push_back(c.scenario);
    }
    std::ostringstream out;
    out << "MAPE (%) mean +/- stderr across seeds\n";
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-10s", "model");
    out << buf;
    for (auto s : scenarios) {
        std::snprintf(buf, sizeof buf, " %18s", to_string(s).c_str());
        out << buf;
    }
    out << "\n";
    for (auto m : models) {
        std::snprintf(buf, sizeof buf, "%-10s", to_string(m).c_str());
        out << buf;
        for (auto s : scenarios) {
            bool failed = false;
            for (const auto* c : report.select(m, s))
                if (!c->ok()) failed = true;
            if (failed || report.select(m, s).empty()) {
                std::snprintf(buf, sizeof buf, " %18s", "failed");
            } else {
                std::snprintf(buf, sizeof buf, " %9.3f +- %5.3f", report.mean_mape(m, s),
                              report.stderr_mape(m, s));
            }
            out << buf;
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace cips

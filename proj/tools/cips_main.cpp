// Command-line front end: simulate, impute, train, predict, evaluate.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cips/baselines.hpp"
#include "cips/dataset.hpp"
#include "cips/evaluate.hpp"
#include "cips/impute.hpp"
#include "cips/intervene.hpp"
#include "cips/synthcausal.hpp"
#include "cips/vae.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Output paths resolve against this root when relative (the only environment
/// variable the tool reads).
fs::path resolve_out(const std::string& out) {
    fs::path p(out);
    if (p.is_relative()) {
        if (const char* root = std::getenv("CIPS_OUTPUT_ROOT")) p = fs::path(root) / p;
    }
    return p;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Merged = defaults <- config file <- --set overrides. Keys absent from the
/// defaults are rejected so typos fail loudly instead of being ignored.
void check_known_keys(const json& merged, const json& defaults, const std::string& prefix) {
    if (!merged.is_object()) return;
    for (auto& [key, value] : merged.items()) {
        std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!defaults.is_object() || !defaults.contains(key))
            throw ConfigError("unknown config key: " + path);
        check_known_keys(value, defaults.at(key), path);
    }
}

json parse_set_value(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception&) {
        return json(text);  // bare strings need no quoting
    }
}

void apply_set(json& cfg, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("--set expects key=value, got: " + assignment);
    std::string key = assignment.substr(0, eq);
    json value = parse_set_value(assignment.substr(eq + 1));
    json* node = &cfg;
    std::istringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
    (*node)[parts.back()] = value;
}

json load_merged_config(const json& defaults, const std::string& config_path,
                        const std::vector<std::string>& sets) {
    json merged = defaults;
    if (!config_path.empty()) {
        json file;
        try {
            file = json::parse(read_file(config_path));
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
        merged.merge_patch(file);
    }
    for (const auto& s : sets) apply_set(merged, s);
    check_known_keys(merged, defaults, "");
    return merged;
}

void write_sidecar(const fs::path& out_dir, const json& merged) {
    write_file_atomic(out_dir / "resolved_config.json", merged.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

int cmd_simulate(const json& merged, const fs::path& out_dir) {
    cips::ScmConfig scm = cips::scm_config_from_json(merged.at("scm").dump());
    cips::MissScenario scenario =
        cips::scenario_from_string(merged.at("scenario").get<std::string>());
    std::uint64_t miss_seed = merged.at("miss_seed").get<std::uint64_t>();

    auto [ds, oracle] = cips::generate(scm);
    cips::Dataset masked = cips::simulate_missingness(ds, scenario, miss_seed);
    std::vector<double> y_do = cips::oracle_do_rows(oracle, ds);

    fs::create_directories(out_dir);
    cips::save_dataset(masked, (out_dir / "data.csv.tmp").string());
    fs::rename(out_dir / "data.csv.tmp", out_dir / "data.csv");
    cips::save_schema(ds.schema, (out_dir / "schema.json.tmp").string());
    fs::rename(out_dir / "schema.json.tmp", out_dir / "schema.json");
    {
        std::ostringstream ss;
        ss << "row_id,y_do\n";
        char buf[64];
        for (std::size_t r = 0; r < y_do.size(); ++r) {
            std::snprintf(buf, sizeof buf, "%.17g", y_do[r]);
            ss << r << "," << buf << "\n";
        }
        write_file_atomic(out_dir / "oracle_do.csv", ss.str());
    }
    write_sidecar(out_dir, merged);
    std::cout << "wrote " << (out_dir / "data.csv").string() << " (" << masked.n_rows()
              << " rows)\n";
    return 0;
}

int cmd_impute(const json& merged, const fs::path& out_dir, const std::string& data_path,
               const std::string& schema_path, std::size_t jobs) {
    std::string method = merged.at("method").get<std::string>();
    if (method != "fcs" && method != "mean")
        throw ConfigError("impute: method must be \"fcs\" or \"mean\"");
    std::size_t m = merged.at("m").get<std::size_t>();
    std::size_t burn_in = merged.at("burn_in").get<std::size_t>();
    std::uint64_t seed = merged.at("seed").get<std::uint64_t>();
    if (m < 1) throw ConfigError("impute: m must be >= 1");

    cips::Dataset ds = cips::load_dataset(data_path, schema_path);
    cips::ImputedSet set;
    if (method == "fcs") {
        set = cips::multiple_impute(ds, m, burn_in, seed, jobs);
    } else {
        set.seed = seed;
        set.imputations.push_back(cips::single_mean_impute(ds));
        set.source_mask = ds.mask;
    }

    fs::create_directories(out_dir);
    fs::path imp_dir = out_dir / "imputations";
    fs::path tmp_dir = out_dir / "imputations.tmp";
    fs::remove_all(tmp_dir);
    fs::create_directories(tmp_dir);
    cips::save_imputed_set(set, tmp_dir.string());
    fs::remove_all(imp_dir);
    fs::rename(tmp_dir, imp_dir);
    write_sidecar(out_dir, merged);
    std::cout << "wrote " << imp_dir.string() << " (" << set.m() << " imputations)\n";
    return 0;
}

int cmd_train(const json& merged, const fs::path& out_dir, const std::string& train_path,
              const std::string& valid_path, const std::string& schema_path) {
    cips::VaeConfig vcfg = cips::vae_config_from_json(merged.at("vae").dump());
    cips::Dataset train_ds = cips::load_dataset(train_path, schema_path);
    cips::Dataset valid_ds = cips::load_dataset(valid_path, schema_path);
    cips::VaeModel model = cips::train(train_ds, valid_ds, vcfg);

    fs::create_directories(out_dir);
    cips::save_model(model, (out_dir / "model.json.tmp").string());
    fs::rename(out_dir / "model.json.tmp", out_dir / "model.json");
    write_sidecar(out_dir, merged);
    std::cout << "wrote " << (out_dir / "model.json").string() << "\n";
    return 0;
}

int cmd_predict(const json& merged, const fs::path& out_dir, const std::string& model_path,
                const std::string& imputed_dir, std::size_t jobs) {
    std::size_t latent_samples = merged.at("latent_samples").get<std::size_t>();
    std::uint64_t seed = merged.at("seed").get<std::uint64_t>();
    std::vector<double> treatment = merged.at("treatment").get<std::vector<double>>();
    if (latent_samples < 1) throw ConfigError("predict: latent_samples must be >= 1");

    cips::VaeModel model = cips::load_model(model_path);
    cips::ImputedSet set = cips::load_imputed_set(imputed_dir);
    cips::DoBatchResult result;
    if (treatment.empty()) {
        result = cips::predict_factual_batch(model, set, latent_samples, seed, jobs);
    } else {
        cips::DoQuery query{treatment};
        result = cips::predict_do_batch(model, set, query, latent_samples, seed, jobs);
    }

    fs::create_directories(out_dir);
    cips::save_predictions(result, (out_dir / "predictions.csv.tmp").string());
    fs::rename(out_dir / "predictions.csv.tmp", out_dir / "predictions.csv");
    write_sidecar(out_dir, merged);
    std::cout << "wrote " << (out_dir / "predictions.csv").string() << " ("
              << result.mean.size() << " rows)\n";
    return 0;
}

int cmd_evaluate(const json& merged, const fs::path& out_dir, std::size_t jobs) {
    cips::RunConfig run;
    run.scm = cips::scm_config_from_json(merged.at("scm").dump());
    run.vae = cips::vae_config_from_json(merged.at("vae").dump());
    run.seeds = merged.at("seeds").get<std::vector<std::uint64_t>>();
    run.scenarios.clear();
    for (const auto& s : merged.at("scenarios"))
        run.scenarios.push_back(cips::scenario_from_string(s.get<std::string>()));
    run.models.clear();
    for (const auto& m : merged.at("models"))
        run.models.push_back(cips::model_from_string(m.get<std::string>()));
    run.m_imputations = merged.at("m_imputations").get<std::size_t>();
    run.burn_in = merged.at("burn_in").get<std::size_t>();
    run.latent_samples = merged.at("latent_samples").get<std::size_t>();
    run.knn_k = merged.at("knn_k").get<std::size_t>();
    run.lasso_lambda = merged.at("lasso_lambda").get<double>();
    run.jobs = jobs;
    if (run.seeds.empty()) throw ConfigError("evaluate: seeds must be non-empty");
    if (run.scenarios.empty()) throw ConfigError("evaluate: scenarios must be non-empty");
    if (run.models.empty()) throw ConfigError("evaluate: models must be non-empty");

    cips::ScenarioReport report = cips::run_scenarios(run);

    fs::create_directories(out_dir);
    write_file_atomic(out_dir / "report.csv", cips::report_to_csv(report));
    write_file_atomic(out_dir / "report.json", cips::report_to_json(report));
    write_file_atomic(out_dir / "report.txt", cips::report_to_table(report));
    write_sidecar(out_dir, merged);
    std::cout << cips::report_to_table(report);
    return 0;
}

json simulate_defaults() {
    json j;
    j["scm"] = json::parse(cips::scm_config_to_json(cips::ScmConfig{}));
    j["scenario"] = "none";
    j["miss_seed"] = 0;
    return j;
}

json impute_defaults() {
    return json{{"method", "fcs"}, {"m", 5}, {"burn_in", 10}, {"seed", 0}};
}

json train_defaults() {
    json j;
    j["vae"] = json::parse(cips::vae_config_to_json(cips::VaeConfig{}));
    return j;
}

json predict_defaults() {
    return json{{"latent_samples", 64}, {"seed", 0}, {"treatment", json::array()}};
}

json evaluate_defaults() {
    json j;
    j["scm"] = json::parse(cips::scm_config_to_json(cips::ScmConfig{}));
    j["vae"] = json::parse(cips::vae_config_to_json(cips::VaeConfig{}));
    j["seeds"] = {1, 2, 3, 4, 5};
    j["scenarios"] = {"none", "moderate", "substantial"};
    j["models"] = {"cips_fcs", "cips_smi", "lasso", "knn"};
    j["m_imputations"] = 5;
    j["burn_in"] = 10;
    j["latent_samples"] = 64;
    j["knn_k"] = 10;
    j["lasso_lambda"] = 0.1;
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"causal interventional prediction toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand

    std::string config_path, out = "out";
    std::vector<std::string> sets;
    std::size_t jobs = 1;
    app.add_option("--config", config_path, "JSON config file")->capture_default_str();
    app.add_option("--set", sets, "override a config key, e.g. --set scm.n_rows=1000");
    app.add_option("--out", out, "output directory")->capture_default_str();
    app.add_option("--jobs", jobs, "worker threads (results are jobs-invariant)")
        ->capture_default_str();

    auto* sim = app.add_subcommand("simulate", "generate a synthetic causal dataset");
    auto* imp = app.add_subcommand("impute", "fill missing confounder cells");
    std::string data_path, schema_path, train_path, valid_path, model_path, imputed_dir;
    imp->add_option("--data", data_path, "input CSV")->required();
    imp->add_option("--schema", schema_path, "schema JSON")->required();
    auto* trn = app.add_subcommand("train", "fit the latent-variable outcome model");
    trn->add_option("--train", train_path, "training CSV")->required();
    trn->add_option("--valid", valid_path, "validation CSV")->required();
    trn->add_option("--schema", schema_path, "schema JSON")->required();
    auto* prd = app.add_subcommand("predict", "interventional outcome predictions");
    prd->add_option("--model", model_path, "trained model JSON")->required();
    prd->add_option("--imputed", imputed_dir, "imputed-set directory")->required();
    auto* evl = app.add_subcommand("evaluate", "benchmark against oracle effects");
    auto* ver = app.add_subcommand("version", "print the tool version");

    CLI11_PARSE(app, argc, argv);

    if (ver->parsed()) {
        std::cout << "cips " << kVersion << "\n";
        return 0;
    }
    if (jobs < 1) {
        std::cerr << "error: --jobs must be >= 1\n";
        return 2;
    }

    json defaults;
    if (sim->parsed()) defaults = simulate_defaults();
    else if (imp->parsed()) defaults = impute_defaults();
    else if (trn->parsed()) defaults = train_defaults();
    else if (prd->parsed()) defaults = predict_defaults();
    else defaults = evaluate_defaults();

    json merged;
    try {
        merged = load_merged_config(defaults, config_path, sets);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    fs::path out_dir = resolve_out(out);
    try {
        if (sim->parsed()) return cmd_simulate(merged, out_dir);
        if (imp->parsed()) return cmd_impute(merged, out_dir, data_path, schema_path, jobs);
        if (trn->parsed()) return cmd_train(merged, out_dir, train_path, valid_path, schema_path);
        if (prd->parsed()) return cmd_predict(merged, out_dir, model_path, imputed_dir, jobs);
        return cmd_evaluate(merged, out_dir, jobs);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

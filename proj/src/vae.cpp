#include "cips/vae.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cips {

using nlohmann::json;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double softplus_floor(double x, double floor_) {
    double sp = x > 30.0 ? x : (x < -30.0 ? std::exp(x) : std::log1p(std::exp(x)));
    return sp + floor_;
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }

struct CatFeature {
    std::size_t col;
    std::size_t n_cats;
};

/// Schema-derived layout of one role block as the decoders see it.
struct BlockLayout {
    std::vector<std::size_t> cont_cols;
    std::vector<std::size_t> bin_cols;
    std::vector<CatFeature> cat_feats;  // nominal and ordinal
};

BlockLayout block_layout(const std::vector<VariableSpec>& schema, Role role) {
    BlockLayout lay;
    for (std::size_t c = 0; c < schema.size(); ++c) {
        if (schema[c].role != role) continue;
        switch (schema[c].kind) {
            case Kind::Continuous: lay.cont_cols.push_back(c); break;
            case Kind::Binary: lay.bin_cols.push_back(c); break;
            case Kind::Ordinal:
            case Kind::Nominal:
                lay.cat_feats.push_back({c, schema[c].n_categories()});
                break;
        }
    }
    return lay;
}

}  // namespace

void VaeConfig::validate() const {
    if (latent_dim < 1) throw std::invalid_argument("VaeConfig: latent_dim must be >= 1");
    if (hidden_width < 1 || hidden_depth < 1)
        throw std::invalid_argument("VaeConfig: hidden sizes must be >= 1");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("VaeConfig: learning rate invalid");
    if (batch_size < 1) throw std::invalid_argument("VaeConfig: batch_size must be >= 1");
    if (!(variance_floor > 0.0))
        throw std::invalid_argument("VaeConfig: variance floor must be positive");
}

std::string vae_config_to_json(const VaeConfig& cfg) {
    json j;
    j["latent_dim"] = cfg.latent_dim;
    j["hidden_width"] = cfg.hidden_width;
    j["hidden_depth"] = cfg.hidden_depth;
    j["learning_rate"] = cfg.learning_rate;
    j["batch_size"] = cfg.batch_size;
    j["epochs"] = cfg.epochs;
    j["patience"] = cfg.patience;
    j["seed"] = cfg.seed;
    j["variance_floor"] = cfg.variance_floor;
    return j.dump(2);
}

VaeConfig vae_config_from_json(const std::string& text) {
    json j = json::parse(text);
    VaeConfig cfg;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("latent_dim", cfg.latent_dim);
    get("hidden_width", cfg.hidden_width);
    get("hidden_depth", cfg.hidden_depth);
    get("learning_rate", cfg.learning_rate);
    get("batch_size", cfg.batch_size);
    get("epochs", cfg.epochs);
    get("patience", cfg.patience);
    get("seed", cfg.seed);
    get("variance_floor", cfg.variance_floor);
    cfg.validate();
    return cfg;
}

std::size_t FeatureCodec::block_width(Role role) const {
    std::size_t w = 0;
    for (const auto& v : schema) {
        if (v.role != role) continue;
        w += v.kind == Kind::Nominal ? v.n_categories() : 1;
    }
    return w;
}

Matrix FeatureCodec::encode_block(const Dataset& ds, Role role) const {
    Matrix out(ds.n_rows(), block_width(role));
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        std::size_t o = 0;
        for (std::size_t c = 0; c < schema.size(); ++c) {
            if (schema[c].role != role) continue;
            double v = ds.values(r, c);
            if (schema[c].kind == Kind::Nominal) {
                auto idx = static_cast<std::size_t>(std::llround(v));
                for (std::size_t k = 0; k < schema[c].n_categories(); ++k)
                    out(r, o + k) = idx == k ? 1.0 : 0.0;
                o += schema[c].n_categories();
            } else {
                out(r, o++) = v;
            }
        }
    }
    return out;
}

std::vector<double> FeatureCodec::encode_row(const Dataset& ds, std::size_t row, Role role) const {
    std::vector<double> out;
    for (std::size_t c = 0; c < schema.size(); ++c) {
        if (schema[c].role != role) continue;
        double v = ds.values(row, c);
        if (schema[c].kind == Kind::Nominal) {
            auto idx = static_cast<std::size_t>(std::llround(v));
            for (std::size_t k = 0; k < schema[c].n_categories(); ++k)
                out.push_back(idx == k ? 1.0 : 0.0);
        } else {
            out.push_back(v);
        }
    }
    return out;
}

std::uint64_t fingerprint_schema(const std::vector<VariableSpec>& schema) {
    std::string text = schema_to_json(schema);
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

namespace {

// ---------------------------------------------------------------------------
// parameter initialization

void init_linear(std::map<std::string, Matrix>& params, const std::string& name,
                 std::size_t fan_in, std::size_t fan_out, RngStream& rng) {
    Matrix w(fan_in, fan_out);
    double s = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    for (double& v : w.data) v = rng.normal(0.0, s);
    params[name + ".W"] = std::move(w);
    params[name + ".b"] = Matrix(1, fan_out);
}

void init_mlp(std::map<std::string, Matrix>& params, const std::string& prefix, std::size_t d_in,
              const VaeConfig& cfg, RngStream& rng) {
    std::size_t in = d_in;
    for (std::size_t l = 0; l < cfg.hidden_depth; ++l) {
        init_linear(params, prefix + "." + std::to_string(l), in, cfg.hidden_width, rng);
        in = cfg.hidden_width;
    }
}

std::map<std::string, Matrix> init_params(const std::vector<VariableSpec>& schema,
                                          const VaeConfig& cfg) {
    FeatureCodec codec{schema};
    std::size_t wx = codec.block_width(Role::Confounder);
    std::size_t wt = codec.block_width(Role::Treatment);
    std::size_t wm = codec.block_width(Role::Adjustment);
    std::size_t h = cfg.hidden_width, dz = cfg.latent_dim;

    std::map<std::string, Matrix> params;
    RngStream rng(cfg.seed, /*stream=*/0xF17);

    init_mlp(params, "g1", wt + wx + 1, cfg, rng);
    init_linear(params, "g1.mu", h, dz, rng);
    init_linear(params, "g1.var", h, dz, rng);

    init_mlp(params, "g2", wx + wm + wt, cfg, rng);
    init_linear(params, "g2.mu", h, 1, rng);
    init_linear(params, "g2.var", h, 1, rng);

    init_mlp(params, "dec", dz, cfg, rng);
    for (const char* role_tag : {"x", "t"}) {
        Role role = role_tag[0] == 'x' ? Role::Confounder : Role::Treatment;
        BlockLayout lay = block_layout(schema, role);
        std::string p = std::string("dec.") + role_tag;
        if (!lay.cont_cols.empty()) {
            init_linear(params, p + "_mu", h, lay.cont_cols.size(), rng);
            init_linear(params, p + "_var", h, lay.cont_cols.size(), rng);
        }
        if (!lay.bin_cols.empty()) init_linear(params, p + "_bin", h, lay.bin_cols.size(), rng);
        for (std::size_t k = 0; k < lay.cat_feats.size(); ++k)
            init_linear(params, p + "_cat" + std::to_string(k), h, lay.cat_feats[k].n_cats, rng);
    }

    init_mlp(params, "f", wm + wt + dz, cfg, rng);
    init_linear(params, "f.mu", h, 1, rng);
    init_linear(params, "f.var", h, 1, rng);
    return params;
}

// ---------------------------------------------------------------------------
// plain forward evaluation (prediction path; the Graph path is for training)

Matrix linear_forward(const VaeModel& model, const std::string& name, const Matrix& in) {
    return add_row(matmul(in, model.params.at(name + ".W")), model.params.at(name + ".b"));
}

Matrix mlp_forward(const VaeModel& model, const std::string& prefix, const Matrix& in) {
    Matrix h = in;
    for (std::size_t l = 0; l < model.cfg.hidden_depth; ++l) {
        h = linear_forward(model, prefix + "." + std::to_string(l), h);
        for (double& v : h.data) v = elu(v);
    }
    return h;
}

BatchGaussian gaussian_head(const VaeModel& model, const std::string& prefix, const Matrix& h) {
    BatchGaussian g;
    g.mean = linear_forward(model, prefix + ".mu", h);
    g.variance = linear_forward(model, prefix + ".var", h);
    for (double& v : g.variance.data) v = softplus_floor(v, model.cfg.variance_floor);
    return g;
}

Matrix row_to_matrix(const std::vector<double>& v) {
    return Matrix(1, v.size(), v);
}

void require_trained(const VaeModel& model) {
    if (!model.trained()) throw std::logic_error("VaeModel: model has no parameters");
}

}  // namespace

BatchGaussian encode_batch(const VaeModel& model, const Matrix& x_enc, const Matrix& t_enc,
                           const Matrix& y_scaled) {
    require_trained(model);
    Matrix in = hconcat({t_enc, x_enc, y_scaled});
    return gaussian_head(model, "g1", mlp_forward(model, "g1", in));
}

DiagGaussian encode(const VaeModel& model, const std::vector<double>& x_enc,
                    const std::vector<double>& t_enc, double y_scaled) {
    BatchGaussian g = encode_batch(model, row_to_matrix(x_enc), row_to_matrix(t_enc),
                                   Matrix(1, 1, {y_scaled}));
    return {g.mean.data, g.variance.data};
}

BatchGaussian auxiliary_y_batch(const VaeModel& model, const Matrix& x_enc, const Matrix& m_enc,
                                const Matrix& t_enc) {
    require_trained(model);
    Matrix in = hconcat({x_enc, m_enc, t_enc});
    return gaussian_head(model, "g2", mlp_forward(model, "g2", in));
}

DiagGaussian auxiliary_y(const VaeModel& model, const std::vector<double>& x_enc,
                         const std::vector<double>& m_enc, const std::vector<double>& t_enc) {
    BatchGaussian g = auxiliary_y_batch(model, row_to_matrix(x_enc), row_to_matrix(m_enc),
                                        row_to_matrix(t_enc));
    return {g.mean.data, g.variance.data};
}

DecodeResult decode(const VaeModel& model, const std::vector<double>& z) {
    require_trained(model);
    if (z.size() != model.cfg.latent_dim)
        throw std::invalid_argument("decode: latent dimension mismatch");
    Matrix h = mlp_forward(model, "dec", row_to_matrix(z));

    DecodeResult res;
    for (const char* role_tag : {"x", "t"}) {
        Role role = role_tag[0] == 'x' ? Role::Confounder : Role::Treatment;
        BlockLayout lay = block_layout(model.schema, role);
        std::string p = std::string("dec.") + role_tag;
        std::map<std::size_t, FeatureDist> by_col;
        if (!lay.cont_cols.empty()) {
            Matrix mu = linear_forward(model, p + "_mu", h);
            Matrix rv = linear_forward(model, p + "_var", h);
            for (std::size_t j = 0; j < lay.cont_cols.size(); ++j) {
                FeatureDist d;
                d.kind = Kind::Continuous;
                d.mean = mu(0, j);
                d.variance = softplus_floor(rv(0, j), model.cfg.variance_floor);
                by_col[lay.cont_cols[j]] = d;
            }
        }
        if (!lay.bin_cols.empty()) {
            Matrix logits = linear_forward(model, p + "_bin", h);
            for (std::size_t j = 0; j < lay.bin_cols.size(); ++j) {
                FeatureDist d;
                d.kind = Kind::Binary;
                d.p = stable_sigmoid(logits(0, j));
                by_col[lay.bin_cols[j]] = d;
            }
        }
        for (std::size_t k = 0; k < lay.cat_feats.size(); ++k) {
            Matrix logits = linear_forward(model, p + "_cat" + std::to_string(k), h);
            FeatureDist d;
            d.kind = model.schema[lay.cat_feats[k].col].kind;
            double mx = logits(0, 0);
            for (std::size_t j = 1; j < logits.cols; ++j) mx = std::max(mx, logits(0, j));
            double zsum = 0.0;
            d.probs.resize(logits.cols);
            for (std::size_t j = 0; j < logits.cols; ++j) {
                d.probs[j] = std::exp(logits(0, j) - mx);
                zsum += d.probs[j];
            }
            for (double& pr : d.probs) pr /= zsum;
            by_col[lay.cat_feats[k].col] = d;
        }
        auto& out = role == Role::Confounder ? res.x_features : res.t_features;
        for (auto& [col, dist] : by_col) out.push_back(dist);
    }
    return res;
}

BatchGaussian outcome_head_batch(const VaeModel& model, const Matrix& m_enc, const Matrix& t_enc,
                                 const Matrix& z) {
    require_trained(model);
    Matrix in = hconcat({m_enc, t_enc, z});
    return gaussian_head(model, "f", mlp_forward(model, "f", in));
}

DiagGaussian outcome_head(const VaeModel& model, const std::vector<double>& m_enc,
                          const std::vector<double>& t_enc, const std::vector<double>& z) {
    if (z.size() != model.cfg.latent_dim)
        throw std::invalid_argument("outcome_head: latent dimension mismatch");
    BatchGaussian g = outcome_head_batch(model, row_to_matrix(m_enc), row_to_matrix(t_enc),
                                         row_to_matrix(z));
    return {g.mean.data, g.variance.data};
}

// ---------------------------------------------------------------------------
// ELBO graph

namespace {

struct ElboGraph {
    Graph g;
    NodeId in_x, in_t, in_m, in_y, in_eps;
    NodeId tgt_x_cont = 0, tgt_x_bin = 0, tgt_t_cont = 0, tgt_t_bin = 0;
    std::vector<NodeId> tgt_x_cat, tgt_t_cat;
    NodeId recon_x, recon_t, recon_y, kl, aux, total, loss;
    std::map<std::string, NodeId> param_nodes;
    std::size_t batch = 0;
};

NodeId graph_linear(ElboGraph& eg, const VaeModel& model, const std::string& name, NodeId in) {
    const Matrix& w0 = model.params.at(name + ".W");
    const Matrix& b0 = model.params.at(name + ".b");
    NodeId w = eg.g.param(name + ".W", w0);
    NodeId b = eg.g.param(name + ".b", b0);
    eg.param_nodes[name + ".W"] = w;
    eg.param_nodes[name + ".b"] = b;
    return eg.g.add_row(eg.g.matmul(in, w), b);
}

NodeId graph_mlp(ElboGraph& eg, const VaeModel& model, const std::string& prefix, NodeId in) {
    NodeId h = in;
    for (std::size_t l = 0; l < model.cfg.hidden_depth; ++l)
        h = eg.g.elu(graph_linear(eg, model, prefix + "." + std::to_string(l), h));
    return h;
}

NodeId graph_variance(ElboGraph& eg, const VaeModel& model, NodeId raw) {
    return eg.g.affine(eg.g.softplus(raw), 1.0, model.cfg.variance_floor);
}

/// -0.5 * sum((Y - mu)^2 / var + log var) - 0.5 * count * log(2*pi)
NodeId graph_gaussian_ll(ElboGraph& eg, NodeId target, NodeId mu, NodeId var,
                         std::size_t count) {
    Graph& g = eg.g;
    NodeId sq = g.square(g.sub(target, mu));
    NodeId core = g.sum(g.add(g.div(sq, var), g.log(var)));
    return g.affine(core, -0.5, -0.5 * kLog2Pi * static_cast<double>(count));
}

/// sum(Y .* S - softplus(S)) for 0/1 targets and logits S.
NodeId graph_bernoulli_ll(ElboGraph& eg, NodeId target, NodeId logits) {
    Graph& g = eg.g;
    return g.sum(g.sub(g.mul(target, logits), g.softplus(logits)));
}

/// sum(onehot .* S) - sum(logsumexp_row(S)).
NodeId graph_categorical_ll(ElboGraph& eg, NodeId onehot, NodeId logits) {
    Graph& g = eg.g;
    return g.sub(g.sum(g.mul(onehot, logits)), g.sum(g.logsumexp_row(logits)));
}

ElboGraph build_elbo_graph(const VaeModel& model, std::size_t batch) {
    FeatureCodec codec = model.codec();
    std::size_t wx = codec.block_width(Role::Confounder);
    std::size_t wt = codec.block_width(Role::Treatment);
    std::size_t wm = codec.block_width(Role::Adjustment);
    std::size_t dz = model.cfg.latent_dim;
    BlockLayout lay_x = block_layout(model.schema, Role::Confounder);
    BlockLayout lay_t = block_layout(model.schema, Role::Treatment);

    ElboGraph eg;
    eg.batch = batch;
    Graph& g = eg.g;
    eg.in_x = g.input("x", batch, wx);
    eg.in_t = g.input("t", batch, wt);
    eg.in_m = g.input("m", batch, wm);
    eg.in_y = g.input("y", batch, 1);
    eg.in_eps = g.input("eps", batch, dz);

    // encoder q(z | x, t, y)
    NodeId enc_h = graph_mlp(eg, model, "g1", g.concat({eg.in_t, eg.in_x, eg.in_y}));
    NodeId z_mu = graph_linear(eg, model, "g1.mu", enc_h);
    NodeId z_var = graph_variance(eg, model, graph_linear(eg, model, "g1.var", enc_h));

    // closed-form KL(q || N(0, I))
    NodeId kl_core = g.sub(g.affine(g.add(g.square(z_mu), z_var), 1.0, -1.0), g.log(z_var));
    eg.kl = g.affine(g.sum(kl_core), 0.5, 0.0);

    // reparameterized latent sample
    NodeId z = g.add(z_mu, g.mul(g.sqrt(z_var), eg.in_eps));

    // decoders p(x|z), p(t|z)
    NodeId dec_h = graph_mlp(eg, model, "dec", z);
    auto block_ll = [&](const char* tag, const BlockLayout& lay, NodeId& tgt_cont,
                        NodeId& tgt_bin, std::vector<NodeId>& tgt_cat) -> NodeId {
        std::string p = std::string("dec.") + tag;
        std::vector<NodeId> terms;
        if (!lay.cont_cols.empty()) {
            tgt_cont = g.input(p + "_cont_target", batch, lay.cont_cols.size());
            NodeId mu = graph_linear(eg, model, p + "_mu", dec_h);
            NodeId var = graph_variance(eg, model, graph_linear(eg, model, p + "_var", dec_h));
            terms.push_back(
                graph_gaussian_ll(eg, tgt_cont, mu, var, batch * lay.cont_cols.size()));
        }
        if (!lay.bin_cols.empty()) {
            tgt_bin = g.input(p + "_bin_target", batch, lay.bin_cols.size());
            terms.push_back(graph_bernoulli_ll(eg, tgt_bin, graph_linear(eg, model, p + "_bin", dec_h)));
        }
        for (std::size_t k = 0; k < lay.cat_feats.size(); ++k) {
            NodeId onehot = g.input(p + "_cat" + std::to_string(k) + "_target", batch,
                                    lay.cat_feats[k].n_cats);
            tgt_cat.push_back(onehot);
            terms.push_back(graph_categorical_ll(
                eg, onehot, graph_linear(eg, model, p + "_cat" + std::to_string(k), dec_h)));
        }
        if (terms.empty()) return g.sum(g.constant(Matrix(1, 1, 0.0)));
        NodeId acc = terms[0];
        for (std::size_t i = 1; i < terms.size(); ++i) acc = g.add(acc, terms[i]);
        return acc;
    };
    eg.recon_x = block_ll("x", lay_x, eg.tgt_x_cont, eg.tgt_x_bin, eg.tgt_x_cat);
    eg.recon_t = block_ll("t", lay_t, eg.tgt_t_cont, eg.tgt_t_bin, eg.tgt_t_cat);

    // outcome head p(y | m, t, z)
    NodeId f_h = graph_mlp(eg, model, "f", g.concat({eg.in_m, eg.in_t, z}));
    NodeId y_mu = graph_linear(eg, model, "f.mu", f_h);
    NodeId y_var = graph_variance(eg, model, graph_linear(eg, model, "f.var", f_h));
    eg.recon_y = graph_gaussian_ll(eg, eg.in_y, y_mu, y_var, batch);

    // auxiliary q(y | x, m, t) at the observed outcomes
    NodeId aux_h = graph_mlp(eg, model, "g2", g.concat({eg.in_x, eg.in_m, eg.in_t}));
    NodeId a_mu = graph_linear(eg, model, "g2.mu", aux_h);
    NodeId a_var = graph_variance(eg, model, graph_linear(eg, model, "g2.var", aux_h));
    eg.aux = graph_gaussian_ll(eg, eg.in_y, a_mu, a_var, batch);

    eg.total = g.add(g.sub(g.add(g.add(eg.recon_x, eg.recon_t), eg.recon_y), eg.kl), eg.aux);
    eg.loss = g.affine(eg.total, -1.0, 0.0);
    g.set_loss(eg.loss);
    return eg;
}

/// Extracts decoder target matrices from a complete scaled batch.
struct BatchTensors {
    Matrix x_enc, t_enc, m_enc, y;
    Matrix x_cont, x_bin, t_cont, t_bin;
    std::vector<Matrix> x_cat, t_cat;
};

BatchTensors batch_tensors(const VaeModel& model, const Dataset& batch_scaled) {
    FeatureCodec codec = model.codec();
    BatchTensors bt;
    bt.x_enc = codec.encode_block(batch_scaled, Role::Confounder);
    bt.t_enc = codec.encode_block(batch_scaled, Role::Treatment);
    bt.m_enc = codec.encode_block(batch_scaled, Role::Adjustment);
    std::size_t y_col = batch_scaled.outcome_column();
    bt.y = Matrix(batch_scaled.n_rows(), 1);
    for (std::size_t r = 0; r < batch_scaled.n_rows(); ++r)
        bt.y(r, 0) = batch_scaled.values(r, y_col);

    for (const char* tag : {"x", "t"}) {
        Role role = tag[0] == 'x' ? Role::Confounder : Role::Treatment;
        BlockLayout lay = block_layout(model.schema, role);
        Matrix cont(batch_scaled.n_rows(), lay.cont_cols.size());
        Matrix bin(batch_scaled.n_rows(), lay.bin_cols.size());
        std::vector<Matrix> cats;
        for (const auto& cf : lay.cat_feats) cats.emplace_back(batch_scaled.n_rows(), cf.n_cats);
        for (std::size_t r = 0; r < batch_scaled.n_rows(); ++r) {
            for (std::size_t j = 0; j < lay.cont_cols.size(); ++j)
                cont(r, j) = batch_scaled.values(r, lay.cont_cols[j]);
            for (std::size_t j = 0; j < lay.bin_cols.size(); ++j)
                bin(r, j) = batch_scaled.values(r, lay.bin_cols[j]);
            for (std::size_t k = 0; k < lay.cat_feats.size(); ++k) {
                auto idx = static_cast<std::size_t>(
                    std::llround(batch_scaled.values(r, lay.cat_feats[k].col)));
                cats[k](r, idx) = 1.0;
            }
        }
        if (role == Role::Confounder) {
            bt.x_cont = std::move(cont);
            bt.x_bin = std::move(bin);
            bt.x_cat = std::move(cats);
        } else {
            bt.t_cont = std::move(cont);
            bt.t_bin = std::move(bin);
            bt.t_cat = std::move(cats);
        }
    }
    return bt;
}

void bind_batch(ElboGraph& eg, const VaeModel& model, const BatchTensors& bt, const Matrix& eps) {
    Graph& g = eg.g;
    g.set_value(eg.in_x, bt.x_enc);
    g.set_value(eg.in_t, bt.t_enc);
    g.set_value(eg.in_m, bt.m_enc);
    g.set_value(eg.in_y, bt.y);
    g.set_value(eg.in_eps, eps);
    if (bt.x_cont.cols) g.set_value(eg.tgt_x_cont, bt.x_cont);
    if (bt.x_bin.cols) g.set_value(eg.tgt_x_bin, bt.x_bin);
    if (bt.t_cont.cols) g.set_value(eg.tgt_t_cont, bt.t_cont);
    if (bt.t_bin.cols) g.set_value(eg.tgt_t_bin, bt.t_bin);
    for (std::size_t k = 0; k < bt.x_cat.size(); ++k) g.set_value(eg.tgt_x_cat[k], bt.x_cat[k]);
    for (std::size_t k = 0; k < bt.t_cat.size(); ++k) g.set_value(eg.tgt_t_cat[k], bt.t_cat[k]);
    for (auto& [name, id] : eg.param_nodes) g.set_value(id, model.params.at(name));
}

ElboReport read_report(const ElboGraph& eg) {
    ElboReport rep;
    rep.total = eg.g.value(eg.total)(0, 0);
    rep.recon_x = eg.g.value(eg.recon_x)(0, 0);
    rep.recon_t = eg.g.value(eg.recon_t)(0, 0);
    rep.recon_y = eg.g.value(eg.recon_y)(0, 0);
    rep.kl = eg.g.value(eg.kl)(0, 0);
    rep.aux = eg.g.value(eg.aux)(0, 0);
    return rep;
}

}  // namespace

ElboResult elbo_batch(const VaeModel& model, const Dataset& batch_scaled, const Matrix& eps) {
    require_trained(model);
    if (batch_scaled.n_rows() == 0) throw std::invalid_argument("elbo_batch: empty batch");
    if (!batch_scaled.fully_observed())
        throw std::invalid_argument("elbo_batch: batch has missing cells");
    if (eps.rows != batch_scaled.n_rows() || eps.cols != model.cfg.latent_dim)
        throw std::invalid_argument("elbo_batch: eps shape mismatch");

    ElboGraph eg = build_elbo_graph(model, batch_scaled.n_rows());
    BatchTensors bt = batch_tensors(model, batch_scaled);
    bind_batch(eg, model, bt, eps);
    eg.g.forward_backward();

    ElboResult res;
    res.report = read_report(eg);
    // graph loss is -total; flip to gradients of the ELBO objective
    for (auto& [name, grad] : eg.g.param_gradients()) res.gradients[name] = scale(grad, -1.0);
    return res;
}

ElboResult elbo_batch(const VaeModel& model, const Dataset& batch_scaled, RngStream& rng) {
    Matrix eps(batch_scaled.n_rows(), model.cfg.latent_dim);
    for (double& v : eps.data) v = rng.normal();
    return elbo_batch(model, batch_scaled, eps);
}

// ---------------------------------------------------------------------------
// training

namespace {

struct AdamState {
    std::map<std::string, Matrix> m, v;
    std::size_t step = 0;
};

void adam_update(std::map<std::string, Matrix>& params, const std::map<std::string, Matrix>& grads,
                 AdamState& state, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    state.step++;
    double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (auto& [name, p] : params) {
        const Matrix& g = grads.at(name);
        Matrix& m = state.m[name];
        Matrix& v = state.v[name];
        if (m.size() == 0) m = Matrix(p.rows, p.cols);
        if (v.size() == 0) v = Matrix(p.rows, p.cols);
        for (std::size_t i = 0; i < p.size(); ++i) {
            // ascent on the ELBO: g is d(total)/d(param)
            m.data[i] = b1 * m.data[i] + (1.0 - b1) * g.data[i];
            v.data[i] = b2 * v.data[i] + (1.0 - b2) * g.data[i] * g.data[i];
            p.data[i] += lr * (m.data[i] / c1) / (std::sqrt(v.data[i] / c2) + eps);
        }
    }
}

VaeModel train_once(const Dataset& ds_complete, const Dataset& valid, const VaeConfig& cfg,
                    double lr) {
    auto [train_scaled, scaling] = standardize(ds_complete);
    Dataset valid_scaled = apply_scaling(valid, scaling);

    VaeModel model;
    model.cfg = cfg;
    model.schema = ds_complete.schema;
    model.scaling = scaling;
    model.schema_fingerprint = fingerprint_schema(ds_complete.schema);
    model.params = init_params(ds_complete.schema, cfg);

    std::size_t n = train_scaled.n_rows();
    std::size_t bs = std::min(cfg.batch_size, n);

    RngStream root(cfg.seed, /*stream=*/0x7EA1);
    AdamState adam;
    std::map<std::size_t, ElboGraph> graph_cache;
    auto graph_for = [&](std::size_t batch) -> ElboGraph& {
        auto it = graph_cache.find(batch);
        if (it == graph_cache.end())
            it = graph_cache.emplace(batch, build_elbo_graph(model, batch)).first;
        return it->second;
    };

    // frozen validation noise: comparisons across epochs share the draw
    Matrix valid_eps(valid_scaled.n_rows(), cfg.latent_dim);
    {
        RngStream ve = root.substream(0xA7);
        for (double& v : valid_eps.data) v = ve.normal();
    }
    BatchTensors valid_bt = batch_tensors(model, valid_scaled);

    auto valid_elbo = [&]() {
        ElboGraph& eg = graph_for(valid_scaled.n_rows());
        bind_batch(eg, model, valid_bt, valid_eps);
        eg.g.forward();
        return eg.g.value(eg.total)(0, 0);
    };

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    double best_valid = -1e300;
    std::map<std::string, Matrix> best_params = model.params;
    std::size_t since_best = 0;

    RngStream shuffle_root = root.substream(0x5F);
    RngStream eps_root = root.substream(0xE5);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        RngStream shuffle_rng = shuffle_root.substream(epoch);
        shuffle_rng.shuffle(order);
        RngStream eps_rng = eps_root.substream(epoch);
        for (std::size_t start = 0; start + bs <= n; start += bs) {
            std::vector<std::size_t> rows(order.begin() + start, order.begin() + start + bs);
            Dataset batch = train_scaled.select_rows(rows);
            Matrix eps(bs, cfg.latent_dim);
            for (double& v : eps.data) v = eps_rng.normal();
            ElboGraph& eg = graph_for(bs);
            BatchTensors bt = batch_tensors(model, batch);
            bind_batch(eg, model, bt, eps);
            eg.g.forward_backward();
            // graph gradients are of -total; ascend by negating
            std::map<std::string, Matrix> grads;
            for (auto& [name, grad] : eg.g.param_gradients()) grads[name] = scale(grad, -1.0);
            adam_update(model.params, grads, adam, lr);
        }
        double ve = valid_elbo();
        if (ve > best_valid) {
            best_valid = ve;
            best_params = model.params;
            since_best = 0;
        } else if (++since_best > cfg.patience) {
            break;
        }
    }
    model.params = std::move(best_params);
    return model;
}

}  // namespace

VaeModel train(const Dataset& ds_complete, const Dataset& valid, const VaeConfig& cfg) {
    cfg.validate();
    if (!ds_complete.fully_observed() || !valid.fully_observed())
        throw std::invalid_argument("train: datasets must be complete (impute first)");
    if (!(ds_complete.schema == valid.schema))
        throw std::invalid_argument("train: train/valid schema mismatch");

    double lr = cfg.learning_rate;
    for (int attempt = 0; attempt < 3; ++attempt) {
        try {
            return train_once(ds_complete, valid, cfg, lr);
        } catch (const std::runtime_error&) {
            lr *= 0.5;  // divergence retry with halved step
        }
    }
    throw std::runtime_error("train: diverged after two learning-rate reductions");
}

// ---------------------------------------------------------------------------
// serialization

namespace {
constexpr int kModelFormatVersion = 1;
}

void save_model(const VaeModel& model, const std::string& path) {
    require_trained(model);
    json j;
    j["format_version"] = kModelFormatVersion;
    j["schema_fingerprint"] = model.schema_fingerprint;
    j["schema"] = json::parse(schema_to_json(model.schema));
    j["config"] = json::parse(vae_config_to_json(model.cfg));
    json scaling = json::array();
    for (const auto& ms : model.scaling.mean_std) {
        if (ms)
            scaling.push_back({{"mean", ms->first}, {"std", ms->second}});
        else
            scaling.push_back(nullptr);
    }
    j["scaling"] = scaling;
    json params;
    for (const auto& [name, m] : model.params)
        params[name] = {{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
    j["params"] = params;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_model: cannot write " + path);
    out << j.dump() << "\n";
}

VaeModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_model: cannot open " + path);
    json j = json::parse(in);
    if (j.at("format_version").get<int>() != kModelFormatVersion)
        throw std::runtime_error("load_model: unsupported format_version");
    VaeModel model;
    model.schema = schema_from_json(j.at("schema").dump());
    model.schema_fingerprint = j.at("schema_fingerprint").get<std::uint64_t>();
    if (model.schema_fingerprint != fingerprint_schema(model.schema))
        throw std::runtime_error("load_model: schema fingerprint mismatch");
    model.cfg = vae_config_from_json(j.at("config").dump());
    for (const auto& entry : j.at("scaling")) {
        if (entry.is_null())
            model.scaling.mean_std.push_back(std::nullopt);
        else
            model.scaling.mean_std.push_back(std::make_pair(entry.at("mean").get<double>(),
                                                            entry.at("std").get<double>()));
    }
    for (auto& [name, pj] : j.at("params").items())
        model.params[name] = Matrix(pj.at("rows").get<std::size_t>(),
                                    pj.at("cols").get<std::size_t>(),
                                    pj.at("data").get<std::vector<double>>());
    return model;
}

}  // namespace cips

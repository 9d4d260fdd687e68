#include "cips/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace cips {

using nlohmann::json;

namespace {

double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

}  // namespace

double lasso_objective(const LassoModel& model, const Matrix& x, const std::vector<double>& y) {
    double rss = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
        double pred = model.intercept;
        for (std::size_t j = 0; j < x.cols; ++j) pred += x(i, j) * model.weights[j];
        double d = y[i] - pred;
        rss += d * d;
    }
    double l1 = 0.0;
    for (double w : model.weights) l1 += std::abs(w);
    return 0.5 * rss / x.rows + model.lambda * l1;
}

LassoModel fit_lasso(const Matrix& x, const std::vector<double>& y, double lambda,
                     std::size_t max_iters, double tol) {
    if (x.rows < 2) throw std::invalid_argument("fit_lasso: need at least 2 rows");
    if (x.rows != y.size()) throw std::invalid_argument("fit_lasso: X/y row mismatch");
    if (lambda < 0.0) throw std::invalid_argument("fit_lasso: lambda must be >= 0");
    std::size_t n = x.rows, p = x.cols;

    LassoModel model;
    model.lambda = lambda;
    model.weights.assign(p, 0.0);
    double y_mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
    model.intercept = y_mean;

    std::vector<double> col_sq(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t i = 0; i < n; ++i) col_sq[j] += x(i, j) * x(i, j);
        col_sq[j] /= n;
    }
    std::vector<double> residual(n);
    for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - model.intercept;

    double prev_obj = lasso_objective(model, x, y);
    model.converged = false;
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        double max_delta = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            if (col_sq[j] == 0.0) continue;
            double w_old = model.weights[j];
            double rho = 0.0;
            for (std::size_t i = 0; i < n; ++i) rho += x(i, j) * residual[i];
            rho = rho / n + col_sq[j] * w_old;
            double w_new = soft_threshold(rho, lambda) / col_sq[j];
            if (w_new != w_old) {
                double delta = w_new - w_old;
                for (std::size_t i = 0; i < n; ++i) residual[i] -= delta * x(i, j);
                model.weights[j] = w_new;
                max_delta = std::max(max_delta, std::abs(delta));
            }
        }
        // recenter the intercept on the residual mean
        double r_mean = std::accumulate(residual.begin(), residual.end(), 0.0) / n;
        model.intercept += r_mean;
        for (double& r : residual) r -= r_mean;
        max_delta = std::max(max_delta, std::abs(r_mean));

        double obj = lasso_objective(model, x, y);
        if (obj > prev_obj + 1e-9)
            throw std::logic_error("fit_lasso: objective increased across a sweep");
        prev_obj = obj;
        model.iterations = iter + 1;
        if (max_delta < tol) {
            model.converged = true;
            break;
        }
    }
    return model;
}

double lasso_predict(const LassoModel& model, const std::vector<double>& x) {
    if (x.size() != model.weights.size())
        throw std::invalid_argument("lasso_predict: feature dimension mismatch");
    double pred = model.intercept;
    for (std::size_t j = 0; j < x.size(); ++j) pred += model.weights[j] * x[j];
    return pred;
}

std::vector<double> lasso_predict_batch(const LassoModel& model, const Matrix& x) {
    std::vector<double> out(x.rows);
    for (std::size_t i = 0; i < x.rows; ++i) {
        double pred = model.intercept;
        for (std::size_t j = 0; j < x.cols; ++j) pred += model.weights[j] * x(i, j);
        out[i] = pred;
    }
    return out;
}

KnnModel fit_knn(const Matrix& x, const std::vector<double>& y, std::size_t k,
                 double minkowski_p) {
    if (k < 1 || k > x.rows) throw std::invalid_argument("fit_knn: k out of range");
    if (minkowski_p < 1.0) throw std::invalid_argument("fit_knn: Minkowski p must be >= 1");
    if (x.rows != y.size()) throw std::invalid_argument("fit_knn: X/y row mismatch");
    return {x, y, k, minkowski_p};
}

double knn_predict(const KnnModel& model, const std::vector<double>& x_query) {
    if (x_query.size() != model.train_x.cols)
        throw std::invalid_argument("knn_predict: feature dimension mismatch");
    std::size_t n = model.train_x.rows;
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        double d = 0.0;
        for (std::size_t j = 0; j < x_query.size(); ++j)
            d += std::pow(std::abs(model.train_x(i, j) - x_query[j]), model.minkowski_p);
        dist[i] = {d, i};
    }
    std::partial_sort(dist.begin(), dist.begin() + model.k, dist.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < model.k; ++i) sum += model.train_y[dist[i].second];
    return sum / model.k;
}

std::vector<double> knn_predict_batch(const KnnModel& model, const Matrix& x, std::size_t jobs) {
    std::vector<double> out(x.rows);
    auto work = [&](std::size_t i) {
        std::vector<double> q(x.cols);
        for (std::size_t j = 0; j < x.cols; ++j) q[j] = x(i, j);
        out[i] = knn_predict(model, q);
    };
    jobs = std::max<std::size_t>(1, std::min(jobs, x.rows));
    if (jobs == 1) {
        for (std::size_t i = 0; i < x.rows; ++i) work(i);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < jobs; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t i = t; i < x.rows; i += jobs) work(i);
            });
        for (auto& th : pool) th.join();
    }
    return out;
}

std::string lasso_to_json(const LassoModel& model) {
    json j;
    j["format_version"] = 1;
    j["model"] = "lasso";
    j["weights"] = model.weights;
    j["intercept"] = model.intercept;
    j["lambda"] = model.lambda;
    j["converged"] = model.converged;
    return j.dump(2);
}

LassoModel lasso_from_json(const std::string& text) {
    json j = json::parse(text);
    if (j.at("format_version").get<int>() != 1 || j.at("model") != "lasso")
        throw std::runtime_error("lasso_from_json: unsupported format");
    LassoModel model;
    model.weights = j.at("weights").get<std::vector<double>>();
    model.intercept = j.at("intercept").get<double>();
    model.lambda = j.at("lambda").get<double>();
    model.converged = j.at("converged").get<bool>();
    return model;
}

std::string knn_to_json(const KnnModel& model) {
    json j;
    j["format_version"] = 1;
    j["model"] = "knn";
    j["rows"] = model.train_x.rows;
    j["cols"] = model.train_x.cols;
    j["x"] = model.train_x.data;
    j["y"] = model.train_y;
    j["k"] = model.k;
    j["minkowski_p"] = model.minkowski_p;
    return j.dump();
}

KnnModel knn_from_json(const std::string& text) {
    json j = json::parse(text);
    if (j.at("format_version").get<int>() != 1 || j.at("model") != "knn")
        throw std::runtime_error("knn_from_json: unsupported format");
    KnnModel model;
    model.train_x = Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                           j.at("x").get<std::vector<double>>());
    model.train_y = j.at("y").get<std::vector<double>>();
    model.k = j.at("k").get<std::size_t>();
    model.minkowski_p = j.at("minkowski_p").get<double>();
    return model;
}

}  // namespace cips

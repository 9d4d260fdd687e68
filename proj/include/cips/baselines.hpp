#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cips/matrix.hpp"

namespace cips {

struct LassoModel {
    std::vector<double> weights;
    double intercept = 0.0;
    double lambda = 0.0;
    bool converged = true;
    std::size_t iterations = 0;
};

/// Coordinate descent with soft-thresholding on
///   0.5 * ||y - Xw - b||^2 / N + lambda * ||w||_1.
/// The objective is asserted non-increasing across sweeps.
LassoModel fit_lasso(const Matrix& x, const std::vector<double>& y, double lambda,
                     std::size_t max_iters = 1000, double tol = 1e-8);

double lasso_predict(const LassoModel& model, const std::vector<double>& x);
std::vector<double> lasso_predict_batch(const LassoModel& model, const Matrix& x);
double lasso_objective(const LassoModel& model, const Matrix& x, const std::vector<double>& y);

struct KnnModel {
    Matrix train_x;
    std::vector<double> train_y;
    std::size_t k = 5;
    double minkowski_p = 2.0;
};

KnnModel fit_knn(const Matrix& x, const std::vector<double>& y, std::size_t k,
                 double minkowski_p = 2.0);

/// Mean target of the k nearest rows; distance ties break toward the lower
/// training row index.
double knn_predict(const KnnModel& model, const std::vector<double>& x_query);
std::vector<double> knn_predict_batch(const KnnModel& model, const Matrix& x,
                                      std::size_t jobs = 1);

std::string lasso_to_json(const LassoModel& model);
LassoModel lasso_from_json(const std::string& text);
std::string knn_to_json(const KnnModel& model);
KnnModel knn_from_json(const std::string& text);

}  // namespace cips

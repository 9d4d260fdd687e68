#include "cips/gaussian.hpp"

#include <cmath>
#include <stdexcept>

namespace cips {

void DiagGaussian::validate() const {
    if (mean.size() != variance.size())
        throw std::invalid_argument("DiagGaussian: mean/variance length mismatch");
    for (double v : variance)
        if (!(v > 0.0)) throw std::domain_error("DiagGaussian: variance must be positive");
}

double kl_diag_gaussian(const DiagGaussian& q) {
    q.validate();
    double kl = 0.0;
    for (std::size_t j = 0; j < q.dim(); ++j) {
        double mu = q.mean[j], var = q.variance[j];
        kl += mu * mu + var - 1.0 - std::log(var);
    }
    return 0.5 * kl;
}

double gaussian_log_pdf(const std::vector<double>& x, const DiagGaussian& g) {
    g.validate();
    if (x.size() != g.dim())
        throw std::invalid_argument("gaussian_log_pdf: dimension mismatch");
    constexpr double kLog2Pi = 1.8378770664093453;
    double lp = 0.0;
    for (std::size_t j = 0; j < g.dim(); ++j) {
        double d = x[j] - g.mean[j];
        lp += -0.5 * (kLog2Pi + std::log(g.variance[j]) + d * d / g.variance[j]);
    }
    return lp;
}

std::vector<double> sample_reparameterized(const DiagGaussian& g,
                                           const std::vector<double>& eps) {
    g.validate();
    if (eps.size() != g.dim())
        throw std::invalid_argument("sample_reparameterized: eps dimension mismatch");
    std::vector<double> z(g.dim());
    for (std::size_t j = 0; j < g.dim(); ++j)
        z[j] = g.mean[j] + std::sqrt(g.variance[j]) * eps[j];
    return z;
}

}  // namespace cips

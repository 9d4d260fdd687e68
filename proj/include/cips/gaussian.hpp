#pragma once

#include <vector>

namespace cips {

/// Diagonal-covariance Gaussian over a real vector.
struct DiagGaussian {
    std::vector<double> mean;
    std::vector<double> variance;

    std::size_t dim() const { return mean.size(); }
    /// Throws std::domain_error if any variance <= 0, std::invalid_argument
    /// on length mismatch.
    void validate() const;
};

/// KL(q || N(0, I)) in closed form: 0.5 * sum(mu^2 + var - 1 - log var).
double kl_diag_gaussian(const DiagGaussian& q);

/// Log density of x under g.
double gaussian_log_pdf(const std::vector<double>& x, const DiagGaussian& g);

/// z = mu + sqrt(var) .* eps.
std::vector<double> sample_reparameterized(const DiagGaussian& g,
                                           const std::vector<double>& eps);

}  // namespace cips

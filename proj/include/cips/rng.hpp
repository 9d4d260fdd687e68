#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

namespace cips {

/// Deterministic counter-seeded generator (xoshiro256++ seeded via
/// splitmix64).  Every consumer derives its own sub-stream from
/// (seed, stream id) so that parallel schedules cannot change the draws.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

    /// Derives an independent child stream. Pure function of the parent's
    /// identity, not of its current position.
    RngStream substream(std::uint64_t id) const;

    std::uint64_t next_u64();
    /// Uniform on [0, 1).
    double uniform();
    /// Uniform integer in [0, n).
    std::size_t uniform_int(std::size_t n);
    /// Standard normal (Box-Muller, cached spare).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    /// Gamma(shape, 1) via Marsaglia-Tsang; shape > 0.
    double gamma(double shape);
    /// Chi-squared with df degrees of freedom.
    double chi_squared(double df) { return 2.0 * gamma(0.5 * df); }

    std::vector<double> normals(std::size_t n);

    /// Fisher-Yates shuffle of an index vector.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_int(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace cips

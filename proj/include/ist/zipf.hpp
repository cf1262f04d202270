#ifndef IST_ZIPF_HPP
#define IST_ZIPF_HPP

#include <cassert>
#include <cmath>
#include <cstdint>
#include <random>

#include "ist/config.hpp"

namespace ist {

/// Skewed key generator in the style of Gray et al.: rank r is drawn with
/// probability proportional to 1/r^theta over ranks 1..n, then ranks are
/// scattered across the key range by a fixed bijective mix so the hot keys
/// are not clustered. Keys are in [1, n].
class ZipfGenerator {
  public:
    ZipfGenerator(std::uint64_t key_range, double theta)
        : n_(key_range), theta_(theta) {
        assert(n_ >= 1);
        assert(theta > 0.0 && theta < 1.0);
        zetan_ = zeta(n_, theta_);
        double zeta2 = zeta(2, theta_);
        alpha_ = 1.0 / (1.0 - theta_);
        eta_ = (1.0 - std::pow(2.0 / static_cast<double>(n_), 1.0 - theta_)) /
               (1.0 - zeta2 / zetan_);
        mask_bits_ = 1;
        while ((1ull << mask_bits_) < n_) ++mask_bits_;
    }

    /// Harmonic partial sum H_{n,theta} by direct summation.
    static double zeta(std::uint64_t n, double theta) {
        double sum = 0.0;
        for (std::uint64_t i = 1; i <= n; ++i)
            sum += 1.0 / std::pow(static_cast<double>(i), theta);
        return sum;
    }

    double zetan() const { return zetan_; }

    std::uint64_t next_rank(std::mt19937_64& rng) {
        double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        double uz = u * zetan_;
        if (uz < 1.0) return 1;
        if (uz < 1.0 + std::pow(0.5, theta_)) return 2;
        auto r = 1 + static_cast<std::uint64_t>(static_cast<double>(n_) *
                                                std::pow(eta_ * u - eta_ + 1.0, alpha_));
        return r > n_ ? n_ : r;
    }

    Key next(std::mt19937_64& rng) { return key_of_rank(next_rank(rng)); }

    /// Deterministic rank -> key mapping (bijective over [1, n]).
    Key key_of_rank(std::uint64_t rank) const {
        assert(rank >= 1 && rank <= n_);
        std::uint64_t x = rank - 1;
        do {
            x = mix(x, mask_bits_);
        } while (x >= n_); // cycle-walk back into range
        return x + 1;
    }

  private:
    // Invertible mix on [0, 2^bits): odd multiplies and xorshifts are
    // bijective mod a power of two, and cycle-walking keeps it bijective on
    // the truncated range.
    static std::uint64_t mix(std::uint64_t x, unsigned bits) {
        const std::uint64_t mask = bits >= 64 ? ~0ull : (1ull << bits) - 1;
        x = (x * 0x9e3779b97f4a7c15ull) & mask;
        x ^= x >> (bits / 2 + 1);
        x = (x * 0xbf58476d1ce4e5b9ull) & mask;
        x ^= x >> (bits / 2 + 1);
        return x & mask;
    }

    std::uint64_t n_;
    double theta_;
    double zetan_;
    double alpha_;
    double eta_;
    unsigned mask_bits_;
};

} // namespace ist

#endif

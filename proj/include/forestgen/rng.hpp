#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string_view>

namespace forestgen {

// Counter-based random stream. draw i is a pure function of (key, i), so
// streams are reproducible regardless of worker scheduling and support O(1)
// skip-ahead (generation batches address noise by absolute row index).
//
// The generator is splitmix64 over key + i * golden gamma; keys are derived
// by hashing (seed, t_index, y_index, tag) so every job and purpose gets a
// disjoint stream.
class Rng {
  public:
    explicit Rng(std::uint64_t key) : key_(key) {}

    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

    std::uint64_t u64_at(std::uint64_t i) const {
        std::uint64_t z = key_ + (i + 1) * kGamma;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in (0, 1), 53-bit resolution, never exactly 0 or 1.
    double unit_at(std::uint64_t i) const {
        const double u = static_cast<double>(u64_at(i) >> 11) * 0x1.0p-53;
        return u > 0.0 ? u : 0x1.0p-53;
    }

    float normal_at(std::uint64_t i) const {
        return static_cast<float>(inverse_normal_cdf(unit_at(i)));
    }

    // Sequential interface over the same stream.
    std::uint64_t next_u64() { return u64_at(ctr_++); }
    double next_unit() { return unit_at(ctr_++); }
    float next_normal() { return normal_at(ctr_++); }
    std::uint64_t next_below(std::uint64_t bound) { return next_u64() % bound; }

    std::uint64_t key() const { return key_; }

    // Inverse of the standard normal CDF (Acklam's rational approximation,
    // relative error below 1.2e-9 over (0,1)).
    static double inverse_normal_cdf(double p) {
        static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                       -2.759285104469687e+02, 1.383577518672690e+02,
                                       -3.066479806614716e+01, 2.506628277459239e+00};
        static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                       -1.556989798598866e+02, 6.680131188771972e+01,
                                       -1.328068155288572e+01};
        static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                       -2.400758277161838e+00, -2.549732539343734e+00,
                                       4.374664141464968e+00,  2.938163982698783e+00};
        static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                       2.445134137142996e+00, 3.754408661907416e+00};
        static constexpr double p_low = 0.02425;

        if (p < p_low) {
            const double q = std::sqrt(-2.0 * std::log(p));
            return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
                   ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
        }
        if (p > 1.0 - p_low) {
            const double q = std::sqrt(-2.0 * std::log(1.0 - p));
            return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
                   ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
        }
        const double q = p - 0.5;
        const double r = q * q;
        return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
               (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }

  private:
    std::uint64_t key_;
    std::uint64_t ctr_ = 0;
};

// Key derivation: fold words into a running splitmix64 state.
inline std::uint64_t hash_word(std::uint64_t state, std::uint64_t word) {
    std::uint64_t z = (state ^ word) + Rng::kGamma;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_tag(std::uint64_t state, std::string_view tag) {
    for (char ch : tag) state = hash_word(state, static_cast<unsigned char>(ch));
    return hash_word(state, tag.size());
}

// Stream uniquely keyed by (seed, t_index, y_index, tag).
inline Rng job_rng(std::uint64_t seed, std::uint64_t t_index, std::uint64_t y_index,
                   std::string_view stream_tag) {
    std::uint64_t s = hash_word(0x466F726573744767ull, seed);
    s = hash_word(s, t_index);
    s = hash_word(s, y_index);
    s = hash_tag(s, stream_tag);
    return Rng(s);
}

}  // namespace forestgen

#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace sdelab {

// Counter-based random numbers.
//
// Every Gaussian increment of the driving noise is a pure function of
// (seed, path_index, step, component), so lattices are bit-reproducible
// under any parallel schedule and any generation order. The generator is
// Philox-4x32-10 (Salmon et al., SC'11); the Gaussian transform is the
// inverse CDF, so there are no rejection loops.

namespace detail {

inline constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void philox_round(std::array<std::uint32_t, 4>& ctr, std::array<std::uint32_t, 2>& key) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
}

inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) philox_round(ctr, key);
    return ctr;
}

}  // namespace detail

// One 64-bit word per (seed, path, step, component) key.
inline std::uint64_t counter_bits(std::uint64_t seed, std::uint64_t path_index,
                                  std::uint64_t step, std::uint32_t component) {
    const std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32) ^ component,
        static_cast<std::uint32_t>(path_index), static_cast<std::uint32_t>(path_index >> 32)};
    const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed),
                                              static_cast<std::uint32_t>(seed >> 32)};
    const auto out = detail::philox4x32(ctr, key);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

// Uniform in the open interval (0,1): 52 significant bits with a half-step
// offset, so the result lies in [2^-53, 1 - 2^-53] and the inverse CDF never
// sees 0 or 1.
inline double uniform_from_bits(std::uint64_t bits) {
    return static_cast<double>(bits >> 12) * 0x1.0p-52 + 0x1.0p-53;
}

// Inverse of the standard normal CDF, Wichura's algorithm AS241 (PPND16).
// Accurate to about 1e-15 over the full open interval.
inline double normal_quantile(double p) {
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        const double num = (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                                 6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                               1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
                             1.3314166789178437745e+2) * r + 3.3871328727963666080e0);
        const double den = (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                                 3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
                               5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
                             4.2313330701600911252e+1) * r + 1.0);
        return q * num / den;
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double z;
    if (r <= 5.0) {
        r -= 1.6;
        const double num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                                 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                               3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
                             4.63033784615654529590e0) * r + 1.42343711074968357734e0);
        const double den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                                 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                               6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
                             2.05319162663775882187e0) * r + 1.0);
        z = num / den;
    } else {
        r -= 5.0;
        const double num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                                 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                               2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
                             5.46378491116411436990e0) * r + 6.65790464350110377720e0);
        const double den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                                 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                               1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                             5.99832206555887937690e-1) * r + 1.0);
        z = num / den;
    }
    return (q < 0.0) ? -z : z;
}

// Standard normal draw for a counter key.
inline double normal_draw(std::uint64_t seed, std::uint64_t path_index, std::uint64_t step,
                          std::uint32_t component) {
    return normal_quantile(uniform_from_bits(counter_bits(seed, path_index, step, component)));
}

// splitmix64 finalizer; used to derive independent sub-streams (bootstrap,
// probe sampling) from a user seed without colliding with the lattice stream.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    return mix64(seed ^ mix64(tag));
}

// Small sequential engine on top of the same primitives, for validators and
// bootstrap resampling where a stream interface is more convenient.
class SequenceRng {
  public:
    explicit SequenceRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_bits() { return counter_bits(seed_, 0, counter_++, 0); }
    double uniform() { return uniform_from_bits(next_bits()); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() { return normal_quantile(uniform()); }
    // Uniform integer in [0, n) by rejection-free scaling; fine for n << 2^53.
    std::uint64_t index(std::uint64_t n) {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

  private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace sdelab

#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <vector>

#include "sdelab/errors.hpp"
#include "sdelab/rng.hpp"

namespace sdelab {

// Driving Brownian motion, stored as i.i.d. N(0, 2^-L) increments on the
// finest dyadic grid t_k = k / 2^L of [0,1]. Every coarser level is a view
// obtained by summation, so any two scheme resolutions driven by the same
// lattice are strongly coupled by construction. Increments are a pure
// function of (seed, path_index, step, component); regenerating a lattice
// reproduces it bit for bit.
struct BrownianLattice {
    int dim_noise = 1;
    int level_ref = 1;  // reference resolution n_ref = 2^level_ref
    std::uint64_t seed = 0;
    std::uint64_t path_index = 0;
    std::vector<double> increments;  // 2^level_ref * dim_noise, step-major

    std::size_t steps() const { return std::size_t{1} << level_ref; }
    const double* increment(std::size_t step) const {
        return increments.data() + step * static_cast<std::size_t>(dim_noise);
    }
    bool same_stream(const BrownianLattice& other) const {
        return seed == other.seed && path_index == other.path_index &&
               level_ref == other.level_ref && dim_noise == other.dim_noise;
    }
};

inline void fill_lattice(BrownianLattice& lat, int dim_noise, int level_ref, std::uint64_t seed,
                         std::uint64_t path_index) {
    if (level_ref < 1 || level_ref > 24)
        throw ResourceGuardError("generate_lattice: level_ref must lie in [1, 24]");
    if (dim_noise < 1) throw InvalidParameterError("generate_lattice: dim_noise must be >= 1");
    lat.dim_noise = dim_noise;
    lat.level_ref = level_ref;
    lat.seed = seed;
    lat.path_index = path_index;
    const std::size_t n = std::size_t{1} << level_ref;
    lat.increments.resize(n * static_cast<std::size_t>(dim_noise));
    const double sd = std::sqrt(std::ldexp(1.0, -level_ref));
    double* out = lat.increments.data();
    for (std::size_t step = 0; step < n; ++step)
        for (int comp = 0; comp < dim_noise; ++comp)
            *out++ = sd * normal_draw(seed, path_index, step, static_cast<std::uint32_t>(comp));
}

inline BrownianLattice generate_lattice(int dim_noise, int level_ref, std::uint64_t seed,
                                        std::uint64_t path_index) {
    BrownianLattice lat;
    fill_lattice(lat, dim_noise, level_ref, seed, path_index);
    return lat;
}

// Cumulative path W at all 2^L + 1 fine grid points (W_0 = 0), ascending
// summation order.
inline std::vector<double> prefix_path(const BrownianLattice& lat) {
    const std::size_t n = lat.steps();
    const int d1 = lat.dim_noise;
    std::vector<double> w((n + 1) * d1, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const double* inc = lat.increment(k);
        for (int c = 0; c < d1; ++c) w[(k + 1) * d1 + c] = w[k * d1 + c] + inc[c];
    }
    return w;
}

// Increments at a coarse dyadic level, computed by cascading pairwise sums
// from the fine level. The cascade makes refinement consistency exact:
// adjacent level-l increments sum bitwise to the level-(l-1) increment.
inline std::vector<double> coarse_increments(const BrownianLattice& lat, int level) {
    if (level < 0 || level > lat.level_ref)
        throw InvalidLevelError("coarse_increments: level must lie in [0, level_ref]");
    const int d1 = lat.dim_noise;
    std::vector<double> cur = lat.increments;
    for (int lvl = lat.level_ref; lvl > level; --lvl) {
        const std::size_t half = std::size_t{1} << (lvl - 1);
        std::vector<double> next(half * d1);
        for (std::size_t k = 0; k < half; ++k)
            for (int c = 0; c < d1; ++c)
                next[k * d1 + c] = cur[2 * k * d1 + c] + cur[(2 * k + 1) * d1 + c];
        cur = std::move(next);
    }
    return cur;
}

// Iterated integrals J^{jl} ~= int_s^t (W^j_r - W^j_s) dW^l_r per coarse
// step, by left-point sub-summation over the fine grid. Exact consequences
// of the left Riemann sum, used as test oracles:
//   d1 = 1:       J = ((dW)^2 - Q) / 2 with Q the sum of squared fine
//                 sub-increments;
//   any d1:       J + J^T = dW dW^T - Q, Q the fine cross quadratic
//                 covariation.
struct IteratedIntegrals {
    int level = 0;
    int dim_noise = 1;
    std::vector<double> values;  // 2^level * d1 * d1, step-major, J^{jl} at (j*d1 + l)

    const double* step(std::size_t k) const {
        const std::size_t dd = static_cast<std::size_t>(dim_noise) * dim_noise;
        return values.data() + k * dd;
    }
};

inline IteratedIntegrals iterated_integrals(const BrownianLattice& lat, int level) {
    if (level < 0 || level > lat.level_ref - 4)
        throw InvalidLevelError(
            "iterated_integrals: need at least 16 sub-steps per coarse step (level <= level_ref - 4)");
    const int d1 = lat.dim_noise;
    const std::size_t dd = static_cast<std::size_t>(d1) * d1;
    const std::size_t n = std::size_t{1} << level;
    const std::size_t m = std::size_t{1} << (lat.level_ref - level);

    IteratedIntegrals out;
    out.level = level;
    out.dim_noise = d1;
    out.values.assign(n * dd, 0.0);

    std::vector<double> running(d1);
    for (std::size_t k = 0; k < n; ++k) {
        double* j = out.values.data() + k * dd;
        std::fill(running.begin(), running.end(), 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            const double* inc = lat.increment(k * m + i);
            for (int a = 0; a < d1; ++a)
                for (int b = 0; b < d1; ++b) j[a * d1 + b] += running[a] * inc[b];
            for (int a = 0; a < d1; ++a) running[a] += inc[a];
        }
    }
    return out;
}

// The good event evaluated on the fine grid: true iff, for every coarse step
// [(k-1)/n, k/n] and every component l, the fine-grid points satisfy
// |W^l_t - W^l_{k/n}| <= kappa/2 (oscillation anchored at the step's right
// endpoint, matching the event's definition verbatim).
inline bool good_event_indicator(const BrownianLattice& lat, int level, double kappa) {
    if (level < 0 || level > lat.level_ref)
        throw InvalidLevelError("good_event_indicator: level must lie in [0, level_ref]");
    const int d1 = lat.dim_noise;
    const std::size_t n = std::size_t{1} << level;
    const std::size_t m = std::size_t{1} << (lat.level_ref - level);
    const double half_kappa = 0.5 * kappa;

    std::vector<double> total(d1), running(d1);
    for (std::size_t k = 0; k < n; ++k) {
        std::fill(total.begin(), total.end(), 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            const double* inc = lat.increment(k * m + i);
            for (int c = 0; c < d1; ++c) total[c] += inc[c];
        }
        // t runs over the fine points of the step, left endpoint included.
        std::fill(running.begin(), running.end(), 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            const double* inc = lat.increment(k * m + i);
            for (int c = 0; c < d1; ++c) {
                if (std::fabs(running[c] - total[c]) > half_kappa) return false;
                running[c] += inc[c];
            }
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Binary dump for debugging: header of four little-endian 64-bit integers
// (dim_noise, level_ref, seed, path_index) followed by the increments as
// little-endian 64-bit floats in step-major, component-minor order.

namespace detail {

inline void put_u64_le(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace detail

inline void dump_lattice(const BrownianLattice& lat, std::ostream& os) {
    detail::put_u64_le(os, static_cast<std::uint64_t>(lat.dim_noise));
    detail::put_u64_le(os, static_cast<std::uint64_t>(lat.level_ref));
    detail::put_u64_le(os, lat.seed);
    detail::put_u64_le(os, lat.path_index);
    for (double x : lat.increments) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, 8);
        detail::put_u64_le(os, bits);
    }
}

inline BrownianLattice load_lattice(std::istream& is) {
    BrownianLattice lat;
    lat.dim_noise = static_cast<int>(detail::get_u64_le(is));
    lat.level_ref = static_cast<int>(detail::get_u64_le(is));
    lat.seed = detail::get_u64_le(is);
    lat.path_index = detail::get_u64_le(is);
    if (!is || lat.dim_noise < 1 || lat.level_ref < 1 || lat.level_ref > 24)
        throw ConfigurationError("load_lattice: corrupt header");
    const std::size_t count = (std::size_t{1} << lat.level_ref) * lat.dim_noise;
    lat.increments.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t bits = detail::get_u64_le(is);
        std::memcpy(&lat.increments[i], &bits, 8);
    }
    if (!is) throw ConfigurationError("load_lattice: truncated payload");
    return lat;
}

}  // namespace sdelab

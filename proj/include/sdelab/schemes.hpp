#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdelab/brownian.hpp"
#include "sdelab/coefficients.hpp"
#include "sdelab/errors.hpp"
#include "sdelab/linalg.hpp"
#include "sdelab/parallel.hpp"

namespace sdelab {

// Time-stepping engines. All schemes are continuous-time processes with
// coefficients frozen at the left endpoint of the current coarse step; we
// integrate them on the shared fine lattice, so any two resolutions read
// the same noise and are strongly coupled. Within a coarse step with anchor
// state x_A and anchor time s, the stochastic term is accumulated by
// left-point sub-summation over fine increments dW_i:
//
//   euler                       sigma(x_A) dW_i
//   milstein (+driftless)      [sigma(x_A) + grad(sigma)sigma(x_A) (W_i - W_s)] dW_i
//   truncated variants         [sigma(x_A) + grad(sigma)sigma(x_A) chi(W_i - W_s)] dW_i
//
// with chi applied componentwise. Drifted kinds add b(x_A) per unit time.
// At level == level_ref a coarse step is a single fine step, the running
// increment is zero and the correction vanishes; that run is the reference
// path the coupled error estimates compare against.

enum class SchemeKind {
    euler,
    milstein,
    milstein_truncated,
    milstein_driftless,
    milstein_truncated_drifted,
};

inline bool scheme_has_drift(SchemeKind k) {
    return k == SchemeKind::euler || k == SchemeKind::milstein ||
           k == SchemeKind::milstein_truncated_drifted;
}

inline bool scheme_truncated(SchemeKind k) {
    return k == SchemeKind::milstein_truncated || k == SchemeKind::milstein_truncated_drifted;
}

inline bool scheme_has_correction(SchemeKind k) { return k != SchemeKind::euler; }

inline const char* scheme_name(SchemeKind k) {
    switch (k) {
        case SchemeKind::euler: return "euler";
        case SchemeKind::milstein: return "milstein";
        case SchemeKind::milstein_truncated: return "milstein_truncated";
        case SchemeKind::milstein_driftless: return "milstein_driftless";
        case SchemeKind::milstein_truncated_drifted: return "milstein_truncated_drifted";
    }
    return "?";
}

inline SchemeKind scheme_from_name(const std::string& name) {
    if (name == "euler") return SchemeKind::euler;
    if (name == "milstein") return SchemeKind::milstein;
    if (name == "milstein_truncated") return SchemeKind::milstein_truncated;
    if (name == "milstein_driftless") return SchemeKind::milstein_driftless;
    if (name == "milstein_truncated_drifted") return SchemeKind::milstein_truncated_drifted;
    throw ConfigurationError("unknown scheme kind: " + name);
}

// Any coordinate beyond this magnitude aborts the path. The shipped families
// are bounded, so a blowup indicates a bug, not model behavior.
inline constexpr double kBlowupGuard = 1e12;

// Sub-summation needs at least this many dyadic levels between a scheme and
// its lattice; level == level_ref (the reference run) is the one exception.
inline constexpr int kMandatedGap = 4;

struct SchemeConfig {
    SchemeKind scheme_kind = SchemeKind::milstein;
    int level = 4;      // coarse dyadic level, n = 2^level
    int level_ref = 10; // lattice resolution the run is coupled to
    Vec initial_state;
    std::optional<Cutoff> cutoff;  // required for truncated kinds
};

// One simulated trajectory. grid_level == level for coarse recording,
// grid_level == level_ref when the run was dense (values at every fine
// grid point, as needed by the path functionals).
struct Path {
    SchemeKind scheme_kind = SchemeKind::milstein;
    int level = 0;
    int grid_level = 0;
    int level_ref = 0;
    int dim = 1;
    std::uint64_t lattice_seed = 0;
    std::uint64_t path_index = 0;
    std::vector<double> values;  // (2^grid_level + 1) * dim

    std::size_t points() const { return (std::size_t{1} << grid_level) + 1; }
    const double* at(std::size_t point) const {
        return values.data() + point * static_cast<std::size_t>(dim);
    }
    bool dense() const { return grid_level == level_ref; }
};

struct PathEnsemble {
    SchemeConfig config;
    std::uint64_t seed = 0;
    bool dense = false;
    std::vector<Path> paths;
    std::vector<std::size_t> failed_paths;  // blown-up path indices, values empty

    std::size_t path_count() const { return paths.size(); }
};

// Milstein contraction coefficients at a frozen state: the correction in
// coordinate i reads sum_{j,l} C(i,j,l) v^j dW^l with v the (possibly
// truncated) running increment, where C(i,j,l) = sum_m d_m sigma^{il} sigma^{mj}.
// This is the coordinate expression of grad(sigma)sigma(x)(W - W_s) dW with
// the two noise indices in the roles the scheme definition assigns them.
inline void milstein_tensor(const Mat& sigma, const Tensor3& grad, Tensor3& out) {
    const int d = sigma.rows;
    const int d1 = sigma.cols;
    out.set_zero();
    for (int i = 0; i < d; ++i)
        for (int l = 0; l < d1; ++l)
            for (int m = 0; m < d; ++m) {
                const double g = grad(i, l, m);
                if (g == 0.0) continue;
                for (int j = 0; j < d1; ++j) out(i, j, l) += g * sigma(m, j);
            }
}

// ---------------------------------------------------------------------------
// Single steppers. These take the whole coarse step in one shot; simulate()
// below reproduces them by sub-summation on the fine grid.

namespace detail {

inline void check_finite(const double* x, int d, std::uint64_t fine_step, std::uint64_t path) {
    for (int i = 0; i < d; ++i) {
        if (!(std::fabs(x[i]) <= kBlowupGuard)) {
            throw NumericalBlowupError("trajectory blow-up: coordinate " + std::to_string(i) +
                                           " = " + std::to_string(x[i]) + " at fine step " +
                                           std::to_string(fine_step) + ", path " +
                                           std::to_string(path),
                                       fine_step, path);
        }
    }
}

}  // namespace detail

// x + b(x) dt + sigma(x) dW
inline Vec step_euler(const CoefficientField& field, const Vec& x, double dt, const Vec& dW) {
    if (!(dt > 0.0)) throw InvalidParameterError("step_euler: dt must be positive");
    const int d = field.dim_state;
    Vec out(x);
    Vec b(d);
    Mat sigma(d, field.dim_noise);
    field.drift(x.data(), b.data());
    field.diffusion(x.data(), sigma);
    for (int i = 0; i < d; ++i) out[i] += b[i] * dt;
    for (int i = 0; i < d; ++i) {
        double s = 0.0;
        for (int j = 0; j < field.dim_noise; ++j) s += sigma(i, j) * dW[j];
        out[i] += s;
    }
    detail::check_finite(out.data(), d, 0, 0);
    return out;
}

// x + b(x) dt + sigma(x) dW + correction, correction_i = sum C(i,j,l) J^{jl}.
inline Vec step_milstein(const CoefficientField& field, const Vec& x, double dt, const Vec& dW,
                         const Mat& iterated) {
    if (!(dt > 0.0)) throw InvalidParameterError("step_milstein: dt must be positive");
    const int d = field.dim_state;
    const int d1 = field.dim_noise;
    if (iterated.rows != d1 || iterated.cols != d1)
        throw InvalidParameterError("step_milstein: iterated-integral matrix must be d1 x d1");
    Vec out = step_euler(field, x, dt, dW);
    Mat sigma(d, d1);
    Tensor3 grad(d, d1, d), coef(d, d1, d1);
    field.diffusion(x.data(), sigma);
    field.diffusion_gradient(x.data(), grad);
    milstein_tensor(sigma, grad, coef);
    for (int i = 0; i < d; ++i) {
        double s = 0.0;
        for (int j = 0; j < d1; ++j)
            for (int l = 0; l < d1; ++l) s += coef(i, j, l) * iterated(j, l);
        out[i] += s;
    }
    detail::check_finite(out.data(), d, 0, 0);
    return out;
}

// Driftless truncated step: integrates (sigma(x) + grad(sigma)sigma(x)
// chi(W_r - W_s)) dW_r across the step by left-point sub-summation over the
// given fine increments (m x d1, step-major).
inline Vec step_milstein_truncated(const CoefficientField& field, const Cutoff& cutoff,
                                   const Vec& x, std::span<const double> sub_increments) {
    const int d = field.dim_state;
    const int d1 = field.dim_noise;
    if (sub_increments.size() % d1 != 0 || sub_increments.size() / d1 < 16)
        throw InvalidLevelError("step_milstein_truncated: need at least 16 sub-increments");
    const std::size_t m = sub_increments.size() / d1;

    Mat sigma(d, d1);
    Tensor3 grad(d, d1, d), coef(d, d1, d1);
    field.diffusion(x.data(), sigma);
    field.diffusion_gradient(x.data(), grad);
    milstein_tensor(sigma, grad, coef);

    // dW and the truncated iterated sums share the running-increment pass.
    Vec total(d1, 0.0), running(d1, 0.0);
    Mat jchi(d1, d1);
    for (std::size_t i = 0; i < m; ++i) {
        const double* inc = sub_increments.data() + i * d1;
        for (int a = 0; a < d1; ++a) {
            const double v = cutoff.evaluate(running[a]);
            for (int b = 0; b < d1; ++b) jchi(a, b) += v * inc[b];
        }
        for (int a = 0; a < d1; ++a) running[a] += inc[a];
    }
    total = running;

    Vec out(x);
    for (int i = 0; i < d; ++i) {
        double s = 0.0;
        for (int j = 0; j < d1; ++j) s += sigma(i, j) * total[j];
        out[i] += s;
        double c = 0.0;
        for (int j = 0; j < d1; ++j)
            for (int l = 0; l < d1; ++l) c += coef(i, j, l) * jchi(j, l);
        out[i] += c;
    }
    detail::check_finite(out.data(), d, 0, 0);
    return out;
}

// ---------------------------------------------------------------------------
// Full trajectory driver.

inline Path simulate(const CoefficientField& field, const SchemeConfig& config,
                     const BrownianLattice& lattice, bool dense) {
    const int d = field.dim_state;
    const int d1 = field.dim_noise;
    if (lattice.dim_noise != d1)
        throw ConfigurationError("simulate: lattice noise dimension does not match field");
    if (config.level_ref != lattice.level_ref)
        throw ConfigurationError("simulate: config level_ref does not match lattice");
    if (static_cast<int>(config.initial_state.size()) != d)
        throw ConfigurationError("simulate: initial state dimension mismatch");
    const int level = config.level;
    const int gap = lattice.level_ref - level;
    if (level < 0 || gap < 0 || (gap > 0 && gap < kMandatedGap))
        throw InvalidLevelError(
            "simulate: scheme level must equal level_ref (reference run) or sit at least " +
            std::to_string(kMandatedGap) + " dyadic levels below it");
    const bool truncated = scheme_truncated(config.scheme_kind);
    if (truncated && !config.cutoff)
        throw ConfigurationError("simulate: truncated scheme kinds require a cutoff");
    const bool with_drift = scheme_has_drift(config.scheme_kind);
    const bool with_corr = scheme_has_correction(config.scheme_kind);
    const Cutoff chi = truncated ? *config.cutoff : Cutoff{};

    const std::size_t n = std::size_t{1} << level;
    const std::size_t m = std::size_t{1} << gap;
    const double h_fine = std::ldexp(1.0, -lattice.level_ref);

    Path path;
    path.scheme_kind = config.scheme_kind;
    path.level = level;
    path.grid_level = dense ? lattice.level_ref : level;
    path.level_ref = lattice.level_ref;
    path.dim = d;
    path.lattice_seed = lattice.seed;
    path.path_index = lattice.path_index;
    path.values.resize(path.points() * static_cast<std::size_t>(d));

    Vec x = config.initial_state;
    std::copy(x.begin(), x.end(), path.values.begin());

    Vec b(d);
    Mat sigma(d, d1);
    Tensor3 grad(d, d1, d), coef(d, d1, d1);
    Vec running(d1), truncated_inc(d1);

    std::size_t record = 1;  // next slot in path.values
    for (std::size_t k = 0; k < n; ++k) {
        // freeze coefficients at the coarse anchor
        if (with_drift) field.drift(x.data(), b.data());
        field.diffusion(x.data(), sigma);
        if (with_corr) {
            field.diffusion_gradient(x.data(), grad);
            milstein_tensor(sigma, grad, coef);
        }
        std::fill(running.begin(), running.end(), 0.0);

        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t fine = k * m + i;
            const double* inc = lattice.increment(fine);
            const double* v = running.data();
            if (truncated) {
                for (int a = 0; a < d1; ++a) truncated_inc[a] = chi.evaluate(running[a]);
                v = truncated_inc.data();
            }
            for (int c = 0; c < d; ++c) {
                double dx = 0.0;
                if (with_drift) dx += b[c] * h_fine;
                for (int j = 0; j < d1; ++j) dx += sigma(c, j) * inc[j];
                if (with_corr) {
                    double corr = 0.0;
                    for (int j = 0; j < d1; ++j) {
                        const double vj = v[j];
                        if (vj == 0.0) continue;
                        for (int l = 0; l < d1; ++l) corr += coef(c, j, l) * vj * inc[l];
                    }
                    dx += corr;
                }
                x[c] += dx;
            }
            for (int a = 0; a < d1; ++a) running[a] += inc[a];
            detail::check_finite(x.data(), d, fine, lattice.path_index);
            if (dense || i + 1 == m) {
                std::copy(x.begin(), x.end(),
                          path.values.begin() + record * static_cast<std::size_t>(d));
                ++record;
            }
        }
    }
    return path;
}

// Runs simulate for path_index in [0, path_count) on per-path lattices keyed
// by the shared seed. Deterministic for a given seed under any worker count;
// per-path blow-ups are collected and only tolerated below 0.1%.
inline PathEnsemble simulate_ensemble(const CoefficientField& field, const SchemeConfig& config,
                                      std::uint64_t seed, std::size_t path_count, bool dense) {
    if (path_count < 1) throw InvalidParameterError("simulate_ensemble: path_count must be >= 1");
    PathEnsemble ens;
    ens.config = config;
    ens.seed = seed;
    ens.dense = dense;
    ens.paths.resize(path_count);
    std::vector<unsigned char> failed(path_count, 0);

    parallel_for(path_count, [&](std::size_t p) {
        BrownianLattice lattice;
        fill_lattice(lattice, field.dim_noise, config.level_ref, seed, p);
        try {
            ens.paths[p] = simulate(field, config, lattice, dense);
        } catch (const NumericalBlowupError&) {
            failed[p] = 1;
            ens.paths[p].path_index = p;
            ens.paths[p].lattice_seed = seed;
        }
    });

    for (std::size_t p = 0; p < path_count; ++p)
        if (failed[p]) ens.failed_paths.push_back(p);
    if (static_cast<double>(ens.failed_paths.size()) > 1e-3 * static_cast<double>(path_count))
        throw NumericalBlowupError("simulate_ensemble: " + std::to_string(ens.failed_paths.size()) +
                                       " of " + std::to_string(path_count) + " paths blew up",
                                   0, ens.failed_paths.front());
    return ens;
}

}  // namespace sdelab

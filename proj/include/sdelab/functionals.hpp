#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "sdelab/brownian.hpp"
#include "sdelab/coefficients.hpp"
#include "sdelab/errors.hpp"
#include "sdelab/schemes.hpp"

namespace sdelab {

// Path functionals: the sup-distance between coupled trajectories, additive
// functionals of the form int h(X_r)(f(X_r) - f(X_{k_n(r)})) dr, the Girsanov
// weight that trades the drift for a change of measure, and the one-step
// expansion residual. Time integrals use the left-point rectangle rule on the
// fine grid, matching the Ito conventions of the schemes.

using ScalarFn = std::function<double(const double* x)>;
using GradientFn = std::function<void(const double* x, double* out)>;

namespace detail {

inline void require_same_stream(const Path& a, const Path& b) {
    if (a.lattice_seed != b.lattice_seed || a.path_index != b.path_index ||
        a.level_ref != b.level_ref || a.dim != b.dim)
        throw IncompatiblePathsError("paths are not driven by the same lattice");
}

inline void require_dense(const Path& p, const char* who) {
    if (!p.dense())
        throw ConfigurationError(std::string(who) + ": needs a dense path (fine-grid observations)");
}

}  // namespace detail

// Maximum Euclidean distance over the grid points both paths carry.
inline double sup_distance(const Path& a, const Path& b) {
    detail::require_same_stream(a, b);
    const int shared_level = std::min(a.grid_level, b.grid_level);
    const std::size_t stride_a = std::size_t{1} << (a.grid_level - shared_level);
    const std::size_t stride_b = std::size_t{1} << (b.grid_level - shared_level);
    const std::size_t points = (std::size_t{1} << shared_level) + 1;
    const int d = a.dim;
    double sup = 0.0;
    for (std::size_t k = 0; k < points; ++k) {
        const double* xa = a.at(k * stride_a);
        const double* xb = b.at(k * stride_b);
        double dist2 = 0.0;
        for (int i = 0; i < d; ++i) dist2 += (xa[i] - xb[i]) * (xa[i] - xb[i]);
        sup = std::max(sup, std::sqrt(dist2));
    }
    return sup;
}

// Running integral A_t = int_0^t h(X_r) (f(X_r) - f(X_{k_n(r)})) dr at every
// fine grid point, with k_n taken at the given coarse level.
inline std::vector<double> additive_functional_series(const ScalarFn& h, const ScalarFn& f,
                                                      const Path& path, int level) {
    detail::require_dense(path, "additive_functional");
    if (level < 0 || level > path.grid_level)
        throw InvalidLevelError("additive_functional: level must lie in [0, grid level]");
    const std::size_t fine_steps = std::size_t{1} << path.grid_level;
    const std::size_t m = std::size_t{1} << (path.grid_level - level);
    const double h_fine = std::ldexp(1.0, -path.grid_level);

    std::vector<double> series(fine_steps + 1, 0.0);
    double acc = 0.0;
    double f_anchor = 0.0;
    for (std::size_t i = 0; i < fine_steps; ++i) {
        if (i % m == 0) f_anchor = f(path.at(i));
        const double* x = path.at(i);
        acc += h(x) * (f(x) - f_anchor) * h_fine;
        series[i + 1] = acc;
    }
    return series;
}

// sup_t |A_t| over the fine grid.
inline double additive_functional(const ScalarFn& h, const ScalarFn& f, const Path& path,
                                  int level) {
    const auto series = additive_functional_series(h, f, path, level);
    double sup = 0.0;
    for (double v : series) sup = std::max(sup, std::fabs(v));
    return sup;
}

// Girsanov weight for the truncated driftless path X-hat:
//   rho = exp(-int_0^1 v_r . dW_r - 1/2 int_0^1 |v_r|^2 dr),
//   v_r = ((sigma + grad(sigma)sigma chi(W_r - W_{k_n(r)}))^{-1} b)(X-hat_{k_n(r)}).
// The kappa construction keeps sigma + B uniformly nondegenerate, so the
// solve cannot legitimately fail. Strictly positive on every path.
inline double girsanov_weight(const CoefficientField& field, const Cutoff& cutoff,
                              const Path& driftless_path, const BrownianLattice& lattice,
                              int level) {
    const int d = field.dim_state;
    if (field.dim_noise != d)
        throw ConfigurationError("girsanov_weight: requires square diffusion (d1 == d)");
    detail::require_dense(driftless_path, "girsanov_weight");
    if (driftless_path.lattice_seed != lattice.seed ||
        driftless_path.path_index != lattice.path_index ||
        driftless_path.level_ref != lattice.level_ref)
        throw IncompatiblePathsError("girsanov_weight: path and lattice streams differ");
    if (level < 0 || level > lattice.level_ref)
        throw InvalidLevelError("girsanov_weight: bad level");

    const std::size_t fine_steps = lattice.steps();
    const std::size_t m = std::size_t{1} << (lattice.level_ref - level);
    const double h_fine = std::ldexp(1.0, -lattice.level_ref);

    Vec b_anchor(d), running(d), v(d);
    Mat sigma(d, d), mat(d, d);
    Tensor3 grad(d, d, d), coef(d, d, d);

    double stoch = 0.0;   // int v . dW
    double quad = 0.0;    // int |v|^2 dr
    for (std::size_t i = 0; i < fine_steps; ++i) {
        if (i % m == 0) {
            const double* anchor = driftless_path.at(i);
            field.drift(anchor, b_anchor.data());
            field.diffusion(anchor, sigma);
            field.diffusion_gradient(anchor, grad);
            milstein_tensor(sigma, grad, coef);
            std::fill(running.begin(), running.end(), 0.0);
        }
        // sigma + B with B(i,l) = sum_j coef(i,j,l) chi(running^j)
        for (int r = 0; r < d; ++r)
            for (int c = 0; c < d; ++c) mat(r, c) = sigma(r, c);
        for (int j = 0; j < d; ++j) {
            const double cj = cutoff.evaluate(running[j]);
            if (cj == 0.0) continue;
            for (int r = 0; r < d; ++r)
                for (int c = 0; c < d; ++c) mat(r, c) += coef(r, j, c) * cj;
        }
        v = b_anchor;
        try {
            solve_inplace(mat, v);
        } catch (const NumericalError&) {
            throw NumericalError("girsanov_weight: singular diffusion matrix at fine step " +
                                 std::to_string(i) + ", path " +
                                 std::to_string(lattice.path_index));
        }

        const double* inc = lattice.increment(i);
        double vdw = 0.0, vv = 0.0;
        for (int c = 0; c < d; ++c) {
            vdw += v[c] * inc[c];
            vv += v[c] * v[c];
        }
        stoch += vdw;
        quad += vv * h_fine;
        for (int c = 0; c < d; ++c) running[c] += inc[c];
    }
    return std::exp(-stoch - 0.5 * quad);
}

// Residual of the one-step expansion,
//   r(t) = f(X_t) - f(X_{k_n(t)}) - [grad(f) sigma](X_{k_n(t)}) (W_t - W_{k_n(t)}),
// at every fine grid point. Exactly zero at the coarse grid points.
inline std::vector<double> local_expansion_residual(const CoefficientField& field,
                                                    const ScalarFn& f, const GradientFn& grad_f,
                                                    const Path& path,
                                                    const BrownianLattice& lattice, int level) {
    detail::require_dense(path, "local_expansion_residual");
    if (path.lattice_seed != lattice.seed || path.path_index != lattice.path_index ||
        path.level_ref != lattice.level_ref)
        throw IncompatiblePathsError("local_expansion_residual: path and lattice streams differ");
    if (level < 0 || level > path.grid_level)
        throw InvalidLevelError("local_expansion_residual: bad level");

    const int d = field.dim_state;
    const int d1 = field.dim_noise;
    const std::size_t fine_steps = std::size_t{1} << path.grid_level;
    const std::size_t m = std::size_t{1} << (path.grid_level - level);
    const auto w = prefix_path(lattice);

    std::vector<double> residual(fine_steps + 1, 0.0);
    Vec gf(d), gsig(d1);
    Mat sigma(d, d1);
    double f_anchor = 0.0;
    std::size_t anchor = 0;
    for (std::size_t i = 0; i <= fine_steps; ++i) {
        if (i % m == 0) {  // k_n(k/n) = k/n, so coarse points anchor at themselves
            anchor = i;
            const double* xa = path.at(anchor);
            f_anchor = f(xa);
            grad_f(xa, gf.data());
            field.diffusion(xa, sigma);
            for (int j = 0; j < d1; ++j) {
                double s = 0.0;
                for (int c = 0; c < d; ++c) s += gf[c] * sigma(c, j);
                gsig[j] = s;
            }
        }
        double lin = 0.0;
        for (int j = 0; j < d1; ++j)
            lin += gsig[j] * (w[i * d1 + j] - w[anchor * d1 + j]);
        residual[i] = f(path.at(i)) - f_anchor - lin;
    }
    return residual;
}

}  // namespace sdelab

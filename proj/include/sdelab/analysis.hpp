#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sdelab/errors.hpp"
#include "sdelab/functionals.hpp"
#include "sdelab/rng.hpp"
#include "sdelab/schemes.hpp"

namespace sdelab {

// Statistical reduction: L^p strong errors with bootstrap error bars and
// least-squares rate fits in log-log (base 2) coordinates.

struct ErrorReport {
    SchemeKind scheme_kind = SchemeKind::milstein;
    int level = 0;       // n = 2^level
    double p = 2.0;      // moment order
    double error = 0.0;  // estimate of || sup_t |X^ref - X^n| ||_{L^p}
    double std_error = 0.0;
    std::size_t path_count = 0;
};

struct RateFit {
    std::vector<std::pair<double, double>> points;  // (log2 n, log2 error)
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
    double r_squared = 0.0;
    int excluded_coarsest = 0;  // points dropped by the preasymptotic rule
};

inline constexpr int kBootstrapResamples = 1000;

// (mean of p-th powers)^{1/p}
inline double lp_mean(const std::vector<double>& values, double p) {
    if (values.empty()) return 0.0;
    double s = 0.0;
    for (double v : values) s += std::pow(v, p);
    return std::pow(s / static_cast<double>(values.size()), 1.0 / p);
}

// Nonparametric bootstrap standard error of the L^p statistic. Sup-functional
// distributions are skewed, so resampling beats normal theory here.
inline double bootstrap_stderr_lp(const std::vector<double>& values, double p,
                                  std::uint64_t seed, int resamples = kBootstrapResamples) {
    const std::size_t n = values.size();
    if (n < 2) return 0.0;
    std::vector<double> powers(n);
    for (std::size_t i = 0; i < n; ++i) powers[i] = std::pow(values[i], p);
    SequenceRng rng(derive_seed(seed, 0xb007ull));
    std::vector<double> stats(resamples);
    for (int r = 0; r < resamples; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += powers[rng.index(n)];
        stats[r] = std::pow(s / static_cast<double>(n), 1.0 / p);
    }
    double mean = 0.0;
    for (double v : stats) mean += v;
    mean /= resamples;
    double var = 0.0;
    for (double v : stats) var += (v - mean) * (v - mean);
    return std::sqrt(var / (resamples - 1));
}

inline ErrorReport lp_error_report(const std::vector<double>& per_path_sups, double p,
                                   SchemeKind kind, int level, std::uint64_t bootstrap_seed) {
    ErrorReport report;
    report.scheme_kind = kind;
    report.level = level;
    report.p = p;
    report.path_count = per_path_sups.size();
    report.error = lp_mean(per_path_sups, p);
    report.std_error = bootstrap_stderr_lp(per_path_sups, p, bootstrap_seed);
    return report;
}

// Per-path sup distances between two coupled ensembles, skipping any path
// that blew up in either one. The ensembles must be driven by identical
// lattices; anything else is a meaningless comparison and fails hard.
inline std::vector<double> coupled_sup_distances(const PathEnsemble& reference,
                                                 const PathEnsemble& approx) {
    if (reference.seed != approx.seed)
        throw CouplingViolationError("strong_error: ensembles use different lattice seeds");
    if (reference.path_count() != approx.path_count())
        throw CouplingViolationError("strong_error: ensembles have different path counts");
    if (reference.config.level_ref != approx.config.level_ref)
        throw CouplingViolationError("strong_error: ensembles use different lattice resolutions");
    std::vector<unsigned char> skip(reference.path_count(), 0);
    for (std::size_t idx : reference.failed_paths) skip[idx] = 1;
    for (std::size_t idx : approx.failed_paths) skip[idx] = 1;
    std::vector<double> sups;
    sups.reserve(reference.path_count());
    for (std::size_t pth = 0; pth < reference.path_count(); ++pth) {
        if (skip[pth]) continue;
        sups.push_back(sup_distance(reference.paths[pth], approx.paths[pth]));
    }
    return sups;
}

inline ErrorReport strong_error(const PathEnsemble& reference, const PathEnsemble& approx,
                                double p) {
    if (!(p >= 1.0)) throw InvalidParameterError("strong_error: p must be >= 1");
    const auto sups = coupled_sup_distances(reference, approx);
    const std::uint64_t bseed =
        derive_seed(reference.seed, 1000 * static_cast<std::uint64_t>(approx.config.level) +
                                        static_cast<std::uint64_t>(p * 8));
    return lp_error_report(sups, p, approx.config.scheme_kind, approx.config.level, bseed);
}

// Ordinary least squares y = intercept + slope x.
inline RateFit ols_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
    const std::size_t n = xs.size();
    if (n < 2 || ys.size() != n) throw DegenerateFitError("ols_fit: need at least two points");
    double xbar = 0.0, ybar = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        xbar += xs[i];
        ybar += ys[i];
    }
    xbar /= static_cast<double>(n);
    ybar /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - xbar) * (xs[i] - xbar);
        sxy += (xs[i] - xbar) * (ys[i] - ybar);
        syy += (ys[i] - ybar) * (ys[i] - ybar);
    }
    if (sxx == 0.0) throw DegenerateFitError("ols_fit: degenerate abscissae");
    RateFit fit;
    fit.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) fit.points.emplace_back(xs[i], ys[i]);
    fit.slope = sxy / sxx;
    fit.intercept = ybar - fit.slope * xbar;
    double ssres = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
        ssres += r * r;
    }
    fit.r_squared = (syy > 0.0) ? std::max(0.0, 1.0 - ssres / syy) : 1.0;
    fit.slope_stderr = (n > 2) ? std::sqrt(ssres / static_cast<double>(n - 2) / sxx) : 0.0;
    return fit;
}

// log2(error) against log2(n). Preasymptotic transients are expected for
// rough drift: when the full fit has r^2 < 0.98 and there are enough points,
// the two coarsest levels are dropped and the exclusion recorded.
inline RateFit fit_rate(const std::vector<ErrorReport>& reports) {
    if (reports.size() < 4) throw DegenerateFitError("fit_rate: need at least 4 levels");
    for (std::size_t i = 1; i < reports.size(); ++i) {
        if (reports[i].scheme_kind != reports[0].scheme_kind || reports[i].p != reports[0].p)
            throw DegenerateFitError("fit_rate: mixed schemes or moment orders");
    }
    std::vector<ErrorReport> sorted = reports;
    std::sort(sorted.begin(), sorted.end(),
              [](const ErrorReport& a, const ErrorReport& b) { return a.level < b.level; });
    std::vector<double> xs, ys;
    for (const auto& r : sorted) {
        if (!(r.error > 0.0))
            throw DegenerateFitError("fit_rate: zero error at level " + std::to_string(r.level));
        xs.push_back(static_cast<double>(r.level));
        ys.push_back(std::log2(r.error));
    }
    RateFit fit = ols_fit(xs, ys);
    if (fit.r_squared < 0.98 && xs.size() >= 6) {
        RateFit refit = ols_fit(std::vector<double>(xs.begin() + 2, xs.end()),
                                std::vector<double>(ys.begin() + 2, ys.end()));
        refit.excluded_coarsest = 2;
        return refit;
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Increment moment scaling. Streams |X_{t+s} - X_t|^m over paths and grid
// translates per dyadic separation; translates are strided so the per-path
// cost stays bounded regardless of the lattice resolution.

struct MomentAccumulator {
    int grid_level = 0;
    int dim = 1;
    double order = 4.0;
    std::vector<int> separation_levels;           // separation 2^-k
    std::vector<std::size_t> strides;             // translate strides per separation
    std::vector<std::size_t> translates;          // translate counts per separation
    std::vector<std::vector<double>> path_sums;   // [separation][path]

    MomentAccumulator(int grid_level_, int dim_, double order_, std::vector<int> sep_levels,
                      std::size_t path_count)
        : grid_level(grid_level_), dim(dim_), order(order_),
          separation_levels(std::move(sep_levels)) {
        const std::size_t fine = std::size_t{1} << grid_level;
        for (int k : separation_levels) {
            if (k < 0 || k > grid_level)
                throw InvalidParameterError(
                    "moment_scaling: separations must be dyadic within [2^-L, 1]");
            const std::size_t span = fine >> k;  // separation in fine steps
            const std::size_t last = fine - span;
            const std::size_t stride = std::max<std::size_t>(1, fine / 256);
            strides.push_back(stride);
            translates.push_back(last / stride + 1);
            path_sums.emplace_back(path_count, 0.0);
        }
    }

    // Thread-safe across distinct path indices.
    void add_path(std::size_t path_slot, const Path& path) {
        if (!path.dense() || path.grid_level != grid_level)
            throw ConfigurationError("moment_scaling: needs dense paths on the accumulator grid");
        const std::size_t fine = std::size_t{1} << grid_level;
        for (std::size_t s = 0; s < separation_levels.size(); ++s) {
            const std::size_t span = fine >> separation_levels[s];
            const std::size_t stride = strides[s];
            double acc = 0.0;
            for (std::size_t t = 0; t + span <= fine; t += stride) {
                const double* x0 = path.at(t);
                const double* x1 = path.at(t + span);
                double dist2 = 0.0;
                for (int c = 0; c < dim; ++c) dist2 += (x1[c] - x0[c]) * (x1[c] - x0[c]);
                acc += std::pow(std::sqrt(dist2), order);
            }
            path_sums[s][path_slot] = acc;
        }
    }

    // L^m moment for one separation, averaged over paths and translates.
    double moment(std::size_t s) const {
        double total = 0.0;
        for (double v : path_sums[s]) total += v;
        const double count = static_cast<double>(path_sums[s].size()) *
                             static_cast<double>(translates[s]);
        return std::pow(total / count, 1.0 / order);
    }

    double moment_stderr(std::size_t s, std::uint64_t seed) const {
        const auto& sums = path_sums[s];
        const std::size_t n = sums.size();
        if (n < 2) return 0.0;
        SequenceRng rng(derive_seed(seed, 0x3503 + s));
        const double tcount = static_cast<double>(translates[s]);
        std::vector<double> stats(kBootstrapResamples);
        for (int r = 0; r < kBootstrapResamples; ++r) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) total += sums[rng.index(n)];
            stats[r] = std::pow(total / (static_cast<double>(n) * tcount), 1.0 / order);
        }
        double mean = 0.0;
        for (double v : stats) mean += v;
        mean /= kBootstrapResamples;
        double var = 0.0;
        for (double v : stats) var += (v - mean) * (v - mean);
        return std::sqrt(var / (kBootstrapResamples - 1));
    }

    // log2(moment) against log2(separation) = -k; expected slope 1/2 for
    // diffusive increments.
    RateFit fit() const {
        std::vector<double> xs, ys;
        for (std::size_t s = 0; s < separation_levels.size(); ++s) {
            const double mom = moment(s);
            if (!(mom > 0.0)) throw DegenerateFitError("moment_scaling: zero moment");
            xs.push_back(-static_cast<double>(separation_levels[s]));
            ys.push_back(std::log2(mom));
        }
        return ols_fit(xs, ys);
    }
};

inline RateFit moment_scaling(const PathEnsemble& ensemble, double order,
                              const std::vector<double>& separations) {
    if (ensemble.paths.empty()) throw InvalidParameterError("moment_scaling: empty ensemble");
    if (!ensemble.dense) throw ConfigurationError("moment_scaling: needs a dense ensemble");
    const int grid_level = ensemble.paths.front().grid_level;
    std::vector<int> sep_levels;
    for (double sep : separations) {
        const double k = -std::log2(sep);
        const double rounded = std::round(k);
        if (std::fabs(k - rounded) > 1e-12 || rounded < 0 || rounded > grid_level)
            throw InvalidParameterError("moment_scaling: separations must be dyadic in [2^-L, 1]");
        sep_levels.push_back(static_cast<int>(rounded));
    }
    MomentAccumulator acc(grid_level, ensemble.paths.front().dim, order, sep_levels,
                          ensemble.path_count());
    for (std::size_t pth = 0; pth < ensemble.path_count(); ++pth)
        acc.add_path(pth, ensemble.paths[pth]);
    return acc.fit();
}

}  // namespace sdelab

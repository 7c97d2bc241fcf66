// Acceptance suite: runs the shipped experiments at full scale and prints one
// pass/fail line per criterion. Exit status is the number of failed criteria.
//
//  1. smooth-coefficient Milstein order  (slope within [-1.10, -0.85])
//  2. alpha = 0.5 rates: Milstein vs Euler windows and separation
//  3. rate trend in alpha (0.25 / 0.5 / 0.75 ordered, each within 0.15)
//  4. increment moment scaling (L4 slope within [0.45, 0.55])
//  5. one-step expansion residual (L4 slope <= -0.9)
//  6. good-event decay (log P(miss) vs n: slope < 0, r2 >= 0.9)
//  7. Girsanov weight mean (within 3 bootstrap standard errors of 1)
//  8. additive-functional rate (L2 slope <= -0.6)
//  9. structural property suite (exact identities, determinism)

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "sdelab/harness.hpp"
#include "sdelab/analysis.hpp"

using namespace sdelab;

namespace {

int failures = 0;

void report(int criterion, bool pass, const std::string& what) {
    std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, what.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

// Runs a preset and reports each of its assertion windows under the given
// criterion number. Returns the result for further use.
RunResult run_preset_criterion(int criterion, const std::string& name) {
    const Preset& entry = preset_entry(name);
    std::printf("-- running %s (M = %zu) ...\n", name.c_str(), entry.config.path_count);
    std::fflush(stdout);
    const RunResult result = run_experiment(entry.config);
    std::printf("-- %s done in %.1f s\n", name.c_str(), result.wall_seconds);
    for (const auto& o : evaluate_asserts(entry, result)) {
        report(criterion, o.pass,
               o.label + ": " + o.key + " = " + fmt(o.value) + ", window [" + fmt(o.lo) + ", " +
                   fmt(o.hi) + "]");
    }
    return result;
}

// ---------------------------------------------------------------------------
// Criterion 9: structural properties, no Monte Carlo budget beyond seconds.

bool property_refinement_bitwise() {
    const BrownianLattice lat = generate_lattice(2, 10, 4242, 3);
    for (int level = 10; level > 0; --level) {
        const auto fine = coarse_increments(lat, level);
        const auto coarse = coarse_increments(lat, level - 1);
        for (std::size_t k = 0; k < coarse.size() / 2; ++k)
            for (int c = 0; c < 2; ++c)
                if (coarse[k * 2 + c] != fine[(2 * k) * 2 + c] + fine[(2 * k + 1) * 2 + c])
                    return false;
    }
    return true;
}

bool property_iterated_identities() {
    const BrownianLattice lat = generate_lattice(3, 9, 777, 1);
    const int level = 3;
    const auto J = iterated_integrals(lat, level);
    const auto coarse = coarse_increments(lat, level);
    const std::size_t m = std::size_t{1} << (9 - level);
    for (std::size_t k = 0; k < (std::size_t{1} << level); ++k) {
        Mat q(3, 3);
        for (std::size_t i = 0; i < m; ++i) {
            const double* inc = lat.increment(k * m + i);
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) q(a, b) += inc[a] * inc[b];
        }
        const double* j = J.step(k);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
                const double lhs = j[a * 3 + b] + j[b * 3 + a];
                const double rhs = coarse[k * 3 + a] * coarse[k * 3 + b] - q(a, b);
                if (std::fabs(lhs - rhs) > 1e-12) return false;
            }
    }
    // scalar left-sum identity J = ((dW)^2 - Q)/2
    const BrownianLattice lat1 = generate_lattice(1, 9, 778, 0);
    const auto J1 = iterated_integrals(lat1, level);
    const auto c1 = coarse_increments(lat1, level);
    for (std::size_t k = 0; k < (std::size_t{1} << level); ++k) {
        double q = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double v = lat1.increment(k * m + i)[0];
            q += v * v;
        }
        if (std::fabs(J1.step(k)[0] - 0.5 * (c1[k] * c1[k] - q)) > 1e-12) return false;
    }
    return true;
}

bool property_scheme_degeneracy() {
    const CoefficientField field = make_field(holder_drift_family(0.5, 1.0, 1.0, 1),
                                              elliptic_diffusion_family(1.2, 0.0, 1, 1));
    for (std::uint64_t p = 0; p < 10; ++p) {
        const BrownianLattice lat = generate_lattice(1, 10, 31, p);
        SchemeConfig sc;
        sc.level = 5;
        sc.level_ref = 10;
        sc.initial_state = {0.2};
        sc.scheme_kind = SchemeKind::euler;
        const Path euler = simulate(field, sc, lat, false);
        sc.scheme_kind = SchemeKind::milstein;
        const Path milstein = simulate(field, sc, lat, false);
        for (std::size_t i = 0; i < euler.values.size(); ++i)
            if (euler.values[i] != milstein.values[i]) return false;
    }
    return true;
}

bool property_truncation_equivalence() {
    const CoefficientField field = make_field(zero_drift(1), elliptic_diffusion_family(1.0, 0.5, 1, 1));
    Cutoff cutoff;
    cutoff.kappa = 2.1;
    int qualifying = 0;
    for (std::uint64_t p = 0; p < 40; ++p) {
        const BrownianLattice lat = generate_lattice(1, 10, 99, p);
        if (!good_event_indicator(lat, 5, cutoff.kappa / 2.0)) continue;
        ++qualifying;
        SchemeConfig sc;
        sc.level = 5;
        sc.level_ref = 10;
        sc.initial_state = {0.4};
        sc.scheme_kind = SchemeKind::milstein_driftless;
        const Path plain = simulate(field, sc, lat, true);
        sc.scheme_kind = SchemeKind::milstein_truncated;
        sc.cutoff = cutoff;
        const Path trunc = simulate(field, sc, lat, true);
        for (std::size_t i = 0; i < plain.values.size(); ++i)
            if (std::fabs(plain.values[i] - trunc.values[i]) > 1e-12) return false;
    }
    return qualifying > 5;
}

bool property_functional_linearity() {
    const CoefficientField field = make_field(holder_drift_family(0.5, 1.0, 2.0, 1),
                                              elliptic_diffusion_family(1.0, 0.25, 1, 1));
    const BrownianLattice lat = generate_lattice(1, 10, 5150, 2);
    SchemeConfig sc;
    sc.scheme_kind = SchemeKind::milstein;
    sc.level = 5;
    sc.level_ref = 10;
    sc.initial_state = {0.3};
    const Path path = simulate(field, sc, lat, true);
    const ScalarFn h1 = [](const double* x) { return std::sin(x[0]); };
    const ScalarFn h2 = [](const double* x) { return std::cos(x[0]); };
    const ScalarFn f1 = [](const double* x) { return x[0]; };
    const ScalarFn combo = [&](const double* x) { return h1(x) - 2.5 * h2(x); };
    const auto a1 = additive_functional_series(h1, f1, path, 5);
    const auto a2 = additive_functional_series(h2, f1, path, 5);
    const auto ac = additive_functional_series(combo, f1, path, 5);
    for (std::size_t i = 0; i < ac.size(); ++i)
        if (std::fabs(ac[i] - (a1[i] - 2.5 * a2[i])) > 1e-10) return false;
    const ScalarFn fconst = [](const double*) { return 4.2; };
    return additive_functional(h1, fconst, path, 5) == 0.0;
}

bool property_fit_exactness() {
    std::vector<ErrorReport> reports;
    for (int level = 3; level <= 8; ++level) {
        ErrorReport r;
        r.scheme_kind = SchemeKind::milstein;
        r.level = level;
        r.p = 2.0;
        r.error = 0.7 * std::pow(std::ldexp(1.0, level), -0.75);
        reports.push_back(r);
    }
    const RateFit fit = fit_rate(reports);
    return std::fabs(fit.slope + 0.75) < 1e-12 && std::fabs(fit.r_squared - 1.0) < 1e-12;
}

bool property_thread_determinism() {
    ExperimentConfig cfg;
    cfg.experiment_id = "threads";
    cfg.mode = "rate";
    cfg.alpha = 0.5;
    cfg.amplitude = 1.0;
    cfg.frequency = 2.0;
    cfg.s0 = 1.0;
    cfg.s1 = 0.5;
    cfg.x0 = {0.3};
    cfg.scheme_kinds = {SchemeKind::milstein};
    cfg.levels = {4, 5, 6, 7};
    cfg.level_ref = 13;
    cfg.path_count = 60;
    cfg.seed = 11;
    setenv("SDE_LAB_THREADS", "1", 1);
    const std::string serial = csv_text(run_experiment(cfg));
    setenv("SDE_LAB_THREADS", "3", 1);
    const std::string threaded = csv_text(run_experiment(cfg));
    unsetenv("SDE_LAB_THREADS");
    return serial == threaded;
}

}  // namespace

int main() {
    std::printf("acceptance suite, %d worker thread(s)\n", worker_count());

    // 1. smooth model order
    run_preset_criterion(1, "smooth-rate");

    // 2. alpha = 0.5 Milstein vs Euler (one coupled run covers all windows)
    const RunResult a05 = run_preset_criterion(2, "main-rate-a05");

    // 3. trend in alpha
    {
        const RunResult a025 = run_preset_criterion(3, "main-rate-a025");
        const RunResult a075 = run_preset_criterion(3, "main-rate-a075");
        const double s025 = a025.metrics.at("slope.milstein.p2");
        const double s05 = a05.metrics.at("slope.milstein.p2");
        const double s075 = a075.metrics.at("slope.milstein.p2");
        report(3, s075 < s05 && s05 < s025,
               "slopes ordered in alpha: " + fmt(s075) + " < " + fmt(s05) + " < " + fmt(s025));
    }

    // 4..8: single-preset criteria
    run_preset_criterion(4, "moment-scaling-a05");
    run_preset_criterion(5, "local-expansion-smooth");
    run_preset_criterion(6, "omega-decay");
    run_preset_criterion(7, "girsanov-mean");
    run_preset_criterion(8, "functional-rate-a05");

    // 9. structural properties
    report(9, property_refinement_bitwise(), "refinement consistency is bitwise");
    report(9, property_iterated_identities(), "iterated-integral identities hold to 1e-12");
    report(9, property_scheme_degeneracy(), "Milstein equals Euler for constant sigma");
    report(9, property_truncation_equivalence(), "truncated scheme matches plain on the good event");
    report(9, property_functional_linearity(), "additive functional is linear; constant f is exact zero");
    report(9, property_fit_exactness(), "rate fit recovers exact power laws to 1e-12");
    report(9, property_thread_determinism(), "CSV bytes invariant under worker count");

    std::printf("%s: %d criterion check(s) failed\n", failures == 0 ? "SUCCESS" : "FAILURE",
                failures);
    return failures;
}

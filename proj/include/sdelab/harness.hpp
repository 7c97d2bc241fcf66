#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdelab/analysis.hpp"
#include "sdelab/brownian.hpp"
#include "sdelab/coefficients.hpp"
#include "sdelab/errors.hpp"
#include "sdelab/functionals.hpp"
#include "sdelab/parallel.hpp"
#include "sdelab/schemes.hpp"

namespace sdelab {

// Experiment runner. Configs are flat `key = value` text (comma-separated
// arrays, `#` comments); every pipeline streams path by path, collects
// per-path statistics into preallocated slots and reduces single-threaded,
// so outputs are byte-identical for a given seed under any worker count.

struct ExperimentConfig {
    std::string experiment_id = "experiment";
    std::string mode = "rate";  // rate | moments | functional | omega | girsanov | validate
    std::string model = "holder-sine";
    double alpha = 0.5;
    double amplitude = 0.0;
    double frequency = 1.0;
    double s0 = 1.0;
    double s1 = 0.0;
    int d = 1;
    int d1 = 1;
    Vec x0 = {0.0};
    std::vector<SchemeKind> scheme_kinds = {SchemeKind::milstein};
    std::vector<int> levels = {4, 5, 6, 7};
    int level_ref = 11;
    std::vector<double> p_orders = {2.0};
    std::size_t path_count = 100;
    std::uint64_t seed = 1;
    std::string output_path = "out";
    // mode extras
    double kappa = 0.0;                    // omega threshold; 0 means the model cutoff
    std::string functional = "additive";   // or "local-expansion"
    std::vector<int> separation_levels = {2, 3, 4, 5, 6, 7, 8};  // separation 2^-k
    int probe_count = 10000;               // validate mode
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigurationError("config key '" + key + "': cannot parse number '" + value + "'");
    }
}

inline long long parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigurationError("config key '" + key + "': cannot parse integer '" + value + "'");
    }
}

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string format_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

}  // namespace detail

inline ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    cfg.x0.clear();
    cfg.scheme_kinds.clear();
    cfg.levels.clear();
    cfg.p_orders.clear();
    cfg.separation_levels.clear();
    bool have_x0 = false, have_schemes = false, have_levels = false, have_p = false,
         have_sep = false;

    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigurationError("config line " + std::to_string(lineno) +
                                     ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));

        if (key == "experiment_id") cfg.experiment_id = value;
        else if (key == "mode") cfg.mode = value;
        else if (key == "model") cfg.model = value;
        else if (key == "alpha") cfg.alpha = detail::parse_double(key, value);
        else if (key == "amplitude") cfg.amplitude = detail::parse_double(key, value);
        else if (key == "frequency") cfg.frequency = detail::parse_double(key, value);
        else if (key == "s0") cfg.s0 = detail::parse_double(key, value);
        else if (key == "s1") cfg.s1 = detail::parse_double(key, value);
        else if (key == "d") cfg.d = static_cast<int>(detail::parse_int(key, value));
        else if (key == "d1") cfg.d1 = static_cast<int>(detail::parse_int(key, value));
        else if (key == "x0") {
            for (const auto& item : detail::split_csv(value))
                cfg.x0.push_back(detail::parse_double(key, item));
            have_x0 = true;
        } else if (key == "schemes") {
            for (const auto& item : detail::split_csv(value))
                cfg.scheme_kinds.push_back(scheme_from_name(item));
            have_schemes = true;
        } else if (key == "levels") {
            for (const auto& item : detail::split_csv(value))
                cfg.levels.push_back(static_cast<int>(detail::parse_int(key, item)));
            have_levels = true;
        } else if (key == "level_ref") cfg.level_ref = static_cast<int>(detail::parse_int(key, value));
        else if (key == "p") {
            for (const auto& item : detail::split_csv(value))
                cfg.p_orders.push_back(detail::parse_double(key, item));
            have_p = true;
        } else if (key == "paths") cfg.path_count = static_cast<std::size_t>(detail::parse_int(key, value));
        else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(detail::parse_int(key, value));
        else if (key == "out") cfg.output_path = value;
        else if (key == "kappa") cfg.kappa = detail::parse_double(key, value);
        else if (key == "functional") cfg.functional = value;
        else if (key == "separation_levels") {
            for (const auto& item : detail::split_csv(value))
                cfg.separation_levels.push_back(static_cast<int>(detail::parse_int(key, item)));
            have_sep = true;
        } else if (key == "probe_count") cfg.probe_count = static_cast<int>(detail::parse_int(key, value));
        else throw ConfigurationError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    if (!have_x0) cfg.x0 = {0.0};
    if (!have_schemes) cfg.scheme_kinds = {SchemeKind::milstein};
    if (!have_levels) cfg.levels = {4, 5, 6, 7};
    if (!have_p) cfg.p_orders = {2.0};
    if (!have_sep) cfg.separation_levels = {2, 3, 4, 5, 6, 7, 8};
    return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigurationError("cannot open config file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str());
}

inline void validate_config(const ExperimentConfig& cfg) {
    static const std::vector<std::string> modes = {"rate",  "moments",  "functional",
                                                   "omega", "girsanov", "validate"};
    if (std::find(modes.begin(), modes.end(), cfg.mode) == modes.end())
        throw ConfigurationError("unknown mode: " + cfg.mode);
    if (cfg.model != "holder-sine")
        throw ConfigurationError("unknown model family: " + cfg.model);
    if (cfg.d < 1 || cfg.d1 < cfg.d)
        throw ConfigurationError("need d >= 1 and d1 >= d");
    if (cfg.levels.empty()) throw ConfigurationError("levels must be non-empty");
    if (cfg.level_ref < 1 || cfg.level_ref > 24)
        throw ConfigurationError("level_ref must lie in [1, 24]");
    const int max_level = *std::max_element(cfg.levels.begin(), cfg.levels.end());
    const int min_level = *std::min_element(cfg.levels.begin(), cfg.levels.end());
    if (min_level < 0) throw ConfigurationError("levels must be non-negative");
    const int required_gap = (cfg.mode == "rate") ? 6 : kMandatedGap;
    if (cfg.mode != "validate" && cfg.level_ref < max_level + required_gap)
        throw ConfigurationError("level_ref must be at least max(levels) + " +
                                 std::to_string(required_gap) + " in mode " + cfg.mode);
    if (cfg.path_count < 1) throw ConfigurationError("paths must be >= 1");
    if (cfg.scheme_kinds.empty()) throw ConfigurationError("schemes must be non-empty");
    for (double p : cfg.p_orders)
        if (!(p >= 1.0)) throw ConfigurationError("moment orders must be >= 1");
    if (static_cast<int>(cfg.x0.size()) != cfg.d && cfg.x0.size() != 1)
        throw ConfigurationError("x0 must have d entries (or one entry broadcast)");
    if (cfg.mode == "functional" && cfg.functional != "additive" &&
        cfg.functional != "local-expansion")
        throw ConfigurationError("functional must be 'additive' or 'local-expansion'");
    if (cfg.mode == "validate" && cfg.probe_count < 100)
        throw ConfigurationError("probe_count must be >= 100");
}

// The single shipped family pair: Holder drift + elliptic sinusoidal diffusion.
inline CoefficientField build_field(const ExperimentConfig& cfg) {
    const DriftPart drift = (cfg.amplitude > 0.0)
                                ? holder_drift_family(cfg.alpha, cfg.amplitude, cfg.frequency, cfg.d)
                                : zero_drift(cfg.d);
    const DiffusionPart diffusion = elliptic_diffusion_family(cfg.s0, cfg.s1, cfg.d, cfg.d1);
    CoefficientField field = make_field(drift, diffusion);
    if (cfg.amplitude > 0.0) field.alpha = cfg.alpha;
    return field;
}

inline Vec initial_state(const ExperimentConfig& cfg) {
    if (cfg.x0.size() == 1 && cfg.d > 1) return Vec(static_cast<std::size_t>(cfg.d), cfg.x0[0]);
    return cfg.x0;
}

struct CsvRow {
    std::string scheme;
    std::uint64_t n = 0;
    double p = 0.0;
    double error = 0.0;
    double std_error = 0.0;
    std::size_t path_count = 0;
};

struct RunResult {
    ExperimentConfig config;
    std::vector<CsvRow> rows;
    std::map<std::string, double> metrics;
    std::vector<std::string> notes;      // fit summaries, printed to stdout
    std::vector<std::string> warnings;   // recorded in the JSON sidecar
    std::optional<ValidationReport> validation;
    double wall_seconds = 0.0;
};

namespace detail {

inline std::string slope_key(const std::string& what, double p) {
    return "slope." + what + ".p" + format_g(p);
}

inline void note_fit(RunResult& result, const std::string& what, double p, const RateFit& fit) {
    result.metrics[slope_key(what, p)] = fit.slope;
    result.metrics["r2." + what + ".p" + format_g(p)] = fit.r_squared;
    result.metrics["slope_stderr." + what + ".p" + format_g(p)] = fit.slope_stderr;
    std::ostringstream os;
    os << "fit " << what << " p=" << format_g(p) << ": slope " << format_g(fit.slope) << " +- "
       << format_g(fit.slope_stderr) << ", r2 " << format_g(fit.r_squared);
    if (fit.excluded_coarsest > 0) {
        os << " (excluded " << fit.excluded_coarsest << " coarsest levels)";
        result.warnings.push_back("fit " + what + " p=" + format_g(p) + " excluded " +
                                  std::to_string(fit.excluded_coarsest) + " coarsest levels");
    }
    result.notes.push_back(os.str());
}

// Blow-up policy shared by the streaming pipelines: tolerate at most 0.1%.
inline void check_failures(const std::vector<unsigned char>& failed) {
    std::size_t count = 0;
    for (unsigned char f : failed) count += f;
    if (static_cast<double>(count) > 1e-3 * static_cast<double>(failed.size()))
        throw NumericalBlowupError("pipeline: " + std::to_string(count) + " of " +
                                       std::to_string(failed.size()) + " paths blew up",
                                   0, 0);
}

inline std::vector<double> surviving(const std::vector<double>& values,
                                     const std::vector<unsigned char>& failed) {
    std::vector<double> out;
    out.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        if (!failed[i]) out.push_back(values[i]);
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pipelines.

inline void run_rate_mode(const ExperimentConfig& cfg, const CoefficientField& field,
                          RunResult& result) {
    const std::size_t M = cfg.path_count;
    std::vector<int> levels = cfg.levels;
    std::sort(levels.begin(), levels.end());
    const Cutoff cutoff = make_cutoff(field.lambda, field.k_bound, field.dim_state);
    const Vec x0 = initial_state(cfg);

    const std::size_t kinds = cfg.scheme_kinds.size();
    std::vector<std::vector<std::vector<double>>> sups(
        kinds, std::vector<std::vector<double>>(levels.size(), std::vector<double>(M, 0.0)));
    std::vector<unsigned char> failed(M, 0);

    parallel_for(M, [&](std::size_t pth) {
        BrownianLattice lattice;
        fill_lattice(lattice, field.dim_noise, cfg.level_ref, cfg.seed, pth);
        try {
            // The reference at level_ref only depends on whether the kind
            // carries a drift, so it is shared across kinds.
            std::optional<Path> ref_drift, ref_plain;
            for (std::size_t ki = 0; ki < kinds; ++ki) {
                const SchemeKind kind = cfg.scheme_kinds[ki];
                SchemeConfig sc;
                sc.scheme_kind = kind;
                sc.level_ref = cfg.level_ref;
                sc.initial_state = x0;
                if (scheme_truncated(kind)) sc.cutoff = cutoff;
                auto& ref = scheme_has_drift(kind) ? ref_drift : ref_plain;
                if (!ref) {
                    sc.level = cfg.level_ref;
                    ref = simulate(field, sc, lattice, false);
                }
                for (std::size_t li = 0; li < levels.size(); ++li) {
                    sc.level = levels[li];
                    const Path approx = simulate(field, sc, lattice, false);
                    sups[ki][li][pth] = sup_distance(*ref, approx);
                }
            }
        } catch (const NumericalBlowupError&) {
            failed[pth] = 1;
        }
    });
    detail::check_failures(failed);

    for (std::size_t ki = 0; ki < kinds; ++ki) {
        const SchemeKind kind = cfg.scheme_kinds[ki];
        for (double p : cfg.p_orders) {
            std::vector<ErrorReport> reports;
            for (std::size_t li = 0; li < levels.size(); ++li) {
                const auto values = detail::surviving(sups[ki][li], failed);
                const std::uint64_t bseed = derive_seed(
                    cfg.seed, 7000 + 100 * static_cast<std::uint64_t>(levels[li]) +
                                  10 * static_cast<std::uint64_t>(ki) +
                                  static_cast<std::uint64_t>(p));
                reports.push_back(lp_error_report(values, p, kind, levels[li], bseed));
                result.rows.push_back({scheme_name(kind), std::uint64_t{1} << levels[li], p,
                                       reports.back().error, reports.back().std_error,
                                       reports.back().path_count});
            }
            detail::note_fit(result, scheme_name(kind), p, fit_rate(reports));
        }
    }

    // Scheme separation, when both Milstein and Euler ran: Euler minus
    // Milstein slope at each p (positive when Milstein converges faster).
    const auto find_kind = [&](SchemeKind k) {
        return std::find(cfg.scheme_kinds.begin(), cfg.scheme_kinds.end(), k);
    };
    if (find_kind(SchemeKind::milstein) != cfg.scheme_kinds.end() &&
        find_kind(SchemeKind::euler) != cfg.scheme_kinds.end()) {
        for (double p : cfg.p_orders) {
            const double mil = result.metrics[detail::slope_key("milstein", p)];
            const double eul = result.metrics[detail::slope_key("euler", p)];
            result.metrics["sep.euler_minus_milstein.p" + detail::format_g(p)] = eul - mil;
        }
    }
}

inline void run_moments_mode(const ExperimentConfig& cfg, const CoefficientField& field,
                             RunResult& result) {
    const std::size_t M = cfg.path_count;
    const int level = cfg.levels.front();
    const SchemeKind kind = cfg.scheme_kinds.front();
    const Cutoff cutoff = make_cutoff(field.lambda, field.k_bound, field.dim_state);
    const double order = cfg.p_orders.front();
    const Vec x0 = initial_state(cfg);

    MomentAccumulator acc(cfg.level_ref, field.dim_state, order, cfg.separation_levels, M);
    std::vector<unsigned char> failed(M, 0);
    parallel_for(M, [&](std::size_t pth) {
        BrownianLattice lattice;
        fill_lattice(lattice, field.dim_noise, cfg.level_ref, cfg.seed, pth);
        SchemeConfig sc;
        sc.scheme_kind = kind;
        sc.level = level;
        sc.level_ref = cfg.level_ref;
        sc.initial_state = x0;
        if (scheme_truncated(kind)) sc.cutoff = cutoff;
        try {
            const Path path = simulate(field, sc, lattice, true);
            acc.add_path(pth, path);
        } catch (const NumericalBlowupError&) {
            failed[pth] = 1;
        }
    });
    detail::check_failures(failed);

    for (std::size_t s = 0; s < acc.separation_levels.size(); ++s) {
        result.rows.push_back({scheme_name(kind),
                               std::uint64_t{1} << acc.separation_levels[s], order, acc.moment(s),
                               acc.moment_stderr(s, derive_seed(cfg.seed, 5100 + s)), M});
    }
    const RateFit fit = acc.fit();
    result.metrics["slope.moments.m" + detail::format_g(order)] = fit.slope;
    result.metrics["r2.moments.m" + detail::format_g(order)] = fit.r_squared;
    result.notes.push_back("fit moments m=" + detail::format_g(order) + ": slope " +
                           detail::format_g(fit.slope) + " +- " +
                           detail::format_g(fit.slope_stderr) + ", r2 " +
                           detail::format_g(fit.r_squared));
}

inline void run_functional_mode(const ExperimentConfig& cfg, const CoefficientField& field,
                                RunResult& result) {
    const std::size_t M = cfg.path_count;
    std::vector<int> levels = cfg.levels;
    std::sort(levels.begin(), levels.end());
    const SchemeKind kind = cfg.scheme_kinds.front();
    const Cutoff cutoff = make_cutoff(field.lambda, field.k_bound, field.dim_state);
    const Vec x0 = initial_state(cfg);
    const bool local_expansion = (cfg.functional == "local-expansion");

    // h: smooth diffusion component; f: the (Holder) drift component for the
    // additive functional, the diffusion component for the expansion residual.
    const double s0 = cfg.s0, s1 = cfg.s1;
    const double amp = cfg.amplitude, freq = cfg.frequency, alpha = cfg.alpha;
    const ScalarFn h_fn = [s0, s1](const double* x) { return s0 + s1 * std::sin(x[0]); };
    const ScalarFn f_drift = [amp, freq, alpha](const double* x) {
        return amp * signed_power(std::sin(freq * x[0]), alpha);
    };
    const ScalarFn f_sigma = [s0, s1](const double* x) { return s0 + s1 * std::sin(x[0]); };
    const int dim = field.dim_state;
    const GradientFn grad_sigma = [s1, dim](const double* x, double* out) {
        for (int i = 0; i < dim; ++i) out[i] = 0.0;
        out[0] = s1 * std::cos(x[0]);
    };

    std::vector<std::vector<double>> values(levels.size(), std::vector<double>(M, 0.0));
    std::vector<unsigned char> failed(M, 0);
    parallel_for(M, [&](std::size_t pth) {
        BrownianLattice lattice;
        fill_lattice(lattice, field.dim_noise, cfg.level_ref, cfg.seed, pth);
        try {
            for (std::size_t li = 0; li < levels.size(); ++li) {
                SchemeConfig sc;
                sc.scheme_kind = kind;
                sc.level = levels[li];
                sc.level_ref = cfg.level_ref;
                sc.initial_state = x0;
                if (scheme_truncated(kind)) sc.cutoff = cutoff;
                const Path path = simulate(field, sc, lattice, true);
                if (local_expansion) {
                    // time-integrated L^p norm of the residual: the per-path
                    // value is (mean over fine times of |r|^p)^{1/p}, so the
                    // ensemble reduction below yields ||r||_{L^p(paths x time)}.
                    // The pathwise running maximum would pick up an extra
                    // Brownian-oscillation log factor and obscure the 1/n decay.
                    const auto residual =
                        local_expansion_residual(field, f_sigma, grad_sigma, path, lattice,
                                                 levels[li]);
                    const double p_order = cfg.p_orders.front();
                    double acc = 0.0;
                    for (double r : residual) acc += std::pow(std::fabs(r), p_order);
                    values[li][pth] = std::pow(acc / static_cast<double>(residual.size()),
                                               1.0 / p_order);
                } else {
                    values[li][pth] = additive_functional(h_fn, f_drift, path, levels[li]);
                }
            }
        } catch (const NumericalBlowupError&) {
            failed[pth] = 1;
        }
    });
    detail::check_failures(failed);

    const std::string what = local_expansion ? "local_expansion" : "functional";
    // the expansion-residual per-path values already embed their moment order
    const std::vector<double> reduce_orders =
        local_expansion ? std::vector<double>{cfg.p_orders.front()} : cfg.p_orders;
    for (double p : reduce_orders) {
        std::vector<ErrorReport> reports;
        for (std::size_t li = 0; li < levels.size(); ++li) {
            const auto vals = detail::surviving(values[li], failed);
            const std::uint64_t bseed =
                derive_seed(cfg.seed, 9100 + 100 * static_cast<std::uint64_t>(levels[li]) +
                                          static_cast<std::uint64_t>(p));
            reports.push_back(lp_error_report(vals, p, kind, levels[li], bseed));
            result.rows.push_back({scheme_name(kind), std::uint64_t{1} << levels[li], p,
                                   reports.back().error, reports.back().std_error,
                                   reports.back().path_count});
        }
        detail::note_fit(result, what, p, fit_rate(reports));
    }
}

inline void run_omega_mode(const ExperimentConfig& cfg, const CoefficientField& field,
                           RunResult& result) {
    const std::size_t M = cfg.path_count;
    std::vector<int> levels = cfg.levels;
    std::sort(levels.begin(), levels.end());
    const double kappa =
        cfg.kappa > 0.0 ? cfg.kappa
                        : make_cutoff(field.lambda, field.k_bound, field.dim_state).kappa;

    std::vector<std::vector<unsigned char>> miss(levels.size(),
                                                 std::vector<unsigned char>(M, 0));
    parallel_for(M, [&](std::size_t pth) {
        BrownianLattice lattice;
        fill_lattice(lattice, field.dim_noise, cfg.level_ref, cfg.seed, pth);
        for (std::size_t li = 0; li < levels.size(); ++li)
            miss[li][pth] = good_event_indicator(lattice, levels[li], kappa) ? 0 : 1;
    });

    std::vector<double> xs, ys;
    for (std::size_t li = 0; li < levels.size(); ++li) {
        std::size_t count = 0;
        for (unsigned char m : miss[li]) count += m;
        const double prob = static_cast<double>(count) / static_cast<double>(M);
        const double se = std::sqrt(std::max(prob * (1.0 - prob), 0.0) / static_cast<double>(M));
        result.rows.push_back({"omega", std::uint64_t{1} << levels[li], 0.0, prob, se, M});
        if (count == 0) {
            result.warnings.push_back("omega: no misses at n = " +
                                      std::to_string(std::uint64_t{1} << levels[li]) +
                                      "; level dropped from the decay fit");
            continue;
        }
        xs.push_back(static_cast<double>(std::uint64_t{1} << levels[li]));
        ys.push_back(std::log(prob));
    }
    if (xs.size() < 3) throw DegenerateFitError("omega: fewer than 3 usable levels in decay fit");
    const RateFit fit = ols_fit(xs, ys);
    result.metrics["slope.omega"] = fit.slope;
    result.metrics["r2.omega"] = fit.r_squared;
    result.notes.push_back("fit omega decay: log P(miss) vs n slope " +
                           detail::format_g(fit.slope) + ", r2 " +
                           detail::format_g(fit.r_squared) + " (kappa " +
                           detail::format_g(kappa) + ")");
}

inline void run_girsanov_mode(const ExperimentConfig& cfg, const CoefficientField& field,
                              RunResult& result) {
    const std::size_t M = cfg.path_count;
    const int level = cfg.levels.front();
    const Cutoff cutoff = make_cutoff(field.lambda, field.k_bound, field.dim_state);
    const Vec x0 = initial_state(cfg);

    std::vector<double> rho(M, 0.0);
    std::vector<unsigned char> failed(M, 0);
    parallel_for(M, [&](std::size_t pth) {
        BrownianLattice lattice;
        fill_lattice(lattice, field.dim_noise, cfg.level_ref, cfg.seed, pth);
        SchemeConfig sc;
        sc.scheme_kind = SchemeKind::milstein_truncated;
        sc.level = level;
        sc.level_ref = cfg.level_ref;
        sc.initial_state = x0;
        sc.cutoff = cutoff;
        try {
            const Path path = simulate(field, sc, lattice, true);
            rho[pth] = girsanov_weight(field, cutoff, path, lattice, level);
        } catch (const NumericalBlowupError&) {
            failed[pth] = 1;
        }
    });
    detail::check_failures(failed);

    const auto values = detail::surviving(rho, failed);
    const ErrorReport report = lp_error_report(values, 1.0, SchemeKind::milstein_truncated, level,
                                               derive_seed(cfg.seed, 0x6172ull));
    result.rows.push_back({"milstein_truncated", std::uint64_t{1} << level, 1.0, report.error,
                           report.std_error, report.path_count});
    result.metrics["mean.girsanov"] = report.error;
    result.metrics["stderr.girsanov"] = report.std_error;
    result.metrics["dev_in_se.girsanov"] =
        report.std_error > 0.0 ? std::fabs(report.error - 1.0) / report.std_error : 0.0;
    result.notes.push_back("girsanov weight mean " + detail::format_g(report.error) + " +- " +
                           detail::format_g(report.std_error) + " (" +
                           detail::format_g(result.metrics["dev_in_se.girsanov"]) +
                           " standard errors from 1)");
}

inline RunResult run_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    const auto start = std::chrono::steady_clock::now();
    RunResult result;
    result.config = cfg;
    const CoefficientField field = build_field(cfg);

    if (cfg.mode == "validate") {
        result.validation = validate_assumptions(field, cfg.probe_count, cfg.seed);
        result.notes.push_back("validation passed: rayleigh in [" +
                               detail::format_g(result.validation->rayleigh_min) + ", " +
                               detail::format_g(result.validation->rayleigh_max) +
                               "], holder quotient " +
                               detail::format_g(result.validation->holder_quotient));
    } else if (cfg.mode == "rate") {
        run_rate_mode(cfg, field, result);
    } else if (cfg.mode == "moments") {
        run_moments_mode(cfg, field, result);
    } else if (cfg.mode == "functional") {
        run_functional_mode(cfg, field, result);
    } else if (cfg.mode == "omega") {
        run_omega_mode(cfg, field, result);
    } else if (cfg.mode == "girsanov") {
        run_girsanov_mode(cfg, field, result);
    }

    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

// ---------------------------------------------------------------------------
// Output files. The CSV schema is fixed: one header row, then
// experiment_id,scheme,alpha,d,d1,n,p,error,std_error,path_count,seed
// with doubles at full round-trip precision; reruns with identical configs
// are byte-identical including row order.

inline std::string csv_text(const RunResult& result) {
    const auto& cfg = result.config;
    std::string out = "experiment_id,scheme,alpha,d,d1,n,p,error,std_error,path_count,seed\n";
    for (const auto& row : result.rows) {
        out += cfg.experiment_id;
        out += ',';
        out += row.scheme;
        out += ',';
        out += detail::format_g17(cfg.alpha);
        out += ',';
        out += std::to_string(cfg.d);
        out += ',';
        out += std::to_string(cfg.d1);
        out += ',';
        out += std::to_string(row.n);
        out += ',';
        out += detail::format_g17(row.p);
        out += ',';
        out += detail::format_g17(row.error);
        out += ',';
        out += detail::format_g17(row.std_error);
        out += ',';
        out += std::to_string(row.path_count);
        out += ',';
        out += std::to_string(cfg.seed);
        out += '\n';
    }
    return out;
}

inline nlohmann::json config_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["experiment_id"] = cfg.experiment_id;
    j["mode"] = cfg.mode;
    j["model"] = cfg.model;
    j["alpha"] = cfg.alpha;
    j["amplitude"] = cfg.amplitude;
    j["frequency"] = cfg.frequency;
    j["s0"] = cfg.s0;
    j["s1"] = cfg.s1;
    j["d"] = cfg.d;
    j["d1"] = cfg.d1;
    j["x0"] = cfg.x0;
    std::vector<std::string> kinds;
    for (auto k : cfg.scheme_kinds) kinds.push_back(scheme_name(k));
    j["schemes"] = kinds;
    j["levels"] = cfg.levels;
    j["level_ref"] = cfg.level_ref;
    j["p"] = cfg.p_orders;
    j["paths"] = cfg.path_count;
    j["seed"] = cfg.seed;
    j["kappa"] = cfg.kappa;
    j["functional"] = cfg.functional;
    j["separation_levels"] = cfg.separation_levels;
    j["probe_count"] = cfg.probe_count;
    return j;
}

#ifndef SDE_LAB_VERSION
#define SDE_LAB_VERSION "0.1.0-unknown"
#endif

// Writes results.csv (data modes) or a validation report (validate mode),
// plus the metadata sidecar. Returns the paths written.
inline std::vector<std::string> write_outputs(const RunResult& result,
                                              const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto& cfg = result.config;
    std::vector<std::string> written;

    if (cfg.mode == "validate") {
        const std::string path = out_dir + "/" + cfg.experiment_id + "_validation.json";
        nlohmann::json j;
        const auto& v = *result.validation;
        j["probe_count"] = v.probe_count;
        j["rayleigh_min"] = v.rayleigh_min;
        j["rayleigh_max"] = v.rayleigh_max;
        j["holder_quotient"] = v.holder_quotient;
        j["drift_sup"] = v.drift_sup;
        j["gradient_rel_error"] = v.gradient_rel_error;
        j["box"] = {v.box_lo, v.box_hi};
        j["declared"] = {{"lambda", v.declared_lambda},
                         {"k_bound", v.declared_k_bound},
                         {"drift_holder", v.declared_drift_holder},
                         {"alpha", v.declared_alpha}};
        std::ofstream out(path, std::ios::binary);
        out << j.dump(2) << "\n";
        written.push_back(path);
    } else {
        const std::string path = out_dir + "/" + cfg.experiment_id + ".csv";
        std::ofstream out(path, std::ios::binary);
        out << csv_text(result);
        written.push_back(path);
    }

    // Sidecar: config echo, version, timestamps, warnings.
    const std::string meta_path = out_dir + "/" + cfg.experiment_id + "_meta.json";
    nlohmann::json meta;
    meta["config"] = config_json(cfg);
    meta["version"] = SDE_LAB_VERSION;
    std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    meta["started_at"] = stamp;
    meta["wall_seconds"] = result.wall_seconds;
    meta["warnings"] = result.warnings;
    std::ofstream meta_out(meta_path, std::ios::binary);
    meta_out << meta.dump(2) << "\n";
    written.push_back(meta_path);
    return written;
}

// ---------------------------------------------------------------------------
// Presets: pinned configurations reproducing the shipped experiments, each
// with the assertion windows `run --preset NAME --assert` enforces.

struct MetricWindow {
    std::string key;
    double lo = -1e300;
    double hi = 1e300;
    std::string label;
};

struct Preset {
    std::string name;
    std::string description;
    ExperimentConfig config;
    std::vector<MetricWindow> asserts;
};

namespace detail {

inline ExperimentConfig rate_config_base() {
    ExperimentConfig cfg;
    cfg.mode = "rate";
    cfg.d = 1;
    cfg.d1 = 1;
    cfg.x0 = {0.3};
    cfg.levels = {4, 5, 6, 7, 8, 9};
    cfg.level_ref = 15;
    cfg.p_orders = {2.0};
    cfg.path_count = 10000;
    return cfg;
}

}  // namespace detail

inline std::vector<Preset> preset_catalog() {
    std::vector<Preset> presets;

    {
        Preset p;
        p.name = "smooth-rate";
        p.description = "Milstein order ~1 for a smooth bounded model (s1=0.25, sine drift)";
        p.config = detail::rate_config_base();
        p.config.experiment_id = p.name;
        p.config.alpha = 1.0;
        p.config.amplitude = 0.5;
        p.config.frequency = 1.0;
        p.config.s0 = 1.0;
        p.config.s1 = 0.25;
        p.config.scheme_kinds = {SchemeKind::milstein};
        p.config.seed = 2026080801;
        p.asserts = {{"slope.milstein.p2", -1.10, -0.85, "smooth Milstein slope in [-1.10,-0.85]"}};
        presets.push_back(p);
    }
    {
        Preset p;
        p.name = "main-rate-a05";
        p.description = "Milstein vs Euler L2 rates for the alpha=0.5 Holder drift model";
        p.config = detail::rate_config_base();
        p.config.experiment_id = p.name;
        p.config.alpha = 0.5;
        p.config.amplitude = 2.0;
        p.config.frequency = 2.0;
        p.config.s0 = 1.0;
        p.config.s1 = 0.5;
        p.config.scheme_kinds = {SchemeKind::milstein, SchemeKind::euler};
        p.config.seed = 2026080802;
        p.asserts = {
            {"slope.milstein.p2", -0.90, -0.62, "Milstein slope consistent with -(1+a)/2 = -0.75"},
            {"slope.euler.p2", -0.62, -0.40, "Euler slope consistent with -0.5"},
            {"sep.euler_minus_milstein.p2", 0.1, 1e300, "Milstein at least 0.1 steeper than Euler"},
        };
        presets.push_back(p);
    }
    {
        Preset p;
        p.name = "euler-baseline-a05";
        p.description = "Euler baseline on the alpha=0.5 model (same lattice seed as main-rate-a05)";
        p.config = detail::rate_config_base();
        p.config.experiment_id = p.name;
        p.config.alpha = 0.5;
        p.config.amplitude = 2.0;
        p.config.frequency = 2.0;
        p.config.s0 = 1.0;
        p.config.s1 = 0.5;
        p.config.scheme_kinds = {SchemeKind::euler};
        p.config.seed = 2026080802;
        p.asserts = {{"slope.euler.p2", -0.62, -0.40, "Euler slope consistent with -0.5"}};
        presets.push_back(p);
    }
    {
        Preset p;
        p.name = "main-rate-a025";
        p.description = "Milstein rate for the alpha=0.25 model";
        p.config = detail::rate_config_base();
        p.config.experiment_id = p.name;
        p.config.alpha = 0.25;
        p.config.amplitude = 2.0;
        p.config.frequency = 2.0;
        p.config.s0 = 1.0;
        p.config.s1 = 0.5;
        p.config.scheme_kinds = {SchemeKind::milstein};
        p.config.seed = 2026080803;
        p.asserts = {{"slope.milstein.p2", -0.775, -0.475, "slope within 0.15 of -0.625"}};
        presets.push_back(p);
    }
    {
        Preset p;
        p.name = "main-rate-a075";
        p.description = "Milstein rate for the alpha=0.75 model";
        p.config = detail::rate_config_base();
        p.config.experiment_id = p.name;
        p.config.alpha = 0.75;
        p.config.amplitude = 2.0;
        p.config.frequency = 2.0;
        p.config.s0 = 1.0;
        p.config.s1 = 0.5;
        p.config.scheme_kinds = {SchemeKind::milstein};
        p.config.seed = 2026080804;
        p.asserts = {{"slope.milstein.p2", -1.025, -0.725, "slope within 0.15 of -0.875"}};
        presets.push_back(p);
    }
    {
        Preset p;
        p.name = "moment-scaling-a05";
        p.description = "L4 increment scaling of the Milstein path (expected slope 1/2)";
        p.config.experiment_id = p.name;
        p.config.mode = "moments";
        p.config.alpha = 0.5;
        p.config.amplitude = 2.0;
        p.config.frequency = 2.0;
        p.config.s0 = 1.0;
        p.config.s1 = 0.5;
        p.config.d = 1;
        p.config.d1 = 1;
        p.config.x0 = {0.3};
        p.config.scheme_kinds = {SchemeKind::milstein};
        p.config.levels = {6};
        p.config.level_ref = 12;
        p.config.p_orders = {4.0};
        p.config.separation_levels = {2, 3, 4, 5, 6, 7, 8, 9, 10};
        p.config.path_count = 100000;
        p.config.seed = 2026080805;
        p.asserts = {{"slope.moments.m4", 0.45, 0.55, "increment L4 scaling slope in [0.45,0.55]"}};
        presets.push_back(p);
    }
    {
        Preset p;
        p.name = "local-expansion-smooth";
        p.description = "One-step expansion residual: L4 norm decays like 1/n for smooth f";
        p.config = detail::rate_config_base();
        p.config.experiment_id = p.name;
        p.config.mode = "functional";
        p.config.functional = "local-expansion";
        p.config.alpha = 0.5;
        p.config.amplitude = 2.0;
        p.config.frequency = 2.0;
        p.config.s0 = 1.0;
        p.config.s1 = 0.5;
        p.config.scheme_kinds = {SchemeKind::milstein};
        p.config.p_orders = {4.0};
        p.config.path_count = 2000;
        p.config.seed = 2026080806;
        p.asserts = {{"slope.local_expansion.p4", -1e300, -0.9, "residual L4 slope <= -0.9"}};
        presets.push_back(p);
    }
    {
        Preset p;
        p.name = "functional-rate-a05";
        p.description = "Additive functional sup-norm rate for the alpha=0.5 model";
        p.config = detail::rate_config_base();
        p.config.experiment_id = p.name;
        p.config.mode = "functional";
        p.config.functional = "additive";
        p.config.alpha = 0.5;
        p.config.amplitude = 2.0;
        p.config.frequency = 2.0;
        p.config.s0 = 1.0;
        p.config.s1 = 0.5;
        p.config.scheme_kinds = {SchemeKind::milstein};
        p.config.p_orders = {2.0};
        p.config.path_count = 10000;
        p.config.seed = 2026080807;
        p.asserts = {{"slope.functional.p2", -1e300, -0.6, "functional L2 slope <= -0.6"}};
        presets.push_back(p);
    }
    {
        Preset p;
        p.name = "omega-decay";
        p.description = "Exponential decay of P(good event fails) in n";
        p.config.experiment_id = p.name;
        p.config.mode = "omega";
        p.config.alpha = 0.5;
        p.config.amplitude = 0.0;
        p.config.s0 = 1.0;
        p.config.s1 = 0.5;
        p.config.d = 1;
        p.config.d1 = 1;
        p.config.levels = {3, 4, 5, 6, 7};
        p.config.level_ref = 13;
        p.config.path_count = 100000;
        p.config.kappa = 0.8;
        p.config.seed = 2026080808;
        p.asserts = {
            {"slope.omega", -1e300, -1e-9, "log P(miss) decreasing in n"},
            {"r2.omega", 0.9, 1.0, "decay fit r2 >= 0.9"},
        };
        presets.push_back(p);
    }
    {
        Preset p;
        p.name = "girsanov-mean";
        p.description = "Girsanov weight has unit mean on the truncated driftless scheme";
        p.config.experiment_id = p.name;
        p.config.mode = "girsanov";
        p.config.alpha = 0.5;
        p.config.amplitude = 0.4;
        p.config.frequency = 1.0;
        p.config.s0 = 1.0;
        p.config.s1 = 0.25;
        p.config.d = 1;
        p.config.d1 = 1;
        p.config.x0 = {0.3};
        p.config.scheme_kinds = {SchemeKind::milstein_truncated};
        p.config.levels = {6};
        p.config.level_ref = 12;
        p.config.path_count = 100000;
        p.config.seed = 2026080809;
        p.asserts = {{"dev_in_se.girsanov", 0.0, 3.0, "E[rho] within 3 bootstrap SE of 1"}};
        presets.push_back(p);
    }
    {
        Preset p;
        p.name = "validate-a05";
        p.description = "Assumption validation for the shipped alpha=0.5 model";
        p.config.experiment_id = p.name;
        p.config.mode = "validate";
        p.config.alpha = 0.5;
        p.config.amplitude = 2.0;
        p.config.frequency = 2.0;
        p.config.s0 = 1.0;
        p.config.s1 = 0.5;
        p.config.d = 1;
        p.config.d1 = 1;
        p.config.probe_count = 10000;
        p.config.seed = 2026080810;
        presets.push_back(p);
    }
    return presets;
}

inline ExperimentConfig preset(const std::string& name) {
    const auto presets = preset_catalog();
    for (const auto& p : presets)
        if (p.name == name) return p.config;
    std::string names;
    for (const auto& p : presets) names += (names.empty() ? "" : ", ") + p.name;
    throw ConfigurationError("unknown preset '" + name + "'; available: " + names);
}

inline const Preset& preset_entry(const std::string& name) {
    static const std::vector<Preset> presets = preset_catalog();
    for (const auto& p : presets)
        if (p.name == name) return p;
    throw ConfigurationError("unknown preset: " + name);
}

struct AssertionOutcome {
    std::string label;
    std::string key;
    double value = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    bool pass = false;
};

inline std::vector<AssertionOutcome> evaluate_asserts(const Preset& preset,
                                                      const RunResult& result) {
    std::vector<AssertionOutcome> outcomes;
    for (const auto& window : preset.asserts) {
        AssertionOutcome o;
        o.label = window.label;
        o.key = window.key;
        o.lo = window.lo;
        o.hi = window.hi;
        const auto it = result.metrics.find(window.key);
        if (it == result.metrics.end()) {
            o.pass = false;
            o.value = std::nan("");
        } else {
            o.value = it->second;
            o.pass = (o.value >= window.lo && o.value <= window.hi);
        }
        outcomes.push_back(o);
    }
    return outcomes;
}

}  // namespace sdelab

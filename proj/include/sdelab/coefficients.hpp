#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>

#include "sdelab/errors.hpp"
#include "sdelab/linalg.hpp"
#include "sdelab/rng.hpp"

namespace sdelab {

// Coefficient fields of the SDE dX = b(X) dt + sigma(X) dW together with the
// metadata the standing assumptions talk about: the drift Holder exponent
// alpha, an ellipticity constant lambda certifying
//     lambda |xi|^2 <= <sigma sigma* xi, xi> <= lambda^{-1} |xi|^2,
// and a bound K >= ||sigma||_{C^1}. The diffusion gradient is analytic and
// is cross-checked against finite differences by the validator below.
//
// Evaluation functions write into caller-owned buffers and are pure; fields
// are immutable after construction and safe to share across threads.

struct CoefficientField {
    int dim_state = 1;   // d
    int dim_noise = 1;   // d1 >= d
    std::function<void(const double* x, double* out)> drift;               // R^d -> R^d
    std::function<void(const double* x, Mat& out)> diffusion;              // R^d -> R^{d x d1}
    std::function<void(const double* x, Tensor3& out)> diffusion_gradient; // (i,j,m) -> d_m sigma^{ij}
    double alpha = 1.0;         // drift Holder exponent, in (0,1]
    double lambda = 1.0;        // ellipticity constant, in (0,1]
    double k_bound = 1.0;       // K >= ||sigma||_{C^1}
    double drift_bound = 0.0;   // declared sup |b|
    double drift_holder = 0.0;  // declared Holder seminorm [b]_alpha
};

// Scalar cutoff chi: identity on [-kappa/2, kappa/2], zero outside
// (-kappa, kappa), |chi(x)| <= |x| everywhere. The transition ramp is
// x * (1 - S(u)) with the 7th-order smoothstep S, so the joints are C^3 and
// both derivatives have closed forms. Plateau and zero regions return the
// argument and 0.0 exactly, not approximately.
struct Cutoff {
    double kappa = 0.0;

    double evaluate(double x) const {
        const double ax = std::fabs(x);
        if (ax <= 0.5 * kappa) return x;
        if (ax >= kappa) return 0.0;
        const double u = (ax - 0.5 * kappa) / (0.5 * kappa);
        const double s = ((( -20.0 * u + 70.0) * u - 84.0) * u + 35.0) * u * u * u * u;
        return x * (1.0 - s);
    }

    double derivative(double x) const {
        const double ax = std::fabs(x);
        if (ax < 0.5 * kappa) return 1.0;
        if (ax > kappa) return 0.0;
        const double u = (ax - 0.5 * kappa) / (0.5 * kappa);
        const double s = ((( -20.0 * u + 70.0) * u - 84.0) * u + 35.0) * u * u * u * u;
        const double om = 1.0 - u;
        const double sp = 140.0 * u * u * u * om * om * om;
        return (1.0 - s) - (2.0 * ax / kappa) * sp;
    }
};

// kappa := lambda / (4 K d^2).
inline Cutoff make_cutoff(double lambda, double k_bound, int dim_state) {
    if (!(lambda > 0.0) || !(k_bound > 0.0) || dim_state < 1)
        throw InvalidParameterError("make_cutoff: lambda, k_bound, dim_state must be positive");
    Cutoff c;
    c.kappa = lambda / (4.0 * k_bound * static_cast<double>(dim_state) * static_cast<double>(dim_state));
    return c;
}

// ---------------------------------------------------------------------------
// Test families. The componentwise drift
//     b_i(x) = amplitude * sgn(sin(freq x_i)) * |sin(freq x_i)|^alpha
// is bounded by amplitude, periodic, and genuinely C^alpha but not better for
// alpha < 1 (the sign change at each zero of sin has exactly that roughness).
// Its Holder seminorm is amplitude * freq^alpha * 2^{1-alpha}, attained in
// the small-distance limit across a zero crossing.

struct DriftPart {
    int dim_state = 1;
    std::function<void(const double* x, double* out)> drift;
    double alpha = 1.0;
    double bound = 0.0;          // sup |b|
    double holder_seminorm = 0.0;
};

struct DiffusionPart {
    int dim_state = 1;
    int dim_noise = 1;
    std::function<void(const double* x, Mat& out)> diffusion;
    std::function<void(const double* x, Tensor3& out)> gradient;
    double lambda = 1.0;
    double k_bound = 1.0;
};

inline double signed_power(double s, double alpha) {
    if (s == 0.0) return 0.0;
    const double a = std::fabs(s);
    double p;
    if (alpha == 1.0)
        p = a;
    else if (alpha == 0.5)
        p = std::sqrt(a);
    else
        p = std::pow(a, alpha);
    return s > 0.0 ? p : -p;
}

inline DriftPart holder_drift_family(double alpha, double amplitude, double frequency,
                                     int dim_state) {
    if (!(alpha > 0.0) || alpha > 1.0)
        throw InvalidParameterError("holder_drift_family: alpha must lie in (0,1]");
    if (amplitude < 0.0 || !(frequency > 0.0) || dim_state < 1)
        throw InvalidParameterError("holder_drift_family: bad amplitude/frequency/dimension");
    DriftPart part;
    part.dim_state = dim_state;
    part.alpha = alpha;
    part.bound = amplitude;
    part.holder_seminorm = amplitude * std::pow(frequency, alpha) * std::pow(2.0, 1.0 - alpha);
    part.drift = [alpha, amplitude, frequency, dim_state](const double* x, double* out) {
        for (int i = 0; i < dim_state; ++i)
            out[i] = amplitude * signed_power(std::sin(frequency * x[i]), alpha);
    };
    return part;
}

inline DriftPart zero_drift(int dim_state) {
    DriftPart part;
    part.dim_state = dim_state;
    part.alpha = 1.0;
    part.drift = [dim_state](const double*, double* out) {
        for (int i = 0; i < dim_state; ++i) out[i] = 0.0;
    };
    return part;
}

// Diagonal diffusion sigma^{ii}(x) = s0 + s1 sin(x_i), embedded in the
// d x d1 rectangle, zero elsewhere. Smooth; for s0 > s1 >= 0 the constant
//     lambda = min((s0 - s1)^2, (s0 + s1)^{-2})
// certifies both sides of the uniform ellipticity sandwich.
inline DiffusionPart elliptic_diffusion_family(double s0, double s1, int dim_state,
                                               int dim_noise) {
    if (!(s0 > s1) || s1 < 0.0)
        throw EllipticityViolationError("elliptic_diffusion_family: requires s0 > s1 >= 0");
    if (dim_noise < dim_state || dim_state < 1)
        throw InvalidParameterError("elliptic_diffusion_family: requires d1 >= d >= 1");
    DiffusionPart part;
    part.dim_state = dim_state;
    part.dim_noise = dim_noise;
    const double lo = (s0 - s1) * (s0 - s1);
    const double hi = (s0 + s1) * (s0 + s1);
    part.lambda = std::min(lo, 1.0 / hi);
    part.k_bound = s0 + 2.0 * s1;  // sup|sigma| + sup|grad sigma|
    part.diffusion = [s0, s1, dim_state](const double* x, Mat& out) {
        out.set_zero();
        for (int i = 0; i < dim_state; ++i) out(i, i) = s0 + s1 * std::sin(x[i]);
    };
    part.gradient = [s1, dim_state](const double* x, Tensor3& out) {
        out.set_zero();
        for (int i = 0; i < dim_state; ++i) out(i, i, i) = s1 * std::cos(x[i]);
    };
    return part;
}

inline CoefficientField make_field(const DriftPart& drift, const DiffusionPart& diffusion) {
    if (drift.dim_state != diffusion.dim_state)
        throw InvalidParameterError("make_field: drift/diffusion dimension mismatch");
    CoefficientField f;
    f.dim_state = diffusion.dim_state;
    f.dim_noise = diffusion.dim_noise;
    f.drift = drift.drift;
    f.diffusion = diffusion.diffusion;
    f.diffusion_gradient = diffusion.gradient;
    f.alpha = drift.alpha;
    f.lambda = diffusion.lambda;
    f.k_bound = diffusion.k_bound;
    f.drift_bound = drift.bound;
    f.drift_holder = drift.holder_seminorm;
    return f;
}

// ---------------------------------------------------------------------------
// Assumption validator.

struct ValidationReport {
    int probe_count = 0;
    double rayleigh_min = 0.0;
    double rayleigh_max = 0.0;
    double holder_quotient = 0.0;   // largest sampled |b(x)-b(y)| / |x-y|^alpha
    double drift_sup = 0.0;         // largest sampled |b|
    double gradient_rel_error = 0.0;
    double box_lo = 0.0;
    double box_hi = 0.0;
    double declared_lambda = 0.0;
    double declared_k_bound = 0.0;
    double declared_drift_holder = 0.0;
    double declared_alpha = 0.0;
};

namespace detail {

inline std::string point_string(const double* x, int d) {
    std::ostringstream os;
    os << "(";
    for (int i = 0; i < d; ++i) os << (i ? ", " : "") << x[i];
    os << ")";
    return os.str();
}

}  // namespace detail

// Samples the probe box (default [-2pi, 2pi]^d, a full period of every
// shipped family) and checks:
//   (i)  Rayleigh quotients of sigma sigma* against [lambda, 1/lambda],
//   (ii) drift Holder quotients against the declared seminorm, using random
//        pairs plus near-diagonal pairs at distances 10^-k (the seminorm is
//        attained in the small-distance limit for these families),
//   (iii) the analytic diffusion gradient against central finite differences
//        at relative tolerance 1e-6.
// Throws AssumptionViolationError naming the failed check and witness point.
inline ValidationReport validate_assumptions(const CoefficientField& field, int probe_count,
                                             std::uint64_t rng_seed, double box_lo = -2.0 * M_PI,
                                             double box_hi = 2.0 * M_PI) {
    if (probe_count < 100)
        throw InvalidParameterError("validate_assumptions: probe_count must be >= 100");
    const int d = field.dim_state;
    const int d1 = field.dim_noise;
    SequenceRng rng(derive_seed(rng_seed, 0x76616c6964ull));

    ValidationReport report;
    report.probe_count = probe_count;
    report.box_lo = box_lo;
    report.box_hi = box_hi;
    report.rayleigh_min = 1e300;
    report.rayleigh_max = -1e300;
    report.declared_lambda = field.lambda;
    report.declared_k_bound = field.k_bound;
    report.declared_drift_holder = field.drift_holder;
    report.declared_alpha = field.alpha;

    Vec x(d), y(d), xi(d), bx(d), by(d);
    Mat sigma(d, d1), sig_plus(d, d1), sig_minus(d, d1);
    Tensor3 grad(d, d1, d);

    const double ray_tol = 1e-9;

    // (i) + (iii): pointwise checks at probe_count points.
    for (int probe = 0; probe < probe_count; ++probe) {
        for (int i = 0; i < d; ++i) x[i] = rng.uniform(box_lo, box_hi);

        // random unit direction
        double nrm = 0.0;
        while (nrm < 1e-8) {
            for (int i = 0; i < d; ++i) xi[i] = rng.normal();
            nrm = norm2(xi);
        }
        for (int i = 0; i < d; ++i) xi[i] /= nrm;

        field.diffusion(x.data(), sigma);
        // q = |sigma* xi|^2 = <sigma sigma* xi, xi>
        double q = 0.0;
        for (int j = 0; j < d1; ++j) {
            double s = 0.0;
            for (int i = 0; i < d; ++i) s += sigma(i, j) * xi[i];
            q += s * s;
        }
        report.rayleigh_min = std::min(report.rayleigh_min, q);
        report.rayleigh_max = std::max(report.rayleigh_max, q);
        if (q < field.lambda - ray_tol || q > 1.0 / field.lambda + ray_tol) {
            throw AssumptionViolationError(
                "ellipticity check failed: Rayleigh quotient " + std::to_string(q) +
                " outside [" + std::to_string(field.lambda) + ", " +
                std::to_string(1.0 / field.lambda) + "] at x = " + detail::point_string(x.data(), d));
        }

        // gradient vs central finite difference
        field.diffusion_gradient(x.data(), grad);
        const double h = 2e-6;
        for (int m = 0; m < d; ++m) {
            y = x;
            y[m] = x[m] + h;
            field.diffusion(y.data(), sig_plus);
            y[m] = x[m] - h;
            field.diffusion(y.data(), sig_minus);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d1; ++j) {
                    const double fd = (sig_plus(i, j) - sig_minus(i, j)) / (2.0 * h);
                    const double g = grad(i, j, m);
                    const double rel = std::fabs(fd - g) / (1.0 + std::fabs(g));
                    report.gradient_rel_error = std::max(report.gradient_rel_error, rel);
                    if (rel > 1e-6) {
                        throw AssumptionViolationError(
                            "diffusion gradient check failed: component (" + std::to_string(i) +
                            "," + std::to_string(j) + "," + std::to_string(m) +
                            ") analytic " + std::to_string(g) + " vs finite difference " +
                            std::to_string(fd) + " at x = " + detail::point_string(x.data(), d));
                    }
                }
        }

        // drift bound
        field.drift(x.data(), bx.data());
        const double bn = norm2(bx);
        report.drift_sup = std::max(report.drift_sup, bn);
        if (field.drift_bound > 0.0 && bn > field.drift_bound * (1.0 + 1e-9)) {
            throw AssumptionViolationError("drift bound check failed: |b| = " + std::to_string(bn) +
                                           " > declared " + std::to_string(field.drift_bound) +
                                           " at x = " + detail::point_string(x.data(), d));
        }
    }

    // (ii) Holder quotient: 1e5 random pairs plus 1e3 near-diagonal pairs at
    // distances 10^-k, k = 1..6.
    const double tol_factor = 1.0 + 1e-6;
    auto check_pair = [&](const Vec& a, const Vec& b2) {
        double dist = 0.0;
        for (int i = 0; i < d; ++i) dist += (a[i] - b2[i]) * (a[i] - b2[i]);
        dist = std::sqrt(dist);
        if (dist < 1e-14) return;
        field.drift(a.data(), bx.data());
        field.drift(b2.data(), by.data());
        double diff = 0.0;
        for (int i = 0; i < d; ++i) diff += (bx[i] - by[i]) * (bx[i] - by[i]);
        diff = std::sqrt(diff);
        const double quotient = diff / std::pow(dist, field.alpha);
        report.holder_quotient = std::max(report.holder_quotient, quotient);
        if (field.drift_holder > 0.0 && quotient > field.drift_holder * tol_factor + 1e-12) {
            throw AssumptionViolationError(
                "drift Holder check failed: quotient " + std::to_string(quotient) +
                " > declared seminorm " + std::to_string(field.drift_holder) + " at x = " +
                detail::point_string(a.data(), d) + ", y = " + detail::point_string(b2.data(), d));
        }
    };

    for (int pair = 0; pair < 100000; ++pair) {
        for (int i = 0; i < d; ++i) {
            x[i] = rng.uniform(box_lo, box_hi);
            y[i] = rng.uniform(box_lo, box_hi);
        }
        check_pair(x, y);
    }
    for (int pair = 0; pair < 1000; ++pair) {
        const double dist = std::pow(10.0, -(1 + pair % 6));
        for (int i = 0; i < d; ++i) x[i] = rng.uniform(box_lo, box_hi);
        double nrm = 0.0;
        while (nrm < 1e-8) {
            for (int i = 0; i < d; ++i) xi[i] = rng.normal();
            nrm = norm2(xi);
        }
        for (int i = 0; i < d; ++i) y[i] = x[i] + dist * xi[i] / nrm;
        check_pair(x, y);
    }

    return report;
}

}  // namespace sdelab

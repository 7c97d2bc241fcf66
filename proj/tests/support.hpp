#pragma once

// Hand-built coefficient fields for tests: geometric Brownian motion and
// piecewise/constant drifts that the shipped families do not cover.

#include <cmath>

#include "sdelab/coefficients.hpp"

namespace sdelab::testing {

// d = d1 = 1, b = 0, sigma(x) = c x. Exact solution x0 exp(c W_t - c^2 t / 2).
inline CoefficientField gbm_field(double c = 1.0) {
    CoefficientField f;
    f.dim_state = 1;
    f.dim_noise = 1;
    f.drift = [](const double*, double* out) { out[0] = 0.0; };
    f.diffusion = [c](const double* x, Mat& out) { out(0, 0) = c * x[0]; };
    f.diffusion_gradient = [c](const double*, Tensor3& out) { out(0, 0, 0) = c; };
    f.alpha = 1.0;
    f.lambda = 0.0;  // not elliptic; fine for scheme-level tests
    f.k_bound = 1.0;
    return f;
}

inline double gbm_exact(double x0, double c, double w, double t) {
    return x0 * std::exp(c * w - 0.5 * c * c * t);
}

// Constant drift and constant diagonal diffusion in any dimension.
inline CoefficientField const_field(int d, int d1, double drift, double sigma0) {
    CoefficientField f;
    f.dim_state = d;
    f.dim_noise = d1;
    f.drift = [d, drift](const double*, double* out) {
        for (int i = 0; i < d; ++i) out[i] = drift;
    };
    f.diffusion = [d, sigma0](const double*, Mat& out) {
        out.set_zero();
        for (int i = 0; i < out.rows; ++i) out(i, i) = sigma0;
    };
    f.diffusion_gradient = [](const double*, Tensor3& out) { out.set_zero(); };
    f.alpha = 1.0;
    f.lambda = sigma0 * sigma0;
    f.k_bound = sigma0 > 0 ? sigma0 : 1.0;
    f.drift_bound = std::fabs(drift) * std::sqrt(static_cast<double>(d));
    (void)d1;
    return f;
}

}  // namespace sdelab::testing

#pragma once

#include <functional>

#include "beamscope/shrinkage.hpp"
#include "beamscope/types.hpp"

namespace beamscope::oracle {

// Posterior mean E{h | r} of the Gaussian-mixture prior evaluated by brute
// 2-D quadrature of the defining integrals over the complex plane. Each
// component is integrated on its own grid spanning +-8 posterior standard
// deviations; zero-variance components enter as analytic point masses.
// Test-side reference only; shares nothing with gm_shrinkage's closed form.
cx gm_posterior_oracle(cx r, const GmParams& theta, double sigma2, int points_per_axis = 400);

// Central-difference Wirtinger derivatives of f at r with step h on each of
// the real and imaginary axes: returns {df/dr, df/dr*}.
std::pair<cx, cx> wirtinger_fd(const std::function<cx(cx)>& f, cx r, double h = 1e-6);

// Central difference of a complex-valued function of one real parameter.
cx real_fd(const std::function<cx(double)>& f, double x, double h = 1e-6);

// |a-b| / max(|a|, |b|, scale_floor)
double rel_err(cx a, cx b, double scale_floor = 1e-6);
double rel_err(double a, double b, double scale_floor = 1e-6);

}  // namespace beamscope::oracle

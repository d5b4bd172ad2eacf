#include "beamscope/oracle.hpp"

#include <cmath>
#include <limits>

namespace beamscope::oracle {

namespace {

struct ComponentIntegral {
  double log_scale;  // log of the factor taken out of the sums
  cx num;            // integral of h * density, divided by exp(log_scale)
  double den;        // integral of the density, same scaling
};

ComponentIntegral integrate_component(cx r, cx mu, double var, double sigma2, int pts) {
  ComponentIntegral out{};
  if (var <= 0.0) {
    // point mass at mu: both integrals collapse onto the likelihood value
    out.log_scale = -std::norm(r - mu) / sigma2 - std::log(kPi * sigma2);
    out.num = mu;
    out.den = 1.0;
    return out;
  }
  const double vtot = sigma2 + var;
  const cx center = (sigma2 * mu + var * r) / vtot;            // posterior component mean
  const double post_var = sigma2 * var / vtot;                 // posterior component variance
  const double half = 8.0 * std::sqrt(post_var);
  const double step = 2.0 * half / pts;
  const double log_norm = -std::log(kPi * kPi * sigma2 * var);
  // peak of the log-integrand, used as the scaling reference
  out.log_scale =
      -std::norm(r - center) / sigma2 - std::norm(center - mu) / var + log_norm;
  cx num{};
  double den = 0.0;
  for (int i = 0; i < pts; ++i) {
    const double x = center.real() - half + (i + 0.5) * step;
    for (int j = 0; j < pts; ++j) {
      const double y = center.imag() - half + (j + 0.5) * step;
      const cx h(x, y);
      const double logw =
          -std::norm(r - h) / sigma2 - std::norm(h - mu) / var + log_norm - out.log_scale;
      const double w = std::exp(logw);
      den += w;
      num += w * h;
    }
  }
  const double cell = step * step;
  out.num = num * cell;
  out.den = den * cell;
  return out;
}

}  // namespace

cx gm_posterior_oracle(cx r, const GmParams& theta, double sigma2, int points_per_axis) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("gm_posterior_oracle: sigma2 must be > 0");
  theta.validate();
  const RVec log_p = theta.log_probs();
  const RVec var = theta.variances();
  const int nc = theta.nc();

  std::vector<ComponentIntegral> parts(nc);
  double lmax = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < nc; ++k) {
    parts[k] = integrate_component(r, theta.means(k), var(k), sigma2, points_per_axis);
    parts[k].log_scale += log_p(k);
    lmax = std::max(lmax, parts[k].log_scale);
  }
  cx num{};
  double den = 0.0;
  for (int k = 0; k < nc; ++k) {
    const double w = std::exp(parts[k].log_scale - lmax);
    num += w * parts[k].num;
    den += w * parts[k].den;
  }
  return num / den;
}

std::pair<cx, cx> wirtinger_fd(const std::function<cx(cx)>& f, cx r, double h) {
  const cx fx = (f(r + cx(h, 0)) - f(r - cx(h, 0))) / (2.0 * h);
  const cx fy = (f(r + cx(0, h)) - f(r - cx(0, h))) / (2.0 * h);
  const cx j(0.0, 1.0);
  return {0.5 * (fx - j * fy), 0.5 * (fx + j * fy)};
}

cx real_fd(const std::function<cx(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

double rel_err(cx a, cx b, double scale_floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), scale_floor});
}

double rel_err(double a, double b, double scale_floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), scale_floor});
}

}  // namespace beamscope::oracle

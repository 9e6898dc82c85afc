#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "w2s/errors.hpp"
#include "w2s/logistic.hpp"

namespace w2s {

namespace {

using boost::math::quadrature::gauss_kronrod;

constexpr double kInvSqrt2Pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
constexpr double kTol = 1e-13;
constexpr unsigned kMaxDepth = 20;

double phi(double g) { return kInvSqrt2Pi * std::exp(-0.5 * g * g); }

}  // namespace

// With z = s g and k = beta s:
//   q = s * int_0^inf tanh(k g / 2) g phi(g) dg
//     = s * (1/sqrt(2 pi) - (1/k^2) int_0^inf 2 u phi(u / k) / (1 + e^u) du).
// The first form is used for k <= 1, the second (no cancellation issue once
// the tanh factor saturates) for k > 1.
double gaussian_logit_moment(double s, double beta) {
  if (!(s >= 0.0) || !(beta > 0.0)) throw UsageError("gaussian_logit_moment: need s >= 0, beta > 0");
  if (s == 0.0) return 0.0;
  const double k = beta * s;
  const double inf = std::numeric_limits<double>::infinity();
  if (k <= 1.0) {
    auto f = [k](double g) { return std::tanh(0.5 * k * g) * g * phi(g); };
    return s * gauss_kronrod<double, 61>::integrate(f, 0.0, inf, kMaxDepth, kTol);
  }
  auto f = [k](double u) { return 2.0 * u * phi(u / k) / (1.0 + std::exp(u)); };
  const double tail = gauss_kronrod<double, 61>::integrate(f, 0.0, inf, kMaxDepth, kTol);
  return s * (kInvSqrt2Pi - tail / (k * k));
}

}  // namespace w2s

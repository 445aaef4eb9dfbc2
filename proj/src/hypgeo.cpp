#include "hvacf/hypgeo.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <limits>

#include "hvacf/errors.hpp"

namespace hvacf::hypgeo {

namespace {

void require_finite(std::span<const double> x, const char* what) {
  for (double v : x)
    if (!std::isfinite(v)) throw InvalidInput(std::string(what) + ": non-finite coordinate");
}

void require_same_dim(std::span<const double> x, std::span<const double> y, const char* what) {
  if (x.size() != y.size()) throw InvalidInput(std::string(what) + ": dimension mismatch");
}

void require_curved(Curvature c, const char* what) {
  if (c.flat()) throw InvalidInput(std::string(what) + ": requires c > 0");
}

// Unprojected Mobius addition.
Vec mobius_add_raw(std::span<const double> x, std::span<const double> y, double c) {
  const double xy = dot(x, y);
  const double x2 = dot(x, x);
  const double y2 = dot(y, y);
  const double a = 1.0 + c * (2.0 * xy + y2);
  const double b = 1.0 - c * x2;
  const double den = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (a * x[i] + b * y[i]) / den;
  return out;
}

void project_in_place(Vec& x, Curvature c) {
  const double n = norm(x);
  const double r = c.max_norm();
  if (n > r)
    for (double& v : x) v *= r / n;
}

}  // namespace

Curvature::Curvature(double c) : c_(c), sqrt_c_(std::sqrt(c)) {
  if (!(c >= 0.0) || !std::isfinite(c)) throw InvalidInput("curvature must be finite and >= 0");
}

double Curvature::max_norm() const {
  return flat() ? std::numeric_limits<double>::infinity() : (1.0 - kBallEps) / sqrt_c_;
}

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double norm(std::span<const double> x) { return std::sqrt(dot(x, x)); }

Vec mobius_add(std::span<const double> x, std::span<const double> y, Curvature c) {
  require_same_dim(x, y, "mobius_add");
  require_finite(x, "mobius_add");
  require_finite(y, "mobius_add");
  require_curved(c, "mobius_add");
  Vec out = mobius_add_raw(x, y, c.value());
  project_in_place(out, c);
  return out;
}

double hyp_distance(std::span<const double> x, std::span<const double> y, Curvature c) {
  require_same_dim(x, y, "hyp_distance");
  require_finite(x, "hyp_distance");
  require_finite(y, "hyp_distance");
  require_curved(c, "hyp_distance");
  Vec neg_x(x.begin(), x.end());
  for (double& v : neg_x) v = -v;
  const double arg = std::clamp(c.sqrt() * norm(mobius_add_raw(neg_x, y, c.value())), 0.0,
                                1.0 - kAtanhEps);
  return 2.0 / c.sqrt() * std::atanh(arg);
}

double conformal_factor(std::span<const double> q, Curvature c) {
  require_finite(q, "conformal_factor");
  const double s = c.value() * dot(q, q);
  if (s >= 1.0) throw InvalidInput("conformal_factor: point outside the ball");
  return 2.0 / (1.0 - s);
}

Vec exp_map(std::span<const double> q, std::span<const double> z, Curvature c) {
  require_same_dim(q, z, "exp_map");
  require_finite(q, "exp_map");
  require_finite(z, "exp_map");
  require_curved(c, "exp_map");
  const double zn = norm(z);
  if (zn == 0.0) return Vec(q.begin(), q.end());
  const double lambda = conformal_factor(q, c);
  const double coef = std::tanh(c.sqrt() * lambda * zn / 2.0) / (c.sqrt() * zn);
  Vec step(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) step[i] = coef * z[i];
  Vec out = mobius_add_raw(q, step, c.value());
  project_in_place(out, c);
  return out;
}

Vec project_to_ball(std::span<const double> x, Curvature c) {
  Vec out(x.begin(), x.end());
  project_in_place(out, c);
  return out;
}

double euclid_distance(std::span<const double> x, std::span<const double> y) {
  require_same_dim(x, y, "euclid_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace hvacf::hypgeo

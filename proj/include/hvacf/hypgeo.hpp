#pragma once

// Poincare-ball kernel. Points of the ball of curvature c satisfy
// c * |x|^2 < 1; every point this module returns is projected to norm at
// most (1 - kBallEps) / sqrt(c).

#include <span>
#include <vector>

namespace hvacf::hypgeo {

using Vec = std::vector<double>;

inline constexpr double kBallEps = 1e-5;
inline constexpr double kAtanhEps = 1e-7;

class Curvature {
 public:
  // Throws InvalidInput for negative or non-finite c.
  explicit Curvature(double c);

  double value() const { return c_; }
  double sqrt() const { return sqrt_c_; }
  bool flat() const { return c_ == 0.0; }
  // Largest norm a projected point may have; +inf when c == 0.
  double max_norm() const;

 private:
  double c_;
  double sqrt_c_;
};

Vec mobius_add(std::span<const double> x, std::span<const double> y, Curvature c);
double hyp_distance(std::span<const double> x, std::span<const double> y, Curvature c);
double conformal_factor(std::span<const double> q, Curvature c);
Vec exp_map(std::span<const double> q, std::span<const double> z, Curvature c);
Vec project_to_ball(std::span<const double> x, Curvature c);
double euclid_distance(std::span<const double> x, std::span<const double> y);

double dot(std::span<const double> x, std::span<const double> y);
double norm(std::span<const double> x);

}  // namespace hvacf::hypgeo

#pragma once

#include <array>
#include <span>
#include <vector>

namespace crashscene::spline {

using Vec2 = std::array<double, 2>;

// Natural cubic spline through (knot, value) with stored second
// derivatives. Linear beyond the end knots.
class CubicSpline2D {
 public:
  CubicSpline2D() = default;
  CubicSpline2D(std::vector<double> knots, std::vector<Vec2> values,
                std::vector<Vec2> second_derivatives);

  Vec2 value(double t) const;
  Vec2 derivative(double t) const;
  Vec2 second_derivative(double t) const;

  const std::vector<double>& knots() const { return knots_; }
  const std::vector<Vec2>& values() const { return values_; }
  const std::vector<Vec2>& second_derivatives() const { return second_; }
  bool empty() const { return knots_.empty(); }
  double front() const { return knots_.front(); }
  double back() const { return knots_.back(); }

 private:
  std::size_t segment(double t) const;

  std::vector<double> knots_;
  std::vector<Vec2> values_;
  std::vector<Vec2> second_;
};

// Cubic smoothing spline with knots at every sample (Reinsch). The residual
// budget form is used: the result is the smoothest natural cubic spline with
//   sum_i w_i * |y_i - f(t_i)|^2 <= residual_budget.
// A zero budget interpolates; a budget at or above the weighted straight-line
// residual returns that line. `weights` may be empty (all ones).
CubicSpline2D fit_smoothing_spline(std::span<const double> knots, std::span<const Vec2> values,
                                   std::span<const double> weights, double residual_budget);

// Penalized form for a fixed smoothing parameter lambda >= 0.
CubicSpline2D fit_penalized_spline(std::span<const double> knots, std::span<const Vec2> values,
                                   std::span<const double> weights, double lambda);

}  // namespace crashscene::spline

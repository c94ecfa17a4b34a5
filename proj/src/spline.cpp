#include "crashscene/spline.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>

#include "crashscene/errors.hpp"

namespace crashscene::spline {

CubicSpline2D::CubicSpline2D(std::vector<double> knots, std::vector<Vec2> values,
                             std::vector<Vec2> second_derivatives)
    : knots_(std::move(knots)), values_(std::move(values)), second_(std::move(second_derivatives)) {
  if (knots_.empty() || knots_.size() != values_.size() || knots_.size() != second_.size()) {
    throw ParameterError("spline knots, values and second derivatives must align");
  }
  for (std::size_t i = 1; i < knots_.size(); ++i) {
    if (!(knots_[i] > knots_[i - 1])) throw ParameterError("spline knots must increase strictly");
  }
}

std::size_t CubicSpline2D::segment(double t) const {
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
  const std::size_t idx = it == knots_.begin() ? 0 : static_cast<std::size_t>(it - knots_.begin()) - 1;
  return std::min(idx, knots_.size() - 2);
}

Vec2 CubicSpline2D::value(double t) const {
  if (knots_.size() == 1) return values_[0];
  if (t < knots_.front() || t > knots_.back()) {
    const bool before = t < knots_.front();
    const double edge = before ? knots_.front() : knots_.back();
    const Vec2 p = value(edge);
    const Vec2 d = derivative(edge);
    return {p[0] + d[0] * (t - edge), p[1] + d[1] * (t - edge)};
  }
  const std::size_t i = segment(t);
  const double h = knots_[i + 1] - knots_[i];
  const double a = (knots_[i + 1] - t) / h;
  const double b = 1.0 - a;
  Vec2 out;
  for (int k = 0; k < 2; ++k) {
    out[k] = a * values_[i][k] + b * values_[i + 1][k] +
             ((a * a * a - a) * second_[i][k] + (b * b * b - b) * second_[i + 1][k]) * h * h / 6.0;
  }
  return out;
}

Vec2 CubicSpline2D::derivative(double t) const {
  if (knots_.size() == 1) return {0.0, 0.0};
  const double tc = std::clamp(t, knots_.front(), knots_.back());
  const std::size_t i = segment(tc);
  const double h = knots_[i + 1] - knots_[i];
  const double a = (knots_[i + 1] - tc) / h;
  const double b = 1.0 - a;
  Vec2 out;
  for (int k = 0; k < 2; ++k) {
    out[k] = (values_[i + 1][k] - values_[i][k]) / h -
             (3.0 * a * a - 1.0) * h * second_[i][k] / 6.0 +
             (3.0 * b * b - 1.0) * h * second_[i + 1][k] / 6.0;
  }
  return out;
}

Vec2 CubicSpline2D::second_derivative(double t) const {
  if (knots_.size() == 1 || t < knots_.front() || t > knots_.back()) return {0.0, 0.0};
  const std::size_t i = segment(t);
  const double a = (knots_[i + 1] - t) / (knots_[i + 1] - knots_[i]);
  return {a * second_[i][0] + (1.0 - a) * second_[i + 1][0],
          a * second_[i][1] + (1.0 - a) * second_[i + 1][1]};
}

namespace {

struct Problem {
  std::span<const double> t;
  std::span<const Vec2> y;
  std::vector<double> w;
};

Problem make_problem(std::span<const double> knots, std::span<const Vec2> values,
                     std::span<const double> weights) {
  if (knots.empty() || knots.size() != values.size()) {
    throw ParameterError("smoothing spline needs matching, non-empty knots and values");
  }
  if (!weights.empty() && weights.size() != knots.size()) {
    throw ParameterError("smoothing spline weights must match the knots");
  }
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (!(knots[i] > knots[i - 1])) throw ParameterError("spline knots must increase strictly");
  }
  Problem p{knots, values, {}};
  p.w.assign(knots.size(), 1.0);
  if (!weights.empty()) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!(weights[i] > 0.0)) throw ParameterError("smoothing weights must be positive");
      p.w[i] = weights[i];
    }
  }
  return p;
}

// Weighted least-squares straight line f(t) = a + b t per coordinate.
CubicSpline2D fit_line(const Problem& p) {
  const std::size_t n = p.t.size();
  std::vector<Vec2> fitted(n), zeros(n, Vec2{0.0, 0.0});
  double sw = 0, st = 0, stt = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sw += p.w[i];
    st += p.w[i] * p.t[i];
    stt += p.w[i] * p.t[i] * p.t[i];
  }
  for (int k = 0; k < 2; ++k) {
    double sy = 0, sty = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sy += p.w[i] * p.y[i][k];
      sty += p.w[i] * p.t[i] * p.y[i][k];
    }
    const double det = sw * stt - st * st;
    const double b = n > 1 && det > 0 ? (sw * sty - st * sy) / det : 0.0;
    const double a = (sy - b * st) / sw;
    for (std::size_t i = 0; i < n; ++i) fitted[i][k] = a + b * p.t[i];
  }
  return {std::vector<double>(p.t.begin(), p.t.end()), fitted, zeros};
}

class ReinschSolver {
 public:
  explicit ReinschSolver(const Problem& p) : p_(p) {
    const std::size_t n = p.t.size();
    m_ = n - 2;
    std::vector<double> h(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) h[i] = p.t[i + 1] - p.t[i];
    std::vector<Eigen::Triplet<double>> q, r;
    for (std::size_t c = 0; c < m_; ++c) {
      const std::size_t k = c + 1;
      q.emplace_back(k - 1, c, 1.0 / h[k - 1]);
      q.emplace_back(k, c, -1.0 / h[k - 1] - 1.0 / h[k]);
      q.emplace_back(k + 1, c, 1.0 / h[k]);
      r.emplace_back(c, c, (h[k - 1] + h[k]) / 3.0);
      if (c + 1 < m_) {
        r.emplace_back(c, c + 1, h[k] / 6.0);
        r.emplace_back(c + 1, c, h[k] / 6.0);
      }
    }
    q_.resize(n, m_);
    q_.setFromTriplets(q.begin(), q.end());
    r_.resize(m_, m_);
    r_.setFromTriplets(r.begin(), r.end());
    Eigen::SparseMatrix<double> winv(n, n);
    std::vector<Eigen::Triplet<double>> wd;
    for (std::size_t i = 0; i < n; ++i) wd.emplace_back(i, i, 1.0 / p.w[i]);
    winv.setFromTriplets(wd.begin(), wd.end());
    winv_q_ = winv * q_;
    qt_winv_q_ = Eigen::SparseMatrix<double>(q_.transpose()) * winv_q_;
    y_.resize(n, 2);
    for (std::size_t i = 0; i < n; ++i) y_.row(i) << p.y[i][0], p.y[i][1];
    rhs_ = q_.transpose() * y_;
    ldlt_.analyzePattern(Eigen::SparseMatrix<double>(r_ + qt_winv_q_));
  }

  CubicSpline2D solve(double lambda, double* ssr) {
    const Eigen::SparseMatrix<double> m = r_ + lambda * qt_winv_q_;
    ldlt_.factorize(m);
    if (ldlt_.info() != Eigen::Success) throw FitError("smoothing spline system is singular");
    const Eigen::MatrixXd gamma = ldlt_.solve(rhs_);
    const Eigen::MatrixXd f = y_ - lambda * (winv_q_ * gamma);
    const std::size_t n = p_.t.size();
    std::vector<Vec2> fitted(n), second(n, Vec2{0.0, 0.0});
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      fitted[i] = {f(i, 0), f(i, 1)};
      total += p_.w[i] * ((y_(i, 0) - f(i, 0)) * (y_(i, 0) - f(i, 0)) +
                          (y_(i, 1) - f(i, 1)) * (y_(i, 1) - f(i, 1)));
    }
    for (std::size_t c = 0; c < m_; ++c) second[c + 1] = {gamma(c, 0), gamma(c, 1)};
    if (ssr) *ssr = total;
    return {std::vector<double>(p_.t.begin(), p_.t.end()), fitted, second};
  }

 private:
  const Problem& p_;
  std::size_t m_ = 0;
  Eigen::SparseMatrix<double> q_, r_, winv_q_, qt_winv_q_;
  Eigen::MatrixXd y_, rhs_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
};

double weighted_ssr(const Problem& p, const CubicSpline2D& s) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.t.size(); ++i) {
    const Vec2& f = s.values()[i];
    total += p.w[i] * ((p.y[i][0] - f[0]) * (p.y[i][0] - f[0]) +
                       (p.y[i][1] - f[1]) * (p.y[i][1] - f[1]));
  }
  return total;
}

}  // namespace

CubicSpline2D fit_penalized_spline(std::span<const double> knots, std::span<const Vec2> values,
                                   std::span<const double> weights, double lambda) {
  if (!(lambda >= 0.0)) throw ParameterError("lambda must be non-negative");
  const Problem p = make_problem(knots, values, weights);
  if (p.t.size() <= 2) {
    return {std::vector<double>(p.t.begin(), p.t.end()), std::vector<Vec2>(p.y.begin(), p.y.end()),
            std::vector<Vec2>(p.t.size(), Vec2{0.0, 0.0})};
  }
  ReinschSolver solver(p);
  return solver.solve(lambda, nullptr);
}

CubicSpline2D fit_smoothing_spline(std::span<const double> knots, std::span<const Vec2> values,
                                   std::span<const double> weights, double residual_budget) {
  if (!(residual_budget >= 0.0)) throw ParameterError("residual budget must be non-negative");
  const Problem p = make_problem(knots, values, weights);
  const std::size_t n = p.t.size();
  if (n <= 2) {
    return {std::vector<double>(p.t.begin(), p.t.end()), std::vector<Vec2>(p.y.begin(), p.y.end()),
            std::vector<Vec2>(n, Vec2{0.0, 0.0})};
  }
  CubicSpline2D line = fit_line(p);
  if (residual_budget >= weighted_ssr(p, line)) return line;

  ReinschSolver solver(p);
  if (residual_budget == 0.0) return solver.solve(0.0, nullptr);

  // SSR grows monotonically with lambda; bisect on log(lambda).
  const double spacing = (p.t.back() - p.t.front()) / static_cast<double>(n - 1);
  const double scale = spacing * spacing * spacing;
  double lo = std::log(1e-14 * scale);
  double hi = std::log(1e14 * scale);
  double ssr = 0.0;
  CubicSpline2D best = solver.solve(0.0, &ssr);
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    CubicSpline2D trial = solver.solve(std::exp(mid), &ssr);
    if (ssr <= residual_budget) {
      best = std::move(trial);
      lo = mid;
      if (residual_budget - ssr <= 1e-10 * residual_budget) break;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-12) break;
  }
  return best;
}

}  // namespace crashscene::spline

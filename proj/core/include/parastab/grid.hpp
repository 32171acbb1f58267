#pragma once

// One-dimensional space-time grids, the discrete elliptic operator
// Aq = (a q')' + b q' + c q with conormal (Neumann) boundary condition,
// Crank-Nicolson forward/adjoint solvers and discrete Sobolev norms.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "parastab/errors.hpp"

namespace parastab {

using SpatialField = std::vector<double>;

enum class Side { left, right };

class SpatialDomain {
 public:
  SpatialDomain(double x_min, double x_max, std::size_t cells, std::vector<Side> observed);

  /// Omega = (0,1) with the given observed boundary.
  static SpatialDomain unit(std::size_t cells, std::vector<Side> observed = {Side::left, Side::right});

  double x_min() const noexcept { return x_min_; }
  double x_max() const noexcept { return x_max_; }
  double length() const noexcept { return x_max_ - x_min_; }
  std::size_t cells() const noexcept { return cells_; }
  std::size_t nodes() const noexcept { return cells_ + 1; }
  double spacing() const noexcept { return h_; }
  double node(std::size_t i) const noexcept { return x_min_ + static_cast<double>(i) * h_; }

  /// Gamma, the observed part of the boundary, in left-to-right order.
  const std::vector<Side>& observed() const noexcept { return observed_; }
  bool observes(Side side) const noexcept;
  std::size_t boundary_node(Side side) const noexcept { return side == Side::left ? 0 : cells_; }

  SpatialField sample(const std::function<double(double)>& q) const;

  bool same_grid(const SpatialDomain& other) const noexcept;

 private:
  double x_min_;
  double x_max_;
  std::size_t cells_;
  double h_;
  std::vector<Side> observed_;
};

/// Uniform time samples t_n = origin + n * step, n = 0..steps.
struct TimeAxis {
  double origin = 0.0;
  double step = 0.0;
  std::size_t steps = 0;

  std::size_t levels() const noexcept { return steps + 1; }
  double time(std::size_t n) const noexcept { return origin + static_cast<double>(n) * step; }
  double end() const noexcept { return time(steps); }
  /// Index of t if it is a grid node (relative tolerance 1e-9 of the step).
  std::optional<std::size_t> index_of(double t) const noexcept;
  bool same_grid(const TimeAxis& other) const noexcept;
};

/// Time grid over (0, T + delta0) together with the measurement window
/// (T - delta1, T + delta1). The step count is raised from the requested
/// value until T - delta1, T and T + delta1 are all grid nodes.
class TimeWindow {
 public:
  TimeWindow(double final_time, double delta0, double delta1, std::size_t requested_steps);

  double final_time() const noexcept { return T_; }
  double delta0() const noexcept { return delta0_; }
  double delta1() const noexcept { return delta1_; }
  double horizon() const noexcept { return T_ + delta0_; }
  std::size_t requested_steps() const noexcept { return requested_; }
  std::size_t steps() const noexcept { return axis_.steps; }
  double step() const noexcept { return axis_.step; }
  const TimeAxis& axis() const noexcept { return axis_; }

  std::size_t final_index() const noexcept { return index_T_; }
  std::size_t window_begin() const noexcept { return index_lo_; }
  std::size_t window_end() const noexcept { return index_hi_; }
  std::size_t window_steps() const noexcept { return index_hi_ - index_lo_; }

  /// The shifted window (0, 2 delta1) on the same step.
  TimeAxis shifted_axis() const noexcept { return {0.0, axis_.step, window_steps()}; }
  /// Q_1 = (T - delta1, T + delta1) on the same step.
  TimeAxis measurement_axis() const noexcept;

 private:
  double T_;
  double delta0_;
  double delta1_;
  std::size_t requested_;
  TimeAxis axis_;
  std::size_t index_T_ = 0;
  std::size_t index_lo_ = 0;
  std::size_t index_hi_ = 0;
};

/// Samples over a space-time grid; rows are time levels, columns nodes.
class SpaceTimeField {
 public:
  SpaceTimeField(SpatialDomain domain, TimeAxis axis);
  SpaceTimeField(SpatialDomain domain, TimeAxis axis, std::vector<double> values);

  static SpaceTimeField sample(const SpatialDomain& domain, const TimeAxis& axis,
                               const std::function<double(double, double)>& q);

  const SpatialDomain& domain() const noexcept { return domain_; }
  const TimeAxis& axis() const noexcept { return axis_; }
  std::size_t levels() const noexcept { return axis_.levels(); }
  std::size_t nodes() const noexcept { return domain_.nodes(); }

  double operator()(std::size_t n, std::size_t i) const noexcept { return values_[n * nodes() + i]; }
  double& operator()(std::size_t n, std::size_t i) noexcept { return values_[n * nodes() + i]; }

  std::span<const double> snapshot(std::size_t n) const noexcept {
    return {values_.data() + n * nodes(), nodes()};
  }
  std::span<double> snapshot(std::size_t n) noexcept { return {values_.data() + n * nodes(), nodes()}; }
  std::vector<double> trace(std::size_t node) const;

  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& values() noexcept { return values_; }

  bool all_finite() const noexcept;
  bool same_grid(const SpaceTimeField& other) const noexcept;

 private:
  SpatialDomain domain_;
  TimeAxis axis_;
  std::vector<double> values_;
};

/// Time series of a field at the observed boundary points.
struct LateralTrace {
  TimeAxis axis;
  std::vector<Side> sides;
  std::vector<std::vector<double>> series;  // series[k] belongs to sides[k]
};

struct EllipticOperator {
  std::function<double(double)> diffusion;  // a(x)
  std::function<double(double)> drift;      // b(x)
  std::function<double(double)> reaction;   // c(x)
  double ellipticity_lower_bound = 1e-12;

  /// a = coefficient, b = c = 0.
  static EllipticOperator heat(double coefficient = 1.0);
};

/// Tridiagonal realization of A on the nodes of a SpatialDomain. The
/// conormal condition is built in through reflected ghost nodes, so with
/// c = 0 constants are in the kernel and, with b = 0, W*A is symmetric for
/// the trapezoid weights W.
class DiscreteOperator {
 public:
  const SpatialDomain& domain() const noexcept { return domain_; }
  std::size_t size() const noexcept { return diag_.size(); }
  std::span<const double> lower() const noexcept { return lower_; }  // lower[i] couples i -> i-1
  std::span<const double> diag() const noexcept { return diag_; }
  std::span<const double> upper() const noexcept { return upper_; }  // upper[i] couples i -> i+1

  bool self_adjoint() const noexcept { return self_adjoint_; }
  double max_reaction() const noexcept { return max_reaction_; }

  void apply(std::span<const double> q, std::span<double> out) const;
  SpatialField apply(std::span<const double> q) const;

 private:
  friend DiscreteOperator assemble_operator(const SpatialDomain&, const EllipticOperator&);
  explicit DiscreteOperator(SpatialDomain domain) : domain_(std::move(domain)) {}

  SpatialDomain domain_;
  std::vector<double> lower_;
  std::vector<double> diag_;
  std::vector<double> upper_;
  bool self_adjoint_ = true;
  double max_reaction_ = 0.0;
};

DiscreteOperator assemble_operator(const SpatialDomain& domain, const EllipticOperator& op);

/// Crank-Nicolson solution of u_t = A u + f on the window grid with u(.,0) = g.
SpaceTimeField forward_solve(const DiscreteOperator& op, const SpaceTimeField& source,
                             std::span<const double> initial, const TimeWindow& window);
SpaceTimeField forward_solve(const DiscreteOperator& op, std::span<const double> initial,
                             const TimeWindow& window);

/// Right-hand sides of the discrete adjoint problem. Each part is paired with
/// the state u by trapezoid quadrature: terminal with u(.,T) over Omega,
/// interior with u over Q, boundary[k] with the trace at observed side k over
/// (T - delta1, T + delta1).
struct AdjointPayload {
  std::optional<SpatialField> terminal;
  std::optional<SpaceTimeField> interior;
  std::vector<std::vector<double>> boundary;  // empty, or one series per observed side
};

struct AdjointSolution {
  /// Adjoint state, scaled so that for self-adjoint A it is the backward
  /// Crank-Nicolson evolution of the payload.
  SpaceTimeField state;
  /// d<u, payload>/d f(x_i, t_n) and d<u, payload>/d g(x_i).
  SpaceTimeField source_gradient;
  SpatialField initial_gradient;
};

AdjointSolution adjoint_solve(const DiscreteOperator& op, const AdjointPayload& payload,
                              const TimeWindow& window);

/// <u, payload> with the quadrature used by adjoint_solve.
double payload_pairing(const SpaceTimeField& u, const AdjointPayload& payload, const TimeWindow& window);

/// Restriction to Q_1 reindexed by t~ = t - T + delta1. Values are copied.
SpaceTimeField time_shift(const SpaceTimeField& field, const TimeWindow& window);
/// Inverse of time_shift: reattaches a field on (0, 2 delta1) to (T - delta1, T + delta1).
SpaceTimeField inverse_time_shift(const SpaceTimeField& field, const TimeWindow& window);

/// d/dt by centered differences, second-order one-sided at both time ends.
SpaceTimeField time_derivative(const SpaceTimeField& field);

/// Derivatives along a uniformly sampled line: centered in the interior,
/// second-order one-sided at the ends.
std::vector<double> first_difference(std::span<const double> q, double spacing);
std::vector<double> second_difference(std::span<const double> q, double spacing);

std::vector<double> trapezoid_weights(std::size_t points, double spacing);

double l2_space_norm(const SpatialDomain& domain, std::span<const double> q);
double l2_spacetime_norm(const SpaceTimeField& field);
double h2_space_norm(const SpatialDomain& domain, std::span<const double> q);
double h2_trace_norm(const LateralTrace& trace);

LateralTrace lateral_trace(const SpaceTimeField& u, const TimeWindow& window);

/// Max-norm residual of the Crank-Nicolson relation
/// (u^{n+1}-u^n)/k = A(u^n+u^{n+1})/2 + (f^n+f^{n+1})/2, relative to the
/// largest of |u_t|, |A u|, |f|. With interior_only the first and last time
/// intervals are skipped.
double relative_equation_residual(const DiscreteOperator& op, const SpaceTimeField& u,
                                  const SpaceTimeField& source, bool interior_only = false);

}  // namespace parastab

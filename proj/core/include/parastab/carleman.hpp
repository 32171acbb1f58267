#pragma once

// Carleman weight functions
//   rho = e^{lambda psi} / l,   theta = (e^{lambda psi} - e^{2 lambda |psi|}) / l
// on the full window l(t) = t (T + delta0 - t) and on the shifted window
// l~(t~) = t~ (2 delta1 - t~), together with a quadrature audit of both
// sides of the Carleman inequality.

#include <optional>
#include <string>
#include <vector>

#include "parastab/grid.hpp"

namespace parastab {

enum class BoundaryWeighting { exp_weighted, literal_truncated };

std::string to_string(BoundaryWeighting mode);
BoundaryWeighting parse_boundary_weighting(const std::string& text);  // "exp" | "literal"

struct WeightConfig {
  double lambda = 1.0;
  std::vector<double> s_values;  // empty: use default_s_values
  int p = 0;
  BoundaryWeighting boundary = BoundaryWeighting::exp_weighted;
  /// Endpoint cut for literal_truncated; default 4 k |window|.
  std::optional<double> l_cut;

  void validate() const;
};

/// psi(x) = (x - x0)/L + 1, or its mirror 2 - (x - x0)/L when only the left end is observed.
SpatialField build_psi(const SpatialDomain& domain);

/// rho and theta sampled on one time window. Each time level stores l, so
/// rho and theta are formed on demand; levels with l = 0 are unbounded.
class WeightField {
 public:
  WeightField(TimeAxis axis, std::vector<double> l, std::vector<double> dl, std::vector<double> exp_lambda_psi,
              double exp_2lambda_sup);

  const TimeAxis& axis() const noexcept { return axis_; }
  std::span<const double> l() const noexcept { return l_; }
  std::span<const double> dl() const noexcept { return dl_; }
  bool bounded(std::size_t n) const noexcept { return l_[n] > 0.0; }

  double rho(std::size_t n, std::size_t i) const;
  double theta(std::size_t n, std::size_t i) const;
  /// Closed-form d theta / dt.
  double dtheta(std::size_t n, std::size_t i) const;
  /// e^{2 s theta}, exactly 0 once the exponent drops below -700.
  double exp_weight(std::size_t n, std::size_t i, double s) const;

 private:
  void require_bounded(std::size_t n) const;

  TimeAxis axis_;
  std::vector<double> l_;
  std::vector<double> dl_;
  std::vector<double> e_psi_;
  double e_sup_;
};

struct CarlemanWeights {
  double lambda = 1.0;
  double delta1 = 0.0;
  SpatialField psi;
  double psi_sup = 0.0;
  double psi_min = 0.0;
  WeightField full;     // on (0, T + delta0)
  WeightField shifted;  // on (0, 2 delta1)
  double M = 0.0;
  double c1 = 0.0;
};

CarlemanWeights eval_weights(const WeightConfig& config, const TimeWindow& window, const SpatialDomain& domain);
/// Same with an explicitly supplied psi (must be positive).
CarlemanWeights eval_weights(const WeightConfig& config, const TimeWindow& window, const SpatialDomain& domain,
                             SpatialField psi);

struct WeightBoundReport {
  double max_theta_plus_M = 0.0;          // must be <= 0
  double sup_dtheta_over_rho2 = 0.0;      // empirical C in |d theta~ / dt~| <= C rho~^2
  double min_theta_mid_plus_c1 = 0.0;     // theta~(., delta1) >= -c1  <=>  >= 0
  bool theta_max_at_mid = true;           // theta~(x, t~) <= theta~(x, delta1)
  bool psi_positive = true;
  bool psi_gradient_nonzero = true;
};

WeightBoundReport check_weight_bounds(const CarlemanWeights& weights);

struct CarlemanSides {
  double lhs = 0.0;
  double rhs = 0.0;
  double interior_term = 0.0;  // part of rhs carried by f
  double boundary_term = 0.0;  // part of rhs carried by Gamma
  std::optional<double> equation_residual;
  bool residual_warning = false;
};

/// Both sides of the Carleman inequality for (u, f) on whichever window of
/// `weights` matches u's time axis. When `op` is given, the pair is checked
/// against the discrete equation and a warning is set if it is not a solution.
CarlemanSides carleman_sides(const SpaceTimeField& u, const SpaceTimeField& f, const CarlemanWeights& weights,
                             double s, int p, BoundaryWeighting mode, std::optional<double> l_cut = std::nullopt,
                             const DiscreteOperator* op = nullptr);

enum class SweepStatus { ok, degenerate, violation };
std::string to_string(SweepStatus status);

struct SweepRow {
  double s = 0.0;
  int p = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;  // NaN when degenerate, +inf on violation
  SweepStatus status = SweepStatus::ok;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  /// max / median of the finite ratios; NaN when there are none.
  double max_over_median = 0.0;
  double max_ratio = 0.0;
  std::size_t violations = 0;
  bool residual_warning = false;
};

SweepResult constant_sweep(const SpaceTimeField& u, const SpaceTimeField& f, const CarlemanWeights& weights,
                           const WeightConfig& config, const DiscreteOperator* op = nullptr);

/// s0 = 2/M, so that 2 s0 theta~ <= -4 on the shifted window.
double default_s0(const CarlemanWeights& weights);
std::vector<double> default_s_values(const CarlemanWeights& weights);
/// s1 = max(s0, 2 C_emp) with C_emp the largest finite sweep ratio.
double threshold_s1(double s0, const SweepResult& sweep);

}  // namespace parastab

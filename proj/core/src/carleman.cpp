#include "parastab/carleman.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace parastab {

std::string to_string(BoundaryWeighting mode) {
  return mode == BoundaryWeighting::exp_weighted ? "exp" : "literal";
}

BoundaryWeighting parse_boundary_weighting(const std::string& text) {
  if (text == "exp" || text == "exp_weighted") return BoundaryWeighting::exp_weighted;
  if (text == "literal" || text == "literal_truncated") return BoundaryWeighting::literal_truncated;
  throw ValidationError("boundary", "expected exp or literal, got '" + text + "'");
}

std::string to_string(SweepStatus status) {
  switch (status) {
    case SweepStatus::ok:
      return "ok";
    case SweepStatus::degenerate:
      return "degenerate";
    case SweepStatus::violation:
      return "violation";
  }
  return "ok";
}

void WeightConfig::validate() const {
  if (!(std::isfinite(lambda) && lambda > 0.0)) throw ValidationError("lambda", "must be positive");
  if (p != 0 && p != 1) throw ValidationError("p", "must be 0 or 1");
  for (std::size_t i = 0; i < s_values.size(); ++i) {
    if (!(std::isfinite(s_values[i]) && s_values[i] > 0.0)) throw ValidationError("s", "values must be positive");
    if (i > 0 && !(s_values[i] > s_values[i - 1])) throw ValidationError("s", "values must be strictly increasing");
  }
  if (l_cut && !(std::isfinite(*l_cut) && *l_cut >= 0.0)) throw ValidationError("l_cut", "must be nonnegative");
}

SpatialField build_psi(const SpatialDomain& domain) {
  const bool mirror = domain.observed().size() == 1 && domain.observed().front() == Side::left;
  return domain.sample([&](double x) {
    const double r = (x - domain.x_min()) / domain.length();
    return mirror ? 2.0 - r : r + 1.0;
  });
}

// ---------------------------------------------------------------------------

WeightField::WeightField(TimeAxis axis, std::vector<double> l, std::vector<double> dl,
                         std::vector<double> exp_lambda_psi, double exp_2lambda_sup)
    : axis_(axis), l_(std::move(l)), dl_(std::move(dl)), e_psi_(std::move(exp_lambda_psi)), e_sup_(exp_2lambda_sup) {}

void WeightField::require_bounded(std::size_t n) const {
  if (!bounded(n)) throw EndpointError(n);
}

double WeightField::rho(std::size_t n, std::size_t i) const {
  require_bounded(n);
  return e_psi_[i] / l_[n];
}

double WeightField::theta(std::size_t n, std::size_t i) const {
  require_bounded(n);
  return (e_psi_[i] - e_sup_) / l_[n];
}

double WeightField::dtheta(std::size_t n, std::size_t i) const {
  require_bounded(n);
  return -(e_psi_[i] - e_sup_) * dl_[n] / (l_[n] * l_[n]);
}

double WeightField::exp_weight(std::size_t n, std::size_t i, double s) const {
  const double exponent = 2.0 * s * theta(n, i);
  return exponent < -700.0 ? 0.0 : std::exp(exponent);
}

// ---------------------------------------------------------------------------

CarlemanWeights eval_weights(const WeightConfig& config, const TimeWindow& window, const SpatialDomain& domain) {
  return eval_weights(config, window, domain, build_psi(domain));
}

CarlemanWeights eval_weights(const WeightConfig& config, const TimeWindow& window, const SpatialDomain& domain,
                             SpatialField psi) {
  config.validate();
  if (psi.size() != domain.nodes()) throw ValidationError("psi", "size does not match the spatial grid");
  if (!std::all_of(psi.begin(), psi.end(), [](double v) { return std::isfinite(v) && v > 0.0; })) {
    throw ValidationError("psi", "must be positive");
  }

  const double lambda = config.lambda;
  const double sup = *std::max_element(psi.begin(), psi.end());
  const double min = *std::min_element(psi.begin(), psi.end());
  const double e_sup = std::exp(lambda * sup);
  const double e_2sup = std::exp(2.0 * lambda * sup);
  std::vector<double> e_psi(psi.size());
  std::transform(psi.begin(), psi.end(), e_psi.begin(), [&](double v) { return std::exp(lambda * v); });

  const double k = window.step();

  // Full window: l_n = t_n (T + delta0 - t_n) = n (N - n) k^2, exactly 0 at both ends.
  const std::size_t N = window.steps();
  std::vector<double> l(N + 1), dl(N + 1);
  for (std::size_t n = 0; n <= N; ++n) {
    const double a = static_cast<double>(n) * k;
    const double b = static_cast<double>(N - n) * k;
    l[n] = a * b;
    dl[n] = b - a;
  }

  // Shifted window: l~_j = delta1^2 - ((j - m/2) k)^2, maximal (= delta1^2) at t~ = delta1.
  const std::size_t m = window.window_steps();
  const std::size_t mid = m / 2;
  const double d1 = window.delta1();
  std::vector<double> ls(m + 1), dls(m + 1);
  for (std::size_t j = 0; j <= m; ++j) {
    const double offset = (static_cast<double>(j) - static_cast<double>(mid)) * k;
    ls[j] = (j == 0 || j == m) ? 0.0 : std::max(0.0, d1 * d1 - offset * offset);
    dls[j] = -2.0 * offset;
  }

  CarlemanWeights out{lambda,
                      d1,
                      std::move(psi),
                      sup,
                      min,
                      WeightField(window.axis(), std::move(l), std::move(dl), e_psi, e_2sup),
                      WeightField(window.shifted_axis(), std::move(ls), std::move(dls), e_psi, e_2sup),
                      (e_2sup - e_sup) / (d1 * d1),
                      (e_2sup - std::exp(lambda * min)) / (d1 * d1)};
  return out;
}

WeightBoundReport check_weight_bounds(const CarlemanWeights& weights) {
  WeightBoundReport report;
  const WeightField& w = weights.shifted;
  const std::size_t levels = w.axis().levels();
  const std::size_t nodes = weights.psi.size();
  const std::size_t mid = (levels - 1) / 2;

  report.max_theta_plus_M = -std::numeric_limits<double>::infinity();
  report.min_theta_mid_plus_c1 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < nodes; ++i) {
    const double theta_mid = w.theta(mid, i);
    report.min_theta_mid_plus_c1 = std::min(report.min_theta_mid_plus_c1, theta_mid + weights.c1);
    for (std::size_t j = 0; j < levels; ++j) {
      if (!w.bounded(j)) continue;
      const double theta = w.theta(j, i);
      report.max_theta_plus_M = std::max(report.max_theta_plus_M, theta + weights.M);
      if (theta > theta_mid) report.theta_max_at_mid = false;
      const double rho = w.rho(j, i);
      report.sup_dtheta_over_rho2 = std::max(report.sup_dtheta_over_rho2, std::abs(w.dtheta(j, i)) / (rho * rho));
    }
  }

  report.psi_positive = std::all_of(weights.psi.begin(), weights.psi.end(), [](double v) { return v > 0.0; });
  if (nodes >= 3) {
    const auto d = first_difference(weights.psi, 1.0);
    report.psi_gradient_nonzero = std::all_of(d.begin(), d.end(), [](double v) { return v != 0.0; });
  }
  return report;
}

// ---------------------------------------------------------------------------

CarlemanSides carleman_sides(const SpaceTimeField& u, const SpaceTimeField& f, const CarlemanWeights& weights,
                             double s, int p, BoundaryWeighting mode, std::optional<double> l_cut,
                             const DiscreteOperator* op) {
  if (!(std::isfinite(s) && s > 0.0)) throw ValidationError("s", "must be positive");
  if (p != 0 && p != 1) throw ValidationError("p", "must be 0 or 1");
  if (!u.same_grid(f)) throw ValidationError("f", "grid does not match u");

  const WeightField* w = nullptr;
  if (u.axis().steps == weights.full.axis().steps && u.axis().same_grid(weights.full.axis())) {
    w = &weights.full;
  } else if (u.axis().steps == weights.shifted.axis().steps &&
             std::abs(u.axis().step - weights.shifted.axis().step) <= 1e-12 * u.axis().step) {
    w = &weights.shifted;
  } else {
    throw ValidationError("u", "time grid matches neither Carleman window");
  }
  if (u.nodes() != weights.psi.size()) throw ValidationError("u", "spatial grid does not match psi");

  CarlemanSides out;
  const SpatialDomain& domain = u.domain();
  const std::size_t nodes = u.nodes();
  const std::size_t levels = u.levels();
  const double h = domain.spacing();
  const double k = u.axis().step;
  const auto wx = trapezoid_weights(nodes, h);
  const auto ut = time_derivative(u);
  const double cut = l_cut.value_or(4.0 * k * (u.axis().end() - u.axis().origin));

  std::vector<std::size_t> gamma_nodes;
  for (Side side : domain.observed()) gamma_nodes.push_back(domain.boundary_node(side));

  const double dp = static_cast<double>(p);
  // Interior time nodes carry the full step in the trapezoid rule; the endpoint
  // nodes have l = 0 and contribute nothing.
  for (std::size_t n = 1; n + 1 < levels; ++n) {
    if (!w->bounded(n)) continue;
    const auto snap = u.snapshot(n);
    const auto ux = first_difference(snap, h);
    const auto uxx = second_difference(snap, h);
    const auto src = f.snapshot(n);
    double lhs = 0.0;
    double interior = 0.0;
    for (std::size_t i = 0; i < nodes; ++i) {
      const double e = w->exp_weight(n, i, s);
      if (e == 0.0) continue;
      const double sr = s * w->rho(n, i);
      const double ut2 = ut(n, i) * ut(n, i);
      lhs += wx[i] * e *
             (std::pow(sr, dp - 1.0) * (ut2 + uxx[i] * uxx[i]) + std::pow(sr, dp + 1.0) * ux[i] * ux[i] +
              std::pow(sr, dp + 3.0) * snap[i] * snap[i]);
      interior += wx[i] * e * std::pow(sr, dp) * src[i] * src[i];
    }
    double boundary = 0.0;
    const bool keep = mode == BoundaryWeighting::exp_weighted || w->l()[n] >= cut;
    if (keep) {
      for (std::size_t g : gamma_nodes) {
        const double e = mode == BoundaryWeighting::exp_weighted ? w->exp_weight(n, g, s) : 1.0;
        if (e == 0.0) continue;
        const double sr = s * w->rho(n, g);
        boundary += e * (std::pow(sr, dp) * ut(n, g) * ut(n, g) + std::pow(sr, dp + 1.0) * ux[g] * ux[g] +
                         std::pow(sr, dp + 3.0) * snap[g] * snap[g]);
      }
    }
    out.lhs += k * lhs;
    out.interior_term += k * interior;
    out.boundary_term += k * boundary;
  }
  out.rhs = out.interior_term + out.boundary_term;

  if (op != nullptr) {
    out.equation_residual = relative_equation_residual(*op, u, f, true);
    out.residual_warning = *out.equation_residual > 1e-2;
  }
  return out;
}

SweepResult constant_sweep(const SpaceTimeField& u, const SpaceTimeField& f, const CarlemanWeights& weights,
                           const WeightConfig& config, const DiscreteOperator* op) {
  config.validate();
  const std::vector<double> s_values = config.s_values.empty() ? default_s_values(weights) : config.s_values;

  SweepResult result;
  std::vector<double> finite;
  for (std::size_t r = 0; r < s_values.size(); ++r) {
    const auto sides =
        carleman_sides(u, f, weights, s_values[r], config.p, config.boundary, config.l_cut, r == 0 ? op : nullptr);
    result.residual_warning = result.residual_warning || sides.residual_warning;
    SweepRow row{s_values[r], config.p, sides.lhs, sides.rhs, 0.0, SweepStatus::ok};
    if (sides.rhs == 0.0 && sides.lhs == 0.0) {
      row.status = SweepStatus::degenerate;
      row.ratio = std::numeric_limits<double>::quiet_NaN();
    } else if (sides.rhs == 0.0) {
      row.status = SweepStatus::violation;
      row.ratio = std::numeric_limits<double>::infinity();
      ++result.violations;
    } else {
      row.ratio = sides.lhs / sides.rhs;
      if (std::isfinite(row.ratio)) finite.push_back(row.ratio);
    }
    result.rows.push_back(row);
  }

  if (finite.empty()) {
    result.max_over_median = std::numeric_limits<double>::quiet_NaN();
    result.max_ratio = std::numeric_limits<double>::quiet_NaN();
  } else {
    std::sort(finite.begin(), finite.end());
    const std::size_t n = finite.size();
    const double median = n % 2 == 1 ? finite[n / 2] : 0.5 * (finite[n / 2 - 1] + finite[n / 2]);
    result.max_ratio = finite.back();
    result.max_over_median = median > 0.0 ? finite.back() / median : std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

double default_s0(const CarlemanWeights& weights) { return 2.0 / weights.M; }

std::vector<double> default_s_values(const CarlemanWeights& weights) {
  const double s0 = default_s0(weights);
  return {s0, 2.0 * s0, 4.0 * s0, 8.0 * s0};
}

double threshold_s1(double s0, const SweepResult& sweep) {
  double c = 0.0;
  for (const auto& row : sweep.rows) {
    if (std::isfinite(row.ratio)) c = std::max(c, row.ratio);
  }
  return std::max(s0, 2.0 * c);
}

}  // namespace parastab

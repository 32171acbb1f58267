#include "parastab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

namespace parastab {

EllipticityError::EllipticityError(std::size_t node, double x, double value, double bound)
    : Error("diffusion coefficient " + std::to_string(value) + " below ellipticity bound " +
            std::to_string(bound) + " at node " + std::to_string(node) + " (x = " + std::to_string(x) + ")"),
      node_(node),
      x_(x) {}

OffGridError::OffGridError(double t) : Error("time " + std::to_string(t) + " is not a grid node"), t_(t) {}

SingularStepError::SingularStepError(std::size_t step)
    : Error("singular Crank-Nicolson system at step " + std::to_string(step)), step_(step) {}

EndpointError::EndpointError(std::size_t time_index)
    : Error("Carleman weight evaluated where l(t) = 0 (time index " + std::to_string(time_index) + ")"),
      index_(time_index) {}

NonFiniteObjectiveError::NonFiniteObjectiveError(std::size_t iteration, std::string iterate_dump)
    : Error("non-finite objective at iteration " + std::to_string(iteration)),
      iteration_(iteration),
      dump_(std::move(iterate_dump)) {}

namespace {

constexpr double kGridTolerance = 1e-9;

bool near_integer(double r) { return std::abs(r - std::round(r)) <= kGridTolerance * std::max(1.0, std::abs(r)); }

bool close(double a, double b, double scale) { return std::abs(a - b) <= 1e-12 * std::max(1.0, scale); }

// LU factors of a tridiagonal matrix (Thomas algorithm).
class TridiagonalFactor {
 public:
  TridiagonalFactor(std::vector<double> sub, std::vector<double> diag, std::vector<double> sup)
      : sub_(std::move(sub)), sup_(std::move(sup)), inv_pivot_(diag.size()), cprime_(diag.size()) {
    const std::size_t n = diag.size();
    for (std::size_t i = 0; i < n; ++i) {
      const double coupling = (i > 0 ? sub_[i] * cprime_[i - 1] : 0.0);
      const double pivot = diag[i] - coupling;
      const double scale = std::abs(diag[i]) + std::abs(sub_[i]) + std::abs(sup_[i]);
      if (!(std::abs(pivot) > 1e-14 * scale)) {
        throw SingularStepError(1);
      }
      inv_pivot_[i] = 1.0 / pivot;
      cprime_[i] = sup_[i] * inv_pivot_[i];
    }
  }

  void solve(std::span<double> rhs) const {
    const std::size_t n = rhs.size();
    rhs[0] *= inv_pivot_[0];
    for (std::size_t i = 1; i < n; ++i) {
      rhs[i] = (rhs[i] - sub_[i] * rhs[i - 1]) * inv_pivot_[i];
    }
    for (std::size_t i = n - 1; i-- > 0;) {
      rhs[i] -= cprime_[i] * rhs[i + 1];
    }
  }

 private:
  std::vector<double> sub_;
  std::vector<double> sup_;
  std::vector<double> inv_pivot_;
  std::vector<double> cprime_;
};

// y = M x for M given by (sub, diag, sup).
void tridiagonal_multiply(std::span<const double> sub, std::span<const double> diag, std::span<const double> sup,
                          std::span<const double> x, std::span<double> y) {
  const std::size_t n = diag.size();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = diag[i] * x[i];
    if (i > 0) acc += sub[i] * x[i - 1];
    if (i + 1 < n) acc += sup[i] * x[i + 1];
    y[i] = acc;
  }
}

// The two Crank-Nicolson matrices B = I - (k/2) A and C = I + (k/2) A.
struct CrankNicolsonPair {
  std::vector<double> b_sub, b_diag, b_sup;
  std::vector<double> c_sub, c_diag, c_sup;

  CrankNicolsonPair(const DiscreteOperator& op, double k) {
    const std::size_t n = op.size();
    b_sub.resize(n);
    b_diag.resize(n);
    b_sup.resize(n);
    c_sub.resize(n);
    c_diag.resize(n);
    c_sup.resize(n);
    const double half = 0.5 * k;
    for (std::size_t i = 0; i < n; ++i) {
      b_sub[i] = -half * op.lower()[i];
      b_diag[i] = 1.0 - half * op.diag()[i];
      b_sup[i] = -half * op.upper()[i];
      c_sub[i] = half * op.lower()[i];
      c_diag[i] = 1.0 + half * op.diag()[i];
      c_sup[i] = half * op.upper()[i];
    }
  }

  // Transposes, in (sub, diag, sup) layout.
  static void transpose(const std::vector<double>& sub, const std::vector<double>& sup, std::vector<double>& tsub,
                        std::vector<double>& tsup) {
    const std::size_t n = sub.size();
    tsub.assign(n, 0.0);
    tsup.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0) tsub[i] = sup[i - 1];
      if (i + 1 < n) tsup[i] = sub[i + 1];
    }
  }
};

void require_window_grid(const SpatialDomain& domain, const TimeAxis& axis, const DiscreteOperator& op,
                         const TimeWindow& window, const char* what) {
  if (!domain.same_grid(op.domain())) {
    throw ValidationError(what, "spatial grid does not match the operator grid");
  }
  if (!axis.same_grid(window.axis())) {
    throw ValidationError(what, "time grid does not match the time window");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// SpatialDomain

SpatialDomain::SpatialDomain(double x_min, double x_max, std::size_t cells, std::vector<Side> observed)
    : x_min_(x_min), x_max_(x_max), cells_(cells), h_(0.0), observed_(std::move(observed)) {
  if (!(std::isfinite(x_min) && std::isfinite(x_max) && x_min < x_max)) {
    throw ValidationError("domain", "endpoints must be finite and strictly ordered");
  }
  if (cells < 8) {
    throw ValidationError("nx", "at least 8 cells are required");
  }
  if (observed_.empty()) {
    throw ValidationError("gamma", "observed boundary must be nonempty");
  }
  std::sort(observed_.begin(), observed_.end());
  observed_.erase(std::unique(observed_.begin(), observed_.end()), observed_.end());
  h_ = (x_max_ - x_min_) / static_cast<double>(cells_);
}

SpatialDomain SpatialDomain::unit(std::size_t cells, std::vector<Side> observed) {
  return SpatialDomain(0.0, 1.0, cells, std::move(observed));
}

bool SpatialDomain::observes(Side side) const noexcept {
  return std::find(observed_.begin(), observed_.end(), side) != observed_.end();
}

SpatialField SpatialDomain::sample(const std::function<double(double)>& q) const {
  SpatialField out(nodes());
  for (std::size_t i = 0; i < nodes(); ++i) out[i] = q(node(i));
  return out;
}

bool SpatialDomain::same_grid(const SpatialDomain& other) const noexcept {
  return cells_ == other.cells_ && close(x_min_, other.x_min_, length()) && close(x_max_, other.x_max_, length());
}

// ---------------------------------------------------------------------------
// TimeAxis / TimeWindow

std::optional<std::size_t> TimeAxis::index_of(double t) const noexcept {
  if (!(step > 0.0)) return std::nullopt;
  const double r = (t - origin) / step;
  if (!near_integer(r)) return std::nullopt;
  const double rounded = std::round(r);
  if (rounded < 0.0 || rounded > static_cast<double>(steps)) return std::nullopt;
  return static_cast<std::size_t>(rounded);
}

bool TimeAxis::same_grid(const TimeAxis& other) const noexcept {
  return steps == other.steps && close(step, other.step, step) && close(origin, other.origin, std::abs(end()));
}

TimeWindow::TimeWindow(double final_time, double delta0, double delta1, std::size_t requested_steps)
    : T_(final_time), delta0_(delta0), delta1_(delta1), requested_(requested_steps) {
  if (!(std::isfinite(final_time) && final_time > 0.0)) throw ValidationError("T", "must be positive");
  if (!(std::isfinite(delta0) && delta0 > 0.0)) throw ValidationError("delta0", "must be positive");
  if (!(std::isfinite(delta1) && delta1 > 0.0 && delta1 <= std::min(delta0, final_time))) {
    throw ValidationError("delta1", "must lie in (0, min(delta0, T)]");
  }
  if (requested_steps < 2) throw ValidationError("nt", "at least 2 time steps are required");

  const double horizon = T_ + delta0_;
  const double marks[3] = {T_ - delta1_, T_, T_ + delta1_};
  constexpr std::size_t kSearch = 200000;
  for (std::size_t n = requested_steps; n < requested_steps + kSearch; ++n) {
    const double k = horizon / static_cast<double>(n);
    bool on_grid = true;
    for (double m : marks) on_grid = on_grid && near_integer(m / k);
    if (!on_grid) continue;
    axis_ = TimeAxis{0.0, k, n};
    index_lo_ = static_cast<std::size_t>(std::round(marks[0] / k));
    index_T_ = static_cast<std::size_t>(std::round(marks[1] / k));
    index_hi_ = static_cast<std::size_t>(std::round(marks[2] / k));
    if (index_hi_ > n || index_lo_ >= index_T_ || index_T_ >= index_hi_) continue;
    return;
  }
  throw ValidationError("nt", "no step count places T - delta1, T, T + delta1 on the grid");
}

TimeAxis TimeWindow::measurement_axis() const noexcept {
  return TimeAxis{axis_.time(index_lo_), axis_.step, window_steps()};
}

// ---------------------------------------------------------------------------
// SpaceTimeField

SpaceTimeField::SpaceTimeField(SpatialDomain domain, TimeAxis axis)
    : domain_(std::move(domain)), axis_(axis), values_(axis_.levels() * domain_.nodes(), 0.0) {}

SpaceTimeField::SpaceTimeField(SpatialDomain domain, TimeAxis axis, std::vector<double> values)
    : domain_(std::move(domain)), axis_(axis), values_(std::move(values)) {
  if (values_.size() != axis_.levels() * domain_.nodes()) {
    throw ValidationError("field", "value count does not match the space-time grid");
  }
  if (!all_finite()) throw ValidationError("field", "values must be finite");
}

SpaceTimeField SpaceTimeField::sample(const SpatialDomain& domain, const TimeAxis& axis,
                                      const std::function<double(double, double)>& q) {
  SpaceTimeField out(domain, axis);
  for (std::size_t n = 0; n < axis.levels(); ++n) {
    const double t = axis.time(n);
    for (std::size_t i = 0; i < domain.nodes(); ++i) out(n, i) = q(domain.node(i), t);
  }
  if (!out.all_finite()) throw ValidationError("field", "sampled values must be finite");
  return out;
}

std::vector<double> SpaceTimeField::trace(std::size_t node) const {
  std::vector<double> out(levels());
  for (std::size_t n = 0; n < levels(); ++n) out[n] = (*this)(n, node);
  return out;
}

bool SpaceTimeField::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

bool SpaceTimeField::same_grid(const SpaceTimeField& other) const noexcept {
  return domain_.same_grid(other.domain_) && axis_.same_grid(other.axis_);
}

// ---------------------------------------------------------------------------
// Operator

EllipticOperator EllipticOperator::heat(double coefficient) {
  EllipticOperator op;
  op.diffusion = [coefficient](double) { return coefficient; };
  op.drift = [](double) { return 0.0; };
  op.reaction = [](double) { return 0.0; };
  return op;
}

DiscreteOperator assemble_operator(const SpatialDomain& domain, const EllipticOperator& op) {
  if (!op.diffusion) throw ValidationError("diffusion", "diffusion coefficient is required");
  if (!(op.ellipticity_lower_bound > 0.0)) throw ValidationError("ellipticity_lower_bound", "must be positive");

  const std::size_t n = domain.nodes();
  const double h = domain.spacing();
  const double bound = op.ellipticity_lower_bound;

  for (std::size_t i = 0; i < n; ++i) {
    const double a = op.diffusion(domain.node(i));
    if (!(a >= bound)) throw EllipticityError(i, domain.node(i), a, bound);
  }
  std::vector<double> a_mid(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double x = domain.node(i) + 0.5 * h;
    a_mid[i] = op.diffusion(x);
    if (!(a_mid[i] >= bound)) throw EllipticityError(i, x, a_mid[i], bound);
  }

  DiscreteOperator out(domain);
  out.lower_.assign(n, 0.0);
  out.diag_.assign(n, 0.0);
  out.upper_.assign(n, 0.0);
  const double inv_h2 = 1.0 / (h * h);
  double max_c = -INFINITY;
  bool self_adjoint = true;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = domain.node(i);
    const double b = op.drift ? op.drift(x) : 0.0;
    const double c = op.reaction ? op.reaction(x) : 0.0;
    if (!std::isfinite(b) || !std::isfinite(c)) throw ValidationError("operator", "coefficients must be finite");
    if (b != 0.0) self_adjoint = false;
    max_c = std::max(max_c, c);
    if (i == 0) {
      // Ghost node q_{-1} = q_1 with a_{-1/2} = a_{1/2}; the drift term vanishes.
      out.diag_[i] = -2.0 * a_mid[0] * inv_h2 + c;
      out.upper_[i] = 2.0 * a_mid[0] * inv_h2;
    } else if (i == n - 1) {
      out.diag_[i] = -2.0 * a_mid[n - 2] * inv_h2 + c;
      out.lower_[i] = 2.0 * a_mid[n - 2] * inv_h2;
    } else {
      out.lower_[i] = a_mid[i - 1] * inv_h2 - b / (2.0 * h);
      out.diag_[i] = -(a_mid[i - 1] + a_mid[i]) * inv_h2 + c;
      out.upper_[i] = a_mid[i] * inv_h2 + b / (2.0 * h);
    }
  }
  out.self_adjoint_ = self_adjoint;
  out.max_reaction_ = max_c;
  return out;
}

void DiscreteOperator::apply(std::span<const double> q, std::span<double> out) const {
  tridiagonal_multiply(lower_, diag_, upper_, q, out);
}

SpatialField DiscreteOperator::apply(std::span<const double> q) const {
  if (q.size() != size()) throw ValidationError("operator", "argument size mismatch");
  SpatialField out(size());
  apply(q, out);
  return out;
}

// ---------------------------------------------------------------------------
// Solvers

SpaceTimeField forward_solve(const DiscreteOperator& op, const SpaceTimeField& source,
                             std::span<const double> initial, const TimeWindow& window) {
  require_window_grid(source.domain(), source.axis(), op, window, "source");
  if (initial.size() != op.size()) throw ValidationError("initial", "size does not match the spatial grid");

  const std::size_t n = op.size();
  const double k = window.step();
  const CrankNicolsonPair cn(op, k);
  const TridiagonalFactor factor(cn.b_sub, cn.b_diag, cn.b_sup);

  SpaceTimeField u(op.domain(), window.axis());
  std::copy(initial.begin(), initial.end(), u.snapshot(0).begin());
  std::vector<double> rhs(n);
  for (std::size_t step = 0; step < window.steps(); ++step) {
    auto current = u.snapshot(step);
    tridiagonal_multiply(cn.c_sub, cn.c_diag, cn.c_sup, current, rhs);
    const auto f0 = source.snapshot(step);
    const auto f1 = source.snapshot(step + 1);
    for (std::size_t i = 0; i < n; ++i) rhs[i] += 0.5 * k * (f0[i] + f1[i]);
    factor.solve(rhs);
    std::copy(rhs.begin(), rhs.end(), u.snapshot(step + 1).begin());
  }
  if (!u.all_finite()) throw SingularStepError(window.steps());
  return u;
}

SpaceTimeField forward_solve(const DiscreteOperator& op, std::span<const double> initial, const TimeWindow& window) {
  return forward_solve(op, SpaceTimeField(op.domain(), window.axis()), initial, window);
}

namespace {

// Euclidean right-hand side R^n of the adjoint recursion: <u, payload> = sum_n R^n . u^n.
std::vector<double> payload_density(const DiscreteOperator& op, const AdjointPayload& payload,
                                    const TimeWindow& window) {
  const SpatialDomain& domain = op.domain();
  const std::size_t nodes = domain.nodes();
  const std::size_t levels = window.axis().levels();
  const auto wx = trapezoid_weights(nodes, domain.spacing());
  std::vector<double> density(levels * nodes, 0.0);

  if (payload.terminal) {
    if (payload.terminal->size() != nodes) throw ValidationError("terminal_payload", "size mismatch");
    const std::size_t nT = window.final_index();
    for (std::size_t i = 0; i < nodes; ++i) density[nT * nodes + i] += wx[i] * (*payload.terminal)[i];
  }
  if (payload.interior) {
    require_window_grid(payload.interior->domain(), payload.interior->axis(), op, window, "interior_source");
    const auto wt = trapezoid_weights(levels, window.step());
    for (std::size_t n = 0; n < levels; ++n) {
      for (std::size_t i = 0; i < nodes; ++i) density[n * nodes + i] += wt[n] * wx[i] * (*payload.interior)(n, i);
    }
  }
  if (!payload.boundary.empty()) {
    const auto& sides = domain.observed();
    if (payload.boundary.size() != sides.size()) {
      throw ValidationError("boundary_source", "one series per observed boundary point is required");
    }
    const std::size_t lo = window.window_begin();
    const std::size_t m = window.window_steps() + 1;
    const auto wq = trapezoid_weights(m, window.step());
    for (std::size_t s = 0; s < sides.size(); ++s) {
      const auto& series = payload.boundary[s];
      if (series.size() != m) throw ValidationError("boundary_source", "series length must match the window");
      const std::size_t node = domain.boundary_node(sides[s]);
      for (std::size_t j = 0; j < m; ++j) density[(lo + j) * nodes + node] += wq[j] * series[j];
    }
  }
  return density;
}

}  // namespace

AdjointSolution adjoint_solve(const DiscreteOperator& op, const AdjointPayload& payload, const TimeWindow& window) {
  const std::size_t nodes = op.size();
  const std::size_t steps = window.steps();
  const double k = window.step();
  const auto density = payload_density(op, payload, window);

  const CrankNicolsonPair cn(op, k);
  std::vector<double> bt_sub, bt_sup, ct_sub, ct_sup;
  CrankNicolsonPair::transpose(cn.b_sub, cn.b_sup, bt_sub, bt_sup);
  CrankNicolsonPair::transpose(cn.c_sub, cn.c_sup, ct_sub, ct_sup);
  const TridiagonalFactor factor_t(bt_sub, cn.b_diag, bt_sup);

  // lambda^N = R^N; mu^{n+1} = B^{-T} lambda^{n+1}; lambda^n = R^n + C^T mu^{n+1}.
  SpaceTimeField lambda(op.domain(), window.axis());
  SpaceTimeField mu(op.domain(), window.axis());
  std::copy_n(density.begin() + static_cast<std::ptrdiff_t>(steps * nodes), nodes, lambda.snapshot(steps).begin());
  std::vector<double> work(nodes);
  for (std::size_t n = steps; n-- > 0;) {
    auto next = lambda.snapshot(n + 1);
    auto mu_next = mu.snapshot(n + 1);
    std::copy(next.begin(), next.end(), mu_next.begin());
    factor_t.solve(mu_next);
    tridiagonal_multiply(ct_sub, cn.c_diag, ct_sup, mu_next, work);
    auto cur = lambda.snapshot(n);
    for (std::size_t i = 0; i < nodes; ++i) cur[i] = density[n * nodes + i] + work[i];
  }

  AdjointSolution out{SpaceTimeField(op.domain(), window.axis()), SpaceTimeField(op.domain(), window.axis()),
                      SpatialField(lambda.snapshot(0).begin(), lambda.snapshot(0).end())};
  for (std::size_t n = 0; n <= steps; ++n) {
    auto grad = out.source_gradient.snapshot(n);
    for (std::size_t i = 0; i < nodes; ++i) {
      double acc = 0.0;
      if (n >= 1) acc += mu(n, i);
      if (n + 1 <= steps) acc += mu(n + 1, i);
      grad[i] = 0.5 * k * acc;
    }
  }
  const auto wx = trapezoid_weights(nodes, op.domain().spacing());
  for (std::size_t n = 0; n <= steps; ++n) {
    for (std::size_t i = 0; i < nodes; ++i) out.state(n, i) = lambda(n, i) / wx[i];
  }
  return out;
}

double payload_pairing(const SpaceTimeField& u, const AdjointPayload& payload, const TimeWindow& window) {
  const SpatialDomain& domain = u.domain();
  const auto wx = trapezoid_weights(domain.nodes(), domain.spacing());
  double total = 0.0;
  if (payload.terminal) {
    const auto snap = u.snapshot(window.final_index());
    for (std::size_t i = 0; i < snap.size(); ++i) total += wx[i] * snap[i] * (*payload.terminal)[i];
  }
  if (payload.interior) {
    const auto wt = trapezoid_weights(u.levels(), u.axis().step);
    for (std::size_t n = 0; n < u.levels(); ++n) {
      for (std::size_t i = 0; i < u.nodes(); ++i) total += wt[n] * wx[i] * u(n, i) * (*payload.interior)(n, i);
    }
  }
  if (!payload.boundary.empty()) {
    const auto trace = lateral_trace(u, window);
    const auto wq = trapezoid_weights(trace.axis.levels(), trace.axis.step);
    for (std::size_t s = 0; s < trace.series.size(); ++s) {
      for (std::size_t j = 0; j < wq.size(); ++j) total += wq[j] * trace.series[s][j] * payload.boundary[s][j];
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// Time transforms

SpaceTimeField time_shift(const SpaceTimeField& field, const TimeWindow& window) {
  const double t_lo = window.final_time() - window.delta1();
  const double t_hi = window.final_time() + window.delta1();
  const auto lo = field.axis().index_of(t_lo);
  if (!lo) throw OffGridError(t_lo);
  const auto hi = field.axis().index_of(t_hi);
  if (!hi) throw OffGridError(t_hi);

  const TimeAxis shifted{0.0, field.axis().step, *hi - *lo};
  const std::size_t nodes = field.nodes();
  std::vector<double> values(field.values().begin() + static_cast<std::ptrdiff_t>(*lo * nodes),
                             field.values().begin() + static_cast<std::ptrdiff_t>((*hi + 1) * nodes));
  return SpaceTimeField(field.domain(), shifted, std::move(values));
}

SpaceTimeField inverse_time_shift(const SpaceTimeField& field, const TimeWindow& window) {
  const TimeAxis& axis = field.axis();
  if (axis.index_of(0.0) != std::size_t{0}) throw OffGridError(axis.origin);
  if (!axis.index_of(2.0 * window.delta1())) throw OffGridError(2.0 * window.delta1());
  const TimeAxis restored{window.final_time() - window.delta1(), axis.step, axis.steps};
  return SpaceTimeField(field.domain(), restored, field.values());
}

SpaceTimeField time_derivative(const SpaceTimeField& field) {
  const std::size_t levels = field.levels();
  if (levels < 3) throw ValidationError("field", "time derivative needs at least 3 time levels");
  const double inv2k = 1.0 / (2.0 * field.axis().step);
  SpaceTimeField out(field.domain(), field.axis());
  const std::size_t last = levels - 1;
  for (std::size_t i = 0; i < field.nodes(); ++i) {
    out(0, i) = (3.0 * (field(1, i) - field(0, i)) - (field(2, i) - field(1, i))) * inv2k;
    for (std::size_t n = 1; n < last; ++n) out(n, i) = (field(n + 1, i) - field(n - 1, i)) * inv2k;
    out(last, i) = (3.0 * (field(last, i) - field(last - 1, i)) - (field(last - 1, i) - field(last - 2, i))) * inv2k;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Differences, quadrature, norms

std::vector<double> first_difference(std::span<const double> q, double spacing) {
  const std::size_t n = q.size();
  if (n < 3) throw ValidationError("field", "first difference needs at least 3 points");
  std::vector<double> d(n);
  const double inv2h = 1.0 / (2.0 * spacing);
  d[0] = (3.0 * (q[1] - q[0]) - (q[2] - q[1])) * inv2h;
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (q[i + 1] - q[i - 1]) * inv2h;
  d[n - 1] = (3.0 * (q[n - 1] - q[n - 2]) - (q[n - 2] - q[n - 3])) * inv2h;
  return d;
}

std::vector<double> second_difference(std::span<const double> q, double spacing) {
  const std::size_t n = q.size();
  if (n < 4) throw ValidationError("field", "second difference needs at least 4 points");
  std::vector<double> d(n);
  const double inv_h2 = 1.0 / (spacing * spacing);
  d[0] = (2.0 * (q[0] - q[1]) - 3.0 * (q[1] - q[2]) + (q[2] - q[3])) * inv_h2;
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (q[i + 1] - 2.0 * q[i] + q[i - 1]) * inv_h2;
  d[n - 1] = (2.0 * (q[n - 1] - q[n - 2]) - 3.0 * (q[n - 2] - q[n - 3]) + (q[n - 3] - q[n - 4])) * inv_h2;
  return d;
}

std::vector<double> trapezoid_weights(std::size_t points, double spacing) {
  std::vector<double> w(points, spacing);
  if (!w.empty()) {
    w.front() *= 0.5;
    w.back() *= 0.5;
  }
  return w;
}

namespace {

double squared_l2(std::span<const double> q, double spacing) {
  const auto w = trapezoid_weights(q.size(), spacing);
  double acc = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) acc += w[i] * q[i] * q[i];
  return acc;
}

double squared_h2(std::span<const double> q, double spacing) {
  if (q.size() < 5) throw ValidationError("field", "H2 norms need at least 5 points");
  const auto d1 = first_difference(q, spacing);
  const auto d2 = second_difference(q, spacing);
  return squared_l2(q, spacing) + squared_l2(d1, spacing) + squared_l2(d2, spacing);
}

}  // namespace

double l2_space_norm(const SpatialDomain& domain, std::span<const double> q) {
  if (q.size() != domain.nodes()) throw ValidationError("field", "size does not match the spatial grid");
  return std::sqrt(squared_l2(q, domain.spacing()));
}

double l2_spacetime_norm(const SpaceTimeField& field) {
  const auto wt = trapezoid_weights(field.levels(), field.axis().step);
  double acc = 0.0;
  for (std::size_t n = 0; n < field.levels(); ++n) acc += wt[n] * squared_l2(field.snapshot(n), field.domain().spacing());
  return std::sqrt(acc);
}

double h2_space_norm(const SpatialDomain& domain, std::span<const double> q) {
  if (q.size() != domain.nodes()) throw ValidationError("field", "size does not match the spatial grid");
  return std::sqrt(squared_h2(q, domain.spacing()));
}

double h2_trace_norm(const LateralTrace& trace) {
  double acc = 0.0;
  for (const auto& series : trace.series) acc += squared_h2(series, trace.axis.step);
  return std::sqrt(acc);
}

LateralTrace lateral_trace(const SpaceTimeField& u, const TimeWindow& window) {
  const double t_lo = window.final_time() - window.delta1();
  const auto lo = u.axis().index_of(t_lo);
  if (!lo) throw OffGridError(t_lo);
  const auto hi = u.axis().index_of(window.final_time() + window.delta1());
  if (!hi) throw OffGridError(window.final_time() + window.delta1());

  LateralTrace out;
  out.axis = TimeAxis{u.axis().time(*lo), u.axis().step, *hi - *lo};
  out.sides = u.domain().observed();
  for (Side side : out.sides) {
    const std::size_t node = u.domain().boundary_node(side);
    std::vector<double> series(*hi - *lo + 1);
    for (std::size_t n = *lo; n <= *hi; ++n) series[n - *lo] = u(n, node);
    out.series.push_back(std::move(series));
  }
  return out;
}

double relative_equation_residual(const DiscreteOperator& op, const SpaceTimeField& u, const SpaceTimeField& source,
                                  bool interior_only) {
  if (!u.same_grid(source)) throw ValidationError("source", "grid does not match the state");
  if (!u.domain().same_grid(op.domain())) throw ValidationError("state", "grid does not match the operator");
  const std::size_t nodes = u.nodes();
  const double k = u.axis().step;
  SpatialField a0(nodes), a1(nodes);
  double residual = 0.0;
  double scale = 0.0;
  const std::size_t first = interior_only ? 1 : 0;
  const std::size_t skip = interior_only ? 2 : 1;
  for (std::size_t n = first; n + skip < u.levels(); ++n) {
    op.apply(u.snapshot(n), a0);
    op.apply(u.snapshot(n + 1), a1);
    for (std::size_t i = 0; i < nodes; ++i) {
      const double ut = (u(n + 1, i) - u(n, i)) / k;
      const double au = 0.5 * (a0[i] + a1[i]);
      const double f = 0.5 * (source(n, i) + source(n + 1, i));
      residual = std::max(residual, std::abs(ut - au - f));
      scale = std::max({scale, std::abs(ut), std::abs(au), std::abs(f)});
    }
  }
  return scale > 0.0 ? residual / scale : 0.0;
}

}  // namespace parastab

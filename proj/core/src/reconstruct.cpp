#include "parastab/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "parastab/field_io.hpp"

namespace parastab {

std::string to_string(ReconstructionMode mode) { return mode == ReconstructionMode::separable ? "separable" : "full"; }

ReconstructionMode parse_reconstruction_mode(const std::string& text) {
  if (text == "separable") return ReconstructionMode::separable;
  if (text == "full") return ReconstructionMode::full;
  throw ValidationError("mode", "expected separable or full, got '" + text + "'");
}

void InverseProblemSpec::validate(const TimeWindow& window) const {
  if (!(std::isfinite(alpha_f) && alpha_f >= 0.0)) throw ValidationError("alpha_f", "must be nonnegative");
  if (!(std::isfinite(alpha_g) && alpha_g >= 0.0)) throw ValidationError("alpha_g", "must be nonnegative");
  if (!(std::isfinite(noise_level) && noise_level >= 0.0)) throw ValidationError("noise", "must be nonnegative");
  if (!(std::isfinite(grad_tol) && grad_tol >= 0.0)) throw ValidationError("grad_tol", "must be nonnegative");
  if (mode == ReconstructionMode::full && !(std::isfinite(C0) && C0 >= 0.0)) {
    throw ValidationError("C0", "must be nonnegative");
  }
  if (mode == ReconstructionMode::separable && sigma) {
    const TimeAxis& axis = window.axis();
    const double sT = sigma(window.final_time());
    if (!(std::isfinite(sT) && sT != 0.0)) throw ValidationError("sigma", "sigma(T) must be nonzero");
    std::vector<double> samples(axis.levels());
    for (std::size_t n = 0; n < axis.levels(); ++n) samples[n] = sigma(axis.time(n));
    // Discrete |sigma'| <= C0 |sigma(T)|, the separable form of the source condition.
    const auto ds = first_difference(samples, axis.step);
    for (double d : ds) {
      if (!(std::abs(d) <= C0 * std::abs(sT) * (1.0 + 1e-9) + 1e-12)) {
        throw ValidationError("sigma", "violates |sigma'| <= C0 |sigma(T)|");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Parameterization

namespace {

std::vector<double> cosine_basis(const SpatialDomain& domain, std::size_t modes) {
  std::vector<double> basis(domain.nodes() * modes);
  for (std::size_t i = 0; i < domain.nodes(); ++i) {
    const double r = (domain.node(i) - domain.x_min()) / domain.length();
    for (std::size_t j = 0; j < modes; ++j) basis[i * modes + j] = std::cos(static_cast<double>(j) * std::numbers::pi * r);
  }
  return basis;
}

double weighted_square(std::span<const double> w, std::span<const double> q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) acc += w[i] * q[i] * q[i];
  return acc;
}

}  // namespace

Parameterization::Parameterization(const InverseProblemSpec& spec, const SolverContext& ctx)
    : ctx_(&ctx),
      mode_(spec.mode),
      C0_(spec.C0),
      source_columns_(spec.source_modes == 0 ? ctx.domain().nodes() : spec.source_modes),
      initial_columns_(spec.initial_modes == 0 ? ctx.domain().nodes() : spec.initial_modes) {
  spec.validate(ctx.window);
  const SpatialDomain& domain = ctx.domain();
  if (spec.source_modes > domain.nodes() || spec.initial_modes > domain.nodes()) {
    throw ValidationError("modes", "more modes than grid nodes");
  }
  if (spec.source_modes > 0) source_basis_ = cosine_basis(domain, spec.source_modes);
  if (spec.initial_modes > 0) initial_basis_ = cosine_basis(domain, spec.initial_modes);

  const TimeAxis& axis = ctx.window.axis();
  sigma_.assign(axis.levels(), 1.0);
  if (spec.sigma) {
    for (std::size_t n = 0; n < axis.levels(); ++n) sigma_[n] = spec.sigma(axis.time(n));
  }
}

std::size_t Parameterization::source_size() const noexcept {
  if (mode_ == ReconstructionMode::full) return ctx_->window.axis().levels() * ctx_->domain().nodes();
  return source_columns_;
}

SpatialField Parameterization::combine(std::span<const double> basis, std::size_t columns,
                                       std::span<const double> coeffs) const {
  const std::size_t nodes = ctx_->domain().nodes();
  if (basis.empty()) return SpatialField(coeffs.begin(), coeffs.end());
  SpatialField out(nodes, 0.0);
  for (std::size_t i = 0; i < nodes; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < columns; ++j) acc += basis[i * columns + j] * coeffs[j];
    out[i] = acc;
  }
  return out;
}

std::vector<double> Parameterization::combine_transpose(std::span<const double> basis, std::size_t columns,
                                                        std::span<const double> values) const {
  if (basis.empty()) return std::vector<double>(values.begin(), values.end());
  std::vector<double> out(columns, 0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (std::size_t j = 0; j < columns; ++j) out[j] += basis[i * columns + j] * values[i];
  }
  return out;
}

SpatialField Parameterization::phi(std::span<const double> params) const {
  if (mode_ != ReconstructionMode::separable) throw ValidationError("mode", "phi exists only in separable mode");
  if (params.size() != size()) throw ValidationError("params", "dimension does not match the parameterization");
  return combine(source_basis_, source_columns_, params.first(source_columns_));
}

SpaceTimeField Parameterization::source(std::span<const double> params) const {
  if (params.size() != size()) throw ValidationError("params", "dimension does not match the parameterization");
  const auto& domain = ctx_->domain();
  const auto& axis = ctx_->window.axis();
  if (mode_ == ReconstructionMode::full) {
    const auto part = params.first(source_size());
    return SpaceTimeField(domain, axis, std::vector<double>(part.begin(), part.end()));
  }
  const auto p = phi(params);
  SpaceTimeField f(domain, axis);
  for (std::size_t n = 0; n < axis.levels(); ++n) {
    for (std::size_t i = 0; i < domain.nodes(); ++i) f(n, i) = sigma_[n] * p[i];
  }
  return f;
}

SpatialField Parameterization::initial(std::span<const double> params) const {
  if (params.size() != size()) throw ValidationError("params", "dimension does not match the parameterization");
  return combine(initial_basis_, initial_columns_, params.subspan(source_size()));
}

std::vector<double> Parameterization::pull_back(const SpaceTimeField& source_gradient,
                                                std::span<const double> initial_gradient) const {
  std::vector<double> out;
  out.reserve(size());
  if (mode_ == ReconstructionMode::full) {
    out.assign(source_gradient.values().begin(), source_gradient.values().end());
  } else {
    SpatialField dphi(source_gradient.nodes(), 0.0);
    for (std::size_t n = 0; n < source_gradient.levels(); ++n) {
      for (std::size_t i = 0; i < dphi.size(); ++i) dphi[i] += sigma_[n] * source_gradient(n, i);
    }
    out = combine_transpose(source_basis_, source_columns_, dphi);
  }
  const auto dg = combine_transpose(initial_basis_, initial_columns_, initial_gradient);
  out.insert(out.end(), dg.begin(), dg.end());
  return out;
}

double Parameterization::regularization(std::span<const double> params, double alpha_f, double alpha_g,
                                        std::span<double> gradient) const {
  const auto& domain = ctx_->domain();
  const auto wx = trapezoid_weights(domain.nodes(), domain.spacing());
  double value = 0.0;

  if (alpha_f > 0.0) {
    if (mode_ == ReconstructionMode::full) {
      const auto wt = trapezoid_weights(ctx_->window.axis().levels(), ctx_->window.step());
      for (std::size_t n = 0; n < wt.size(); ++n) {
        for (std::size_t i = 0; i < wx.size(); ++i) {
          const std::size_t idx = n * wx.size() + i;
          value += 0.5 * alpha_f * wt[n] * wx[i] * params[idx] * params[idx];
          gradient[idx] += alpha_f * wt[n] * wx[i] * params[idx];
        }
      }
    } else {
      const auto p = phi(params);
      value += 0.5 * alpha_f * weighted_square(wx, p);
      SpatialField wp(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) wp[i] = alpha_f * wx[i] * p[i];
      const auto dp = combine_transpose(source_basis_, source_columns_, wp);
      for (std::size_t j = 0; j < dp.size(); ++j) gradient[j] += dp[j];
    }
  }
  if (alpha_g > 0.0) {
    const auto g = initial(params);
    value += 0.5 * alpha_g * weighted_square(wx, g);
    SpatialField wg(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) wg[i] = alpha_g * wx[i] * g[i];
    const auto dg = combine_transpose(initial_basis_, initial_columns_, wg);
    const std::size_t offset = source_size();
    for (std::size_t j = 0; j < dg.size(); ++j) gradient[offset + j] += dg[j];
  }
  return value;
}

double Parameterization::source_error(std::span<const double> estimate, std::span<const double> truth) const {
  if (mode_ == ReconstructionMode::full) {
    auto diff = source(estimate);
    const auto ref = source(truth);
    for (std::size_t idx = 0; idx < diff.values().size(); ++idx) diff.values()[idx] -= ref.values()[idx];
    return l2_spacetime_norm(diff) / l2_spacetime_norm(ref);
  }
  auto diff = phi(estimate);
  const auto ref = phi(truth);
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= ref[i];
  return l2_space_norm(ctx_->domain(), diff) / l2_space_norm(ctx_->domain(), ref);
}

double Parameterization::initial_error(std::span<const double> estimate, std::span<const double> truth) const {
  auto diff = initial(estimate);
  const auto ref = initial(truth);
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= ref[i];
  return l2_space_norm(ctx_->domain(), diff) / l2_space_norm(ctx_->domain(), ref);
}

void Parameterization::project_admissible(std::span<double> params) const {
  if (mode_ != ReconstructionMode::full) return;
  const std::size_t nodes = ctx_->domain().nodes();
  const std::size_t levels = ctx_->window.axis().levels();
  const std::size_t nT = ctx_->window.final_index();
  const double k = ctx_->window.step();
  auto at = [&](std::size_t n, std::size_t i) -> double& { return params[n * nodes + i]; };

  for (std::size_t i = 0; i < nodes; ++i) {
    const double bound = C0_ * std::abs(at(nT, i)) * k;
    const double slack = bound * (1.0 + 1e-12);
    // Forward from T: clip f^{n+1} - f^n using the original increments.
    double prev_old = at(nT, i);
    bool changed = false;
    for (std::size_t n = nT + 1; n < levels; ++n) {
      const double old = at(n, i);
      const double d = old - prev_old;
      if (std::abs(d) > slack) {
        at(n, i) = at(n - 1, i) + std::copysign(bound, d);
        changed = true;
      } else if (changed) {
        at(n, i) = at(n - 1, i) + d;
      }
      prev_old = old;
    }
    prev_old = at(nT, i);
    changed = false;
    for (std::size_t n = nT; n-- > 0;) {
      const double old = at(n, i);
      const double d = prev_old - old;
      if (std::abs(d) > slack) {
        at(n, i) = at(n + 1, i) - std::copysign(bound, d);
        changed = true;
      } else if (changed) {
        at(n, i) = at(n + 1, i) - d;
      }
      prev_old = old;
    }
  }
}

// ---------------------------------------------------------------------------
// Data

void add_noise(MeasurementData& data, double eps, std::mt19937_64& rng, const SpatialDomain& domain) {
  if (!(std::isfinite(eps) && eps >= 0.0)) throw ValidationError("noise", "must be nonnegative");
  if (eps == 0.0) return;
  std::normal_distribution<double> normal(0.0, 1.0);

  const auto wx = trapezoid_weights(domain.nodes(), domain.spacing());
  std::vector<double> noise(data.final_snapshot.size());
  for (double& v : noise) v = normal(rng);
  const double snap_scale = eps * std::sqrt(weighted_square(wx, data.final_snapshot) / weighted_square(wx, noise));
  for (std::size_t i = 0; i < noise.size(); ++i) data.final_snapshot[i] += snap_scale * noise[i];

  auto& trace = data.lateral_trace;
  const auto wq = trapezoid_weights(trace.axis.levels(), trace.axis.step);
  std::vector<std::vector<double>> trace_noise(trace.series.size());
  double signal = 0.0;
  double energy = 0.0;
  for (std::size_t s = 0; s < trace.series.size(); ++s) {
    trace_noise[s].resize(trace.series[s].size());
    for (double& v : trace_noise[s]) v = normal(rng);
    signal += weighted_square(wq, trace.series[s]);
    energy += weighted_square(wq, trace_noise[s]);
  }
  const double trace_scale = eps * std::sqrt(signal / energy);
  for (std::size_t s = 0; s < trace.series.size(); ++s) {
    for (std::size_t j = 0; j < trace.series[s].size(); ++j) trace.series[s][j] += trace_scale * trace_noise[s][j];
  }
  refresh_norms(data, domain);
}

MeasurementData synthesize_data(const AdmissiblePair& pair, const InverseProblemSpec& spec, const SolverContext& ctx) {
  const auto u = forward_solve(ctx.op, pair.f, pair.g, ctx.window);
  auto data = measure(u, ctx.window);
  std::mt19937_64 rng(spec.seed);
  add_noise(data, spec.noise_level, rng, ctx.domain());
  return data;
}

// ---------------------------------------------------------------------------
// Objective

ObjectiveValue objective_and_gradient(const InverseProblemSpec& spec, const Parameterization& param,
                                      std::span<const double> params, const MeasurementData& data) {
  if (params.size() != param.size()) throw ValidationError("params", "dimension does not match the mode");
  const SolverContext& ctx = param.context();
  const SpatialDomain& domain = ctx.domain();
  if (data.final_snapshot.size() != domain.nodes()) throw ValidationError("data", "snapshot size mismatch");
  if (data.lateral_trace.series.size() != domain.observed().size()) {
    throw ValidationError("data", "trace does not cover the observed boundary");
  }

  const auto u = forward_solve(ctx.op, param.source(params), param.initial(params), ctx.window);
  const auto predicted = lateral_trace(u, ctx.window);
  const auto snapshot = u.snapshot(ctx.window.final_index());

  AdjointPayload payload;
  payload.terminal = SpatialField(domain.nodes());
  for (std::size_t i = 0; i < domain.nodes(); ++i) (*payload.terminal)[i] = snapshot[i] - data.final_snapshot[i];
  payload.boundary.resize(predicted.series.size());
  for (std::size_t s = 0; s < predicted.series.size(); ++s) {
    const auto& d = data.lateral_trace.series[s];
    if (d.size() != predicted.series[s].size()) throw ValidationError("data", "trace length mismatch");
    payload.boundary[s].resize(d.size());
    for (std::size_t j = 0; j < d.size(); ++j) payload.boundary[s][j] = predicted.series[s][j] - d[j];
  }

  const auto wx = trapezoid_weights(domain.nodes(), domain.spacing());
  const auto wq = trapezoid_weights(predicted.axis.levels(), predicted.axis.step);
  double misfit = 0.5 * weighted_square(wx, *payload.terminal);
  for (const auto& r : payload.boundary) misfit += 0.5 * weighted_square(wq, r);

  const auto adjoint = adjoint_solve(ctx.op, payload, ctx.window);
  ObjectiveValue out;
  out.misfit = misfit;
  out.gradient = param.pull_back(adjoint.source_gradient, adjoint.initial_gradient);
  out.J = misfit + param.regularization(params, spec.alpha_f, spec.alpha_g, out.gradient);
  return out;
}

// ---------------------------------------------------------------------------
// Minimization

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

std::string dump(std::span<const double> x) {
  std::ostringstream out;
  for (std::size_t i = 0; i < x.size(); ++i) out << (i ? "," : "") << format_number(x[i]);
  return out.str();
}

struct Evaluator {
  const InverseProblemSpec& spec;
  const Parameterization& param;
  const MeasurementData& data;
  std::size_t iteration = 0;

  ObjectiveValue operator()(std::span<const double> x) const {
    auto value = objective_and_gradient(spec, param, x, data);
    if (!std::isfinite(value.J)) throw NonFiniteObjectiveError(iteration, dump(x));
    return value;
  }
};

// L-BFGS two-loop recursion, memory m = 10.
std::vector<double> lbfgs_direction(const std::vector<double>& g, const std::deque<std::vector<double>>& s,
                                    const std::deque<std::vector<double>>& y) {
  std::vector<double> q = g;
  const std::size_t m = s.size();
  std::vector<double> alpha(m), rho(m);
  for (std::size_t j = m; j-- > 0;) {
    rho[j] = 1.0 / dot(y[j], s[j]);
    alpha[j] = rho[j] * dot(s[j], q);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] -= alpha[j] * y[j][i];
  }
  const double gamma = m > 0 ? dot(s.back(), y.back()) / dot(y.back(), y.back()) : 1.0;
  for (double& v : q) v *= gamma;
  for (std::size_t j = 0; j < m; ++j) {
    const double beta = rho[j] * dot(y[j], q);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] += (alpha[j] - beta) * s[j][i];
  }
  for (double& v : q) v = -v;
  return q;
}

constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 60;
constexpr std::size_t kMemory = 10;

void run_lbfgs(Evaluator& eval, std::vector<double>& x, ObjectiveValue& current, ReconstructionResult& result) {
  const double g0 = norm(current.gradient);
  std::deque<std::vector<double>> s_hist, y_hist;
  const std::size_t n = x.size();
  while (result.iterations < eval.spec.max_iters) {
    if (norm(current.gradient) <= eval.spec.grad_tol * g0) {
      result.converged = true;
      return;
    }
    auto d = lbfgs_direction(current.gradient, s_hist, y_hist);
    double slope = dot(current.gradient, d);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      d = current.gradient;
      for (double& v : d) v = -v;
      slope = dot(current.gradient, d);
    }
    double step = (s_hist.empty() && result.iterations == 0) ? std::min(1.0, 1.0 / norm(current.gradient)) : 1.0;

    eval.iteration = result.iterations + 1;
    std::vector<double> trial(n);
    ObjectiveValue next;
    bool accepted = false;
    for (int b = 0; b <= kMaxBacktracks; ++b) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] + step * d[i];
      next = eval(trial);
      if (next.J <= current.J + kArmijo * step * slope && next.J < current.J) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      result.stalled = true;
      return;
    }
    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = trial[i] - x[i];
      y[i] = next.gradient[i] - current.gradient[i];
    }
    if (dot(s, y) > 1e-16 * norm(s) * norm(y)) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      if (s_hist.size() > kMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
      }
    }
    x = std::move(trial);
    current = std::move(next);
    ++result.iterations;
    result.misfit_history.push_back(current.J);
  }
  result.converged = norm(current.gradient) <= eval.spec.grad_tol * g0;
}

// Projected gradient with projected Armijo backtracking (full mode).
void run_projected_gradient(Evaluator& eval, std::vector<double>& x, ObjectiveValue& current,
                            ReconstructionResult& result) {
  const std::size_t n = x.size();
  auto projected_step = [&](const ObjectiveValue& value) {
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = x[i] - value.gradient[i];
    eval.param.project_admissible(p);
    for (std::size_t i = 0; i < n; ++i) p[i] -= x[i];
    return norm(p);
  };
  const double r0 = projected_step(current);
  double step = 1.0;
  while (result.iterations < eval.spec.max_iters) {
    const double r = projected_step(current);
    if (r == 0.0 || r <= eval.spec.grad_tol * r0) {
      result.converged = true;
      return;
    }
    eval.iteration = result.iterations + 1;
    std::vector<double> trial(n);
    ObjectiveValue next;
    bool accepted = false;
    step = std::min(1.0, 2.0 * step);
    for (int b = 0; b <= kMaxBacktracks; ++b) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] - step * current.gradient[i];
      eval.param.project_admissible(trial);
      double decrease = 0.0;
      for (std::size_t i = 0; i < n; ++i) decrease += current.gradient[i] * (trial[i] - x[i]);
      next = eval(trial);
      if (next.J <= current.J + kArmijo * decrease && next.J < current.J) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      result.stalled = true;
      return;
    }
    x = std::move(trial);
    current = std::move(next);
    ++result.iterations;
    result.misfit_history.push_back(current.J);
  }
  result.converged = projected_step(current) <= eval.spec.grad_tol * r0;
}

}  // namespace

ReconstructionResult minimize(const InverseProblemSpec& spec, const Parameterization& param,
                              const MeasurementData& data, std::span<const double> init,
                              std::span<const double> truth) {
  if (init.size() != param.size()) throw ValidationError("init", "dimension does not match the mode");
  if (!std::all_of(init.begin(), init.end(), [](double v) { return std::isfinite(v); })) {
    throw ValidationError("init", "must be finite");
  }
  if (!truth.empty() && truth.size() != param.size()) throw ValidationError("truth", "dimension mismatch");

  ReconstructionResult result{std::vector<double>(init.begin(), init.end()), {},
                              param.context().zero_field(), {}, {}, 0.0, 0, false, false, {}, {}};
  param.project_admissible(result.params);
  Evaluator eval{spec, param, data};
  auto current = eval(result.params);
  result.misfit_history.push_back(current.J);

  if (norm(current.gradient) == 0.0) {
    result.converged = true;
  } else if (param.mode() == ReconstructionMode::full) {
    run_projected_gradient(eval, result.params, current, result);
  } else {
    run_lbfgs(eval, result.params, current, result);
  }

  result.final_objective = current.J;
  if (param.mode() == ReconstructionMode::separable) result.phi_est = param.phi(result.params);
  result.f_est = param.source(result.params);
  result.g_est = param.initial(result.params);
  if (!truth.empty()) {
    result.err_f = param.source_error(result.params, truth);
    result.err_g = param.initial_error(result.params, truth);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Rates

RateResult rate_experiment(const InverseProblemSpec& spec, std::span<const double> noise_levels,
                           std::span<const double> truth, const Parameterization& param, double alpha0,
                           std::size_t repeats) {
  if (noise_levels.size() < 3) throw ValidationError("noise", "at least 3 noise levels are required");
  for (std::size_t l = 0; l < noise_levels.size(); ++l) {
    if (!(std::isfinite(noise_levels[l]) && noise_levels[l] >= 0.0)) throw ValidationError("noise", "must be >= 0");
    if (l > 0 && !(noise_levels[l] < noise_levels[l - 1])) {
      throw ValidationError("noise", "levels must be strictly decreasing");
    }
  }
  if (!(std::isfinite(alpha0) && alpha0 >= 0.0)) throw ValidationError("alpha0", "must be nonnegative");
  if (repeats == 0) throw ValidationError("repeats", "must be positive");
  if (truth.size() != param.size()) throw ValidationError("truth", "dimension mismatch");

  const SolverContext& ctx = param.context();
  const auto u = forward_solve(ctx.op, param.source(truth), param.initial(truth), ctx.window);
  const auto clean = measure(u, ctx.window);
  const std::vector<double> init(param.size(), 0.0);

  RateResult out;
  for (std::size_t l = 0; l < noise_levels.size(); ++l) {
    const double eps = noise_levels[l];
    InverseProblemSpec level_spec = spec;
    level_spec.alpha_f = level_spec.alpha_g = alpha0 * eps * eps;
    level_spec.noise_level = eps;
    std::mt19937_64 rng(spec.seed ^ static_cast<std::uint64_t>(l));

    RateLevel level{eps, level_spec.alpha_f, 0.0, 0.0, clean.combined_norm, 0.0, 0, true};
    const std::size_t draws = eps == 0.0 ? 1 : repeats;
    double sf = 0.0, sg = 0.0;
    for (std::size_t r = 0; r < draws; ++r) {
      auto data = clean;
      add_noise(data, eps, rng, ctx.domain());
      if (r == 0) level.combined_norm_noisy = data.combined_norm;
      const auto result = minimize(level_spec, param, data, init, truth);
      sf += *result.err_f * *result.err_f;
      sg += *result.err_g * *result.err_g;
      level.iters = std::max(level.iters, result.iterations);
      level.converged = level.converged && result.converged;
    }
    level.err_f = std::sqrt(sf / static_cast<double>(draws));
    level.err_g = std::sqrt(sg / static_cast<double>(draws));
    out.levels.push_back(level);
  }

  std::vector<double> lx, ly;
  double pmin = std::numeric_limits<double>::infinity();
  double pmax = 0.0;
  for (const auto& level : out.levels) {
    const double product =
        level.eps > 0.0 ? level.err_g * std::abs(std::log(level.eps)) : std::numeric_limits<double>::quiet_NaN();
    out.log_products.push_back(product);
    if (!level.converged || !(level.eps > 0.0)) continue;
    if (level.err_f > 0.0) {
      lx.push_back(std::log(level.eps));
      ly.push_back(std::log(level.err_f));
    }
    if (std::isfinite(product)) {
      pmin = std::min(pmin, product);
      pmax = std::max(pmax, product);
    }
  }
  if (lx.size() >= 2) {
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(lx.size());
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(ly.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      sxy += (lx[i] - mx) * (ly[i] - my);
      sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    out.source_slope = sxy / sxx;
  } else {
    out.source_slope = std::numeric_limits<double>::quiet_NaN();
  }
  out.log_product_variation = pmin > 0.0 && std::isfinite(pmin) ? pmax / pmin : std::numeric_limits<double>::quiet_NaN();
  return out;
}

}  // namespace parastab

#include "parastab/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace parastab {

std::string to_string(ProbeFlag flag) {
  switch (flag) {
    case ProbeFlag::ok:
      return "ok";
    case ProbeFlag::degenerate:
      return "degenerate";
    case ProbeFlag::violation:
      return "violation";
    case ProbeFlag::expected_failure:
      return "expected_failure";
    case ProbeFlag::rejected:
      return "rejected";
  }
  return "ok";
}

SourceCondition check_source_condition(const SpaceTimeField& f, const TimeWindow& window) {
  const auto nT = f.axis().index_of(window.final_time());
  if (!nT) throw OffGridError(window.final_time());
  const auto ft = time_derivative(f);

  double fmax = 0.0;
  for (double v : f.values()) fmax = std::max(fmax, std::abs(v));
  const double zero = 1e-12 * std::max(1.0, fmax);

  SourceCondition out;
  for (std::size_t i = 0; i < f.nodes(); ++i) {
    const double fT = std::abs(f(*nT, i));
    double sup_ft = 0.0;
    for (std::size_t n = 0; n < f.levels(); ++n) sup_ft = std::max(sup_ft, std::abs(ft(n, i)));
    if (fT <= zero) {
      if (sup_ft > zero && out.feasible) {
        out.feasible = false;
        out.offending_node = i;
      }
      continue;
    }
    out.min_C0 = std::max(out.min_C0, sup_ft / fT);
  }
  if (!out.feasible) out.min_C0 = std::numeric_limits<double>::infinity();
  return out;
}

double c4_surrogate(const SpatialDomain& domain, std::span<const double> g) {
  if (g.size() != domain.nodes()) throw ValidationError("g", "size does not match the spatial grid");
  std::vector<double> diff(g.begin(), g.end());
  double scale = 1.0;
  double out = 0.0;
  for (int order = 0; order <= 4; ++order) {
    if (order > 0) {
      for (std::size_t i = 0; i + 1 < diff.size(); ++i) diff[i] = diff[i + 1] - diff[i];
      diff.pop_back();
      scale *= domain.spacing();
    }
    for (double v : diff) out = std::max(out, std::abs(v) / scale);
  }
  return out;
}

AdmissiblePair make_admissible_pair(SpaceTimeField f, SpatialField g, double C0, const TimeWindow& window) {
  if (!(std::isfinite(C0) && C0 >= 0.0)) throw ValidationError("C0", "must be nonnegative");
  if (g.size() != f.nodes()) throw ValidationError("g", "size does not match the spatial grid");
  const auto condition = check_source_condition(f, window);
  if (!condition.feasible) throw ValidationError("f", "source condition infeasible: f(x,T) = 0 where f_t != 0");
  if (condition.min_C0 > C0 * (1.0 + 1e-12)) throw ValidationError("C0", "source condition needs a larger C0");
  const double c4 = c4_surrogate(f.domain(), g);
  return AdmissiblePair{std::move(f), std::move(g), C0, c4};
}

MeasurementData measure(const SpaceTimeField& u, const TimeWindow& window) {
  const auto nT = u.axis().index_of(window.final_time());
  if (!nT) throw OffGridError(window.final_time());
  const auto snap = u.snapshot(*nT);
  MeasurementData data{SpatialField(snap.begin(), snap.end()), lateral_trace(u, window), 0.0, 0.0, 0.0};
  refresh_norms(data, u.domain());
  return data;
}

void refresh_norms(MeasurementData& data, const SpatialDomain& domain) {
  data.h2_space_norm = h2_space_norm(domain, data.final_snapshot);
  data.h2_trace_norm = h2_trace_norm(data.lateral_trace);
  data.combined_norm = std::hypot(data.h2_space_norm, data.h2_trace_norm);
}

namespace {

ProbeResult summarize(std::vector<ProbeRow> rows) {
  ProbeResult result;
  std::vector<double> values;
  for (const auto& row : rows) {
    if (row.flag == ProbeFlag::ok) values.push_back(row.value);
    if (row.flag == ProbeFlag::violation) ++result.violations;
  }
  result.rows = std::move(rows);
  if (!values.empty()) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    result.max_value = values.back();
    result.median_value = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  }
  return result;
}

}  // namespace

std::vector<SourceMember> cosine_source_family(const SolverContext& ctx, std::size_t count) {
  std::vector<SourceMember> family;
  const SpatialDomain& domain = ctx.domain();
  for (std::size_t j = 1; j <= count; ++j) {
    const double jd = static_cast<double>(j);
    auto f = SpaceTimeField::sample(domain, ctx.window.axis(), [&](double x, double) {
      return std::cos(jd * std::numbers::pi * (x - domain.x_min()) / domain.length()) / (jd * jd);
    });
    family.push_back({jd, std::move(f)});
  }
  return family;
}

std::vector<InitialMember> cosine_initial_family(const SolverContext& ctx, std::size_t count, bool normalized) {
  std::vector<InitialMember> family;
  const SpatialDomain& domain = ctx.domain();
  for (std::size_t k = 1; k <= count; ++k) {
    const double kd = static_cast<double>(k);
    const double amplitude = normalized ? 1.0 / (kd * kd * kd * kd) : 1.0;
    family.push_back({kd, domain.sample([&](double x) {
                        return amplitude * std::cos(kd * std::numbers::pi * (x - domain.x_min()) / domain.length());
                      })});
  }
  return family;
}

ProbeResult source_stability_probe(const std::vector<SourceMember>& family, const SolverContext& ctx,
                                   double C0_config, std::size_t mesh_level) {
  std::vector<ProbeRow> rows;
  const SpatialField zero(ctx.domain().nodes(), 0.0);
  for (std::size_t m = 0; m < family.size(); ++m) {
    const auto& member = family[m];
    ProbeRow row;
    row.member_id = m;
    row.param = member.param;
    row.mesh_level = mesh_level;
    row.data_norm = l2_spacetime_norm(member.f);
    const auto condition = check_source_condition(member.f, ctx.window);
    if (!condition.feasible || condition.min_C0 > C0_config * (1.0 + 1e-12)) {
      row.flag = ProbeFlag::rejected;
      row.value = std::numeric_limits<double>::quiet_NaN();
      rows.push_back(row);
      continue;
    }
    const auto u = forward_solve(ctx.op, member.f, zero, ctx.window);
    row.combined_norm = measure(u, ctx.window).combined_norm;
    if (row.combined_norm == 0.0 && row.data_norm == 0.0) {
      row.flag = ProbeFlag::degenerate;
      row.value = std::numeric_limits<double>::quiet_NaN();
    } else if (row.combined_norm == 0.0) {
      row.flag = ProbeFlag::violation;
      row.value = std::numeric_limits<double>::infinity();
    } else {
      row.value = row.data_norm / row.combined_norm;
    }
    rows.push_back(row);
  }
  return summarize(std::move(rows));
}

ProbeResult initial_stability_probe(const std::vector<InitialMember>& family, const SolverContext& ctx,
                                    const InitialProbeOptions& options) {
  const double small = std::exp(-1.0);
  const double target = std::exp(-2.0);
  std::vector<ProbeRow> rows;
  for (std::size_t m = 0; m < family.size(); ++m) {
    SpatialField g = family[m].g;
    ProbeRow row;
    row.member_id = m;
    row.param = family[m].param;
    row.mesh_level = options.mesh_level;

    auto u = forward_solve(ctx.op, g, ctx.window);
    double combined = measure(u, ctx.window).combined_norm;
    if (combined >= small) {
      if (!options.auto_rescale) {
        row.flag = ProbeFlag::rejected;
        row.data_norm = l2_space_norm(ctx.domain(), g);
        row.combined_norm = combined;
        row.value = std::numeric_limits<double>::quiet_NaN();
        row.scale = target / combined;  // hint: the factor that would bring the member into range
        rows.push_back(row);
        continue;
      }
      row.scale = target / combined;
      for (double& v : g) v *= row.scale;
      u = forward_solve(ctx.op, g, ctx.window);
      combined = measure(u, ctx.window).combined_norm;
    }
    row.data_norm = l2_space_norm(ctx.domain(), g);
    row.combined_norm = combined;
    if (combined == 0.0 && row.data_norm == 0.0) {
      row.flag = ProbeFlag::degenerate;
      row.value = std::numeric_limits<double>::quiet_NaN();
    } else if (combined == 0.0) {
      row.flag = ProbeFlag::violation;
      row.value = std::numeric_limits<double>::infinity();
    } else {
      row.value = row.data_norm * std::abs(std::log(combined));
      if (c4_surrogate(ctx.domain(), g) > options.M0) row.flag = ProbeFlag::expected_failure;
    }
    rows.push_back(row);
  }
  return summarize(std::move(rows));
}

Decomposition decompose_time_derivative(const SpaceTimeField& u, const SpaceTimeField& f, const SolverContext& ctx) {
  if (!u.same_grid(f)) throw ValidationError("f", "grid does not match u");
  if (!u.axis().same_grid(ctx.window.axis())) throw ValidationError("u", "time grid does not match the window");

  Decomposition out{time_derivative(u), ctx.zero_field(), ctx.zero_field()};
  const auto ft = time_derivative(f);
  const SpatialField zero(u.nodes(), 0.0);
  out.w = forward_solve(ctx.op, ft, zero, ctx.window);
  for (std::size_t idx = 0; idx < out.z.values().size(); ++idx) {
    out.z.values()[idx] = out.vartheta.values()[idx] - out.w.values()[idx];
  }

  const auto zt = time_derivative(out.z);
  SpatialField az(u.nodes());
  // z_t at n = 1 and n = levels - 2 reaches the one-sided end values of vartheta.
  for (std::size_t n = 2; n + 2 < u.levels(); ++n) {
    ctx.op.apply(out.z.snapshot(n), az);
    for (std::size_t i = 0; i < u.nodes(); ++i) {
      out.residual_source_free = std::max(out.residual_source_free, std::abs(zt(n, i) - az[i]));
    }
  }

  const std::size_t nT = ctx.window.final_index();
  const auto atu = ctx.op.apply(u.snapshot(nT));
  for (std::size_t i = 0; i < u.nodes(); ++i) {
    out.residual_terminal =
        std::max(out.residual_terminal, std::abs(out.z(nT, i) - (atu[i] + f(nT, i) - out.w(nT, i))));
  }
  for (std::size_t idx = 0; idx < out.z.values().size(); ++idx) {
    const double sum = out.w.values()[idx] + out.z.values()[idx];
    out.residual_sum = std::max(out.residual_sum, std::abs(out.vartheta.values()[idx] - sum));
  }

  out.equation_residual = relative_equation_residual(ctx.op, u, f);
  out.warning = out.equation_residual > 1e-6;
  return out;
}

LogConvexityReport check_log_convexity_and_w_bound(const SpaceTimeField& z, const SpaceTimeField& w,
                                                   const SpaceTimeField& f, const SolverContext& ctx, double C0) {
  if (!z.same_grid(w) || !z.same_grid(f)) throw ValidationError("z", "z, w and f must share one grid");
  if (!z.axis().same_grid(ctx.window.axis())) throw ValidationError("z", "time grid does not match the window");
  const SpatialDomain& domain = ctx.domain();
  const std::size_t nT = ctx.window.final_index();
  LogConvexityReport report;

  if (!ctx.op.self_adjoint()) {
    report.notice = "log-convexity check skipped: operator has drift (not self-adjoint)";
  } else {
    report.checked = true;
    for (std::size_t n = 0; n <= nT; ++n) report.z_norms.push_back(l2_space_norm(domain, z.snapshot(n)));
    const double z0 = report.z_norms.front();
    const double zT = report.z_norms.back();
    if (zT == 0.0 && z0 > 0.0) {
      report.degenerate = true;
      report.notice = "interpolation bound degenerate: ||z(T)|| = 0 with ||z(0)|| > 0";
    } else {
      report.max_violation = -std::numeric_limits<double>::infinity();
      report.max_relative_violation = -std::numeric_limits<double>::infinity();
      for (std::size_t n = 0; n <= nT; ++n) {
        const double tau = static_cast<double>(n) / static_cast<double>(nT);
        const double bound = std::pow(z0, 1.0 - tau) * std::pow(zT, tau);
        const double violation = report.z_norms[n] - bound;
        report.violations.push_back(violation);
        report.max_violation = std::max(report.max_violation, violation);
        report.max_relative_violation =
            std::max(report.max_relative_violation, bound > 0.0 ? violation / bound : violation);
      }
      report.min_second_difference = std::numeric_limits<double>::infinity();
      if (nT < 2 || zT == 0.0) report.min_second_difference = 0.0;
      for (std::size_t n = 1; n + 1 <= nT && zT > 0.0; ++n) {
        const double d2 = std::log(report.z_norms[n + 1]) - 2.0 * std::log(report.z_norms[n]) +
                          std::log(report.z_norms[n - 1]);
        report.min_second_difference = std::min(report.min_second_difference, d2);
      }
    }
  }

  const double fT = l2_space_norm(domain, f.snapshot(nT));
  const double omega = ctx.op.max_reaction();
  report.w_bound_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < w.levels(); ++n) {
    const double wn = l2_space_norm(domain, w.snapshot(n));
    const double ratio = fT > 0.0 ? wn / fT : (wn > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    const double t = w.axis().time(n);
    const double excess = ratio - C0 * t * std::exp(omega * t);
    report.w_ratio_sup = std::max(report.w_ratio_sup, ratio);
    report.w_bound_excess = std::max(report.w_bound_excess, excess);
  }
  report.w_bound_holds = report.w_bound_excess <= 1e-12 * std::max(1.0, report.w_ratio_sup);
  return report;
}

}  // namespace parastab

#pragma once

// Admissibility of source/initial pairs, the measurement operator, direct
// probes of the Lipschitz (source) and logarithmic (initial value) stability
// estimates, and the decomposition u_t = w + z with its log-convexity check.

#include <optional>
#include <string>
#include <vector>

#include "parastab/grid.hpp"

namespace parastab {

/// The discrete forward problem: grid, time window and assembled operator.
struct SolverContext {
  TimeWindow window;
  DiscreteOperator op;

  const SpatialDomain& domain() const noexcept { return op.domain(); }
  SpaceTimeField zero_field() const { return SpaceTimeField(domain(), window.axis()); }
};

struct SourceCondition {
  bool feasible = true;
  /// Grid sup of |f_t| / |f(., T)| over points with f(x, T) != 0.
  double min_C0 = 0.0;
  /// Node where f(x, T) = 0 while f_t does not vanish.
  std::optional<std::size_t> offending_node;
};

SourceCondition check_source_condition(const SpaceTimeField& f, const TimeWindow& window);

/// max over orders m = 0..4 of max |Delta^m g| / h^m (forward differences).
double c4_surrogate(const SpatialDomain& domain, std::span<const double> g);

struct AdmissiblePair {
  SpaceTimeField f;
  SpatialField g;
  double C0 = 0.0;
  double c4_surrogate = 0.0;
};

/// Checks the source condition against C0 and computes the surrogate.
AdmissiblePair make_admissible_pair(SpaceTimeField f, SpatialField g, double C0, const TimeWindow& window);

struct MeasurementData {
  SpatialField final_snapshot;
  LateralTrace lateral_trace;
  double h2_space_norm = 0.0;
  double h2_trace_norm = 0.0;
  double combined_norm = 0.0;
};

MeasurementData measure(const SpaceTimeField& u, const TimeWindow& window);
/// Recomputes the three norms after the snapshot or trace changed.
void refresh_norms(MeasurementData& data, const SpatialDomain& domain);

enum class ProbeFlag { ok, degenerate, violation, expected_failure, rejected };
std::string to_string(ProbeFlag flag);

struct ProbeRow {
  std::size_t member_id = 0;
  double param = 0.0;
  double data_norm = 0.0;       // ||f||_{L2(Q)} or ||g||_{L2(Omega)}
  double combined_norm = 0.0;
  double value = 0.0;           // ratio R or product P
  std::size_t mesh_level = 0;
  ProbeFlag flag = ProbeFlag::ok;
  double scale = 1.0;           // rescaling applied to the member
};

struct ProbeResult {
  std::vector<ProbeRow> rows;
  /// Statistics over rows flagged ok.
  double max_value = 0.0;
  double median_value = 0.0;
  std::size_t violations = 0;
};

struct SourceMember {
  double param = 0.0;
  SpaceTimeField f;
};

struct InitialMember {
  double param = 0.0;
  SpatialField g;
};

/// f_j(x, t) = cos(j pi x) / j^2 for j = 1..count (time-independent).
std::vector<SourceMember> cosine_source_family(const SolverContext& ctx, std::size_t count);
/// g_k(x) = cos(k pi x) / k^4, or cos(k pi x) when not normalized.
std::vector<InitialMember> cosine_initial_family(const SolverContext& ctx, std::size_t count, bool normalized);

/// R = ||f||_{L2(Q)} / combined_norm with g = 0. Members violating the
/// source condition with C0_config are rejected.
ProbeResult source_stability_probe(const std::vector<SourceMember>& family, const SolverContext& ctx,
                                   double C0_config, std::size_t mesh_level = 0);

struct InitialProbeOptions {
  double M0 = 100.0;
  bool auto_rescale = true;
  std::size_t mesh_level = 0;
};

/// P = ||g||_{L2} |ln combined_norm| with f = 0. Members whose combined norm
/// is not below e^{-1} are rescaled to e^{-2} (or rejected); members whose
/// surrogate exceeds M0 are flagged expected_failure.
ProbeResult initial_stability_probe(const std::vector<InitialMember>& family, const SolverContext& ctx,
                                    const InitialProbeOptions& options = {});

struct Decomposition {
  SpaceTimeField vartheta;
  SpaceTimeField w;
  SpaceTimeField z;
  double residual_source_free = 0.0;  // (i)   max |z_t - A z| for n = 2 .. levels - 3
  double residual_terminal = 0.0;     // (ii)  max |z(T) - (A_T u + f(T) - w(T))|
  double residual_sum = 0.0;          // (iii) max |vartheta - (w + z)|
  double equation_residual = 0.0;     // relative residual of (u, f)
  bool warning = false;
};

Decomposition decompose_time_derivative(const SpaceTimeField& u, const SpaceTimeField& f, const SolverContext& ctx);

struct LogConvexityReport {
  bool checked = false;
  std::string notice;
  bool degenerate = false;
  std::vector<double> z_norms;     // ||z(t_n)||, n = 0..n_T
  std::vector<double> violations;  // ||z(t)|| - ||z0||^{1-t/T} ||z(T)||^{t/T}
  double max_violation = 0.0;
  double max_relative_violation = 0.0;
  double min_second_difference = 0.0;  // of log ||z(t_n)||
  double w_ratio_sup = 0.0;            // sup_t ||w(t)|| / ||f(., T)||
  double w_bound_excess = 0.0;         // sup_t ||w(t)||/||f(T)|| - C0 t e^{omega t}
  bool w_bound_holds = true;
};

LogConvexityReport check_log_convexity_and_w_bound(const SpaceTimeField& z, const SpaceTimeField& w,
                                                   const SpaceTimeField& f, const SolverContext& ctx, double C0);

}  // namespace parastab

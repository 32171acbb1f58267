#pragma once

// Tikhonov-regularized recovery of (f, g) from the final snapshot and the
// lateral trace, with adjoint gradients, and the noise-sweep rate experiment.

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "parastab/stability.hpp"

namespace parastab {

enum class ReconstructionMode { separable, full };

std::string to_string(ReconstructionMode mode);
ReconstructionMode parse_reconstruction_mode(const std::string& text);

struct InverseProblemSpec {
  ReconstructionMode mode = ReconstructionMode::separable;
  double alpha_f = 0.0;
  double alpha_g = 0.0;
  std::size_t max_iters = 500;
  /// Stop once ||grad|| <= grad_tol * ||grad at the initial iterate||.
  double grad_tol = 1e-8;
  double noise_level = 0.0;
  std::uint64_t seed = 0;
  /// Known time profile of f = phi(x) sigma(t) in separable mode; empty means sigma = 1.
  std::function<double(double)> sigma;
  /// Number of cosine modes cos(j pi (x - x0)/L), j < K, for phi (or g); 0 means nodal values.
  std::size_t source_modes = 0;
  std::size_t initial_modes = 0;
  /// Admissibility constant enforced by projection in full mode.
  double C0 = 0.0;

  void validate(const TimeWindow& window) const;
};

/// Maps a flat parameter vector [source part, initial part] to (f, g).
/// Separable: source part are the coefficients of phi. Full: nodal values
/// of f at every time level, level-major.
class Parameterization {
 public:
  Parameterization(const InverseProblemSpec& spec, const SolverContext& ctx);

  ReconstructionMode mode() const noexcept { return mode_; }
  std::size_t size() const noexcept { return source_size() + initial_size(); }
  std::size_t source_size() const noexcept;
  std::size_t initial_size() const noexcept { return initial_columns_; }

  SpatialField phi(std::span<const double> params) const;  // separable only
  SpaceTimeField source(std::span<const double> params) const;
  SpatialField initial(std::span<const double> params) const;

  /// Chain rule: d/d params from d/d f(x_i, t_n) and d/d g(x_i).
  std::vector<double> pull_back(const SpaceTimeField& source_gradient, std::span<const double> initial_gradient) const;

  /// 1/2 alpha_f ||phi or f||^2 + 1/2 alpha_g ||g||^2 in trapezoid L2; adds its gradient.
  double regularization(std::span<const double> params, double alpha_f, double alpha_g,
                        std::span<double> gradient) const;

  /// Relative L2 errors of (phi or f) and g against a reference parameter vector.
  double source_error(std::span<const double> estimate, std::span<const double> truth) const;
  double initial_error(std::span<const double> estimate, std::span<const double> truth) const;

  /// Full mode: enforce |f^{n+1} - f^n| <= C0 |f(., T)| k by clipping increments
  /// outward from t = T. Identity in separable mode and on feasible input.
  void project_admissible(std::span<double> params) const;

  const SolverContext& context() const noexcept { return *ctx_; }

 private:
  SpatialField combine(std::span<const double> basis, std::size_t columns, std::span<const double> coeffs) const;
  std::vector<double> combine_transpose(std::span<const double> basis, std::size_t columns,
                                        std::span<const double> values) const;

  const SolverContext* ctx_;
  ReconstructionMode mode_;
  double C0_;
  std::vector<double> sigma_;         // sigma(t_n)
  std::vector<double> source_basis_;  // nodes x source_columns_, row-major; empty = identity
  std::size_t source_columns_;
  std::vector<double> initial_basis_;
  std::size_t initial_columns_;
};

/// Forward solve, measure, and add noise of relative L2 size spec.noise_level
/// (seeded by spec.seed) to the snapshot and to the trace separately.
MeasurementData synthesize_data(const AdmissiblePair& pair, const InverseProblemSpec& spec, const SolverContext& ctx);

/// i.i.d. Gaussian perturbation scaled to relative L2 size eps on the snapshot
/// and on the trace; eps = 0 leaves the data untouched.
void add_noise(MeasurementData& data, double eps, std::mt19937_64& rng, const SpatialDomain& domain);

struct ObjectiveValue {
  double J = 0.0;
  double misfit = 0.0;
  std::vector<double> gradient;
};

ObjectiveValue objective_and_gradient(const InverseProblemSpec& spec, const Parameterization& param,
                                      std::span<const double> params, const MeasurementData& data);

struct ReconstructionResult {
  std::vector<double> params;
  SpatialField phi_est;  // separable mode
  SpaceTimeField f_est;
  SpatialField g_est;
  std::vector<double> misfit_history;  // objective at every accepted iterate
  double final_objective = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  bool stalled = false;  // line search could not decrease J
  std::optional<double> err_f;
  std::optional<double> err_g;
};

ReconstructionResult minimize(const InverseProblemSpec& spec, const Parameterization& param,
                              const MeasurementData& data, std::span<const double> init,
                              std::span<const double> truth = {});

struct RateLevel {
  double eps = 0.0;
  double alpha = 0.0;
  double err_f = 0.0;  // RMS over repeats
  double err_g = 0.0;
  double combined_norm_clean = 0.0;
  double combined_norm_noisy = 0.0;  // first repeat
  std::size_t iters = 0;             // largest over repeats
  bool converged = true;             // every repeat converged
};

struct RateResult {
  std::vector<RateLevel> levels;
  /// Least-squares slope of log err_f against log eps over converged eps > 0 levels.
  double source_slope = 0.0;
  /// err_g * |ln eps| per level (NaN for eps = 0).
  std::vector<double> log_products;
  /// max / min of the finite log products over converged levels.
  double log_product_variation = 0.0;
};

/// alpha_f = alpha_g = alpha0 eps^2 at each level; level l draws its noise
/// from the stream seeded with spec.seed ^ l.
RateResult rate_experiment(const InverseProblemSpec& spec, std::span<const double> noise_levels,
                           std::span<const double> truth, const Parameterization& param, double alpha0,
                           std::size_t repeats = 8);

}  // namespace parastab

#pragma once

// Shared fixtures for the unit tests.

#include <cmath>
#include <numbers>
#include <random>

#include "parastab/grid.hpp"
#include "parastab/stability.hpp"

namespace parastab::test {

inline constexpr double pi = std::numbers::pi;

inline SolverContext heat_context(std::size_t nx, std::size_t nt, double T = 1.0, double delta0 = 0.5,
                                  double delta1 = 0.25, std::vector<Side> gamma = {Side::left, Side::right}) {
  const SpatialDomain domain = SpatialDomain::unit(nx, std::move(gamma));
  return SolverContext{TimeWindow(T, delta0, delta1, nt), assemble_operator(domain, EllipticOperator::heat())};
}

inline SpatialField cosine(const SpatialDomain& domain, double k, double amplitude = 1.0) {
  return domain.sample([=](double x) { return amplitude * std::cos(k * pi * x); });
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double out = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) out = std::max(out, std::abs(a[i] - b[i]));
  return out;
}

inline std::vector<double> gaussian_vector(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> normal;
  std::vector<double> out(n);
  for (double& v : out) v = normal(rng);
  return out;
}

/// CN amplification factor of the discrete Neumann cosine mode j.
inline double cn_gain(const SpatialDomain& domain, double k, double j) {
  const double h = domain.spacing();
  const double mu = -(4.0 / (h * h)) * std::sin(j * pi * h / 2.0) * std::sin(j * pi * h / 2.0);
  return (1.0 + k * mu / 2.0) / (1.0 - k * mu / 2.0);
}

}  // namespace parastab::test

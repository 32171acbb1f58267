#include <doctest.h>

#include <limits>

#include "parastab/stability.hpp"
#include "support.hpp"

using namespace parastab;
using parastab::test::pi;

namespace {

SpaceTimeField growth_source(const SolverContext& ctx) {
  return SpaceTimeField::sample(ctx.domain(), ctx.window.axis(),
                                [](double x, double t) { return std::exp(t) * (2.0 + std::cos(pi * x)); });
}

// Discrete L2 norm of a sum of Neumann cosine modes evolved n CN steps; the
// modes are orthogonal under the trapezoid rule with squared norm 1/2.
double modal_norm(const SolverContext& ctx, const std::vector<std::pair<double, double>>& modes, std::size_t n) {
  double sq = 0.0;
  for (auto [j, amp] : modes) {
    const double g = std::pow(test::cn_gain(ctx.domain(), ctx.window.step(), j), static_cast<double>(n));
    sq += 0.5 * amp * amp * g * g;
  }
  return std::sqrt(sq);
}

}  // namespace

TEST_CASE("source condition examples") {
  const auto ctx = test::heat_context(32, 256);
  SUBCASE("time-independent source needs C0 = 0") {
    const auto f = SpaceTimeField::sample(ctx.domain(), ctx.window.axis(),
                                          [](double x, double) { return std::sin(3.0 * x) - 0.2; });
    const auto c = check_source_condition(f, ctx.window);
    CHECK(c.feasible);
    CHECK(c.min_C0 == 0.0);
  }
  SUBCASE("exponential growth needs C0 = e^{delta0}") {
    const auto c = check_source_condition(growth_source(ctx), ctx.window);
    CHECK(c.feasible);
    CHECK(c.min_C0 == doctest::Approx(std::exp(0.5)).epsilon(1e-4));
    CHECK(c.min_C0 == doctest::Approx(1.6487).epsilon(1e-4));
  }
  SUBCASE("vanishing final value with a nonzero rate is infeasible") {
    const auto f = SpaceTimeField::sample(ctx.domain(), ctx.window.axis(), [](double, double t) { return t - 1.0; });
    const auto c = check_source_condition(f, ctx.window);
    CHECK_FALSE(c.feasible);
    CHECK(c.offending_node.has_value());
    CHECK(std::isinf(c.min_C0));
    CHECK_THROWS_AS(make_admissible_pair(f, SpatialField(ctx.domain().nodes(), 0.0), 10.0, ctx.window),
                    ValidationError);
  }
  SUBCASE("admissible pair enforces C0") {
    const auto f = growth_source(ctx);
    const SpatialField g(ctx.domain().nodes(), 0.5);
    CHECK_THROWS_AS(make_admissible_pair(f, g, 1.0, ctx.window), ValidationError);
    const auto pair = make_admissible_pair(f, g, 2.0, ctx.window);
    CHECK(pair.C0 == 2.0);
    CHECK(pair.c4_surrogate == 0.5);
  }
}

TEST_CASE("c4 surrogate") {
  const auto d = SpatialDomain::unit(32);
  CHECK(c4_surrogate(d, SpatialField(d.nodes(), -2.5)) == 2.5);
  CHECK(c4_surrogate(d, d.sample([](double x) { return x * x; })) == doctest::Approx(2.0).epsilon(1e-9));
  const double c1 = c4_surrogate(d, test::cosine(d, 1.0));
  CHECK(c1 <= std::pow(pi, 4));
  CHECK(c1 >= 0.9 * std::pow(pi, 4));
  CHECK(c4_surrogate(d, test::cosine(d, 2.0)) > 100.0);
  CHECK_THROWS_AS(c4_surrogate(d, SpatialField(3, 0.0)), ValidationError);
}

TEST_CASE("measurement examples") {
  const auto ctx = test::heat_context(32, 96);
  SUBCASE("zero field") {
    const auto m = measure(ctx.zero_field(), ctx.window);
    CHECK(m.h2_space_norm == 0.0);
    CHECK(m.h2_trace_norm == 0.0);
    CHECK(m.combined_norm == 0.0);
  }
  SUBCASE("unit field") {
    auto one = ctx.zero_field();
    for (double& v : one.values()) v = 1.0;
    const auto m = measure(one, ctx.window);
    CHECK(m.h2_space_norm == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(m.h2_trace_norm == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(m.combined_norm == doctest::Approx(std::sqrt(2.0)).epsilon(1e-13));
    CHECK(m.lateral_trace.series.size() == 2);
    CHECK(m.lateral_trace.series[0].size() == ctx.window.window_steps() + 1);
  }
  SUBCASE("property: combined norm is homogeneous") {
    std::mt19937_64 rng(4);
    const auto u = forward_solve(ctx.op, test::gaussian_vector(rng, ctx.domain().nodes()), ctx.window);
    const auto base = measure(u, ctx.window);
    CHECK(base.combined_norm == doctest::Approx(std::hypot(base.h2_space_norm, base.h2_trace_norm)));
    for (double alpha : {-7.0, 0.01}) {
      auto au = u;
      for (double& v : au.values()) v *= alpha;
      CHECK(measure(au, ctx.window).combined_norm ==
            doctest::Approx(std::abs(alpha) * base.combined_norm).epsilon(1e-13));
    }
  }
  SUBCASE("off-grid measurement time") {
    const SpaceTimeField u(ctx.domain(), TimeAxis{0.0, 0.3, 5});
    CHECK_THROWS_AS(measure(u, ctx.window), OffGridError);
  }
}

TEST_CASE("property: the forward map is affine") {
  const auto ctx = test::heat_context(24, 72);
  EllipticOperator op;
  op.diffusion = [](double x) { return 1.0 + x * x; };
  op.drift = [](double x) { return std::cos(x); };
  op.reaction = [](double) { return -0.5; };
  const auto a = assemble_operator(ctx.domain(), op);
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    const SpaceTimeField f(ctx.domain(), ctx.window.axis(),
                           test::gaussian_vector(rng, ctx.window.axis().levels() * ctx.domain().nodes()));
    const auto g = test::gaussian_vector(rng, ctx.domain().nodes());
    const SpatialField zero(g.size(), 0.0);
    const auto both = forward_solve(a, f, g, ctx.window);
    const auto uf = forward_solve(a, f, zero, ctx.window);
    const auto ug = forward_solve(a, ctx.zero_field(), g, ctx.window);
    double err = 0.0, scale = 0.0;
    for (std::size_t idx = 0; idx < both.values().size(); ++idx) {
      err = std::max(err, std::abs(both.values()[idx] - uf.values()[idx] - ug.values()[idx]));
      scale = std::max(scale, std::abs(both.values()[idx]));
    }
    CHECK(err <= 1e-13 * scale);
  }
}

TEST_CASE("source stability probe") {
  const auto ctx = test::heat_context(32, 128);
  auto family = cosine_source_family(ctx, 6);
  REQUIRE(family.size() == 6);
  CHECK(family[2].param == 3.0);

  SUBCASE("zero member is degenerate") {
    const auto r = source_stability_probe({{0.0, ctx.zero_field()}}, ctx, 1.0);
    CHECK(r.rows[0].flag == ProbeFlag::degenerate);
    CHECK(std::isnan(r.rows[0].value));
  }
  SUBCASE("all ratios finite") {
    const auto r = source_stability_probe(family, ctx, 1.0);
    for (const auto& row : r.rows) {
      CHECK(row.flag == ProbeFlag::ok);
      CHECK(std::isfinite(row.value));
      CHECK(row.value > 0.0);
    }
    CHECK(r.max_value >= r.median_value);
    CHECK(r.violations == 0);
  }
  SUBCASE("property: ratios are invariant under scaling") {
    const auto base = source_stability_probe(family, ctx, 1.0);
    for (double alpha : {4.0, -0.125}) {
      auto scaled = family;
      for (auto& m : scaled) for (double& v : m.f.values()) v *= alpha;
      const auto r = source_stability_probe(scaled, ctx, 1.0);
      for (std::size_t m = 0; m < r.rows.size(); ++m) CHECK(r.rows[m].value == base.rows[m].value);
    }
    auto scaled = family;
    for (auto& m : scaled) for (double& v : m.f.values()) v *= 3.7;
    const auto r = source_stability_probe(scaled, ctx, 1.0);
    for (std::size_t m = 0; m < r.rows.size(); ++m) CHECK(r.rows[m].value == doctest::Approx(base.rows[m].value).epsilon(1e-13));
  }
  SUBCASE("max ratio is mesh-stable") {
    const auto fine_ctx = test::heat_context(64, 256);
    const auto coarse = source_stability_probe(family, ctx, 1.0, 0);
    const auto fine = source_stability_probe(cosine_source_family(fine_ctx, 6), fine_ctx, 1.0, 1);
    CHECK(fine.rows[0].mesh_level == 1);
    const double ratio = fine.max_value / coarse.max_value;
    CHECK(ratio <= 2.0);
    CHECK(ratio >= 0.5);
  }
  SUBCASE("inadmissible members are rejected") {
    const auto r = source_stability_probe({{1.0, growth_source(ctx)}}, ctx, 1.0);
    CHECK(r.rows[0].flag == ProbeFlag::rejected);
    const auto ok = source_stability_probe({{1.0, growth_source(ctx)}}, ctx, 2.0);
    CHECK(ok.rows[0].flag == ProbeFlag::ok);
  }
}

TEST_CASE("initial stability probe") {
  const auto ctx = test::heat_context(32, 128);

  SUBCASE("zero member is degenerate") {
    const auto r = initial_stability_probe({{0.0, SpatialField(ctx.domain().nodes(), 0.0)}}, ctx);
    CHECK(r.rows[0].flag == ProbeFlag::degenerate);
  }
  SUBCASE("normalized family has bounded, mesh-stable products") {
    const auto r = initial_stability_probe(cosine_initial_family(ctx, 8, true), ctx);
    for (const auto& row : r.rows) {
      CHECK(row.flag == ProbeFlag::ok);
      CHECK(std::isfinite(row.value));
      CHECK(row.combined_norm < std::exp(-1.0));
    }
    // P_k -> 0 as k grows.
    CHECK(r.rows.back().value < r.rows.front().value);
    const auto fine_ctx = test::heat_context(64, 256);
    const auto fine = initial_stability_probe(cosine_initial_family(fine_ctx, 8, true), fine_ctx, {100.0, true, 1});
    const double ratio = fine.max_value / r.max_value;
    CHECK(ratio <= 2.0);
    CHECK(ratio >= 0.5);
  }
  SUBCASE("un-normalized family is flagged as expected failure") {
    // P_k grows like k^2 until the combined norm reaches the round-off floor.
    const auto r = initial_stability_probe(cosine_initial_family(ctx, 8, false), ctx);
    const auto normalized = initial_stability_probe(cosine_initial_family(ctx, 8, true), ctx);
    CHECK(r.rows[0].flag == ProbeFlag::ok);
    CHECK(r.rows[2].value > r.rows[1].value);
    CHECK(r.rows[1].value > r.rows[0].value);
    for (std::size_t k = 1; k < r.rows.size(); ++k) {
      CHECK(r.rows[k].flag == ProbeFlag::expected_failure);
      CHECK(r.rows[k].value > 5.0 * normalized.max_value);
    }
  }
  SUBCASE("large members are rescaled or rejected") {
    const std::vector<InitialMember> one{{0.0, SpatialField(ctx.domain().nodes(), 1.0)}};
    const auto r = initial_stability_probe(one, ctx);
    CHECK(r.rows[0].scale == doctest::Approx(std::exp(-2.0) / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(r.rows[0].combined_norm == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
    CHECK(r.rows[0].value == doctest::Approx(2.0 * r.rows[0].scale).epsilon(1e-12));
    const auto rejected = initial_stability_probe(one, ctx, {100.0, false, 0});
    CHECK(rejected.rows[0].flag == ProbeFlag::rejected);
    CHECK(rejected.rows[0].scale < 1.0);
  }
  SUBCASE("products are not scale-invariant") {
    const auto g = test::cosine(ctx.domain(), 2.0, 1.0 / 16.0);
    auto g10 = g;
    for (double& v : g10) v *= 10.0;
    const auto r = initial_stability_probe({{1.0, g}, {1.0, g10}}, ctx, {1e9, false, 0});
    REQUIRE(r.rows[0].flag == ProbeFlag::ok);
    REQUIRE(r.rows[1].flag == ProbeFlag::ok);
    CHECK(r.rows[0].value != doctest::Approx(r.rows[1].value).epsilon(1e-3));
  }
  CHECK(to_string(ProbeFlag::expected_failure) == "expected_failure");
}

namespace {

std::pair<double, double> decomposition_residuals(std::size_t nx, std::size_t nt, bool with_source) {
  const auto ctx = test::heat_context(nx, nt);
  const auto f = with_source ? growth_source(ctx) : ctx.zero_field();
  const auto u = forward_solve(ctx.op, f, test::cosine(ctx.domain(), 1.0), ctx.window);
  const auto dec = decompose_time_derivative(u, f, ctx);
  return {dec.residual_source_free, dec.residual_terminal};
}

}  // namespace

TEST_CASE("decomposition of the time derivative") {
  const auto ctx = test::heat_context(32, 128);
  SUBCASE("zero source gives w = 0 and z = vartheta") {
    const auto u = forward_solve(ctx.op, test::cosine(ctx.domain(), 1.0), ctx.window);
    const auto dec = decompose_time_derivative(u, ctx.zero_field(), ctx);
    for (double v : dec.w.values()) CHECK(v == 0.0);
    CHECK(dec.z.values() == dec.vartheta.values());
    CHECK(dec.residual_sum == 0.0);
    CHECK_FALSE(dec.warning);
  }
  SUBCASE("vartheta = w + z holds with a source") {
    const auto f = growth_source(ctx);
    const auto u = forward_solve(ctx.op, f, test::cosine(ctx.domain(), 2.0), ctx.window);
    const auto dec = decompose_time_derivative(u, f, ctx);
    CHECK(dec.residual_sum <= 1e-12);
    CHECK_FALSE(dec.warning);
  }
  SUBCASE("non-solution input warns") {
    const auto u = SpaceTimeField::sample(ctx.domain(), ctx.window.axis(), [](double x, double t) { return x * t; });
    CHECK(decompose_time_derivative(u, ctx.zero_field(), ctx).warning);
  }
  SUBCASE("residuals shrink at second order") {
    for (bool with_source : {false, true}) {
      const auto [i0, ii0] = decomposition_residuals(32, 128, with_source);
      const auto [i1, ii1] = decomposition_residuals(64, 256, with_source);
      CHECK(i0 / i1 >= 3.0);
      CHECK(i0 / i1 <= 5.0);
      CHECK(ii0 / ii1 >= 3.0);
      CHECK(ii0 / ii1 <= 5.0);
    }
  }
}

TEST_CASE("log-convexity and the w bound") {
  const auto ctx = test::heat_context(64, 256);
  const auto zero = ctx.zero_field();
  const std::size_t nT = ctx.window.final_index();

  SUBCASE("single eigenmode is the equality case") {
    const auto z = forward_solve(ctx.op, test::cosine(ctx.domain(), 1.0), ctx.window);
    const auto r = check_log_convexity_and_w_bound(z, zero, zero, ctx, 1.0);
    REQUIRE(r.checked);
    double worst = 0.0;
    for (std::size_t n = 0; n <= nT; ++n) {
      const double bound = r.z_norms[n] - r.violations[n];
      worst = std::max(worst, std::abs(r.violations[n]) / bound);
    }
    CHECK(worst <= 1e-12);
    CHECK(r.min_second_difference >= -1e-12);
  }
  SUBCASE("two-mode margin matches the eigenexpansion") {
    const auto d = ctx.domain();
    auto g = test::cosine(d, 1.0);
    const auto g2 = test::cosine(d, 2.0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += g2[i];
    const auto z = forward_solve(ctx.op, g, ctx.window);
    const auto r = check_log_convexity_and_w_bound(z, zero, zero, ctx, 1.0);
    REQUIRE(nT % 2 == 0);
    const std::size_t half = nT / 2;
    const std::vector<std::pair<double, double>> modes{{1.0, 1.0}, {2.0, 1.0}};
    const double oracle = modal_norm(ctx, modes, half) -
                          std::sqrt(modal_norm(ctx, modes, 0) * modal_norm(ctx, modes, nT));
    CHECK(r.violations[half] < 0.0);
    CHECK(std::abs(r.violations[half] - oracle) <= 1e-6 * std::abs(oracle));
    CHECK(r.max_violation <= 1e-14);
    CHECK(r.min_second_difference >= -1e-8);
  }
  SUBCASE("property: log ||z(t)|| is convex for random initial data") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 5; ++trial) {
      const auto z = forward_solve(ctx.op, test::gaussian_vector(rng, ctx.domain().nodes()), ctx.window);
      const auto r = check_log_convexity_and_w_bound(z, zero, zero, ctx, 1.0);
      CHECK(r.min_second_difference >= -1e-8);
      CHECK(r.max_violation <= 1e-12);
    }
  }
  SUBCASE("drift skips the check with a notice") {
    EllipticOperator op = EllipticOperator::heat();
    op.drift = [](double) { return 1.0; };
    const SolverContext drift{ctx.window, assemble_operator(ctx.domain(), op)};
    const auto r = check_log_convexity_and_w_bound(zero, zero, zero, drift, 1.0);
    CHECK_FALSE(r.checked);
    CHECK_FALSE(r.notice.empty());
  }
  SUBCASE("vanishing final value is degenerate") {
    auto z = zero;
    for (std::size_t i = 0; i < z.nodes(); ++i) z(0, i) = 1.0;
    const auto r = check_log_convexity_and_w_bound(z, zero, zero, ctx, 1.0);
    CHECK(r.degenerate);
    CHECK_FALSE(r.notice.empty());
  }
  SUBCASE("time-independent source gives w = 0") {
    const auto f = SpaceTimeField::sample(ctx.domain(), ctx.window.axis(), [](double x, double) { return 1.0 + x; });
    const auto u = forward_solve(ctx.op, f, test::cosine(ctx.domain(), 1.0), ctx.window);
    const auto dec = decompose_time_derivative(u, f, ctx);
    const auto r = check_log_convexity_and_w_bound(dec.z, dec.w, f, ctx, 0.0);
    CHECK(r.w_ratio_sup == 0.0);
    CHECK(r.w_bound_holds);
  }
  SUBCASE("semigroup bound holds for an admissible growing source") {
    const auto f = growth_source(ctx);
    const double C0 = check_source_condition(f, ctx.window).min_C0;
    const auto u = forward_solve(ctx.op, f, test::cosine(ctx.domain(), 1.0), ctx.window);
    const auto dec = decompose_time_derivative(u, f, ctx);
    const auto r = check_log_convexity_and_w_bound(dec.z, dec.w, f, ctx, C0);
    CHECK(r.w_ratio_sup > 0.0);
    CHECK(r.w_bound_holds);
    const auto tight = check_log_convexity_and_w_bound(dec.z, dec.w, f, ctx, 0.1 * C0);
    CHECK_FALSE(tight.w_bound_holds);
  }
}

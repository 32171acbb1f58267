#include <doctest.h>

#include <sstream>

#include "parastab/field_io.hpp"
#include "parastab/grid.hpp"
#include "support.hpp"

using namespace parastab;
using parastab::test::pi;

TEST_CASE("spatial domain validates its invariants") {
  CHECK_THROWS_AS(SpatialDomain(0.0, 1.0, 7, {Side::left}), ValidationError);
  CHECK_THROWS_AS(SpatialDomain(1.0, 1.0, 16, {Side::left}), ValidationError);
  CHECK_THROWS_AS(SpatialDomain(0.0, 1.0, 16, {}), ValidationError);
  try {
    SpatialDomain(0.0, 1.0, 4, {Side::left});
  } catch (const ValidationError& e) {
    CHECK(e.key() == "nx");
  }
  const SpatialDomain d(-1.0, 3.0, 16, {Side::right, Side::left, Side::right});
  CHECK(d.spacing() == doctest::Approx(0.25));
  CHECK(d.nodes() == 17);
  CHECK(d.observed().size() == 2);
  CHECK(d.boundary_node(Side::right) == 16);
}

TEST_CASE("time window places T - delta1, T, T + delta1 on the grid") {
  const TimeWindow w(1.0, 0.5, 0.25, 256);
  CHECK(w.steps() >= 256);
  CHECK(w.steps() % 6 == 0);
  CHECK(w.axis().time(w.final_index()) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w.axis().time(w.window_begin()) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(w.axis().time(w.window_end()) == doctest::Approx(1.25).epsilon(1e-12));
  CHECK(w.axis().end() == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(w.window_steps() % 2 == 0);

  CHECK_THROWS_AS(TimeWindow(1.0, 0.5, 0.6, 64), ValidationError);
  CHECK_THROWS_AS(TimeWindow(0.2, 0.5, 0.3, 64), ValidationError);
  CHECK_THROWS_AS(TimeWindow(1.0, 0.5, 0.0, 64), ValidationError);
  CHECK_THROWS_AS(TimeWindow(-1.0, 0.5, 0.1, 64), ValidationError);
  CHECK_NOTHROW(TimeWindow(0.5, 0.25, 0.25, 64));
}

TEST_CASE("operator examples") {
  const auto d = SpatialDomain::unit(32);
  const auto heat = assemble_operator(d, EllipticOperator::heat());
  CHECK(heat.self_adjoint());
  CHECK(heat.max_reaction() == 0.0);

  SUBCASE("x^2 maps to 2 in the interior") {
    const auto aq = heat.apply(d.sample([](double x) { return x * x; }));
    for (std::size_t i = 1; i + 1 < d.nodes(); ++i) CHECK(aq[i] == doctest::Approx(2.0).epsilon(1e-10));
  }
  SUBCASE("constants are annihilated") {
    const auto aq = heat.apply(SpatialField(d.nodes(), 1.0));
    for (double v : aq) CHECK(v == 0.0);
  }
  SUBCASE("a = 1 + x, q = x gives 1 in the interior") {
    EllipticOperator op;
    op.diffusion = [](double x) { return 1.0 + x; };
    const auto a = assemble_operator(d, op);
    const auto aq = a.apply(d.sample([](double x) { return x; }));
    for (std::size_t i = 1; i + 1 < d.nodes(); ++i) CHECK(aq[i] == doctest::Approx(1.0).epsilon(1e-10));
  }
  SUBCASE("drift clears the self-adjoint flag") {
    EllipticOperator op = EllipticOperator::heat();
    op.drift = [](double x) { return x; };
    op.reaction = [](double x) { return 2.0 - x; };
    const auto a = assemble_operator(d, op);
    CHECK_FALSE(a.self_adjoint());
    CHECK(a.max_reaction() == doctest::Approx(2.0));
  }
}

TEST_CASE("ellipticity violation names the grid point") {
  const auto d = SpatialDomain::unit(16);
  EllipticOperator op;
  op.diffusion = [](double x) { return x - 0.5; };
  try {
    (void)assemble_operator(d, op);
    FAIL("expected EllipticityError");
  } catch (const EllipticityError& e) {
    CHECK(e.node() == 0);
    CHECK(e.x() == 0.0);
  }
}

TEST_CASE("property: W A is symmetric for random self-adjoint coefficients") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (int trial = 0; trial < 5; ++trial) {
    const double a1 = u(rng), a2 = u(rng), c1 = u(rng);
    EllipticOperator op;
    op.diffusion = [=](double x) { return a1 + a2 * x * x; };
    op.reaction = [=](double x) { return c1 * std::sin(3.0 * x); };
    const auto d = SpatialDomain::unit(20);
    const auto a = assemble_operator(d, op);
    const auto w = trapezoid_weights(d.nodes(), d.spacing());
    for (std::size_t i = 0; i + 1 < d.nodes(); ++i) {
      CHECK(w[i] * a.upper()[i] == doctest::Approx(w[i + 1] * a.lower()[i + 1]).epsilon(1e-13));
    }
  }
}

TEST_CASE("forward solve examples") {
  const auto ctx = test::heat_context(64, 256);
  const auto& d = ctx.domain();

  SUBCASE("zero data gives zero") {
    const auto u = forward_solve(ctx.op, SpatialField(d.nodes(), 0.0), ctx.window);
    for (double v : u.values()) CHECK(v == 0.0);
  }
  SUBCASE("constants are preserved") {
    const auto u = forward_solve(ctx.op, SpatialField(d.nodes(), 1.0), ctx.window);
    for (double v : u.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-13));
  }
  SUBCASE("initial value is reproduced exactly") {
    const auto g = test::cosine(d, 3.0);
    const auto u = forward_solve(ctx.op, g, ctx.window);
    CHECK(test::max_abs_diff(u.snapshot(0), g) == 0.0);
  }
}

namespace {

double eigenmode_error(std::size_t nx, std::size_t nt) {
  const auto ctx = test::heat_context(nx, nt);
  const auto u = forward_solve(ctx.op, test::cosine(ctx.domain(), 1.0), ctx.window);
  double err = 0.0;
  for (std::size_t n = 0; n < u.levels(); ++n) {
    const double t = u.axis().time(n);
    for (std::size_t i = 0; i < u.nodes(); ++i) {
      err = std::max(err, std::abs(u(n, i) - std::exp(-pi * pi * t) * std::cos(pi * ctx.domain().node(i))));
    }
  }
  return err;
}

}  // namespace

TEST_CASE("forward solve converges at second order on the eigenmode") {
  const double coarse = eigenmode_error(64, 256);
  const double fine = eigenmode_error(128, 512);
  CHECK(coarse <= 1e-3);
  CHECK(coarse / fine >= 3.5);
  CHECK(coarse / fine <= 4.5);
}

TEST_CASE("property: mass is conserved without source or reaction") {
  const auto ctx = test::heat_context(40, 120);
  std::mt19937_64 rng(5);
  const auto g = test::gaussian_vector(rng, ctx.domain().nodes());
  const auto u = forward_solve(ctx.op, g, ctx.window);
  const auto w = trapezoid_weights(u.nodes(), ctx.domain().spacing());
  auto mass = [&](std::size_t n) {
    double m = 0.0;
    for (std::size_t i = 0; i < u.nodes(); ++i) m += w[i] * u(n, i);
    return m;
  };
  const double m0 = mass(0);
  for (std::size_t n = 1; n < u.levels(); ++n) CHECK(mass(n) == doctest::Approx(m0).epsilon(1e-12));
}

TEST_CASE("singular step system reports the step") {
  const auto d = SpatialDomain::unit(8);
  const TimeWindow w(1.0, 0.5, 0.25, 12);
  EllipticOperator op;
  op.ellipticity_lower_bound = 1e-300;
  op.diffusion = [](double) { return 1e-300; };
  const double c = 2.0 / w.step();
  op.reaction = [c](double) { return c; };
  const auto a = assemble_operator(d, op);
  try {
    (void)forward_solve(a, SpatialField(d.nodes(), 1.0), w);
    FAIL("expected SingularStepError");
  } catch (const SingularStepError& e) {
    CHECK(e.step() == 1);
  }
}

TEST_CASE("adjoint solve") {
  const auto ctx = test::heat_context(24, 60);
  const auto& d = ctx.domain();

  SUBCASE("zero payload gives zero") {
    const auto adj = adjoint_solve(ctx.op, AdjointPayload{}, ctx.window);
    for (double v : adj.state.values()) CHECK(v == 0.0);
    for (double v : adj.source_gradient.values()) CHECK(v == 0.0);
    for (double v : adj.initial_gradient) CHECK(v == 0.0);
  }

  SUBCASE("property: duality holds for random inputs") {
    EllipticOperator op;
    op.diffusion = [](double x) { return 1.0 + 0.5 * std::sin(2.0 * x); };
    op.drift = [](double x) { return 0.7 - x; };
    op.reaction = [](double x) { return -0.3 * x; };
    const auto a = assemble_operator(d, op);
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 10; ++trial) {
      const SpaceTimeField f(d, ctx.window.axis(), test::gaussian_vector(rng, ctx.window.axis().levels() * d.nodes()));
      const auto g = test::gaussian_vector(rng, d.nodes());
      AdjointPayload r;
      r.terminal = test::gaussian_vector(rng, d.nodes());
      r.interior = SpaceTimeField(d, ctx.window.axis(), test::gaussian_vector(rng, f.values().size()));
      for (std::size_t s = 0; s < d.observed().size(); ++s) {
        r.boundary.push_back(test::gaussian_vector(rng, ctx.window.window_steps() + 1));
      }
      const double lhs = payload_pairing(forward_solve(a, f, g, ctx.window), r, ctx.window);
      const auto adj = adjoint_solve(a, r, ctx.window);
      double rhs = 0.0, nf = 0.0, ng = 0.0;
      for (std::size_t idx = 0; idx < f.values().size(); ++idx) {
        rhs += f.values()[idx] * adj.source_gradient.values()[idx];
        nf += f.values()[idx] * f.values()[idx] + adj.source_gradient.values()[idx] * adj.source_gradient.values()[idx];
      }
      for (std::size_t i = 0; i < g.size(); ++i) {
        rhs += g[i] * adj.initial_gradient[i];
        ng += g[i] * g[i] + adj.initial_gradient[i] * adj.initial_gradient[i];
      }
      CHECK(std::abs(lhs - rhs) / std::sqrt(nf + ng) <= 1e-10);
    }
  }

  SUBCASE("terminal eigenmode propagates backward as the decaying mode") {
    AdjointPayload r;
    r.terminal = test::cosine(d, 2.0);
    const auto adj = adjoint_solve(ctx.op, r, ctx.window);
    const double gain = test::cn_gain(d, ctx.window.step(), 2.0);
    const std::size_t nT = ctx.window.final_index();
    for (std::size_t n = 0; n < adj.state.levels(); ++n) {
      const double amp = n <= nT ? std::pow(gain, static_cast<double>(nT - n)) : 0.0;
      for (std::size_t i = 0; i < d.nodes(); ++i) {
        CHECK(adj.state(n, i) == doctest::Approx(amp * (*r.terminal)[i]).epsilon(1e-10).scale(1.0));
      }
    }
  }
}

TEST_CASE("time shift") {
  const auto ctx = test::heat_context(16, 48);
  const auto u = SpaceTimeField::sample(ctx.domain(), ctx.window.axis(), [](double x, double t) { return x + t * t; });
  const auto shifted = time_shift(u, ctx.window);
  CHECK(shifted.axis().origin == 0.0);
  CHECK(shifted.levels() == ctx.window.window_steps() + 1);
  // t = 0.75 becomes t~ = 0 and t = T becomes t~ = delta1.
  CHECK(test::max_abs_diff(shifted.snapshot(0), u.snapshot(ctx.window.window_begin())) == 0.0);
  const auto mid = shifted.axis().index_of(0.25);
  REQUIRE(mid.has_value());
  CHECK(test::max_abs_diff(shifted.snapshot(*mid), u.snapshot(ctx.window.final_index())) == 0.0);

  SUBCASE("round trip is bit-exact") {
    const auto back = inverse_time_shift(shifted, ctx.window);
    CHECK(back.axis().origin == doctest::Approx(0.75));
    CHECK(back.values() == shifted.values());
    CHECK(time_shift(SpaceTimeField(ctx.domain(), u.axis(), u.values()), ctx.window).values() == back.values());
  }
  SUBCASE("constant field stays constant") {
    const auto c = SpaceTimeField::sample(ctx.domain(), ctx.window.axis(), [](double, double) { return 3.5; });
    const auto sc = time_shift(c, ctx.window);
    for (double v : sc.values()) CHECK(v == 3.5);
  }
  SUBCASE("off-grid window is rejected") {
    const SpaceTimeField off(ctx.domain(), TimeAxis{0.0, 0.3, 5});
    CHECK_THROWS_AS(time_shift(off, ctx.window), OffGridError);
  }
}

TEST_CASE("time derivative") {
  const auto ctx = test::heat_context(16, 96);
  const auto& d = ctx.domain();
  const auto& axis = ctx.window.axis();
  SUBCASE("constant in time gives zero") {
    const auto c = SpaceTimeField::sample(d, axis, [](double x, double) { return std::sin(x); });
    const auto dc = time_derivative(c);
    for (double v : dc.values()) CHECK(std::abs(v) <= 1e-12);
  }
  SUBCASE("linear and quadratic fields are differentiated exactly") {
    const auto lin = time_derivative(SpaceTimeField::sample(d, axis, [](double, double t) { return t; }));
    for (double v : lin.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-10));
    const auto quad = time_derivative(SpaceTimeField::sample(d, axis, [](double, double t) { return t * t; }));
    for (std::size_t n = 0; n < quad.levels(); ++n) CHECK(quad(n, 0) == doctest::Approx(2.0 * axis.time(n)).epsilon(1e-9).scale(1.0));
  }
  SUBCASE("eigenmode derivative is second-order accurate") {
    auto error = [&](std::size_t nt) {
      const TimeWindow w(1.0, 0.5, 0.25, nt);
      const auto e = SpaceTimeField::sample(d, w.axis(), [](double x, double t) {
        return std::exp(-pi * pi * t) * std::cos(pi * x);
      });
      const auto de = time_derivative(e);
      double err = 0.0;
      for (std::size_t idx = 0; idx < e.values().size(); ++idx) {
        err = std::max(err, std::abs(de.values()[idx] + pi * pi * e.values()[idx]));
      }
      return err;
    };
    const double ratio = error(96) / error(192);
    CHECK(ratio >= 3.5);
    CHECK(ratio <= 4.5);
  }
  CHECK_THROWS_AS(time_derivative(SpaceTimeField(d, TimeAxis{0.0, 0.1, 1})), ValidationError);
}

TEST_CASE("discrete norms") {
  const auto d = SpatialDomain::unit(128);
  CHECK(l2_space_norm(d, SpatialField(d.nodes(), 1.0)) == doctest::Approx(1.0).epsilon(1e-14));
  // Closed form: int cos^2 = 1/2, int (pi sin)^2 = pi^2/2, int (pi^2 cos)^2 = pi^4/2.
  const double h2 = std::sqrt((1.0 + pi * pi + pi * pi * pi * pi) / 2.0);
  CHECK(h2 == doctest::Approx(7.358).epsilon(1e-4));
  CHECK(h2_space_norm(d, test::cosine(d, 1.0)) == doctest::Approx(h2).epsilon(2e-3));

  LateralTrace zero{TimeAxis{0.0, 0.1, 10}, {Side::left, Side::right}, {std::vector<double>(11), std::vector<double>(11)}};
  CHECK(h2_trace_norm(zero) == 0.0);

  LateralTrace short_trace{TimeAxis{0.0, 0.1, 3}, {Side::left}, {std::vector<double>(4, 1.0)}};
  CHECK_THROWS_AS(h2_trace_norm(short_trace), ValidationError);

  SUBCASE("property: absolute homogeneity") {
    std::mt19937_64 rng(3);
    const auto ctx = test::heat_context(16, 48);
    for (double alpha : {-3.0, 0.5, 1e3}) {
      const auto q = test::gaussian_vector(rng, d.nodes());
      auto aq = q;
      for (double& v : aq) v *= alpha;
      CHECK(l2_space_norm(d, aq) == doctest::Approx(std::abs(alpha) * l2_space_norm(d, q)).epsilon(1e-13));
      CHECK(h2_space_norm(d, aq) == doctest::Approx(std::abs(alpha) * h2_space_norm(d, q)).epsilon(1e-13));
      const SpaceTimeField f(ctx.domain(), ctx.window.axis(),
                             test::gaussian_vector(rng, ctx.window.axis().levels() * ctx.domain().nodes()));
      auto af = f;
      for (double& v : af.values()) v *= alpha;
      CHECK(l2_spacetime_norm(af) == doctest::Approx(std::abs(alpha) * l2_spacetime_norm(f)).epsilon(1e-13));
      const auto tr = lateral_trace(f, ctx.window);
      const auto atr = lateral_trace(af, ctx.window);
      CHECK(h2_trace_norm(atr) == doctest::Approx(std::abs(alpha) * h2_trace_norm(tr)).epsilon(1e-13));
    }
  }
}

TEST_CASE("field CSV round trip") {
  const auto ctx = test::heat_context(8, 12);
  std::mt19937_64 rng(9);
  const SpaceTimeField f(ctx.domain(), ctx.window.axis(),
                         test::gaussian_vector(rng, ctx.window.axis().levels() * ctx.domain().nodes()));
  std::stringstream io;
  write_field_csv(io, f, ctx.window);
  const auto csv = read_field_csv(io);
  CHECK(csv.rows == f.levels());
  CHECK(csv.columns == f.nodes());
  CHECK(csv.values == f.values());
  CHECK(csv.h == ctx.domain().spacing());
  CHECK(csv.k == ctx.window.step());
  CHECK(csv.T == 1.0);
  CHECK(csv.delta1 == 0.25);
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(1.0 / 3.0).size() <= 19);

  std::stringstream bad("h=1,k=2\n1,2\n");
  CHECK_THROWS_AS(read_field_csv(bad), ValidationError);
}

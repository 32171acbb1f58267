#include "parastab/cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>

#include "parastab/carleman.hpp"
#include "parastab/field_io.hpp"
#include "parastab/reconstruct.hpp"
#include "parastab/stability.hpp"

namespace parastab {

namespace {

const std::vector<std::string> kSubcommands = {"forward",   "carleman-audit", "stability-probe",
                                               "decompose", "reconstruct",    "rate"};

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::string_view rest(text);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    std::string_view item = rest.substr(0, comma);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    double value = 0.0;
    const auto result = std::from_chars(item.data(), item.data() + item.size(), value);
    if (item.empty() || result.ec != std::errc{} || result.ptr != item.data() + item.size()) {
      throw ValidationError(key, "malformed number '" + std::string(item) + "'");
    }
    out.push_back(value);
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_number(values[i]);
  return out;
}

struct Parsed {
  RunConfig config;
  std::optional<std::string> help;
};

Parsed parse_internal(std::span<const std::string> args) {
  if (args.empty()) throw ValidationError("subcommand", "missing; expected one of forward, carleman-audit, "
                                                        "stability-probe, decompose, reconstruct, rate");
  Parsed parsed;
  RunConfig& c = parsed.config;
  c.subcommand = args[0];
  if (c.subcommand == "--help" || c.subcommand == "-h") {
    parsed.help = "usage: parastab <forward|carleman-audit|stability-probe|decompose|reconstruct|rate> [flags]\n";
    return parsed;
  }
  if (std::find(kSubcommands.begin(), kSubcommands.end(), c.subcommand) == kSubcommands.end()) {
    throw ValidationError("subcommand", "unknown subcommand '" + c.subcommand + "'");
  }
  const bool inverse = c.subcommand == "reconstruct" || c.subcommand == "rate";
  if (inverse) {
    c.T = 0.5;
    c.delta0 = 0.25;
    c.noise = c.subcommand == "rate" ? std::vector<double>{1e-1, 1e-2, 1e-3} : std::vector<double>{1e-2};
  }

  CLI::App app{"parastab " + c.subcommand, "parastab"};
  double delta1 = 0.0;
  std::string s_text, noise_text;
  const char* env_out = std::getenv("PARASTAB_OUT");
  std::string out_dir = env_out != nullptr && *env_out != '\0' ? env_out : "parastab_out";

  app.add_option("--nx", c.nx, "spatial cells");
  app.add_option("--nt", c.nt, "requested time steps over (0, T + delta0)");
  app.add_option("--T", c.T, "final measurement time");
  app.add_option("--delta0", c.delta0, "extension beyond T");
  auto* d1 = app.add_option("--delta1", delta1, "measurement half-width (default min(delta0, T)/2)");
  app.add_option("--gamma", c.gamma, "observed boundary: left, right or both");
  app.add_option("--f", c.f, "source: zero, const:c, eigenmode:k, growth:k");
  app.add_option("--g", c.g, "initial value: zero, const:c, eigenmode:k");
  app.add_option("--lambda", c.lambda, "weight sharpness");
  auto* s_opt = app.add_option("--s", s_text, "comma list of Carleman parameters s");
  app.add_option("--p", c.p, "exponent selector 0 or 1");
  app.add_option("--boundary", c.boundary, "boundary weighting: exp or literal");
  app.add_option("--C0", c.C0, "admissibility constant");
  auto* noise_opt = app.add_option("--noise", noise_text, "comma list of relative noise levels");
  app.add_option("--alpha0", c.alpha0, "regularization prefactor, alpha = alpha0 eps^2");
  app.add_option("--seed", c.seed, "RNG seed");
  app.add_option("--mode", c.mode, "reconstruction mode: separable or full");
  app.add_option("--max-iters", c.max_iters, "optimizer iteration cap");
  app.add_option("--repeats", c.repeats, "noise realizations per rate level");
  app.add_option("--M0", c.M0, "bound on the C4 surrogate for the initial-value probe");
  app.add_option("--out", out_dir, "output directory (default $PARASTAB_OUT or parastab_out)");
  app.set_config("--config", "", "flat key=value configuration file");
  app.allow_config_extras(false);

  std::vector<std::string> rest(args.begin() + 1, args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    parsed.help = app.help();
    return parsed;
  } catch (const CLI::ParseError& e) {
    std::string key = "flag";
    const std::string what = e.what();
    const auto dash = what.find("--");
    if (dash != std::string::npos) {
      const auto end = what.find_first_of(" \n\t,:", dash);
      key = what.substr(dash + 2, end == std::string::npos ? std::string::npos : end - dash - 2);
    }
    throw ValidationError(key, what);
  }

  if (d1->count() > 0) c.delta1 = delta1;
  if (s_opt->count() > 0) c.s = parse_list("s", s_text);
  if (noise_opt->count() > 0) c.noise = parse_list("noise", noise_text);
  if (!c.delta1) c.delta1 = std::min(c.delta0, c.T) / 2.0;
  c.out = out_dir;
  return parsed;
}

std::vector<Side> parse_gamma(const std::string& text) {
  if (text == "left") return {Side::left};
  if (text == "right") return {Side::right};
  if (text == "both") return {Side::left, Side::right};
  throw ValidationError("gamma", "expected left, right or both, got '" + text + "'");
}

struct FieldSpec {
  std::string kind;
  double value = 0.0;
};

FieldSpec parse_field_spec(const std::string& key, const std::string& text, bool time_dependent) {
  FieldSpec spec;
  const auto colon = text.find(':');
  spec.kind = text.substr(0, colon);
  if (spec.kind == "zero") {
    if (colon != std::string::npos) throw ValidationError(key, "zero takes no argument");
    return spec;
  }
  const bool known = spec.kind == "const" || spec.kind == "eigenmode" || (time_dependent && spec.kind == "growth");
  if (!known || colon == std::string::npos) throw ValidationError(key, "unrecognized field '" + text + "'");
  const auto values = parse_list(key, text.substr(colon + 1));
  if (values.size() != 1) throw ValidationError(key, "expected one argument in '" + text + "'");
  spec.value = values[0];
  if (spec.kind != "const" && !(spec.value >= 0.0 && spec.value == std::floor(spec.value))) {
    throw ValidationError(key, "mode index must be a nonnegative integer");
  }
  return spec;
}

double field_value(const FieldSpec& spec, double r, double t, double T) {
  const double mode = std::cos(spec.value * std::numbers::pi * r);
  if (spec.kind == "zero") return 0.0;
  if (spec.kind == "const") return spec.value;
  if (spec.kind == "eigenmode") return mode;
  return std::exp(t - T) * (2.0 + mode);  // growth
}

// Everything the subcommands need, validated up front.
struct Setup {
  RunConfig config;
  SolverContext ctx;
  FieldSpec f;
  FieldSpec g;
  WeightConfig weights;
  ReconstructionMode mode;
};

Setup validate(const RunConfig& c) {
  if (c.nx < 8) throw ValidationError("nx", "at least 8 cells are required");
  SpatialDomain domain(0.0, 1.0, c.nx, parse_gamma(c.gamma));
  TimeWindow window(c.T, c.delta0, c.delta1.value_or(std::min(c.delta0, c.T) / 2.0), c.nt);
  auto f = parse_field_spec("f", c.f, true);
  auto g = parse_field_spec("g", c.g, false);
  WeightConfig weights;
  weights.lambda = c.lambda;
  weights.s_values = c.s;
  weights.p = c.p;
  weights.boundary = parse_boundary_weighting(c.boundary);
  weights.validate();
  if (!(std::isfinite(c.C0) && c.C0 >= 0.0)) throw ValidationError("C0", "must be nonnegative");
  if (!(std::isfinite(c.alpha0) && c.alpha0 >= 0.0)) throw ValidationError("alpha0", "must be nonnegative");
  if (!(std::isfinite(c.M0) && c.M0 > 0.0)) throw ValidationError("M0", "must be positive");
  for (double eps : c.noise) {
    if (!(std::isfinite(eps) && eps >= 0.0)) throw ValidationError("noise", "levels must be nonnegative");
  }
  if (c.subcommand == "rate") {
    if (c.noise.size() < 3) throw ValidationError("noise", "the rate experiment needs at least 3 levels");
    for (std::size_t i = 1; i < c.noise.size(); ++i) {
      if (!(c.noise[i] < c.noise[i - 1])) throw ValidationError("noise", "levels must be strictly decreasing");
    }
  }
  if (c.subcommand == "reconstruct" && c.noise.empty()) throw ValidationError("noise", "one level is required");
  if (c.repeats == 0) throw ValidationError("repeats", "must be positive");
  const auto mode = parse_reconstruction_mode(c.mode);
  auto op = assemble_operator(domain, EllipticOperator::heat());
  return Setup{c, SolverContext{window, std::move(op)}, f, g, weights, mode};
}

SpaceTimeField make_source(const Setup& s) {
  const auto& d = s.ctx.domain();
  return SpaceTimeField::sample(d, s.ctx.window.axis(), [&](double x, double t) {
    return field_value(s.f, (x - d.x_min()) / d.length(), t, s.ctx.window.final_time());
  });
}

SpatialField make_initial(const Setup& s) {
  const auto& d = s.ctx.domain();
  return d.sample([&](double x) { return field_value(s.g, (x - d.x_min()) / d.length(), 0.0, 0.0); });
}

std::string field_csv(const SpaceTimeField& field, const TimeWindow& window) {
  std::ostringstream out;
  write_field_csv(out, field, window);
  return out.str();
}

class Summary {
 public:
  explicit Summary(RunReport& report) : report_(report) {}
  void add(const std::string& key, double value) { report_.summary.emplace_back(key, format_number(value)); }
  void add(const std::string& key, std::size_t value) { report_.summary.emplace_back(key, std::to_string(value)); }
  void add(const std::string& key, bool value) { report_.summary.emplace_back(key, value ? "true" : "false"); }
  void add(const std::string& key, const std::string& value) { report_.summary.emplace_back(key, value); }

 private:
  RunReport& report_;
};

// ---------------------------------------------------------------------------
// Subcommands

void run_forward(const Setup& s, RunReport& report) {
  const auto f = make_source(s);
  const auto g = make_initial(s);
  const auto u = forward_solve(s.ctx.op, f, g, s.ctx.window);
  const auto data = measure(u, s.ctx.window);
  double max_abs = 0.0;
  for (double v : u.values()) max_abs = std::max(max_abs, std::abs(v));

  report.artifacts.emplace_back("solution.csv", field_csv(u, s.ctx.window));
  Summary sum(report);
  sum.add("time_steps", s.ctx.window.steps());
  sum.add("time_step", s.ctx.window.step());
  sum.add("max_abs_u", max_abs);
  sum.add("l2_final_snapshot", l2_space_norm(s.ctx.domain(), data.final_snapshot));
  sum.add("h2_space_norm", data.h2_space_norm);
  sum.add("h2_trace_norm", data.h2_trace_norm);
  sum.add("combined_norm", data.combined_norm);
}

void run_carleman(const Setup& s, RunReport& report) {
  const auto& window = s.ctx.window;
  const auto f = make_source(s);
  const auto u = forward_solve(s.ctx.op, f, make_initial(s), window);
  const auto v = time_derivative(time_shift(u, window));
  const auto fv = time_derivative(time_shift(f, window));
  const auto weights = eval_weights(s.weights, window, s.ctx.domain());
  const auto bounds = check_weight_bounds(weights);
  const auto sweep = constant_sweep(v, fv, weights, s.weights, &s.ctx.op);

  report.artifacts.emplace_back("sweep.csv", sweep_csv(sweep, s.weights.boundary, s.weights.lambda, window.delta1()));

  Summary sum(report);
  sum.add("M", weights.M);
  sum.add("c1", weights.c1);
  sum.add("s0", default_s0(weights));
  sum.add("s1", threshold_s1(default_s0(weights), sweep));
  sum.add("max_theta_plus_M", bounds.max_theta_plus_M);
  sum.add("sup_dtheta_over_rho2", bounds.sup_dtheta_over_rho2);
  sum.add("min_theta_mid_plus_c1", bounds.min_theta_mid_plus_c1);
  sum.add("max_over_median", sweep.max_over_median);
  sum.add("violations", sweep.violations);
  sum.add("residual_warning", sweep.residual_warning);
  if (sweep.violations > 0) report.exit_code = 2;
}

void run_probe(const Setup& s, RunReport& report) {
  const auto& c = s.config;
  std::vector<ProbeResult> source, normalized, raw;
  for (std::size_t level = 0; level < 2; ++level) {
    const std::size_t factor = std::size_t{1} << level;
    const SolverContext ctx = level == 0
                                  ? s.ctx
                                  : SolverContext{TimeWindow(c.T, c.delta0, s.ctx.window.delta1(), c.nt * factor),
                                                  assemble_operator(SpatialDomain(0.0, 1.0, c.nx * factor,
                                                                                  parse_gamma(c.gamma)),
                                                                    EllipticOperator::heat())};
    source.push_back(source_stability_probe(cosine_source_family(ctx, 6), ctx, c.C0, level));
    InitialProbeOptions options{c.M0, true, level};
    normalized.push_back(initial_stability_probe(cosine_initial_family(ctx, 8, true), ctx, options));
    raw.push_back(initial_stability_probe(cosine_initial_family(ctx, 8, false), ctx, options));
  }
  report.artifacts.emplace_back("source_probe.csv", probe_csv({&source[0], &source[1]}));
  report.artifacts.emplace_back("initial_probe.csv", probe_csv({&normalized[0], &normalized[1], &raw[0], &raw[1]}));

  std::size_t expected = 0, violations = 0;
  for (const auto* r : {&source[0], &source[1], &normalized[0], &normalized[1], &raw[0], &raw[1]}) {
    violations += r->violations;
    for (const auto& row : r->rows) expected += row.flag == ProbeFlag::expected_failure ? 1 : 0;
  }
  Summary sum(report);
  sum.add("source_max_ratio_level0", source[0].max_value);
  sum.add("source_max_ratio_level1", source[1].max_value);
  sum.add("initial_max_product_level0", normalized[0].max_value);
  sum.add("initial_max_product_level1", normalized[1].max_value);
  sum.add("expected_failure_rows", expected);
  sum.add("violations", violations);
  if (violations > 0) report.exit_code = 2;
}

void run_decompose(const Setup& s, RunReport& report) {
  const auto& window = s.ctx.window;
  const auto f = make_source(s);
  const auto u = forward_solve(s.ctx.op, f, make_initial(s), window);
  const auto dec = decompose_time_derivative(u, f, s.ctx);
  const auto lc = check_log_convexity_and_w_bound(dec.z, dec.w, f, s.ctx, s.config.C0);

  report.artifacts.emplace_back("vartheta.csv", field_csv(dec.vartheta, window));
  report.artifacts.emplace_back("w.csv", field_csv(dec.w, window));
  report.artifacts.emplace_back("z.csv", field_csv(dec.z, window));
  std::ostringstream csv;
  csv << "n,t,z_norm,violation\n";
  for (std::size_t n = 0; n < lc.z_norms.size(); ++n) {
    csv << n << ',' << format_number(window.axis().time(n)) << ',' << format_number(lc.z_norms[n]) << ','
        << format_number(n < lc.violations.size() ? lc.violations[n] : 0.0) << '\n';
  }
  report.artifacts.emplace_back("log_convexity.csv", csv.str());

  Summary sum(report);
  sum.add("residual_source_free", dec.residual_source_free);
  sum.add("residual_terminal", dec.residual_terminal);
  sum.add("residual_sum", dec.residual_sum);
  sum.add("equation_residual", dec.equation_residual);
  sum.add("log_convexity_checked", lc.checked);
  if (!lc.notice.empty()) sum.add("notice", lc.notice);
  sum.add("max_violation", lc.max_violation);
  sum.add("min_log_second_difference", lc.min_second_difference);
  sum.add("w_ratio_sup", lc.w_ratio_sup);
  sum.add("w_bound_holds", lc.w_bound_holds);
}

// Truth for the inverse subcommands: phi and g with cosine coefficients 1/(1+j)^2.
struct InverseSetup {
  InverseProblemSpec spec;
  std::vector<double> truth;
};

InverseSetup inverse_setup(const Setup& s) {
  InverseSetup out;
  out.spec.mode = s.mode;
  out.spec.max_iters = s.config.max_iters;
  out.spec.seed = s.config.seed;
  out.spec.C0 = s.config.C0;
  out.spec.source_modes = s.mode == ReconstructionMode::separable ? 3 : 0;
  out.spec.initial_modes = 4;
  const auto& domain = s.ctx.domain();
  std::vector<double> phi_coeffs = {1.0, 0.25, 1.0 / 9.0};
  if (s.mode == ReconstructionMode::separable) {
    out.truth = phi_coeffs;
  } else {
    const std::size_t levels = s.ctx.window.axis().levels();
    for (std::size_t n = 0; n < levels; ++n) {
      for (std::size_t i = 0; i < domain.nodes(); ++i) {
        const double r = (domain.node(i) - domain.x_min()) / domain.length();
        double v = 0.0;
        for (std::size_t j = 0; j < phi_coeffs.size(); ++j) {
          v += phi_coeffs[j] * std::cos(static_cast<double>(j) * std::numbers::pi * r);
        }
        out.truth.push_back(v);
      }
    }
  }
  for (std::size_t j = 0; j < 4; ++j) out.truth.push_back(1.0 / ((1.0 + j) * (1.0 + j)));
  return out;
}

void run_reconstruct(const Setup& s, RunReport& report) {
  auto inv = inverse_setup(s);
  const double eps = s.config.noise.front();
  inv.spec.noise_level = eps;
  inv.spec.alpha_f = inv.spec.alpha_g = s.config.alpha0 * eps * eps;
  const Parameterization param(inv.spec, s.ctx);
  const AdmissiblePair pair{param.source(inv.truth), param.initial(inv.truth), inv.spec.C0, 0.0};
  const auto data = synthesize_data(pair, inv.spec, s.ctx);
  const std::vector<double> init(param.size(), 0.0);
  const auto result = minimize(inv.spec, param, data, init, inv.truth);

  const auto& domain = s.ctx.domain();
  const std::size_t nT = s.ctx.window.final_index();
  std::ostringstream csv;
  csv << "x,f_true_T,f_est_T,g_true,g_est\n";
  for (std::size_t i = 0; i < domain.nodes(); ++i) {
    csv << format_number(domain.node(i)) << ',' << format_number(pair.f(nT, i)) << ','
        << format_number(result.f_est(nT, i)) << ',' << format_number(pair.g[i]) << ','
        << format_number(result.g_est[i]) << '\n';
  }
  report.artifacts.emplace_back("reconstruction.csv", csv.str());
  std::ostringstream history;
  history << "iteration,objective\n";
  for (std::size_t n = 0; n < result.misfit_history.size(); ++n) {
    history << n << ',' << format_number(result.misfit_history[n]) << '\n';
  }
  report.artifacts.emplace_back("history.csv", history.str());

  Summary sum(report);
  sum.add("mode", to_string(inv.spec.mode));
  sum.add("eps", eps);
  sum.add("alpha", inv.spec.alpha_f);
  sum.add("err_f", *result.err_f);
  sum.add("err_g", *result.err_g);
  sum.add("iterations", result.iterations);
  sum.add("converged", result.converged);
  sum.add("stalled", result.stalled);
  sum.add("final_objective", result.final_objective);
  sum.add("combined_norm_noisy", data.combined_norm);
}

void run_rate(const Setup& s, RunReport& report) {
  const auto inv = inverse_setup(s);
  const Parameterization param(inv.spec, s.ctx);
  const auto rates = rate_experiment(inv.spec, s.config.noise, inv.truth, param, s.config.alpha0, s.config.repeats);

  report.artifacts.emplace_back("rate.csv", rate_csv(rates));

  Summary sum(report);
  sum.add("mode", to_string(inv.spec.mode));
  sum.add("source_slope", rates.source_slope);
  sum.add("log_product_variation", rates.log_product_variation);
  std::vector<double> products = rates.log_products;
  sum.add("log_products", join(products));
}

std::string summary_text(const RunReport& report, const std::string& subcommand) {
  std::ostringstream out;
  out << "subcommand=" << subcommand << '\n';
  for (const auto& [key, value] : report.summary) out << key << '=' << value << '\n';
  out << "exit_code=" << report.exit_code << '\n';
  return out.str();
}

}  // namespace

std::string sweep_csv(const SweepResult& sweep, BoundaryWeighting mode, double lambda, double delta1) {
  std::ostringstream csv;
  csv << "s,p,lhs,rhs,ratio,boundary_mode,lambda,delta1\n";
  for (const auto& row : sweep.rows) {
    csv << format_number(row.s) << ',' << row.p << ',' << format_number(row.lhs) << ',' << format_number(row.rhs)
        << ',' << format_number(row.ratio) << ',' << to_string(mode) << ',' << format_number(lambda) << ','
        << format_number(delta1) << '\n';
  }
  return csv.str();
}

std::string probe_csv(const std::vector<const ProbeResult*>& results) {
  std::ostringstream csv;
  csv << "member_id,param,f_norm_or_g_norm,combined_norm,ratio_or_product,mesh_level,flag\n";
  std::size_t id = 0;
  for (const auto* result : results) {
    for (const auto& row : result->rows) {
      csv << id++ << ',' << format_number(row.param) << ',' << format_number(row.data_norm) << ','
          << format_number(row.combined_norm) << ',' << format_number(row.value) << ',' << row.mesh_level << ','
          << to_string(row.flag) << '\n';
    }
  }
  return csv.str();
}

std::string rate_csv(const RateResult& rates) {
  std::ostringstream csv;
  csv << "eps,alpha,err_f,err_g,combined_norm_clean,combined_norm_noisy,iters,converged\n";
  for (const auto& level : rates.levels) {
    csv << format_number(level.eps) << ',' << format_number(level.alpha) << ',' << format_number(level.err_f) << ','
        << format_number(level.err_g) << ',' << format_number(level.combined_norm_clean) << ','
        << format_number(level.combined_norm_noisy) << ',' << level.iters << ','
        << (level.converged ? "true" : "false") << '\n';
  }
  return csv.str();
}

RunConfig parse_run_config(std::span<const std::string> args) {
  auto parsed = parse_internal(args);
  if (parsed.help) throw ValidationError("help", *parsed.help);
  return parsed.config;
}

std::string echo_config(const RunConfig& c) {
  std::ostringstream out;
  out << "# parastab " << c.subcommand << '\n';
  out << "nx=" << c.nx << '\n';
  out << "nt=" << c.nt << '\n';
  out << "T=" << format_number(c.T) << '\n';
  out << "delta0=" << format_number(c.delta0) << '\n';
  out << "delta1=" << format_number(c.delta1.value_or(std::min(c.delta0, c.T) / 2.0)) << '\n';
  out << "gamma=" << c.gamma << '\n';
  out << "f=\"" << c.f << "\"\n";
  out << "g=\"" << c.g << "\"\n";
  out << "lambda=" << format_number(c.lambda) << '\n';
  if (!c.s.empty()) out << "s=\"" << join(c.s) << "\"\n";
  out << "p=" << c.p << '\n';
  out << "boundary=" << c.boundary << '\n';
  out << "C0=" << format_number(c.C0) << '\n';
  if (!c.noise.empty()) out << "noise=\"" << join(c.noise) << "\"\n";
  out << "alpha0=" << format_number(c.alpha0) << '\n';
  out << "seed=" << c.seed << '\n';
  out << "mode=" << c.mode << '\n';
  out << "max-iters=" << c.max_iters << '\n';
  out << "repeats=" << c.repeats << '\n';
  out << "M0=" << format_number(c.M0) << '\n';
  return out.str();
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  std::ostringstream out;
  for (unsigned int i = 0; i < length; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return out.str();
}

RunReport execute(const RunConfig& config) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const Setup setup = validate(config);
  RunReport report;
  report.config_echo = echo_config(config);

  const auto& sub = config.subcommand;
  if (sub == "forward") run_forward(setup, report);
  else if (sub == "carleman-audit") run_carleman(setup, report);
  else if (sub == "stability-probe") run_probe(setup, report);
  else if (sub == "decompose") run_decompose(setup, report);
  else if (sub == "reconstruct") run_reconstruct(setup, report);
  else if (sub == "rate") run_rate(setup, report);
  else throw ValidationError("subcommand", "unknown subcommand '" + sub + "'");

  report.artifacts.emplace_back("report.txt", summary_text(report, sub));
  report.timings.emplace_back(sub, std::chrono::duration<double>(clock::now() - start).count());
  return report;
}

std::vector<std::filesystem::path> write_report(const RunReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());

  std::vector<std::pair<std::string, std::string>> files;
  files.emplace_back("config.txt", report.config_echo);
  files.insert(files.end(), report.artifacts.begin(), report.artifacts.end());

  const std::string hash = sha256_hex(report.config_echo);
  std::ostringstream manifest;
  manifest << "config_hash=" << hash << '\n';
  manifest << "file,config_hash,sha256\n";
  for (const auto& [name, content] : files) manifest << name << ',' << hash << ',' << sha256_hex(content) << '\n';
  files.emplace_back("manifest.txt", manifest.str());

  std::vector<std::filesystem::path> paths;
  for (const auto& [name, content] : files) {
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    out.close();
    if (!out) throw Error("cannot write " + path.string());
    paths.push_back(path);
  }
  return paths;
}

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  try {
    const auto parsed = parse_internal(args);
    if (parsed.help) {
      out << *parsed.help;
      return 0;
    }
    const auto report = execute(parsed.config);
    const auto paths = write_report(report, parsed.config.out);
    for (const auto& [key, value] : report.summary) out << key << " = " << value << '\n';
    for (const auto& path : paths) out << "wrote " << path.string() << '\n';
    for (const auto& [phase, seconds] : report.timings) out << "timing " << phase << ' ' << seconds << " s\n";
    return report.exit_code;
  } catch (const ValidationError& e) {
    err << "parastab: invalid " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "parastab: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace parastab

// interfere_ci: one-sided confidence bounds on the attributable effect of a
// randomized treatment under interference, plus the grid simulator.
//
// Exit codes: 0 success, 2 invalid input, 1 internal error.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "interfere_ci/basic_inversion.hpp"
#include "interfere_ci/error.hpp"
#include "interfere_ci/io.hpp"
#include "interfere_ci/kernel.hpp"
#include "interfere_ci/mincut_qpb.hpp"
#include "interfere_ci/parallel.hpp"
#include "interfere_ci/sim_harness.hpp"
#include "interfere_ci/spill_inversion.hpp"
#include "interfere_ci/ttest_bound.hpp"
#include "interfere_ci/version.hpp"

namespace {

using interfere::ValidationError;
using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

enum class LogLevel { kError, kWarn, kInfo, kDebug };

LogLevel g_log_level = LogLevel::kWarn;

void log(LogLevel level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= g_log_level) std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << "\n";
}

LogLevel parse_log_level(const std::string& s) {
  if (s == "error") return LogLevel::kError;
  if (s == "warn") return LogLevel::kWarn;
  if (s == "info") return LogLevel::kInfo;
  if (s == "debug") return LogLevel::kDebug;
  throw ValidationError("unknown log level '" + s + "'");
}

// Integral values print as integers, everything else as a double; NaN and
// infinities as null.
Json number(double v) {
  if (!std::isfinite(v)) return nullptr;
  if (v == std::floor(v) && std::fabs(v) < 9.0e15) return static_cast<std::int64_t>(v);
  return v;
}

Json diagnostics_json(const std::map<std::string, double>& d) {
  Json out = Json::object();
  for (const auto& [k, v] : d) out[k] = number(v);
  return out;
}

Json bound_json(const interfere::CounterfactualBound& b) {
  Json out;
  out["method"] = std::string(interfere::to_string(b.method));
  out["alpha"] = b.alpha;
  out["direction"] = std::string(interfere::to_string(b.direction));
  out["theta_sum_bound"] = number(b.theta_sum_bound);
  out["attributable_lower"] = number(b.attributable_lower);
  return out;
}

void emit(const Json& report, const std::string& out_path) {
  const std::string text = report.dump(2) + "\n";
  std::cout << text;
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    if (!f) throw ValidationError(out_path + ": cannot write report");
    f << text;
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void require_choice(const std::string& flag, const std::string& value, std::initializer_list<const char*> allowed) {
  std::string list;
  for (const char* a : allowed) {
    if (value == a) return;
    list += (list.empty() ? "" : "|") + std::string(a);
  }
  throw ValidationError(flag + " must be one of " + list + ", got '" + value + "'");
}

// ---- ttest-ci ---------------------------------------------------------

struct TTestArgs {
  double alpha = 0.05;
  std::string direction = "upper";
  std::string units_file;
  std::string caps_file;
  std::int64_t bootstrap_reps = 1000;
  std::uint64_t seed = 1;
  std::string out;
};

Json run_ttest(const TTestArgs& a) {
  require_choice("--direction", a.direction, {"upper", "lower"});
  const interfere::ExperimentData data = interfere::io::read_units(a.units_file);
  interfere::TIntervalInputs in;
  in.alpha = a.alpha;
  in.untreated_outcomes = data.outcomes_of(0);
  in.n_units = static_cast<std::int64_t>(data.n_units());
  in.treated_count = static_cast<std::int64_t>(data.treated_count());
  in.observed_total = data.outcome_total();

  interfere::TIntervalResult r;
  if (a.direction == "upper") {
    r = interfere::conservative_upper(in);
  } else {
    if (a.caps_file.empty()) throw ValidationError("--caps-file is required for --direction lower");
    const auto caps = interfere::io::read_caps(a.caps_file, data);
    std::vector<std::int64_t> untreated_caps;
    for (std::size_t i = 0; i < data.n_units(); ++i)
      if (!data.treatment[i]) untreated_caps.push_back(caps[i]);
    in.upper_caps = untreated_caps;
    r = interfere::conservative_lower_reversed(in);
  }

  Json report = bound_json(r.bound);
  report["theta_mean_bound"] = r.theta_mean_bound;
  if (a.direction == "lower") report.erase("attributable_lower");
  report["argmax_level_c"] = r.argmax.level;
  report["t_critical"] = r.t_critical;
  Json diag = Json::object();
  try {
    diag["heavy_tail_ratio"] = interfere::heavy_tail_diagnostic(in.untreated_outcomes);
  } catch (const ValidationError& e) {
    diag["heavy_tail_ratio"] = nullptr;
    diag["heavy_tail_status"] = e.what();
  }
  const auto boot = interfere::bootstrap_check(in.untreated_outcomes, a.alpha, in.n_units, in.treated_count,
                                               a.bootstrap_reps, a.seed);
  Json b;
  b["status"] = boot.status;
  b["conclusive"] = boot.conclusive;
  b["reps"] = boot.reps;
  b["t_critical"] = boot.t_critical;
  b["exceedance_rate"] = boot.exceedance_rate;
  b["empirical_quantile"] = number(boot.empirical_quantile);
  diag["bootstrap"] = b;
  diag["unclamped_theta_sum_bound"] = r.bound.diagnostics.at("unclamped_theta_sum_bound");
  report["diagnostics"] = diag;
  report["config_echo"] = {{"subcommand", "ttest-ci"},
                           {"--alpha", a.alpha},
                           {"--direction", a.direction},
                           {"--units-file", a.units_file},
                           {"--caps-file", a.caps_file},
                           {"--bootstrap-reps", a.bootstrap_reps},
                           {"--seed", a.seed}};
  return report;
}

// ---- invert-basic -----------------------------------------------------

struct BasicArgs {
  double alpha = 0.05;
  std::string assumption = "monotone";
  std::string target = "control";
  std::string units_file;
  std::string counts;
  std::string out;
};

interfere::BasicCounts parse_counts(const std::string& s) {
  std::vector<std::int64_t> v;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) v.push_back(interfere::io::parse_int(interfere::io::trim(part), "--counts"));
  if (v.size() != 4) throw ValidationError("--counts expects n11,n10,n01,n00");
  interfere::BasicCounts c{v[0], v[1], v[2], v[3]};
  interfere::validate(c);
  return c;
}

Json run_basic(const BasicArgs& a) {
  require_choice("--assumption", a.assumption, {"monotone", "aggregate"});
  require_choice("--target", a.target, {"control", "full-treatment"});
  if (a.units_file.empty() == a.counts.empty()) throw ValidationError("give exactly one of --units-file or --counts");
  const interfere::BasicCounts counts =
      a.counts.empty() ? interfere::count_cells([&] {
        auto d = interfere::io::read_units(a.units_file);
        interfere::validate(d, true);
        return d;
      }())
                       : parse_counts(a.counts);
  interfere::BasicInversionResult r;
  if (a.target == "full-treatment") {
    if (a.assumption != "monotone") throw ValidationError("--target full-treatment requires --assumption monotone");
    r = interfere::full_treatment_bound(counts, a.alpha);
  } else {
    r = interfere::invert_counts(counts, a.alpha,
                                 a.assumption == "monotone" ? interfere::Assumption::kMonotone
                                                            : interfere::Assumption::kAggregate);
  }
  Json report = bound_json(r.bound);
  report["a_star"] = r.optimum.a;
  report["b_star"] = r.optimum.b;
  report["critical_value"] = r.critical_value;
  report["counts"] = {{"n11", counts.treated_one},
                      {"n10", counts.treated_zero},
                      {"n01", counts.control_one},
                      {"n00", counts.control_zero}};
  if (a.target == "control") {
    const auto m = interfere::invert_monotone(counts, a.alpha);
    const auto g = interfere::invert_aggregate(counts, a.alpha);
    report["monotone_aggregate_agree"] = m.bound.theta_sum_bound == g.bound.theta_sum_bound;
  }
  report["diagnostics"] = diagnostics_json(r.bound.diagnostics);
  report["config_echo"] = {{"subcommand", "invert-basic"},
                           {"--alpha", a.alpha},
                           {"--assumption", a.assumption},
                           {"--target", a.target},
                           {"--units-file", a.units_file},
                           {"--counts", a.counts}};
  return report;
}

// ---- invert-spill -----------------------------------------------------

struct SpillArgs {
  double alpha = 0.05;
  std::string tail = "chebyshev";
  double sigma_k = 1.0;
  double dmax_k = 0.0;
  std::size_t n_lambda = 500;
  std::size_t grid_steps = 200;
  std::size_t refine = 2;
  std::string lambda_scaling = "box";
  std::string units_file;
  std::string network_file;
  std::string network_mode = "coords";
  std::size_t threads = 0;
  std::string out;
};

Json run_spill(const SpillArgs& a) {
  require_choice("--tail", a.tail, {"chebyshev", "normal"});
  require_choice("--lambda-scaling", a.lambda_scaling, {"box", "raw"});
  const auto data = interfere::io::read_units(a.units_file);
  interfere::validate(data, true);
  const auto distances =
      interfere::io::read_network(a.network_file, interfere::io::parse_network_mode(a.network_mode), data);
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < data.n_units(); ++i)
    if (data.outcomes[i]) free.push_back(i);
  const auto kernel = interfere::build_kernel_columns(distances, a.sigma_k, a.dmax_k, free);
  interfere::SpillConfig c;
  c.alpha = a.alpha;
  c.tail = a.tail == "normal" ? interfere::TailBound::kNormal : interfere::TailBound::kChebyshev;
  c.n_lambda = a.n_lambda;
  c.grid_steps = a.grid_steps;
  c.refine_rounds = a.refine;
  c.scale_directions = a.lambda_scaling == "box";
  c.threads = a.threads;
  log(LogLevel::kInfo, "spill: " + std::to_string(free.size()) + " free units, " + std::to_string(c.n_lambda) +
                           " directions");
  const auto r = interfere::solve_relaxation(data, kernel, c);
  if (r.bound.diagnostics.count("normal_fpc_warning") && r.bound.diagnostics.at("normal_fpc_warning") > 0)
    log(LogLevel::kWarn, "normal tail threshold omits the finite-population factor and L/N > 0.1");

  Json report = bound_json(r.bound);
  report["tail_bound"] = std::string(interfere::to_string(c.tail));
  report["n_halfspaces"] = r.halfspaces.size();
  report["grid_resolution_achieved"] = r.grid_resolution;
  report["m1_star"] = r.m1_star;
  report["box"] = {{"m1", r.box.m1}, {"m2", r.box.m2}, {"m3", r.box.m3}};
  report["diagnostics"] = diagnostics_json(r.bound.diagnostics);
  report["config_echo"] = {{"subcommand", "invert-spill"},
                           {"--alpha", a.alpha},
                           {"--tail", a.tail},
                           {"--sigma-k", a.sigma_k},
                           {"--dmax-k", a.dmax_k},
                           {"--n-lambda", a.n_lambda},
                           {"--grid-steps", a.grid_steps},
                           {"--refine", a.refine},
                           {"--lambda-scaling", a.lambda_scaling},
                           {"--units-file", a.units_file},
                           {"--network-file", a.network_file},
                           {"--network-mode", a.network_mode}};
  return report;
}

// ---- simulate ---------------------------------------------------------

struct SimulateArgs {
  std::string preset = "fig4";
  double desk_scale = 1.0;
  std::size_t reps = 100;
  std::uint64_t seed = 1;
  double alpha = 0.05;
  std::string tail = "chebyshev";
  std::string filter;
  std::string out;
  bool timing = false;
  std::size_t threads = 0;
};

std::string format_real(double v) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json scenario_json(const interfere::SimScenario& s) {
  return {{"name", s.name},
          {"grid_side", s.grid_side},
          {"n_units", s.n_units()},
          {"n_treat", s.n_treat},
          {"p0", s.p0},
          {"sigma_h", s.sigma_h},
          {"C", s.C},
          {"d_max_h", s.d_max_h},
          {"estimator", std::string(interfere::to_string(s.estimator))},
          {"sigma_K", s.sigma_k()},
          {"d_max_K", s.d_max_K},
          {"alpha", s.alpha},
          {"tail", std::string(interfere::to_string(s.tail))},
          {"seed", s.seed},
          {"reps", s.reps}};
}

Json run_simulate(const SimulateArgs& a) {
  require_choice("--tail", a.tail, {"chebyshev", "normal"});
  interfere::PresetOptions opt;
  opt.desk_scale = a.desk_scale;
  opt.reps = a.reps;
  opt.seed = a.seed;
  opt.alpha = a.alpha;
  opt.tail = a.tail == "normal" ? interfere::TailBound::kNormal : interfere::TailBound::kChebyshev;
  if (a.reps == 0) throw ValidationError("--reps must be positive");
  auto scenarios = interfere::preset(a.preset, opt);
  if (!a.filter.empty()) {
    std::erase_if(scenarios, [&](const auto& s) { return s.name.find(a.filter) == std::string::npos; });
    if (scenarios.empty()) throw ValidationError("--filter '" + a.filter + "' matches no scenario");
  }
  if (!a.out.empty()) {
    std::error_code ec;
    fs::create_directories(a.out, ec);
    if (ec) throw ValidationError(a.out + ": cannot create output directory");
  }

  Json list = Json::array();
  for (std::size_t k = 0; k < scenarios.size(); ++k) {
    const auto& s = scenarios[k];
    log(LogLevel::kInfo, "scenario " + std::to_string(k) + ": " + s.name);
    const auto t0 = std::chrono::steady_clock::now();
    const auto run = interfere::run(s, a.threads);
    const double elapsed = seconds_since(t0);
    Json entry = scenario_json(s);
    const auto& sum = run.summary;
    entry["summary"] = {{"reps", sum.reps},
                        {"accuracy_reps", sum.accuracy_reps},
                        {"mean_accuracy", number(sum.mean_accuracy)},
                        {"std_error", number(sum.std_error)},
                        {"coverage", sum.coverage},
                        {"covered", sum.covered},
                        {"mean_true_A", sum.mean_true_A},
                        {"mean_bound_A", sum.mean_bound_A}};
    if (a.timing) entry["wall_time"] = elapsed;
    if (!a.out.empty()) {
      char dir[32];
      std::snprintf(dir, sizeof dir, "scenario_%02zu", k);
      const fs::path sub = fs::path(a.out) / dir;
      fs::create_directories(sub);
      std::ofstream csv(sub / "per_rep.csv");
      if (!csv) throw ValidationError((sub / "per_rep.csv").string() + ": cannot write");
      csv << "rep,true_A,bound_A,accuracy,covered,runtime\n";
      for (const auto& r : run.results)
        csv << r.rep << ',' << r.true_A << ',' << format_real(r.bound_A) << ',' << format_real(r.accuracy) << ','
            << (r.covered ? 1 : 0) << ',' << (a.timing ? format_real(r.runtime) : "") << '\n';
      entry["per_rep_csv"] = (fs::path(dir) / "per_rep.csv").string();
    }
    list.push_back(entry);
  }
  Json report;
  report["preset"] = a.preset;
  report["scenarios"] = list;
  report["config_echo"] = {{"subcommand", "simulate"},
                           {"--preset", a.preset},
                           {"--desk-scale", a.desk_scale},
                           {"--reps", a.reps},
                           {"--seed", a.seed},
                           {"--alpha", a.alpha},
                           {"--tail", a.tail},
                           {"--filter", a.filter},
                           {"--timing", a.timing}};
  return report;
}

// ---- qpb-solve --------------------------------------------------------

// Input JSON: {"quad": [[...], ...], "linear": [...], "offset": c}.
Json run_qpb(const std::string& path) {
  std::ifstream in = interfere::io::open_input(path);
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  interfere::QPBProblem p;
  try {
    p.linear = doc.at("linear").get<std::vector<double>>();
    p.dim = p.linear.size();
    for (const auto& row : doc.at("quad")) {
      const auto r = row.get<std::vector<double>>();
      if (r.size() != p.dim) throw ValidationError(path + ": quad must be d x d");
      p.quad.insert(p.quad.end(), r.begin(), r.end());
    }
    p.offset = doc.value("offset", 0.0);
  } catch (const Json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  const auto s = interfere::qpb_maximize(p);
  Json report;
  report["value"] = s.value;
  report["argmax"] = s.argmax;
  report["flow_value"] = s.flow_value;
  report["cut_value"] = s.cut_value;
  report["constant"] = s.constant;
  report["dropped"] = s.dropped;
  report["upper_bound"] = s.upper_bound();
  report["config_echo"] = {{"subcommand", "qpb-solve"}, {"--problem", path}};
  return report;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conservative confidence bounds on attributable effects under interference"};
  app.set_version_flag("--version", interfere::kToolVersion);
  app.require_subcommand(1);
  std::string log_level = "warn";
  std::size_t threads = 0;
  app.add_option("--log-level", log_level, "error|warn|info|debug");
  app.add_option("--threads", threads, "worker threads (default: INTERFERE_CI_THREADS or all cores)");

  TTestArgs ta;
  auto* tt = app.add_subcommand("ttest-ci", "conservative t-interval for count outcomes");
  tt->add_option("--alpha", ta.alpha, "error rate");
  tt->add_option("--direction", ta.direction, "upper|lower");
  tt->add_option("--units-file", ta.units_file, "CSV unit_id,treated,outcome")->required();
  tt->add_option("--caps-file", ta.caps_file, "CSV unit_id,cap (lower direction)");
  tt->add_option("--bootstrap-reps", ta.bootstrap_reps, "replicates for the distributional check");
  tt->add_option("--seed", ta.seed, "bootstrap seed");
  tt->add_option("--out", ta.out, "also write the report here");

  BasicArgs ba;
  auto* bi = app.add_subcommand("invert-basic", "exact inversion of the treated-sum statistic");
  bi->add_option("--alpha", ba.alpha, "error rate");
  bi->add_option("--assumption", ba.assumption, "monotone|aggregate");
  bi->add_option("--target", ba.target, "control|full-treatment");
  bi->add_option("--units-file", ba.units_file, "CSV unit_id,treated,outcome (binary outcomes)");
  bi->add_option("--counts", ba.counts, "n11,n10,n01,n00 cell counts");
  bi->add_option("--out", ba.out, "also write the report here");

  SpillArgs sa;
  auto* sp = app.add_subcommand("invert-spill", "relaxed inversion of the kernel-smoothed statistic");
  sp->add_option("--alpha", sa.alpha, "error rate");
  sp->add_option("--tail", sa.tail, "chebyshev|normal");
  sp->add_option("--sigma-k", sa.sigma_k, "kernel bandwidth");
  sp->add_option("--dmax-k", sa.dmax_k, "kernel cutoff distance");
  sp->add_option("--n-lambda", sa.n_lambda, "number of supporting directions");
  sp->add_option("--grid-steps", sa.grid_steps, "coarse grid steps per axis");
  sp->add_option("--refine", sa.refine, "10x refinement rounds");
  sp->add_option("--lambda-scaling", sa.lambda_scaling, "box|raw");
  sp->add_option("--units-file", sa.units_file, "CSV unit_id,treated,outcome (binary outcomes)")->required();
  sp->add_option("--network-file", sa.network_file, "coordinates, edge list or distance matrix")->required();
  sp->add_option("--network-mode", sa.network_mode, "coords|edges|matrix");
  sp->add_option("--out", sa.out, "also write the report here");

  SimulateArgs ma;
  auto* sim = app.add_subcommand("simulate", "replicated spatial grid experiments");
  sim->add_option("--preset", ma.preset, "fig1|fig3|fig4");
  sim->add_option("--desk-scale", ma.desk_scale, "shrink factor (1 = full size)");
  sim->add_option("--reps", ma.reps, "replications per scenario");
  sim->add_option("--seed", ma.seed, "base seed");
  sim->add_option("--alpha", ma.alpha, "error rate");
  sim->add_option("--tail", ma.tail, "chebyshev|normal (spill estimator)");
  sim->add_option("--filter", ma.filter, "only scenarios whose name contains this text");
  sim->add_option("--out", ma.out, "output directory");
  sim->add_flag("--timing", ma.timing, "record wall-clock times (makes output nondeterministic)");

  std::string qpb_file;
  auto* qp = app.add_subcommand("qpb-solve", "");  // debugging aid, hidden from help
  qp->group("");
  qp->add_option("--problem", qpb_file, "JSON problem file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    g_log_level = parse_log_level(log_level);
    if (threads > 0) {
      sa.threads = threads;
      ma.threads = threads;
    }
    Json report;
    std::string out_path;
    bool deterministic = false;
    if (tt->parsed()) {
      report = run_ttest(ta);
      out_path = ta.out;
    } else if (bi->parsed()) {
      report = run_basic(ba);
      out_path = ba.out;
    } else if (sp->parsed()) {
      report = run_spill(sa);
      out_path = sa.out;
    } else if (sim->parsed()) {
      report = run_simulate(ma);
      if (!ma.out.empty()) out_path = (fs::path(ma.out) / "summary.json").string();
      deterministic = !ma.timing;
    } else {
      report = run_qpb(qpb_file);
    }
    Json full;
    full["tool_version"] = interfere::kToolVersion;
    for (auto it = report.begin(); it != report.end(); ++it) full[it.key()] = it.value();
    full["wall_time"] = deterministic ? Json(nullptr) : Json(seconds_since(t0));
    emit(full, out_path);
    return 0;
  } catch (const ValidationError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << msg << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}

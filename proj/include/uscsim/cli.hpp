#pragma once

// Command-line front end: run presets or scenario files, sweep a parameter, validate the
// installation. Exit codes: 0 success, 1 validation failure or unexpected error,
// 2 configuration error, 3 numerical failure (trace drift, Fock-cut leakage, step underflow).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uscsim/uscsim.hpp"

#ifndef USCSIM_VERSION
#define USCSIM_VERSION "0.1.0"
#endif
#ifndef USCSIM_PRESET_DIR
#define USCSIM_PRESET_DIR "presets"
#endif

namespace uscsim::cli {

namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kNumerical = 3 };

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const json::exception*>(&e)) return kConfig;
  if (dynamic_cast<const NumericalError*>(&e) || dynamic_cast<const TruncationError*>(&e)) return kNumerical;
  return kFailure;
}

// ---------------------------------------------------------------------------
// Presets and scenario files

inline std::vector<fs::path> preset_dirs() {
  std::vector<fs::path> dirs;
  if (const char* env = std::getenv("USCSIM_PRESETS"); env && *env) dirs.emplace_back(env);
  dirs.emplace_back(USCSIM_PRESET_DIR);
  return dirs;
}

inline json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

/// A preset name (fig1 ... fig13) or a path to a scenario file.
inline json load_scenario(const std::string& ref) {
  if (fs::is_regular_file(ref)) return read_json_file(ref);
  for (const auto& d : preset_dirs()) {
    const fs::path p = d / (ref + ".json");
    if (fs::is_regular_file(p)) return read_json_file(p);
  }
  throw ConfigError("unknown preset or scenario file '" + ref + "'");
}

inline std::vector<std::string> list_presets() {
  std::vector<std::string> names;
  for (const auto& d : preset_dirs()) {
    if (!fs::is_directory(d)) continue;
    for (const auto& e : fs::directory_iterator(d))
      if (e.path().extension() == ".json") names.push_back(e.path().stem().string());
    if (!names.empty()) break;
  }
  std::sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
    return a.size() != b.size() ? a.size() < b.size() : a < b;
  });
  return names;
}

/// "path=value"; the value is read as JSON when it parses, else as a string.
inline std::pair<std::string, json> parse_assignment(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects path=value, got '" + s + "'");
  const std::string value = s.substr(eq + 1);
  json v;
  try {
    v = json::parse(value);
  } catch (const json::parse_error&) {
    v = value;
  }
  return {s.substr(0, eq), v};
}

inline json sigma_value(const std::string& s) {
  if (s == "zero" || s == "infinity") return s;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("--sigma expects a number, 'zero' or 'infinity'");
}

// ---------------------------------------------------------------------------
// Writers

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_table(const fs::path& p, const Table& t) {
  std::ofstream out(p);
  if (!out) throw ConfigError("cannot write " + p.string());
  for (std::size_t c = 0; c < t.columns.size(); ++c) out << (c ? "," : "") << t.columns[c];
  out << "\n";
  for (const auto& r : t.rows) {
    for (std::size_t c = 0; c < r.size(); ++c) out << (c ? "," : "") << fmt(r[c]);
    out << "\n";
  }
}

/// First line: "im\re" then the real-axis values; each following line: the imaginary-axis value
/// then Q along the real axis.
inline void write_qgrid(const fs::path& p, const QGrid& q) {
  std::ofstream out(p);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << "im\\re";
  for (int i = 0; i < q.spec.n_re; ++i) out << "," << fmt(q.spec.re(i));
  out << "\n";
  for (int j = 0; j < q.spec.n_im; ++j) {
    out << fmt(q.spec.im(j));
    for (int i = 0; i < q.spec.n_re; ++i) out << "," << fmt(q.values(j, i));
    out << "\n";
  }
}

inline void write_json(const fs::path& p, const json& j) {
  std::ofstream out(p);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << j.dump(2) << "\n";
}

/// Writes one variant's files into `dir` and returns their paths relative to `root`.
inline json write_variant(const VariantResult& v, const fs::path& root, const fs::path& dir) {
  fs::create_directories(root / dir);
  json files = json::array();
  const auto rel = [&](const std::string& name) { return (dir / name).lexically_normal().generic_string(); };
  const std::string series = v.scenario.kind == ScenarioKind::Dynamics ? "timeseries.csv" : "series.csv";
  if (!v.series.columns.empty()) {
    write_table(root / dir / series, v.series);
    files.push_back({{"path", rel(series)}, {"kind", "csv"}, {"variant", v.label}});
  }
  for (const auto& [stem, q] : v.qgrids) {
    write_qgrid(root / dir / (stem + ".csv"), q);
    files.push_back({{"path", rel(stem + ".csv")}, {"kind", "qgrid"}, {"variant", v.label}});
  }
  json summary = v.summary;
  summary["variant"] = v.label;
  summary["warnings"] = v.warnings;
  summary["wall_seconds"] = v.wall_seconds;
  write_json(root / dir / "summary.json", summary);
  files.push_back({{"path", rel("summary.json")}, {"kind", "summary"}, {"variant", v.label}});
  return files;
}

inline json variant_metadata(const VariantResult& v) {
  return {{"label", v.label},
          {"scenario", v.scenario.to_json()},
          {"tolerances", {{"rtol", v.scenario.rtol}, {"atol", v.scenario.atol}}},
          {"wall_seconds", v.wall_seconds}};
}

/// Files for a bundle; a single variant writes into `dir` itself, several into `dir/<label>/`.
inline json write_bundle(const ResultBundle& b, const fs::path& root, const fs::path& dir, json& variants_meta) {
  json files = json::array();
  for (const auto& v : b.variants) {
    const fs::path sub = b.variants.size() == 1 ? dir : dir / v.label;
    for (auto& f : write_variant(v, root, sub)) files.push_back(f);
    variants_meta.push_back(variant_metadata(v));
  }
  return files;
}

// ---------------------------------------------------------------------------
// run

struct RunArgs {
  std::string scenario;  ///< preset name or file
  bool desk = false;
  std::string sigma;
  std::string out = "out";
  std::vector<std::string> metrics;
  std::vector<std::string> sets;
  int jobs = 1;
};

inline ResolveOptions resolve_options(bool desk, const std::string& sigma, const std::vector<std::string>& metrics,
                                      const std::vector<std::string>& sets) {
  ResolveOptions o;
  o.desk = desk;
  for (const auto& s : sets) {
    auto [k, v] = parse_assignment(s);
    o.overrides[k] = v;
  }
  if (!sigma.empty()) o.overrides["measurement.sigma"] = sigma_value(sigma);
  for (const auto& m : metrics) {
    if (m == "all") {
      for (const char* x : {"negativity", "discord", "qfunc"}) o.extra_metrics.emplace_back(x);
    } else if (m == "negativity" || m == "discord" || m == "qfunc" || m == "high_low" || m == "analytic") {
      o.extra_metrics.push_back(m);
    } else {
      throw ConfigError("--metric expects negativity, discord, qfunc, high_low, analytic or all");
    }
  }
  return o;
}

inline int default_jobs() {
  if (const char* env = std::getenv("USCSIM_JOBS"); env && *env) {
    try {
      return std::max(1, std::stoi(env));
    } catch (const std::exception&) {
    }
  }
  return 1;
}

inline int cmd_run(const RunArgs& a, std::ostream& log = std::cout) {
  try {
    const json doc = load_scenario(a.scenario);
    const auto opt = resolve_options(a.desk, a.sigma, a.metrics, a.sets);
    const auto t0 = std::chrono::steady_clock::now();
    const ResultBundle b = run_scenario(doc, opt, a.jobs);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const fs::path root(a.out);
    fs::create_directories(root);
    json variants = json::array();
    json files = write_bundle(b, root, ".", variants);
    const json manifest = {{"command", "run"},
                           {"preset", b.name},
                           {"source", a.scenario},
                           {"desk", a.desk},
                           {"version", USCSIM_VERSION},
                           {"wall_seconds", wall},
                           {"variants", variants},
                           {"files", files}};
    write_json(root / "manifest.json", manifest);
    for (const auto& v : b.variants) log << v.label << ": " << v.summary.dump() << "\n";
    log << "wrote " << files.size() + 1 << " files to " << root.string() << "\n";
    return kOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
  std::string scenario;
  std::string param;
  std::vector<std::string> values;
  bool desk = false;
  std::string sigma;
  std::string out = "out";
  std::vector<std::string> metrics;
  std::vector<std::string> sets;
  bool keep_going = false;
  int jobs = 1;
};

inline int cmd_sweep(const SweepArgs& a, std::ostream& log = std::cout) {
  try {
    const json doc = load_scenario(a.scenario);
    const auto opt = resolve_options(a.desk, a.sigma, a.metrics, a.sets);
    SweepSpec spec{a.param, {}, a.jobs};
    for (const auto& v : a.values) spec.values.push_back(parse_assignment("x=" + v).second);
    // Resolve once up front so configuration mistakes surface before any work.
    for (const auto& v : spec.values) {
      ResolveOptions o = opt;
      o.overrides[spec.path] = v;
      resolve_variants(doc, o);
    }
    const auto t0 = std::chrono::steady_clock::now();
    const auto points = run_sweep(doc, spec, opt);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const fs::path root(a.out);
    fs::create_directories(root);
    json files = json::array(), meta = json::array();
    Table status, combined;
    int worst = kOk;
    for (std::size_t k = 0; k < points.size(); ++k) {
      const auto& p = points[k];
      const double numeric = p.value.is_number() ? p.value.get<double>() : std::nan("");
      status.append({{"point", static_cast<double>(k)}, {"value", numeric}, {"ok", p.error.empty() ? 1.0 : 0.0}});
      json entry{{"point", k}, {"value", p.value}, {"status", p.error.empty() ? "ok" : "failed"}};
      if (!p.error.empty()) {
        entry["error"] = p.error;
        log << "point " << k << " (" << p.value.dump() << ") failed: " << p.error << "\n";
        if (worst == kOk) worst = p.error_class == 0 ? kFailure : p.error_class;
      } else {
        json variants = json::array();
        for (auto& f : write_bundle(*p.bundle, root, "point_" + std::to_string(k), variants)) files.push_back(f);
        entry["variants"] = variants;
        for (const auto& v : p.bundle->variants)
          for (const auto& r : v.series.rows) {
            std::vector<std::pair<std::string, double>> row{{"sweep_value", numeric}};
            for (std::size_t c = 0; c < r.size(); ++c) row.emplace_back(v.series.columns[c], r[c]);
            if (combined.columns.empty() || combined.columns.size() == row.size()) combined.append(row);
          }
      }
      meta.push_back(entry);
    }
    write_table(root / "sweep_status.csv", status);
    files.push_back({{"path", "sweep_status.csv"}, {"kind", "csv"}});
    if (!combined.rows.empty()) {
      write_table(root / "sweep_series.csv", combined);
      files.push_back({{"path", "sweep_series.csv"}, {"kind", "csv"}});
    }
    write_json(root / "manifest.json", {{"command", "sweep"},
                                        {"source", a.scenario},
                                        {"parameter", a.param},
                                        {"desk", a.desk},
                                        {"version", USCSIM_VERSION},
                                        {"wall_seconds", wall},
                                        {"points", meta},
                                        {"files", files}});
    log << points.size() << " points, wrote " << files.size() + 1 << " files to " << root.string() << "\n";
    return a.keep_going ? kOk : worst;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

// ---------------------------------------------------------------------------
// validate

/// Small scenario used by `validate` for the trace and convergence checks.
inline json validation_scenario() {
  return json::parse(R"({
    "name": "validate",
    "description": "short two-level run used by the installation check",
    "kind": "dynamics",
    "model": "two_level",
    "usc": {"omega_q": "2pi*0.299 GHz", "g": "2pi*4.920 GHz", "omega_r": "2pi*6.336 GHz"},
    "resonator": {"delta": "2pi*5.698 MHz", "chi": "2pi*80.735 kHz", "f": "2pi*22.792 MHz",
                  "kappa": "2pi*2.375 MHz", "J": "2pi*949.8 kHz", "cut": 60},
    "measurement": {"sigma": 5.0},
    "time": {"t_end": 100.0, "dt_out": 10.0, "rtol": 1e-8, "atol": 1e-10},
    "metrics": ["negativity"]
  })");
}

struct ValidateArgs {
  std::string scenario;  ///< optional replacement for the built-in scenario
  std::vector<std::string> sets;
};

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

inline int cmd_validate(const ValidateArgs& a, std::ostream& log = std::cout) {
  std::vector<ResolvedVariant> variants;
  try {
    json doc = a.scenario.empty() ? validation_scenario() : load_scenario(a.scenario);
    ResolveOptions opt = resolve_options(false, "", {}, a.sets);
    variants = resolve_variants(doc, opt);
    if (variants.front().scenario.kind != ScenarioKind::Dynamics)
      throw ConfigError("validate needs a dynamics scenario");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  const Scenario& s = variants.front().scenario;

  std::vector<CheckResult> checks;
  const auto check = [&](const std::string& name, const std::function<std::pair<bool, std::string>()>& f) {
    try {
      auto [ok, detail] = f();
      checks.push_back({name, ok, detail});
    } catch (const std::exception& e) {
      checks.push_back({name, false, e.what()});
    }
  };

  check("povm completeness", [] {
    double worst = 0.0, min_eig = 0.0;
    for (const auto& cg : {CoarseGrain::zero(), CoarseGrain::finite(0.5), CoarseGrain::finite(5.0), CoarseGrain::infinity()}) {
      const auto e = build_quadrature_effects(cg, 40);
      worst = std::max(worst, max_abs(e.W_plus + e.W_minus - identity(40)));
      for (const Matrix* w : {&e.W_plus, &e.W_minus})
        min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Matrix>(*w, Eigen::EigenvaluesOnly).eigenvalues()(0));
    }
    return std::pair{worst < 1e-8 && min_eig > -1e-9, "max|W+ + W- - I| = " + num(worst) + ", min eig " + num(min_eig)};
  });
  check("omega_eff formula", [] {
    const RabiParams p{2 * kPi * 0.299, 2 * kPi * 4.920, 2 * kPi * 6.336};
    const double rel = std::abs(effective_splitting(p) / (2 * kPi * 89.52e-3) - 1.0);
    return std::pair{rel < 1e-3, "relative error " + num(rel)};
  });
  check("negativity oracles", [] {
    const HilbertLayout l({2, 2});
    Vector bell = Vector::Zero(4);
    bell(0) = bell(3) = 1.0 / std::sqrt(2.0);
    const double nb = negativity(DensityMatrix::pure(l, bell));
    const double np = negativity(DensityMatrix::pure(l, kron(basis(2, 0), basis(2, 1))));
    return std::pair{std::abs(nb - 0.5) < 1e-9 && std::abs(np) < 1e-9, "bell " + num(nb) + ", product " + num(np)};
  });
  check("discord fixture", [] {
    const HilbertLayout l({2, 2});
    Matrix rho = Matrix::Zero(4, 4);
    rho(0, 0) = rho(3, 3) = 0.5;
    const double d = quantum_discord(DensityMatrix(l, rho)).discord;
    return std::pair{std::abs(d) < 1e-6, "classical state " + num(d)};
  });

  std::optional<VariantResult> base;
  check("trace preservation", [&] {
    base = run_variant(variants.front());
    const double drift = base->stats.max_trace_drift;
    return std::pair{drift < 1e-7, "max drift " + num(drift) + ", leakage " + num(base->stats.max_leakage)};
  });
  check("tolerance halving", [&] {
    if (!base) throw NumericalError("reference run failed");
    ResolvedVariant half = variants.front();
    half.scenario.rtol *= 0.5;
    half.scenario.atol *= 0.5;
    const VariantResult h = run_variant(half);
    double worst = 0.0;
    std::string where;
    for (const auto& c : base->series.columns) {
      if (c == "t_ns") continue;
      const auto x = base->series.column(c), y = h.series.column(c);
      for (std::size_t k = 0; k < x.size(); ++k)
        if (std::isfinite(x[k]) && std::isfinite(y[k]) && std::abs(x[k] - y[k]) > worst) {
          worst = std::abs(x[k] - y[k]);
          where = c;
        }
    }
    return std::pair{worst < 1e-4, "max change " + num(worst) + (where.empty() ? "" : " (" + where + ")") +
                                       " at rtol " + num(s.rtol)};
  });

  bool all = true;
  for (const auto& c : checks) {
    log << (c.pass ? "PASS  " : "FAIL  ") << c.name << ": " << c.detail << "\n";
    all = all && c.pass;
  }
  return all ? kOk : kFailure;
}

// ---------------------------------------------------------------------------
// Entry point

inline int main(int argc, char** argv) {
  CLI::App app{"uscsim: USC qubit-cavity readout through a driven Kerr resonator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(USCSIM_VERSION));

  RunArgs run;
  run.jobs = default_jobs();
  auto* r = app.add_subcommand("run", "run a preset or scenario file");
  r->add_option("name", run.scenario, "preset name (fig1 ... fig13) or scenario file");
  r->add_option("--preset", run.scenario, "preset name");
  r->add_option("--scenario", run.scenario, "scenario file");
  r->add_flag("--desk", run.desk, "apply the desk-scale override block");
  r->add_option("--sigma", run.sigma, "coarse-graining width (number, zero or infinity)");
  r->add_option("--out", run.out, "output directory");
  r->add_option("--metric", run.metrics, "extra metric: negativity, discord, qfunc, high_low, analytic, all");
  r->add_option("--set", run.sets, "override path=value (repeatable)");
  r->add_option("--jobs", run.jobs, "variants run concurrently (default USCSIM_JOBS or 1)");

  SweepArgs sw;
  sw.jobs = default_jobs();
  auto* s = app.add_subcommand("sweep", "run a scenario once per value of one parameter");
  s->add_option("name", sw.scenario, "preset name or scenario file");
  s->add_option("--preset", sw.scenario, "preset name");
  s->add_option("--scenario", sw.scenario, "scenario file");
  s->add_option("--param", sw.param, "dotted parameter path, e.g. measurement.sigma")->required();
  s->add_option("--values", sw.values, "comma-separated values")->required()->delimiter(',');
  s->add_flag("--desk", sw.desk, "apply the desk-scale override block");
  s->add_option("--sigma", sw.sigma, "coarse-graining width");
  s->add_option("--out", sw.out, "output directory");
  s->add_option("--metric", sw.metrics, "extra metric");
  s->add_option("--set", sw.sets, "override path=value (repeatable)");
  s->add_flag("--keep-going", sw.keep_going, "exit 0 even if some points fail");
  s->add_option("--jobs", sw.jobs, "points run concurrently (default USCSIM_JOBS or 1)");

  ValidateArgs val;
  auto* v = app.add_subcommand("validate", "run the invariant suite");
  v->add_option("--scenario", val.scenario, "dynamics scenario for the trace/convergence checks");
  v->add_option("--set", val.sets, "override path=value (repeatable)");

  auto* l = app.add_subcommand("list", "list available presets");
  std::string show_ref;
  bool show_desk = false;
  auto* sh = app.add_subcommand("show", "print the resolved scenario document(s)");
  sh->add_option("preset", show_ref, "preset name or scenario file")->required();
  sh->add_flag("--desk", show_desk, "apply the desk-scale override block");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (r->parsed()) {
    if (run.scenario.empty()) {
      std::cerr << "error: run needs a preset or --scenario\n";
      return kConfig;
    }
    return cmd_run(run);
  }
  if (s->parsed()) {
    if (sw.scenario.empty()) {
      std::cerr << "error: sweep needs a preset or --scenario\n";
      return kConfig;
    }
    return cmd_sweep(sw);
  }
  if (v->parsed()) return cmd_validate(val);
  if (l->parsed()) {
    for (const auto& n : list_presets()) {
      try {
        const json d = load_scenario(n);
        std::cout << n << "  " << d.value("description", std::string()) << "\n";
      } catch (const std::exception& e) {
        std::cout << n << "  (unreadable: " << e.what() << ")\n";
      }
    }
    return kOk;
  }
  if (sh->parsed()) {
    try {
      ResolveOptions o;
      o.desk = show_desk;
      for (const auto& rv : resolve_variants(load_scenario(show_ref), o))
        std::cout << json{{"label", rv.label}, {"scenario", rv.scenario.to_json()}}.dump(2) << "\n";
      return kOk;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return exit_code_for(e);
    }
  }
  return kFailure;
}

}  // namespace uscsim::cli

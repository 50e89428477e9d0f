#pragma once

// Declarative experiments: a JSON scenario document binds the models, the integrator, the
// readout and the metrics into one run. A document may carry named variants (dotted-path
// overrides of the base) and a desk block of overrides for reduced-size runs.
//
// Frequencies may be written as plain numbers (rad/ns) or as strings such as
// "2pi*80.735 kHz"; the string is kept and re-emitted verbatim.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "uscsim/analysis.hpp"
#include "uscsim/dynamics.hpp"
#include "uscsim/errors.hpp"
#include "uscsim/measurement.hpp"
#include "uscsim/metrics.hpp"
#include "uscsim/models.hpp"
#include "uscsim/tensor_core.hpp"

namespace uscsim {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Frequencies

/// Parses a frequency into rad/ns. Accepted forms: a number (rad/ns), "X rad/ns",
/// "2pi*X GHz|MHz|kHz|Hz", "2pi*X" (rad/ns times 2 pi).
inline double parse_frequency(const json& v, const std::string& where) {
  if (v.is_number()) return v.get<double>();
  if (!v.is_string()) throw ConfigError(where + ": expected a number or a frequency string");
  static const std::regex re(R"(^\s*(2pi\s*\*\s*)?([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*(GHz|MHz|kHz|Hz|rad/ns)?\s*$)");
  const std::string s = v.get<std::string>();
  std::smatch m;
  if (!std::regex_match(s, m, re)) throw ConfigError(where + ": cannot parse frequency '" + s + "'");
  const bool two_pi = m[1].matched;
  const double x = std::stod(m[2].str());
  const std::string unit = m[3].matched ? m[3].str() : "";
  double scale = 1.0;
  if (unit == "MHz")
    scale = 1e-3;
  else if (unit == "kHz")
    scale = 1e-6;
  else if (unit == "Hz")
    scale = 1e-9;
  if (!two_pi && !unit.empty() && unit != "rad/ns")
    throw ConfigError(where + ": '" + s + "' is a cycle frequency; write angular frequencies as 2pi*X " + unit);
  return (two_pi ? 2.0 * kPi : 1.0) * x * scale;
}

// ---------------------------------------------------------------------------
// Dotted-path access on JSON documents

inline std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    parts.push_back(path.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (const auto& p : parts)
    if (p.empty()) throw ConfigError("malformed path '" + path + "'");
  return parts;
}

inline void set_path(json& doc, const std::string& path, const json& value) {
  json* node = &doc;
  const auto parts = split_path(path);
  for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
    if (!node->is_object()) throw ConfigError("path '" + path + "' crosses a non-object");
    node = &(*node)[parts[k]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw ConfigError("path '" + path + "' crosses a non-object");
  (*node)[parts.back()] = value;
}

inline const json* get_path(const json& doc, const std::string& path) {
  const json* node = &doc;
  for (const auto& p : split_path(path)) {
    if (!node->is_object() || !node->contains(p)) return nullptr;
    node = &(*node)[p];
  }
  return node;
}

/// Applies {"a.b": v, ...} to a document.
inline void apply_overrides(json& doc, const json& overrides) {
  if (overrides.is_null()) return;
  if (!overrides.is_object()) throw ConfigError("overrides must be an object of dotted paths");
  for (const auto& [k, v] : overrides.items()) set_path(doc, k, v);
}

// ---------------------------------------------------------------------------
// Scenario

enum class ScenarioKind { Dynamics, GroundState, AdiabaticValidation };
enum class ModelKind { Full, TwoLevel, QndLimit, NullJ };
enum class UscInitial { ExactGround, ApproxGround, SigmaXPrimePlus, SigmaXPrimeMinus, LeftCoherent, RightCoherent };
enum class ResonatorInitial { Vacuum, Fock, Coherent };
enum class QTarget { UscCavity, Resonator };
enum class QBranch { None, Ge, Lt, High, Low };

namespace detail {
template <typename E>
struct EnumNames;
template <>
struct EnumNames<ScenarioKind> {
  static constexpr std::pair<ScenarioKind, const char*> table[] = {
      {ScenarioKind::Dynamics, "dynamics"},
      {ScenarioKind::GroundState, "ground_state"},
      {ScenarioKind::AdiabaticValidation, "adiabatic_validation"}};
};
template <>
struct EnumNames<ModelKind> {
  static constexpr std::pair<ModelKind, const char*> table[] = {{ModelKind::Full, "full"},
                                                                {ModelKind::TwoLevel, "two_level"},
                                                                {ModelKind::QndLimit, "qnd_limit"},
                                                                {ModelKind::NullJ, "null_J"}};
};
template <>
struct EnumNames<UscInitial> {
  static constexpr std::pair<UscInitial, const char*> table[] = {
      {UscInitial::ExactGround, "exact_ground"},
      {UscInitial::ApproxGround, "approx_ground"},
      {UscInitial::SigmaXPrimePlus, "sigma_x_prime_plus"},
      {UscInitial::SigmaXPrimeMinus, "sigma_x_prime_minus"},
      {UscInitial::LeftCoherent, "left_coherent"},
      {UscInitial::RightCoherent, "right_coherent"}};
};
template <>
struct EnumNames<ResonatorInitial> {
  static constexpr std::pair<ResonatorInitial, const char*> table[] = {
      {ResonatorInitial::Vacuum, "vacuum"}, {ResonatorInitial::Fock, "fock"}, {ResonatorInitial::Coherent, "coherent"}};
};
template <>
struct EnumNames<QTarget> {
  static constexpr std::pair<QTarget, const char*> table[] = {{QTarget::UscCavity, "usc_cavity"},
                                                              {QTarget::Resonator, "resonator"}};
};
template <>
struct EnumNames<QBranch> {
  static constexpr std::pair<QBranch, const char*> table[] = {
      {QBranch::None, "none"}, {QBranch::Ge, "ge"}, {QBranch::Lt, "lt"}, {QBranch::High, "high"}, {QBranch::Low, "low"}};
};
}  // namespace detail

template <typename E>
std::string enum_name(E e) {
  for (const auto& [v, n] : detail::EnumNames<E>::table)
    if (v == e) return n;
  return "?";
}

template <typename E>
E parse_enum(const json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + ": expected a string");
  const auto s = j.get<std::string>();
  std::string options;
  for (const auto& [v, n] : detail::EnumNames<E>::table) {
    if (s == n) return v;
    options += std::string(options.empty() ? "" : ", ") + n;
  }
  throw ConfigError(where + ": unknown value '" + s + "' (expected one of " + options + ")");
}

struct QFunctionSpec {
  bool enabled = false;
  QTarget target = QTarget::Resonator;
  QBranch branch = QBranch::None;
  QGridSpec grid;
};

struct ValidationSpec {
  double omega_q_min = 0.0, omega_q_max = 0.0;
  int points = 0;
  std::vector<double> g_ratios;
  std::vector<int> leakage_levels{2, 3, 4};
};

inline const std::vector<std::string>& known_metrics() {
  static const std::vector<std::string> m{"high_low", "negativity", "discord", "qfunc", "analytic"};
  return m;
}

struct Scenario {
  std::string name;
  std::string description;
  std::string caption;
  ScenarioKind kind = ScenarioKind::Dynamics;
  ModelKind model = ModelKind::Full;

  RabiParams rabi;
  std::optional<double> omega_eff;
  int cavity_cut = 16;
  int dressed_levels = 2;

  ResonatorParams resonator;
  int resonator_cut = 80;

  UscLossParams usc_loss;
  CoarseGrain measurement = CoarseGrain::finite(5.0);

  double t_end = 500.0;
  double dt_out = 5.0;
  double rtol = 1e-8;
  double atol = 1e-10;

  UscInitial usc_initial = UscInitial::ExactGround;
  ResonatorInitial resonator_initial = ResonatorInitial::Vacuum;
  int fock = 0;
  cplx beta{0.0, 0.0};

  std::set<std::string> metrics;
  QFunctionSpec qfunc;
  DiscordOptions discord;
  double analytic_from = 100.0;
  ValidationSpec validation;

  /// Verbatim frequency strings keyed by dotted path, echoed by to_json().
  std::map<std::string, std::string> raw;

  bool has_metric(const std::string& m) const { return metrics.count(m) > 0; }
  TimeGrid time_grid() const { return TimeGrid::uniform(0.0, t_end, dt_out, rtol, atol); }

  /// Two-level parameters: the explicit omega_eff if given, else omega_q exp(-2 alpha^2).
  TwoLevelParams two_level() const {
    return {omega_eff ? *omega_eff : effective_splitting(rabi), resonator.J};
  }

  void validate() const {
    rabi.validate();
    resonator.validate();
    usc_loss.validate();
    if (omega_eff && !(*omega_eff >= 0.0)) throw ConfigError("usc.omega_eff must be >= 0");
    if (cavity_cut < 2) throw ConfigError("usc.cavity_cut must be >= 2");
    if (dressed_levels < 2 || dressed_levels > 2 * cavity_cut) throw ConfigError("usc.dressed_levels out of range");
    if (resonator_cut < 2) throw ConfigError("resonator.cut must be >= 2");
    if (!(t_end > 0.0) || !(dt_out > 0.0) || dt_out > t_end) throw ConfigError("time: need 0 < dt_out <= t_end");
    if (!(rtol > 0.0) || !(atol > 0.0)) throw ConfigError("time: tolerances must be positive");
    if (fock < 0 || fock >= resonator_cut) throw ConfigError("initial_state.fock outside the resonator cut");
    if (has_metric("discord") && model != ModelKind::TwoLevel && dressed_levels != 2)
      throw ConfigError("discord needs a two-level USC factor (dressed_levels = 2)");
    if (qfunc.enabled) {
      qfunc.grid.validate();
      if (qfunc.target == QTarget::UscCavity && model == ModelKind::TwoLevel && kind == ScenarioKind::Dynamics)
        throw ConfigError("qfunc.target usc_cavity needs a dressed (full) model");
    }
    if (discord.grid < 2) throw ConfigError("discord.grid must be >= 2");
    if (kind == ScenarioKind::AdiabaticValidation) {
      if (validation.points < 0 || !(validation.omega_q_max >= validation.omega_q_min) || validation.g_ratios.empty())
        throw ConfigError("validation: need points >= 0, omega_q_max >= omega_q_min and g_over_omega_r");
      for (int j : validation.leakage_levels)
        if (j < 2) throw ConfigError("validation.leakage_levels must be >= 2");
    }
    if (!usc_loss_supported()) throw ConfigError("usc_loss with dressed_levels > 2 is not supported");
  }

  bool usc_loss_supported() const {
    const bool lossy = usc_loss.gamma1 > 0.0 || usc_loss.gamma2 > 0.0;
    return !lossy || model == ModelKind::TwoLevel || dressed_levels == 2;
  }

  /// Serializes back to the document form accepted by from_json().
  json to_json() const;
  static Scenario from_json(const json& doc);
};

namespace detail {

inline const json& section(const json& doc, const char* key) {
  static const json empty = json::object();
  if (!doc.contains(key)) return empty;
  const json& s = doc[key];
  if (!s.is_object()) throw ConfigError(std::string(key) + " must be an object");
  return s;
}

inline void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key) || obj[key].is_null()) return fallback;
  try {
    return obj[key].get<T>();
  } catch (const std::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

inline double freq_or(const json& obj, const char* key, double fallback, const std::string& where,
                      std::map<std::string, std::string>& raw) {
  if (!obj.contains(key) || obj[key].is_null()) return fallback;
  const std::string path = where + "." + key;
  const double v = parse_frequency(obj[key], path);
  if (obj[key].is_string()) raw[path] = obj[key].get<std::string>();
  return v;
}

inline json freq_out(const Scenario& s, const std::string& path, double value) {
  const auto it = s.raw.find(path);
  if (it != s.raw.end() && parse_frequency(json(it->second), path) == value) return it->second;
  return value;
}

inline CoarseGrain parse_sigma(const json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "zero") return CoarseGrain::zero();
    if (s == "infinity") return CoarseGrain::infinity();
    throw ConfigError("measurement.sigma: expected a number, \"zero\" or \"infinity\"");
  }
  if (!v.is_number()) throw ConfigError("measurement.sigma: expected a number, \"zero\" or \"infinity\"");
  return CoarseGrain::finite(v.get<double>());
}

inline json sigma_out(const CoarseGrain& cg) {
  switch (cg.kind) {
    case CoarseGrain::Kind::Zero: return "zero";
    case CoarseGrain::Kind::Infinity: return "infinity";
    default: return cg.sigma;
  }
}

inline std::pair<double, double> pair_or(const json& obj, const char* key, std::pair<double, double> fallback,
                                         const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj[key];
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError(where + "." + key + ": expected [a, b]");
  return {v[0].get<double>(), v[1].get<double>()};
}

}  // namespace detail

inline Scenario Scenario::from_json(const json& doc) {
  using namespace detail;
  if (!doc.is_object()) throw ConfigError("scenario must be a JSON object");
  check_keys(doc, "scenario",
             {"name", "description", "caption", "kind", "model", "usc", "resonator", "usc_loss", "measurement", "time",
              "initial_state", "metrics", "qfunc", "discord", "analytic", "validation", "variants", "desk"});
  Scenario s;
  s.name = get_or<std::string>(doc, "name", "", "scenario");
  s.description = get_or<std::string>(doc, "description", "", "scenario");
  s.caption = get_or<std::string>(doc, "caption", "", "scenario");
  if (doc.contains("kind")) s.kind = parse_enum<ScenarioKind>(doc["kind"], "kind");
  if (doc.contains("model")) s.model = parse_enum<ModelKind>(doc["model"], "model");

  const json& u = section(doc, "usc");
  check_keys(u, "usc", {"omega_q", "g", "omega_r", "omega_eff", "cavity_cut", "dressed_levels"});
  s.rabi.omega_q = freq_or(u, "omega_q", 0.0, "usc", s.raw);
  s.rabi.g = freq_or(u, "g", 0.0, "usc", s.raw);
  s.rabi.omega_r = freq_or(u, "omega_r", 1.0, "usc", s.raw);
  if (u.contains("omega_eff") && !u["omega_eff"].is_null()) s.omega_eff = freq_or(u, "omega_eff", 0.0, "usc", s.raw);
  s.cavity_cut = get_or<int>(u, "cavity_cut", s.cavity_cut, "usc");
  s.dressed_levels = get_or<int>(u, "dressed_levels", s.dressed_levels, "usc");

  const json& r = section(doc, "resonator");
  check_keys(r, "resonator", {"delta", "chi", "f", "omega_d", "kappa", "J", "cut"});
  s.resonator.delta = freq_or(r, "delta", 0.0, "resonator", s.raw);
  s.resonator.chi = freq_or(r, "chi", 0.0, "resonator", s.raw);
  s.resonator.f = freq_or(r, "f", 0.0, "resonator", s.raw);
  s.resonator.omega_d = freq_or(r, "omega_d", 0.0, "resonator", s.raw);
  s.resonator.kappa = freq_or(r, "kappa", 0.0, "resonator", s.raw);
  s.resonator.J = freq_or(r, "J", 0.0, "resonator", s.raw);
  s.resonator_cut = get_or<int>(r, "cut", s.resonator_cut, "resonator");

  const json& l = section(doc, "usc_loss");
  check_keys(l, "usc_loss", {"gamma1", "gamma2"});
  s.usc_loss.gamma1 = freq_or(l, "gamma1", 0.0, "usc_loss", s.raw);
  s.usc_loss.gamma2 = freq_or(l, "gamma2", 0.0, "usc_loss", s.raw);

  const json& m = section(doc, "measurement");
  check_keys(m, "measurement", {"sigma"});
  if (m.contains("sigma")) s.measurement = parse_sigma(m["sigma"]);

  const json& t = section(doc, "time");
  check_keys(t, "time", {"t_end", "dt_out", "rtol", "atol"});
  s.t_end = get_or<double>(t, "t_end", s.t_end, "time");
  s.dt_out = get_or<double>(t, "dt_out", s.dt_out, "time");
  s.rtol = get_or<double>(t, "rtol", s.rtol, "time");
  s.atol = get_or<double>(t, "atol", s.atol, "time");

  const json& i = section(doc, "initial_state");
  check_keys(i, "initial_state", {"usc", "resonator", "fock", "beta"});
  if (i.contains("usc")) s.usc_initial = parse_enum<UscInitial>(i["usc"], "initial_state.usc");
  if (i.contains("resonator")) s.resonator_initial = parse_enum<ResonatorInitial>(i["resonator"], "initial_state.resonator");
  s.fock = get_or<int>(i, "fock", 0, "initial_state");
  const auto b = pair_or(i, "beta", {0.0, 0.0}, "initial_state");
  s.beta = cplx(b.first, b.second);

  if (doc.contains("metrics")) {
    if (!doc["metrics"].is_array()) throw ConfigError("metrics must be an array of names");
    for (const auto& v : doc["metrics"]) {
      const auto name = v.is_string() ? v.get<std::string>() : std::string();
      const auto& known = known_metrics();
      if (std::find(known.begin(), known.end(), name) == known.end())
        throw ConfigError("metrics: unknown metric '" + v.dump() + "'");
      s.metrics.insert(name);
    }
  }

  const json& q = section(doc, "qfunc");
  check_keys(q, "qfunc", {"target", "branch", "re", "im", "points"});
  s.qfunc.enabled = s.has_metric("qfunc");
  if (q.contains("target")) s.qfunc.target = parse_enum<QTarget>(q["target"], "qfunc.target");
  if (q.contains("branch")) s.qfunc.branch = parse_enum<QBranch>(q["branch"], "qfunc.branch");
  const auto re = pair_or(q, "re", {s.qfunc.grid.re_min, s.qfunc.grid.re_max}, "qfunc");
  const auto im = pair_or(q, "im", {s.qfunc.grid.im_min, s.qfunc.grid.im_max}, "qfunc");
  const auto pts = pair_or(q, "points", {s.qfunc.grid.n_re, s.qfunc.grid.n_im}, "qfunc");
  s.qfunc.grid = {re.first, re.second, im.first, im.second, static_cast<int>(pts.first), static_cast<int>(pts.second)};

  const json& d = section(doc, "discord");
  check_keys(d, "discord", {"grid", "refine"});
  s.discord.grid = get_or<int>(d, "grid", s.discord.grid, "discord");
  s.discord.refine = get_or<bool>(d, "refine", s.discord.refine, "discord");

  const json& a = section(doc, "analytic");
  check_keys(a, "analytic", {"from"});
  s.analytic_from = get_or<double>(a, "from", s.analytic_from, "analytic");

  const json& v = section(doc, "validation");
  check_keys(v, "validation", {"omega_q_min", "omega_q_max", "points", "g_over_omega_r", "leakage_levels"});
  s.validation.omega_q_min = freq_or(v, "omega_q_min", 0.0, "validation", s.raw);
  s.validation.omega_q_max = freq_or(v, "omega_q_max", 0.0, "validation", s.raw);
  s.validation.points = get_or<int>(v, "points", 0, "validation");
  s.validation.g_ratios = get_or<std::vector<double>>(v, "g_over_omega_r", {}, "validation");
  s.validation.leakage_levels = get_or<std::vector<int>>(v, "leakage_levels", s.validation.leakage_levels, "validation");

  s.validate();
  return s;
}

inline json Scenario::to_json() const {
  using detail::freq_out;
  json doc;
  doc["name"] = name;
  if (!description.empty()) doc["description"] = description;
  if (!caption.empty()) doc["caption"] = caption;
  doc["kind"] = enum_name(kind);
  doc["model"] = enum_name(model);
  json u;
  u["omega_q"] = freq_out(*this, "usc.omega_q", rabi.omega_q);
  u["g"] = freq_out(*this, "usc.g", rabi.g);
  u["omega_r"] = freq_out(*this, "usc.omega_r", rabi.omega_r);
  if (omega_eff) u["omega_eff"] = freq_out(*this, "usc.omega_eff", *omega_eff);
  u["cavity_cut"] = cavity_cut;
  u["dressed_levels"] = dressed_levels;
  doc["usc"] = u;
  json r;
  r["delta"] = freq_out(*this, "resonator.delta", resonator.delta);
  r["chi"] = freq_out(*this, "resonator.chi", resonator.chi);
  r["f"] = freq_out(*this, "resonator.f", resonator.f);
  r["omega_d"] = freq_out(*this, "resonator.omega_d", resonator.omega_d);
  r["kappa"] = freq_out(*this, "resonator.kappa", resonator.kappa);
  r["J"] = freq_out(*this, "resonator.J", resonator.J);
  r["cut"] = resonator_cut;
  doc["resonator"] = r;
  doc["usc_loss"] = {{"gamma1", freq_out(*this, "usc_loss.gamma1", usc_loss.gamma1)},
                     {"gamma2", freq_out(*this, "usc_loss.gamma2", usc_loss.gamma2)}};
  doc["measurement"] = {{"sigma", detail::sigma_out(measurement)}};
  doc["time"] = {{"t_end", t_end}, {"dt_out", dt_out}, {"rtol", rtol}, {"atol", atol}};
  json i{{"usc", enum_name(usc_initial)}, {"resonator", enum_name(resonator_initial)}};
  if (resonator_initial == ResonatorInitial::Fock) i["fock"] = fock;
  if (resonator_initial == ResonatorInitial::Coherent) i["beta"] = {beta.real(), beta.imag()};
  doc["initial_state"] = i;
  doc["metrics"] = json::array();
  for (const auto& m : known_metrics())
    if (has_metric(m)) doc["metrics"].push_back(m);
  doc["qfunc"] = {{"target", enum_name(qfunc.target)},
                  {"branch", enum_name(qfunc.branch)},
                  {"re", {qfunc.grid.re_min, qfunc.grid.re_max}},
                  {"im", {qfunc.grid.im_min, qfunc.grid.im_max}},
                  {"points", {qfunc.grid.n_re, qfunc.grid.n_im}}};
  doc["discord"] = {{"grid", discord.grid}, {"refine", discord.refine}};
  doc["analytic"] = {{"from", analytic_from}};
  if (kind == ScenarioKind::AdiabaticValidation)
    doc["validation"] = {{"omega_q_min", freq_out(*this, "validation.omega_q_min", validation.omega_q_min)},
                         {"omega_q_max", freq_out(*this, "validation.omega_q_max", validation.omega_q_max)},
                         {"points", validation.points},
                         {"g_over_omega_r", validation.g_ratios},
                         {"leakage_levels", validation.leakage_levels}};
  return doc;
}

/// Field-by-field equality (raw frequency strings excluded: they only affect emission).
inline bool same_fields(const Scenario& a, const Scenario& b) {
  const auto rabi = [](const RabiParams& x) { return std::tie(x.omega_q, x.g, x.omega_r); };
  const auto res = [](const ResonatorParams& x) { return std::tie(x.delta, x.chi, x.f, x.omega_d, x.kappa, x.J); };
  const auto grid = [](const QGridSpec& x) { return std::tie(x.re_min, x.re_max, x.im_min, x.im_max, x.n_re, x.n_im); };
  return a.name == b.name && a.description == b.description && a.caption == b.caption && a.kind == b.kind &&
         a.model == b.model && rabi(a.rabi) == rabi(b.rabi) && a.omega_eff == b.omega_eff &&
         a.cavity_cut == b.cavity_cut && a.dressed_levels == b.dressed_levels && res(a.resonator) == res(b.resonator) &&
         a.resonator_cut == b.resonator_cut && a.usc_loss.gamma1 == b.usc_loss.gamma1 &&
         a.usc_loss.gamma2 == b.usc_loss.gamma2 && a.measurement == b.measurement && a.t_end == b.t_end &&
         a.dt_out == b.dt_out && a.rtol == b.rtol && a.atol == b.atol && a.usc_initial == b.usc_initial &&
         a.resonator_initial == b.resonator_initial &&
         (a.resonator_initial != ResonatorInitial::Fock || a.fock == b.fock) &&
         (a.resonator_initial != ResonatorInitial::Coherent || a.beta == b.beta) && a.metrics == b.metrics &&
         a.qfunc.enabled == b.qfunc.enabled && a.qfunc.target == b.qfunc.target && a.qfunc.branch == b.qfunc.branch &&
         grid(a.qfunc.grid) == grid(b.qfunc.grid) && a.discord.grid == b.discord.grid &&
         a.discord.refine == b.discord.refine && a.analytic_from == b.analytic_from &&
         (a.kind != ScenarioKind::AdiabaticValidation ||
          (a.validation.omega_q_min == b.validation.omega_q_min && a.validation.omega_q_max == b.validation.omega_q_max &&
           a.validation.points == b.validation.points && a.validation.g_ratios == b.validation.g_ratios &&
           a.validation.leakage_levels == b.validation.leakage_levels));
}

// ---------------------------------------------------------------------------
// Variant resolution

struct ResolveOptions {
  bool desk = false;
  json overrides = json::object();          ///< dotted paths applied after variants
  std::vector<std::string> extra_metrics;   ///< merged into every variant
};

struct ResolvedVariant {
  std::string label;
  json document;
  Scenario scenario;
};

/// base -> desk block (optional) -> variant overrides -> caller overrides. Variants that end up
/// identical to an earlier one are dropped.
inline std::vector<ResolvedVariant> resolve_variants(const json& doc, const ResolveOptions& opt = {}) {
  if (!doc.is_object()) throw ConfigError("scenario must be a JSON object");
  json base = doc;
  base.erase("variants");
  base.erase("desk");
  if (opt.desk && doc.contains("desk")) apply_overrides(base, doc["desk"]);

  std::vector<std::pair<std::string, json>> raw;
  if (doc.contains("variants")) {
    if (!doc["variants"].is_array() || doc["variants"].empty()) throw ConfigError("variants must be a non-empty array");
    for (const auto& v : doc["variants"]) {
      if (!v.is_object() || !v.contains("label") || !v["label"].is_string())
        throw ConfigError("each variant needs a string label");
      json d = base;
      if (v.contains("set")) apply_overrides(d, v["set"]);
      raw.emplace_back(v["label"].get<std::string>(), std::move(d));
    }
  } else {
    raw.emplace_back("main", base);
  }

  std::vector<ResolvedVariant> out;
  std::set<std::string> labels;
  for (auto& [label, d] : raw) {
    apply_overrides(d, opt.overrides);
    for (const auto& m : opt.extra_metrics) {
      if (!d.contains("metrics")) d["metrics"] = json::array();
      if (std::find(d["metrics"].begin(), d["metrics"].end(), m) == d["metrics"].end()) d["metrics"].push_back(m);
    }
    if (!labels.insert(label).second) throw ConfigError("duplicate variant label '" + label + "'");
    Scenario s = Scenario::from_json(d);
    const bool dup = std::any_of(out.begin(), out.end(), [&](const ResolvedVariant& r) { return same_fields(r.scenario, s); });
    if (!dup) out.push_back({label, d, std::move(s)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Results

/// Column-ordered numeric table; the first row fixes the column order.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void append(const std::vector<std::pair<std::string, double>>& row) {
    if (columns.empty())
      for (const auto& [k, v] : row) columns.push_back(k);
    if (row.size() != columns.size()) throw Error("table row has a different column set");
    std::vector<double> r;
    r.reserve(row.size());
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (row[k].first != columns[k]) throw Error("table row has a different column order");
      r.push_back(row[k].second);
    }
    rows.push_back(std::move(r));
  }
  bool has(const std::string& name) const { return std::find(columns.begin(), columns.end(), name) != columns.end(); }
  std::vector<double> column(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw Error("no column '" + name + "'");
    const auto c = static_cast<std::size_t>(it - columns.begin());
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }
};

struct VariantResult {
  std::string label;
  Scenario scenario;
  json document;                        ///< resolved scenario document
  Table series;                         ///< time series, or the sweep table for validation runs
  std::map<std::string, QGrid> qgrids;  ///< keyed by output stem, e.g. "qfunc_xlt"
  json summary = json::object();
  EvolveStats stats;
  std::vector<std::string> warnings;
  double wall_seconds = 0.0;
};

struct ResultBundle {
  std::string name;
  std::vector<VariantResult> variants;

  const VariantResult& variant(const std::string& label) const {
    for (const auto& v : variants)
      if (v.label == label) return v;
    throw Error("no variant '" + label + "' in " + name);
  }
};

// ---------------------------------------------------------------------------
// Runners

namespace detail {

inline double nan() { return std::numeric_limits<double>::quiet_NaN(); }

/// Runs f(0..n-1) on up to `jobs` threads; rethrows the first failure.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& f) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t k = 0; k < n; ++k) f(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t k; (k = next++) < n;) {
        try {
          f(k);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first) first = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

/// Everything the observer needs about the model in use.
struct BuiltModel {
  LindbladGenerator generator;
  DensityMatrix rho0;
  std::optional<DressedUsc> dressed;  ///< set for dressed (full / qnd / null) models
  TwoLevelParams tl;                  ///< for analytic comparisons
  Matrix sz;                          ///< sigma_z on the USC factor (dressed models only)
  Matrix sxp, szp;                    ///< sigma_x', sigma_z' on the USC factor
  Matrix xprime;                      ///< (X+ + X-)/2 on the USC factor (dressed models only)
  double lost_norm = 0.0;             ///< initial-state norm outside the kept USC levels
  std::vector<std::string> warnings;
};

inline Vector resonator_initial_state(const Scenario& s) {
  switch (s.resonator_initial) {
    case ResonatorInitial::Fock: return basis(s.resonator_cut, s.fock);
    case ResonatorInitial::Coherent: return coherent_state(s.beta, s.resonator_cut);
    default: return basis(s.resonator_cut, 0);
  }
}

inline BuiltModel build_model(const Scenario& s) {
  const int nb = s.resonator_cut;
  RabiParams p = s.rabi;
  ResonatorParams res = s.resonator;
  if (s.model == ModelKind::QndLimit) p.omega_q = 0.0;
  if (s.model == ModelKind::NullJ) res.J = 0.0;

  std::optional<LindbladGenerator> gen;
  std::optional<DressedUsc> dressed;
  int k = 2;
  TwoLevelParams tl = s.two_level();
  tl.J = res.J;
  if (s.model == ModelKind::QndLimit) tl.omega_eff = 0.0;
  std::vector<std::string> warnings;

  if (s.model == ModelKind::TwoLevel) {
    if (!s.omega_eff)
      for (auto& w : effective_two_level(p, res.J).warnings) warnings.push_back(w);
    gen = two_level_generator(tl, res, nb, s.usc_loss);
  } else {
    dressed = dressed_usc(p, s.cavity_cut, s.dressed_levels);
    k = dressed->levels();
    LindbladGenerator base = dressed_generator(*dressed, res, nb);
    std::vector<CollapseOp> c = base.collapse_ops();
    const HilbertLayout& layout = base.layout();
    if (s.usc_loss.gamma1 > 0.0) {
      Matrix lower = Matrix::Zero(k, k);
      lower(0, 1) = 1.0;
      c.push_back({embed(lower, layout, 0), s.usc_loss.gamma1});
    }
    if (s.usc_loss.gamma2 > 0.0) {
      Matrix z = Matrix::Zero(k, k);
      z(0, 0) = -1.0;
      z(1, 1) = 1.0;
      c.push_back({embed(z, layout, 0), s.usc_loss.gamma2});
    }
    gen = LindbladGenerator(base.hamiltonian(), std::move(c));
  }

  Matrix sxp = Matrix::Zero(k, k), szp = Matrix::Zero(k, k);
  sxp(0, 1) = sxp(1, 0) = 1.0;
  szp(0, 0) = -1.0;
  szp(1, 1) = 1.0;

  // USC initial vector in the K-level basis.
  Vector usc = Vector::Zero(k);
  double lost = 0.0;
  const auto project = [&](const Vector& fock_state) {
    auto [c, l] = dressed->project(fock_state);
    lost = l;
    if (c.norm() < 1e-6) throw ConfigError("initial USC state has no weight on the kept levels");
    return Vector(c.normalized());
  };
  const double r2 = 1.0 / std::sqrt(2.0);
  switch (s.usc_initial) {
    case UscInitial::ExactGround: usc(0) = 1.0; break;
    case UscInitial::ApproxGround:
      if (dressed)
        usc = project(approx_ground_excited(p, usc_layout(s.cavity_cut)).ground);
      else
        usc(0) = 1.0;
      break;
    case UscInitial::SigmaXPrimePlus: usc(0) = usc(1) = r2; break;
    case UscInitial::SigmaXPrimeMinus:
      usc(0) = r2;
      usc(1) = -r2;
      break;
    case UscInitial::LeftCoherent:
    case UscInitial::RightCoherent: {
      const bool left = s.usc_initial == UscInitial::LeftCoherent;
      if (dressed) {
        const double a = p.alpha();
        const Vector v = left ? kron(basis(2, 0), coherent_state(-a, s.cavity_cut))
                              : kron(basis(2, 1), coherent_state(a, s.cavity_cut));
        usc = project(v);
      } else {
        // |L> ~ sigma_z = +1 maps to sigma_x' = +1; |R> to sigma_x' = -1.
        usc(0) = r2;
        usc(1) = left ? r2 : -r2;
      }
      break;
    }
  }

  const Vector psi = kron(usc, resonator_initial_state(s));
  DensityMatrix rho0 = DensityMatrix::pure(gen->layout(), psi);

  BuiltModel m{std::move(*gen), std::move(rho0), dressed, tl, Matrix(), sxp, szp, Matrix(), lost, warnings};
  if (dressed) {
    m.sz = 0.5 * (dressed->sigma_z + dressed->sigma_z.adjoint());
    const double tol = 1e-9 * std::max(1.0, dressed->energies.cwiseAbs().maxCoeff());
    m.xprime = eigenbasis_x_prime(dressed->position, dressed->energies, tol);
  }
  return m;
}

inline double expect(const Matrix& rho, const Matrix& op) { return op.transpose().cwiseProduct(rho).sum().real(); }

inline double max_gap(const std::vector<double>& a, const std::vector<double>& b) {
  double out = 0.0;
  for (std::size_t k = 0; k < a.size() && k < b.size(); ++k)
    if (std::isfinite(a[k]) && std::isfinite(b[k])) out = std::max(out, std::abs(a[k] - b[k]));
  return out;
}

inline double max_finite(const std::vector<double>& a) {
  double out = nan();
  for (double v : a)
    if (std::isfinite(v) && !(v <= out)) out = v;
  return out;
}

inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline VariantResult run_dynamics(const Scenario& s) {
  VariantResult out;
  BuiltModel m = build_model(s);
  out.warnings = m.warnings;
  const bool dressed = m.dressed.has_value();
  const HilbertLayout layout = m.generator.layout();
  const int nb = s.resonator_cut;
  const Operator num = embed(number_op(nb), layout, 1);
  const Operator bop = embed(destroy(nb), layout, 1);
  const Operator sxp = embed(m.sxp, layout, 0);
  const Operator szp = embed(m.szp, layout, 0);
  const bool high_low = s.has_metric("high_low") || s.has_metric("analytic");
  const bool analytic = s.has_metric("analytic");
  std::optional<DensityMatrix> final_state;

  const auto observer = [&](double t, const DensityMatrix& rho) {
    std::vector<std::pair<std::string, double>> row;
    row.emplace_back("t_ns", t);
    const auto c = try_conditional_states(rho, s.measurement, 1);
    row.emplace_back("p_ge", c.p_ge);
    row.emplace_back("p_lt", c.p_lt);
    row.emplace_back("n_res", rho.expect(num));
    const cplx b = rho.expect_complex(bop);
    row.emplace_back("b_re", b.real());
    row.emplace_back("b_im", b.imag());
    if (dressed) row.emplace_back("sigma_z", rho.expect(embed(m.sz, layout, 0)));
    row.emplace_back("sigma_x_prime", rho.expect(sxp));
    row.emplace_back("sigma_z_prime", rho.expect(szp));
    for (const auto& [tag, branch] : {std::pair{"ge", &c.ge}, std::pair{"lt", &c.lt}}) {
      const std::string t_ = tag;
      const auto& br = *branch;
      if (dressed) row.emplace_back("sigma_z_" + t_, br ? expect(br->matrix(), m.sz) : nan());
      row.emplace_back("sigma_x_prime_" + t_, br ? expect(br->matrix(), m.sxp) : nan());
      row.emplace_back("sigma_z_prime_" + t_, br ? expect(br->matrix(), m.szp) : nan());
      if (dressed) row.emplace_back("x_prime_" + t_, br ? expect(br->matrix(), m.xprime) : nan());
    }
    if (high_low) {
      const auto hl = high_low_split(rho, 1);
      row.emplace_back("p_high", hl.p_high);
      row.emplace_back("n_high", hl.n_high);
      row.emplace_back("n_low", hl.n_low);
      row.emplace_back("high_is_ge", hl.high_side == Outcome::Ge ? 1.0 : 0.0);
      for (const auto& [tag, st] : {std::pair{"high", &hl.high}, std::pair{"low", &hl.low}}) {
        const std::string t_ = tag;
        const auto& br = *st;
        if (dressed) row.emplace_back("sigma_z_" + t_, br ? br->expect(embed(m.sz, layout, 0)) : nan());
        row.emplace_back("sigma_x_prime_" + t_, br ? br->expect(sxp) : nan());
        row.emplace_back("sigma_z_prime_" + t_, br ? br->expect(szp) : nan());
      }
      if (analytic) {
        const auto h = effective_static_hamiltonian(m.tl, std::max(0.0, hl.n_high));
        const auto l = effective_static_hamiltonian(m.tl, std::max(0.0, hl.n_low));
        row.emplace_back("sigma_x_prime_high_analytic", h.sigma_x);
        row.emplace_back("sigma_x_prime_low_analytic", l.sigma_x);
        row.emplace_back("sigma_z_prime_high_analytic", h.sigma_z);
        row.emplace_back("sigma_z_prime_low_analytic", l.sigma_z);
      }
    }
    if (s.has_metric("negativity")) row.emplace_back("negativity", negativity(rho, 0));
    if (s.has_metric("discord")) row.emplace_back("discord", quantum_discord(rho, s.discord).discord);
    out.series.append(row);
    if (t >= s.t_end) final_state = rho;
  };

  EvolveOptions eo;
  eo.store_states = false;
  const auto t0 = std::chrono::steady_clock::now();
  const Trajectory traj = evolve(m.generator, m.rho0, s.time_grid(), eo, observer);
  out.stats = traj.stats;

  // Q functions of the final state.
  if (s.qfunc.enabled && final_state) {
    const DensityMatrix& rho = *final_state;
    std::string stem = "qfunc";
    Matrix target;
    if (s.qfunc.target == QTarget::UscCavity) {
      Matrix usc;
      if (s.qfunc.branch == QBranch::Ge || s.qfunc.branch == QBranch::Lt) {
        const auto c = conditional_states(rho, s.measurement, 1);
        usc = (s.qfunc.branch == QBranch::Ge ? c.ge : c.lt).matrix();
        stem += s.qfunc.branch == QBranch::Ge ? "_xge" : "_xlt";
      } else if (s.qfunc.branch == QBranch::High || s.qfunc.branch == QBranch::Low) {
        const auto hl = high_low_split(rho, 1);
        const auto& br = s.qfunc.branch == QBranch::High ? hl.high : hl.low;
        if (!br) throw DegenerateOutcomeError("qfunc: empty " + enum_name(s.qfunc.branch) + " branch");
        usc = partial_trace_matrix(br->matrix(), layout, {0});
        stem += "_" + enum_name(s.qfunc.branch);
      } else {
        usc = partial_trace_matrix(rho.matrix(), layout, {0});
      }
      const Matrix lifted = m.dressed->lift(usc);
      target = partial_trace_matrix(lifted, usc_layout(s.cavity_cut), {1});
    } else {
      if (s.qfunc.branch == QBranch::High || s.qfunc.branch == QBranch::Low) {
        const auto hl = high_low_split(rho, 1);
        const auto& br = s.qfunc.branch == QBranch::High ? hl.high : hl.low;
        if (!br) throw DegenerateOutcomeError("qfunc: empty " + enum_name(s.qfunc.branch) + " branch");
        target = partial_trace_matrix(br->matrix(), layout, {1});
        stem += "_" + enum_name(s.qfunc.branch);
      } else if (s.qfunc.branch == QBranch::None) {
        target = partial_trace_matrix(rho.matrix(), layout, {1});
        stem += "_resonator";
      } else {
        throw ConfigError("qfunc: resonator target supports branch none, high or low");
      }
    }
    target = 0.5 * (target + target.adjoint()).eval();
    out.qgrids.emplace(stem, q_function(target, s.qfunc.grid));
  }

  // Summary.
  json& sum = out.summary;
  sum["model"] = enum_name(s.model);
  sum["omega_eff"] = dressed ? m.dressed->energies(1) : m.tl.omega_eff;
  sum["omega_eff_two_level"] = m.tl.omega_eff;
  sum["initial_lost_norm"] = m.lost_norm;
  if (dressed) sum["usc_edge_population"] = m.dressed->edge_population;
  sum["measurement_sigma"] = detail::sigma_out(s.measurement);
  const auto& tbl = out.series;
  const auto last = [&](const std::string& c) { return finite_or_null(tbl.column(c).back()); };
  sum["final"] = json::object();
  for (const auto& c : tbl.columns)
    if (c != "t_ns") sum["final"][c] = last(c);
  const std::string zcol = dressed ? "sigma_z" : "sigma_x_prime";
  sum["branch_separation_sigma_z_ge_lt"] = max_gap(tbl.column(zcol + "_ge"), tbl.column(zcol + "_lt"));
  sum["branch_separation_sigma_x_prime_ge_lt"] = max_gap(tbl.column("sigma_x_prime_ge"), tbl.column("sigma_x_prime_lt"));
  if (dressed) sum["branch_separation_x_prime_ge_lt"] = max_gap(tbl.column("x_prime_ge"), tbl.column("x_prime_lt"));
  if (tbl.has("negativity")) sum["peak_negativity"] = max_finite(tbl.column("negativity"));
  if (tbl.has("discord")) sum["peak_discord"] = max_finite(tbl.column("discord"));
  if (tbl.has("p_high")) {
    sum["high_side"] = tbl.column("high_is_ge").back() > 0.5 ? "x>=0" : "x<0";
  }
  if (analytic) {
    const auto st = stark_tracking(m.tl, tbl.column("t_ns"), tbl.column("n_high"), tbl.column("n_low"),
                                   tbl.column("sigma_x_prime_high"), tbl.column("sigma_x_prime_low"), s.analytic_from);
    sum["analytic_max_deviation"] = st.max_dev;
    sum["analytic_from"] = s.analytic_from;
  }
  if (final_state) {
    const auto c = try_conditional_states(*final_state, s.measurement, 1);
    if (c.ge && c.lt) sum["final_branch_trace_distance"] = trace_distance(*c.ge, *c.lt);
  }
  sum["integrator"] = {{"accepted", traj.stats.accepted},
                       {"rejected", traj.stats.rejected},
                       {"rhs_evaluations", traj.stats.rhs_evaluations},
                       {"max_trace_drift", traj.stats.max_trace_drift},
                       {"max_leakage", traj.stats.max_leakage},
                       {"rtol", s.rtol},
                       {"atol", s.atol}};
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline VariantResult run_ground_state(const Scenario& s) {
  VariantResult out;
  const RabiSpectrum spec = rabi_spectrum(s.rabi, s.cavity_cut);
  const double edge = edge_population(spec.vectors.col(0), spec.layout, 1);
  if (edge > 1e-6) throw TruncationError("ground state reaches the cavity cut", edge);
  const Vector g = spec.vectors.col(0);
  const Matrix rho = g * g.adjoint();
  const Matrix cav = partial_trace_matrix(rho, spec.layout, {1});
  const QGrid q = q_function(cav, s.qfunc.grid);
  out.qgrids.emplace("qfunc_ground", q);

  // Lobe centres along the real axis: maxima of Q on each half-plane.
  int il = 0, ir = 0, jl = 0, jr = 0;
  double ql = -1.0, qr = -1.0;
  for (int j = 0; j < q.spec.n_im; ++j)
    for (int i = 0; i < q.spec.n_re; ++i) {
      const double v = q.values(j, i);
      if (q.spec.re(i) < 0.0 && v > ql) ql = v, il = i, jl = j;
      if (q.spec.re(i) > 0.0 && v > qr) qr = v, ir = i, jr = j;
    }
  const auto approx = approx_ground_excited(s.rabi, spec.layout);
  out.summary = {{"alpha", s.rabi.alpha()},
                 {"ground_energy", spec.energies(0)},
                 {"first_excited_energy", spec.energies(1)},
                 {"splitting", spec.energies(1) - spec.energies(0)},
                 {"omega_eff", effective_splitting(s.rabi)},
                 {"approx_ground_fidelity", std::norm(approx.ground.dot(g))},
                 {"infidelity_series", infidelity_series(s.rabi)},
                 {"cavity_purity", (cav * cav).trace().real()},
                 {"lobe_left", {{"re", q.spec.re(il)}, {"im", q.spec.im(jl)}, {"q", ql}}},
                 {"lobe_right", {{"re", q.spec.re(ir)}, {"im", q.spec.im(jr)}, {"q", qr}}},
                 {"q_integral", q.integral()},
                 {"edge_population", edge}};
  return out;
}

inline VariantResult run_adiabatic_validation(const Scenario& s) {
  VariantResult out;
  const auto& v = s.validation;
  // points = 0 evaluates the single usc.omega_q (useful as a sweep target).
  std::vector<double> omegas;
  if (v.points == 0) omegas.push_back(s.rabi.omega_q);
  for (int k = 0; k < v.points; ++k)
    omegas.push_back(v.points == 1 ? v.omega_q_min
                                   : v.omega_q_min + (v.omega_q_max - v.omega_q_min) * k / (v.points - 1));
  for (double ratio : v.g_ratios)
    for (double wq : omegas) {
      const RabiParams p{wq, ratio * s.rabi.omega_r, s.rabi.omega_r};
      const auto cand = infidelity_candidates(p);
      const auto fid = exact_fidelity(p, s.cavity_cut);
      std::vector<std::pair<std::string, double>> row{{"g_over_omega_r", ratio},
                                                      {"omega_q", wq},
                                                      {"omega_q_ghz", wq / (2.0 * kPi)},
                                                      {"f", cand.quarter},
                                                      {"f_full_prefactor", cand.full},
                                                      {"one_minus_F_G", 1.0 - fid.ground},
                                                      {"one_minus_F_E", 1.0 - fid.excited},
                                                      {"omega_eff", effective_splitting(p)}};
      for (int j : v.leakage_levels) row.emplace_back("h" + std::to_string(j), leakage(p, s.cavity_cut, j));
      out.series.append(row);
    }
  const auto f = out.series.column("f");
  const auto one_minus = out.series.column("one_minus_F_G");
  double worst = 0.0, max_f = 0.0, max_h = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    max_f = std::max(max_f, f[k]);
    if (f[k] > 0.0) worst = std::max(worst, std::abs(one_minus[k] - f[k]) / f[k]);
  }
  for (int j : v.leakage_levels)
    for (double h : out.series.column("h" + std::to_string(j))) max_h = std::max(max_h, h);
  out.summary = {{"max_f", max_f}, {"max_relative_gap_1mFG_vs_f", worst}, {"max_leakage_h", max_h}};
  return out;
}

}  // namespace detail

inline VariantResult run_variant(const ResolvedVariant& v) {
  const auto t0 = std::chrono::steady_clock::now();
  VariantResult r;
  switch (v.scenario.kind) {
    case ScenarioKind::GroundState: r = detail::run_ground_state(v.scenario); break;
    case ScenarioKind::AdiabaticValidation: r = detail::run_adiabatic_validation(v.scenario); break;
    default: r = detail::run_dynamics(v.scenario); break;
  }
  r.label = v.label;
  r.scenario = v.scenario;
  r.document = v.document;
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

/// Runs every resolved variant of a scenario document. Deterministic; variants may run
/// concurrently (`jobs`) without affecting results.
inline ResultBundle run_scenario(const json& doc, const ResolveOptions& opt = {}, int jobs = 1) {
  const auto variants = resolve_variants(doc, opt);
  ResultBundle out;
  out.name = variants.front().scenario.name;
  out.variants.resize(variants.size());
  detail::parallel_for(variants.size(), jobs, [&](std::size_t k) { out.variants[k] = run_variant(variants[k]); });
  return out;
}

inline ResultBundle run_scenario(const Scenario& s, int jobs = 1) { return run_scenario(s.to_json(), {}, jobs); }

// ---------------------------------------------------------------------------
// Sweeps

struct SweepSpec {
  std::string path;
  std::vector<json> values;
  int jobs = 1;

  void validate() const {
    split_path(path);
    if (values.empty()) throw ConfigError("sweep needs a non-empty value list");
  }
};

struct SweepPoint {
  json value;
  std::optional<ResultBundle> bundle;
  std::string error;  ///< empty on success
  int error_class = 0;  ///< 2 config, 3 numerical, 1 other
};

inline int error_class(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const NumericalError*>(&e) || dynamic_cast<const TruncationError*>(&e)) return 3;
  return 1;
}

/// Runs the scenario once per swept value. A failing point is recorded and the sweep continues.
inline std::vector<SweepPoint> run_sweep(const json& doc, const SweepSpec& sweep, const ResolveOptions& opt = {}) {
  sweep.validate();
  std::vector<SweepPoint> out(sweep.values.size());
  detail::parallel_for(out.size(), sweep.jobs, [&](std::size_t k) {
    out[k].value = sweep.values[k];
    try {
      ResolveOptions o = opt;
      o.overrides[sweep.path] = sweep.values[k];
      out[k].bundle = run_scenario(doc, o, 1);
    } catch (const std::exception& e) {
      out[k].error = e.what();
      out[k].error_class = error_class(e);
    }
  });
  return out;
}

}  // namespace uscsim

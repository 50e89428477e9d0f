#include <gtest/gtest.h>

#include <fstream>

#include "uscsim/cli.hpp"
#include "uscsim/scenarios.hpp"

using namespace uscsim;

namespace {
constexpr double kTwoPi = 2.0 * kPi;

/// Short two-level run, small enough for unit tests.
json small_doc() {
  return json::parse(R"({
    "name": "small",
    "kind": "dynamics",
    "model": "two_level",
    "usc": {"omega_q": "2pi*0.299 GHz", "g": "2pi*4.920 GHz", "omega_r": "2pi*6.336 GHz"},
    "resonator": {"delta": "2pi*5.698 MHz", "chi": "2pi*80.735 kHz", "f": "2pi*22.792 MHz",
                  "kappa": "2pi*2.375 MHz", "J": "2pi*949.8 kHz", "cut": 40},
    "measurement": {"sigma": 0.5},
    "time": {"t_end": 60.0, "dt_out": 20.0}
  })");
}
}  // namespace

TEST(Frequency, Parsing) {
  EXPECT_DOUBLE_EQ(parse_frequency("2pi*6.336 GHz", "x"), kTwoPi * 6.336);
  EXPECT_DOUBLE_EQ(parse_frequency("2pi*5.698 MHz", "x"), kTwoPi * 5.698e-3);
  EXPECT_DOUBLE_EQ(parse_frequency("2pi*80.735 kHz", "x"), kTwoPi * 80.735e-6);
  EXPECT_DOUBLE_EQ(parse_frequency("2pi*100 Hz", "x"), kTwoPi * 1e-7);
  EXPECT_DOUBLE_EQ(parse_frequency("0.5 rad/ns", "x"), 0.5);
  EXPECT_DOUBLE_EQ(parse_frequency(0.25, "x"), 0.25);
  EXPECT_DOUBLE_EQ(parse_frequency("2pi*0 MHz", "x"), 0.0);
  EXPECT_THROW(parse_frequency("6.336 GHz", "x"), ConfigError);
  EXPECT_THROW(parse_frequency("fast", "x"), ConfigError);
  EXPECT_THROW(parse_frequency(json::array(), "x"), ConfigError);
}

TEST(Paths, SetGetAndOverrides) {
  json d = json::object();
  set_path(d, "a.b.c", 3);
  EXPECT_EQ(*get_path(d, "a.b.c"), 3);
  EXPECT_EQ(get_path(d, "a.x"), nullptr);
  apply_overrides(d, {{"a.b.d", "v"}, {"e", 1}});
  EXPECT_EQ(d["a"]["b"]["c"], 3);  // sibling untouched
  EXPECT_EQ(d["a"]["b"]["d"], "v");
  EXPECT_THROW(set_path(d, "a.b.c.x", 1), ConfigError);
  EXPECT_THROW(split_path("a..b"), ConfigError);
}

TEST(ScenarioParse, DefaultsAndErrors) {
  const auto s = Scenario::from_json(small_doc());
  EXPECT_EQ(s.model, ModelKind::TwoLevel);
  EXPECT_EQ(s.resonator_cut, 40);
  EXPECT_DOUBLE_EQ(s.rtol, 1e-8);
  EXPECT_NEAR(s.two_level().omega_eff, kTwoPi * 89.52e-3, 1e-3 * kTwoPi * 89.52e-3);
  for (const char* bad : {R"({"bogus": 1})", R"({"usc": {"omega": 1}})", R"({"model": "three_level"})",
                          R"({"metrics": ["entropy"]})", R"({"resonator": {"kappa": -1}})",
                          R"({"time": {"t_end": 10, "dt_out": 20}})", R"({"measurement": {"sigma": -2}})",
                          R"({"resonator": {"chi": "80 kHz"}})"}) {
    json d = small_doc();
    d.merge_patch(json::parse(bad));
    EXPECT_THROW(Scenario::from_json(d), ConfigError) << bad;
  }
}

TEST(ScenarioParse, RoundTrip) {
  for (const auto& name : cli::list_presets()) {
    const json doc = cli::load_scenario(name);
    for (bool desk : {false, true}) {
      ResolveOptions o;
      o.desk = desk;
      for (const auto& v : resolve_variants(doc, o)) {
        const json emitted = v.scenario.to_json();
        const Scenario back = Scenario::from_json(emitted);
        EXPECT_TRUE(same_fields(v.scenario, back)) << name << "/" << v.label;
        EXPECT_EQ(back.to_json(), emitted) << name << "/" << v.label;
      }
    }
  }
}

TEST(ScenarioParse, CaptionStringsEchoed) {
  const json doc = cli::load_scenario("fig2");
  const auto v = resolve_variants(doc).front();
  const json out = v.scenario.to_json();
  EXPECT_EQ(out["usc"]["omega_q"], "2pi*0.299 GHz");
  EXPECT_EQ(out["usc"]["g"], "2pi*4.920 GHz");
  EXPECT_EQ(out["usc"]["omega_r"], "2pi*6.336 GHz");
  EXPECT_EQ(out["resonator"]["delta"], "2pi*5.698 MHz");
  EXPECT_EQ(out["resonator"]["chi"], "2pi*80.735 kHz");
  EXPECT_EQ(out["resonator"]["f"], "2pi*22.792 MHz");
  EXPECT_EQ(out["resonator"]["kappa"], "2pi*2.375 MHz");
  EXPECT_EQ(out["resonator"]["J"], "2pi*949.8 kHz");
  EXPECT_EQ(out["caption"], doc["caption"]);
}

TEST(Presets, AllLoadAndValidate) {
  const auto names = cli::list_presets();
  ASSERT_EQ(names.size(), 13u);
  for (const auto& n : names) {
    const json doc = cli::load_scenario(n);
    EXPECT_FALSE(doc.value("caption", std::string()).empty()) << n;
    EXPECT_TRUE(doc.contains("desk")) << n;
    EXPECT_NO_THROW(resolve_variants(doc)) << n;
    ResolveOptions o;
    o.desk = true;
    EXPECT_NO_THROW(resolve_variants(doc, o)) << n;
  }
  EXPECT_THROW(cli::load_scenario("fig99"), ConfigError);
}

TEST(Variants, OrderAndDeduplication) {
  json doc = small_doc();
  doc["desk"] = {{"time.t_end", 40.0}};
  doc["variants"] = json::array({{{"label", "a"}, {"set", {{"measurement.sigma", 0.5}}}},
                                 {{"label", "b"}, {"set", {{"measurement.sigma", 50.0}}}}});
  auto vs = resolve_variants(doc);
  ASSERT_EQ(vs.size(), 2u);
  EXPECT_EQ(vs[1].label, "b");
  EXPECT_EQ(vs[0].scenario.t_end, 60.0);
  // Desk block, then variant set, then overrides: an override of sigma collapses both variants.
  ResolveOptions o;
  o.desk = true;
  o.overrides = {{"measurement.sigma", "infinity"}};
  vs = resolve_variants(doc, o);
  ASSERT_EQ(vs.size(), 1u);
  EXPECT_EQ(vs[0].scenario.t_end, 40.0);
  EXPECT_EQ(vs[0].scenario.measurement, CoarseGrain::infinity());
  doc["variants"].push_back({{"label", "a"}});
  EXPECT_THROW(resolve_variants(doc), ConfigError);
  EXPECT_EQ(resolve_variants(small_doc()).front().label, "main");
}

TEST(Run, DeterministicAndComplete) {
  json doc = small_doc();
  doc["metrics"] = {"negativity", "high_low"};
  const auto a = run_scenario(doc), b = run_scenario(doc);
  const auto& va = a.variants.front();
  EXPECT_EQ(va.series.rows, b.variants.front().series.rows);
  EXPECT_EQ(va.series.rows.size(), 4u);
  for (const char* c : {"t_ns", "p_ge", "p_lt", "n_res", "b_re", "b_im", "sigma_x_prime", "sigma_x_prime_ge",
                        "sigma_x_prime_lt", "p_high", "n_high", "n_low", "negativity"})
    EXPECT_TRUE(va.series.has(c)) << c;
  EXPECT_FALSE(va.series.has("discord"));
  EXPECT_LT(va.stats.max_trace_drift, 1e-7);
  const auto p = va.series.column("p_ge"), q = va.series.column("p_lt");
  for (std::size_t k = 0; k < p.size(); ++k) EXPECT_NEAR(p[k] + q[k], 1.0, 1e-10);
}

TEST(Run, FullAndTwoLevelAgreeAtStart) {
  json doc = small_doc();
  doc["model"] = "full";
  doc["usc"]["cavity_cut"] = 16;
  doc["time"] = {{"t_end", 20.0}, {"dt_out", 10.0}};
  const auto full = run_scenario(doc).variants.front();
  EXPECT_NEAR(full.series.column("sigma_z")[0], 0.0, 1e-12);
  EXPECT_NEAR(full.series.column("sigma_x_prime")[0], 0.0, 1e-12);
  EXPECT_NEAR(full.summary["initial_lost_norm"].get<double>(), 0.0, 1e-12);
}

TEST(Sweep, RecordsFailuresAndContinues) {
  SweepSpec sw{"resonator.cut", {json(40), json(6)}, 1};
  const auto pts = run_sweep(small_doc(), sw);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_TRUE(pts[0].error.empty());
  EXPECT_TRUE(pts[0].bundle.has_value());
  EXPECT_FALSE(pts[1].error.empty());
  EXPECT_EQ(pts[1].error_class, 3);
  EXPECT_THROW(run_sweep(small_doc(), SweepSpec{"measurement.sigma", {}, 1}), ConfigError);
}

TEST(Sweep, OverrideKeepsSiblingFields) {
  SweepSpec sw{"resonator.f", {json("2pi*20 MHz")}, 1};
  const auto pts = run_sweep(small_doc(), sw);
  ASSERT_TRUE(pts[0].error.empty()) << pts[0].error;
  const auto& s = pts[0].bundle->variants.front().scenario;
  EXPECT_DOUBLE_EQ(s.resonator.f, kTwoPi * 20e-3);
  EXPECT_DOUBLE_EQ(s.resonator.chi, kTwoPi * 80.735e-6);
  EXPECT_EQ(s.resonator_cut, 40);
}

TEST(Sweep, SigmaMonotoneInformationLoss) {
  SweepSpec sw{"measurement.sigma", {json(0.1), json(0.5), json(1.0), json(5.0), json(50.0)}, 1};
  const auto pts = run_sweep(small_doc(), sw);
  double last = 2.0;
  for (const auto& p : pts) {
    ASSERT_TRUE(p.error.empty()) << p.error;
    const double d = p.bundle->variants.front().summary["final_branch_trace_distance"].get<double>();
    EXPECT_LE(d, last + 1e-12);
    last = d;
  }
}

TEST(Validation, AdiabaticTable) {
  json doc = cli::load_scenario("fig11");
  doc["validation"]["points"] = 3;
  doc["usc"]["cavity_cut"] = 30;
  const auto r = run_scenario(doc).variants.front();
  EXPECT_EQ(r.series.rows.size(), 9u);
  const auto f = r.series.column("f"), one_minus = r.series.column("one_minus_F_G");
  for (std::size_t k = 0; k < f.size(); ++k) {
    EXPECT_LT(f[k], 0.05);
    EXPECT_LT(std::abs(one_minus[k] - f[k]), 0.3 * f[k]);
    EXPECT_NEAR(r.series.column("f_full_prefactor")[k], 4.0 * f[k], 1e-15);
  }
}

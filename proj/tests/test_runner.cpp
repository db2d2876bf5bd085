#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dyntun/errors.hpp"
#include "dyntun/runner.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <sys/wait.h>

using namespace dyntun;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("dyntun_test_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Json reference_evolve(const fs::path& out) {
    return Json{{"mode", "evolve"},
                {"seed", 11},
                {"output", out.string()},
                {"kicks", 40},
                {"quantum", {{"k", 1.4}, {"tau", 5.97}, {"eta", 0.0257}}},
                {"ensemble", {{"count", 24}}},
                {"se", {{"mode", "fixed"}, {"p_per_kick", 0.02}}},
                {"window", {{"t0", 15}}}};
}

Json small_sweep(const fs::path& out) {
    return Json{{"mode", "sweep"},
                {"seed", 3},
                {"output", out.string()},
                {"kicks", 300},
                {"stride", 3},
                {"ensemble", {{"count", 8}}},
                {"area", {{"grid", 128}, {"kicks", 100000}}},
                {"basis", {{"kind", "comoving"}, {"size", 256}}},
                {"sweep", {{"family", "fixed-tau"}, {"tau", 5.97}, {"eta", 0.0257}, {"k", {0.9, 1.0, 1.2}}}}};
}

int cli(const std::string& args) {
    const int rc = std::system((std::string(DYNTUN_CLI) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("numbers round-trip through text") {
    for (double v : {0.0, -0.0, 1.0, 0.1, 1.0 / 3.0, 6.02214076e23, -1e-300, 5e-324}) {
        const auto s = format_number(v);
        double back = 1.0;
        std::from_chars(s.data(), s.data() + s.size(), back);
        CHECK(back == v);
    }
    CHECK(format_number(-0.0) == "0");
    CHECK(format_number(0.5) == "0.5");
}

TEST_CASE("half-Talbot time against the recoil frequency") {
    UnitContext u;
    u.period = 30e-6;
    const auto r = convert_units(u);
    // T_half = pi / (4 omega_r), omega_r = hbar k_L^2 / (2 M).
    const double kl = 2.0 * std::numbers::pi / 780e-9;
    const double omega_r = constants::hbar * kl * kl / (2.0 * constants::rb87_mass);
    CHECK(r.half_talbot == doctest::Approx(std::numbers::pi / (4.0 * omega_r)).epsilon(1e-12));
    CHECK(r.half_talbot == doctest::Approx(33.13e-6).epsilon(1e-3));
}

TEST_CASE("tau and eta from laboratory units") {
    UnitContext u;
    u.period = period_for_tau(kTwoPi, u);
    CHECK(std::abs(convert_units(u).tau - kTwoPi) < 1e-12);

    u.period = period_for_tau(5.97, u);
    const auto r = convert_units(u);
    CHECK(r.tau == doctest::Approx(5.97).epsilon(1e-12));
    CHECK(u.period == doctest::Approx(31.5e-6).epsilon(3e-3));
    CHECK(std::abs(r.eta - 0.0257) / 0.0257 < 0.02);

    u.rabi = 2.0 * std::numbers::pi * 100e3;
    u.detuning = 2.0 * std::numbers::pi * 1e9;
    u.pulse_length = 500e-9;
    CHECK(convert_units(u).kick_strength == doctest::Approx(u.rabi * u.rabi * u.pulse_length / u.detuning));

    u.wavelength = -1.0;
    CHECK_THROWS_AS(convert_units(u), std::domain_error);
}

TEST_CASE("config: strict schema") {
    const auto out = scratch("cfg");
    Json j = reference_evolve(out);
    const auto c = parse_config(j);
    CHECK(c.mode == Mode::evolve);
    CHECK(c.quantum.k == 1.4);
    CHECK(c.ensemble.seed == 11);
    CHECK(c.se.mode == SEMode::fixed);

    Json unknown = j;
    unknown["quantum"]["kk"] = 1.0;
    CHECK_THROWS_WITH_AS(parse_config(unknown), "unknown key 'quantum.kk'", ConfigError);
    Json top = j;
    top["colour"] = "red";
    CHECK_THROWS_AS(parse_config(top), ConfigError);
    Json negative = j;
    negative["quantum"]["k"] = -1.4;
    CHECK_THROWS_AS(parse_config(negative), ConfigError);
    Json wrong = j;
    wrong["kicks"] = "many";
    CHECK_THROWS_AS(parse_config(wrong), ConfigError);
    Json fractional = j;
    fractional["kicks"] = 2.5;
    CHECK_THROWS_AS(parse_config(fractional), ConfigError);
    CHECK_THROWS_AS(parse_config(j, Mode::sweep), ConfigError);
    Json nomode = j;
    nomode.erase("mode");
    CHECK(parse_config(nomode, Mode::evolve).mode == Mode::evolve);
    CHECK_THROWS_AS(parse_config(nomode), ConfigError);
    Json bad_se = j;
    bad_se["se"]["mode"] = "sometimes";
    CHECK_THROWS_AS(parse_config(bad_se), ConfigError);
}

TEST_CASE("config echo parses back to itself") {
    const auto out = scratch("echo");
    for (const Json& j : {reference_evolve(out), small_sweep(out)}) {
        const auto c = parse_config(j);
        const Json echo = to_json(c);
        CHECK(to_json(parse_config(echo)) == echo);
    }
}

TEST_CASE("invalid config is rejected before any output") {
    const auto out = scratch("reject");
    Json j = reference_evolve(out / "never");
    j["quantum"]["k"] = -1.0;
    CHECK_THROWS_AS(run(parse_config(j, std::nullopt)), ConfigError);
    CHECK_FALSE(fs::exists(out / "never"));
}

TEST_CASE("fixed-classical plans share one map") {
    const auto plan = fixed_classical_plan(0.5, 0.06, {0.2, 0.3, 0.45}, -1, 100, 8);
    CHECK_NOTHROW(plan.validate());
    REQUIRE(plan.shared_map.has_value());
    CHECK(plan.shared_map->tau_eta == doctest::Approx(2.0 * std::numbers::pi * 0.06));
    for (const auto& p : plan.points) {
        CHECK(p.k * std::abs(p.tau - kTwoPi) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(p.tau * p.eta == doctest::Approx(plan.shared_map->tau_eta).epsilon(1e-12));
        CHECK(p.tau < kTwoPi);
    }
    SweepPlan broken = plan;
    broken.points[1].k *= 1.01;
    CHECK_THROWS_AS(broken.validate(), ConfigError);
}

TEST_CASE("tuple ramp spans the ranges evenly") {
    const auto plan = tuple_ramp_plan(5.8, 0.68, 1.5, 0.0422, 0.0211, 6, 100, 8);
    REQUIRE(plan.points.size() == 6);
    CHECK(plan.points.front().k == 0.68);
    CHECK(plan.points.back().k == doctest::Approx(1.5));
    CHECK(plan.points.back().eta == doctest::Approx(0.0211));
    CHECK(plan.points[1].k - plan.points[0].k == doctest::Approx(plan.points[5].k - plan.points[4].k));
    for (const auto& p : plan.points) CHECK(p.tau == 5.8);
}

TEST_CASE("sweep plan from config applies the spontaneous-emission rule") {
    const auto out = scratch("plan");
    Json j = small_sweep(out);
    j["sweep"]["p_se_per_k"] = 5e-3;
    const auto plan = make_sweep_plan(parse_config(j));
    REQUIRE(plan.points.size() == 3);
    CHECK(plan.points[1].p_se == doctest::Approx(5e-3));
    CHECK(plan.points[2].p_se == doctest::Approx(6e-3));
    Json both = j;
    both["sweep"]["p_se"] = 0.01;
    CHECK_THROWS_AS(parse_config(both), ConfigError);
    Json ambiguous = small_sweep(out);
    ambiguous["sweep"]["k_range"] = {0.5, 1.0};
    CHECK_THROWS_AS(make_sweep_plan(parse_config(ambiguous)), ConfigError);
}

TEST_CASE("evolve artifacts are byte-identical across worker counts") {
    const auto a = scratch("det_a"), b = scratch("det_b");
    auto ca = parse_config(reference_evolve(a));
    auto cb = parse_config(reference_evolve(b));
    ca.workers = 1;
    cb.workers = 3;
    run(ca);
    run(cb);
    for (const char* f : {"histogram.csv", "survival.csv", "decay.json", "metadata.json"}) {
        CHECK(read_text(a / f) == read_text(b / f));
    }
    // Emission is on: the fit stops before the survival drops below 1/count.
    const auto surv = parse_survival_csv(read_csv(a / "survival.csv"));
    const auto end = read_json(a / "decay.json")["fit_window"][1].get<std::int64_t>();
    for (std::size_t i = 0; i < surv.t.size(); ++i) {
        if (surv.t[i] == end) CHECK(surv.p[i] >= 1.0 / 24.0);
    }
    CHECK(read_json(a / "metadata.json")["se"]["mode"] == "fixed");
    const Json m = read_json(a / "manifest.json");
    CHECK(m["status"] == "complete");
    CHECK(m["seed"] == 11);
    CHECK(m["version"] == kVersion);
    CHECK(read_text(a / "histogram.csv").rfind("t,n,prob\n", 0) == 0);
    CHECK(read_text(a / "survival.csv").rfind("t,p\n1", 0) != std::string::npos);
}

TEST_CASE("sweep resumes to the same table") {
    const auto full = scratch("sweep_full"), part = scratch("sweep_part");
    run(parse_config(small_sweep(full)));
    const auto rates = read_text(full / "rates.csv");
    CHECK(rates.rfind("run_id,k,tau,eta,p_se,A,eps_abs,A_over_hbar,gamma,gamma_err\n", 0) == 0);
    CHECK(fs::exists(full / "scaling.json"));

    auto c = parse_config(small_sweep(part));
    c.workers = 2;
    run(c);
    // Simulate a sweep killed while point p01 was running.
    fs::remove(part / "points" / "p01" / "result.json");
    fs::remove(part / "rates.csv");
    const auto stamp = fs::last_write_time(part / "points" / "p00" / "result.json");
    run(c);
    CHECK(read_text(part / "rates.csv") == rates);
    CHECK(fs::last_write_time(part / "points" / "p00" / "result.json") == stamp);
    CHECK(read_text(part / "scaling.json") == read_text(full / "scaling.json"));
}

TEST_CASE("single-point sweep warns and skips the scaling fit") {
    const auto out = scratch("single");
    Json j = small_sweep(out);
    j["sweep"]["k"] = {1.0};
    const auto art = run(parse_config(j));
    CHECK(art.complete);
    CHECK_FALSE(fs::exists(out / "scaling.json"));
    const auto table = read_csv(out / "rates.csv");
    CHECK(table.rows.size() == 1);
    bool warned = false;
    for (const auto& w : art.warnings) warned |= w.find("single-point") != std::string::npos;
    CHECK(warned);
}

TEST_CASE("fit mode refits stored artifacts") {
    const auto src = scratch("fit_src"), out = scratch("fit_out");
    run(parse_config(reference_evolve(src)));
    Json j{{"mode", "fit"}, {"output", out.string()}, {"fit", {{"survival", (src / "survival.csv").string()}}}};
    run(parse_config(j));
    const Json d = read_json(out / "decay.json");
    CHECK(d["gamma_err"].get<double>() >= 0.0);
    j["fit"] = {{"survival", (src / "survival.csv").string()}, {"t_start", 1000}};
    CHECK_THROWS_AS(run(parse_config(j)), InsufficientData);
}

TEST_CASE("portrait and area artifacts") {
    const auto out = scratch("portrait");
    Json j{{"mode", "portrait"},
           {"output", out.string()},
           {"quantum", {{"k", 1.4}, {"tau", 5.97}, {"eta", 0.0257}}},
           {"portrait", {{"lattice_seeds", 10}, {"kicks", 50}}},
           {"area", {{"grid", 128}, {"kicks", 100000}}}};
    run(parse_config(j));
    CHECK(read_csv(out / "portrait.csv").rows.size() == 500);
    CHECK(read_csv(out / "portrait.csv").header == std::vector<std::string>{"theta", "J", "seed_id"});
    CHECK(read_json(out / "area.json")["area"].get<double>() > 0.0);
    CHECK(read_json(out / "fixed_point.json")["stable"] == true);

    const auto area_out = scratch("area");
    j["mode"] = "area";
    j["output"] = area_out.string();
    j.erase("portrait");
    run(parse_config(j));
    const auto occ = read_csv(area_out / "occupancy.csv");
    CHECK(occ.rows.size() == 128u * 128u);
    CHECK(occ.header == std::vector<std::string>{"cell_i", "cell_j", "visited"});
}

TEST_CASE("CLI exit codes") {
    const auto dir = scratch("cli");
    write_text_atomic(dir / "units.json",
                      R"({"mode": "convert-units", "units": {"tau": 5.97}, "output": ")" + (dir / "u").string() + "\"}");
    CHECK(cli("convert-units --config " + (dir / "units.json").string()) == 0);
    CHECK(read_json(dir / "u" / "units.json")["tau"].get<double>() == doctest::Approx(5.97));

    write_text_atomic(dir / "bad.json", R"({"mode": "evolve", "quantum": {"k": -1, "tau": 5.97, "eta": 0.0257}})");
    CHECK(cli("evolve --config " + (dir / "bad.json").string()) == 2);
    CHECK(cli("sweep --config " + (dir / "units.json").string()) == 2);  // mode mismatch
    CHECK(cli("evolve --config " + (dir / "missing.json").string()) == 2);

    write_text_atomic(dir / "tiny.json",
                      R"({"mode": "evolve", "kicks": 5, "quantum": {"k": 6, "tau": 5.97, "eta": 0.0257},
                          "basis": {"kind": "fixed", "n_min": -8, "n_max": 7}, "ensemble": {"count": 2}})");
    CHECK(cli("evolve --config " + (dir / "tiny.json").string() + " --out " + (dir / "t").string()) == 3);
    CHECK(read_json(dir / "t" / "manifest.json")["status"] == "incomplete");

    write_text_atomic(dir / "nofit.json",
                      R"({"mode": "fit", "fit": {"survival": ")" + (dir / "short.csv").string() + "\"}}");
    write_text_atomic(dir / "short.csv", "t,p\n0,1\n1,0.9\n");
    CHECK(cli("fit --config " + (dir / "nofit.json").string() + " --out " + (dir / "f").string()) == 4);
}

#include "dyntun/runner.hpp"

#include "dyntun/errors.hpp"
#include "dyntun/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <mutex>
#include <numbers>

namespace dyntun {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- sweep plans

QuantumParams SweepPoint::quantum() const {
    QuantumParams q;
    q.k = k;
    q.tau = tau;
    q.eta = eta;
    return q;
}

namespace {

std::string point_id(std::size_t i) {
    std::string s = std::to_string(i);
    return "p" + std::string(s.size() < 2 ? 2 - s.size() : 0, '0') + s;
}

bool valid_run_id(const std::string& id) {
    if (id.empty() || id == "." || id == "..") return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' || c == '_' ||
               c == '-';
    });
}

}  // namespace

void SweepPlan::validate() const {
    if (points.empty()) throw ConfigError("sweep plan has no points");
    std::vector<std::string> ids;
    for (const auto& p : points) {
        if (!valid_run_id(p.run_id)) throw ConfigError("invalid run_id '" + p.run_id + "'");
        ids.push_back(p.run_id);
        QuantumParams q = p.quantum();
        q.validate();
        if (!(p.k > 0.0)) throw ConfigError("sweep point " + p.run_id + ": k must be positive");
        if (p.tau == kTwoPi) throw ConfigError("sweep point " + p.run_id + ": tau = 2 pi has no pseudo-classical limit");
        if (!(p.p_se >= 0.0 && p.p_se < 1.0)) throw ConfigError("sweep point " + p.run_id + ": p_se must lie in [0, 1)");
        if (p.kicks < 1) throw ConfigError("sweep point " + p.run_id + ": kicks must be >= 1");
        if (p.count < 1) throw ConfigError("sweep point " + p.run_id + ": count must be >= 1");
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw ConfigError("duplicate sweep run_id");

    if (family == Family::fixed_classical) {
        if (!shared_map) throw ConfigError("fixed-classical plan without a shared map");
        const MapParams& m = *shared_map;
        for (const auto& p : points) {
            const MapParams pm = p.quantum().map_params();
            const bool same = std::abs(pm.k_tilde - m.k_tilde) <= 1e-12 * std::max(1.0, m.k_tilde) &&
                              pm.eps_sign == m.eps_sign &&
                              std::abs(pm.tau_eta - m.tau_eta) <= 1e-12 * std::max(1.0, std::abs(m.tau_eta));
            if (!same) throw ConfigError("sweep point " + p.run_id + " does not reproduce the shared classical map");
        }
    }
}

SweepPlan fixed_tau_plan(double tau, double eta, const std::vector<double>& k, std::int64_t kicks,
                         std::size_t count) {
    SweepPlan plan;
    plan.family = Family::fixed_tau;
    for (std::size_t i = 0; i < k.size(); ++i) plan.points.push_back({point_id(i), k[i], tau, eta, 0.0, kicks, count});
    return plan;
}

SweepPlan fixed_classical_plan(double k_tilde, double eta, const std::vector<double>& eps_abs, int eps_sign,
                               std::int64_t kicks, std::size_t count) {
    if (eps_sign != 1 && eps_sign != -1) throw ConfigError("eps_sign must be +1 or -1");
    if (!(k_tilde > 0.0)) throw ConfigError("k_tilde must be positive");
    SweepPlan plan;
    plan.family = Family::fixed_classical;
    MapParams m;
    m.k_tilde = k_tilde;
    m.eps_sign = eps_sign;
    m.tau_eta = kTwoPi * eta;
    m.tau = kTwoPi;
    m.eta = eta;
    plan.shared_map = m;
    for (std::size_t i = 0; i < eps_abs.size(); ++i) {
        const double e = eps_abs[i];
        if (!(e > 0.0 && e < kTwoPi)) throw ConfigError("eps_abs values must lie in (0, 2 pi)");
        const double tau = kTwoPi + eps_sign * e;
        plan.points.push_back({point_id(i), k_tilde / e, tau, m.tau_eta / tau, 0.0, kicks, count});
    }
    return plan;
}

SweepPlan tuple_ramp_plan(double tau, double k_first, double k_last, double eta_first, double eta_last, int points,
                          std::int64_t kicks, std::size_t count) {
    if (points < 1) throw ConfigError("tuple ramp needs at least one point");
    SweepPlan plan;
    plan.family = Family::fixed_tau;
    for (int i = 0; i < points; ++i) {
        const double f = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1);
        plan.points.push_back({point_id(static_cast<std::size_t>(i)), k_first + f * (k_last - k_first), tau,
                               eta_first + f * (eta_last - eta_first), 0.0, kicks, count});
    }
    return plan;
}

SweepPlan make_sweep_plan(const RunConfig& c) {
    const auto& s = c.sweep;
    SweepPlan plan;
    if (s.family == "fixed-classical") {
        if (!s.k_tilde || !s.eta || s.eps_abs.empty())
            throw ConfigError("fixed-classical sweep needs sweep.k_tilde, sweep.eta and sweep.eps_abs");
        if (!s.points.empty() || !s.k.empty() || !s.k_range.empty() || s.tau)
            throw ConfigError("fixed-classical sweep takes no explicit points, k or tau");
        plan = fixed_classical_plan(*s.k_tilde, *s.eta, s.eps_abs, s.eps_sign, c.kicks, c.ensemble.count);
    } else {
        const int forms = (!s.points.empty()) + (!s.k.empty()) + (!s.k_range.empty());
        if (forms != 1) throw ConfigError("fixed-tau sweep needs exactly one of sweep.points, sweep.k, sweep.k_range");
        if (!s.points.empty()) {
            plan.family = Family::fixed_tau;
            for (std::size_t i = 0; i < s.points.size(); ++i) {
                const auto& p = s.points[i];
                plan.points.push_back({p.run_id.value_or(point_id(i)), p.k, p.tau, p.eta, 0.0,
                                       p.kicks.value_or(c.kicks), p.count.value_or(c.ensemble.count)});
            }
        } else if (!s.k.empty()) {
            if (!s.tau || !s.eta) throw ConfigError("sweep.k needs sweep.tau and sweep.eta");
            plan = fixed_tau_plan(*s.tau, *s.eta, s.k, c.kicks, c.ensemble.count);
        } else {
            if (!s.tau || s.k_range.size() != 2 || s.eta_range.size() != 2)
                throw ConfigError("sweep.k_range needs sweep.tau, and two-element k_range and eta_range");
            plan = tuple_ramp_plan(*s.tau, s.k_range[0], s.k_range[1], s.eta_range[0], s.eta_range[1], s.n_points,
                                   c.kicks, c.ensemble.count);
        }
    }
    for (std::size_t i = 0; i < plan.points.size(); ++i) {
        auto& p = plan.points[i];
        if (!s.points.empty() && s.points[i].p_se) p.p_se = *s.points[i].p_se;
        else if (s.p_se) p.p_se = *s.p_se;
        else if (s.p_se_per_k) p.p_se = *s.p_se_per_k * p.k;
        else p.p_se = c.se.enabled() ? c.se.probability(p.k) : 0.0;
    }
    plan.validate();
    return plan;
}

// ------------------------------------------------------------------ evolution

Basis choose_basis(const QuantumParams& q, const BasisSettings& b, std::int64_t initial_n, std::int64_t kicks) {
    const auto fp = find_period1_fixed_point(q.map_params());
    const bool has_mode = q.tau != kTwoPi && fp.exists && fp.stable;
    const double v = has_mode ? mode_velocity(q) : 0.0;
    if (b.kind == "fixed" || (b.kind == "auto" && b.n_min)) {
        if (b.n_min) return Basis::fixed(*b.n_min, *b.n_max);
        const auto [lo, hi] = suggest_fixed_basis(q, initial_n, kicks, v);
        return Basis::fixed(lo, hi);
    }
    const auto [lo, hi] = suggest_fixed_basis(q, initial_n, kicks, v);
    if (b.kind == "auto" && (hi - lo + 1 <= 1024 || !has_mode)) return Basis::fixed(lo, hi);
    if (!has_mode) throw ConfigError("co-moving basis needs a stable accelerator mode to follow");
    const auto absorber = static_cast<std::size_t>(2 * kick_spread(q.k) + 8);
    return Basis::comoving(b.size, b.lead, absorber, mode_initial_center(q, 0.5, initial_n), v);
}

std::pair<std::int64_t, std::int64_t> fit_window(const WindowSettings& w, const SurvivalSeries& s, std::int64_t kicks,
                                                 double default_fraction) {
    std::int64_t end = std::min(w.t_max.value_or(kicks), kicks);
    std::int64_t last_above = s.t0;
    for (std::size_t i = 0; i < s.t.size() && s.t[i] <= end; ++i) {
        if (s.p[i] >= w.p_floor) last_above = s.t[i];
    }
    end = last_above;
    if (w.fit_start) return {std::max(*w.fit_start, s.t0), end};
    const double f = w.fit_start_fraction.value_or(default_fraction);
    const auto from_fraction = static_cast<std::int64_t>(std::ceil(f * static_cast<double>(end)));
    return {std::max(s.t0, from_fraction), end};
}

void simulate_point(const QuantumParams& q, const SEModel& se, const EnsembleSpec& ensemble, const RunConfig& c,
                    std::int64_t kicks, int workers, double default_fit_fraction, EvolveOutcome& out) {
    out.basis = choose_basis(q, c.basis, ensemble.initial_n, kicks);
    out.p_se = se.enabled() ? se.probability(q.k) : 0.0;
    auto states = sample_beta_ensemble(ensemble, out.basis);
    EvolveOptions opts;
    opts.kicks = kicks;
    opts.stride = c.stride;
    opts.workers = workers;
    opts.seed = c.seed;
    out.histograms = evolve_ensemble(states, q, out.basis, se, opts);

    out.mode_center0 = mode_initial_center(q, ensemble.beta_center, ensemble.initial_n);
    out.mode_velocity = mode_velocity(q);
    const auto windows = mode_windows(out.histograms, q, out.mode_center0, c.window.width);
    out.t0 = c.window.t0 ? c.window.t0 : select_t0(out.histograms, windows, c.window.separation_sigmas,
                                                   c.window.persistence);
    if (!out.t0) throw InsufficientData("accelerator mode never separated from the bulk");
    out.survival = survival_probability(out.histograms, windows, *out.t0);
    // With emission each rotor is a jump trajectory; below 1/count the
    // ensemble average rests on a handful of them.
    WindowSettings w = c.window;
    if (se.enabled()) w.p_floor = std::max(w.p_floor, 1.0 / static_cast<double>(ensemble.count));
    const auto [start, end] = fit_window(w, *out.survival, kicks, default_fit_fraction);
    out.fit = fit_decay_rate(*out.survival, start, end);
}

// -------------------------------------------------------------------- running

namespace {

void warn(RunArtifacts& a, const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
    a.warnings.push_back(msg);
}

struct Manifest {
    RunArtifacts& art;
    const RunConfig& cfg;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void write(const std::string& status, const std::string& error = {}) {
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        Json j{{"status", status},
               {"mode", to_string(cfg.mode)},
               {"seed", cfg.seed},
               {"version", kVersion},
               {"wall_time_s", wall},
               {"artifacts", art.files},
               {"warnings", art.warnings},
               {"config", to_json(cfg)}};
        if (!error.empty()) j["error"] = error;
        write_json(art.directory / "manifest.json", j);
    }
};

void emit_text(RunArtifacts& a, const std::string& name, const std::string& text) {
    write_text_atomic(a.directory / name, text);
    a.files.push_back(name);
}

void emit_json(RunArtifacts& a, const std::string& name, const Json& j) {
    write_json(a.directory / name, j);
    a.files.push_back(name);
}

Json quantum_json(const QuantumParams& q) {
    return Json{{"k", q.k}, {"tau", q.tau}, {"eta", q.eta}, {"eps", q.eps()}, {"hbar_eff", q.hbar_eff()}};
}

Json basis_json(const Basis& b) {
    return Json{{"kind", b.is_comoving() ? "comoving" : "fixed"}, {"size", b.size()}, {"absorber", b.absorber()}};
}

AreaOptions area_options(const RunConfig& c, double eps_abs, int workers) {
    AreaOptions o;
    o.grid_resolution = c.area.grid;
    o.kicks = c.area.kicks;
    o.seeds = c.area.seeds;
    o.eps_abs = eps_abs;
    o.workers = workers;
    return o;
}

void run_portrait(const RunConfig& c, RunArtifacts& a) {
    const MapParams m = c.quantum.map_params();
    const auto fp = find_period1_fixed_point(m);
    const auto seeds = c.portrait.seeds.empty() ? lattice_seeds(c.portrait.lattice_seeds) : c.portrait.seeds;
    emit_text(a, "portrait.csv", portrait_csv(phase_portrait(m, seeds, c.portrait.kicks)));
    emit_json(a, "fixed_point.json", to_json(fp));

    // Initial-state band in map coordinates, for overlays.
    const double eps_abs = c.quantum.hbar_eff();
    const double half = 0.5 * c.ensemble.beta_fwhm;
    const double j_lo = momentum_to_map_coordinate(c.ensemble.initial_n, c.ensemble.beta_center - half, 0, m);
    const double j_hi = momentum_to_map_coordinate(c.ensemble.initial_n, c.ensemble.beta_center + half, 0, m);
    emit_json(a, "metadata.json",
              Json{{"quantum", quantum_json(c.quantum)},
                   {"hbar_eff", eps_abs},
                   {"initial_state",
                    {{"n", c.ensemble.initial_n},
                     {"beta_center", c.ensemble.beta_center},
                     {"beta_fwhm", c.ensemble.beta_fwhm},
                     {"J_lo", wrap_angle(std::min(j_lo, j_hi))},
                     {"J_hi", wrap_angle(std::max(j_lo, j_hi))}}},
                   {"seeds", seeds.size()},
                   {"kicks", c.portrait.kicks}});
    if (!fp.exists || !fp.stable) {
        warn(a, "no stable period-1 island; area is zero");
        AreaEstimate none;
        none.converged = true;
        emit_json(a, "area.json", to_json(none, m));
        return;
    }
    emit_json(a, "area.json", to_json(estimate_island_area(m, area_options(c, eps_abs, c.workers)), m));
}

void run_area(const RunConfig& c, RunArtifacts& a) {
    const MapParams m = c.quantum.map_params();
    const auto fp = find_period1_fixed_point(m);
    emit_json(a, "fixed_point.json", to_json(fp));
    AreaEstimate est;
    est.converged = true;
    est.grid_resolution = c.area.grid;
    if (fp.exists && fp.stable) {
        est = estimate_island_area(m, area_options(c, c.quantum.hbar_eff(), c.workers));
        const auto coarse = island_area_at(m, c.area.grid, c.area.kicks, c.area.seeds, c.workers);
        emit_text(a, "occupancy.csv", occupancy_csv(coarse.grid));
        if (!est.converged) warn(a, "island area not converged: relative change " + format_number(est.relative_change));
    } else {
        warn(a, "no stable period-1 island; area is zero");
    }
    emit_json(a, "area.json", to_json(est, m));
}

Json evolve_metadata(const RunConfig& c, const QuantumParams& q, const EvolveOutcome& o, std::int64_t kicks,
                     std::size_t count) {
    return Json{{"quantum", quantum_json(q)},
                {"ensemble",
                 {{"count", count},
                  {"beta_center", c.ensemble.beta_center},
                  {"beta_fwhm", c.ensemble.beta_fwhm},
                  {"initial_n", c.ensemble.initial_n}}},
                {"se",
                 {{"mode", to_string(c.se.mode)}, {"p_per_kick", o.p_se}, {"recoil", to_string(c.se.recoil)}}},
                {"seed", c.seed},
                {"kicks", kicks},
                {"stride", c.stride},
                {"frame", "falling"},
                {"basis", basis_json(o.basis)},
                {"mode_window",
                 {{"width", c.window.width}, {"center0", o.mode_center0}, {"velocity", o.mode_velocity}}},
                {"t0", o.t0 ? Json(*o.t0) : Json(nullptr)},
                {"version", kVersion}};
}

void run_evolve(const RunConfig& c, RunArtifacts& a) {
    EvolveOutcome o;
    try {
        simulate_point(c.quantum, c.se, c.ensemble, c, c.kicks, c.workers, 0.0, o);
    } catch (const FitError&) {
        if (!o.histograms.empty()) {
            emit_text(a, "histogram.csv", histogram_csv(o.histograms, c.histogram_floor));
            emit_json(a, "metadata.json", evolve_metadata(c, c.quantum, o, c.kicks, c.ensemble.count));
        }
        if (o.survival) emit_text(a, "survival.csv", survival_csv(*o.survival));
        throw;
    }
    emit_text(a, "histogram.csv", histogram_csv(o.histograms, c.histogram_floor));
    emit_text(a, "survival.csv", survival_csv(*o.survival));
    emit_json(a, "decay.json", to_json(*o.fit));
    emit_json(a, "metadata.json", evolve_metadata(c, c.quantum, o, c.kicks, c.ensemble.count));
}

// ---- sweeps

Json point_json(const SweepPoint& p) {
    return Json{{"run_id", p.run_id}, {"k", p.k},         {"tau", p.tau},
                {"eta", p.eta},       {"p_se", p.p_se},   {"kicks", p.kicks},
                {"count", p.count}};
}

// Everything that influences a point's result; a stored result is reused
// only when this matches exactly.
Json point_fingerprint(const SweepPoint& p, const RunConfig& c, const std::optional<MapParams>& shared) {
    Json j = point_json(p);
    Json cfg = to_json(c);
    for (const char* volatile_key : {"workers", "output", "sweep", "mode"}) cfg.erase(volatile_key);
    j["config"] = cfg;
    if (shared) j["shared_map"] = {{"k_tilde", shared->k_tilde}, {"tau_eta", shared->tau_eta}};
    return j;
}

struct PointOutcome {
    bool ok = false;
    RateRow row;
    std::string error;
    int error_kind = 0;  // 3 numerical, 4 fit
};

PointOutcome read_point(const fs::path& file) {
    const Json j = read_json(file);
    PointOutcome o;
    o.ok = j.at("status") == "complete";
    if (o.ok) {
        const Json& r = j.at("row");
        o.row.run_id = r.at("run_id");
        o.row.k = r.at("k");
        o.row.tau = r.at("tau");
        o.row.eta = r.at("eta");
        o.row.p_se = r.at("p_se");
        o.row.area = r.at("A");
        o.row.eps_abs = r.at("eps_abs");
        o.row.a_over_hbar = r.at("A_over_hbar");
        o.row.gamma = r.at("gamma");
        o.row.gamma_err = r.at("gamma_err");
    } else {
        o.error = j.value("error", "");
        o.error_kind = j.value("error_kind", 3);
    }
    return o;
}

void run_point(const SweepPoint& p, const RunConfig& c, const std::optional<AreaEstimate>& shared_area,
               int workers, const fs::path& dir, const Json& fingerprint) {
    const QuantumParams q = p.quantum();
    Json result{{"fingerprint", fingerprint}};
    auto fail = [&](const std::string& msg, int kind) {
        result["status"] = "failed";
        result["error"] = msg;
        result["error_kind"] = kind;
        write_json(dir / "result.json", result);
    };
    try {
        AreaEstimate area = shared_area
                                ? *shared_area
                                : estimate_island_area(q.map_params(), area_options(c, q.hbar_eff(), workers));
        area.area_over_hbar = area.area / q.hbar_eff();
        write_json(dir / "area.json", to_json(area, q.map_params()));

        SEModel se = c.se;
        se.mode = p.p_se > 0.0 ? SEMode::fixed : SEMode::off;
        se.p_per_kick = p.p_se;
        EnsembleSpec ens = c.ensemble;
        ens.count = p.count;
        EvolveOutcome o;
        RunConfig local = c;
        local.ensemble = ens;
        local.se = se;
        try {
            simulate_point(q, se, ens, local, p.kicks, workers, 0.5, o);
        } catch (const FitError&) {
            if (o.survival) write_text_atomic(dir / "survival.csv", survival_csv(*o.survival));
            throw;
        }
        write_text_atomic(dir / "survival.csv", survival_csv(*o.survival));
        write_json(dir / "decay.json", to_json(*o.fit));
        write_json(dir / "metadata.json", evolve_metadata(local, q, o, p.kicks, p.count));
        result["status"] = "complete";
        result["row"] = {{"run_id", p.run_id},
                         {"k", p.k},
                         {"tau", p.tau},
                         {"eta", p.eta},
                         {"p_se", p.p_se},
                         {"A", area.area},
                         {"eps_abs", q.hbar_eff()},
                         {"A_over_hbar", area.area_over_hbar},
                         {"gamma", o.fit->gamma},
                         {"gamma_err", o.fit->gamma_err}};
        // Written last: its presence marks the point as done.
        write_json(dir / "result.json", result);
    } catch (const FitError& e) {
        fail(e.what(), 4);
    } catch (const NumericalError& e) {
        fail(e.what(), 3);
    } catch (const ConfigError& e) {
        fail(e.what(), 2);
    }
}

int run_sweep(const RunConfig& c, RunArtifacts& a) {
    const SweepPlan plan = make_sweep_plan(c);
    if (plan.points.size() == 1) warn(a, "single-point sweep: no scaling fit");

    std::optional<AreaEstimate> shared_area;
    if (plan.shared_map) {
        shared_area = estimate_island_area(*plan.shared_map, area_options(c, 1.0, c.workers));
        emit_json(a, "area.json", to_json(*shared_area, *plan.shared_map));
    }

    // Points needing work, in plan order; completed ones are reused.
    std::vector<std::size_t> todo;
    std::vector<Json> fingerprints;
    for (std::size_t i = 0; i < plan.points.size(); ++i) {
        const auto& p = plan.points[i];
        fingerprints.push_back(point_fingerprint(p, c, plan.shared_map));
        const fs::path file = a.directory / "points" / p.run_id / "result.json";
        bool reuse = false;
        if (fs::exists(file)) {
            try {
                const Json j = read_json(file);
                reuse = j.at("status") == "complete" && j.at("fingerprint") == fingerprints.back();
            } catch (const std::exception&) {
                reuse = false;
            }
        }
        if (reuse) std::cerr << "sweep: reusing completed point " << p.run_id << '\n';
        else todo.push_back(i);
    }

    const int outer = std::max(1, std::min<int>(c.workers, static_cast<int>(todo.size())));
    const int inner = std::max(1, c.workers / outer);
    std::mutex log_mutex;
    parallel_for(todo.size(), outer, [&](std::size_t t) {
        const auto& p = plan.points[todo[t]];
        const fs::path dir = a.directory / "points" / p.run_id;
        fs::create_directories(dir);
        fs::remove(dir / "result.json");
        {
            std::lock_guard lock(log_mutex);
            std::cerr << "sweep: point " << p.run_id << " k=" << format_number(p.k) << " tau=" << format_number(p.tau)
                      << " eta=" << format_number(p.eta) << " p_se=" << format_number(p.p_se) << '\n';
        }
        run_point(p, c, shared_area, inner, dir, fingerprints[todo[t]]);
    });

    // Single writer, plan order.
    std::vector<RateRow> rows;
    int worst = 0;
    Json failures = Json::array();
    for (const auto& p : plan.points) {
        const auto o = read_point(a.directory / "points" / p.run_id / "result.json");
        if (o.ok) {
            rows.push_back(o.row);
        } else {
            failures.push_back({{"run_id", p.run_id}, {"error", o.error}});
            warn(a, "sweep point " + p.run_id + " failed: " + o.error);
            if (worst == 0) worst = o.error_kind;
        }
        a.files.push_back("points/" + p.run_id + "/result.json");
    }
    emit_text(a, "rates.csv", rates_csv(rows));
    Json plan_json = Json::array();
    for (const auto& p : plan.points) plan_json.push_back(point_json(p));
    emit_json(a, "plan.json",
              Json{{"family", plan.family == Family::fixed_classical ? "fixed-classical" : "fixed-tau"},
                   {"points", plan_json},
                   {"failures", failures}});

    if (rows.size() >= 3) {
        std::vector<ScalingPoint> pts;
        for (const auto& r : rows) pts.push_back({r.a_over_hbar, r.gamma});
        try {
            emit_json(a, "scaling.json", to_json(fit_scaling(pts), rows));
        } catch (const FitError& e) {
            warn(a, std::string("scaling fit failed: ") + e.what());
            if (worst == 0) worst = 4;
        }
    } else if (plan.points.size() > 1) {
        warn(a, "fewer than 3 successful points: no scaling fit");
        if (worst == 0) worst = 4;
    }
    return worst;
}

void run_fit(const RunConfig& c, RunArtifacts& a) {
    if (c.fit.survival) {
        const SurvivalSeries s = parse_survival_csv(read_csv(*c.fit.survival));
        if (s.t.empty()) throw InsufficientData("survival CSV has no rows");
        const std::int64_t start = c.fit.t_start.value_or(s.t.front());
        const std::int64_t end = c.fit.t_end.value_or(s.t.back());
        const auto fit = fit_decay_rate(s, start, end);
        if (fit.dropped > 0) warn(a, std::to_string(fit.dropped) + " non-positive survival samples dropped");
        emit_json(a, "decay.json", to_json(fit));
    } else {
        const auto rows = parse_rates_csv(read_csv(*c.fit.rates));
        std::vector<ScalingPoint> pts;
        for (const auto& r : rows) pts.push_back({r.a_over_hbar, r.gamma});
        emit_json(a, "scaling.json", to_json(fit_scaling(pts), rows));
    }
}

void run_convert_units(const RunConfig& c, RunArtifacts& a) {
    UnitContext u = c.units;
    try {
        if (c.units_tau) u.period = period_for_tau(*c.units_tau, u);
        const UnitResult r = convert_units(u);
        emit_json(a, "units.json",
                  Json{{"tau", r.tau},
                       {"eta", r.eta},
                       {"half_talbot_s", r.half_talbot},
                       {"period_s", u.period},
                       {"kick_strength", r.kick_strength},
                       {"grating_vector_per_m", u.grating_vector()},
                       {"inputs",
                        {{"wavelength_m", u.wavelength},
                         {"mass_kg", u.mass},
                         {"gravity_m_s2", u.gravity},
                         {"rabi_rad_s", u.rabi},
                         {"detuning_rad_s", u.detuning},
                         {"pulse_length_s", u.pulse_length}}}});
    } catch (const std::domain_error& e) {
        throw ConfigError(e.what());
    }
}

}  // namespace

std::vector<PhasePoint> lattice_seeds(int count) {
    const double g1 = 1.0 / std::numbers::phi;
    const double g2 = 1.0 / (std::numbers::phi * std::numbers::phi);
    std::vector<PhasePoint> out;
    for (int i = 0; i < count; ++i) {
        const double a = std::fmod(0.5 + g1 * (i + 1), 1.0);
        const double b = std::fmod(0.5 + g2 * (i + 1), 1.0);
        out.push_back({kTwoPi * a, kTwoPi * b});
    }
    return out;
}

void apply_paper_scale(RunConfig& c) {
    c.paper_scale = true;
    c.ensemble.count = 10'000;
    c.kicks = 50'000;
}

RunArtifacts run(const RunConfig& config) {
    config.validate();
    RunArtifacts a;
    a.directory = config.output;
    fs::create_directories(a.directory);
    Manifest manifest{a, config};
    if (config.paper_scale) warn(a, "--paper-scale: 1e4 rotors x 5e4 kicks per point; expect hours of CPU time");
    manifest.write("incomplete");
    try {
        int status = 0;
        switch (config.mode) {
        case Mode::portrait: run_portrait(config, a); break;
        case Mode::area: run_area(config, a); break;
        case Mode::evolve: run_evolve(config, a); break;
        case Mode::sweep: status = run_sweep(config, a); break;
        case Mode::fit: run_fit(config, a); break;
        case Mode::convert_units: run_convert_units(config, a); break;
        }
        if (status == 4) {
            manifest.write("incomplete", "one or more fits failed");
            throw FitError("sweep finished with failed fits; see manifest.json");
        }
        if (status != 0) {
            manifest.write("incomplete", "one or more sweep points failed");
            if (status == 2) throw ConfigError("sweep finished with invalid points; see manifest.json");
            throw NumericalError("sweep finished with failed points; see manifest.json");
        }
    } catch (const std::exception& e) {
        std::string what = e.what();
        try {
            manifest.write("incomplete", what);
        } catch (...) {
        }
        throw;
    }
    a.complete = true;
    manifest.write("complete");
    return a;
}

}  // namespace dyntun

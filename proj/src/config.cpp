#include "dyntun/config.hpp"

#include "dyntun/errors.hpp"

#include <cmath>
#include <set>

namespace dyntun {

std::string to_string(Mode m) {
    switch (m) {
    case Mode::portrait: return "portrait";
    case Mode::area: return "area";
    case Mode::evolve: return "evolve";
    case Mode::sweep: return "sweep";
    case Mode::fit: return "fit";
    case Mode::convert_units: return "convert-units";
    }
    return "?";
}

Mode parse_mode(const std::string& s) {
    for (Mode m : {Mode::portrait, Mode::area, Mode::evolve, Mode::sweep, Mode::fit, Mode::convert_units}) {
        if (to_string(m) == s) return m;
    }
    throw ConfigError("unknown mode '" + s + "'");
}

namespace {

// Reads the keys of one JSON object, remembering which were consumed so the
// rest can be reported as unknown.
class Reader {
public:
    Reader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(label() + " must be a JSON object");
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    template <class T>
    void get(const char* key, T& dst) {
        if (!has(key)) return;
        dst = as<T>(key);
    }

    template <class T>
    void get(const char* key, std::optional<T>& dst) {
        if (!has(key)) return;
        dst = as<T>(key);
    }

    const Json& at(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    std::string path(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

    void finish() const {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key())) throw ConfigError("unknown key '" + path(item.key().c_str()) + "'");
        }
    }

private:
    std::string label() const { return where_.empty() ? "config" : where_; }

    template <class T>
    T as(const char* key) {
        const Json& v = j_.at(key);
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!v.is_number()) throw ConfigError("");
            } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
                if (!v.is_number_integer()) throw ConfigError("");
                if constexpr (std::is_unsigned_v<T>) {
                    if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) throw ConfigError("");
                }
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError("");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError("");
            }
            return v.get<T>();
        } catch (const ConfigError&) {
            throw ConfigError("'" + path(key) + "' has the wrong type");
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("'" + path(key) + "' has the wrong type");
        }
    }

    const Json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

std::vector<double> number_list(const Json& v, const std::string& where) {
    if (!v.is_array()) throw ConfigError("'" + where + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
        if (!x.is_number()) throw ConfigError("'" + where + "' must be an array of numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

void parse_quantum(Reader& r, RunConfig& c) {
    if (!r.has("quantum")) return;
    Reader q(r.at("quantum"), "quantum");
    q.get("k", c.quantum.k);
    q.get("tau", c.quantum.tau);
    q.get("eta", c.quantum.eta);
    q.finish();
}

void parse_basis(Reader& r, RunConfig& c) {
    if (!r.has("basis")) return;
    Reader b(r.at("basis"), "basis");
    b.get("kind", c.basis.kind);
    b.get("n_min", c.basis.n_min);
    b.get("n_max", c.basis.n_max);
    b.get("size", c.basis.size);
    b.get("lead", c.basis.lead);
    b.finish();
}

void parse_ensemble(Reader& r, RunConfig& c) {
    if (!r.has("ensemble")) return;
    Reader e(r.at("ensemble"), "ensemble");
    e.get("count", c.ensemble.count);
    e.get("beta_center", c.ensemble.beta_center);
    e.get("beta_fwhm", c.ensemble.beta_fwhm);
    e.get("initial_n", c.ensemble.initial_n);
    e.finish();
}

void parse_se(Reader& r, RunConfig& c) {
    if (!r.has("se")) return;
    Reader s(r.at("se"), "se");
    std::string mode = to_string(c.se.mode), recoil = to_string(c.se.recoil);
    s.get("mode", mode);
    s.get("p_per_kick", c.se.p_per_kick);
    s.get("detuning", c.se.detuning);
    s.get("lifetime", c.se.lifetime);
    s.get("recoil", recoil);
    s.finish();
    if (mode == "off") c.se.mode = SEMode::off;
    else if (mode == "fixed") c.se.mode = SEMode::fixed;
    else if (mode == "formula") c.se.mode = SEMode::formula;
    else throw ConfigError("se.mode must be off, fixed or formula");
    if (recoil == "uniform") c.se.recoil = RecoilModel::uniform;
    else if (recoil == "dipole") c.se.recoil = RecoilModel::dipole;
    else throw ConfigError("se.recoil must be uniform or dipole");
}

void parse_window(Reader& r, RunConfig& c) {
    if (!r.has("window")) return;
    Reader w(r.at("window"), "window");
    w.get("width", c.window.width);
    w.get("t0", c.window.t0);
    w.get("separation_sigmas", c.window.separation_sigmas);
    w.get("persistence", c.window.persistence);
    w.get("fit_start", c.window.fit_start);
    w.get("fit_start_fraction", c.window.fit_start_fraction);
    w.get("t_max", c.window.t_max);
    w.get("p_floor", c.window.p_floor);
    w.finish();
}

void parse_area(Reader& r, RunConfig& c) {
    if (!r.has("area")) return;
    Reader a(r.at("area"), "area");
    a.get("grid", c.area.grid);
    a.get("kicks", c.area.kicks);
    a.get("seeds", c.area.seeds);
    a.finish();
}

void parse_portrait(Reader& r, RunConfig& c) {
    if (!r.has("portrait")) return;
    Reader p(r.at("portrait"), "portrait");
    if (p.has("seeds")) {
        const Json& s = p.at("seeds");
        if (!s.is_array()) throw ConfigError("'portrait.seeds' must be an array of [theta, J] pairs");
        for (const auto& pt : s) {
            const auto v = number_list(pt, "portrait.seeds[]");
            if (v.size() != 2) throw ConfigError("'portrait.seeds' entries must be [theta, J] pairs");
            c.portrait.seeds.push_back({v[0], v[1]});
        }
    }
    p.get("lattice_seeds", c.portrait.lattice_seeds);
    p.get("kicks", c.portrait.kicks);
    p.finish();
}

void parse_sweep(Reader& r, RunConfig& c) {
    if (!r.has("sweep")) return;
    Reader s(r.at("sweep"), "sweep");
    auto& sw = c.sweep;
    s.get("family", sw.family);
    if (s.has("points")) {
        const Json& pts = s.at("points");
        if (!pts.is_array()) throw ConfigError("'sweep.points' must be an array");
        for (const auto& pj : pts) {
            Reader p(pj, "sweep.points[]");
            SweepPointSpec pt;
            p.get("run_id", pt.run_id);
            p.get("k", pt.k);
            p.get("tau", pt.tau);
            p.get("eta", pt.eta);
            p.get("p_se", pt.p_se);
            p.get("kicks", pt.kicks);
            p.get("count", pt.count);
            p.finish();
            sw.points.push_back(pt);
        }
    }
    s.get("tau", sw.tau);
    s.get("eta", sw.eta);
    if (s.has("k")) sw.k = number_list(s.at("k"), "sweep.k");
    if (s.has("k_range")) sw.k_range = number_list(s.at("k_range"), "sweep.k_range");
    if (s.has("eta_range")) sw.eta_range = number_list(s.at("eta_range"), "sweep.eta_range");
    s.get("n_points", sw.n_points);
    s.get("k_tilde", sw.k_tilde);
    if (s.has("eps_abs")) sw.eps_abs = number_list(s.at("eps_abs"), "sweep.eps_abs");
    s.get("eps_sign", sw.eps_sign);
    s.get("p_se", sw.p_se);
    s.get("p_se_per_k", sw.p_se_per_k);
    s.finish();
}

void parse_fit(Reader& r, RunConfig& c) {
    if (!r.has("fit")) return;
    Reader f(r.at("fit"), "fit");
    std::optional<std::string> survival, rates;
    f.get("survival", survival);
    f.get("rates", rates);
    f.get("t_start", c.fit.t_start);
    f.get("t_end", c.fit.t_end);
    f.finish();
    if (survival) c.fit.survival = *survival;
    if (rates) c.fit.rates = *rates;
}

void parse_units(Reader& r, RunConfig& c) {
    if (!r.has("units")) return;
    Reader u(r.at("units"), "units");
    u.get("wavelength", c.units.wavelength);
    u.get("mass", c.units.mass);
    u.get("period", c.units.period);
    u.get("tau", c.units_tau);
    u.get("gravity", c.units.gravity);
    u.get("rabi", c.units.rabi);
    u.get("detuning", c.units.detuning);
    u.get("pulse_length", c.units.pulse_length);
    u.finish();
}

void positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be positive");
}

}  // namespace

RunConfig parse_config(const Json& j, std::optional<Mode> mode_hint) {
    RunConfig c;
    Reader r(j, "");
    std::optional<std::string> mode, output;
    r.get("mode", mode);
    if (mode) {
        c.mode = parse_mode(*mode);
        if (mode_hint && *mode_hint != c.mode) {
            throw ConfigError("config mode '" + *mode + "' does not match subcommand '" + to_string(*mode_hint) + "'");
        }
    } else if (mode_hint) {
        c.mode = *mode_hint;
    } else {
        throw ConfigError("config has no 'mode'");
    }
    r.get("seed", c.seed);
    r.get("output", output);
    if (output) c.output = *output;
    r.get("workers", c.workers);
    r.get("kicks", c.kicks);
    r.get("stride", c.stride);
    r.get("paper_scale", c.paper_scale);
    r.get("histogram_floor", c.histogram_floor);
    parse_quantum(r, c);
    parse_basis(r, c);
    parse_ensemble(r, c);
    parse_se(r, c);
    parse_window(r, c);
    parse_area(r, c);
    parse_portrait(r, c);
    parse_sweep(r, c);
    parse_fit(r, c);
    parse_units(r, c);
    r.finish();
    c.ensemble.seed = c.seed;
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path, std::optional<Mode> mode_hint) {
    Json j;
    try {
        j = Json::parse(read_text(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    } catch (const std::runtime_error& e) {
        throw ConfigError(e.what());
    }
    return parse_config(j, mode_hint);
}

void RunConfig::validate() const {
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (stride < 1) throw ConfigError("stride must be >= 1");
    if (!(histogram_floor >= 0.0)) throw ConfigError("histogram_floor must be >= 0");

    const bool simulates = mode == Mode::evolve || mode == Mode::sweep;
    const bool maps = mode == Mode::portrait || mode == Mode::area || mode == Mode::evolve;
    if (maps || simulates) {
        if (mode != Mode::sweep) {
            quantum.validate();
            if (!(quantum.k > 0.0)) throw ConfigError("quantum.k must be positive");
            if (quantum.tau == kTwoPi && mode != Mode::evolve)
                throw ConfigError("quantum.tau = 2 pi has no pseudo-classical limit");
        }
    }
    if (simulates) {
        if (kicks < 1) throw ConfigError("kicks must be >= 1");
        ensemble.validate();
        se.validate();
        if (basis.kind != "auto" && basis.kind != "fixed" && basis.kind != "comoving")
            throw ConfigError("basis.kind must be auto, fixed or comoving");
        if (basis.n_min.has_value() != basis.n_max.has_value())
            throw ConfigError("basis.n_min and basis.n_max go together");
        if (basis.n_min && *basis.n_max - *basis.n_min + 1 < 8)
            throw ConfigError("fixed basis must hold at least 8 states");
        if (window.width < 1) throw ConfigError("window.width must be >= 1");
        if (!(window.separation_sigmas > 0.0)) throw ConfigError("window.separation_sigmas must be positive");
        if (window.persistence < 0) throw ConfigError("window.persistence must be >= 0");
        if (window.fit_start_fraction && !(*window.fit_start_fraction >= 0.0 && *window.fit_start_fraction < 1.0))
            throw ConfigError("window.fit_start_fraction must lie in [0, 1)");
        if (window.t_max && *window.t_max < 1) throw ConfigError("window.t_max must be >= 1");
        if (!(window.p_floor >= 0.0 && window.p_floor < 1.0)) throw ConfigError("window.p_floor must lie in [0, 1)");
    }
    if (mode == Mode::area || mode == Mode::portrait || mode == Mode::sweep) {
        if (area.grid < 64) throw ConfigError("area.grid must be >= 64");
        if (area.kicks < 100'000) throw ConfigError("area.kicks must be >= 1e5");
        if (area.seeds < 1) throw ConfigError("area.seeds must be >= 1");
    }
    if (mode == Mode::portrait) {
        if (portrait.kicks < 1) throw ConfigError("portrait.kicks must be >= 1");
        if (portrait.seeds.empty() && portrait.lattice_seeds < 1) throw ConfigError("portrait.lattice_seeds must be >= 1");
    }
    if (mode == Mode::sweep) {
        if (sweep.family != "fixed-tau" && sweep.family != "fixed-classical")
            throw ConfigError("sweep.family must be fixed-tau or fixed-classical");
        if (sweep.p_se && sweep.p_se_per_k) throw ConfigError("sweep.p_se and sweep.p_se_per_k are exclusive");
        if (sweep.p_se && !(*sweep.p_se >= 0.0 && *sweep.p_se < 1.0)) throw ConfigError("sweep.p_se must lie in [0, 1)");
        if (sweep.p_se_per_k && !(*sweep.p_se_per_k >= 0.0)) throw ConfigError("sweep.p_se_per_k must be >= 0");
    }
    if (mode == Mode::fit) {
        if (fit.survival.has_value() == fit.rates.has_value())
            throw ConfigError("fit needs exactly one of fit.survival or fit.rates");
    }
    if (mode == Mode::convert_units) {
        if (units_tau && units.period > 0.0) throw ConfigError("give units.period or units.tau, not both");
        if (units_tau) positive(*units_tau, "units.tau");
        else positive(units.period, "units.period");
        positive(units.wavelength, "units.wavelength");
        positive(units.mass, "units.mass");
        positive(units.gravity, "units.gravity");
    }
}

namespace {

template <class T>
Json opt(const std::optional<T>& v) {
    return v ? Json(*v) : Json(nullptr);
}

}  // namespace

Json to_json(const RunConfig& c) {
    Json j;
    j["mode"] = to_string(c.mode);
    j["seed"] = c.seed;
    j["output"] = c.output.string();
    j["workers"] = c.workers;
    j["kicks"] = c.kicks;
    j["stride"] = c.stride;
    j["paper_scale"] = c.paper_scale;
    j["histogram_floor"] = c.histogram_floor;
    j["quantum"] = {{"k", c.quantum.k}, {"tau", c.quantum.tau}, {"eta", c.quantum.eta}};
    j["basis"] = {{"kind", c.basis.kind}, {"n_min", opt(c.basis.n_min)}, {"n_max", opt(c.basis.n_max)},
                  {"size", c.basis.size}, {"lead", c.basis.lead}};
    j["ensemble"] = {{"count", c.ensemble.count}, {"beta_center", c.ensemble.beta_center},
                     {"beta_fwhm", c.ensemble.beta_fwhm}, {"initial_n", c.ensemble.initial_n}};
    j["se"] = {{"mode", to_string(c.se.mode)}, {"p_per_kick", c.se.p_per_kick}, {"detuning", c.se.detuning},
               {"lifetime", c.se.lifetime}, {"recoil", to_string(c.se.recoil)}};
    j["window"] = {{"width", c.window.width}, {"t0", opt(c.window.t0)},
                   {"separation_sigmas", c.window.separation_sigmas}, {"persistence", c.window.persistence},
                   {"fit_start", opt(c.window.fit_start)}, {"fit_start_fraction", opt(c.window.fit_start_fraction)},
                   {"t_max", opt(c.window.t_max)}, {"p_floor", c.window.p_floor}};
    j["area"] = {{"grid", c.area.grid}, {"kicks", c.area.kicks}, {"seeds", c.area.seeds}};
    Json seeds = Json::array();
    for (const auto& p : c.portrait.seeds) seeds.push_back({p.theta, p.momentum_j});
    j["portrait"] = {{"seeds", seeds}, {"lattice_seeds", c.portrait.lattice_seeds}, {"kicks", c.portrait.kicks}};

    Json pts = Json::array();
    for (const auto& p : c.sweep.points) {
        pts.push_back({{"run_id", opt(p.run_id)}, {"k", p.k}, {"tau", p.tau}, {"eta", p.eta}, {"p_se", opt(p.p_se)},
                       {"kicks", opt(p.kicks)}, {"count", opt(p.count)}});
    }
    j["sweep"] = {{"family", c.sweep.family}, {"points", pts}, {"tau", opt(c.sweep.tau)},
                  {"eta", opt(c.sweep.eta)}, {"k", c.sweep.k}, {"k_range", c.sweep.k_range},
                  {"eta_range", c.sweep.eta_range}, {"n_points", c.sweep.n_points}, {"k_tilde", opt(c.sweep.k_tilde)},
                  {"eps_abs", c.sweep.eps_abs}, {"eps_sign", c.sweep.eps_sign}, {"p_se", opt(c.sweep.p_se)},
                  {"p_se_per_k", opt(c.sweep.p_se_per_k)}};
    std::optional<std::string> survival, rates;
    if (c.fit.survival) survival = c.fit.survival->string();
    if (c.fit.rates) rates = c.fit.rates->string();
    j["fit"] = {{"survival", opt(survival)}, {"rates", opt(rates)}, {"t_start", opt(c.fit.t_start)},
                {"t_end", opt(c.fit.t_end)}};
    j["units"] = {{"wavelength", c.units.wavelength}, {"mass", c.units.mass}, {"period", c.units.period},
                  {"tau", opt(c.units_tau)}, {"gravity", c.units.gravity}, {"rabi", c.units.rabi},
                  {"detuning", c.units.detuning}, {"pulse_length", c.units.pulse_length}};
    return j;
}

}  // namespace dyntun

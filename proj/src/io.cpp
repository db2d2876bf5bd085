#include "dyntun/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace dyntun {

namespace fs = std::filesystem;

std::string format_number(double v) {
    if (v == 0.0) return "0";  // also folds -0
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    if (res.ec != std::errc()) throw std::runtime_error("number formatting failed");
    return {buf, res.ptr};
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_json(const fs::path& path, const Json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

Json read_json(const fs::path& path) { return Json::parse(read_text(path)); }

std::size_t CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw std::runtime_error("CSV column '" + name + "' missing");
}

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::runtime_error("bad number '" + s + "'");
    return v;
}

std::int64_t parse_int(const std::string& s) {
    std::int64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::runtime_error("bad integer '" + s + "'");
    return v;
}

}  // namespace

CsvTable read_csv(const fs::path& path) {
    std::istringstream in(read_text(path));
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty CSV");
    t.header = split(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto row = split(line);
        if (row.size() != t.header.size()) throw std::runtime_error(path.string() + ": ragged CSV row");
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::string portrait_csv(std::span<const PortraitPoint> points) {
    std::string s = "theta,J,seed_id\n";
    for (const auto& p : points) {
        s += format_number(p.theta) + ',' + format_number(p.momentum_j) + ',' + std::to_string(p.seed_id) + '\n';
    }
    return s;
}

std::string occupancy_csv(const OccupancyGrid& grid) {
    std::string s = "cell_i,cell_j,visited\n";
    const int n = grid.resolution();
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            s += std::to_string(i) + ',' + std::to_string(j) + (grid.visited(i, j) ? ",1\n" : ",0\n");
        }
    }
    return s;
}

std::string histogram_csv(std::span<const MomentumHistogram> series, double floor) {
    std::string s = "t,n,prob\n";
    for (const auto& h : series) {
        const auto t = std::to_string(h.kick_index);
        for (std::size_t i = 0; i < h.prob.size(); ++i) {
            if (h.prob[i] < floor) continue;
            s += t + ',' + std::to_string(h.n_first + static_cast<std::int64_t>(i)) + ',' + format_number(h.prob[i]) +
                 '\n';
        }
    }
    return s;
}

std::string survival_csv(const SurvivalSeries& sv) {
    std::string s = "t,p\n";
    for (std::size_t i = 0; i < sv.t.size(); ++i) s += std::to_string(sv.t[i]) + ',' + format_number(sv.p[i]) + '\n';
    return s;
}

SurvivalSeries parse_survival_csv(const CsvTable& t) {
    const auto ct = t.column("t"), cp = t.column("p");
    SurvivalSeries s;
    for (const auto& r : t.rows) {
        s.t.push_back(parse_int(r[ct]));
        s.p.push_back(parse_double(r[cp]));
    }
    if (!s.t.empty()) s.t0 = s.t.front();
    return s;
}

std::string rates_csv(std::span<const RateRow> rows) {
    std::string s = "run_id,k,tau,eta,p_se,A,eps_abs,A_over_hbar,gamma,gamma_err\n";
    for (const auto& r : rows) {
        s += r.run_id;
        for (double v : {r.k, r.tau, r.eta, r.p_se, r.area, r.eps_abs, r.a_over_hbar, r.gamma, r.gamma_err}) {
            s += ',' + format_number(v);
        }
        s += '\n';
    }
    return s;
}

std::vector<RateRow> parse_rates_csv(const CsvTable& t) {
    const std::size_t c[10] = {t.column("run_id"), t.column("k"),     t.column("tau"),         t.column("eta"),
                               t.column("p_se"),   t.column("A"),     t.column("eps_abs"),     t.column("A_over_hbar"),
                               t.column("gamma"),  t.column("gamma_err")};
    std::vector<RateRow> out;
    for (const auto& r : t.rows) {
        RateRow x;
        x.run_id = r[c[0]];
        x.k = parse_double(r[c[1]]);
        x.tau = parse_double(r[c[2]]);
        x.eta = parse_double(r[c[3]]);
        x.p_se = parse_double(r[c[4]]);
        x.area = parse_double(r[c[5]]);
        x.eps_abs = parse_double(r[c[6]]);
        x.a_over_hbar = parse_double(r[c[7]]);
        x.gamma = parse_double(r[c[8]]);
        x.gamma_err = parse_double(r[c[9]]);
        out.push_back(std::move(x));
    }
    return out;
}

Json to_json(const DecayFitResult& f) {
    return Json{{"gamma", f.gamma},
                {"gamma_err", f.gamma_err},
                {"fit_window", {f.t_start, f.t_end}},
                {"r_squared", f.r_squared},
                {"log_amplitude", f.log_amplitude},
                {"points", f.points},
                {"dropped", f.dropped}};
}

Json to_json(const ScalingFitResult& f, std::span<const RateRow> points) {
    Json pts = Json::array();
    for (const auto& p : points) {
        pts.push_back({{"run_id", p.run_id}, {"A_over_hbar", p.a_over_hbar}, {"gamma", p.gamma}, {"gamma_err", p.gamma_err}});
    }
    return Json{{"slope", f.slope},
                {"intercept", f.intercept},
                {"slope_err", f.slope_err},
                {"intercept_err", f.intercept_err},
                {"n_points", f.points},
                {"points", pts}};
}

Json to_json(const AreaEstimate& a, const MapParams& m) {
    return Json{{"area", a.area},
                {"area_over_hbar", a.area_over_hbar},
                {"grid_resolution", a.grid_resolution},
                {"kicks_used", a.kicks_used},
                {"area_fine", a.area_fine},
                {"relative_change", a.relative_change},
                {"converged", a.converged},
                {"map", {{"k_tilde", m.k_tilde}, {"eps_sign", m.eps_sign}, {"tau_eta", m.tau_eta}, {"tau", m.tau},
                         {"eta", m.eta}}}};
}

Json to_json(const FixedPointResult& f) {
    return Json{{"exists", f.exists},
                {"theta", f.point.theta},
                {"J", f.point.momentum_j},
                {"trace", f.trace},
                {"stable", f.stable}};
}

}  // namespace dyntun

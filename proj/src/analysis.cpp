#include "dyntun/analysis.hpp"

#include "dyntun/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace dyntun {

namespace {

void require_stable_mode(const QuantumParams& q) {
    const auto fp = find_period1_fixed_point(q.map_params());
    if (!fp.exists) throw NumericalError("no period-1 fixed point: tau*eta exceeds k_tilde");
    if (!fp.stable) throw NumericalError("period-1 fixed point is unstable (|trace| >= 2)");
}

double window_center(const ModeWindow& w) { return 0.5 * static_cast<double>(w.n_lo + w.n_hi); }

}  // namespace

double mode_velocity(const QuantumParams& q) {
    const double s = q.eps() < 0.0 ? -1.0 : 1.0;
    return -s * q.tau * q.eta / q.hbar_eff();
}

double mode_initial_center(const QuantumParams& q, double beta, std::int64_t initial_n) {
    require_stable_mode(q);
    const double eps_abs = q.hbar_eff();
    const double s = q.eps() < 0.0 ? -1.0 : 1.0;
    const double offset = s * (std::numbers::pi + q.tau * (beta + 0.5 * q.eta));
    // Island copies sit at J = 2 pi m; take the one nearest the launch state.
    const double m = std::round((static_cast<double>(initial_n) * eps_abs + offset) / kTwoPi);
    return (kTwoPi * m - offset) / eps_abs;
}

double predict_mode_center(std::int64_t j, const QuantumParams& q, double initial_center) {
    require_stable_mode(q);
    return initial_center + mode_velocity(q) * static_cast<double>(j);
}

ModeWindow window_around(std::int64_t j, double center, std::int64_t width) {
    if (width < 1) throw std::invalid_argument("window width must be >= 1");
    const auto c = static_cast<std::int64_t>(std::llround(center));
    ModeWindow w;
    w.kick_index = j;
    w.n_lo = c - (width - 1) / 2;
    w.n_hi = w.n_lo + width - 1;
    return w;
}

std::vector<ModeWindow> mode_windows(std::span<const MomentumHistogram> series, const QuantumParams& q,
                                     double initial_center, std::int64_t width) {
    std::vector<ModeWindow> out;
    out.reserve(series.size());
    for (const auto& h : series) {
        out.push_back(window_around(h.kick_index, predict_mode_center(h.kick_index, q, initial_center), width));
    }
    return out;
}

BulkStats bulk_stats(const MomentumHistogram& h, const ModeWindow& w) {
    BulkStats b;
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < h.prob.size(); ++i) {
        const std::int64_t n = h.n_first + static_cast<std::int64_t>(i);
        if (w.contains(n)) continue;
        const double p = h.prob[i];
        b.mass += p;
        s1 += p * static_cast<double>(n);
        s2 += p * static_cast<double>(n) * static_cast<double>(n);
    }
    if (b.mass <= 0.0) return b;
    b.mean = s1 / b.mass;
    b.stddev = std::sqrt(std::max(0.0, s2 / b.mass - b.mean * b.mean));

    double acc = 0.0;
    bool have_lower = false;
    b.upper_q = static_cast<double>(h.n_last());
    for (std::size_t i = 0; i < h.prob.size(); ++i) {
        const std::int64_t n = h.n_first + static_cast<std::int64_t>(i);
        if (w.contains(n)) continue;
        acc += h.prob[i];
        if (!have_lower && acc >= 0.01 * b.mass) {
            b.lower_q = static_cast<double>(n);
            have_lower = true;
        }
        if (acc >= 0.99 * b.mass) {
            b.upper_q = static_cast<double>(n);
            break;
        }
    }
    return b;
}

std::optional<std::int64_t> select_t0(std::span<const MomentumHistogram> series, std::span<const ModeWindow> windows,
                                      double sigmas, std::int64_t persistence) {
    if (series.size() != windows.size()) throw std::invalid_argument("series and windows differ in length");
    std::vector<char> apart(series.size(), 0);
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto b = bulk_stats(series[i], windows[i]);
        if (b.mass < 1e-12) {
            apart[i] = 1;
            continue;
        }
        apart[i] = std::abs(window_center(windows[i]) - b.mean) >= sigmas * b.stddev;
    }
    for (std::size_t i = 0; i < series.size(); ++i) {
        const std::int64_t t = series[i].kick_index;
        if (t < 1 || !apart[i]) continue;
        bool holds = true;
        for (std::size_t k = i; k < series.size() && series[k].kick_index <= t + persistence; ++k) {
            if (!apart[k]) {
                holds = false;
                break;
            }
        }
        if (holds) return t;
    }
    return std::nullopt;
}

SurvivalSeries survival_probability(std::span<const MomentumHistogram> series, std::span<const ModeWindow> windows,
                                    std::int64_t t0) {
    if (series.size() != windows.size()) throw std::invalid_argument("series and windows differ in length");
    SurvivalSeries out;
    out.t0 = t0;
    double ref = -1.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& h = series[i];
        if (h.kick_index < t0) continue;
        const auto& w = windows[i];
        if (w.n_lo < h.n_first || w.n_hi > h.n_last()) {
            throw WindowOutOfBasis("mode window [" + std::to_string(w.n_lo) + ", " + std::to_string(w.n_hi) +
                                   "] outside histogram at kick " + std::to_string(h.kick_index));
        }
        double pop = 0.0;
        for (std::int64_t n = w.n_lo; n <= w.n_hi; ++n) pop += h.at(n);
        if (ref < 0.0) ref = pop;
        out.t.push_back(h.kick_index);
        // A window empty at t0 stays at p = 0 rather than 0/0.
        out.p.push_back(ref > 0.0 ? pop / ref : 0.0);
    }
    if (out.t.empty()) throw InsufficientData("no samples at or after t0");
    return out;
}

DecayFitResult fit_decay_rate(const SurvivalSeries& s, std::int64_t t_start, std::int64_t t_end) {
    if (s.t.size() != s.p.size()) throw std::invalid_argument("survival series t and p differ in length");
    DecayFitResult r;
    r.t_start = t_start;
    r.t_end = t_end;
    std::vector<double> x, y, w;
    std::size_t in_range = 0;
    for (std::size_t i = 0; i < s.t.size(); ++i) {
        if (s.t[i] < t_start || s.t[i] > t_end) continue;
        ++in_range;
        if (!(s.p[i] > 0.0)) {
            ++r.dropped;
            continue;
        }
        x.push_back(static_cast<double>(s.t[i]));
        y.push_back(std::log(s.p[i]));
        w.push_back(s.p[i]);
    }
    r.points = x.size();
    if (x.size() < 5) {
        if (in_range >= 5) throw NonPositiveSurvival("fewer than 5 positive survival samples in the fit window");
        throw InsufficientData("fewer than 5 survival samples in the fit window");
    }

    // Offsets from the first sample keep a constant series exactly constant.
    const double x_ref = x.front(), y_ref = y.front();
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sw += w[i];
        sx += w[i] * (x[i] - x_ref);
        sy += w[i] * (y[i] - y_ref);
    }
    const double xm = sx / sw, ym = sy / sw;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - x_ref - xm, dy = y[i] - y_ref - ym;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    if (!(sxx > 0.0)) throw InsufficientData("fit window spans a single time");
    // Report the span actually fitted, which lies inside the series.
    r.t_start = static_cast<std::int64_t>(x.front());
    r.t_end = static_cast<std::int64_t>(x.back());
    const double slope = sxy / sxx;
    const double intercept = y_ref + ym - slope * (xm + x_ref);
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double res = y[i] - (intercept + slope * x[i]);
        rss += w[i] * res * res;
    }
    const double dof = static_cast<double>(x.size()) - 2.0;
    r.gamma = slope == 0.0 ? 0.0 : -slope;
    r.gamma_err = std::sqrt(rss / dof / sxx);
    r.log_amplitude = intercept;
    r.r_squared = syy > 0.0 ? 1.0 - rss / syy : 1.0;
    return r;
}

ScalingFitResult fit_scaling(std::span<const ScalingPoint> points) {
    if (points.size() < 3) throw InsufficientData("scaling fit needs at least 3 points");
    const double n = static_cast<double>(points.size());
    double sx = 0.0, sy = 0.0;
    for (const auto& p : points) {
        if (!(p.gamma > 0.0)) throw NonPositiveSurvival("scaling fit needs positive decay rates");
        sx += p.a_over_hbar;
        sy += std::log(p.gamma);
    }
    const double xm = sx / n, ym = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& p : points) {
        sxx += (p.a_over_hbar - xm) * (p.a_over_hbar - xm);
        sxy += (p.a_over_hbar - xm) * (std::log(p.gamma) - ym);
    }
    if (!(sxx > 0.0)) throw InsufficientData("scaling fit needs distinct A/|eps| values");
    ScalingFitResult r;
    r.points = points.size();
    r.slope = sxy / sxx;
    r.intercept = ym - r.slope * xm;
    double rss = 0.0;
    for (const auto& p : points) {
        const double res = std::log(p.gamma) - (r.intercept + r.slope * p.a_over_hbar);
        rss += res * res;
    }
    const double s2 = n > 2.0 ? rss / (n - 2.0) : 0.0;
    r.slope_err = std::sqrt(s2 / sxx);
    r.intercept_err = std::sqrt(s2 * (1.0 / n + xm * xm / sxx));
    return r;
}

ModePeak locate_mode_peak(const MomentumHistogram& h, const ModeWindow& w, bool moves_up, std::int64_t half_width) {
    ModePeak out;
    const auto b = bulk_stats(h, w);
    out.bulk_edge = moves_up ? b.upper_q : b.lower_q;
    double best = 0.0;
    bool found = false;
    for (std::size_t i = 0; i < h.prob.size(); ++i) {
        const std::int64_t n = h.n_first + static_cast<std::int64_t>(i);
        const bool beyond = moves_up ? static_cast<double>(n) > out.bulk_edge : static_cast<double>(n) < out.bulk_edge;
        if (beyond && h.prob[i] > best) {
            best = h.prob[i];
            out.peak_n = n;
            found = true;
        }
    }
    if (!found) return out;
    double mass = 0.0, first = 0.0;
    for (std::int64_t n = out.peak_n - half_width; n <= out.peak_n + half_width; ++n) {
        const double p = h.at(n);
        mass += p;
        first += p * static_cast<double>(n);
    }
    out.centroid = first / mass;
    const double near_edge = moves_up ? static_cast<double>(out.peak_n - half_width)
                                      : static_cast<double>(out.peak_n + half_width);
    out.clear = moves_up ? near_edge > out.bulk_edge : near_edge < out.bulk_edge;
    out.separated = moves_up ? out.centroid > out.bulk_edge : out.centroid < out.bulk_edge;
    return out;
}

}  // namespace dyntun

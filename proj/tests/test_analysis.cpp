#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dyntun/analysis.hpp"
#include "dyntun/errors.hpp"
#include "dyntun/rng.hpp"

#include <cmath>

using namespace dyntun;

namespace {

QuantumParams reference() {
    QuantumParams q;
    q.k = 1.4;
    q.tau = 5.97;
    q.eta = 0.0257;
    return q;
}

SurvivalSeries series(std::int64_t t_end, auto p_of_t) {
    SurvivalSeries s;
    for (std::int64_t t = 0; t <= t_end; ++t) {
        s.t.push_back(t);
        s.p.push_back(p_of_t(static_cast<double>(t)));
    }
    return s;
}

// Gaussian bulk at n = 0 plus a narrow mode at `mode`, holding `weight`.
MomentumHistogram two_peaks(std::int64_t t, double mode, double weight, double bulk_sd = 4.0) {
    MomentumHistogram h;
    h.kick_index = t;
    h.n_first = -60;
    h.prob.assign(200, 0.0);
    double norm = 0.0;
    for (std::size_t i = 0; i < h.prob.size(); ++i) {
        const double n = static_cast<double>(h.n_first + static_cast<std::int64_t>(i));
        h.prob[i] = std::exp(-0.5 * n * n / (bulk_sd * bulk_sd));
        norm += h.prob[i];
    }
    for (auto& p : h.prob) p *= (1.0 - weight) / norm;
    const auto c = static_cast<std::int64_t>(std::llround(mode));
    for (std::int64_t n = c - 1; n <= c + 1; ++n) h.prob[static_cast<std::size_t>(n - h.n_first)] += weight / 3.0;
    return h;
}

}  // namespace

TEST_CASE("mode centre prediction") {
    const auto q = reference();
    CHECK(predict_mode_center(15, q, 0.0) == doctest::Approx(7.348).epsilon(1e-3));
    CHECK(predict_mode_center(0, q, 2.5) == 2.5);
    QuantumParams flat = q;
    flat.eta = 0.0;
    CHECK(predict_mode_center(1000, flat, 1.0) == doctest::Approx(1.0));
    QuantumParams chaotic = q;
    chaotic.k = 10.0 / q.hbar_eff();
    CHECK_THROWS_AS(predict_mode_center(1, chaotic, 0.0), NumericalError);
    CHECK_THROWS_AS(mode_initial_center(chaotic, 0.5, 0), NumericalError);
}

TEST_CASE("initial mode centre lies on the island") {
    const auto q = reference();
    const double n0 = mode_initial_center(q, 0.5, 0);
    CHECK(std::abs(n0) < 0.5 * kTwoPi / q.hbar_eff());
    // The centre maps to J = 0 (mod 2 pi) through the correspondence.
    const double s = -1.0;
    const double j = n0 * q.hbar_eff() + s * (std::numbers::pi + q.tau * (0.5 + 0.5 * q.eta));
    CHECK(std::abs(std::remainder(j, kTwoPi)) < 1e-12);
    CHECK(mode_velocity(q) == doctest::Approx(0.4899).epsilon(1e-3));
}

TEST_CASE("windows") {
    const auto w = window_around(3, 7.4, 7);
    CHECK(w.n_lo == 4);
    CHECK(w.n_hi == 10);
    CHECK(w.width() == 7);
    CHECK(w.contains(7));
    CHECK_FALSE(w.contains(11));
    CHECK_THROWS(window_around(0, 0.0, 0));
}

TEST_CASE("survival: unit when nothing moves, zero in an empty region") {
    std::vector<MomentumHistogram> hs;
    std::vector<ModeWindow> ws, empty;
    for (std::int64_t t = 0; t < 10; ++t) {
        MomentumHistogram h;
        h.kick_index = t;
        h.n_first = -20;
        h.prob.assign(41, 0.0);
        h.prob[20] = 1.0;
        hs.push_back(h);
        ws.push_back(window_around(t, 0.0, 7));
        empty.push_back(window_around(t, 15.0, 5));
    }
    const auto s = survival_probability(hs, ws, 2);
    CHECK(s.t.front() == 2);
    CHECK(s.t.size() == 8);
    for (double p : s.p) CHECK(p == 1.0);
    const auto z = survival_probability(hs, empty, 0);
    for (double p : z.p) CHECK(p == 0.0);
    std::vector<ModeWindow> outside(ws.size(), window_around(0, 19.0, 7));
    CHECK_THROWS_AS(survival_probability(hs, outside, 0), WindowOutOfBasis);
}

TEST_CASE("survival is normalised and bounded on a decaying mode") {
    std::vector<MomentumHistogram> hs;
    std::vector<ModeWindow> ws;
    for (std::int64_t t = 0; t <= 40; ++t) {
        const double c = 0.5 * static_cast<double>(t);
        hs.push_back(two_peaks(t, c, 0.5 * std::exp(-0.03 * t)));
        ws.push_back(window_around(t, c, 7));
    }
    const auto s = survival_probability(hs, ws, 30);
    CHECK(s.p.front() == 1.0);
    for (double p : s.p) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0 + 1e-9);
    }
}

TEST_CASE("t0 is the first persistent 3-sigma separation") {
    std::vector<MomentumHistogram> hs;
    std::vector<ModeWindow> ws;
    for (std::int64_t t = 0; t <= 60; ++t) {
        const double c = 0.5 * static_cast<double>(t);
        hs.push_back(two_peaks(t, c, 0.3));
        ws.push_back(window_around(t, c, 7));
    }
    // Oracle: bulk moments summed directly with the window cells cut out.
    std::int64_t expect = -1;
    for (std::int64_t t = 1; t <= 60 && expect < 0; ++t) {
        const auto& h = hs[static_cast<std::size_t>(t)];
        const auto& w = ws[static_cast<std::size_t>(t)];
        double m0 = 0.0, m1 = 0.0, m2 = 0.0;
        for (std::int64_t n = h.n_first; n <= h.n_last(); ++n) {
            if (n >= w.n_lo && n <= w.n_hi) continue;
            m0 += h.at(n);
            m1 += h.at(n) * n;
            m2 += h.at(n) * n * n;
        }
        const double mean = m1 / m0, sd = std::sqrt(m2 / m0 - mean * mean);
        if (0.5 * (w.n_lo + w.n_hi) - mean >= 3.0 * sd) expect = t;
    }
    const auto t0 = select_t0(hs, ws, 3.0, 10);
    REQUIRE(t0.has_value());
    CHECK(*t0 == expect);
    CHECK(*t0 > 15);
    const auto loose = select_t0(hs, ws, 1.0, 0);
    REQUIRE(loose.has_value());
    CHECK(*loose < *t0);
    CHECK(*loose >= 1);
    std::vector<ModeWindow> still(ws.size(), window_around(0, 0.0, 7));
    CHECK_FALSE(select_t0(hs, still).has_value());
}

TEST_CASE("peak location beyond the bulk") {
    const auto h = two_peaks(30, 20.0, 0.3);
    const auto p = locate_mode_peak(h, window_around(30, 20.0, 7), true);
    CHECK(p.separated);
    CHECK(p.clear);
    CHECK(p.peak_n >= 19);
    CHECK(p.peak_n <= 21);
    CHECK(p.centroid == doctest::Approx(20.0).epsilon(1e-4));  // bulk tail leaks in
    CHECK(p.bulk_edge < 12.0);
    const auto close = two_peaks(5, 3.0, 0.3);
    CHECK_FALSE(locate_mode_peak(close, window_around(5, 3.0, 7), true).separated);
    // Peak just past the edge: separated, but its shoulder is still in the bulk.
    const auto edge = locate_mode_peak(two_peaks(20, 12.0, 0.3), window_around(20, 12.0, 7), true);
    CHECK(edge.centroid > edge.bulk_edge);
    CHECK(edge.separated);
    CHECK_FALSE(edge.clear);
}

TEST_CASE("exact exponential is recovered") {
    const auto s = series(100, [](double t) { return 0.8 * std::exp(-0.01 * t); });
    const auto f = fit_decay_rate(s, 0, 100);
    CHECK(std::abs(f.gamma - 0.01) < 1e-9);
    CHECK(f.gamma_err >= 0.0);
    CHECK(f.gamma_err < 1e-12);
    CHECK(f.log_amplitude == doctest::Approx(std::log(0.8)).epsilon(1e-9));
    CHECK(f.r_squared == doctest::Approx(1.0));
    CHECK(f.points == 101);
}

TEST_CASE("two-rate curve: the window decides") {
    auto p = [](double t) { return t <= 50 ? std::exp(-0.02 * t) : std::exp(-1.0) * std::exp(-0.005 * (t - 50)); };
    const auto s = series(150, p);
    const auto early = fit_decay_rate(s, 0, 50);
    CHECK(early.gamma == doctest::Approx(0.02).epsilon(1e-9));
    const auto late = fit_decay_rate(s, 50, 150);
    CHECK(late.gamma == doctest::Approx(0.005).epsilon(1e-9));
    const auto both = fit_decay_rate(s, 0, 150);
    CHECK(both.gamma > 0.005);
    CHECK(both.gamma < 0.02);
    CHECK(both.t_start == 0);
    CHECK(both.t_end == 150);
}

TEST_CASE("constant series fits a zero rate") {
    const auto s = series(30, [](double) { return 0.37; });
    const auto f = fit_decay_rate(s, 0, 30);
    CHECK(std::abs(f.gamma) <= f.gamma_err);
    CHECK(f.gamma == 0.0);
}

TEST_CASE("fit errors") {
    const auto s = series(10, [](double t) { return std::exp(-0.1 * t); });
    CHECK_THROWS_AS(fit_decay_rate(s, 0, 3), InsufficientData);
    auto z = series(10, [](double t) { return t < 3 ? 1.0 : 0.0; });
    CHECK_THROWS_AS(fit_decay_rate(z, 0, 10), NonPositiveSurvival);
    auto some = series(20, [](double t) { return std::exp(-0.1 * t); });
    some.p[7] = 0.0;
    some.p[9] = -1e-12;
    const auto f = fit_decay_rate(some, 0, 20);
    CHECK(f.dropped == 2);
    CHECK(f.gamma == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(f.t_end <= s.t.back() + 10);
}

TEST_CASE("noisy recovery lies within 3 standard errors in >= 95% of trials") {
    const int trials = 1000;
    int inside = 0;
    for (int trial = 0; trial < trials; ++trial) {
        SurvivalSeries s;
        for (std::int64_t t = 0; t <= 100; ++t) {
            const double z = rng::standard_normal(17, rng::Stream::beta, static_cast<std::uint64_t>(trial),
                                                  static_cast<std::uint64_t>(t));
            s.t.push_back(t);
            s.p.push_back(0.8 * std::exp(-0.01 * static_cast<double>(t)) * (1.0 + 0.01 * z));
        }
        const auto f = fit_decay_rate(s, 0, 100);
        inside += std::abs(f.gamma - 0.01) <= 3.0 * f.gamma_err;
    }
    CHECK(inside >= 950);
}

TEST_CASE("scaling fit") {
    std::vector<ScalingPoint> pts;
    for (double x : {2.0, 4.0, 6.5, 9.0}) pts.push_back({x, std::exp(-x)});
    const auto f = fit_scaling(pts);
    CHECK(std::abs(f.slope + 1.0) < 1e-9);
    CHECK(std::abs(f.intercept) < 1e-9);
    CHECK(f.points == 4);
    CHECK(f.slope_err < 1e-9);
    pts.resize(2);
    CHECK_THROWS_AS(fit_scaling(pts), InsufficientData);
    std::vector<ScalingPoint> bad{{1.0, 0.1}, {2.0, 0.0}, {3.0, 0.01}};
    CHECK_THROWS_AS(fit_scaling(bad), FitError);
}

TEST_CASE("moving the fit start by two kicks stays inside the error bar") {
    auto q = reference();
    const double v = mode_velocity(q);
    const double c0 = mode_initial_center(q, 0.5, 0);
    const auto spread = static_cast<std::size_t>(kick_spread(q.k));
    const auto basis = Basis::comoving(256, 48, 2 * spread + 8, c0, v);
    EnsembleSpec e;
    e.count = 128;
    e.seed = 3;
    EvolveOptions o;
    o.kicks = 1500;
    auto states = sample_beta_ensemble(e, basis);
    const auto hs = evolve_ensemble(states, q, basis, SEModel{}, o);
    const auto ws = mode_windows(hs, q, c0, 7);
    // Well separated: the mode peak has cleared the bulk's 99th percentile
    // and stays clear for ten kicks.
    std::int64_t start = -1;
    for (std::size_t i = 1; i + 10 < hs.size() && start < 0; ++i) {
        bool clear = true;
        for (std::size_t k = i; k <= i + 10; ++k) clear = clear && locate_mode_peak(hs[k], ws[k], v > 0.0).clear;
        if (clear) start = hs[i].kick_index;
    }
    REQUIRE(start > 0);
    const auto ref = fit_decay_rate(survival_probability(hs, ws, start), start, o.kicks);
    for (std::int64_t shift : {-2, 2}) {
        const auto t = start + shift;
        const auto f = fit_decay_rate(survival_probability(hs, ws, t), t, o.kicks);
        CHECK(std::abs(f.gamma - ref.gamma) < ref.gamma_err);
    }
}

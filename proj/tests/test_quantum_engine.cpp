#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dyntun/errors.hpp"
#include "dyntun/quantum_engine.hpp"

#include <cmath>
#include <numbers>

using namespace dyntun;

namespace {

// J_m(x) = (1/pi) int_0^pi cos(m t - x sin t) dt, composite Simpson.
double bessel_j(int m, double x) {
    const int n = 4000;
    const double h = std::numbers::pi / n;
    double s = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double t = i * h;
        const double f = std::cos(m * t - x * std::sin(t));
        s += f * (i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0));
    }
    return s * h / 3.0 / std::numbers::pi;
}

QuantumParams reference() {
    QuantumParams q;
    q.k = 1.4;
    q.tau = 5.97;
    q.eta = 0.0257;
    q.n_min = -128;
    q.n_max = 127;
    return q;
}

}  // namespace

TEST_CASE("single kick populates Bessel weights") {
    const auto basis = Basis::fixed(-64, 63);
    for (double k : {0.8, 1.4, 3.0}) {
        const auto s = apply_kick(RotorState::plane_wave(0.5, 0, basis), k);
        for (int m = -20; m <= 20; ++m) {
            const double jm = bessel_j(m, k);
            CHECK(std::abs(std::norm(s.amplitude(m)) - jm * jm) < 1e-10);
        }
        CHECK(s.norm() == doctest::Approx(1.0).epsilon(1e-13));
    }
}

TEST_CASE("kick spread bounds the Bessel tail") {
    for (double k : {0.5, 1.4, 5.0}) {
        const auto m = kick_spread(k);
        CHECK(std::abs(bessel_j(static_cast<int>(m), k)) < 1e-12);
    }
}

TEST_CASE("quantum resonance: ballistic energy growth") {
    QuantumParams q;
    q.k = 0.8;
    q.tau = kTwoPi;
    q.eta = 0.0;
    q.n_min = -128;
    q.n_max = 127;
    auto s = RotorState::plane_wave(0.5, 0, Basis::fixed(q));
    for (int t = 1; t <= 50; ++t) {
        s = evolve_one_period(s, q);
        const double energy = 0.5 * s.mean_n2();
        const double expected = (q.k * t) * (q.k * t) / 4.0;
        CHECK(std::abs(energy - expected) / expected < 1e-6);
    }
    CHECK(s.kick_index == 50);
}

TEST_CASE("free phase matches the direct formula") {
    const auto q = reference();
    const auto basis = Basis::fixed(q);
    std::vector<Complex> a(basis.size(), Complex{1.0, 0.0});
    const std::int64_t n_first = -128;
    const std::int64_t j = 4321;
    const double beta = 0.437;
    apply_free_phase(a, n_first, beta, j, q);
    // Only phase differences are physical.
    const Complex ref = a[128];
    const double phi0 = free_propagation_phase(0, beta, j, q);
    for (std::int64_t n : {-128, -37, -1, 1, 5, 64, 127}) {
        const double dphi = free_propagation_phase(n, beta, j, q) - phi0;
        const Complex expect = std::polar(1.0, -std::remainder(dphi, kTwoPi));
        const Complex got = a[static_cast<std::size_t>(n - n_first)] / ref;
        CHECK(std::abs(got - expect) < 1e-9);
    }
    CHECK(free_propagation_phase(2, 0.25, 3, q) ==
          doctest::Approx(0.5 * q.tau * std::pow(2 + 0.25 + q.eta * 3.5, 2)));
}

TEST_CASE("evolution is unitary on a fixed basis") {
    const auto q = reference();
    auto s = RotorState::plane_wave(0.52, 0, Basis::fixed(q));
    for (int t = 0; t < 100; ++t) s = evolve_one_period(s, q);
    CHECK(s.norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("basis overflow is detected") {
    QuantumParams q = reference();
    q.k = 6.0;
    q.n_min = -8;
    q.n_max = 7;
    auto s = RotorState::plane_wave(0.5, 0, Basis::fixed(q));
    CHECK_THROWS_AS(apply_kick(s, q.k), BasisOverflow);

    EnsembleSpec e;
    e.count = 4;
    auto states = sample_beta_ensemble(e, Basis::fixed(q));
    EvolveOptions o;
    o.kicks = 5;
    try {
        evolve_ensemble(states, q, Basis::fixed(q), SEModel{}, o);
        FAIL("expected overflow");
    } catch (const BasisOverflow& err) {
        CHECK(err.rotor() >= 0);
        CHECK(err.kick() >= 1);
    }
}

TEST_CASE("spontaneous emission shifts momentum rigidly") {
    const auto basis = Basis::fixed(-32, 31);
    auto s = apply_kick(RotorState::plane_wave(0.7, 0, basis), 0.9);
    const auto shifted = apply_spontaneous_emission(s, 0.6);  // 0.7 + 0.6 = 1.3: carry 1
    CHECK(shifted.beta == doctest::Approx(0.3));
    for (int n = -10; n <= 10; ++n) CHECK(std::abs(shifted.amplitude(n + 1) - s.amplitude(n)) < 1e-15);
    const auto back = apply_spontaneous_emission(s, -0.9);  // 0.7 - 0.9 = -0.2: carry -1
    CHECK(back.beta == doctest::Approx(0.8));
    for (int n = -10; n <= 10; ++n) CHECK(std::abs(back.amplitude(n - 1) - s.amplitude(n)) < 1e-15);
    CHECK(shifted.norm() == doctest::Approx(s.norm()));
}

TEST_CASE("spontaneous-emission probability") {
    CHECK(se_probability_from_formula(1.4, 2.0 * std::numbers::pi * 6.8e9, 26.2e-9) ==
          doctest::Approx(1.4 / (26.2e-9 * 2.0 * std::numbers::pi * 6.8e9)));
    CHECK_THROWS_AS(se_probability_from_formula(1.0, 0.0, 1e-8), std::domain_error);
    CHECK_THROWS_AS(se_probability_from_formula(-1.0, 1.0, 1e-8), std::domain_error);
    SEModel m;
    CHECK(m.probability(1.0) == 0.0);
    m.mode = SEMode::fixed;
    m.p_per_kick = 0.01;
    CHECK(m.probability(3.0) == 0.01);
    m.p_per_kick = 1.5;
    CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("recoil distributions") {
    const int n = 200'000;
    double u2 = 0.0, d2 = 0.0, umax = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = draw_recoil(RecoilModel::uniform, 3, static_cast<std::uint64_t>(i), 1);
        const double d = draw_recoil(RecoilModel::dipole, 3, static_cast<std::uint64_t>(i), 1);
        umax = std::max({umax, std::abs(u), std::abs(d)});
        u2 += u * u;
        d2 += d * d;
    }
    CHECK(umax <= 1.0);
    CHECK(u2 / n == doctest::Approx(1.0 / 3.0).epsilon(0.01));
    CHECK(d2 / n == doctest::Approx(0.4).epsilon(0.01));  // density 3/8 (1 + u^2)
}

TEST_CASE("beta ensemble has the requested width") {
    EnsembleSpec e;
    e.count = 20'000;
    e.beta_fwhm = 0.06;
    const auto states = sample_beta_ensemble(e, Basis::fixed(-8, 7));
    double s1 = 0.0, s2 = 0.0;
    for (const auto& s : states) {
        s1 += s.beta;
        s2 += s.beta * s.beta;
    }
    const double mean = s1 / e.count;
    const double sd = std::sqrt(s2 / e.count - mean * mean);
    CHECK(mean == doctest::Approx(0.5).epsilon(2e-3));
    CHECK(sd == doctest::Approx(0.06 / (2.0 * std::sqrt(2.0 * std::log(2.0)))).epsilon(0.03));
    const auto again = sample_beta_ensemble(e, Basis::fixed(-8, 7));
    CHECK(again[123].beta == states[123].beta);

    e.beta_fwhm = 0.0;
    CHECK_THROWS_AS(e.validate(), ConfigError);
}

TEST_CASE("ensemble evolution is independent of the worker count") {
    const auto q = reference();
    const auto basis = Basis::fixed(q);
    EnsembleSpec e;
    e.count = 24;
    SEModel se;
    se.mode = SEMode::fixed;
    se.p_per_kick = 0.05;
    EvolveOptions o;
    o.kicks = 30;
    o.stride = 7;
    o.seed = 5;
    auto s1 = sample_beta_ensemble(e, basis);
    auto s3 = s1;
    const auto h1 = evolve_ensemble(s1, q, basis, se, o);
    o.workers = 3;
    const auto h3 = evolve_ensemble(s3, q, basis, se, o);
    REQUIRE(h1.size() == h3.size());
    CHECK(h1.size() == 6);  // 0, 7, 14, 21, 28, 30
    CHECK(h1.back().kick_index == 30);
    for (std::size_t i = 0; i < h1.size(); ++i) CHECK(h1[i].prob == h3[i].prob);
    for (const auto& h : h1) CHECK(h.total() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("co-moving basis follows the mode and accounts for what it drops") {
    const auto q = reference();
    const double velocity = q.tau * q.eta / q.hbar_eff();
    const auto spread = static_cast<std::size_t>(kick_spread(q.k));
    const auto moving = Basis::comoving(128, 24, 2 * spread + 8, -0.255, velocity);
    const auto fixed = Basis::fixed(-256, 255);
    EnsembleSpec e;
    e.count = 16;
    EvolveOptions o;
    o.kicks = 200;
    o.stride = 40;
    auto a = sample_beta_ensemble(e, moving);
    auto b = sample_beta_ensemble(e, fixed);
    const auto hm = evolve_ensemble(a, q, moving, SEModel{}, o);
    const auto hf = evolve_ensemble(b, q, fixed, SEModel{}, o);
    for (std::size_t i = 0; i < hm.size(); ++i) {
        CHECK(hm[i].total() + hm[i].absorbed == doctest::Approx(1.0).epsilon(1e-12));
        // Near the mode the truncated evolution agrees with the full one.
        const auto c = static_cast<std::int64_t>(std::llround(-0.255 + velocity * hm[i].kick_index));
        double pm = 0.0, pf = 0.0;
        for (std::int64_t n = c - 3; n <= c + 3; ++n) {
            pm += hm[i].at(n);
            pf += hf[i].at(n);
        }
        CHECK(pm == doctest::Approx(pf).epsilon(1e-6));
    }
    CHECK(hm.back().absorbed > 0.1);
    CHECK(moving.n_first(100) > moving.n_first(0));
}

TEST_CASE("fixed basis suggestion covers the drift") {
    const auto q = reference();
    const auto [lo, hi] = suggest_fixed_basis(q, 0, 60, 0.49);
    CHECK(lo < -30);
    CHECK(hi > 30 + 30);
    const auto [lo2, hi2] = suggest_fixed_basis(q, 0, 60, -0.49);
    CHECK(-lo2 > hi2);
}

TEST_CASE("parameter validation") {
    QuantumParams q = reference();
    q.k = -1.0;
    CHECK_THROWS_AS(q.validate(), ConfigError);
    q = reference();
    q.tau = 0.0;
    CHECK_THROWS_AS(q.validate(), ConfigError);
    CHECK_THROWS_AS(Basis::comoving(100, 10, 10, 0.0, 1.0), ConfigError);
}

TEST_CASE("norm holds over a long run") {
    QuantumParams q = reference();
    q.eta = 0.0;  // no drift: the momentum range stays bounded
    auto s = RotorState::plane_wave(0.5, 0, Basis::fixed(q));
    double worst_step = 0.0, prev = s.norm();
    for (int t = 0; t < 50'000; ++t) {
        s = evolve_one_period(s, q);
        const double now = s.norm();
        worst_step = std::max(worst_step, std::abs(now - prev));
        prev = now;
    }
    CHECK(worst_step < 1e-12);
    CHECK(std::abs(prev - 1.0) < 1e-8);
}

#include "dyntun/units.hpp"

#include "dyntun/core_map.hpp"

#include <cmath>
#include <stdexcept>

namespace dyntun {

double UnitContext::grating_vector() const { return kTwoPi / (0.5 * wavelength); }

void UnitContext::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) throw std::domain_error(std::string(name) + " must be positive");
    };
    positive(wavelength, "wavelength");
    positive(mass, "mass");
    positive(period, "period");
    positive(gravity, "gravity");
    for (double v : {rabi, detuning, pulse_length}) {
        if (v < 0.0 || !std::isfinite(v)) throw std::domain_error("rabi, detuning and pulse_length must be >= 0");
    }
}

namespace {

double half_talbot_time(const UnitContext& u) {
    const double g = u.grating_vector();
    return kTwoPi * u.mass / (constants::hbar * g * g);
}

}  // namespace

UnitResult convert_units(const UnitContext& u) {
    u.validate();
    UnitResult r;
    r.half_talbot = half_talbot_time(u);
    r.tau = kTwoPi * u.period / r.half_talbot;
    r.eta = u.gravity * u.mass * u.period / (constants::hbar * u.grating_vector());
    if (u.rabi > 0.0 && u.detuning > 0.0 && u.pulse_length > 0.0) {
        r.kick_strength = u.rabi * u.rabi * u.pulse_length / u.detuning;
    }
    return r;
}

double period_for_tau(double tau, const UnitContext& u) {
    if (!(tau > 0.0)) throw std::domain_error("tau must be positive");
    UnitContext probe = u;
    probe.period = 1.0;
    probe.validate();
    return tau * half_talbot_time(u) / kTwoPi;
}

}  // namespace dyntun

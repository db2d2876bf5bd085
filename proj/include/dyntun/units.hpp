#pragma once

// Laboratory units <-> dimensionless kicked-accelerator parameters.

namespace dyntun {

namespace constants {
inline constexpr double hbar = 1.054571817e-34;         // J s
inline constexpr double atomic_mass = 1.66053906660e-27; // kg
inline constexpr double rb87_mass = 86.909180527 * atomic_mass;
}  // namespace constants

/// Standing wave from counterpropagating beams, so the grating period is
/// half the optical wavelength.
struct UnitContext {
    double wavelength = 780e-9;  // m
    double mass = constants::rb87_mass;
    double period = 0.0;  // pulse period T, s
    double gravity = 9.8;  // m/s^2
    // Only used for the kick-strength estimate.
    double rabi = 0.0;          // rad/s
    double detuning = 0.0;      // rad/s
    double pulse_length = 0.0;  // s

    double grating_vector() const;  // G = 2 pi / (wavelength / 2)
    void validate() const;
};

struct UnitResult {
    double tau = 0.0;
    double eta = 0.0;
    double half_talbot = 0.0;  // s
    double kick_strength = 0.0;  // Omega^2 dt / Delta, 0 if not requested
};

/// T_half = 2 pi M / (hbar G^2), tau = 2 pi T / T_half, eta = g M T / (hbar G).
/// Throws std::domain_error on non-positive inputs.
UnitResult convert_units(const UnitContext& u);

/// Pulse period giving a dimensionless tau.
double period_for_tau(double tau, const UnitContext& u);

}  // namespace dyntun

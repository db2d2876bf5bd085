#pragma once

// Accelerator-mode tracking, survival probabilities and exponential fits.

#include "dyntun/quantum_engine.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace dyntun {

struct ModeWindow {
    std::int64_t kick_index = 0;
    std::int64_t n_lo = 0;
    std::int64_t n_hi = 0;  // inclusive

    std::int64_t width() const { return n_hi - n_lo + 1; }
    bool contains(std::int64_t n) const { return n >= n_lo && n <= n_hi; }
};

struct SurvivalSeries {
    std::vector<std::int64_t> t;
    std::vector<double> p;
    std::int64_t t0 = 0;
};

struct DecayFitResult {
    double gamma = 0.0;
    double gamma_err = 0.0;
    std::int64_t t_start = 0;
    std::int64_t t_end = 0;
    double r_squared = 0.0;
    double log_amplitude = 0.0;  // ln p extrapolated to t = 0
    std::size_t points = 0;
    std::size_t dropped = 0;  // non-positive samples skipped
};

struct ScalingPoint {
    double a_over_hbar = 0.0;
    double gamma = 0.0;
};

struct ScalingFitResult {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_err = 0.0;
    double intercept_err = 0.0;
    std::size_t points = 0;
};

/// Momentum drift of the period-1 accelerator mode in the falling frame,
/// -sgn(eps) tau eta / |eps| states per kick.
double mode_velocity(const QuantumParams& q);

/// Centre (in n) of the island the initial plane wave at `initial_n` and
/// quasimomentum `beta` maps onto. Throws NumericalError if the map has no
/// stable period-1 fixed point.
double mode_initial_center(const QuantumParams& q, double beta, std::int64_t initial_n);

/// initial_center + mode_velocity(q) * j. Throws NumericalError without a
/// stable period-1 fixed point.
double predict_mode_center(std::int64_t j, const QuantumParams& q, double initial_center);

/// `width` states centred on round(center).
ModeWindow window_around(std::int64_t j, double center, std::int64_t width);

std::vector<ModeWindow> mode_windows(std::span<const MomentumHistogram> series, const QuantumParams& q,
                                     double initial_center, std::int64_t width);

/// Moments of the population outside a window.
struct BulkStats {
    double mass = 0.0;
    double mean = 0.0;
    double stddev = 0.0;
    double lower_q = 0.0;  // 1st percentile
    double upper_q = 0.0;  // 99th percentile
};
BulkStats bulk_stats(const MomentumHistogram& h, const ModeWindow& w);

/// Smallest sampled kick at which the window centre sits `sigmas` bulk
/// standard deviations away from the bulk mean, and stays there for the next
/// `persistence` kicks of the series.
std::optional<std::int64_t> select_t0(std::span<const MomentumHistogram> series, std::span<const ModeWindow> windows,
                                      double sigmas = 3.0, std::int64_t persistence = 10);

/// p(t) = window population at t over window population at t0, for every
/// sample with t >= t0; identically zero if the window is empty at t0.
SurvivalSeries survival_probability(std::span<const MomentumHistogram> series, std::span<const ModeWindow> windows,
                                    std::int64_t t0);

/// Weighted least squares of ln p against t on [t_start, t_end], weights
/// proportional to p (counting errors ~ sqrt(p)); gamma = -slope.
DecayFitResult fit_decay_rate(const SurvivalSeries& s, std::int64_t t_start, std::int64_t t_end);

/// Ordinary least squares of ln gamma against A/|eps|.
ScalingFitResult fit_scaling(std::span<const ScalingPoint> points);

/// Peak of the population beyond the bulk, located without reference to the
/// predicted trajectory.
struct ModePeak {
    bool separated = false;  // centroid beyond the bulk edge
    bool clear = false;      // whole +-half_width neighbourhood beyond it
    double centroid = 0.0;  // population-weighted n within +-half_width of the peak
    std::int64_t peak_n = 0;
    double bulk_edge = 0.0;  // 99th (or 1st) percentile of the bulk
};
ModePeak locate_mode_peak(const MomentumHistogram& h, const ModeWindow& w, bool moves_up, std::int64_t half_width = 3);

}  // namespace dyntun

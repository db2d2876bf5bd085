#pragma once

// Pipelines behind the CLI subcommands. Each writes its artifacts and a
// manifest.json into the configured output directory.

#include "dyntun/analysis.hpp"
#include "dyntun/config.hpp"
#include "dyntun/io.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dyntun {

inline constexpr const char* kVersion = "0.1.0";

enum class Family { fixed_tau, fixed_classical };

struct SweepPoint {
    std::string run_id;
    double k = 0.0, tau = 0.0, eta = 0.0, p_se = 0.0;
    std::int64_t kicks = 0;
    std::size_t count = 0;

    QuantumParams quantum() const;
};

struct SweepPlan {
    Family family = Family::fixed_tau;
    std::vector<SweepPoint> points;
    /// Map shared by every point of a fixed-classical family.
    std::optional<MapParams> shared_map;

    /// Throws ConfigError; for fixed-classical plans checks that every point
    /// reproduces the shared map.
    void validate() const;
};

/// Fixed tau and eta, one point per k.
SweepPlan fixed_tau_plan(double tau, double eta, const std::vector<double>& k, std::int64_t kicks,
                         std::size_t count);

/// Fixed k_tilde and tau*eta = 2 pi eta, one point per |eps|:
/// tau = 2 pi + sign |eps|, k = k_tilde / |eps|, eta_point = 2 pi eta / tau.
SweepPlan fixed_classical_plan(double k_tilde, double eta, const std::vector<double>& eps_abs, int eps_sign,
                               std::int64_t kicks, std::size_t count);

/// `points` evenly spaced (k, eta) tuples from (k_first, eta_first) to
/// (k_last, eta_last) at fixed tau.
SweepPlan tuple_ramp_plan(double tau, double k_first, double k_last, double eta_first, double eta_last, int points,
                          std::int64_t kicks, std::size_t count);

/// Plan described by a sweep config (p_se applied per point).
SweepPlan make_sweep_plan(const RunConfig& c);

/// Everything the evolve pipeline learns about one parameter point.
struct EvolveOutcome {
    std::vector<MomentumHistogram> histograms;
    Basis basis = Basis::fixed(0, 7);
    double mode_center0 = 0.0;
    double mode_velocity = 0.0;
    std::optional<std::int64_t> t0;
    std::optional<SurvivalSeries> survival;
    std::optional<DecayFitResult> fit;
    double p_se = 0.0;
};

/// Basis for a run: fixed when the suggested static range is small, else a
/// window co-moving with the accelerator mode.
Basis choose_basis(const QuantumParams& q, const BasisSettings& b, std::int64_t initial_n, std::int64_t kicks);

/// Evolve, locate t0, survival and decay fit. Fit failures propagate as
/// FitError after the histograms are stored in `out`.
void simulate_point(const QuantumParams& q, const SEModel& se, const EnsembleSpec& ensemble, const RunConfig& c,
                    std::int64_t kicks, int workers, double default_fit_fraction, EvolveOutcome& out);

/// Fit window [start, end] the configuration selects: the end is t_max (or
/// the run length) cut back to the last sample above the survival floor, the
/// start is max(t0, fit_start) or max(t0, fraction * end).
std::pair<std::int64_t, std::int64_t> fit_window(const WindowSettings& w, const SurvivalSeries& s, std::int64_t kicks,
                                                 double default_fraction);

struct RunArtifacts {
    std::filesystem::path directory;
    std::vector<std::string> files;
    std::vector<std::string> warnings;
    bool complete = false;
};

/// Executes the configured pipeline. Throws ConfigError, NumericalError or
/// FitError after marking the manifest incomplete.
RunArtifacts run(const RunConfig& config);

/// Large-run settings behind --paper-scale: 1e4 rotors, 5e4 kicks.
void apply_paper_scale(RunConfig& c);

/// Golden-ratio lattice over the torus.
std::vector<PhasePoint> lattice_seeds(int count);

}  // namespace dyntun

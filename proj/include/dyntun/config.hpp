#pragma once

// Declarative run configuration: one JSON document per run. Unknown keys are
// rejected at every level.

#include "dyntun/core_map.hpp"
#include "dyntun/io.hpp"
#include "dyntun/quantum_engine.hpp"
#include "dyntun/units.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dyntun {

enum class Mode { portrait, area, evolve, sweep, fit, convert_units };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);  // throws ConfigError

struct BasisSettings {
    std::string kind = "auto";  // fixed | comoving | auto
    std::optional<std::int64_t> n_min, n_max;  // fixed basis; suggested from the run length if absent
    std::size_t size = 512;  // co-moving window
    std::size_t lead = 64;
};

struct WindowSettings {
    std::int64_t width = 7;
    std::optional<std::int64_t> t0;  // automatic if absent
    double separation_sigmas = 3.0;
    std::int64_t persistence = 10;
    std::optional<std::int64_t> fit_start;
    /// Fit from max(t0, fraction * t_max) when fit_start is absent. Defaults
    /// to 0 for evolve and 0.5 for sweeps.
    std::optional<double> fit_start_fraction;
    std::optional<std::int64_t> t_max;  // last kick of the fit, run length if absent
    double p_floor = 1e-10;  // the fit ends at the last sample with p >= p_floor
};

struct AreaSettings {
    int grid = 512;
    std::int64_t kicks = 1'000'000;
    int seeds = 8;
};

struct PortraitSettings {
    std::vector<PhasePoint> seeds;  // golden-ratio lattice of `lattice_seeds` points if empty
    int lattice_seeds = 48;
    std::int64_t kicks = 1000;
};

struct SweepPointSpec {
    std::optional<std::string> run_id;
    double k = 0.0, tau = 0.0, eta = 0.0;
    std::optional<double> p_se;
    std::optional<std::int64_t> kicks;
    std::optional<std::size_t> count;
};

struct SweepSettings {
    std::string family = "fixed-tau";  // fixed-tau | fixed-classical
    // fixed-tau: explicit points, or tau/eta with a list of k
    std::vector<SweepPointSpec> points;
    std::optional<double> tau, eta;
    std::vector<double> k;
    // or evenly spaced (k, eta) tuples between the ends of these ranges
    std::vector<double> k_range, eta_range;
    int n_points = 6;
    // fixed-classical
    std::optional<double> k_tilde;
    std::vector<double> eps_abs;
    int eps_sign = -1;
    // per-point spontaneous emission: p_se, else p_se_per_k * k, else the base se model
    std::optional<double> p_se;
    std::optional<double> p_se_per_k;
};

struct FitSettings {
    std::optional<std::filesystem::path> survival;
    std::optional<std::filesystem::path> rates;
    std::optional<std::int64_t> t_start, t_end;
};

struct RunConfig {
    Mode mode = Mode::evolve;
    std::uint64_t seed = 1;
    std::filesystem::path output = "out";
    int workers = 1;
    std::int64_t kicks = 60;
    std::int64_t stride = 1;
    bool paper_scale = false;
    double histogram_floor = 1e-14;

    QuantumParams quantum;
    BasisSettings basis;
    EnsembleSpec ensemble;
    SEModel se;
    WindowSettings window;
    AreaSettings area;
    PortraitSettings portrait;
    SweepSettings sweep;
    FitSettings fit;
    UnitContext units;
    std::optional<double> units_tau;  // convert-units: derive the period from tau

    void validate() const;  // throws ConfigError
};

/// Parses and validates; `mode_hint` fills the mode when the document has none
/// and must agree with it otherwise.
RunConfig parse_config(const Json& j, std::optional<Mode> mode_hint = std::nullopt);
RunConfig load_config(const std::filesystem::path& path, std::optional<Mode> mode_hint = std::nullopt);

/// Fully resolved echo of a configuration, accepted back by parse_config.
Json to_json(const RunConfig& c);

}  // namespace dyntun

#pragma once

// Pseudo-classical map of the kicked accelerator near the principal quantum
// resonance, its period-1 fixed point, phase portraits and the regular-island
// area estimator.

#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace dyntun {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Wraps an angle into [0, 2pi).
double wrap_angle(double x);

struct MapParams {
    double k_tilde = 0.0;   // k * |eps|
    int eps_sign = -1;      // sign of eps = tau - 2pi
    double tau_eta = 0.0;   // gravity drift per kick
    double tau = kTwoPi;    // bookkeeping only
    double eta = 0.0;       // bookkeeping only

    /// Builds the map from quantum parameters: k_tilde = k|tau - 2pi|,
    /// drift = tau * eta.
    static MapParams from_quantum(double k, double tau, double eta);

    /// Throws std::invalid_argument when an invariant is broken.
    void validate() const;

    friend bool operator==(const MapParams&, const MapParams&) = default;
};

struct PhasePoint {
    double theta = 0.0;
    double momentum_j = 0.0;  // unreduced
};

struct FixedPointResult {
    bool exists = false;
    PhasePoint point{};
    double trace = 0.0;
    bool stable = false;
};

struct AreaEstimate {
    double area = 0.0;
    int grid_resolution = 0;
    std::int64_t kicks_used = 0;
    bool converged = false;
    double area_over_hbar = 0.0;
    double area_fine = 0.0;  // estimate at twice the resolution
    double relative_change = 0.0;
};

// One period of the map: free rotation by the current J, then the kick
// evaluated at the rotated angle plus the gravity drift.
//
//   theta' = theta + s J            (mod 2pi)
//   J'     = J + k sin(theta') + s tau_eta
//
// With this ordering the period-1 condition reads sin(theta*) = -s tau_eta / k
// at J* = 0 (mod 2pi), and the Jacobian determinant is exactly one.
PhasePoint map_step(const PhasePoint& p, const MapParams& m);

/// Exact inverse of map_step.
PhasePoint map_step_inverse(const PhasePoint& p, const MapParams& m);

/// Jacobian trace at a point: 2 + s k cos(theta') with theta' the rotated angle.
double jacobian_trace(const PhasePoint& p, const MapParams& m);

FixedPointResult find_period1_fixed_point(const MapParams& m);

struct PortraitPoint {
    int seed_id = 0;
    double theta = 0.0;
    double momentum_j = 0.0;  // reduced mod 2pi
};

/// Iterates every seed `kicks` times and records each iterate (J mod 2pi).
std::vector<PortraitPoint> phase_portrait(const MapParams& m, std::span<const PhasePoint> seeds,
                                          std::int64_t kicks);

/// Torus occupancy grid over [0,2pi) x [0,2pi), row index = theta cell,
/// column index = J cell.
class OccupancyGrid {
public:
    explicit OccupancyGrid(int resolution);

    int resolution() const { return n_; }
    void mark(double theta, double j);
    bool visited(int i, int j) const { return cells_[index(i, j)] != 0; }
    std::int64_t visited_count() const;
    void merge(const OccupancyGrid& other);

    std::pair<int, int> cell_of(double theta, double j) const;

    /// Size of the 4-connected unvisited component containing (i, j) on the
    /// torus; zero when that cell is visited.
    std::int64_t unvisited_component_size(int i, int j) const;

    const std::vector<std::uint8_t>& cells() const { return cells_; }

private:
    std::size_t index(int i, int j) const {
        return static_cast<std::size_t>(i) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(j);
    }

    int n_;
    std::vector<std::uint8_t> cells_;
};

struct AreaOptions {
    int grid_resolution = 512;
    std::int64_t kicks = 1'000'000;  // at grid_resolution; scaled by 4 for the 2N check
    int seeds = 8;
    double eps_abs = 0.0;  // |eps| used for area_over_hbar; 0 leaves it at 0
    int workers = 1;
};

/// Fills an occupancy grid from trajectories launched in the chaotic sea and
/// flood-fills the unvisited region around the stable fixed point. Reports
/// A(N) and checks it against A(2N).
AreaEstimate estimate_island_area(const MapParams& m, const AreaOptions& opts);

/// Island area at a single resolution, and the grid it was measured on.
struct SingleArea {
    double area = 0.0;
    std::int64_t kicks_used = 0;
    OccupancyGrid grid{1};
};
SingleArea island_area_at(const MapParams& m, int resolution, std::int64_t kicks, int seeds, int workers = 1);

/// J = n|eps| + s [pi + tau (beta + j eta + eta/2)].
///
/// The printed form of this relation has a "j n" product inside the bracket;
/// it is read here as "j eta", the gravity drift of quasimomentum, which is
/// what makes J(j+1) - J(j) = s tau eta.
double momentum_to_map_coordinate(std::int64_t n, double beta, std::int64_t j, const MapParams& m);

}  // namespace dyntun

#include "dyntun/core_map.hpp"

#include "dyntun/errors.hpp"
#include "dyntun/parallel.hpp"

#include <cmath>
#include <stdexcept>

namespace dyntun {

double wrap_angle(double x) {
    if (x >= 0.0 && x < kTwoPi) return x;
    double r = x - kTwoPi * std::floor(x / kTwoPi);
    // rounding can land exactly on 2pi (or a hair below zero)
    if (r >= kTwoPi || r < 0.0) r = 0.0;
    return r;
}

MapParams MapParams::from_quantum(double k, double tau, double eta) {
    const double eps = tau - kTwoPi;
    MapParams m;
    m.k_tilde = k * std::abs(eps);
    m.eps_sign = eps < 0.0 ? -1 : 1;
    m.tau_eta = tau * eta;
    m.tau = tau;
    m.eta = eta;
    return m;
}

void MapParams::validate() const {
    if (!(k_tilde >= 0.0) || !std::isfinite(k_tilde)) throw std::invalid_argument("k_tilde must be finite and >= 0");
    if (eps_sign != 1 && eps_sign != -1) throw std::invalid_argument("eps_sign must be +1 or -1");
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
    if (!std::isfinite(tau_eta)) throw std::invalid_argument("tau_eta must be finite");
}

PhasePoint map_step(const PhasePoint& p, const MapParams& m) {
    const double s = m.eps_sign;
    const double theta = wrap_angle(p.theta + s * p.momentum_j);
    const double j = p.momentum_j + m.k_tilde * std::sin(theta) + s * m.tau_eta;
    return {theta, j};
}

PhasePoint map_step_inverse(const PhasePoint& p, const MapParams& m) {
    const double s = m.eps_sign;
    const double j = p.momentum_j - m.k_tilde * std::sin(p.theta) - s * m.tau_eta;
    return {wrap_angle(p.theta - s * j), j};
}

double jacobian_trace(const PhasePoint& p, const MapParams& m) {
    const double s = m.eps_sign;
    const double theta = p.theta + s * p.momentum_j;
    return 2.0 + s * m.k_tilde * std::cos(theta);
}

FixedPointResult find_period1_fixed_point(const MapParams& m) {
    FixedPointResult out;
    if (m.k_tilde <= 0.0) return out;
    const double s = m.eps_sign;
    const double sine = -s * m.tau_eta / m.k_tilde;
    if (std::abs(sine) > 1.0) return out;

    const double a = std::asin(sine);
    const double roots[2] = {wrap_angle(a), wrap_angle(std::numbers::pi - a)};
    double best_theta = roots[0];
    double best_trace = 2.0 + s * m.k_tilde * std::cos(roots[0]);
    for (double r : {roots[1]}) {
        const double tr = 2.0 + s * m.k_tilde * std::cos(r);
        if (std::abs(tr) < std::abs(best_trace) || (std::abs(tr) == std::abs(best_trace) && r < best_theta)) {
            best_theta = r;
            best_trace = tr;
        }
    }
    out.exists = true;
    out.point = {best_theta, 0.0};
    out.trace = best_trace;
    out.stable = std::abs(best_trace) < 2.0;
    return out;
}

std::vector<PortraitPoint> phase_portrait(const MapParams& m, std::span<const PhasePoint> seeds,
                                          std::int64_t kicks) {
    if (kicks < 1) throw std::invalid_argument("phase_portrait: kicks must be >= 1");
    std::vector<PortraitPoint> out;
    out.reserve(seeds.size() * static_cast<std::size_t>(kicks));
    for (std::size_t id = 0; id < seeds.size(); ++id) {
        PhasePoint p = seeds[id];
        for (std::int64_t t = 0; t < kicks; ++t) {
            p = map_step(p, m);
            out.push_back({static_cast<int>(id), p.theta, wrap_angle(p.momentum_j)});
        }
    }
    return out;
}

OccupancyGrid::OccupancyGrid(int resolution) : n_(resolution) {
    if (resolution < 1) throw std::invalid_argument("grid resolution must be positive");
    cells_.assign(static_cast<std::size_t>(resolution) * static_cast<std::size_t>(resolution), 0);
}

std::pair<int, int> OccupancyGrid::cell_of(double theta, double j) const {
    const double scale = n_ / kTwoPi;
    int i = static_cast<int>(wrap_angle(theta) * scale);
    int c = static_cast<int>(wrap_angle(j) * scale);
    if (i >= n_) i = n_ - 1;
    if (c >= n_) c = n_ - 1;
    return {i, c};
}

void OccupancyGrid::mark(double theta, double j) {
    const auto [i, c] = cell_of(theta, j);
    cells_[index(i, c)] = 1;
}

std::int64_t OccupancyGrid::visited_count() const {
    std::int64_t n = 0;
    for (auto v : cells_) n += v;
    return n;
}

void OccupancyGrid::merge(const OccupancyGrid& other) {
    if (other.n_ != n_) throw std::invalid_argument("cannot merge grids of different resolution");
    for (std::size_t i = 0; i < cells_.size(); ++i) cells_[i] |= other.cells_[i];
}

std::int64_t OccupancyGrid::unvisited_component_size(int i0, int j0) const {
    if (visited(i0, j0)) return 0;
    std::vector<std::uint8_t> seen(cells_.size(), 0);
    std::vector<std::pair<int, int>> stack{{i0, j0}};
    seen[index(i0, j0)] = 1;
    std::int64_t count = 0;
    while (!stack.empty()) {
        const auto [i, j] = stack.back();
        stack.pop_back();
        ++count;
        const std::pair<int, int> nbrs[4] = {
            {(i + 1) % n_, j}, {(i + n_ - 1) % n_, j}, {i, (j + 1) % n_}, {i, (j + n_ - 1) % n_}};
        for (const auto& [a, b] : nbrs) {
            const auto idx = index(a, b);
            if (!seen[idx] && !cells_[idx]) {
                seen[idx] = 1;
                stack.emplace_back(a, b);
            }
        }
    }
    return count;
}

namespace {

// Share of a coarse grid one orbit covers: near 0 on a regular curve, large
// in the chaotic sea.
double probe_coverage(PhasePoint p, const MapParams& m) {
    constexpr int n = 64;
    constexpr std::int64_t kicks = 20'000;
    OccupancyGrid g(n);
    for (std::int64_t t = 0; t < kicks; ++t) {
        p = map_step(p, m);
        g.mark(p.theta, p.momentum_j);
    }
    return static_cast<double>(g.visited_count()) / (n * n);
}

// Launch point in the chaotic sea: opposite the island centre unless that
// orbit is regular, else the first chaotic point of a golden-ratio lattice.
PhasePoint chaotic_start(const FixedPointResult& fp, const MapParams& m) {
    constexpr double min_coverage = 0.25;
    const PhasePoint opposite{wrap_angle(fp.point.theta + std::numbers::pi), std::numbers::pi};
    if (probe_coverage(opposite, m) >= min_coverage) return opposite;
    const double phi = 0.5 * (1.0 + std::sqrt(5.0));
    for (int i = 0; i < 256; ++i) {
        const PhasePoint c{kTwoPi * ((i + 0.5) / 256.0), kTwoPi * std::fmod((i + 0.5) / phi, 1.0)};
        if (probe_coverage(c, m) >= min_coverage) return c;
    }
    return opposite;
}

std::vector<PhasePoint> chaotic_seeds(const FixedPointResult& fp, const MapParams& m, int count) {
    const auto start = chaotic_start(fp, m);
    std::vector<PhasePoint> seeds;
    seeds.reserve(static_cast<std::size_t>(count));
    for (int s = 0; s < count; ++s) {
        const double jitter = 1e-3 * (s + 1);
        seeds.push_back({wrap_angle(start.theta + jitter), start.momentum_j + 0.5 * jitter});
    }
    return seeds;
}

}  // namespace

SingleArea island_area_at(const MapParams& m, int resolution, std::int64_t kicks, int seeds, int workers) {
    SingleArea out;
    out.grid = OccupancyGrid(resolution);
    const auto fp = find_period1_fixed_point(m);
    if (!fp.exists || !fp.stable) return out;
    if (seeds < 1) throw std::invalid_argument("need at least one chaotic seed");

    const auto starts = chaotic_seeds(fp, m, seeds);
    const std::int64_t per_seed = kicks / seeds;
    std::vector<OccupancyGrid> grids(starts.size(), OccupancyGrid(resolution));
    parallel_for(starts.size(), workers, [&](std::size_t s) {
        PhasePoint p = starts[s];
        auto& g = grids[s];
        for (std::int64_t t = 0; t < per_seed; ++t) {
            p = map_step(p, m);
            g.mark(p.theta, p.momentum_j);
        }
    });
    // OR-merge in seed order; commutative, so schedule-independent.
    for (const auto& g : grids) out.grid.merge(g);
    out.kicks_used = per_seed * seeds;

    const auto total = static_cast<std::int64_t>(resolution) * resolution;
    if (out.grid.visited_count() < total / 20) {
        throw NumericalError("no chaotic trajectory escaped: the map looks fully regular");
    }
    const auto [ci, cj] = out.grid.cell_of(fp.point.theta, fp.point.momentum_j);
    const auto hole = out.grid.unvisited_component_size(ci, cj);
    const double cell = (kTwoPi / resolution) * (kTwoPi / resolution);
    out.area = static_cast<double>(hole) * cell;
    return out;
}

AreaEstimate estimate_island_area(const MapParams& m, const AreaOptions& opts) {
    m.validate();
    if (opts.grid_resolution < 64) throw std::invalid_argument("grid_resolution must be >= 64");
    if (opts.kicks < 100'000) throw std::invalid_argument("area estimate needs at least 1e5 kicks");

    AreaEstimate est;
    est.grid_resolution = opts.grid_resolution;
    const auto coarse = island_area_at(m, opts.grid_resolution, opts.kicks, opts.seeds, opts.workers);
    est.area = coarse.area;
    est.kicks_used = coarse.kicks_used;
    if (est.area > 0.0) {
        // Same visits per cell on the finer grid.
        const auto fine = island_area_at(m, 2 * opts.grid_resolution, 4 * opts.kicks, opts.seeds, opts.workers);
        est.area_fine = fine.area;
        est.relative_change = fine.area > 0.0 ? std::abs(coarse.area - fine.area) / fine.area : 1.0;
        est.converged = est.relative_change < 0.02;
    } else {
        est.converged = true;
    }
    if (opts.eps_abs > 0.0) est.area_over_hbar = est.area / opts.eps_abs;
    return est;
}

double momentum_to_map_coordinate(std::int64_t n, double beta, std::int64_t j, const MapParams& m) {
    const double eps_abs = std::abs(m.tau - kTwoPi);
    const double s = m.eps_sign;
    return static_cast<double>(n) * eps_abs +
           s * (std::numbers::pi + m.tau * (beta + static_cast<double>(j) * m.eta + 0.5 * m.eta));
}

}  // namespace dyntun

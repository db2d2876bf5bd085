#pragma once

// Plain-text artifacts: CSV tables with a header row, JSON documents.

#include "dyntun/analysis.hpp"
#include "dyntun/core_map.hpp"
#include "dyntun/quantum_engine.hpp"

#include <json.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dyntun {

using Json = nlohmann::ordered_json;

/// Shortest round-trip decimal form; locale-independent.
std::string format_number(double v);

/// Writes through a temporary file and renames, so readers never see a
/// half-written artifact.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const;  // throws if missing
};
CsvTable read_csv(const std::filesystem::path& path);

std::string portrait_csv(std::span<const PortraitPoint> points);
std::string occupancy_csv(const OccupancyGrid& grid);
/// Bins below `floor` are omitted.
std::string histogram_csv(std::span<const MomentumHistogram> series, double floor);
std::string survival_csv(const SurvivalSeries& s);
SurvivalSeries parse_survival_csv(const CsvTable& t);

struct RateRow {
    std::string run_id;
    double k = 0.0, tau = 0.0, eta = 0.0, p_se = 0.0;
    double area = 0.0, eps_abs = 0.0, a_over_hbar = 0.0;
    double gamma = 0.0, gamma_err = 0.0;
};
std::string rates_csv(std::span<const RateRow> rows);
std::vector<RateRow> parse_rates_csv(const CsvTable& t);

Json to_json(const DecayFitResult& f);
Json to_json(const ScalingFitResult& f, std::span<const RateRow> points);
Json to_json(const AreaEstimate& a, const MapParams& m);
Json to_json(const FixedPointResult& f);

}  // namespace dyntun

#pragma once

#include "dtran/cell_config.h"
#include "dtran/radio_model.h"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace dtran {

using SiteId = std::uint32_t;

struct Site
{
    SiteId id = 0;
    double x_m = 0.0;
    double y_m = 0.0;

    bool operator==(const Site&) const = default;
};

struct CellSpec
{
    CellId id = 0;
    SiteId site_id = 0;
    double azimuth_deg = 0.0;
    std::vector<std::string> bands{"A", "B"};
    CellConfig config;

    bool operator==(const CellSpec&) const = default;
};

struct Area
{
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    bool contains(double x, double y) const
    {
        return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
    }
    bool operator==(const Area&) const = default;
};

enum class Mobility
{
    random_waypoint,
    stationary,
};

/// Fixed initial UE position; overrides the seeded uniform placement.
struct UePlacement
{
    double x_m = 0.0;
    double y_m = 0.0;

    bool operator==(const UePlacement&) const = default;
};

struct Topology
{
    std::vector<Site> sites;
    std::vector<CellSpec> cells;
    Area area;
    std::size_t ue_count = 1;
    std::uint64_t seed = 0;
    Mobility mobility = Mobility::random_waypoint;
    std::vector<UePlacement> ue_placements;
    radio::AntennaSpec antenna;
    bool shadowing = false;
    std::uint64_t shadowing_seed = 7;

    const CellSpec* find_cell(CellId id) const;
    const Site* find_site(SiteId id) const;
    ConfigMap config_map() const;

    bool operator==(const Topology&) const = default;
};

class TopologyError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Throws TopologyError on duplicate cell ids, dangling site references,
/// out-of-domain configs, an empty area, or ue_count == 0 (the last check
/// can be waived for engine-internal worlds).
void validate(const Topology& topo, bool require_ues = true);

/// 7-site hex grid, 500 m inter-site distance, 3 sectors per site, 50 UEs in
/// a 2 km x 2 km area centred on the origin.
Topology default_desk_topology(std::uint64_t seed = 42);

/// Compact instance: `site_count` sites on a line, 3 sectors each.
Topology line_topology(std::size_t site_count, std::size_t ue_count, std::uint64_t seed);

/// Two single-sector sites 800 m apart, antennas pointing away from each
/// other, primary band only, 12 stationary UEs mirrored across x = 0.
/// Both antennas start steeply down-tilted (12 deg). The small optimizer
/// instance.
Topology two_cell_topology();

void to_json(nlohmann::json& j, const Topology& t);
void from_json(const nlohmann::json& j, Topology& t);

/// Parses and validates; throws TopologyError with the file name on failure.
Topology load_topology_file(const std::filesystem::path& path);
void save_topology_file(const Topology& topo, const std::filesystem::path& path);

} // namespace dtran

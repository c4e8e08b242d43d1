#include "dtran/topology.h"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace dtran {

namespace {

const char*
mobility_name(Mobility m)
{
    return m == Mobility::stationary ? "stationary" : "random_waypoint";
}

Mobility
mobility_from_name(const std::string& s)
{
    if (s == "random_waypoint")
    {
        return Mobility::random_waypoint;
    }
    if (s == "stationary")
    {
        return Mobility::stationary;
    }
    throw TopologyError("unknown mobility model '" + s + "'");
}

double
round_mm(double v)
{
    return std::round(v * 1000.0) / 1000.0;
}

void
add_sectors(Topology& topo, SiteId site)
{
    for (int sector = 0; sector < 3; ++sector)
    {
        CellSpec cell;
        cell.id = static_cast<CellId>(site * 3 + sector);
        cell.site_id = site;
        cell.azimuth_deg = 120.0 * sector;
        topo.cells.push_back(cell);
    }
}

} // namespace

const CellSpec*
Topology::find_cell(CellId id) const
{
    for (const auto& c : cells)
    {
        if (c.id == id)
        {
            return &c;
        }
    }
    return nullptr;
}

const Site*
Topology::find_site(SiteId id) const
{
    for (const auto& s : sites)
    {
        if (s.id == id)
        {
            return &s;
        }
    }
    return nullptr;
}

ConfigMap
Topology::config_map() const
{
    ConfigMap m;
    for (const auto& c : cells)
    {
        m[c.id] = c.config;
    }
    return m;
}

void
validate(const Topology& topo, bool require_ues)
{
    std::set<SiteId> site_ids;
    for (const auto& s : topo.sites)
    {
        if (!site_ids.insert(s.id).second)
        {
            throw TopologyError("duplicate site id " + std::to_string(s.id));
        }
    }
    std::set<CellId> cell_ids;
    for (const auto& c : topo.cells)
    {
        if (!cell_ids.insert(c.id).second)
        {
            throw TopologyError("duplicate cell id " + std::to_string(c.id));
        }
        if (!site_ids.count(c.site_id))
        {
            throw TopologyError("cell " + std::to_string(c.id) + " references unknown site " +
                                std::to_string(c.site_id));
        }
        if (auto bad = first_out_of_range_field(c.config))
        {
            throw TopologyError("cell " + std::to_string(c.id) + " field " + *bad +
                                " out of range");
        }
        for (const auto& b : c.bands)
        {
            try
            {
                radio::band_by_id(b);
            }
            catch (const std::out_of_range&)
            {
                throw TopologyError("cell " + std::to_string(c.id) + " uses unknown band " + b);
            }
        }
    }
    if (require_ues && topo.ue_count < 1)
    {
        throw TopologyError("ue_count must be >= 1");
    }
    if (!(topo.area.x_max > topo.area.x_min) || !(topo.area.y_max > topo.area.y_min))
    {
        throw TopologyError("area must have positive extent");
    }
    if (!topo.ue_placements.empty() && topo.ue_placements.size() != topo.ue_count)
    {
        throw TopologyError("ue_placements must list exactly ue_count positions");
    }
    for (const auto& p : topo.ue_placements)
    {
        if (!topo.area.contains(p.x_m, p.y_m))
        {
            throw TopologyError("ue placement outside area");
        }
    }
}

Topology
default_desk_topology(std::uint64_t seed)
{
    Topology topo;
    topo.sites.push_back({0, 0.0, 0.0});
    for (int k = 0; k < 6; ++k)
    {
        const double a = std::numbers::pi / 3.0 * k + std::numbers::pi / 6.0;
        topo.sites.push_back({static_cast<SiteId>(k + 1),
                              round_mm(500.0 * std::cos(a)),
                              round_mm(500.0 * std::sin(a))});
    }
    for (const auto& s : topo.sites)
    {
        add_sectors(topo, s.id);
    }
    topo.area = {-1000.0, -1000.0, 1000.0, 1000.0};
    topo.ue_count = 50;
    topo.seed = seed;
    return topo;
}

Topology
line_topology(std::size_t site_count, std::size_t ue_count, std::uint64_t seed)
{
    Topology topo;
    for (std::size_t i = 0; i < site_count; ++i)
    {
        topo.sites.push_back({static_cast<SiteId>(i), 500.0 * static_cast<double>(i), 0.0});
        add_sectors(topo, static_cast<SiteId>(i));
    }
    topo.area = {-400.0, -400.0, 500.0 * static_cast<double>(site_count - 1) + 400.0, 400.0};
    topo.ue_count = ue_count;
    topo.seed = seed;
    return topo;
}

Topology
two_cell_topology()
{
    Topology topo;
    topo.sites = {{1, -400.0, 0.0}, {2, 400.0, 0.0}};
    CellSpec west;
    west.id = 1;
    west.site_id = 1;
    west.azimuth_deg = 270.0;
    west.bands = {"A"};
    west.config.tilt_deg = 12;
    CellSpec east = west;
    east.id = 2;
    east.site_id = 2;
    east.azimuth_deg = 90.0;
    topo.cells = {west, east};
    topo.area = {-1500.0, -500.0, 1500.0, 500.0};
    topo.mobility = Mobility::stationary;
    for (double u : {350.0, 1050.0})
    {
        for (double y : {-250.0, 0.0, 250.0})
        {
            topo.ue_placements.push_back({-400.0 - u, y});
            topo.ue_placements.push_back({400.0 + u, y});
        }
    }
    topo.ue_count = topo.ue_placements.size();
    topo.seed = 5;
    return topo;
}

void
to_json(nlohmann::json& j, const Topology& t)
{
    j = nlohmann::json::object();
    j["schema_version"] = 1;
    auto& sites = j["sites"] = nlohmann::json::array();
    for (const auto& s : t.sites)
    {
        sites.push_back({{"id", s.id}, {"x_m", s.x_m}, {"y_m", s.y_m}});
    }
    auto& cells = j["cells"] = nlohmann::json::array();
    for (const auto& c : t.cells)
    {
        cells.push_back({{"id", c.id},
                         {"site_id", c.site_id},
                         {"azimuth_deg", c.azimuth_deg},
                         {"bands", c.bands},
                         {"config", c.config}});
    }
    j["area"] = {{"x_min", t.area.x_min},
                 {"y_min", t.area.y_min},
                 {"x_max", t.area.x_max},
                 {"y_max", t.area.y_max}};
    j["ue_count"] = t.ue_count;
    j["seed"] = t.seed;
    j["mobility"] = mobility_name(t.mobility);
    if (!t.ue_placements.empty())
    {
        auto& ues = j["ue_placements"] = nlohmann::json::array();
        for (const auto& p : t.ue_placements)
        {
            ues.push_back({{"x_m", p.x_m}, {"y_m", p.y_m}});
        }
    }
    j["antenna"] = {{"max_gain_dbi", t.antenna.max_gain_dbi},
                    {"theta_3db_deg", t.antenna.theta_3db_deg},
                    {"phi_3db_deg", t.antenna.phi_3db_deg},
                    {"sla_v_db", t.antenna.sla_v_db},
                    {"am_h_db", t.antenna.am_h_db},
                    {"height_m", t.antenna.height_m}};
    j["shadowing"] = t.shadowing;
    j["shadowing_seed"] = t.shadowing_seed;
}

void
from_json(const nlohmann::json& j, Topology& t)
{
    try
    {
        t = Topology{};
        if (j.contains("schema_version") && j.at("schema_version").get<int>() != 1)
        {
            throw TopologyError("unsupported topology schema_version");
        }
        for (const auto& s : j.at("sites"))
        {
            t.sites.push_back(
                {s.at("id").get<SiteId>(), s.at("x_m").get<double>(), s.at("y_m").get<double>()});
        }
        for (const auto& c : j.at("cells"))
        {
            CellSpec cell;
            cell.id = c.at("id").get<CellId>();
            cell.site_id = c.at("site_id").get<SiteId>();
            cell.azimuth_deg = c.at("azimuth_deg").get<double>();
            if (c.contains("bands"))
            {
                cell.bands = c.at("bands").get<std::vector<std::string>>();
            }
            if (c.contains("config"))
            {
                cell.config = c.at("config").get<CellConfig>();
            }
            t.cells.push_back(cell);
        }
        const auto& a = j.at("area");
        t.area = {a.at("x_min").get<double>(),
                  a.at("y_min").get<double>(),
                  a.at("x_max").get<double>(),
                  a.at("y_max").get<double>()};
        t.ue_count = j.at("ue_count").get<std::size_t>();
        t.seed = j.value("seed", std::uint64_t{0});
        t.mobility = mobility_from_name(j.value("mobility", std::string("random_waypoint")));
        if (j.contains("ue_placements"))
        {
            for (const auto& p : j.at("ue_placements"))
            {
                t.ue_placements.push_back({p.at("x_m").get<double>(), p.at("y_m").get<double>()});
            }
        }
        if (j.contains("antenna"))
        {
            const auto& an = j.at("antenna");
            radio::AntennaSpec d;
            t.antenna.max_gain_dbi = an.value("max_gain_dbi", d.max_gain_dbi);
            t.antenna.theta_3db_deg = an.value("theta_3db_deg", d.theta_3db_deg);
            t.antenna.phi_3db_deg = an.value("phi_3db_deg", d.phi_3db_deg);
            t.antenna.sla_v_db = an.value("sla_v_db", d.sla_v_db);
            t.antenna.am_h_db = an.value("am_h_db", d.am_h_db);
            t.antenna.height_m = an.value("height_m", d.height_m);
        }
        t.shadowing = j.value("shadowing", false);
        t.shadowing_seed = j.value("shadowing_seed", std::uint64_t{7});
    }
    catch (const nlohmann::json::exception& e)
    {
        throw TopologyError(std::string("malformed topology: ") + e.what());
    }
    catch (const std::invalid_argument& e)
    {
        throw TopologyError(std::string("malformed topology: ") + e.what());
    }
}

Topology
load_topology_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
    {
        throw TopologyError("cannot open topology file " + path.string());
    }
    Topology topo;
    try
    {
        topo = nlohmann::json::parse(in).get<Topology>();
        validate(topo);
    }
    catch (const nlohmann::json::exception& e)
    {
        throw TopologyError(path.string() + ": " + e.what());
    }
    catch (const TopologyError& e)
    {
        throw TopologyError(path.string() + ": " + e.what());
    }
    return topo;
}

void
save_topology_file(const Topology& topo, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
    {
        throw TopologyError("cannot write topology file " + path.string());
    }
    out << nlohmann::json(topo).dump(2) << '\n';
}

} // namespace dtran

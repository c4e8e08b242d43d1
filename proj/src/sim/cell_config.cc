#include "dtran/cell_config.h"

#include <algorithm>
#include <stdexcept>

namespace dtran {

namespace {

std::vector<int>
int_range(int lo, int hi, int step)
{
    std::vector<int> v;
    for (int x = lo; x <= hi; x += step)
    {
        v.push_back(x);
    }
    return v;
}

const std::array<ParamDomain, 5>&
domains()
{
    static const std::array<ParamDomain, 5> table{{
        {CellParam::tilt, "tilt_deg", int_range(0, 15, 1)},
        {CellParam::tx_power, "tx_power_dbm", int_range(30, 46, 2)},
        {CellParam::hysteresis, "a3_hysteresis_db", int_range(0, 10, 1)},
        {CellParam::ttt, "ttt_ms", {40, 80, 160, 320, 640}},
        {CellParam::ca, "ca_enabled", {0, 1}},
    }};
    return table;
}

bool
in_domain(CellParam p, int value)
{
    const auto& v = param_domain(p).values;
    return std::find(v.begin(), v.end(), value) != v.end();
}

int
require_int(const nlohmann::json& j, const char* field)
{
    if (!j.contains(field))
    {
        throw std::invalid_argument(std::string("missing field ") + field);
    }
    const auto& v = j.at(field);
    if (!v.is_number_integer())
    {
        throw std::invalid_argument(std::string("field ") + field + " must be an integer");
    }
    return v.get<int>();
}

} // namespace

const ParamDomain&
param_domain(CellParam p)
{
    return domains()[static_cast<std::size_t>(p)];
}

const char*
param_field(CellParam p)
{
    return param_domain(p).field;
}

std::optional<CellParam>
param_from_field(const std::string& field)
{
    for (const auto& d : domains())
    {
        if (field == d.field)
        {
            return d.param;
        }
    }
    return std::nullopt;
}

int
get_param(const CellConfig& c, CellParam p)
{
    switch (p)
    {
    case CellParam::tilt:
        return c.tilt_deg;
    case CellParam::tx_power:
        return c.tx_power_dbm;
    case CellParam::hysteresis:
        return c.a3_hysteresis_db;
    case CellParam::ttt:
        return c.ttt_ms;
    case CellParam::ca:
        return c.ca_enabled ? 1 : 0;
    }
    return 0;
}

void
set_param(CellConfig& c, CellParam p, int value)
{
    switch (p)
    {
    case CellParam::tilt:
        c.tilt_deg = value;
        break;
    case CellParam::tx_power:
        c.tx_power_dbm = value;
        break;
    case CellParam::hysteresis:
        c.a3_hysteresis_db = value;
        break;
    case CellParam::ttt:
        c.ttt_ms = value;
        break;
    case CellParam::ca:
        c.ca_enabled = value != 0;
        break;
    }
}

bool
step_param(CellConfig& c, CellParam p, int direction)
{
    if (p == CellParam::ca)
    {
        c.ca_enabled = !c.ca_enabled;
        return true;
    }
    const auto& values = param_domain(p).values;
    const int current = get_param(c, p);
    auto it = std::lower_bound(values.begin(), values.end(), current);
    std::ptrdiff_t idx = it - values.begin();
    if (it == values.end() || *it != current)
    {
        // Off-lattice value: snap to the nearest in-domain neighbour first.
        idx = std::clamp<std::ptrdiff_t>(direction > 0 ? idx : idx - 1,
                                         0,
                                         static_cast<std::ptrdiff_t>(values.size()) - 1);
        set_param(c, p, values[static_cast<std::size_t>(idx)]);
        return true;
    }
    const std::ptrdiff_t next =
        std::clamp<std::ptrdiff_t>(idx + (direction > 0 ? 1 : -1),
                                   0,
                                   static_cast<std::ptrdiff_t>(values.size()) - 1);
    if (next == idx)
    {
        return false;
    }
    set_param(c, p, values[static_cast<std::size_t>(next)]);
    return true;
}

std::optional<std::string>
first_out_of_range_field(const CellConfig& c)
{
    for (const auto& d : domains())
    {
        if (!in_domain(d.param, get_param(c, d.param)))
        {
            return std::string(d.field);
        }
    }
    return std::nullopt;
}

nlohmann::json
parameter_domains_json()
{
    nlohmann::json out = nlohmann::json::object();
    for (const auto& d : domains())
    {
        nlohmann::json entry;
        if (d.param == CellParam::ca)
        {
            entry["type"] = "boolean";
        }
        else if (d.param == CellParam::ttt)
        {
            entry["type"] = "enum";
            entry["values"] = d.values;
        }
        else
        {
            entry["type"] = "integer";
            entry["min"] = d.values.front();
            entry["max"] = d.values.back();
            entry["step"] = d.values[1] - d.values[0];
        }
        out[d.field] = entry;
    }
    return out;
}

void
to_json(nlohmann::json& j, const CellConfig& c)
{
    j = nlohmann::json{{"tilt_deg", c.tilt_deg},
                       {"tx_power_dbm", c.tx_power_dbm},
                       {"a3_hysteresis_db", c.a3_hysteresis_db},
                       {"ttt_ms", c.ttt_ms},
                       {"ca_enabled", c.ca_enabled}};
}

void
from_json(const nlohmann::json& j, CellConfig& c)
{
    if (!j.is_object())
    {
        throw std::invalid_argument("cell config must be an object");
    }
    c.tilt_deg = require_int(j, "tilt_deg");
    c.tx_power_dbm = require_int(j, "tx_power_dbm");
    c.a3_hysteresis_db = require_int(j, "a3_hysteresis_db");
    c.ttt_ms = require_int(j, "ttt_ms");
    if (!j.contains("ca_enabled") || !j.at("ca_enabled").is_boolean())
    {
        throw std::invalid_argument("field ca_enabled must be a boolean");
    }
    c.ca_enabled = j.at("ca_enabled").get<bool>();
}

nlohmann::json
change_set_to_json(const ChangeSet& changes)
{
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& ch : changes)
    {
        arr.push_back({{"cell_id", ch.cell_id}, {"config", ch.config}});
    }
    return arr;
}

ChangeSet
change_set_from_json(const nlohmann::json& j)
{
    if (!j.is_array())
    {
        throw std::invalid_argument("changes must be an array");
    }
    ChangeSet out;
    for (const auto& e : j)
    {
        if (!e.is_object() || !e.contains("cell_id") || !e.at("cell_id").is_number_unsigned())
        {
            throw std::invalid_argument("change entry needs an unsigned cell_id");
        }
        CellChange ch;
        ch.cell_id = e.at("cell_id").get<CellId>();
        if (!e.contains("config"))
        {
            throw std::invalid_argument("change entry needs a config");
        }
        ch.config = e.at("config").get<CellConfig>();
        out.push_back(ch);
    }
    return out;
}

ChangeSet
diff_configs(const ConfigMap& from, const ConfigMap& to)
{
    ChangeSet out;
    for (const auto& [id, cfg] : to)
    {
        auto it = from.find(id);
        if (it == from.end() || it->second != cfg)
        {
            out.push_back({id, cfg});
        }
    }
    return out;
}

} // namespace dtran

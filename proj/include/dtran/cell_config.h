#pragma once

#include "dtran/radio_model.h"

#include <array>
#include <compare>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace dtran {

/// The controllable parameter vector of one cell.
struct CellConfig
{
    int tilt_deg = 2;
    int tx_power_dbm = 40;
    int a3_hysteresis_db = 3;
    int ttt_ms = 160;
    bool ca_enabled = false;

    auto operator<=>(const CellConfig&) const = default;
};

enum class CellParam
{
    tilt,
    tx_power,
    hysteresis,
    ttt,
    ca,
};

inline constexpr std::array<CellParam, 5> kAllCellParams{
    CellParam::tilt, CellParam::tx_power, CellParam::hysteresis, CellParam::ttt, CellParam::ca};

/// Integer lattice of one parameter (CA is {0, 1}).
struct ParamDomain
{
    CellParam param;
    const char* field;
    std::vector<int> values;
};

const ParamDomain& param_domain(CellParam p);
const char* param_field(CellParam p);
std::optional<CellParam> param_from_field(const std::string& field);

int get_param(const CellConfig& c, CellParam p);
void set_param(CellConfig& c, CellParam p, int value);

/// Moves one lattice step in `direction` (+1/-1), saturating at the domain
/// bounds. CA toggles regardless of direction. Returns false if nothing moved.
bool step_param(CellConfig& c, CellParam p, int direction);

/// Name of the first field outside its domain, if any.
std::optional<std::string> first_out_of_range_field(const CellConfig& c);

inline constexpr std::size_t kLatticePointsPerCell = 16 * 9 * 11 * 5 * 2;

/// Machine-readable domain table shared with the operator console.
nlohmann::json parameter_domains_json();

void to_json(nlohmann::json& j, const CellConfig& c);
/// Strict parse: every field required, integer types enforced. Domain checks
/// are separate so callers can report the offending field.
void from_json(const nlohmann::json& j, CellConfig& c);

struct CellChange
{
    CellId cell_id = 0;
    CellConfig config;

    bool operator==(const CellChange&) const = default;
};

using ChangeSet = std::vector<CellChange>;
using ConfigMap = std::map<CellId, CellConfig>;

nlohmann::json change_set_to_json(const ChangeSet& changes);
ChangeSet change_set_from_json(const nlohmann::json& j);

/// Cells whose config differs between `from` and `to`, expressed as the
/// changes needed to go from one to the other.
ChangeSet diff_configs(const ConfigMap& from, const ConfigMap& to);

} // namespace dtran

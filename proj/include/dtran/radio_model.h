#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace dtran {

using CellId = std::uint32_t;

namespace radio {

/// A carrier the network can transmit on.
struct BandSpec
{
    std::string id;
    double center_freq_mhz = 0.0;
    double bandwidth_hz = 0.0;
    double pathloss_offset_db = 0.0;
};

/// Sector antenna with a separable vertical/horizontal parabolic pattern.
struct AntennaSpec
{
    double max_gain_dbi = 14.0;
    double theta_3db_deg = 10.0;
    double phi_3db_deg = 65.0;
    double sla_v_db = 20.0;
    double am_h_db = 25.0;
    double height_m = 25.0;

    bool operator==(const AntennaSpec&) const = default;
};

struct LinkBudget
{
    double rsrp_dbm = 0.0;
    double sinr_db = 0.0;
    CellId serving_cell = 0;
};

inline constexpr double kUeHeightM = 1.5;
inline constexpr double kNoiseFigureDb = 7.0;
inline constexpr double kThermalNoiseDbmPerHz = -174.0;
inline constexpr double kMaxSpectralEfficiency = 7.8;
inline constexpr double kMinDistanceKm = 0.01;
inline constexpr double kShadowingSigmaDb = 8.0;
inline constexpr double kShadowingGridM = 25.0;

/// Primary band "A": 10 MHz, no offset.
const BandSpec& band_a();
/// Carrier-aggregation band "B": 20 MHz, +3 dB path-loss offset.
const BandSpec& band_b();
/// Both bands, primary first.
std::span<const BandSpec> default_band_catalog();
/// Looks up a band by id; throws std::out_of_range for unknown ids.
const BandSpec& band_by_id(const std::string& id);

double dbm_to_mw(double dbm);
double mw_to_dbm(double mw);

/// Macro-cell log-distance path loss. Distances below 10 m are clamped.
double path_loss_db(double distance_km, const BandSpec& band);

/// Wraps an angle into [-180, 180].
double wrap_degrees(double deg);

/// Depression angle from the antenna to a UE at the given horizontal
/// distance, in degrees (positive = below the horizon).
double elevation_deg(double horizontal_distance_m, const AntennaSpec& ant);

/// Compass bearing from (x0,y0) to (x1,y1): 0 deg = +y, clockwise.
double bearing_deg(double x0, double y0, double x1, double y1);

/// Antenna pattern attenuation relative to boresight (always <= 0).
double antenna_attenuation_db(double elev_deg,
                              double azim_deg,
                              double tilt_deg,
                              double boresight_azim_deg,
                              const AntennaSpec& ant);

double rsrp_dbm(double tx_power_dbm, double pl_db, double att_db, const AntennaSpec& ant);

/// Thermal noise plus the fixed 7 dB noise figure over the band.
double noise_dbm(const BandSpec& band);

double sinr_db(double serving_mw, std::span<const double> interferers_mw, const BandSpec& band);

/// Shannon rate capped at 7.8 bit/s/Hz over the UE's share of the band.
double ue_throughput_bps(double sinr_db, double shared_bandwidth_hz);

/// Deterministic log-normal shadowing, one N(0, 8 dB) draw per
/// (cell, 25 m grid square), addressed by a seeded hash.
double shadow_fading_db(std::uint64_t seed, CellId cell, double x_m, double y_m);

} // namespace radio
} // namespace dtran

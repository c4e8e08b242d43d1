#include "dtran/radio_model.h"

#include "dtran/hashing.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dtran::radio {

namespace {

const std::array<BandSpec, 2> kCatalog{{
    {"A", 2100.0, 10e6, 0.0},
    {"B", 3500.0, 20e6, 3.0},
}};

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

} // namespace

const BandSpec&
band_a()
{
    return kCatalog[0];
}

const BandSpec&
band_b()
{
    return kCatalog[1];
}

std::span<const BandSpec>
default_band_catalog()
{
    return kCatalog;
}

const BandSpec&
band_by_id(const std::string& id)
{
    for (const auto& b : kCatalog)
    {
        if (b.id == id)
        {
            return b;
        }
    }
    throw std::out_of_range("unknown band '" + id + "'");
}

double
dbm_to_mw(double dbm)
{
    return std::pow(10.0, dbm / 10.0);
}

double
mw_to_dbm(double mw)
{
    return 10.0 * std::log10(mw);
}

double
path_loss_db(double distance_km, const BandSpec& band)
{
    return 128.1 + 37.6 * std::log10(std::max(distance_km, kMinDistanceKm)) +
           band.pathloss_offset_db;
}

double
wrap_degrees(double deg)
{
    double w = std::fmod(deg + 180.0, 360.0);
    if (w < 0.0)
    {
        w += 360.0;
    }
    return w - 180.0;
}

double
elevation_deg(double horizontal_distance_m, const AntennaSpec& ant)
{
    return std::atan2(ant.height_m - kUeHeightM, horizontal_distance_m) * kRadToDeg;
}

double
bearing_deg(double x0, double y0, double x1, double y1)
{
    return std::atan2(x1 - x0, y1 - y0) * kRadToDeg;
}

double
antenna_attenuation_db(double elev_deg,
                       double azim_deg,
                       double tilt_deg,
                       double boresight_azim_deg,
                       const AntennaSpec& ant)
{
    const double dv = (elev_deg - tilt_deg) / ant.theta_3db_deg;
    const double dh = wrap_degrees(azim_deg - boresight_azim_deg) / ant.phi_3db_deg;
    const double vertical = std::min(12.0 * dv * dv, ant.sla_v_db);
    const double horizontal = std::min(12.0 * dh * dh, ant.am_h_db);
    return -(vertical + horizontal);
}

double
rsrp_dbm(double tx_power_dbm, double pl_db, double att_db, const AntennaSpec& ant)
{
    return tx_power_dbm + ant.max_gain_dbi + att_db - pl_db;
}

double
noise_dbm(const BandSpec& band)
{
    return kThermalNoiseDbmPerHz + 10.0 * std::log10(band.bandwidth_hz) + kNoiseFigureDb;
}

double
sinr_db(double serving_mw, std::span<const double> interferers_mw, const BandSpec& band)
{
    double denom = dbm_to_mw(noise_dbm(band));
    for (double i : interferers_mw)
    {
        denom += i;
    }
    return 10.0 * std::log10(serving_mw / denom);
}

double
ue_throughput_bps(double sinr_db, double shared_bandwidth_hz)
{
    const double linear = std::pow(10.0, sinr_db / 10.0);
    return shared_bandwidth_hz * std::min(std::log2(1.0 + linear), kMaxSpectralEfficiency);
}

double
shadow_fading_db(std::uint64_t seed, CellId cell, double x_m, double y_m)
{
    const auto gx = static_cast<std::int64_t>(std::floor(x_m / kShadowingGridM));
    const auto gy = static_cast<std::int64_t>(std::floor(y_m / kShadowingGridM));
    const std::uint64_t key = hash_combine(seed,
                                           static_cast<std::uint64_t>(cell),
                                           static_cast<std::uint64_t>(gx),
                                           static_cast<std::uint64_t>(gy));
    // Box-Muller on two hash-derived uniforms; u1 is kept away from zero.
    const double u1 = 1.0 - unit_double(splitmix64(key));
    const double u2 = unit_double(splitmix64(key ^ 0x5851f42d4c957f2dULL));
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    return kShadowingSigmaDb * z;
}

} // namespace dtran::radio

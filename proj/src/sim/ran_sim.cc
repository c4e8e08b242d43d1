#include "dtran/ran_sim.h"

#include "dtran/hashing.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dtran {

namespace {

constexpr std::uint64_t kPlacementStream = 0x0b5e55ed;
constexpr std::uint64_t kLegStream = 0x1e6;

double
uniform(std::uint64_t key, double lo, double hi)
{
    return lo + (hi - lo) * unit_double(splitmix64(key));
}

} // namespace

A3Result
a3_check(double serving_rsrp_dbm,
         double neighbor_rsrp_dbm,
         double hysteresis_db,
         int elapsed_ttt_ms,
         int ttt_ms)
{
    if (!(neighbor_rsrp_dbm > serving_rsrp_dbm + hysteresis_db))
    {
        return A3Result::none;
    }
    return elapsed_ttt_ms >= ttt_ms ? A3Result::handover : A3Result::pending;
}

RlfResult
rlf_check(double sinr_db, int rlf_timer_ms)
{
    return (sinr_db < kRlfSinrThresholdDb && rlf_timer_ms >= kRlfDurationMs) ? RlfResult::failure
                                                                             : RlfResult::ok;
}

double
UeState::heading_deg() const
{
    return radio::bearing_deg(x_m, y_m, wp_x_m, wp_y_m);
}

nlohmann::json
ue_state_to_json(const UeState& ue)
{
    nlohmann::json ttt = nlohmann::json::object();
    for (const auto& [cell, ms] : ue.ttt_ms)
    {
        ttt[std::to_string(cell)] = ms;
    }
    return {{"x_m", ue.x_m},
            {"y_m", ue.y_m},
            {"wp_x_m", ue.wp_x_m},
            {"wp_y_m", ue.wp_y_m},
            {"speed_mps", ue.speed_mps},
            {"leg", ue.leg},
            {"serving", ue.serving == kOutage ? nlohmann::json(nullptr) : nlohmann::json(ue.serving)},
            {"ttt_ms", ttt},
            {"last_ho_from",
             ue.last_ho_from ? nlohmann::json(*ue.last_ho_from) : nlohmann::json(nullptr)},
            {"last_ho_t_ms", ue.last_ho_t_ms},
            {"rlf_timer_ms", ue.rlf_timer_ms},
            {"outage_ms", ue.outage_ms},
            {"acc_bits", ue.acc_bits},
            {"rsrp_dbm", ue.rsrp_dbm},
            {"sinr_db", ue.sinr_db}};
}

UeState
ue_state_from_json(std::uint32_t id, const nlohmann::json& j)
{
    UeState ue;
    ue.id = id;
    ue.x_m = j.at("x_m").get<double>();
    ue.y_m = j.at("y_m").get<double>();
    ue.wp_x_m = j.at("wp_x_m").get<double>();
    ue.wp_y_m = j.at("wp_y_m").get<double>();
    ue.speed_mps = j.at("speed_mps").get<double>();
    ue.leg = j.at("leg").get<std::uint64_t>();
    ue.serving = j.at("serving").is_null() ? kOutage : j.at("serving").get<CellId>();
    for (const auto& [cell, ms] : j.at("ttt_ms").items())
    {
        ue.ttt_ms[static_cast<CellId>(std::stoul(cell))] = ms.get<int>();
    }
    if (!j.at("last_ho_from").is_null())
    {
        ue.last_ho_from = j.at("last_ho_from").get<CellId>();
    }
    ue.last_ho_t_ms = j.at("last_ho_t_ms").get<std::int64_t>();
    ue.rlf_timer_ms = j.at("rlf_timer_ms").get<int>();
    ue.outage_ms = j.at("outage_ms").get<int>();
    ue.acc_bits = j.at("acc_bits").get<double>();
    ue.rsrp_dbm = j.at("rsrp_dbm").get<double>();
    ue.sinr_db = j.at("sinr_db").get<double>();
    return ue;
}

const char*
reject_reason_name(RejectReason r)
{
    switch (r)
    {
    case RejectReason::none:
        return "none";
    case RejectReason::out_of_range:
        return "out_of_range";
    case RejectReason::unknown_cell:
        return "unknown_cell";
    }
    return "none";
}

ApplyResult
validate_changes(const Topology& topo, const ChangeSet& changes)
{
    for (const auto& ch : changes)
    {
        if (!topo.find_cell(ch.cell_id))
        {
            return {false, RejectReason::unknown_cell, "", ch.cell_id};
        }
        if (auto bad = first_out_of_range_field(ch.config))
        {
            return {false, RejectReason::out_of_range, *bad, ch.cell_id};
        }
    }
    return {true, RejectReason::none, "", 0};
}

World::World(Topology topo)
    : topo_(std::move(topo))
{
    validate(topo_, false);
    std::sort(topo_.cells.begin(), topo_.cells.end(), [](const auto& a, const auto& b) {
        return a.id < b.id;
    });
    init_ues();
}

World::World(Topology topo, std::vector<UeState> ues, std::int64_t now_ms)
    : topo_(std::move(topo)),
      ues_(std::move(ues)),
      now_ms_(now_ms)
{
    validate(topo_, false);
    std::sort(topo_.cells.begin(), topo_.cells.end(), [](const auto& a, const auto& b) {
        return a.id < b.id;
    });
    std::sort(ues_.begin(), ues_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
}

void
World::init_ues()
{
    ues_.clear();
    ues_.reserve(topo_.ue_count);
    const auto& a = topo_.area;
    for (std::uint32_t i = 0; i < topo_.ue_count; ++i)
    {
        UeState ue;
        ue.id = i;
        if (!topo_.ue_placements.empty())
        {
            ue.x_m = topo_.ue_placements[i].x_m;
            ue.y_m = topo_.ue_placements[i].y_m;
        }
        else
        {
            const auto base = hash_combine(topo_.seed, kPlacementStream, i);
            ue.x_m = uniform(hash_combine(base, 0), a.x_min, a.x_max);
            ue.y_m = uniform(hash_combine(base, 1), a.y_min, a.y_max);
        }
        draw_leg(ue);
        if (!topo_.cells.empty())
        {
            const auto row = rsrp_row(ue.x_m, ue.y_m);
            const auto best = strongest(row);
            ue.serving = topo_.cells[best].id;
            ue.rsrp_dbm = row[best];
        }
        ues_.push_back(ue);
    }
}

void
World::draw_leg(UeState& ue) const
{
    ++ue.leg;
    if (topo_.mobility == Mobility::stationary)
    {
        ue.wp_x_m = ue.x_m;
        ue.wp_y_m = ue.y_m;
        ue.speed_mps = 0.0;
        return;
    }
    const auto& a = topo_.area;
    const auto key = hash_combine(topo_.seed, kLegStream, ue.id, ue.leg);
    ue.wp_x_m = uniform(hash_combine(key, 0), a.x_min, a.x_max);
    ue.wp_y_m = uniform(hash_combine(key, 1), a.y_min, a.y_max);
    ue.speed_mps = uniform(hash_combine(key, 2), kMinSpeedMps, kMaxSpeedMps);
}

void
World::move(UeState& ue) const
{
    if (topo_.mobility == Mobility::stationary)
    {
        return;
    }
    const double step_m = ue.speed_mps * static_cast<double>(kTickMs) / 1000.0;
    const double dx = ue.wp_x_m - ue.x_m;
    const double dy = ue.wp_y_m - ue.y_m;
    const double remaining = std::hypot(dx, dy);
    if (step_m >= remaining)
    {
        // Pause time is zero; the leftover distance of this tick is dropped.
        ue.x_m = ue.wp_x_m;
        ue.y_m = ue.wp_y_m;
        draw_leg(ue);
        return;
    }
    ue.x_m += dx / remaining * step_m;
    ue.y_m += dy / remaining * step_m;
}

std::size_t
World::cell_index(CellId id) const
{
    auto it = std::lower_bound(topo_.cells.begin(), topo_.cells.end(), id, [](const auto& c, CellId v) {
        return c.id < v;
    });
    if (it == topo_.cells.end() || it->id != id)
    {
        throw std::out_of_range("unknown cell " + std::to_string(id));
    }
    return static_cast<std::size_t>(it - topo_.cells.begin());
}

const CellConfig&
World::config(CellId cell) const
{
    return topo_.cells[cell_index(cell)].config;
}

double
World::link_rsrp(std::size_t cell_idx, const radio::BandSpec& band, double x_m, double y_m) const
{
    const auto& cell = topo_.cells[cell_idx];
    const Site* site = topo_.find_site(cell.site_id);
    const double dx = x_m - site->x_m;
    const double dy = y_m - site->y_m;
    const double d = std::hypot(dx, dy);
    double pl = radio::path_loss_db(d / 1000.0, band);
    if (topo_.shadowing)
    {
        pl += radio::shadow_fading_db(topo_.shadowing_seed, cell.id, x_m, y_m);
    }
    const double elev = radio::elevation_deg(d, topo_.antenna);
    const double azim = radio::bearing_deg(site->x_m, site->y_m, x_m, y_m);
    const double att = radio::antenna_attenuation_db(
        elev, azim, cell.config.tilt_deg, cell.azimuth_deg, topo_.antenna);
    return radio::rsrp_dbm(cell.config.tx_power_dbm, pl, att, topo_.antenna);
}

std::vector<double>
World::rsrp_row(double x_m, double y_m) const
{
    std::vector<double> row(topo_.cells.size());
    for (std::size_t c = 0; c < topo_.cells.size(); ++c)
    {
        row[c] = link_rsrp(c, radio::band_a(), x_m, y_m);
    }
    return row;
}

std::size_t
World::strongest(const std::vector<double>& row) const
{
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
    {
        if (row[c] > row[best])
        {
            best = c;
        }
    }
    return best;
}

std::vector<SimRecord>
World::step()
{
    const std::int64_t t = now_ms_ + kTickMs;
    const auto n_cells = topo_.cells.size();
    const auto& band_a = radio::band_a();
    const auto& band_b = radio::band_b();
    const double noise_a_mw = radio::dbm_to_mw(radio::noise_dbm(band_a));
    const double noise_b_mw = radio::dbm_to_mw(radio::noise_dbm(band_b));
    const double b_offset_db = band_b.pathloss_offset_db - band_a.pathloss_offset_db;
    std::vector<bool> on_b(topo_.cells.size());
    for (std::size_t c = 0; c < topo_.cells.size(); ++c)
    {
        const auto& bands = topo_.cells[c].bands;
        on_b[c] = topo_.cells[c].config.ca_enabled && std::find(bands.begin(), bands.end(), "B") != bands.end();
    }

    std::vector<SimRecord> out;

    for (auto& ue : ues_)
    {
        move(ue);
    }

    // Primary-band received power per UE x cell, in dBm and mW.
    std::vector<std::vector<double>> rsrp(ues_.size());
    std::vector<std::vector<double>> rsrp_mw(ues_.size());
    for (std::size_t u = 0; u < ues_.size(); ++u)
    {
        rsrp[u] = rsrp_row(ues_[u].x_m, ues_[u].y_m);
        rsrp_mw[u].resize(n_cells);
        for (std::size_t c = 0; c < n_cells; ++c)
        {
            rsrp_mw[u][c] = radio::dbm_to_mw(rsrp[u][c]);
        }
    }
    auto sinr_a = [&](std::size_t u, std::size_t s) {
        double denom = noise_a_mw;
        for (std::size_t c = 0; c < n_cells; ++c)
        {
            if (c != s)
            {
                denom += rsrp_mw[u][c];
            }
        }
        return 10.0 * std::log10(rsrp_mw[u][s] / denom);
    };

    std::vector<bool> interrupted(ues_.size(), false);
    for (std::size_t u = 0; u < ues_.size(); ++u)
    {
        auto& ue = ues_[u];
        if (ue.serving == kOutage)
        {
            ue.outage_ms -= static_cast<int>(kTickMs);
            if (ue.outage_ms <= 0 && n_cells > 0)
            {
                const auto best = strongest(rsrp[u]);
                ue.serving = topo_.cells[best].id;
                ue.outage_ms = 0;
                ue.rlf_timer_ms = 0;
                ue.ttt_ms.clear();
                SimRecord r;
                r.t_ms = t;
                r.kind = RecordKind::reattach;
                r.ue = ue.id;
                r.to_cell = ue.serving;
                out.push_back(r);
            }
            continue;
        }

        const std::size_t s = cell_index(ue.serving);
        const double sinr = sinr_a(u, s);
        ue.rlf_timer_ms = sinr < kRlfSinrThresholdDb ? ue.rlf_timer_ms + static_cast<int>(kTickMs) : 0;
        if (rlf_check(sinr, ue.rlf_timer_ms) == RlfResult::failure)
        {
            SimRecord r;
            r.t_ms = t;
            r.kind = RecordKind::rlf;
            r.ue = ue.id;
            r.from_cell = ue.serving;
            out.push_back(r);
            ue.serving = kOutage;
            ue.outage_ms = kOutageMs;
            ue.rlf_timer_ms = 0;
            ue.ttt_ms.clear();
            continue;
        }

        const auto& scfg = topo_.cells[s].config;
        std::optional<std::size_t> target;
        for (std::size_t c = 0; c < n_cells; ++c)
        {
            if (c == s)
            {
                continue;
            }
            const CellId nid = topo_.cells[c].id;
            const bool entered = rsrp[u][c] > rsrp[u][s] + scfg.a3_hysteresis_db;
            if (!entered)
            {
                ue.ttt_ms.erase(nid);
                continue;
            }
            const int elapsed = (ue.ttt_ms[nid] += static_cast<int>(kTickMs));
            if (a3_check(rsrp[u][s], rsrp[u][c], scfg.a3_hysteresis_db, elapsed, scfg.ttt_ms) ==
                    A3Result::handover &&
                (!target || rsrp[u][c] > rsrp[u][*target]))
            {
                target = c;
            }
        }
        if (target)
        {
            const CellId from = ue.serving;
            const CellId to = topo_.cells[*target].id;
            SimRecord r;
            r.t_ms = t;
            r.kind = RecordKind::handover;
            r.ue = ue.id;
            r.from_cell = from;
            r.to_cell = to;
            out.push_back(r);
            if (ue.last_ho_from && *ue.last_ho_from == to && t - ue.last_ho_t_ms <= kPingPongWindowMs)
            {
                r.kind = RecordKind::pingpong;
                out.push_back(r);
            }
            ue.last_ho_from = from;
            ue.last_ho_t_ms = t;
            ue.serving = to;
            ue.ttt_ms.clear();
            ue.rlf_timer_ms = 0;
            interrupted[u] = true;
        }
    }

    // Equal-share scheduling on band A; CA cells that carry band B also split it.
    std::vector<int> attached(n_cells, 0);
    for (const auto& ue : ues_)
    {
        if (ue.serving != kOutage)
        {
            ++attached[cell_index(ue.serving)];
        }
    }
    for (std::size_t u = 0; u < ues_.size(); ++u)
    {
        auto& ue = ues_[u];
        if (ue.serving == kOutage)
        {
            continue;
        }
        const std::size_t s = cell_index(ue.serving);
        const double sinr = sinr_a(u, s);
        ue.rsrp_dbm = rsrp[u][s];
        ue.sinr_db = sinr;
        double thr = radio::ue_throughput_bps(sinr, band_a.bandwidth_hz / attached[s]);
        if (on_b[s])
        {
            const double serving_b = radio::dbm_to_mw(rsrp[u][s] - b_offset_db);
            double interference_b = 0.0;
            for (std::size_t c = 0; c < n_cells; ++c)
            {
                if (c != s && on_b[c])
                {
                    interference_b += radio::dbm_to_mw(rsrp[u][c] - b_offset_db);
                }
            }
            const double sinr_b = 10.0 * std::log10(serving_b / (noise_b_mw + interference_b));
            thr += radio::ue_throughput_bps(sinr_b, band_b.bandwidth_hz / attached[s]);
        }
        const auto active_ms =
            static_cast<double>(kTickMs - (interrupted[u] ? kHandoverInterruptionMs : 0));
        ue.acc_bits += thr * active_ms / 1000.0;
    }

    if (t % kKpiSampleMs == 0)
    {
        for (auto& ue : ues_)
        {
            SimRecord r;
            r.t_ms = t;
            r.kind = RecordKind::kpi_sample;
            r.ue = ue.id;
            r.from_cell = ue.serving;
            r.thr_bps = ue.acc_bits * 1000.0 / static_cast<double>(kKpiSampleMs);
            out.push_back(r);
            ue.acc_bits = 0.0;
        }
    }

    for (const auto& txn : pending_)
    {
        SimRecord r;
        r.t_ms = t;
        r.kind = RecordKind::config_applied;
        r.txn_id = txn.txn_id;
        for (const auto& ch : txn.changes)
        {
            topo_.cells[cell_index(ch.cell_id)].config = ch.config;
            r.cells.push_back(ch.cell_id);
        }
        out.push_back(r);
    }
    pending_.clear();

    now_ms_ = t;
    log_.insert(log_.end(), out.begin(), out.end());
    return out;
}

void
World::run_until(std::int64_t target_ms)
{
    while (now_ms_ < target_ms)
    {
        step();
    }
}

ApplyResult
World::apply_config(const std::string& txn_id, const ChangeSet& changes)
{
    auto result = validate_changes(topo_, changes);
    if (result.applied)
    {
        pending_.push_back({txn_id, changes});
    }
    return result;
}

void
World::set_configs(const ChangeSet& changes)
{
    const auto result = validate_changes(topo_, changes);
    if (!result.applied)
    {
        throw std::invalid_argument(std::string("invalid change: ") +
                                    reject_reason_name(result.reason) + " " + result.field);
    }
    for (const auto& ch : changes)
    {
        topo_.cells[cell_index(ch.cell_id)].config = ch.config;
    }
}

void
World::reseed(std::uint64_t seed)
{
    topo_.seed = seed;
}

} // namespace dtran

#include "dtran/sync_endpoints.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dtran::sync {

void
validate_twinning_rate(double rate_hz)
{
    if (!(rate_hz > 0.0))
    {
        throw std::invalid_argument("twinning rate must be positive");
    }
    if (rate_hz > kMaxTwinningRateHz + 1e-9)
    {
        throw std::invalid_argument("twinning rate " + std::to_string(rate_hz) + " Hz exceeds the " +
                                    std::to_string(kMaxTwinningRateHz) + " Hz tick rate");
    }
}

std::int64_t
effective_liveness_ms(const SyncConfig& cfg)
{
    if (cfg.liveness_ms > 0)
    {
        return cfg.liveness_ms;
    }
    return cfg.aot_threshold_ms + static_cast<std::int64_t>(std::llround(1000.0 / cfg.twinning_rate_hz));
}

nlohmann::json
entity_to_json(const twin::EntityUpdate& e)
{
    return {{"kind", twin::node_kind_name(e.key.kind)}, {"id", e.key.id}, {"attrs", e.attrs}};
}

twin::EntityUpdate
entity_from_json(const nlohmann::json& j)
{
    auto kind = twin::node_kind_from_name(j.at("kind").get<std::string>());
    if (!kind)
    {
        throw ProtocolError("unknown entity kind");
    }
    return {{*kind, j.at("id").get<std::string>()}, j.at("attrs")};
}

namespace {

nlohmann::json
entities_json(const std::vector<twin::EntityUpdate>& es)
{
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : es)
    {
        out.push_back(entity_to_json(e));
    }
    return out;
}

std::vector<twin::EntityUpdate>
entities_from(const nlohmann::json& arr)
{
    std::vector<twin::EntityUpdate> out;
    for (const auto& e : arr)
    {
        out.push_back(entity_from_json(e));
    }
    return out;
}

} // namespace

// Physical side -------------------------------------------------------------

PhysicalEndpoint::PhysicalEndpoint(World& world, double twinning_rate_hz)
    : world_(world)
    , rate_hz_(twinning_rate_hz)
{
    validate_twinning_rate(twinning_rate_hz);
}

SyncMessage
PhysicalEndpoint::make(MsgType type, nlohmann::json payload)
{
    return {kProtocolVersion, type, ++seq_, world_.now_ms(), std::move(payload)};
}

SyncMessage
PhysicalEndpoint::make_snapshot()
{
    auto image = twin::world_entities(world_);
    auto m = make(MsgType::snapshot_full, {{"topology", world_.topology()}, {"entities", entities_json(image)}});
    last_image_ = image;
    images_[m.seq] = std::move(image);
    return m;
}

std::vector<SyncMessage>
PhysicalEndpoint::start()
{
    std::vector<SyncMessage> out;
    out.push_back(make(MsgType::hello, {{"node", kNode}, {"protocol", kProtocolVersion}, {"twinning_rate_hz", rate_hz_}}));
    out.push_back(make(MsgType::topology_full, {{"topology", world_.topology()}}));
    out.push_back(make_snapshot());
    log_cursor_ = world_.log().size();
    const double period_ms = 1000.0 / rate_hz_;
    emission_index_ = static_cast<std::uint64_t>(std::floor(static_cast<double>(world_.now_ms()) / period_ms)) + 1;
    return out;
}

void
PhysicalEndpoint::receive(const SyncMessage& m)
{
    switch (m.type)
    {
    case MsgType::snapshot_request:
        snapshot_requested_ = true;
        break;
    case MsgType::config_push: {
        ++push_deliveries_;
        const auto txn = m.payload.at("txn_id").get<std::string>();
        if (ack_cache_.count(txn))
        {
            ack_queue_.push_back(txn);
            break;
        }
        if (awaiting_apply_.count(txn))
        {
            ack_queue_.push_back(txn);
            break;
        }
        ApplyResult r;
        try
        {
            r = world_.apply_config(txn, change_set_from_json(m.payload.at("changes")));
        }
        catch (const std::exception&)
        {
            ack_cache_[txn] = {{"txn_id", txn}, {"status", "rejected"}, {"reason", "malformed"}, {"field", ""}};
            ack_queue_.push_back(txn);
            break;
        }
        if (!r.applied)
        {
            ack_cache_[txn] = {{"txn_id", txn},
                               {"status", "rejected"},
                               {"reason", reject_reason_name(r.reason)},
                               {"field", r.field},
                               {"cell", r.cell}};
        }
        else
        {
            awaiting_apply_.insert(txn);
            ++applications_;
        }
        ack_queue_.push_back(txn);
        break;
    }
    default:
        break;
    }
}

std::vector<SyncMessage>
PhysicalEndpoint::after_tick()
{
    const auto t = world_.now_ms();
    std::vector<SyncMessage> out;

    if (!world_.has_pending_config())
    {
        for (const auto& txn : awaiting_apply_)
        {
            ack_cache_[txn] = {
                {"txn_id", txn}, {"status", "applied"}, {"reason", ""}, {"field", ""}, {"applied_t_ms", t}};
        }
        awaiting_apply_.clear();
    }
    std::vector<std::string> deferred;
    for (const auto& txn : ack_queue_)
    {
        auto it = ack_cache_.find(txn);
        if (it == ack_cache_.end())
        {
            deferred.push_back(txn);
            continue;
        }
        out.push_back(make(MsgType::config_ack, it->second));
    }
    ack_queue_ = std::move(deferred);

    if (t % kKpiSampleMs == 0)
    {
        nlohmann::json records = nlohmann::json::array();
        const auto& log = world_.log();
        for (; log_cursor_ < log.size(); ++log_cursor_)
        {
            records.push_back(record_to_json(log[log_cursor_]));
        }
        out.push_back(make(MsgType::kpi_report, {{"t_start_ms", t - kKpiSampleMs}, {"t_end_ms", t}, {"records", records}}));
    }

    const double period_ms = 1000.0 / rate_hz_;
    if (static_cast<double>(t) + 1e-6 >= static_cast<double>(emission_index_) * period_ms)
    {
        auto image = twin::world_entities(world_);
        out.push_back(make(MsgType::state_delta, {{"changes", entities_json(twin::diff_entities(last_image_, image))}}));
        last_image_ = std::move(image);
        ++delta_emissions_;
        while (static_cast<double>(t) + 1e-6 >= static_cast<double>(emission_index_) * period_ms)
        {
            ++emission_index_;
        }
    }

    if (snapshot_requested_)
    {
        out.push_back(make_snapshot());
        snapshot_requested_ = false;
    }
    return out;
}

// Age of twin ---------------------------------------------------------------

void
AotTracker::advance(std::int64_t t_ms)
{
    if (!started_ || t_ms <= last_ms_)
    {
        return;
    }
    const double a = static_cast<double>(last_ms_);
    const double b = static_cast<double>(t_ms);
    integral_ms2_ += (b - a) * ((a + b) / 2.0 - mean_stamp_ms_);
    peak_max_ms_ = std::max(peak_max_ms_, t_ms - min_stamp_ms_);
    last_ms_ = t_ms;
}

void
AotTracker::restamp(std::int64_t t_ms, double mean_stamp_ms, std::int64_t min_stamp_ms)
{
    if (!started_)
    {
        started_ = true;
        start_ms_ = t_ms;
        last_ms_ = t_ms;
    }
    else
    {
        advance(t_ms);
    }
    mean_stamp_ms_ = mean_stamp_ms;
    min_stamp_ms_ = min_stamp_ms;
    peak_max_ms_ = std::max(peak_max_ms_, t_ms - min_stamp_ms_);
}

double
AotTracker::mean_s(std::int64_t t_ms) const
{
    return started_ ? (static_cast<double>(t_ms) - mean_stamp_ms_) / 1000.0 : 0.0;
}

double
AotTracker::max_s(std::int64_t t_ms) const
{
    return started_ ? static_cast<double>(t_ms - min_stamp_ms_) / 1000.0 : 0.0;
}

double
AotTracker::time_avg_mean_s(std::int64_t t_ms) const
{
    if (!started_)
    {
        return 0.0;
    }
    if (t_ms <= start_ms_)
    {
        return mean_s(t_ms);
    }
    double integral = integral_ms2_;
    if (t_ms > last_ms_)
    {
        const double a = static_cast<double>(last_ms_);
        const double b = static_cast<double>(t_ms);
        integral += (b - a) * ((a + b) / 2.0 - mean_stamp_ms_);
    }
    return integral / static_cast<double>(t_ms - start_ms_) / 1000.0;
}

double
AotTracker::peak_max_s(std::int64_t t_ms) const
{
    if (!started_)
    {
        return 0.0;
    }
    return static_cast<double>(std::max(peak_max_ms_, t_ms - min_stamp_ms_)) / 1000.0;
}

// Twin side -----------------------------------------------------------------

const char*
push_status_name(PushStatus s)
{
    switch (s)
    {
    case PushStatus::pending:
        return "pending";
    case PushStatus::applied:
        return "applied";
    case PushStatus::rejected:
        return "rejected";
    case PushStatus::timeout:
        return "timeout";
    }
    return "pending";
}

TwinEndpoint::TwinEndpoint(twin::TwinStore& store, SyncConfig cfg)
    : store_(store)
    , cfg_(cfg)
{
    validate_twinning_rate(cfg_.twinning_rate_hz);
}

SyncMessage
TwinEndpoint::make(MsgType type, nlohmann::json payload)
{
    return {kProtocolVersion, type, ++seq_, 0, std::move(payload)};
}

SyncMessage
TwinEndpoint::request(const char* reason, std::int64_t t_ms)
{
    ++counters_.snapshot_requests;
    last_request_ms_ = t_ms;
    awaiting_ = true;
    retry_paused_ = false;
    auto m = make(MsgType::snapshot_request, {{"reason", reason}, {"expected_seq", expected_}});
    m.t_sim_ms = t_ms;
    return m;
}

std::vector<SyncMessage>
TwinEndpoint::start(std::int64_t t_ms)
{
    next_heartbeat_ms_ = t_ms + cfg_.heartbeat_ms;
    auto m = make(MsgType::hello, {{"node", kNode}, {"protocol", kProtocolVersion}});
    m.t_sim_ms = t_ms;
    return {m};
}

void
TwinEndpoint::restamp(std::int64_t t_ms)
{
    const auto g = store_.read();
    double sum = 0.0;
    std::size_t n = 0;
    std::int64_t oldest = std::numeric_limits<std::int64_t>::max();
    for (const auto& [key, node] : g->nodes())
    {
        if (!twin::tier_includes(cfg_.tier, key.kind) || !node.last_sync.synced())
        {
            continue;
        }
        sum += static_cast<double>(node.last_sync.t_sim_ms);
        oldest = std::min(oldest, node.last_sync.t_sim_ms);
        ++n;
    }
    if (n == 0)
    {
        return;
    }
    aot_.restamp(t_ms, sum / static_cast<double>(n), oldest);
    if (t_ms - oldest <= cfg_.aot_threshold_ms)
    {
        threshold_armed_ = true;
    }
}

std::vector<SyncMessage>
TwinEndpoint::receive(const SyncMessage& m, std::int64_t t_ms)
{
    aot_.advance(t_ms);
    std::vector<SyncMessage> out;
    if (m.type == MsgType::snapshot_request || m.type == MsgType::config_push)
    {
        return out;
    }
    last_seen_ms_ = t_ms;
    if (m.seq < expected_)
    {
        ++counters_.stale_frames;
        return out;
    }
    const bool gap = m.seq > expected_;
    expected_ = m.seq + 1;
    bool requested = false;
    if (gap)
    {
        ++counters_.gaps;
        if (!awaiting_)
        {
            out.push_back(request("gap", t_ms));
            requested = true;
        }
    }

    switch (m.type)
    {
    case MsgType::topology_full:
        store_.write([&](twin::TwinGraph& g) {
            twin::ingest_topology(g, m.payload.at("topology").get<Topology>(), PhysicalEndpoint::kNode, m.seq, m.t_sim_ms);
        });
        restamp(t_ms);
        break;
    case MsgType::snapshot_full: {
        const auto topo = m.payload.at("topology").get<Topology>();
        const auto entities = entities_from(m.payload.at("entities"));
        store_.write([&](twin::TwinGraph& g) {
            twin::ingest_full_state(g, topo, entities, PhysicalEndpoint::kNode, m.seq, m.t_sim_ms, cfg_.tier);
        });
        awaiting_ = false;
        retry_paused_ = false;
        ++counters_.snapshots_applied;
        restamp(t_ms);
        if (on_snapshot_applied)
        {
            on_snapshot_applied(m.seq, t_ms);
        }
        if (on_state_applied)
        {
            on_state_applied(m.t_sim_ms, t_ms);
        }
        break;
    }
    case MsgType::state_delta: {
        if (awaiting_)
        {
            ++counters_.deltas_discarded;
            break;
        }
        twin::Delta d{PhysicalEndpoint::kNode, m.seq, m.t_sim_ms, entities_from(m.payload.at("changes"))};
        const auto r = store_.write([&](twin::TwinGraph& g) { return twin::ingest_delta(g, d, cfg_.tier); });
        if (r.status == twin::IngestStatus::unknown_entity)
        {
            ++counters_.unknown_entity;
            out.push_back(request("unknown_entity", t_ms));
            requested = true;
            break;
        }
        ++counters_.deltas_applied;
        restamp(t_ms);
        if (on_state_applied)
        {
            on_state_applied(m.t_sim_ms, t_ms);
        }
        break;
    }
    case MsgType::kpi_report:
        handle_kpi(m);
        break;
    case MsgType::config_ack:
        handle_ack(m);
        break;
    default:
        break;
    }

    if (awaiting_ && retry_paused_ && !requested)
    {
        out.push_back(request("retry", t_ms));
    }
    return out;
}

void
TwinEndpoint::handle_kpi(const SyncMessage& m)
{
    std::vector<SimRecord> batch;
    for (const auto& r : m.payload.at("records"))
    {
        batch.push_back(record_from_json(r));
    }
    const auto t_end = m.payload.at("t_end_ms").get<std::int64_t>();
    const auto t_start = m.payload.at("t_start_ms").get<std::int64_t>();
    records_.insert(records_.end(), batch.begin(), batch.end());
    kpi_seconds_.insert(t_end);
    if (cfg_.tier != twin::FidelityTier::L0)
    {
        store_.write([&](twin::TwinGraph& g) {
            const auto ue_count = g.meta().value("ue_count", std::size_t{0});
            twin::ingest_cell_kpis(
                g,
                aggregate_kpis(batch, static_cast<double>(t_start) / 1000.0, static_cast<double>(t_end) / 1000.0, ue_count));
        });
    }
    if (on_kpi_report)
    {
        on_kpi_report(batch, t_end);
    }
}

void
TwinEndpoint::handle_ack(const SyncMessage& m)
{
    ++counters_.acks_received;
    auto it = pushes_.find(m.payload.at("txn_id").get<std::string>());
    if (it == pushes_.end() || it->second.status != PushStatus::pending)
    {
        return;
    }
    it->second.ack = m.payload;
    it->second.status = m.payload.at("status") == "applied" ? PushStatus::applied : PushStatus::rejected;
    if (on_push_done)
    {
        on_push_done(it->second);
    }
}

std::vector<SyncMessage>
TwinEndpoint::on_timer(std::int64_t t_ms)
{
    aot_.advance(t_ms);
    std::vector<SyncMessage> out;
    if (t_ms >= next_heartbeat_ms_)
    {
        auto m = make(MsgType::heartbeat, {{"expected_seq", expected_}});
        m.t_sim_ms = t_ms;
        out.push_back(m);
        while (next_heartbeat_ms_ <= t_ms)
        {
            next_heartbeat_ms_ += cfg_.heartbeat_ms;
        }
    }
    if (aot_.started() && threshold_armed_ && t_ms - aot_.min_stamp_ms() > cfg_.aot_threshold_ms)
    {
        threshold_armed_ = false;
        if (!awaiting_)
        {
            out.push_back(request("stale", t_ms));
        }
    }
    if (awaiting_ && !retry_paused_ && t_ms >= last_request_ms_ + cfg_.snapshot_retry_ms)
    {
        if (last_seen_ms_ && t_ms - *last_seen_ms_ <= effective_liveness_ms(cfg_))
        {
            out.push_back(request("retry", t_ms));
        }
        else
        {
            retry_paused_ = true;
        }
    }
    for (auto& [txn, p] : pushes_)
    {
        if (p.status != PushStatus::pending)
        {
            continue;
        }
        if (t_ms >= p.first_sent_ms + cfg_.push_timeout_ms)
        {
            p.status = PushStatus::timeout;
            if (on_push_done)
            {
                on_push_done(p);
            }
        }
        else if (t_ms >= p.last_sent_ms + cfg_.push_retransmit_ms)
        {
            p.last_sent_ms = t_ms;
            ++p.transmissions;
            auto m = make(MsgType::config_push, {{"txn_id", txn}, {"changes", change_set_to_json(p.changes)}});
            m.t_sim_ms = t_ms;
            out.push_back(m);
        }
    }
    return out;
}

std::optional<std::int64_t>
TwinEndpoint::next_timer_ms() const
{
    std::int64_t t = next_heartbeat_ms_;
    if (aot_.started() && threshold_armed_)
    {
        t = std::min(t, aot_.min_stamp_ms() + cfg_.aot_threshold_ms + 1);
    }
    if (awaiting_ && !retry_paused_)
    {
        t = std::min(t, last_request_ms_ + cfg_.snapshot_retry_ms);
    }
    for (const auto& [txn, p] : pushes_)
    {
        if (p.status == PushStatus::pending)
        {
            t = std::min({t, p.first_sent_ms + cfg_.push_timeout_ms, p.last_sent_ms + cfg_.push_retransmit_ms});
        }
    }
    return t;
}

std::vector<SyncMessage>
TwinEndpoint::push_config(const std::string& txn_id, const ChangeSet& changes, std::int64_t t_ms)
{
    auto& p = pushes_[txn_id];
    if (p.status == PushStatus::applied || p.status == PushStatus::rejected ||
        (p.status == PushStatus::pending && p.transmissions > 0))
    {
        return {};
    }
    p.txn_id = txn_id;
    p.changes = changes;
    p.status = PushStatus::pending;
    p.first_sent_ms = t_ms;
    p.last_sent_ms = t_ms;
    p.transmissions = 1;
    p.ack = nullptr;
    auto m = make(MsgType::config_push, {{"txn_id", txn_id}, {"changes", change_set_to_json(changes)}});
    m.t_sim_ms = t_ms;
    return {m};
}

const PushState*
TwinEndpoint::push(const std::string& txn_id) const
{
    auto it = pushes_.find(txn_id);
    return it == pushes_.end() ? nullptr : &it->second;
}

twin::TwinMetrics
TwinEndpoint::metrics(std::int64_t t_ms) const
{
    twin::TwinMetrics m;
    m.twinning_rate_hz = cfg_.twinning_rate_hz;
    m.aot_mean_s = aot_.mean_s(t_ms);
    m.aot_max_s = aot_.max_s(t_ms);
    m.fidelity_tier = cfg_.tier;
    return m;
}

} // namespace dtran::sync

#include "dtran/sync_session.h"

#include <algorithm>

namespace dtran::sync {

SyncSession::SyncSession(World world, SessionConfig cfg)
    : cfg_(cfg)
    , world_(std::move(world))
    , down_(cfg.downlink)
    , up_(cfg.uplink)
{
    physical_ = std::make_unique<PhysicalEndpoint>(world_, cfg_.sync.twinning_rate_hz);
    twin_ = std::make_unique<TwinEndpoint>(store_, cfg_.sync);
    now_ms_ = world_.now_ms();
    twin_->on_snapshot_applied = [this](std::uint64_t seq, std::int64_t) {
        const auto& images = physical_->snapshot_images();
        auto it = images.find(seq);
        ++snapshot_checks_;
        if (it == images.end() || twin::first_state_mismatch(*store_.read(), it->second, cfg_.sync.tier))
        {
            ++snapshot_mismatches_;
        }
    };
}

void
SyncSession::start()
{
    if (started_)
    {
        return;
    }
    started_ = true;
    send_down(physical_->start(), now_ms_);
    send_up(twin_->start(now_ms_), now_ms_);
}

void
SyncSession::record_transcript(std::vector<std::string>* lines)
{
    auto tap = [lines](std::int64_t, const std::string& line, bool) { lines->push_back(line); };
    down_.set_tap(tap);
    up_.set_tap(tap);
}

void
SyncSession::send_down(const std::vector<SyncMessage>& msgs, std::int64_t t_ms)
{
    for (const auto& m : msgs)
    {
        down_.send(encode(m), t_ms);
    }
}

void
SyncSession::send_up(const std::vector<SyncMessage>& msgs, std::int64_t t_ms)
{
    for (const auto& m : msgs)
    {
        up_.send(encode(m), t_ms);
    }
}

void
SyncSession::push_config(const std::string& txn_id, const ChangeSet& changes)
{
    start();
    send_up(twin_->push_config(txn_id, changes, now_ms_), now_ms_);
}

void
SyncSession::run_until(std::int64_t t_end_ms)
{
    start();
    while (true)
    {
        const std::int64_t next_tick = world_.now_ms() + kTickMs;
        std::int64_t t = next_tick;
        if (auto d = down_.next_delivery_ms())
        {
            t = std::min(t, *d);
        }
        if (auto timer = twin_->next_timer_ms())
        {
            t = std::min(t, *timer);
        }
        t = std::max(t, now_ms_);
        if (t > t_end_ms)
        {
            break;
        }
        now_ms_ = t;

        if (t == next_tick)
        {
            while (auto f = up_.pop_due(t))
            {
                physical_->receive(decode(f->line));
            }
            world_.step();
            if (on_tick)
            {
                on_tick(t);
            }
            send_down(physical_->after_tick(), t);
        }
        while (auto f = down_.pop_due(t))
        {
            send_up(twin_->receive(decode(f->line), t), t);
        }
        if (auto timer = twin_->next_timer_ms(); timer && *timer <= t)
        {
            send_up(twin_->on_timer(t), t);
        }
    }
    now_ms_ = std::max(now_ms_, t_end_ms);
}

} // namespace dtran::sync

#include "dtran/channel.h"

#include "dtran/hashing.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dtran::sync {

void
validate(const ChannelSpec& s)
{
    if (!(s.drop_prob >= 0.0 && s.drop_prob <= 1.0))
    {
        throw std::invalid_argument("drop_prob must be in [0, 1]");
    }
    if (s.latency_ms < 0 || s.jitter_ms < 0 || s.jitter_ms > s.latency_ms)
    {
        throw std::invalid_argument("need 0 <= jitter_ms <= latency_ms");
    }
}

void
to_json(nlohmann::json& j, const ChannelSpec& s)
{
    j = {{"drop_prob", s.drop_prob}, {"latency_ms", s.latency_ms}, {"jitter_ms", s.jitter_ms}, {"seed", s.seed}};
}

void
from_json(const nlohmann::json& j, ChannelSpec& s)
{
    ChannelSpec d;
    s.drop_prob = j.value("drop_prob", d.drop_prob);
    s.latency_ms = j.value("latency_ms", d.latency_ms);
    s.jitter_ms = j.value("jitter_ms", d.jitter_ms);
    s.seed = j.value("seed", d.seed);
}

Channel::Channel(ChannelSpec spec)
    : spec_(spec)
    , rng_(spec.seed)
{
    validate(spec_);
}

double
Channel::draw()
{
    return unit_double(rng_());
}

bool
Channel::send(std::string line, std::int64_t t_now_ms)
{
    ++stats_.sent;
    const bool dropped = draw() < spec_.drop_prob;
    const auto span = static_cast<double>(2 * spec_.jitter_ms + 1);
    const auto jitter = static_cast<std::int64_t>(std::floor(draw() * span)) - spec_.jitter_ms;
    if (tap_)
    {
        tap_(t_now_ms, line, dropped);
    }
    if (dropped)
    {
        ++stats_.dropped;
        return false;
    }
    const auto at = std::max(t_now_ms + spec_.latency_ms + jitter, last_delivery_ms_);
    last_delivery_ms_ = at;
    queue_.push_back({at, std::move(line)});
    return true;
}

std::optional<std::int64_t>
Channel::next_delivery_ms() const
{
    if (queue_.empty())
    {
        return std::nullopt;
    }
    return queue_.front().deliver_at_ms;
}

std::optional<Channel::Frame>
Channel::pop_due(std::int64_t t_ms)
{
    if (queue_.empty() || queue_.front().deliver_at_ms > t_ms)
    {
        return std::nullopt;
    }
    Frame f = std::move(queue_.front());
    queue_.pop_front();
    ++stats_.delivered;
    return f;
}

} // namespace dtran::sync

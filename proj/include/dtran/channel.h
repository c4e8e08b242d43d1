#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <random>
#include <string>

#include "json.hpp"

namespace dtran::sync {

struct ChannelSpec
{
    double drop_prob = 0.01;
    std::int64_t latency_ms = 50;
    /// Uniform integer jitter in [-jitter_ms, +jitter_ms].
    std::int64_t jitter_ms = 20;
    std::uint64_t seed = 1;

    bool operator==(const ChannelSpec&) const = default;
};

/// Throws std::invalid_argument for drop_prob outside [0, 1], negative
/// latency or jitter larger than the latency.
void validate(const ChannelSpec& spec);

void to_json(nlohmann::json& j, const ChannelSpec& s);
void from_json(const nlohmann::json& j, ChannelSpec& s);

struct ChannelStats
{
    std::uint64_t sent = 0;
    std::uint64_t dropped = 0;
    std::uint64_t delivered = 0;
};

/// One direction of the simulated transport. Carries encoded frames; every
/// send consumes exactly two draws (drop, jitter) so the loss pattern depends
/// only on the seed and the number of frames sent.
class Channel
{
  public:
    struct Frame
    {
        std::int64_t deliver_at_ms = 0;
        std::string line;
    };

    /// Called for every frame handed to send(), dropped or not.
    using Tap = std::function<void(std::int64_t t_ms, const std::string& line, bool dropped)>;

    explicit Channel(ChannelSpec spec);

    /// Returns false if the frame was dropped.
    bool send(std::string line, std::int64_t t_now_ms);

    /// Delivery time of the oldest frame in flight.
    std::optional<std::int64_t> next_delivery_ms() const;

    /// Removes and returns the next frame if it is due at or before t_ms.
    std::optional<Frame> pop_due(std::int64_t t_ms);

    std::size_t in_flight() const { return queue_.size(); }
    const ChannelStats& stats() const { return stats_; }
    const ChannelSpec& spec() const { return spec_; }
    /// Worst-case one-way delay.
    std::int64_t max_delay_ms() const { return spec_.latency_ms + spec_.jitter_ms; }

    void set_tap(Tap tap) { tap_ = std::move(tap); }

  private:
    double draw();

    ChannelSpec spec_;
    std::mt19937_64 rng_;
    std::deque<Frame> queue_;
    std::int64_t last_delivery_ms_ = 0;
    ChannelStats stats_;
    Tap tap_;
};

} // namespace dtran::sync

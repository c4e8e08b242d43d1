#pragma once

#include "dtran/kpi.h"
#include "dtran/ran_sim.h"
#include "dtran/topology.h"

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

namespace dtran::twin {

enum class NodeKind
{
    site,
    cell,
    band,
    ue,
};

const char* node_kind_name(NodeKind k);
std::optional<NodeKind> node_kind_from_name(const std::string& s);

struct NodeKey
{
    NodeKind kind = NodeKind::site;
    std::string id;

    auto operator<=>(const NodeKey&) const = default;
};

NodeKey site_key(SiteId id);
NodeKey cell_key(CellId id);
NodeKey band_key(const std::string& id);
NodeKey ue_key(std::uint32_t id);

/// Source measurement time and sender sequence of the last state applied to
/// an entity.
struct SyncStamp
{
    std::int64_t t_sim_ms = -1;
    std::uint64_t seq = 0;

    bool synced() const { return t_sim_ms >= 0; }
    bool operator==(const SyncStamp&) const = default;
};

struct Node
{
    NodeKey key;
    nlohmann::json attrs = nlohmann::json::object();
    SyncStamp last_sync;

    bool operator==(const Node&) const = default;
};

enum class EdgeKind
{
    hosts,
    uses_band,
    neighbor_of,
    attached_to,
};

const char* edge_kind_name(EdgeKind k);

struct EdgeKey
{
    EdgeKind kind = EdgeKind::hosts;
    NodeKey from;
    NodeKey to;

    auto operator<=>(const EdgeKey&) const = default;
};

struct Edge
{
    EdgeKey key;
    nlohmann::json attrs = nlohmann::json::object();

    bool operator==(const Edge&) const = default;
};

enum class FidelityTier
{
    L0,
    L1,
    L2,
};

const char* tier_name(FidelityTier t);
std::optional<FidelityTier> tier_from_name(const std::string& s);

/// Whether entities of `kind` are mirrored at `tier`. L0 and L1 hold the
/// same entity set (L1 adds KPI attributes); L2 adds UEs.
bool tier_includes(FidelityTier tier, NodeKind kind);

class TwinError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

/// Versioned property graph of sites, cells, bands and UEs.
///
/// The graph only exposes whole-batch mutators; each one that changes
/// content bumps the version exactly once. Sync stamps are freshness
/// metadata and are refreshed without a version bump.
class TwinGraph
{
  public:
    std::uint64_t version() const { return version_; }
    const std::map<NodeKey, Node>& nodes() const { return nodes_; }
    const std::map<EdgeKey, Edge>& edges() const { return edges_; }
    /// World-level facts: area, seed, mobility, antenna, t_sim_ms.
    const nlohmann::json& meta() const { return meta_; }
    const Node* find(const NodeKey& key) const;
    std::size_t count(NodeKind kind) const;
    bool empty() const { return nodes_.empty(); }

    /// Highest sequence applied per sender.
    const std::map<std::string, std::uint64_t>& applied_seq() const { return applied_seq_; }

    bool operator==(const TwinGraph&) const = default;

  private:
    friend class GraphWriter;

    std::map<NodeKey, Node> nodes_;
    std::map<EdgeKey, Edge> edges_;
    nlohmann::json meta_ = nlohmann::json::object();
    std::map<std::string, std::uint64_t> applied_seq_;
    std::uint64_t version_ = 0;
};

/// One entity's new attribute values. `attrs` replaces the stored map.
struct EntityUpdate
{
    NodeKey key;
    nlohmann::json attrs = nlohmann::json::object();

    bool operator==(const EntityUpdate&) const = default;
};

struct Delta
{
    std::string sender;
    std::uint64_t seq = 0;
    std::int64_t t_sim_ms = 0;
    std::vector<EntityUpdate> updates;
};

enum class IngestStatus
{
    applied,
    stale,
    unknown_entity,
};

struct IngestResult
{
    IngestStatus status = IngestStatus::applied;
    std::uint64_t version = 0;
    std::optional<NodeKey> unknown;
};

/// Applies a state delta. A delta is a complete diff against the sender's
/// previous emission, so an in-sequence delta confirms every mirrored entity
/// as fresh at `t_sim_ms`, changed or not. Stale sequences are ignored;
/// references to cells, sites or bands never announced are rejected whole.
/// Updates for entity kinds outside `tier` are dropped.
IngestResult ingest_delta(TwinGraph& graph, const Delta& delta, FidelityTier tier);

/// Full topology sync: sites, cells, bands and the HOSTS / USES_BAND /
/// NEIGHBOR_OF edges. Existing UE nodes are kept.
std::uint64_t ingest_topology(TwinGraph& graph,
                              const Topology& topo,
                              const std::string& sender,
                              std::uint64_t seq,
                              std::int64_t t_sim_ms);

/// Replaces the whole mirrored state from a full snapshot of the physical
/// side and restamps every entity with (t_sim_ms, seq).
std::uint64_t ingest_full_state(TwinGraph& graph,
                                const Topology& topo,
                                const std::vector<EntityUpdate>& entities,
                                const std::string& sender,
                                std::uint64_t seq,
                                std::int64_t t_sim_ms,
                                FidelityTier tier);

/// Stores per-cell KPI aggregates as the `kpi` attribute of each cell.
std::uint64_t ingest_cell_kpis(TwinGraph& graph, const KpiWindow& window);

/// Attribute image of a physical world: one update per site, cell, band
/// and UE. Used for deltas, snapshots and twin-vs-physical comparison.
std::vector<EntityUpdate> world_entities(const World& world);

/// Entities whose attributes differ between two images (by key).
std::vector<EntityUpdate> diff_entities(const std::vector<EntityUpdate>& previous,
                                        const std::vector<EntityUpdate>& current);

/// Compares the mirrored physical state (ignoring twin-only attributes such
/// as `kpi`) against an attribute image. Returns the first mismatching key.
std::optional<NodeKey> first_state_mismatch(const TwinGraph& graph,
                                            const std::vector<EntityUpdate>& image,
                                            FidelityTier tier);

/// Rebuilds the topology (with the mirrored cell configs) from the graph.
Topology topology_from_graph(const TwinGraph& graph);
/// Mirrored UE states in id order.
std::vector<UeState> ues_from_graph(const TwinGraph& graph);
/// Source time of the freshest mirrored world state.
std::int64_t state_time_ms(const TwinGraph& graph);

struct AgeOfTwin
{
    std::map<NodeKey, double> per_entity_s;
    double mean_s = 0.0;
    double max_s = 0.0;
};

/// Per-entity age relative to source measurement time, over the entities of
/// the active tier. Throws TwinError("empty_twin") if nothing is synced.
AgeOfTwin age_of_twin(const TwinGraph& graph, std::int64_t t_now_ms, FidelityTier tier);

/// Normalisation scales of the fidelity score.
struct FidelityScales
{
    double throughput_bps = 50e6;
    double failures_per_ue_min = 1.0;
    double pingpong_ratio = 1.0;
};

/// 1 - mean over KPI x window of min(1, |pred - act| / scale). KPIs: mean
/// throughput, 5th-percentile throughput, failure rate, ping-pong ratio.
/// Throws TwinError for empty or misaligned series.
double fidelity_score(const std::vector<KpiWindow>& predicted,
                      const std::vector<KpiWindow>& actual,
                      const FidelityScales& scales = {});

struct TwinMetrics
{
    double twinning_rate_hz = 1.0;
    double aot_mean_s = 0.0;
    double aot_max_s = 0.0;
    double fidelity_score = 0.0;
    FidelityTier fidelity_tier = FidelityTier::L2;
};

nlohmann::json twin_metrics_to_json(const TwinMetrics& m);

inline constexpr int kSnapshotSchemaVersion = 1;

/// Stable-key-order JSON document including version and sync stamps.
nlohmann::json snapshot(const TwinGraph& graph);
/// Throws TwinError on schema mismatch or malformed input; never returns a
/// partially restored graph.
TwinGraph restore(const nlohmann::json& document);

/// Single-writer store handing immutable snapshots to concurrent readers.
class TwinStore
{
  public:
    TwinStore();
    std::shared_ptr<const TwinGraph> read() const;
    /// Copies the current graph, lets `fn` mutate the copy, then publishes
    /// it. Readers see either the old or the new graph, never a mix.
    template <typename Fn>
    auto write(Fn&& fn)
    {
        auto next = std::make_shared<TwinGraph>(*read());
        if constexpr (std::is_void_v<decltype(fn(*next))>)
        {
            fn(*next);
            publish(std::move(next));
        }
        else
        {
            auto result = fn(*next);
            publish(std::move(next));
            return result;
        }
    }

  private:
    void publish(std::shared_ptr<const TwinGraph> g);

    mutable std::mutex mu_;
    std::shared_ptr<const TwinGraph> current_;
};

} // namespace dtran::twin

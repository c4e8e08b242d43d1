#include "dtran/twin_graph.h"

#include <algorithm>
#include <cmath>
#include <set>

namespace dtran::twin {

namespace {

constexpr std::pair<NodeKind, const char*> kNodeNames[] = {
    {NodeKind::site, "site"},
    {NodeKind::cell, "cell"},
    {NodeKind::band, "band"},
    {NodeKind::ue, "ue"},
};

constexpr std::pair<EdgeKind, const char*> kEdgeNames[] = {
    {EdgeKind::hosts, "HOSTS"},
    {EdgeKind::uses_band, "USES_BAND"},
    {EdgeKind::neighbor_of, "NEIGHBOR_OF"},
    {EdgeKind::attached_to, "ATTACHED_TO"},
};

std::optional<EdgeKind>
edge_kind_from_name(const std::string& s)
{
    for (const auto& [k, n] : kEdgeNames)
    {
        if (s == n)
        {
            return k;
        }
    }
    return std::nullopt;
}

nlohmann::json
topology_meta(const Topology& topo)
{
    nlohmann::json j = topo;
    j.erase("sites");
    j.erase("cells");
    j.erase("schema_version");
    return j;
}

nlohmann::json
site_attrs(const Site& s)
{
    return {{"x_m", s.x_m}, {"y_m", s.y_m}};
}

nlohmann::json
cell_attrs(const CellSpec& c)
{
    return {{"site_id", c.site_id}, {"azimuth_deg", c.azimuth_deg}, {"bands", c.bands}, {"config", c.config}};
}

nlohmann::json
band_attrs(const radio::BandSpec& b)
{
    return {{"center_freq_mhz", b.center_freq_mhz},
            {"bandwidth_hz", b.bandwidth_hz},
            {"pathloss_offset_db", b.pathloss_offset_db}};
}

nlohmann::json
key_json(const NodeKey& k)
{
    return {{"kind", node_kind_name(k.kind)}, {"id", k.id}};
}

NodeKey
key_from_json(const nlohmann::json& j)
{
    auto kind = node_kind_from_name(j.at("kind").get<std::string>());
    if (!kind)
    {
        throw TwinError("unknown node kind");
    }
    return {*kind, j.at("id").get<std::string>()};
}

/// Twin-only attributes that the physical side never reports.
const std::set<std::string> kTwinOnlyAttrs{"kpi"};

nlohmann::json
physical_part(const nlohmann::json& attrs)
{
    nlohmann::json out = attrs;
    for (const auto& k : kTwinOnlyAttrs)
    {
        out.erase(k);
    }
    return out;
}

} // namespace

/// Sole owner of write access to TwinGraph internals.
class GraphWriter
{
  public:
    explicit GraphWriter(TwinGraph& g)
        : g_(g)
    {
    }

    std::map<NodeKey, Node>& nodes() { return g_.nodes_; }
    std::map<EdgeKey, Edge>& edges() { return g_.edges_; }
    nlohmann::json& meta() { return g_.meta_; }
    std::map<std::string, std::uint64_t>& applied_seq() { return g_.applied_seq_; }
    std::uint64_t bump() { return ++g_.version_; }
    void set_version(std::uint64_t v) { g_.version_ = v; }

    void upsert(const NodeKey& key, nlohmann::json attrs, SyncStamp stamp)
    {
        auto& n = g_.nodes_[key];
        n.key = key;
        // Keep twin-only attributes across physical updates.
        for (const auto& k : kTwinOnlyAttrs)
        {
            if (n.attrs.contains(k) && !attrs.contains(k))
            {
                attrs[k] = n.attrs[k];
            }
        }
        n.attrs = std::move(attrs);
        n.last_sync = stamp;
        if (key.kind == NodeKind::ue)
        {
            refresh_attachment(n);
        }
    }

    void refresh_attachment(const Node& ue)
    {
        std::erase_if(g_.edges_, [&](const auto& e) {
            return e.first.kind == EdgeKind::attached_to && e.first.from == ue.key;
        });
        const auto& serving = ue.attrs.contains("serving") ? ue.attrs.at("serving") : nlohmann::json();
        if (!serving.is_null())
        {
            EdgeKey ek{EdgeKind::attached_to, ue.key, cell_key(serving.get<CellId>())};
            g_.edges_[ek] = {ek,
                             {{"rsrp_dbm", ue.attrs.value("rsrp_dbm", 0.0)},
                              {"sinr_db", ue.attrs.value("sinr_db", 0.0)}}};
        }
    }

    void add_edge(EdgeKind kind, const NodeKey& from, const NodeKey& to, nlohmann::json attrs = nlohmann::json::object())
    {
        EdgeKey ek{kind, from, to};
        g_.edges_[ek] = {ek, std::move(attrs)};
    }

    void rebuild_topology(const Topology& topo, SyncStamp stamp)
    {
        std::map<NodeKey, nlohmann::json> kept;
        for (const auto& [key, node] : g_.nodes_)
        {
            if (key.kind == NodeKind::cell && node.attrs.contains("kpi"))
            {
                kept[key] = node.attrs.at("kpi");
            }
        }
        std::erase_if(g_.nodes_, [](const auto& n) { return n.first.kind != NodeKind::ue; });
        std::erase_if(g_.edges_, [](const auto& e) { return e.first.kind != EdgeKind::attached_to; });
        for (const auto& s : topo.sites)
        {
            upsert(site_key(s.id), site_attrs(s), stamp);
        }
        std::set<std::string> bands;
        for (const auto& c : topo.cells)
        {
            auto attrs = cell_attrs(c);
            if (auto it = kept.find(cell_key(c.id)); it != kept.end())
            {
                attrs["kpi"] = it->second;
            }
            upsert(cell_key(c.id), std::move(attrs), stamp);
            add_edge(EdgeKind::hosts, site_key(c.site_id), cell_key(c.id));
            for (const auto& b : c.bands)
            {
                bands.insert(b);
                add_edge(EdgeKind::uses_band, cell_key(c.id), band_key(b));
            }
        }
        for (const auto& b : bands)
        {
            upsert(band_key(b), band_attrs(radio::band_by_id(b)), stamp);
        }
        for (const auto& a : topo.cells)
        {
            for (const auto& b : topo.cells)
            {
                if (a.id == b.id)
                {
                    continue;
                }
                const Site* sa = topo.find_site(a.site_id);
                const Site* sb = topo.find_site(b.site_id);
                add_edge(EdgeKind::neighbor_of,
                         cell_key(a.id),
                         cell_key(b.id),
                         {{"distance_m", std::hypot(sa->x_m - sb->x_m, sa->y_m - sb->y_m)}});
            }
        }
        g_.meta_ = topology_meta(topo);
    }

  private:
    TwinGraph& g_;
};

const char*
node_kind_name(NodeKind k)
{
    for (const auto& [kind, name] : kNodeNames)
    {
        if (kind == k)
        {
            return name;
        }
    }
    return "unknown";
}

std::optional<NodeKind>
node_kind_from_name(const std::string& s)
{
    for (const auto& [kind, name] : kNodeNames)
    {
        if (s == name)
        {
            return kind;
        }
    }
    return std::nullopt;
}

const char*
edge_kind_name(EdgeKind k)
{
    for (const auto& [kind, name] : kEdgeNames)
    {
        if (kind == k)
        {
            return name;
        }
    }
    return "UNKNOWN";
}

NodeKey
site_key(SiteId id)
{
    return {NodeKind::site, std::to_string(id)};
}

NodeKey
cell_key(CellId id)
{
    return {NodeKind::cell, std::to_string(id)};
}

NodeKey
band_key(const std::string& id)
{
    return {NodeKind::band, id};
}

NodeKey
ue_key(std::uint32_t id)
{
    return {NodeKind::ue, std::to_string(id)};
}

const char*
tier_name(FidelityTier t)
{
    switch (t)
    {
    case FidelityTier::L0:
        return "L0";
    case FidelityTier::L1:
        return "L1";
    case FidelityTier::L2:
        return "L2";
    }
    return "L2";
}

std::optional<FidelityTier>
tier_from_name(const std::string& s)
{
    if (s == "L0")
    {
        return FidelityTier::L0;
    }
    if (s == "L1")
    {
        return FidelityTier::L1;
    }
    if (s == "L2")
    {
        return FidelityTier::L2;
    }
    return std::nullopt;
}

bool
tier_includes(FidelityTier tier, NodeKind kind)
{
    return kind != NodeKind::ue || tier == FidelityTier::L2;
}

const Node*
TwinGraph::find(const NodeKey& key) const
{
    auto it = nodes_.find(key);
    return it == nodes_.end() ? nullptr : &it->second;
}

std::size_t
TwinGraph::count(NodeKind kind) const
{
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [&](const auto& n) { return n.first.kind == kind; }));
}

IngestResult
ingest_delta(TwinGraph& graph, const Delta& delta, FidelityTier tier)
{
    GraphWriter w(graph);
    auto& last = w.applied_seq()[delta.sender];
    if (delta.seq <= last)
    {
        return {IngestStatus::stale, graph.version(), std::nullopt};
    }

    std::vector<const EntityUpdate*> accepted;
    for (const auto& u : delta.updates)
    {
        if (!tier_includes(tier, u.key.kind))
        {
            continue;
        }
        if (u.key.kind != NodeKind::ue && !graph.find(u.key))
        {
            return {IngestStatus::unknown_entity, graph.version(), u.key};
        }
        if (u.key.kind == NodeKind::ue && u.attrs.contains("serving") && !u.attrs.at("serving").is_null())
        {
            const auto serving = cell_key(u.attrs.at("serving").get<CellId>());
            if (!graph.find(serving))
            {
                return {IngestStatus::unknown_entity, graph.version(), serving};
            }
        }
        accepted.push_back(&u);
    }

    const SyncStamp stamp{delta.t_sim_ms, delta.seq};
    last = delta.seq;
    for (const auto* u : accepted)
    {
        w.upsert(u->key, u->attrs, stamp);
    }
    for (auto& [key, node] : w.nodes())
    {
        if (tier_includes(tier, key.kind))
        {
            node.last_sync = stamp;
        }
    }
    if (!accepted.empty())
    {
        w.bump();
    }
    return {IngestStatus::applied, graph.version(), std::nullopt};
}

std::uint64_t
ingest_topology(TwinGraph& graph,
                const Topology& topo,
                const std::string& sender,
                std::uint64_t seq,
                std::int64_t t_sim_ms)
{
    GraphWriter w(graph);
    w.rebuild_topology(topo, {t_sim_ms, seq});
    auto& last = w.applied_seq()[sender];
    last = std::max(last, seq);
    return w.bump();
}

std::uint64_t
ingest_full_state(TwinGraph& graph,
                  const Topology& topo,
                  const std::vector<EntityUpdate>& entities,
                  const std::string& sender,
                  std::uint64_t seq,
                  std::int64_t t_sim_ms,
                  FidelityTier tier)
{
    GraphWriter w(graph);
    const SyncStamp stamp{t_sim_ms, seq};
    std::erase_if(w.nodes(), [](const auto& n) { return n.first.kind == NodeKind::ue; });
    std::erase_if(w.edges(), [](const auto& e) { return e.first.kind == EdgeKind::attached_to; });
    w.rebuild_topology(topo, stamp);
    for (const auto& e : entities)
    {
        if (tier_includes(tier, e.key.kind))
        {
            w.upsert(e.key, e.attrs, stamp);
        }
    }
    w.applied_seq()[sender] = seq;
    return w.bump();
}

std::uint64_t
ingest_cell_kpis(TwinGraph& graph, const KpiWindow& window)
{
    GraphWriter w(graph);
    bool changed = false;
    for (const auto& [id, c] : window.per_cell)
    {
        auto it = w.nodes().find(cell_key(id));
        if (it == w.nodes().end())
        {
            continue;
        }
        it->second.attrs["kpi"] = {{"t_end_s", window.t_end_s},
                                   {"mean_thr_bps", c.mean_thr_bps},
                                   {"p5_thr_bps", c.p5_thr_bps},
                                   {"rlf_count", c.rlf_count},
                                   {"ho_count", c.ho_count},
                                   {"pingpong_count", c.pingpong_count}};
        changed = true;
    }
    return changed ? w.bump() : graph.version();
}

std::vector<EntityUpdate>
world_entities(const World& world)
{
    const auto& topo = world.topology();
    std::vector<EntityUpdate> out;
    for (const auto& s : topo.sites)
    {
        out.push_back({site_key(s.id), site_attrs(s)});
    }
    std::set<std::string> bands;
    for (const auto& c : topo.cells)
    {
        out.push_back({cell_key(c.id), cell_attrs(c)});
        bands.insert(c.bands.begin(), c.bands.end());
    }
    for (const auto& b : bands)
    {
        out.push_back({band_key(b), band_attrs(radio::band_by_id(b))});
    }
    for (const auto& ue : world.ues())
    {
        out.push_back({ue_key(ue.id), ue_state_to_json(ue)});
    }
    return out;
}

std::vector<EntityUpdate>
diff_entities(const std::vector<EntityUpdate>& previous, const std::vector<EntityUpdate>& current)
{
    std::map<NodeKey, const nlohmann::json*> prev;
    for (const auto& e : previous)
    {
        prev[e.key] = &e.attrs;
    }
    std::vector<EntityUpdate> out;
    for (const auto& e : current)
    {
        auto it = prev.find(e.key);
        if (it == prev.end() || *it->second != e.attrs)
        {
            out.push_back(e);
        }
    }
    return out;
}

std::optional<NodeKey>
first_state_mismatch(const TwinGraph& graph, const std::vector<EntityUpdate>& image, FidelityTier tier)
{
    std::size_t expected = 0;
    for (const auto& e : image)
    {
        if (!tier_includes(tier, e.key.kind))
        {
            continue;
        }
        ++expected;
        const Node* n = graph.find(e.key);
        if (!n || physical_part(n->attrs) != e.attrs)
        {
            return e.key;
        }
    }
    if (graph.nodes().size() != expected)
    {
        for (const auto& [key, node] : graph.nodes())
        {
            const bool listed = std::any_of(image.begin(), image.end(), [&](const auto& e) { return e.key == key; });
            if (!listed)
            {
                return key;
            }
        }
    }
    return std::nullopt;
}

Topology
topology_from_graph(const TwinGraph& graph)
{
    if (graph.meta().empty())
    {
        throw TwinError("twin has no topology");
    }
    nlohmann::json j = graph.meta();
    j["sites"] = nlohmann::json::array();
    j["cells"] = nlohmann::json::array();
    for (const auto& [key, node] : graph.nodes())
    {
        if (key.kind == NodeKind::site)
        {
            j["sites"].push_back({{"id", std::stoul(key.id)}, {"x_m", node.attrs.at("x_m")}, {"y_m", node.attrs.at("y_m")}});
        }
        else if (key.kind == NodeKind::cell)
        {
            j["cells"].push_back({{"id", std::stoul(key.id)},
                                  {"site_id", node.attrs.at("site_id")},
                                  {"azimuth_deg", node.attrs.at("azimuth_deg")},
                                  {"bands", node.attrs.at("bands")},
                                  {"config", node.attrs.at("config")}});
        }
    }
    // Numeric order; map order of string ids is lexicographic.
    auto by_id = [](const nlohmann::json& a, const nlohmann::json& b) {
        return a.at("id").get<std::uint64_t>() < b.at("id").get<std::uint64_t>();
    };
    std::sort(j["sites"].begin(), j["sites"].end(), by_id);
    std::sort(j["cells"].begin(), j["cells"].end(), by_id);
    try
    {
        return j.get<Topology>();
    }
    catch (const TopologyError& e)
    {
        throw TwinError(std::string("twin topology unusable: ") + e.what());
    }
}

std::vector<UeState>
ues_from_graph(const TwinGraph& graph)
{
    std::vector<UeState> out;
    for (const auto& [key, node] : graph.nodes())
    {
        if (key.kind == NodeKind::ue)
        {
            out.push_back(ue_state_from_json(static_cast<std::uint32_t>(std::stoul(key.id)), node.attrs));
        }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
}

std::int64_t
state_time_ms(const TwinGraph& graph)
{
    std::int64_t t = -1;
    for (const auto& [key, node] : graph.nodes())
    {
        t = std::max(t, node.last_sync.t_sim_ms);
    }
    return t;
}

AgeOfTwin
age_of_twin(const TwinGraph& graph, std::int64_t t_now_ms, FidelityTier tier)
{
    AgeOfTwin out;
    double sum = 0.0;
    for (const auto& [key, node] : graph.nodes())
    {
        if (!tier_includes(tier, key.kind) || !node.last_sync.synced())
        {
            continue;
        }
        const double age = static_cast<double>(t_now_ms - node.last_sync.t_sim_ms) / 1000.0;
        out.per_entity_s[key] = age;
        sum += age;
        out.max_s = std::max(out.max_s, age);
    }
    if (out.per_entity_s.empty())
    {
        throw TwinError("empty_twin");
    }
    out.mean_s = sum / static_cast<double>(out.per_entity_s.size());
    return out;
}

double
fidelity_score(const std::vector<KpiWindow>& predicted,
               const std::vector<KpiWindow>& actual,
               const FidelityScales& scales)
{
    if (predicted.empty() || predicted.size() != actual.size())
    {
        throw TwinError("misaligned KPI series");
    }
    double err = 0.0;
    for (std::size_t w = 0; w < predicted.size(); ++w)
    {
        const auto& p = predicted[w];
        const auto& a = actual[w];
        if (p.t_start_s != a.t_start_s || p.t_end_s != a.t_end_s)
        {
            throw TwinError("misaligned KPI series");
        }
        err += std::min(1.0, std::abs(p.mean_thr_bps - a.mean_thr_bps) / scales.throughput_bps);
        err += std::min(1.0, std::abs(p.p5_thr_bps - a.p5_thr_bps) / scales.throughput_bps);
        err += std::min(1.0, std::abs(p.failures_per_ue_min() - a.failures_per_ue_min()) /
                                 scales.failures_per_ue_min);
        err += std::min(1.0, std::abs(p.pingpong_ratio() - a.pingpong_ratio()) / scales.pingpong_ratio);
    }
    return 1.0 - err / (4.0 * static_cast<double>(predicted.size()));
}

nlohmann::json
twin_metrics_to_json(const TwinMetrics& m)
{
    return {{"twinning_rate_hz", m.twinning_rate_hz},
            {"aot_mean_s", m.aot_mean_s},
            {"aot_max_s", m.aot_max_s},
            {"fidelity_score", m.fidelity_score},
            {"tier", tier_name(m.fidelity_tier)}};
}

nlohmann::json
snapshot(const TwinGraph& graph)
{
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& [key, node] : graph.nodes())
    {
        nodes.push_back({{"kind", node_kind_name(key.kind)},
                         {"id", key.id},
                         {"attrs", node.attrs},
                         {"last_sync", {{"t_sim_ms", node.last_sync.t_sim_ms}, {"seq", node.last_sync.seq}}}});
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [key, edge] : graph.edges())
    {
        edges.push_back({{"kind", edge_kind_name(key.kind)},
                         {"from", key_json(key.from)},
                         {"to", key_json(key.to)},
                         {"attrs", edge.attrs}});
    }
    return {{"schema_version", kSnapshotSchemaVersion},
            {"version", graph.version()},
            {"meta", graph.meta()},
            {"applied_seq", graph.applied_seq()},
            {"nodes", nodes},
            {"edges", edges}};
}

TwinGraph
restore(const nlohmann::json& document)
{
    TwinGraph g;
    GraphWriter w(g);
    try
    {
        if (!document.is_object() || !document.contains("schema_version") ||
            document.at("schema_version") != kSnapshotSchemaVersion)
        {
            throw TwinError("snapshot schema_version mismatch");
        }
        w.set_version(document.at("version").get<std::uint64_t>());
        w.meta() = document.at("meta");
        if (!w.meta().is_object())
        {
            throw TwinError("snapshot meta must be an object");
        }
        w.applied_seq() = document.at("applied_seq").get<std::map<std::string, std::uint64_t>>();
        for (const auto& n : document.at("nodes"))
        {
            Node node;
            node.key = key_from_json(n);
            node.attrs = n.at("attrs");
            node.last_sync = {n.at("last_sync").at("t_sim_ms").get<std::int64_t>(),
                              n.at("last_sync").at("seq").get<std::uint64_t>()};
            if (!w.nodes().emplace(node.key, node).second)
            {
                throw TwinError("duplicate node in snapshot");
            }
        }
        for (const auto& e : document.at("edges"))
        {
            auto kind = edge_kind_from_name(e.at("kind").get<std::string>());
            if (!kind)
            {
                throw TwinError("unknown edge kind in snapshot");
            }
            EdgeKey key{*kind, key_from_json(e.at("from")), key_from_json(e.at("to"))};
            if (!g.find(key.from) || !g.find(key.to))
            {
                throw TwinError("snapshot edge references a missing node");
            }
            w.edges()[key] = {key, e.at("attrs")};
        }
    }
    catch (const nlohmann::json::exception& e)
    {
        throw TwinError(std::string("malformed snapshot: ") + e.what());
    }
    return g;
}

TwinStore::TwinStore()
    : current_(std::make_shared<TwinGraph>())
{
}

std::shared_ptr<const TwinGraph>
TwinStore::read() const
{
    std::lock_guard lock(mu_);
    return current_;
}

void
TwinStore::publish(std::shared_ptr<const TwinGraph> g)
{
    std::lock_guard lock(mu_);
    current_ = std::move(g);
}

} // namespace dtran::twin

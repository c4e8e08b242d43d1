#include "dtran/twin_graph.h"

#include "doctest.h"

#include <algorithm>
#include <atomic>
#include <set>
#include <thread>

using namespace dtran;
using namespace dtran::twin;

namespace {

TwinGraph
synced_default(const World& w, FidelityTier tier = FidelityTier::L2)
{
    TwinGraph g;
    ingest_full_state(g, w.topology(), world_entities(w), "phy", 1, w.now_ms(), tier);
    return g;
}

KpiWindow
window(double t0, double t1, double mean, double p5, std::uint64_t rlf, std::uint64_t ho, std::uint64_t pp)
{
    KpiWindow k;
    k.t_start_s = t0;
    k.t_end_s = t1;
    k.mean_thr_bps = mean;
    k.p5_thr_bps = p5;
    k.rlf_count = rlf;
    k.ho_count = ho;
    k.pingpong_count = pp;
    k.ue_count = 10;
    return k;
}

} // namespace

TEST_CASE("names round trip")
{
    for (auto k : {NodeKind::site, NodeKind::cell, NodeKind::band, NodeKind::ue})
    {
        CHECK(node_kind_from_name(node_kind_name(k)) == k);
    }
    CHECK_FALSE(node_kind_from_name("tower"));
    for (auto t : {FidelityTier::L0, FidelityTier::L1, FidelityTier::L2})
    {
        CHECK(tier_from_name(tier_name(t)) == t);
    }
    CHECK_FALSE(tier_from_name("L3"));
}

TEST_CASE("topology sync of the default network")
{
    World w(default_desk_topology());
    TwinGraph g = synced_default(w);
    CHECK(g.count(NodeKind::site) == 7);
    CHECK(g.count(NodeKind::cell) == 21);
    CHECK(g.count(NodeKind::band) == 2);
    CHECK(g.count(NodeKind::ue) == 50);
    CHECK(g.nodes().size() == 80);

    std::size_t hosts = 0, uses = 0, neigh = 0, attached = 0;
    for (const auto& [key, edge] : g.edges())
    {
        CHECK(g.find(key.from));
        CHECK(g.find(key.to));
        switch (key.kind)
        {
        case EdgeKind::hosts:
            ++hosts;
            break;
        case EdgeKind::uses_band:
            ++uses;
            break;
        case EdgeKind::neighbor_of:
            ++neigh;
            CHECK(g.edges().count({EdgeKind::neighbor_of, key.to, key.from}) == 1);
            CHECK(edge.attrs.at("distance_m").get<double>() >= 0.0);
            break;
        case EdgeKind::attached_to:
            ++attached;
            CHECK(edge.attrs.contains("rsrp_dbm"));
            CHECK(edge.attrs.contains("sinr_db"));
            break;
        }
    }
    CHECK(hosts == 21);
    CHECK(uses == 42);
    CHECK(neigh == 21 * 20);
    CHECK(attached == 50);

    CHECK(topology_from_graph(g) == w.topology());
    CHECK(ues_from_graph(g) == w.ues());
    CHECK(state_time_ms(g) == 0);
    CHECK_FALSE(first_state_mismatch(g, world_entities(w), FidelityTier::L2));
}

TEST_CASE("ingest_topology keeps UEs and reports edges")
{
    TwinGraph g;
    const auto v = ingest_topology(g, line_topology(2, 4, 1), "phy", 2, 0);
    CHECK(v == 1);
    CHECK(g.nodes().size() == 2 + 6 + 2);
    CHECK(g.applied_seq().at("phy") == 2);
    const auto* e = &g.edges().at({EdgeKind::neighbor_of, cell_key(0), cell_key(3)});
    CHECK(e->attrs.at("distance_m").get<double>() == doctest::Approx(500.0));
    CHECK(g.edges().at({EdgeKind::neighbor_of, cell_key(0), cell_key(1)}).attrs.at("distance_m") == 0.0);
}

TEST_CASE("ingest_delta")
{
    World w(line_topology(2, 5, 3));
    TwinGraph g = synced_default(w);
    const auto v0 = g.version();

    SUBCASE("empty delta leaves the version unchanged")
    {
        const auto r = ingest_delta(g, {"phy", 2, 100, {}}, FidelityTier::L2);
        CHECK(r.status == IngestStatus::applied);
        CHECK(g.version() == v0);
        CHECK(g.applied_seq().at("phy") == 2);
    }

    SUBCASE("duplicate delivery is ignored")
    {
        const auto before = world_entities(w);
        w.run_until(1000);
        Delta d{"phy", 2, w.now_ms(), diff_entities(before, world_entities(w))};
        REQUIRE_FALSE(d.updates.empty());
        CHECK(ingest_delta(g, d, FidelityTier::L2).status == IngestStatus::applied);
        CHECK(g.version() == v0 + 1);
        const TwinGraph once = g;
        CHECK(ingest_delta(g, d, FidelityTier::L2).status == IngestStatus::stale);
        CHECK(g == once);
        CHECK_FALSE(first_state_mismatch(g, world_entities(w), FidelityTier::L2));
        CHECK(ues_from_graph(g) == w.ues());
    }

    SUBCASE("in-sequence delta refreshes every entity")
    {
        ingest_delta(g, {"phy", 2, 700, {}}, FidelityTier::L2);
        for (const auto& [key, node] : g.nodes())
        {
            CHECK(node.last_sync == SyncStamp{700, 2});
        }
    }

    SUBCASE("unknown cell rejects the batch")
    {
        const TwinGraph before = g;
        Delta d{"phy", 2, 100, {{site_key(0), {{"x_m", 1.0}, {"y_m", 0.0}}}, {cell_key(99), {}}}};
        const auto r = ingest_delta(g, d, FidelityTier::L2);
        CHECK(r.status == IngestStatus::unknown_entity);
        REQUIRE(r.unknown);
        CHECK(*r.unknown == cell_key(99));
        CHECK(g == before);
    }

    SUBCASE("UE attached to an unknown cell rejects the batch")
    {
        auto attrs = ue_state_to_json(w.ues()[0]);
        attrs["serving"] = 40;
        const auto r = ingest_delta(g, {"phy", 2, 100, {{ue_key(0), attrs}}}, FidelityTier::L2);
        CHECK(r.status == IngestStatus::unknown_entity);
        CHECK(*r.unknown == cell_key(40));
    }

    SUBCASE("UEs are creatable")
    {
        auto attrs = ue_state_to_json(w.ues()[0]);
        ingest_delta(g, {"phy", 2, 100, {{ue_key(77), attrs}}}, FidelityTier::L2);
        CHECK(g.count(NodeKind::ue) == 6);
        CHECK(g.edges().count({EdgeKind::attached_to, ue_key(77), cell_key(attrs.at("serving").get<CellId>())}));
    }

    SUBCASE("UE updates dropped below L2")
    {
        auto attrs = ue_state_to_json(w.ues()[0]);
        TwinGraph l1 = synced_default(w, FidelityTier::L1);
        CHECK(l1.count(NodeKind::ue) == 0);
        const auto v = l1.version();
        ingest_delta(l1, {"phy", 2, 100, {{ue_key(0), attrs}}}, FidelityTier::L1);
        CHECK(l1.count(NodeKind::ue) == 0);
        CHECK(l1.version() == v);
    }
}

TEST_CASE("tier monotonicity")
{
    World w(default_desk_topology());
    std::vector<std::set<NodeKey>> sets;
    for (auto t : {FidelityTier::L0, FidelityTier::L1, FidelityTier::L2})
    {
        std::set<NodeKey> keys;
        const TwinGraph g = synced_default(w, t);
        for (const auto& [k, n] : g.nodes())
        {
            keys.insert(k);
        }
        sets.push_back(keys);
    }
    CHECK(std::includes(sets[1].begin(), sets[1].end(), sets[0].begin(), sets[0].end()));
    CHECK(std::includes(sets[2].begin(), sets[2].end(), sets[1].begin(), sets[1].end()));
    CHECK(sets[2].size() > sets[1].size());
}

TEST_CASE("cell kpis survive physical updates")
{
    World w(line_topology(1, 3, 3));
    w.run_until(10000);
    TwinGraph g = synced_default(w, FidelityTier::L1);
    const auto v = g.version();
    const auto k = aggregate_kpis(w.log(), 0.0, 10.0, 3);
    CHECK(ingest_cell_kpis(g, k) == v + 1);
    const NodeKey key = cell_key(k.per_cell.begin()->first);
    REQUIRE(g.find(key)->attrs.contains("kpi"));

    auto attrs = g.find(key)->attrs;
    attrs.erase("kpi");
    attrs["config"]["tilt_deg"] = 5;
    ingest_delta(g, {"phy", 2, 10000, {{key, attrs}}}, FidelityTier::L1);
    CHECK(g.find(key)->attrs.contains("kpi"));
    CHECK(g.find(key)->attrs.at("config").at("tilt_deg") == 5);

    ingest_full_state(g, w.topology(), world_entities(w), "phy", 3, 10000, FidelityTier::L1);
    CHECK(g.find(key)->attrs.contains("kpi"));
    CHECK_FALSE(first_state_mismatch(g, world_entities(w), FidelityTier::L1));
}

TEST_CASE("version never decreases")
{
    World w(line_topology(2, 8, 11));
    TwinGraph g;
    std::uint64_t last = g.version();
    auto prev = world_entities(w);
    ingest_full_state(g, w.topology(), prev, "phy", 1, 0, FidelityTier::L2);
    for (std::uint64_t seq = 2; seq < 120; ++seq)
    {
        w.step();
        auto cur = world_entities(w);
        // Replays and stale seqs are mixed in.
        ingest_delta(g, {"phy", seq, w.now_ms(), diff_entities(prev, cur)}, FidelityTier::L2);
        ingest_delta(g, {"phy", seq - 1, w.now_ms(), diff_entities(prev, cur)}, FidelityTier::L2);
        prev = cur;
        CHECK(g.version() >= last);
        last = g.version();
        CHECK_FALSE(first_state_mismatch(g, cur, FidelityTier::L2));
    }
}

TEST_CASE("age of twin")
{
    TwinGraph g;
    CHECK_THROWS_WITH_AS(age_of_twin(g, 0, FidelityTier::L2), "empty_twin", TwinError);

    ingest_topology(g, line_topology(1, 1, 1), "phy", 1, 10000);
    auto a = age_of_twin(g, 11500, FidelityTier::L2);
    CHECK(a.mean_s == doctest::Approx(1.5));
    CHECK(a.max_s == doctest::Approx(1.5));
    CHECK(a.per_entity_s.at(site_key(0)) == doctest::Approx(1.5));

    World w(default_desk_topology());
    w.run_until(4000);
    TwinGraph s = synced_default(w);
    a = age_of_twin(s, w.now_ms() + 50, FidelityTier::L2);
    CHECK(a.per_entity_s.size() == 80);
    for (const auto& [k, age] : a.per_entity_s)
    {
        CHECK(age == doctest::Approx(0.05));
    }
    // L1 aggregates ignore UE nodes.
    CHECK(age_of_twin(s, w.now_ms(), FidelityTier::L1).per_entity_s.size() == 30);
}

TEST_CASE("fidelity score")
{
    std::vector<KpiWindow> act{window(0, 10, 20e6, 2e6, 1, 4, 1), window(10, 20, 18e6, 1e6, 0, 2, 0)};
    CHECK(fidelity_score(act, act) == 1.0);

    auto far = act;
    for (auto& k : far)
    {
        k.mean_thr_bps += 60e6;
        k.p5_thr_bps += 50e6;
        k.rlf_count += 100;
        k.ho_count = 1;
        k.pingpong_count = 0;
    }
    far[1].pingpong_count = 1;
    far[0].ho_count = 0;
    act[0].pingpong_count = 4;
    CHECK(fidelity_score(far, act) == 0.0);

    // A 10 Mb/s error on mean throughput in one of two windows.
    auto near = act;
    near[0].mean_thr_bps += 10e6;
    CHECK(fidelity_score(near, act) == doctest::Approx(1.0 - 0.2 / 8.0));

    CHECK_THROWS_AS(fidelity_score(act, {act[0]}), TwinError);
    CHECK_THROWS_AS(fidelity_score({}, {}), TwinError);
    auto shifted = act;
    shifted[1].t_end_s = 21;
    CHECK_THROWS_AS(fidelity_score(shifted, act), TwinError);
}

TEST_CASE("snapshot round trip")
{
    TwinGraph empty;
    CHECK(restore(snapshot(empty)) == empty);

    World w(default_desk_topology());
    w.run_until(3000);
    TwinGraph g = synced_default(w);
    ingest_cell_kpis(g, aggregate_kpis(w.log(), 0.0, 3.0, 50));
    const auto doc = snapshot(g);
    CHECK(doc.at("schema_version") == 1);
    const TwinGraph r = restore(doc);
    CHECK(r == g);
    CHECK(r.version() == g.version());
    CHECK(snapshot(r).dump() == doc.dump());
    CHECK(restore(nlohmann::json::parse(doc.dump())) == g);

    SUBCASE("corrupt documents")
    {
        auto bad = doc;
        bad["schema_version"] = 2;
        CHECK_THROWS_AS(restore(bad), TwinError);
        CHECK_THROWS_AS(restore(nlohmann::json::array()), TwinError);
        bad = doc;
        bad["nodes"][0].erase("attrs");
        CHECK_THROWS_AS(restore(bad), TwinError);
        bad = doc;
        bad["edges"][0]["to"]["id"] = "999";
        CHECK_THROWS_AS(restore(bad), TwinError);
        bad = doc;
        bad["nodes"][0]["kind"] = "tower";
        CHECK_THROWS_AS(restore(bad), TwinError);
    }
}

TEST_CASE("twin metrics schema")
{
    const auto j = twin_metrics_to_json({2.0, 0.3, 0.6, 1.0, FidelityTier::L1});
    for (const char* f : {"twinning_rate_hz", "aot_mean_s", "aot_max_s", "fidelity_score", "tier"})
    {
        CHECK(j.contains(f));
    }
    CHECK(j.at("tier") == "L1");
}

TEST_CASE("store readers see whole versions")
{
    TwinStore store;
    World w(line_topology(2, 10, 5));
    store.write([&](TwinGraph& g) {
        ingest_full_state(g, w.topology(), world_entities(w), "phy", 1, 0, FidelityTier::L2);
    });
    std::atomic<bool> done{false};
    std::atomic<int> bad{0};
    std::thread reader([&] {
        while (!done)
        {
            auto g = store.read();
            // Every published version has one consistent stamp across entities.
            const auto t = g->nodes().begin()->second.last_sync;
            for (const auto& [k, n] : g->nodes())
            {
                if (!(n.last_sync == t))
                {
                    ++bad;
                }
            }
        }
    });
    auto prev = world_entities(w);
    for (std::uint64_t seq = 2; seq < 200; ++seq)
    {
        w.step();
        auto cur = world_entities(w);
        const auto v = store.write([&](TwinGraph& g) {
            return ingest_delta(g, {"phy", seq, w.now_ms(), diff_entities(prev, cur)}, FidelityTier::L2).version;
        });
        CHECK(v == store.read()->version());
        prev = cur;
    }
    done = true;
    reader.join();
    CHECK(bad == 0);
}

#include "dtran/optimizer.h"
#include "dtran/sync_session.h"

#include "doctest.h"

#include <cmath>
#include <random>
#include <set>

using namespace dtran;
using namespace dtran::opt;

namespace {

const std::vector<Coordinate> kTwoCellTilt{{1, CellParam::tilt}, {2, CellParam::tilt}};

Scenario
two_cell(int tilt1 = 12, int tilt2 = 12)
{
    auto topo = two_cell_topology();
    topo.cells[0].config.tilt_deg = tilt1;
    topo.cells[1].config.tilt_deg = tilt2;
    return scenario_from_world(World(topo));
}

ConfigEvaluator
oracle_evaluator(const Scenario& s, UtilitySpec spec = {})
{
    return ConfigEvaluator(s, spec, 30.0, replication_seeds(s.topology.seed, 3));
}

KpiWindow
window(double mean_mbps, double p5_mbps, std::uint64_t rlf, std::uint64_t ho, std::uint64_t pp)
{
    KpiWindow k;
    k.t_start_s = 0.0;
    k.t_end_s = 60.0;
    k.ue_count = 4;
    k.mean_thr_bps = mean_mbps * 1e6;
    k.p5_thr_bps = p5_mbps * 1e6;
    k.rlf_count = rlf;
    k.ho_count = ho;
    k.pingpong_count = pp;
    return k;
}

ReplicationReport
replication(double before, double after, bool edge_ok)
{
    ReplicationReport r;
    r.utility_before = before;
    r.utility_after = after;
    r.constraints_after.edge_ok = edge_ok;
    return r;
}

WhatIfReport
report_of(std::vector<ReplicationReport> reps, ChangeSet changes)
{
    WhatIfReport w;
    w.changes = std::move(changes);
    for (const auto& r : reps)
    {
        w.utility_before += r.utility_before / static_cast<double>(reps.size());
        w.utility_after += r.utility_after / static_cast<double>(reps.size());
    }
    w.replications = std::move(reps);
    return w;
}

ChangeSet
one_change()
{
    return {{1, CellConfig{}}};
}

std::string
encode_cfg(const ConfigMap& m)
{
    std::string s;
    for (const auto& [id, c] : m)
    {
        s += std::to_string(id) + ":" + nlohmann::json(c).dump() + ";";
    }
    return s;
}

} // namespace

TEST_CASE("utility arithmetic")
{
    const UtilitySpec spec;
    CHECK(utility(window(20, 2, 0, 0, 0), spec) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(utility(KpiWindow{}, spec) == 0.0);
    // 1 RLF over 4 UEs x 1 min = 0.25 per UE-minute; 1 ping-pong in 10 handovers.
    CHECK(utility(window(10, 1, 1, 10, 1), spec) == doctest::Approx(0.15).epsilon(1e-12));
    CHECK(utility(window(100, 100, 0, 0, 0), spec) == doctest::Approx(3.0));

    auto c = check_constraints(window(10, 0.99, 0, 0, 0), spec);
    CHECK_FALSE(c.edge_ok);
    CHECK(c.fail_ok);
    c = check_constraints(window(10, 1, 3, 0, 0), spec);
    CHECK(c.edge_ok);
    CHECK_FALSE(c.fail_ok);
    CHECK(c.violations() == 1);

    UtilitySpec parsed = nlohmann::json{{"w_pp", 3.0}};
    CHECK(parsed.w_pp == 3.0);
    CHECK(parsed.w_thr == 1.0);
    CHECK(nlohmann::json(spec).get<UtilitySpec>() == spec);
    CHECK_THROWS_AS((nlohmann::json{{"w_thr", -1.0}}.get<UtilitySpec>()), std::invalid_argument);
    CHECK_THROWS_AS((nlohmann::json{{"t_ref_bps", 0.0}}.get<UtilitySpec>()), std::invalid_argument);
}

TEST_CASE("whatif")
{
    const UtilitySpec spec;

    SUBCASE("empty change list leaves every replication unchanged")
    {
        World w(default_desk_topology(42));
        w.run_until(20000);
        const auto s = scenario_from_world(w);
        WhatIfRequest req;
        req.horizon_s = 10.0;
        const auto r = whatif(s, req, spec);
        REQUIRE(r.replications.size() == 3);
        for (const auto& rep : r.replications)
        {
            CHECK(rep.utility_after == rep.utility_before);
            CHECK(rep.after == rep.before);
        }
        CHECK(r.utility_after == r.utility_before);
        CHECK(r.seeds() == replication_seeds(42, 3));
    }

    SUBCASE("same seed as the physical network reproduces its utility")
    {
        sync::SessionConfig cfg;
        cfg.sync.twinning_rate_hz = 10.0;
        cfg.downlink = {0.0, 0, 0, 1};
        cfg.uplink = {0.0, 0, 0, 2};
        sync::SyncSession session(World(default_desk_topology(42)), cfg);
        session.run_until(20000);
        const auto graph = session.store().read();
        const auto s = scenario_from_twin(*graph, twin::FidelityTier::L2);
        REQUIRE(s.t0_ms == session.world().now_ms());

        World physical = session.world();
        physical.clear_log();
        physical.run_until(s.t0_ms + 30000);
        const auto measured = aggregate_kpis(physical.log(), s.t0_ms / 1000.0, s.t0_ms / 1000.0 + 30.0, 50);

        WhatIfRequest req;
        req.seeds = {42};
        const auto r = whatif(s, req, spec);
        CHECK(r.replications.at(0).before == measured);
        CHECK(r.utility_before == utility(measured, spec));
    }

    SUBCASE("down-tilting an isolated cell lowers a far UE's utility")
    {
        Topology t;
        t.sites = {{0, 0.0, 0.0}};
        CellSpec c;
        c.id = 0;
        c.site_id = 0;
        c.bands = {"A"};
        c.config.tilt_deg = 0;
        t.cells = {c};
        t.area = {-2000.0, -2000.0, 2000.0, 2000.0};
        t.mobility = Mobility::stationary;
        t.ue_placements = {{0.0, 1200.0}};
        t.ue_count = 1;
        const auto s = scenario_from_world(World(t));
        WhatIfRequest req;
        CellConfig tilted = c.config;
        tilted.tilt_deg = 15;
        req.changes = {{0, tilted}};
        const auto r = whatif(s, req, spec);
        CHECK(r.utility_after < r.utility_before);
        CHECK(r.deltas.mean_thr_bps < 0.0);
    }

    SUBCASE("invalid changes are rejected before simulating")
    {
        const auto s = two_cell();
        WhatIfRequest req;
        CellConfig bad;
        bad.tilt_deg = 16;
        req.changes = {{1, bad}};
        try
        {
            whatif(s, req, spec);
            FAIL("expected rejection");
        }
        catch (const OptimizerError& e)
        {
            CHECK(e.code() == "invalid_change");
            CHECK(e.detail().at("field") == "tilt_deg");
            CHECK(e.detail().at("cell") == 1);
        }
        req.changes = {{99, CellConfig{}}};
        CHECK_THROWS_AS(whatif(s, req, spec), OptimizerError);
    }

    SUBCASE("base version must match")
    {
        auto s = two_cell();
        s.twin_version = 4;
        WhatIfRequest req;
        req.base_version = 3;
        try
        {
            whatif(s, req, spec);
            FAIL("expected version mismatch");
        }
        catch (const OptimizerError& e)
        {
            CHECK(e.code() == "version_mismatch");
        }
        req.base_version = 4;
        CHECK(whatif(s, req, spec).twin_version == 4);
    }

    SUBCASE("tiers")
    {
        twin::TwinGraph g;
        twin::ingest_topology(g, line_topology(1, 5, 3), "physical", 1, 0);
        try
        {
            scenario_from_twin(g, twin::FidelityTier::L0);
            FAIL("expected unsupported tier");
        }
        catch (const OptimizerError& e)
        {
            CHECK(e.code() == "unsupported_tier");
        }
        const auto s = scenario_from_twin(g, twin::FidelityTier::L1);
        CHECK(s.synthetic_ues);
        const World a = instantiate(s, s.topology.config_map(), 1);
        const World b = instantiate(s, s.topology.config_map(), 2);
        REQUIRE(a.ues().size() == 5);
        CHECK(a.ues()[0].x_m != b.ues()[0].x_m);
        WhatIfRequest req;
        req.horizon_s = 5.0;
        req.replications = 2;
        CHECK(whatif(s, req, spec).replications.size() == 2);
    }

    SUBCASE("never touches the live twin")
    {
        sync::SessionConfig cfg;
        cfg.downlink = {0.0, 50, 0, 1};
        cfg.uplink = {0.0, 50, 0, 2};
        sync::SyncSession session(World(line_topology(2, 10, 7)), cfg);
        std::vector<std::string> frames;
        session.record_transcript(&frames);
        session.run_until(5000);
        const auto before = session.store().read();
        const auto snap = twin::snapshot(*before);
        const std::size_t frames_before = frames.size();

        const auto s = scenario_from_twin(*before, twin::FidelityTier::L2);
        WhatIfRequest req;
        req.horizon_s = 10.0;
        CellConfig c;
        c.tilt_deg = 9;
        req.changes = {{0, c}};
        whatif(s, req, spec);
        ConfigEvaluator ev(s, spec, 5.0, {1});
        local_search(ev, all_coordinates(s.topology, std::vector<CellParam>{CellParam::tilt}), 10);
        q_learn(ev, all_coordinates(s.topology, std::vector<CellParam>{CellParam::tilt}), {2, 5});

        CHECK(session.store().read()->version() == before->version());
        CHECK(twin::snapshot(*session.store().read()) == snap);
        CHECK(frames.size() == frames_before);
    }

    SUBCASE("report json round trip")
    {
        const auto s = two_cell();
        WhatIfRequest req;
        CellConfig c;
        c.tilt_deg = 3;
        req.changes = {{2, c}};
        req.horizon_s = 5.0;
        const auto r = whatif(s, req, spec);
        const auto j = whatif_report_to_json(r);
        CHECK(whatif_report_to_json(whatif_report_from_json(j)) == j);
        CHECK(j.at("constraints_ok").size() == 3);

        const auto parsed = whatif_request_from_json(whatif_request_to_json(req));
        CHECK(parsed.changes == req.changes);
        CHECK(parsed.horizon_s == req.horizon_s);
        CHECK_THROWS_AS(whatif_request_from_json(nlohmann::json{{"replications", 0}}), OptimizerError);
        CHECK_THROWS_AS(whatif_request_from_json(nlohmann::json{{"changes", 3}}), OptimizerError);
    }

    SUBCASE("recorded seeds reproduce recorded utilities")
    {
        World w(line_topology(2, 8, 11));
        w.run_until(10000);
        const auto s = scenario_from_world(w);
        WhatIfRequest req;
        CellConfig c;
        c.tx_power_dbm = 44;
        req.changes = {{1, c}};
        req.horizon_s = 10.0;
        const auto first = whatif(s, req, spec);
        req.seeds = first.seeds();
        const auto again = whatif(s, req, spec);
        CHECK(whatif_report_to_json(again) == whatif_report_to_json(first));
    }
}

TEST_CASE("exhaustive oracle")
{
    SUBCASE("two cells x tilt 0..15 golden optimum")
    {
        auto ev = oracle_evaluator(two_cell());
        const auto ex = exhaustive(ev, full_axes(kTwoCellTilt));
        CHECK(ex.evaluations == 256);
        CHECK(ex.best.at(1).tilt_deg == 1);
        CHECK(ex.best.at(2).tilt_deg == 1);
        CHECK(ex.utility_best == doctest::Approx(1.618953067).epsilon(1e-9));
        CHECK(ex.utility_base == doctest::Approx(1.440006349).epsilon(1e-9));
        for (const auto& t : ex.trace)
        {
            CHECK(t.utility <= ex.utility_best);
        }
    }

    SUBCASE("one-point lattice returns that point")
    {
        auto ev = oracle_evaluator(two_cell());
        const auto ex = exhaustive(ev, {{{1, CellParam::tilt}, {7}}, {{2, CellParam::tx_power}, {44}}});
        CHECK(ex.evaluations == 1);
        CHECK(ex.best.at(1).tilt_deg == 7);
        CHECK(ex.best.at(2).tx_power_dbm == 44);
        CHECK(ex.changes.size() == 2);
    }

    SUBCASE("mirrored instance has a mirrored optimum")
    {
        auto ev = oracle_evaluator(two_cell(5, 5));
        const auto ex = exhaustive(ev, full_axes(kTwoCellTilt));
        const int a = ex.best.at(1).tilt_deg;
        const int b = ex.best.at(2).tilt_deg;
        ConfigMap swapped = ex.best;
        swapped[1].tilt_deg = b;
        swapped[2].tilt_deg = a;
        CHECK(ev.evaluate(swapped).utility == doctest::Approx(ex.utility_best).epsilon(1e-9));
        if (a != b)
        {
            CHECK(a < b);
        }
    }

    SUBCASE("ties go to the lexicographically smallest point")
    {
        // Power on a cell nobody hears: every value ties.
        auto s = two_cell();
        s.ues.clear();
        s.topology.ue_placements.clear();
        s.topology.ue_count = 0;
        auto ev = oracle_evaluator(s);
        const auto ex = exhaustive(ev, {{{1, CellParam::tx_power}, {46, 30, 38}}});
        CHECK(ex.best.at(1).tx_power_dbm == 30);
    }

    SUBCASE("refuses lattices above 10^4 points")
    {
        auto ev = oracle_evaluator(two_cell());
        std::vector<Coordinate> coords{{1, CellParam::tilt}, {1, CellParam::tx_power}, {2, CellParam::tilt},
                                       {2, CellParam::tx_power}};
        CHECK(lattice_size(full_axes(coords)) == 16 * 9 * 16 * 9);
        try
        {
            exhaustive(ev, full_axes(coords));
            FAIL("expected refusal");
        }
        catch (const OptimizerError& e)
        {
            CHECK(e.code() == "lattice_too_large");
        }
        CHECK(ev.simulations() == 0);
    }

    SUBCASE("argmax is invariant under weight scaling")
    {
        for (int start : {0, 8, 15})
        {
            const auto s = two_cell(start, 15 - start);
            auto ev = oracle_evaluator(s);
            const auto ref = exhaustive(ev, full_axes(kTwoCellTilt));
            for (double c : {0.25, 3.0, 40.0})
            {
                UtilitySpec scaled;
                scaled.w_thr *= c;
                scaled.w_edge *= c;
                scaled.w_fail *= c;
                scaled.w_pp *= c;
                auto ev2 = oracle_evaluator(s, scaled);
                CHECK(exhaustive(ev2, full_axes(kTwoCellTilt)).best == ref.best);
            }
        }
    }
}

TEST_CASE("local search")
{
    SUBCASE("reaches the exhaustive optimum on the two-cell instance")
    {
        auto ev = oracle_evaluator(two_cell());
        const auto ex = exhaustive(ev, full_axes(kTwoCellTilt));
        const auto ls = local_search(ev, kTwoCellTilt, 1000);
        CHECK(ls.best == ex.best);
        CHECK(ls.utility_best == ex.utility_best);
        CHECK(ls.evaluations < 256);
    }

    SUBCASE("already optimal config returns no changes")
    {
        auto ev = oracle_evaluator(two_cell(1, 1));
        const auto ls = local_search(ev, kTwoCellTilt, 100);
        CHECK(ls.changes.empty());
        CHECK(ls.trace.size() == 4);
        CHECK(ls.utility_best == ls.utility_base);
    }

    SUBCASE("budget law")
    {
        auto ev = oracle_evaluator(two_cell());
        const auto ls = local_search(ev, kTwoCellTilt, 1);
        CHECK(ls.trace.size() == 1);
        CHECK(ls.trace.size() <= 4);
        CHECK(ls.evaluations == 1);
        CHECK_THROWS_AS(local_search(ev, kTwoCellTilt, 0), std::invalid_argument);

        const auto full = all_coordinates(two_cell().topology);
        const auto ls2 = local_search(ev, full, 7);
        CHECK(ls2.evaluations == 7);
        CHECK(ls2.trace.size() == 7);
    }

    SUBCASE("deterministic")
    {
        World w(line_topology(2, 10, 9));
        w.run_until(5000);
        const auto s = scenario_from_world(w);
        auto coords = all_coordinates(s.topology, std::vector<CellParam>{CellParam::tilt, CellParam::tx_power});
        ConfigEvaluator a(s, {}, 5.0, {3});
        ConfigEvaluator b(s, {}, 5.0, {3});
        CHECK(search_result_to_json(local_search(a, coords, 40)) == search_result_to_json(local_search(b, coords, 40)));
    }

    SUBCASE("oracle dominance")
    {
        std::mt19937_64 rng(17);
        for (int i = 0; i < 6; ++i)
        {
            const int t1 = static_cast<int>(rng() % 16);
            const int t2 = static_cast<int>(rng() % 16);
            auto topo = two_cell_topology();
            topo.cells[0].config.tilt_deg = t1;
            topo.cells[1].config.tilt_deg = t2;
            if (i % 2 == 1)
            {
                // Antennas facing each other: interference couples the cells.
                topo.cells[0].azimuth_deg = 90.0;
                topo.cells[1].azimuth_deg = 270.0;
            }
            auto ev = oracle_evaluator(scenario_from_world(World(topo)));
            const auto ex = exhaustive(ev, full_axes(kTwoCellTilt));
            const auto ls = local_search(ev, kTwoCellTilt, 500);
            CAPTURE(i);
            CHECK(ex.utility_best >= ls.utility_best);
            CHECK(ls.utility_best >= ls.utility_base);
            CHECK(ls.utility_base == ev.evaluate(ev.base()).utility);
        }
    }
}

TEST_CASE("q-learning")
{
    SUBCASE("update rule")
    {
        QTable q(4, 2);
        CHECK(q.update(0, 1, 5.0, 2, 1.0, 0.0) == 5.0);
        CHECK(q.value(0, 1) == 5.0);
        q.set(2, 0, 10.0);
        CHECK(q.update(1, 0, 1.0, 2, 0.5, 0.9) == doctest::Approx(0.5 * (1.0 + 9.0)));
        CHECK_THROWS_AS(q.value(4, 0), std::out_of_range);
    }

    SUBCASE("greedy law")
    {
        QTable q(kStateCount, 6);
        for (int s = 0; s < kStateCount; ++s)
        {
            q.set(s, 4, 1.0);
        }
        std::mt19937_64 rng(3);
        for (int i = 0; i < 500; ++i)
        {
            CHECK(choose_action(q, i % kStateCount, 0.0, rng) == 4);
        }
        QTable ties(1, 3);
        CHECK(ties.greedy(0) == 0);
        int explored = 0;
        for (int i = 0; i < 1000; ++i)
        {
            explored += choose_action(q, 0, 1.0, rng) != 4;
        }
        CHECK(explored > 700);
    }

    SUBCASE("epsilon schedule")
    {
        QLearnParams p;
        CHECK(epsilon_at(p, 0) == doctest::Approx(0.3));
        CHECK(epsilon_at(p, 199) == doctest::Approx(0.05));
        CHECK(epsilon_at(p, 100) < epsilon_at(p, 99));
    }

    SUBCASE("state encoding")
    {
        const UtilitySpec spec;
        CHECK(encode_state(KpiWindow{}, spec) == 0);
        CHECK(encode_state(window(40, 4, 100, 10, 5), spec) == kStateCount - 1);
        // mean 15/20 -> 1, p5 2/2 -> 2, failures 0.25 -> 1, pp 0.05 -> 1.
        CHECK(encode_state(window(15, 2, 1, 20, 1), spec) == ((1 * 4 + 2) * 4 + 1) * 4 + 1);
        std::mt19937_64 rng(5);
        for (int i = 0; i < 200; ++i)
        {
            auto k = window(static_cast<double>(rng() % 60),
                            static_cast<double>(rng() % 6),
                            rng() % 20,
                            rng() % 30,
                            0);
            const int s = encode_state(k, spec);
            CHECK(s >= 0);
            CHECK(s < kStateCount);
        }
    }

    SUBCASE("action legality at the domain bounds")
    {
        auto s = two_cell(0, 15);
        for (auto& c : s.topology.cells)
        {
            c.config.tx_power_dbm = c.id == 1 ? 30 : 46;
            c.config.ttt_ms = c.id == 1 ? 40 : 640;
        }
        ConfigEvaluator ev(s, {}, 2.0, {1});
        const auto coords = all_coordinates(s.topology);
        const auto actions = action_set(coords);
        CHECK(actions.size() == 2 * (4 * 2 + 1));
        QLearnParams p;
        p.episodes = 30;
        p.episode_len = 15;
        p.epsilon_start = 1.0;
        p.epsilon_end = 1.0;
        const auto r = q_learn(ev, coords, p);
        CHECK_FALSE(r.left_domain);
        CHECK(r.steps == 30 * 15);

        ConfigMap m = s.topology.config_map();
        CHECK_FALSE(apply_action(m, {1, CellParam::tilt, -1}));
        CHECK_FALSE(apply_action(m, {2, CellParam::tilt, +1}));
        CHECK(apply_action(m, {1, CellParam::ca, 1}));
        CHECK(m.at(1).ca_enabled);
        CHECK_FALSE(first_out_of_range_field(m.at(1)));
    }

    SUBCASE("values stay finite")
    {
        ConfigEvaluator ev(two_cell(), {}, 10.0, replication_seeds(5, 1));
        QLearnParams p;
        p.episodes = 20;
        const auto r = q_learn(ev, kTwoCellTilt, p);
        for (int s = 0; s < r.table.states(); ++s)
        {
            for (int a = 0; a < r.table.actions(); ++a)
            {
                CHECK(std::isfinite(r.table.value(s, a)));
            }
        }
        const auto j = qlearn_result_to_json(r);
        CHECK(j.at("qtable").at("actions").size() == 4);
    }

    SUBCASE("two-cell instance lands within 2% of the exhaustive optimum")
    {
        const auto s = two_cell();
        auto oracle = oracle_evaluator(s);
        const auto ex = exhaustive(oracle, full_axes(kTwoCellTilt));
        ConfigEvaluator ev(s, {}, 10.0, replication_seeds(s.topology.seed, 1));
        const auto r = q_learn(ev, kTwoCellTilt, {});
        const double u = oracle.evaluate(r.best).utility;
        CHECK(u >= 0.98 * ex.utility_best);
        CHECK(u <= ex.utility_best);
        const auto again = q_learn(ev, kTwoCellTilt, {});
        CHECK(encode_cfg(again.best) == encode_cfg(r.best));
    }
}

TEST_CASE("safety gate")
{
    SUBCASE("decision rule")
    {
        auto d = evaluate_gate(report_of({replication(1.0, 1.01, true)}, one_change()), 0.02);
        CHECK_FALSE(d.accepted);
        CHECK(d.reason == "insufficient_improvement");
        CHECK(d.mean_improvement == doctest::Approx(0.01));

        d = evaluate_gate(report_of({replication(1.0, 1.5, true), replication(1.0, 1.5, false)}, one_change()), 0.02);
        CHECK_FALSE(d.accepted);
        CHECK(d.reason == "constraint");
        CHECK(d.mean_improvement == doctest::Approx(0.5));
        CHECK_FALSE(d.per_replication[1].ok());

        d = evaluate_gate(report_of({replication(1.0, 1.0, true)}, {}), 0.02);
        CHECK_FALSE(d.accepted);
        CHECK(d.reason == "insufficient_improvement");
        CHECK(d.mean_improvement == 0.0);

        d = evaluate_gate(report_of({replication(1.0, 1.02, true), replication(1.0, 1.03, true)}, one_change()),
                          0.02);
        CHECK(d.accepted);
        CHECK(d.reason.empty());
    }

    SUBCASE("empty change set against a real scenario")
    {
        int pushes = 0;
        const auto d = safety_gate(two_cell(), {}, {}, {}, [&](const ChangeSet&) { ++pushes; });
        CHECK_FALSE(d.accepted);
        CHECK(d.reason == "insufficient_improvement");
        CHECK(d.mean_improvement == 0.0);
        CHECK(pushes == 0);
    }

    SUBCASE("accepted changes are pushed once, on distinct gate seeds")
    {
        const auto s = two_cell();
        CellConfig c = s.topology.cells[0].config;
        c.tilt_deg = 1;
        std::vector<ChangeSet> pushed;
        const auto d = safety_gate(s, {{1, c}}, {}, {}, [&](const ChangeSet& cs) { pushed.push_back(cs); });
        REQUIRE(d.accepted);
        CHECK(pushed.size() == 1);
        CHECK(pushed[0] == ChangeSet{{1, c}});
        CHECK(d.report.replications.size() == 5);
        const auto seeds = d.report.seeds();
        CHECK(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() == 5);
        for (auto seed : seeds)
        {
            for (auto searched : replication_seeds(s.topology.seed, 3))
            {
                CHECK(seed != searched);
            }
        }
        const auto j = gate_decision_to_json(d);
        CHECK(j.at("accepted") == true);
        CHECK(j.at("per_replication").size() == 5);
    }

    SUBCASE("soundness over seeded candidates")
    {
        World w(line_topology(2, 12, 21));
        w.run_until(5000);
        const auto s = scenario_from_world(w);
        std::mt19937_64 rng(99);
        GateParams gp;
        gp.horizon_s = 5.0;
        gp.replications = 3;
        for (int i = 0; i < 12; ++i)
        {
            ChangeSet cs;
            CellConfig c = s.topology.cells[rng() % s.topology.cells.size()].config;
            const CellId id = s.topology.cells[rng() % s.topology.cells.size()].id;
            c.tilt_deg = static_cast<int>(rng() % 16);
            c.tx_power_dbm = 30 + 2 * static_cast<int>(rng() % 9);
            cs.push_back({id, c});
            const auto d = safety_gate(s, cs, {}, gp);
            CHECK((d.reason.empty() || d.reason == "insufficient_improvement" || d.reason == "constraint"));
            CHECK(d.accepted == d.reason.empty());
            if (d.accepted)
            {
                CHECK(d.mean_improvement >= gp.delta);
                for (const auto& rep : whatif_report_from_json(whatif_report_to_json(d.report)).replications)
                {
                    CHECK(rep.constraints_after.ok());
                }
            }
        }
    }
}

TEST_CASE("rollback watchdog")
{
    CHECK(watchdog_verdict(1.0, 1.0, 0.1) == WatchdogVerdict::kept);
    CHECK(watchdog_verdict(1.0, 1.2, 0.1) == WatchdogVerdict::kept);
    CHECK(watchdog_verdict(1.0, 0.8, 0.1) == WatchdogVerdict::rolled_back);
    CHECK(watchdog_verdict(1.0, 0.9, 0.1) == WatchdogVerdict::kept);
    CHECK(watchdog_verdict(-1.0, -1.05, 0.1) == WatchdogVerdict::kept);
    CHECK(watchdog_verdict(-1.0, -1.2, 0.1) == WatchdogVerdict::rolled_back);

    ConfigMap pre{{1, CellConfig{}}, {2, CellConfig{}}};
    ConfigMap post = pre;
    post[1].tilt_deg = 9;
    post[2].ca_enabled = true;

    RollbackWatchdog wd;
    CHECK_FALSE(wd.armed());
    wd.arm("txn-7", 1.0, pre, 12000);
    CHECK(wd.armed());
    CHECK(wd.due_ms() == 42000);
    auto d = wd.evaluate(0.8, post);
    CHECK_FALSE(wd.armed());
    CHECK(d.verdict == WatchdogVerdict::rolled_back);
    CHECK(d.rollback_txn != "txn-7");
    CHECK_FALSE(d.rollback_txn.empty());
    ConfigMap restored = post;
    for (const auto& ch : d.inverse)
    {
        restored[ch.cell_id] = ch.config;
    }
    CHECK(restored == pre);

    wd.arm("txn-8", 1.0, pre, 0);
    d = wd.evaluate(1.0, post);
    CHECK(d.verdict == WatchdogVerdict::kept);
    CHECK(d.inverse.empty());
    CHECK_THROWS_AS(wd.evaluate(1.0, post), std::logic_error);

    CHECK_FALSE(wd.manual_intervention());
    wd.rollback_timed_out();
    CHECK(wd.manual_intervention());
}

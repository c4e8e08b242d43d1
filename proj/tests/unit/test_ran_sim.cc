#include "dtran/kpi.h"
#include "dtran/ran_sim.h"

#include "doctest.h"

#include <fstream>
#include <sstream>

using namespace dtran;

namespace {

Topology
single_cell(double ue_x, double ue_y)
{
    Topology t;
    t.sites.push_back({0, 0.0, 0.0});
    CellSpec c;
    c.id = 0;
    c.site_id = 0;
    c.azimuth_deg = 0.0;
    t.cells.push_back(c);
    t.area = {-500, -500, 500, 500};
    t.ue_count = 1;
    t.mobility = Mobility::stationary;
    t.ue_placements.push_back({ue_x, ue_y});
    return t;
}

std::uint64_t
read_golden_hash(const char* name)
{
    std::ifstream in(std::string(DTRAN_SOURCE_DIR) + "/tests/golden/" + name);
    REQUIRE(in.good());
    std::string hex;
    in >> hex;
    return std::stoull(hex, nullptr, 16);
}

} // namespace

TEST_CASE("a3_check")
{
    CHECK(a3_check(-95, -92, 3, 1000, 40) == A3Result::none);
    CHECK(a3_check(-95, -91.9, 3, 160, 160) == A3Result::handover);
    CHECK(a3_check(-95, -91.9, 3, 80, 160) == A3Result::pending);
    CHECK(a3_check(-95, -91.9, 3, 100, 40) == A3Result::handover);
}

TEST_CASE("rlf_check")
{
    CHECK(rlf_check(-5.9, 100000) == RlfResult::ok);
    CHECK(rlf_check(-10.0, 900) == RlfResult::ok);
    CHECK(rlf_check(-10.0, 1000) == RlfResult::failure);
    CHECK(rlf_check(-6.0, 5000) == RlfResult::ok);
}

TEST_CASE("cell config domains")
{
    CellConfig c;
    CHECK_FALSE(first_out_of_range_field(c).has_value());
    c.tilt_deg = 16;
    CHECK(first_out_of_range_field(c) == std::optional<std::string>("tilt_deg"));
    c = {};
    c.tx_power_dbm = 31;
    CHECK(first_out_of_range_field(c) == std::optional<std::string>("tx_power_dbm"));
    c = {};
    c.ttt_ms = 100;
    CHECK(first_out_of_range_field(c) == std::optional<std::string>("ttt_ms"));

    std::size_t points = 1;
    for (auto p : kAllCellParams)
    {
        points *= param_domain(p).values.size();
    }
    CHECK(points == kLatticePointsPerCell);
    CHECK(kLatticePointsPerCell == 15840);

    SUBCASE("saturating steps")
    {
        CellConfig s;
        s.tilt_deg = 15;
        CHECK_FALSE(step_param(s, CellParam::tilt, +1));
        CHECK(s.tilt_deg == 15);
        CHECK(step_param(s, CellParam::tilt, -1));
        CHECK(s.tilt_deg == 14);
        s.ttt_ms = 640;
        CHECK_FALSE(step_param(s, CellParam::ttt, +1));
        CHECK(step_param(s, CellParam::ttt, -1));
        CHECK(s.ttt_ms == 320);
        s.tx_power_dbm = 30;
        CHECK_FALSE(step_param(s, CellParam::tx_power, -1));
        CHECK(step_param(s, CellParam::tx_power, +1));
        CHECK(s.tx_power_dbm == 32);
        CHECK(step_param(s, CellParam::ca, +1));
        CHECK(s.ca_enabled);
    }

    SUBCASE("json strictness")
    {
        nlohmann::json j = CellConfig{};
        CHECK(j.get<CellConfig>() == CellConfig{});
        j["tilt_deg"] = 3.5;
        CHECK_THROWS(j.get<CellConfig>());
        j.erase("tilt_deg");
        CHECK_THROWS(j.get<CellConfig>());
    }
}

TEST_CASE("topology")
{
    const auto topo = default_desk_topology();
    CHECK(topo.sites.size() == 7);
    CHECK(topo.cells.size() == 21);
    CHECK(topo.ue_count == 50);
    CHECK_NOTHROW(validate(topo));

    SUBCASE("json round trip")
    {
        nlohmann::json j = topo;
        CHECK(j.get<Topology>() == topo);
    }
    SUBCASE("shipped default file matches")
    {
        const auto file = load_topology_file(std::string(DTRAN_SOURCE_DIR) + "/data/default_topology.json");
        CHECK(file == topo);
    }
    SUBCASE("validation errors")
    {
        auto bad = topo;
        bad.cells[1].id = bad.cells[0].id;
        CHECK_THROWS_AS(validate(bad), TopologyError);
        bad = topo;
        bad.cells[0].site_id = 99;
        CHECK_THROWS_AS(validate(bad), TopologyError);
        bad = topo;
        bad.ue_count = 0;
        CHECK_THROWS_AS(validate(bad), TopologyError);
        CHECK_THROWS_AS(load_topology_file("/nonexistent/topology.json"), TopologyError);
    }
}

TEST_CASE("zero UEs produce no records")
{
    auto topo = default_desk_topology();
    World w(topo, {}, 0);
    for (int i = 0; i < 50; ++i)
    {
        CHECK(w.step().empty());
    }
}

TEST_CASE("stationary well-covered UE has no events")
{
    World w(single_cell(0.0, 200.0));
    REQUIRE(w.ues().size() == 1);
    CHECK(w.ues()[0].serving == 0);
    w.run_until(120'000);
    for (const auto& r : w.log())
    {
        CHECK_FALSE(is_event(r));
    }
    CHECK(w.ues()[0].sinr_db >= -6.0);
    // One sample per second.
    CHECK(w.log().size() == 120);
}

TEST_CASE("apply_config")
{
    World w(default_desk_topology());
    CellConfig cfg = w.config(3);
    cfg.tilt_deg = 7;

    SUBCASE("valid change applies at the next tick boundary")
    {
        const auto res = w.apply_config("t1", {{3, cfg}});
        CHECK(res.applied);
        CHECK(w.config(3).tilt_deg != 7);
        const auto recs = w.step();
        CHECK(w.config(3).tilt_deg == 7);
        REQUIRE_FALSE(recs.empty());
        CHECK(recs.back().kind == RecordKind::config_applied);
        CHECK(recs.back().txn_id == "t1");
        CHECK(recs.back().cells == std::vector<CellId>{3});
    }
    SUBCASE("out of range")
    {
        cfg.tilt_deg = 16;
        const auto res = w.apply_config("t2", {{3, cfg}});
        CHECK_FALSE(res.applied);
        CHECK(res.reason == RejectReason::out_of_range);
        CHECK(res.field == "tilt_deg");
    }
    SUBCASE("atomic batch")
    {
        const auto before = w.config_map();
        const auto res = w.apply_config("t3", {{3, cfg}, {99, cfg}});
        CHECK_FALSE(res.applied);
        CHECK(res.reason == RejectReason::unknown_cell);
        w.step();
        CHECK(w.config_map() == before);
    }
}

TEST_CASE("determinism and golden run")
{
    const auto topo = line_topology(2, 20, 42);
    World a(topo);
    World b(topo);
    a.run_until(60'000);
    b.run_until(60'000);
    REQUIRE(a.log() == b.log());

    std::ostringstream sa, sb;
    write_records(sa, a.log());
    write_records(sb, b.log());
    CHECK(sa.str() == sb.str());
    CHECK(log_hash(a.log()) == read_golden_hash("line2_seed42_60s.hash"));

    SUBCASE("copy forks an identical replica")
    {
        World c(topo);
        c.run_until(30'000);
        World d = c;
        c.run_until(60'000);
        d.run_until(60'000);
        CHECK(c.log() == d.log());
    }
    SUBCASE("restore from exported state continues identically")
    {
        World c(topo);
        c.run_until(25'300);
        std::vector<UeState> ues;
        for (const auto& ue : c.ues())
        {
            ues.push_back(ue_state_from_json(ue.id, nlohmann::json::parse(ue_state_to_json(ue).dump())));
        }
        World d(c.topology(), ues, c.now_ms());
        c.clear_log();
        c.run_until(60'000);
        d.run_until(60'000);
        CHECK(c.log() == d.log());
    }
}

TEST_CASE("invariants over a mobile run")
{
    auto topo = default_desk_topology(7);
    for (auto& c : topo.cells)
    {
        c.config.ttt_ms = 40;
        c.config.a3_hysteresis_db = 0;
    }
    World w(topo);
    std::map<std::uint32_t, CellId> serving;
    for (const auto& ue : w.ues())
    {
        serving[ue.id] = ue.serving;
    }
    std::size_t handovers = 0;
    for (int tick = 0; tick < 1200; ++tick)
    {
        const auto recs = w.step();
        for (const auto& r : recs)
        {
            if (r.kind == RecordKind::handover)
            {
                ++handovers;
                CHECK(r.from_cell == serving[r.ue]);
            }
            if (r.kind == RecordKind::rlf)
            {
                CHECK(r.from_cell == serving[r.ue]);
            }
        }
        for (const auto& ue : w.ues())
        {
            CHECK(topo.area.contains(ue.x_m, ue.y_m));
            serving[ue.id] = ue.serving;
        }
    }
    CHECK(handovers > 0);
    const auto k = aggregate_kpis(w.log(), 0.0, 120.0, topo.ue_count);
    CHECK(k.pingpong_count <= k.ho_count);
    CHECK(k.p5_thr_bps <= k.mean_thr_bps);
    CHECK(k.sample_count == 120 * 50);
}

TEST_CASE("aggregate_kpis")
{
    std::vector<SimRecord> log;
    for (int s = 1; s <= 10; ++s)
    {
        for (std::uint32_t ue = 0; ue < 5; ++ue)
        {
            SimRecord r;
            r.t_ms = s * 1000;
            r.kind = RecordKind::kpi_sample;
            r.ue = ue;
            r.from_cell = ue % 2;
            r.thr_bps = 10e6;
            log.push_back(r);
        }
    }

    SUBCASE("steady throughput, no events")
    {
        const auto k = aggregate_kpis(log, 0.0, 10.0, 5);
        CHECK(k.mean_thr_bps == 10e6);
        CHECK(k.p5_thr_bps == 10e6);
        CHECK(k.rlf_count == 0);
        CHECK(k.ho_count == 0);
        CHECK(k.pingpong_count == 0);
        CHECK(k.per_cell.at(0).mean_thr_bps == 10e6);
    }
    SUBCASE("ping-pong counting")
    {
        SimRecord ho;
        ho.kind = RecordKind::handover;
        ho.t_ms = 2000;
        ho.from_cell = 0;
        ho.to_cell = 1;
        log.push_back(ho);
        ho.t_ms = 4000;
        ho.from_cell = 1;
        ho.to_cell = 0;
        log.push_back(ho);
        ho.kind = RecordKind::pingpong;
        log.push_back(ho);
        const auto k = aggregate_kpis(log, 0.0, 10.0, 5);
        CHECK(k.ho_count == 2);
        CHECK(k.pingpong_count == 1);
        CHECK(k.pingpong_ratio() == doctest::Approx(0.5));
        CHECK(k.per_cell.at(1).pingpong_count == 1);
    }
    SUBCASE("failure rate")
    {
        SimRecord rlf;
        rlf.kind = RecordKind::rlf;
        rlf.t_ms = 5000;
        rlf.from_cell = 0;
        log.push_back(rlf);
        const auto k = aggregate_kpis(log, 0.0, 60.0, 5);
        CHECK(k.failures_per_ue_min() == doctest::Approx(0.2));
    }
    SUBCASE("window boundaries are (start, end]")
    {
        const auto k = aggregate_kpis(log, 1.0, 2.0, 5);
        CHECK(k.sample_count == 5);
        CHECK(aggregate_series(log, 0.0, 10.0, 5.0, 5).size() == 2);
    }
    SUBCASE("p5 never exceeds mean")
    {
        std::vector<double> s(96, 10.0);
        s.insert(s.end(), 4, 0.0);
        const double mean = 9.6;
        CHECK(edge_throughput(s, mean) <= mean);
    }
    CHECK_THROWS_AS(aggregate_kpis(log, 5.0, 5.0, 5), std::invalid_argument);
}

TEST_CASE("record log round trip")
{
    World w(line_topology(2, 10, 3));
    w.run_until(20'000);
    std::stringstream ss;
    write_records(ss, w.log());
    const auto back = read_records(ss);
    CHECK(back == w.log());
    std::stringstream bad("{\"t_ms\":1}\n");
    CHECK_THROWS_AS(read_records(bad), std::invalid_argument);
}

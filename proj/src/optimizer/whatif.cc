#include "dtran/hashing.h"
#include "dtran/optimizer.h"

#include <algorithm>
#include <cmath>

namespace dtran::opt {

void
UtilitySpec::validate() const
{
    for (double w : {w_thr, w_edge, w_fail, w_pp})
    {
        if (!(w >= 0.0) || !std::isfinite(w))
        {
            throw std::invalid_argument("utility weights must be finite and >= 0");
        }
    }
    for (double s : {t_ref_bps, t_edge_ref_bps})
    {
        if (!(s > 0.0) || !std::isfinite(s))
        {
            throw std::invalid_argument("utility reference scales must be > 0");
        }
    }
    if (!(theta_edge_bps >= 0.0) || !(theta_fail >= 0.0))
    {
        throw std::invalid_argument("constraint thresholds must be >= 0");
    }
}

void
to_json(nlohmann::json& j, const UtilitySpec& s)
{
    j = nlohmann::json{{"w_thr", s.w_thr},
                       {"w_edge", s.w_edge},
                       {"w_fail", s.w_fail},
                       {"w_pp", s.w_pp},
                       {"t_ref_bps", s.t_ref_bps},
                       {"t_edge_ref_bps", s.t_edge_ref_bps},
                       {"theta_edge_bps", s.theta_edge_bps},
                       {"theta_fail", s.theta_fail}};
}

void
from_json(const nlohmann::json& j, UtilitySpec& s)
{
    if (!j.is_object())
    {
        throw std::invalid_argument("utility spec must be an object");
    }
    UtilitySpec out;
    auto read = [&](const char* key, double& field) {
        if (j.contains(key))
        {
            if (!j.at(key).is_number())
            {
                throw std::invalid_argument(std::string("utility field ") + key + " must be a number");
            }
            field = j.at(key).get<double>();
        }
    };
    read("w_thr", out.w_thr);
    read("w_edge", out.w_edge);
    read("w_fail", out.w_fail);
    read("w_pp", out.w_pp);
    read("t_ref_bps", out.t_ref_bps);
    read("t_edge_ref_bps", out.t_edge_ref_bps);
    read("theta_edge_bps", out.theta_edge_bps);
    read("theta_fail", out.theta_fail);
    out.validate();
    s = out;
}

double
utility(const KpiWindow& k, const UtilitySpec& spec)
{
    return spec.w_thr * std::min(k.mean_thr_bps / spec.t_ref_bps, 2.0) +
           spec.w_edge * std::min(k.p5_thr_bps / spec.t_edge_ref_bps, 2.0) -
           spec.w_fail * k.failures_per_ue_min() - spec.w_pp * k.pingpong_ratio();
}

ConstraintCheck
check_constraints(const KpiWindow& k, const UtilitySpec& spec)
{
    return {k.p5_thr_bps >= spec.theta_edge_bps, k.failures_per_ue_min() <= spec.theta_fail};
}

nlohmann::json
constraint_check_to_json(const ConstraintCheck& c)
{
    nlohmann::json violated = nlohmann::json::array();
    if (!c.edge_ok)
    {
        violated.push_back("p5_thr");
    }
    if (!c.fail_ok)
    {
        violated.push_back("failures_per_ue_min");
    }
    return {{"ok", c.ok()}, {"violated", violated}};
}

Scenario
scenario_from_twin(const twin::TwinGraph& graph, twin::FidelityTier tier)
{
    if (tier == twin::FidelityTier::L0)
    {
        throw OptimizerError("unsupported_tier", "what-if needs tier L1 or L2");
    }
    Scenario s;
    s.topology = twin::topology_from_graph(graph);
    s.twin_version = graph.version();
    s.t0_ms = std::max<std::int64_t>(0, twin::state_time_ms(graph));
    if (tier == twin::FidelityTier::L2)
    {
        s.ues = twin::ues_from_graph(graph);
    }
    else
    {
        s.synthetic_ues = true;
    }
    return s;
}

Scenario
scenario_from_world(const World& world)
{
    Scenario s;
    s.topology = world.topology();
    s.ues = world.ues();
    s.t0_ms = world.now_ms();
    return s;
}

World
instantiate(const Scenario& s, const ConfigMap& configs, std::uint64_t seed)
{
    Topology topo = s.topology;
    for (auto& cell : topo.cells)
    {
        if (auto it = configs.find(cell.id); it != configs.end())
        {
            cell.config = it->second;
        }
    }
    if (s.synthetic_ues)
    {
        topo.seed = seed;
        World w(std::move(topo));
        return w;
    }
    World w(std::move(topo), s.ues, s.t0_ms);
    w.reseed(seed);
    return w;
}

KpiWindow
simulate(const Scenario& s, const ConfigMap& configs, std::uint64_t seed, double horizon_s)
{
    World w = instantiate(s, configs, seed);
    const std::int64_t t0 = w.now_ms();
    const auto horizon_ms = static_cast<std::int64_t>(std::llround(horizon_s * 1000.0));
    w.run_until(t0 + horizon_ms);
    return aggregate_kpis(w.log(),
                          static_cast<double>(t0) / 1000.0,
                          static_cast<double>(t0 + horizon_ms) / 1000.0,
                          w.ues().size());
}

std::vector<std::uint64_t>
replication_seeds(std::uint64_t base_seed, int replications)
{
    std::vector<std::uint64_t> out;
    for (int r = 0; r < replications; ++r)
    {
        out.push_back(hash_combine(base_seed, static_cast<std::uint64_t>(r)));
    }
    return out;
}

void
check_changes(const Topology& topo, const ChangeSet& changes)
{
    auto r = validate_changes(topo, changes);
    if (!r.applied)
    {
        nlohmann::json detail{{"cell", r.cell}, {"reason", reject_reason_name(r.reason)}};
        std::string msg = "cell " + std::to_string(r.cell);
        if (!r.field.empty())
        {
            detail["field"] = r.field;
            msg += " field " + r.field + " out of range";
        }
        else
        {
            msg += " is not in the topology";
        }
        throw OptimizerError("invalid_change", msg, detail);
    }
}

WhatIfRequest
whatif_request_from_json(const nlohmann::json& j)
{
    if (!j.is_object())
    {
        throw OptimizerError("bad_request", "what-if request must be an object");
    }
    WhatIfRequest r;
    try
    {
        if (j.contains("changes"))
        {
            r.changes = change_set_from_json(j.at("changes"));
        }
        if (j.contains("horizon_s"))
        {
            r.horizon_s = j.at("horizon_s").get<double>();
        }
        if (j.contains("replications"))
        {
            r.replications = j.at("replications").get<int>();
        }
        if (j.contains("base_version") && !j.at("base_version").is_null())
        {
            r.base_version = j.at("base_version").get<std::uint64_t>();
        }
        if (j.contains("base_seed") && !j.at("base_seed").is_null())
        {
            r.base_seed = j.at("base_seed").get<std::uint64_t>();
        }
        if (j.contains("seeds"))
        {
            r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        }
    }
    catch (const nlohmann::json::exception& e)
    {
        throw OptimizerError("bad_request", e.what());
    }
    catch (const std::invalid_argument& e)
    {
        throw OptimizerError("bad_request", e.what());
    }
    if (!(r.horizon_s >= 1.0 && r.horizon_s <= 600.0))
    {
        throw OptimizerError("bad_request", "horizon_s must be in [1, 600]", {{"field", "horizon_s"}});
    }
    if (r.replications < 1 || r.replications > 50)
    {
        throw OptimizerError("bad_request", "replications must be in [1, 50]", {{"field", "replications"}});
    }
    return r;
}

nlohmann::json
whatif_request_to_json(const WhatIfRequest& r)
{
    nlohmann::json j{{"changes", change_set_to_json(r.changes)},
                     {"horizon_s", r.horizon_s},
                     {"replications", r.replications},
                     {"seeds", r.seeds}};
    j["base_version"] = r.base_version ? nlohmann::json(*r.base_version) : nlohmann::json(nullptr);
    j["base_seed"] = r.base_seed ? nlohmann::json(*r.base_seed) : nlohmann::json(nullptr);
    return j;
}

std::vector<bool>
WhatIfReport::constraints_ok() const
{
    std::vector<bool> out;
    for (const auto& r : replications)
    {
        out.push_back(r.constraints_after.ok());
    }
    return out;
}

std::vector<std::uint64_t>
WhatIfReport::seeds() const
{
    std::vector<std::uint64_t> out;
    for (const auto& r : replications)
    {
        out.push_back(r.seed);
    }
    return out;
}

nlohmann::json
whatif_report_to_json(const WhatIfReport& r)
{
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& rep : r.replications)
    {
        reps.push_back({{"seed", rep.seed},
                        {"before", kpi_window_to_json(rep.before)},
                        {"after", kpi_window_to_json(rep.after)},
                        {"utility_before", rep.utility_before},
                        {"utility_after", rep.utility_after},
                        {"constraints_before", constraint_check_to_json(rep.constraints_before)},
                        {"constraints_after", constraint_check_to_json(rep.constraints_after)}});
    }
    return {{"twin_version", r.twin_version},
            {"t0_ms", r.t0_ms},
            {"horizon_s", r.horizon_s},
            {"changes", change_set_to_json(r.changes)},
            {"replications", reps},
            {"utility_before", r.utility_before},
            {"utility_after", r.utility_after},
            {"constraints_ok", r.constraints_ok()},
            {"seeds", r.seeds()},
            {"deltas",
             {{"mean_thr_bps", r.deltas.mean_thr_bps},
              {"p5_thr_bps", r.deltas.p5_thr_bps},
              {"failures_per_ue_min", r.deltas.failures_per_ue_min},
              {"pingpong_ratio", r.deltas.pingpong_ratio}}}};
}

namespace {

ConstraintCheck
check_from_json(const nlohmann::json& j)
{
    ConstraintCheck c;
    for (const auto& v : j.at("violated"))
    {
        if (v == "p5_thr")
        {
            c.edge_ok = false;
        }
        else if (v == "failures_per_ue_min")
        {
            c.fail_ok = false;
        }
    }
    return c;
}

} // namespace

WhatIfReport
whatif_report_from_json(const nlohmann::json& j)
{
    WhatIfReport r;
    r.twin_version = j.at("twin_version").get<std::uint64_t>();
    r.t0_ms = j.at("t0_ms").get<std::int64_t>();
    r.horizon_s = j.at("horizon_s").get<double>();
    r.changes = change_set_from_json(j.at("changes"));
    for (const auto& rep : j.at("replications"))
    {
        ReplicationReport out;
        out.seed = rep.at("seed").get<std::uint64_t>();
        out.before = kpi_window_from_json(rep.at("before"));
        out.after = kpi_window_from_json(rep.at("after"));
        out.utility_before = rep.at("utility_before").get<double>();
        out.utility_after = rep.at("utility_after").get<double>();
        out.constraints_before = check_from_json(rep.at("constraints_before"));
        out.constraints_after = check_from_json(rep.at("constraints_after"));
        r.replications.push_back(out);
    }
    r.utility_before = j.at("utility_before").get<double>();
    r.utility_after = j.at("utility_after").get<double>();
    const auto& d = j.at("deltas");
    r.deltas = {d.at("mean_thr_bps").get<double>(),
                d.at("p5_thr_bps").get<double>(),
                d.at("failures_per_ue_min").get<double>(),
                d.at("pingpong_ratio").get<double>()};
    return r;
}

WhatIfReport
whatif(const Scenario& s, const WhatIfRequest& req, const UtilitySpec& spec)
{
    if (req.base_version && *req.base_version != s.twin_version)
    {
        throw OptimizerError("version_mismatch",
                             "twin is at version " + std::to_string(s.twin_version) + ", request names " +
                                 std::to_string(*req.base_version));
    }
    if (req.seeds.empty() && req.replications < 1)
    {
        throw OptimizerError("bad_request", "replications must be >= 1", {{"field", "replications"}});
    }
    check_changes(s.topology, req.changes);

    const auto seeds =
        req.seeds.empty() ? replication_seeds(req.base_seed.value_or(s.topology.seed), req.replications) : req.seeds;
    const ConfigMap before_cfg = s.topology.config_map();
    ConfigMap after_cfg = before_cfg;
    for (const auto& ch : req.changes)
    {
        after_cfg[ch.cell_id] = ch.config;
    }
    const bool null_change = after_cfg == before_cfg;

    WhatIfReport out;
    out.twin_version = s.twin_version;
    out.t0_ms = s.t0_ms;
    out.horizon_s = req.horizon_s;
    out.changes = req.changes;
    for (auto seed : seeds)
    {
        ReplicationReport rep;
        rep.seed = seed;
        rep.before = simulate(s, before_cfg, seed, req.horizon_s);
        rep.after = null_change ? rep.before : simulate(s, after_cfg, seed, req.horizon_s);
        rep.utility_before = utility(rep.before, spec);
        rep.utility_after = utility(rep.after, spec);
        rep.constraints_before = check_constraints(rep.before, spec);
        rep.constraints_after = check_constraints(rep.after, spec);
        out.utility_before += rep.utility_before;
        out.utility_after += rep.utility_after;
        out.deltas.mean_thr_bps += rep.after.mean_thr_bps - rep.before.mean_thr_bps;
        out.deltas.p5_thr_bps += rep.after.p5_thr_bps - rep.before.p5_thr_bps;
        out.deltas.failures_per_ue_min += rep.after.failures_per_ue_min() - rep.before.failures_per_ue_min();
        out.deltas.pingpong_ratio += rep.after.pingpong_ratio() - rep.before.pingpong_ratio();
        out.replications.push_back(std::move(rep));
    }
    const double n = static_cast<double>(seeds.size());
    out.utility_before /= n;
    out.utility_after /= n;
    out.deltas.mean_thr_bps /= n;
    out.deltas.p5_thr_bps /= n;
    out.deltas.failures_per_ue_min /= n;
    out.deltas.pingpong_ratio /= n;
    return out;
}

} // namespace dtran::opt

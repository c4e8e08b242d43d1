#include "dtran/hashing.h"
#include "dtran/optimizer.h"

#include <cmath>

namespace dtran::opt {

void
to_json(nlohmann::json& j, const GateParams& g)
{
    j = nlohmann::json{{"delta", g.delta}, {"replications", g.replications}, {"horizon_s", g.horizon_s}};
}

void
from_json(const nlohmann::json& j, GateParams& g)
{
    GateParams out;
    if (j.contains("delta"))
    {
        out.delta = j.at("delta").get<double>();
    }
    if (j.contains("replications"))
    {
        out.replications = j.at("replications").get<int>();
    }
    if (j.contains("horizon_s"))
    {
        out.horizon_s = j.at("horizon_s").get<double>();
    }
    if (!(out.delta >= 0.0) || out.replications < 1 || !(out.horizon_s >= 1.0))
    {
        throw std::invalid_argument("gate needs delta >= 0, replications >= 1, horizon_s >= 1");
    }
    g = out;
}

nlohmann::json
gate_decision_to_json(const GateDecision& d)
{
    nlohmann::json per = nlohmann::json::array();
    for (std::size_t i = 0; i < d.per_replication.size(); ++i)
    {
        auto c = constraint_check_to_json(d.per_replication[i]);
        c["replication"] = i;
        per.push_back(c);
    }
    return {{"accepted", d.accepted},
            {"mean_improvement", d.mean_improvement},
            {"reason", d.reason},
            {"per_replication", per},
            {"report", whatif_report_to_json(d.report)}};
}

GateDecision
evaluate_gate(const WhatIfReport& report, double delta)
{
    GateDecision d;
    d.report = report;
    d.mean_improvement = report.utility_after - report.utility_before;
    bool clean = !report.replications.empty();
    for (const auto& r : report.replications)
    {
        d.per_replication.push_back(r.constraints_after);
        clean = clean && r.constraints_after.ok();
    }
    if (report.changes.empty() || !(d.mean_improvement >= delta))
    {
        d.reason = "insufficient_improvement";
    }
    else if (!clean)
    {
        d.reason = "constraint";
    }
    else
    {
        d.accepted = true;
    }
    return d;
}

GateDecision
safety_gate(const Scenario& s,
            const ChangeSet& changes,
            const UtilitySpec& spec,
            const GateParams& params,
            const std::function<void(const ChangeSet&)>& push)
{
    WhatIfRequest req;
    req.changes = changes;
    req.horizon_s = params.horizon_s;
    req.replications = params.replications;
    req.base_seed = hash_combine(s.topology.seed, kGateSeedSalt);
    auto d = evaluate_gate(whatif(s, req, spec), params.delta);
    if (d.accepted && push)
    {
        push(changes);
    }
    return d;
}

const char*
watchdog_verdict_name(WatchdogVerdict v)
{
    return v == WatchdogVerdict::kept ? "kept" : "rolled_back";
}

WatchdogVerdict
watchdog_verdict(double baseline, double post, double rho)
{
    return post < baseline - rho * std::abs(baseline) ? WatchdogVerdict::rolled_back : WatchdogVerdict::kept;
}

ChangeSet
inverse_changes(const ConfigMap& current, const ConfigMap& pre_apply)
{
    return diff_configs(current, pre_apply);
}

void
RollbackWatchdog::arm(std::string txn_id, double baseline, ConfigMap pre_apply, std::int64_t applied_ms)
{
    armed_ = true;
    txn_ = std::move(txn_id);
    baseline_ = baseline;
    pre_apply_ = std::move(pre_apply);
    applied_ms_ = applied_ms;
}

std::int64_t
RollbackWatchdog::due_ms() const
{
    return applied_ms_ + static_cast<std::int64_t>(std::llround(params_.window_s * 1000.0));
}

RollbackWatchdog::Decision
RollbackWatchdog::evaluate(double post_utility, const ConfigMap& current)
{
    if (!armed_)
    {
        throw std::logic_error("watchdog is not armed");
    }
    armed_ = false;
    Decision d;
    d.baseline = baseline_;
    d.post = post_utility;
    d.verdict = watchdog_verdict(baseline_, post_utility, params_.rho);
    if (d.verdict == WatchdogVerdict::rolled_back)
    {
        d.rollback_txn = txn_ + "-rollback";
        d.inverse = inverse_changes(current, pre_apply_);
    }
    return d;
}

} // namespace dtran::opt

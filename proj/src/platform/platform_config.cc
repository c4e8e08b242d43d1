#include "dtran/hashing.h"
#include "dtran/platform.h"

#include <fstream>
#include <set>

namespace dtran::platform {

const char*
optimize_method_name(OptimizeMethod m)
{
    switch (m)
    {
    case OptimizeMethod::none:
        return "none";
    case OptimizeMethod::local:
        return "local";
    case OptimizeMethod::qlearn:
        return "qlearn";
    case OptimizeMethod::exhaustive:
        return "exhaustive";
    }
    return "none";
}

OptimizeMethod
optimize_method_from_name(const std::string& s)
{
    for (auto m : {OptimizeMethod::none, OptimizeMethod::local, OptimizeMethod::qlearn, OptimizeMethod::exhaustive})
    {
        if (s == optimize_method_name(m))
        {
            return m;
        }
    }
    throw std::invalid_argument("unknown optimize method '" + s + "'");
}

sync::SessionConfig
default_session(std::uint64_t seed)
{
    sync::SessionConfig c;
    c.downlink.seed = hash_combine(seed, 0x646f776eULL);
    c.uplink.seed = hash_combine(seed, 0x7570ULL);
    return c;
}

namespace {

void
check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where)
{
    if (!j.is_object())
    {
        throw std::invalid_argument(where + " must be an object");
    }
    for (const auto& [k, v] : j.items())
    {
        if (!allowed.count(k))
        {
            throw std::invalid_argument("unknown key '" + k + "' in " + where);
        }
    }
}

template <typename T>
void
read(const nlohmann::json& j, const char* key, T& out)
{
    if (j.contains(key))
    {
        try
        {
            out = j.at(key).get<T>();
        }
        catch (const nlohmann::json::exception&)
        {
            throw std::invalid_argument(std::string("config field ") + key + " has the wrong type");
        }
    }
}

nlohmann::json
qlearn_to_json(const opt::QLearnParams& q)
{
    return {{"episodes", q.episodes},
            {"episode_len", q.episode_len},
            {"alpha", q.alpha},
            {"gamma", q.gamma},
            {"epsilon_start", q.epsilon_start},
            {"epsilon_end", q.epsilon_end},
            {"seed", q.seed}};
}

opt::QLearnParams
qlearn_from_json(const nlohmann::json& j, opt::QLearnParams q)
{
    check_keys(j, {"episodes", "episode_len", "alpha", "gamma", "epsilon_start", "epsilon_end", "seed"}, "qlearn");
    read(j, "episodes", q.episodes);
    read(j, "episode_len", q.episode_len);
    read(j, "alpha", q.alpha);
    read(j, "gamma", q.gamma);
    read(j, "epsilon_start", q.epsilon_start);
    read(j, "epsilon_end", q.epsilon_end);
    read(j, "seed", q.seed);
    if (q.episodes < 1 || q.episode_len < 1 || !(q.alpha > 0.0 && q.alpha <= 1.0) || !(q.gamma >= 0.0 && q.gamma <= 1.0))
    {
        throw std::invalid_argument("qlearn needs episodes, episode_len >= 1, alpha in (0,1], gamma in [0,1]");
    }
    return q;
}

} // namespace

nlohmann::json
platform_config_to_json(const PlatformConfig& c)
{
    nlohmann::json params = nlohmann::json::array();
    for (auto p : c.optimize.params)
    {
        params.push_back(param_field(p));
    }
    nlohmann::json opt{{"method", optimize_method_name(c.optimize.method)},
                       {"params", params},
                       {"cells", c.optimize.cells},
                       {"horizon_s", c.optimize.horizon_s},
                       {"replications", c.optimize.replications},
                       {"budget_evals", c.optimize.budget_evals},
                       {"qlearn", qlearn_to_json(c.optimize.qlearn)}};
    opt["at_s"] = c.optimize.at_s ? nlohmann::json(*c.optimize.at_s) : nlohmann::json(nullptr);
    return {{"duration_s", c.duration_s},
            {"twinning_rate_hz", c.session.sync.twinning_rate_hz},
            {"tier", twin::tier_name(c.session.sync.tier)},
            {"aot_threshold_ms", c.session.sync.aot_threshold_ms},
            {"snapshot_retry_ms", c.session.sync.snapshot_retry_ms},
            {"push_retransmit_ms", c.session.sync.push_retransmit_ms},
            {"push_timeout_ms", c.session.sync.push_timeout_ms},
            {"heartbeat_ms", c.session.sync.heartbeat_ms},
            {"channel", {{"downlink", c.session.downlink}, {"uplink", c.session.uplink}}},
            {"utility", c.utility},
            {"gate", c.gate},
            {"watchdog", {{"window_s", c.watchdog.window_s}, {"rho", c.watchdog.rho}}},
            {"optimize", opt},
            {"closed_loop", c.closed_loop},
            {"kpi_window_s", c.kpi_window_s},
            {"fidelity_window_s", c.fidelity_window_s},
            {"fidelity", c.fidelity},
            {"kpi_samples", c.kpi_samples}};
}

PlatformConfig
platform_config_from_json(const nlohmann::json& j, PlatformConfig c)
{
    check_keys(j,
               {"duration_s", "twinning_rate_hz", "tier", "aot_threshold_ms", "snapshot_retry_ms", "push_retransmit_ms",
                "push_timeout_ms", "heartbeat_ms", "channel", "utility", "gate", "watchdog", "optimize", "closed_loop",
                "kpi_window_s", "fidelity_window_s", "fidelity", "kpi_samples"},
               "platform config");
    read(j, "duration_s", c.duration_s);
    read(j, "twinning_rate_hz", c.session.sync.twinning_rate_hz);
    if (j.contains("tier"))
    {
        auto t = twin::tier_from_name(j.at("tier").get<std::string>());
        if (!t)
        {
            throw std::invalid_argument("unknown tier " + j.at("tier").dump());
        }
        c.session.sync.tier = *t;
    }
    read(j, "aot_threshold_ms", c.session.sync.aot_threshold_ms);
    read(j, "snapshot_retry_ms", c.session.sync.snapshot_retry_ms);
    read(j, "push_retransmit_ms", c.session.sync.push_retransmit_ms);
    read(j, "push_timeout_ms", c.session.sync.push_timeout_ms);
    read(j, "heartbeat_ms", c.session.sync.heartbeat_ms);
    if (j.contains("channel"))
    {
        const auto& ch = j.at("channel");
        check_keys(ch, {"downlink", "uplink", "both"}, "channel");
        if (ch.contains("both"))
        {
            auto spec = ch.at("both").get<sync::ChannelSpec>();
            const auto down_seed = c.session.downlink.seed;
            const auto up_seed = c.session.uplink.seed;
            c.session.downlink = spec;
            c.session.uplink = spec;
            if (!ch.at("both").contains("seed"))
            {
                c.session.downlink.seed = down_seed;
                c.session.uplink.seed = up_seed;
            }
            else
            {
                c.session.uplink.seed = hash_combine(spec.seed, 1);
            }
        }
        if (ch.contains("downlink"))
        {
            c.session.downlink = ch.at("downlink").get<sync::ChannelSpec>();
        }
        if (ch.contains("uplink"))
        {
            c.session.uplink = ch.at("uplink").get<sync::ChannelSpec>();
        }
        sync::validate(c.session.downlink);
        sync::validate(c.session.uplink);
    }
    if (j.contains("utility"))
    {
        c.utility = j.at("utility").get<opt::UtilitySpec>();
    }
    if (j.contains("gate"))
    {
        c.gate = j.at("gate").get<opt::GateParams>();
    }
    if (j.contains("watchdog"))
    {
        const auto& w = j.at("watchdog");
        check_keys(w, {"window_s", "rho"}, "watchdog");
        read(w, "window_s", c.watchdog.window_s);
        read(w, "rho", c.watchdog.rho);
        if (!(c.watchdog.window_s >= 1.0) || !(c.watchdog.rho >= 0.0 && c.watchdog.rho < 1.0))
        {
            throw std::invalid_argument("watchdog needs window_s >= 1 and rho in [0, 1)");
        }
    }
    if (j.contains("optimize"))
    {
        const auto& o = j.at("optimize");
        check_keys(o, {"method", "at_s", "params", "cells", "horizon_s", "replications", "budget_evals", "qlearn"},
                   "optimize");
        if (o.contains("method"))
        {
            c.optimize.method = optimize_method_from_name(o.at("method").get<std::string>());
        }
        if (o.contains("at_s"))
        {
            c.optimize.at_s = o.at("at_s").is_null() ? std::nullopt : std::optional<double>(o.at("at_s").get<double>());
        }
        if (o.contains("params"))
        {
            c.optimize.params.clear();
            for (const auto& p : o.at("params"))
            {
                auto param = param_from_field(p.get<std::string>());
                if (!param)
                {
                    throw std::invalid_argument("unknown parameter " + p.dump());
                }
                c.optimize.params.push_back(*param);
            }
        }
        read(o, "cells", c.optimize.cells);
        read(o, "horizon_s", c.optimize.horizon_s);
        read(o, "replications", c.optimize.replications);
        read(o, "budget_evals", c.optimize.budget_evals);
        if (o.contains("qlearn"))
        {
            c.optimize.qlearn = qlearn_from_json(o.at("qlearn"), c.optimize.qlearn);
        }
        if (c.optimize.params.empty() || !(c.optimize.horizon_s >= 1.0) || c.optimize.replications < 1 ||
            c.optimize.budget_evals < 1)
        {
            throw std::invalid_argument("optimize needs params, horizon_s >= 1, replications >= 1, budget_evals >= 1");
        }
    }
    read(j, "closed_loop", c.closed_loop);
    read(j, "kpi_window_s", c.kpi_window_s);
    read(j, "fidelity_window_s", c.fidelity_window_s);
    read(j, "fidelity", c.fidelity);
    read(j, "kpi_samples", c.kpi_samples);

    sync::validate_twinning_rate(c.session.sync.twinning_rate_hz);
    if (!(c.duration_s >= 0.0))
    {
        throw std::invalid_argument("duration_s must be >= 0");
    }
    auto whole_seconds = [](double v) { return v >= 1.0 && std::floor(v) == v; };
    if (!whole_seconds(c.kpi_window_s) || !whole_seconds(c.fidelity_window_s) ||
        std::fmod(c.fidelity_window_s, c.kpi_window_s) != 0.0)
    {
        throw std::invalid_argument("kpi_window_s and fidelity_window_s must be whole seconds, the latter a multiple "
                                    "of the former");
    }
    if (c.session.sync.aot_threshold_ms < 1 || c.session.sync.push_timeout_ms < 1 ||
        c.session.sync.push_retransmit_ms < 1 || c.session.sync.heartbeat_ms < 1 ||
        c.session.sync.snapshot_retry_ms < 1)
    {
        throw std::invalid_argument("sync timers must be >= 1 ms");
    }
    return c;
}

PlatformConfig
load_platform_config(const std::filesystem::path& path, PlatformConfig base)
{
    std::ifstream in(path);
    if (!in)
    {
        throw std::invalid_argument("cannot open config file " + path.string());
    }
    nlohmann::json j;
    try
    {
        in >> j;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    try
    {
        return platform_config_from_json(j, std::move(base));
    }
    catch (const std::exception& e)
    {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

} // namespace dtran::platform

#include "dtran/platform.h"
#include "dtran/service.h"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

namespace {

using namespace dtran;

struct RunFlags
{
    std::string topology = "default";
    std::uint64_t seed = 42;
    std::optional<double> duration;
    std::optional<double> rate;
    std::optional<std::string> tier;
    std::optional<std::string> optimize;
    std::optional<double> optimize_at;
    std::optional<std::string> config;
    bool closed_loop = false;
};

void
add_run_flags(CLI::App* app, RunFlags& f)
{
    app->add_option("--topology", f.topology, "Topology file, or 'default' / 'two-cell'");
    app->add_option("--seed", f.seed, "Run seed (topology and channel seeds derive from it)");
    app->add_option("--duration", f.duration, "Virtual run length in seconds")->check(CLI::NonNegativeNumber);
    app->add_option("--twinning-rate", f.rate, "Twin sync rate in Hz (0 < R <= 10)");
    app->add_option("--tier", f.tier, "Fidelity tier L0, L1 or L2")->check(CLI::IsMember({"L0", "L1", "L2"}));
    app->add_option("--optimize", f.optimize, "Search at the trigger time: none, local, qlearn, exhaustive")
        ->check(CLI::IsMember({"none", "local", "qlearn", "exhaustive"}));
    app->add_option("--optimize-at", f.optimize_at, "Trigger time in seconds (default: half the duration)");
    app->add_option("--config", f.config, "Platform config file (JSON)")->check(CLI::ExistingFile);
    app->add_flag("--closed-loop", f.closed_loop, "Push gate-accepted changes and watch them");
}

Topology
pick_topology(const std::string& name, std::uint64_t seed, bool seed_given)
{
    if (name == "default")
    {
        return default_desk_topology(seed);
    }
    if (name == "two-cell")
    {
        auto t = two_cell_topology();
        if (seed_given)
        {
            t.seed = seed;
        }
        return t;
    }
    auto t = load_topology_file(name);
    if (seed_given)
    {
        t.seed = seed;
    }
    return t;
}

platform::PlatformConfig
build_config(const RunFlags& f, bool seed_given, double default_duration)
{
    platform::PlatformConfig c;
    c.topology = pick_topology(f.topology, f.seed, seed_given);
    c.session = platform::default_session(f.seed);
    c.duration_s = default_duration;
    if (f.config)
    {
        c = platform::load_platform_config(*f.config, c);
    }
    nlohmann::json overlay = nlohmann::json::object();
    if (f.duration)
    {
        overlay["duration_s"] = *f.duration;
    }
    if (f.rate)
    {
        overlay["twinning_rate_hz"] = *f.rate;
    }
    if (f.tier)
    {
        overlay["tier"] = *f.tier;
    }
    if (f.optimize || f.optimize_at)
    {
        overlay["optimize"] = nlohmann::json::object();
        if (f.optimize)
        {
            overlay["optimize"]["method"] = *f.optimize;
        }
        if (f.optimize_at)
        {
            overlay["optimize"]["at_s"] = *f.optimize_at;
        }
    }
    c = platform::platform_config_from_json(overlay, c);
    c.closed_loop = f.closed_loop;
    if (f.closed_loop && !f.optimize && c.optimize.method == platform::OptimizeMethod::none)
    {
        c.optimize.method = platform::OptimizeMethod::local;
    }
    return c;
}

void
write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
    {
        throw std::runtime_error("cannot write " + path);
    }
    out << text;
}

std::optional<std::string>
read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
    {
        return std::nullopt;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<platform::Event>
read_events(const std::string& text)
{
    std::vector<platform::Event> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
    {
        if (!line.empty())
        {
            out.push_back(platform::event_from_json(nlohmann::json::parse(line)));
        }
    }
    return out;
}

struct NotFound : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

std::string
require_file(const std::filesystem::path& p)
{
    auto t = read_text(p);
    if (!t)
    {
        throw NotFound("not_found: " + p.string());
    }
    return *t;
}

int
cmd_demo(const RunFlags& f,
         bool seed_given,
         const std::optional<std::string>& events_path,
         const std::optional<std::string>& report_path,
         const std::optional<std::string>& data_dir)
{
    auto cfg = build_config(f, seed_given, 300.0);
    std::unique_ptr<platform::JobStore> store;
    if (data_dir)
    {
        store = std::make_unique<platform::JobStore>(std::filesystem::path(*data_dir));
    }
    platform::Platform p(cfg, store.get());
    p.run();
    const auto report = p.report().dump(2) + "\n";
    std::cout << report;
    if (report_path)
    {
        write_text(*report_path, report);
    }
    if (events_path)
    {
        std::string lines;
        for (const auto& e : p.events())
        {
            lines += platform::event_line(e) + "\n";
        }
        write_text(*events_path, lines);
    }
    if (data_dir)
    {
        platform::write_run_artifacts(p, *data_dir);
    }
    return 0;
}

std::atomic<bool> g_stop{false};

extern "C" void
on_signal(int)
{
    g_stop = true;
}

int
cmd_serve(const RunFlags& f, bool seed_given, std::optional<std::string> bind, double speed,
          const std::optional<std::string>& data_dir)
{
    service::ServiceOptions opts;
    opts.config = build_config(f, seed_given, 86400.0);
    opts.speed = speed;
    if (data_dir)
    {
        opts.data_dir = *data_dir;
    }
    if (!bind)
    {
        const char* env = std::getenv("DTRAN_BIND");
        bind = env && *env ? std::string(env) : std::string("127.0.0.1:8080");
    }
    const auto [host, port] = service::parse_bind(*bind);
    service::Service svc(opts);
    if (speed > 0.0)
    {
        svc.start_clock();
    }
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    const bool ok = service::serve_http(
        svc, host, port, [&](int p) { std::cerr << "listening on " << host << ":" << p << std::endl; }, &g_stop);
    svc.stop();
    svc.persist_run();
    if (!ok && !g_stop)
    {
        std::cerr << "error: cannot bind " << *bind << "\n";
        return 1;
    }
    return 0;
}

int
cmd_export(const std::string& kind, const std::string& dir, const std::string& out)
{
    const std::filesystem::path d(dir);
    if (kind == "kpis")
    {
        std::vector<KpiWindow> windows;
        for (const auto& e : read_events(require_file(d / "events.ndjson")))
        {
            if (e.type == "KPI_WINDOW")
            {
                windows.push_back(kpi_window_from_json(e.data.at("window")));
            }
        }
        write_text(out, platform::kpi_csv(windows));
    }
    else if (kind == "events")
    {
        std::string lines;
        for (const auto& e : read_events(require_file(d / "events.ndjson")))
        {
            lines += platform::event_line(e) + "\n";
        }
        write_text(out, lines);
    }
    else if (kind == "qtable")
    {
        write_text(out, nlohmann::json::parse(require_file(d / "qtable.json")).dump(2) + "\n");
    }
    else
    {
        write_text(out, nlohmann::json::parse(require_file(d / "report.json")).dump(2) + "\n");
    }
    return 0;
}

int
cmd_replay(const std::string& path)
{
    const auto events = read_events(require_file(path));
    std::vector<SimRecord> records;
    std::size_t windows = 0;
    std::size_t mismatches = 0;
    for (const auto& e : events)
    {
        if (e.type == "KPI_SAMPLES")
        {
            for (const auto& r : e.data.at("records"))
            {
                records.push_back(record_from_json(r));
            }
        }
        else if (e.type == "KPI_WINDOW")
        {
            const auto& w = e.data.at("window");
            const auto k = aggregate_kpis(records, w.at("t_start_s").get<double>(), w.at("t_end_s").get<double>(),
                                          w.at("ue_count").get<std::size_t>());
            ++windows;
            if (kpi_window_to_json(k) != w)
            {
                ++mismatches;
                std::cerr << "mismatch in window ending " << w.at("t_end_s") << "\n";
            }
        }
    }
    std::cout << "windows " << windows << " mismatches " << mismatches << "\n";
    return mismatches == 0 ? 0 : 1;
}

int
cmd_verify_gate(const std::string& dir)
{
    const auto o = nlohmann::json::parse(require_file(std::filesystem::path(dir) / "optimization.json"));
    const auto graph = twin::restore(o.at("twin_snapshot"));
    const auto tier = twin::tier_from_name(o.at("tier").get<std::string>()).value();
    const auto s = opt::scenario_from_twin(graph, tier);
    const auto& recorded = o.at("gate").at("report");
    opt::WhatIfRequest req;
    req.changes = change_set_from_json(recorded.at("changes"));
    req.horizon_s = recorded.at("horizon_s").get<double>();
    req.seeds = recorded.at("seeds").get<std::vector<std::uint64_t>>();
    const auto spec = o.at("utility_spec").get<opt::UtilitySpec>();
    const auto rerun = opt::whatif(s, req, spec);
    const auto again = opt::whatif_report_to_json(rerun);
    bool same = again.at("utility_before") == recorded.at("utility_before") &&
                again.at("utility_after") == recorded.at("utility_after");
    for (std::size_t i = 0; i < rerun.replications.size(); ++i)
    {
        const auto& a = again.at("replications").at(i);
        const auto& b = recorded.at("replications").at(i);
        same = same && a.at("utility_before") == b.at("utility_before") && a.at("utility_after") == b.at("utility_after");
    }
    std::cout << "replications " << rerun.replications.size() << " utility_before " << rerun.utility_before
              << " utility_after " << rerun.utility_after << (same ? " match" : " MISMATCH") << "\n";
    return same ? 0 : 1;
}

} // namespace

int
main(int argc, char** argv)
{
    CLI::App app{"RAN digital twin: simulator, twin, optimizer and service"};
    app.require_subcommand(1);

    RunFlags demo_flags;
    std::optional<std::string> events_path;
    std::optional<std::string> report_path;
    std::optional<std::string> demo_dir;
    auto* demo = app.add_subcommand("demo", "Run the closed loop on a virtual clock and print the final report");
    add_run_flags(demo, demo_flags);
    demo->add_option("--events", events_path, "Write the event log (NDJSON)");
    demo->add_option("--report", report_path, "Write the final report (JSON)");
    demo->add_option("--data-dir", demo_dir, "Write jobs and run artifacts here");

    RunFlags serve_flags;
    std::optional<std::string> bind;
    double speed = 1.0;
    std::optional<std::string> serve_dir;
    auto* serve = app.add_subcommand("serve", "Run the platform behind the HTTP API");
    add_run_flags(serve, serve_flags);
    serve->add_option("--bind", bind, "Listen address host:port (default $DTRAN_BIND or 127.0.0.1:8080)");
    serve->add_option("--speed", speed, "Virtual seconds per wall second; 0 freezes the clock")
        ->check(CLI::NonNegativeNumber);
    serve->add_option("--data-dir", serve_dir, "Persist jobs and run artifacts here");

    std::string export_kind;
    std::string export_dir;
    std::string export_out;
    auto* exp = app.add_subcommand("export", "Export kpis, events, qtable or report from a run directory");
    exp->add_option("kind", export_kind)->required()->check(CLI::IsMember({"kpis", "events", "qtable", "report"}));
    exp->add_option("path", export_out, "Output file")->required();
    exp->add_option("--data-dir", export_dir, "Run directory written by demo or serve")->required();

    std::string replay_path;
    auto* replay = app.add_subcommand("replay", "Recompute KPI windows from an event log and compare");
    replay->add_option("events", replay_path)->required();

    std::string verify_dir;
    auto* verify = app.add_subcommand("verify-gate", "Re-run the recorded gate what-if from its seeds");
    verify->add_option("--data-dir", verify_dir)->required();

    RunFlags topo_flags;
    std::optional<std::string> topo_out;
    auto* topo = app.add_subcommand("topology", "Print a topology as JSON");
    topo->add_option("--topology", topo_flags.topology, "Topology file, or 'default' / 'two-cell'");
    topo->add_option("--seed", topo_flags.seed);
    topo->add_option("--out", topo_out);

    RunFlags cfg_flags;
    auto* config = app.add_subcommand("config", "Print the effective platform config");
    add_run_flags(config, cfg_flags);

    CLI11_PARSE(app, argc, argv);

    try
    {
        if (*demo)
        {
            return cmd_demo(demo_flags, demo->count("--seed") > 0, events_path, report_path, demo_dir);
        }
        if (*serve)
        {
            return cmd_serve(serve_flags, serve->count("--seed") > 0, bind, speed, serve_dir);
        }
        if (*exp)
        {
            return cmd_export(export_kind, export_dir, export_out);
        }
        if (*replay)
        {
            return cmd_replay(replay_path);
        }
        if (*verify)
        {
            return cmd_verify_gate(verify_dir);
        }
        if (*topo)
        {
            nlohmann::json j = pick_topology(topo_flags.topology, topo_flags.seed, topo->count("--seed") > 0);
            const auto text = j.dump(2) + "\n";
            if (topo_out)
            {
                write_text(*topo_out, text);
            }
            else
            {
                std::cout << text;
            }
            return 0;
        }
        if (*config)
        {
            std::cout << platform::platform_config_to_json(build_config(cfg_flags, config->count("--seed") > 0, 300.0))
                             .dump(2)
                      << "\n";
            return 0;
        }
    }
    catch (const NotFound& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

#include "dtran/optimizer.h"

#include <algorithm>
#include <limits>

namespace dtran::opt {

std::vector<Coordinate>
all_coordinates(const Topology& topo, std::span<const CellParam> params)
{
    std::vector<Coordinate> out;
    for (const auto& cell : topo.cells)
    {
        for (auto p : params)
        {
            out.push_back({cell.id, p});
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<Axis>
full_axes(const std::vector<Coordinate>& coords)
{
    std::vector<Axis> out;
    for (const auto& c : coords)
    {
        out.push_back({c, param_domain(c.param).values});
    }
    return out;
}

std::size_t
lattice_size(const std::vector<Axis>& axes)
{
    std::size_t n = 1;
    for (const auto& a : axes)
    {
        if (a.values.empty())
        {
            return 0;
        }
        if (n > std::numeric_limits<std::size_t>::max() / a.values.size())
        {
            return std::numeric_limits<std::size_t>::max();
        }
        n *= a.values.size();
    }
    return n;
}

ConfigEvaluator::ConfigEvaluator(Scenario scenario,
                                 UtilitySpec spec,
                                 double horizon_s,
                                 std::vector<std::uint64_t> seeds)
    : scenario_(std::move(scenario))
    , spec_(spec)
    , base_(scenario_.topology.config_map())
    , horizon_s_(horizon_s)
    , seeds_(std::move(seeds))
{
    spec_.validate();
    if (seeds_.empty())
    {
        throw std::invalid_argument("evaluator needs at least one seed");
    }
}

const Evaluation&
ConfigEvaluator::evaluate(const ConfigMap& configs)
{
    if (auto it = cache_.find(configs); it != cache_.end())
    {
        return it->second;
    }
    Evaluation e;
    e.configs = configs;
    const double n = static_cast<double>(seeds_.size());
    for (auto seed : seeds_)
    {
        auto k = simulate(scenario_, configs, seed, horizon_s_);
        const double u = utility(k, spec_);
        const auto c = check_constraints(k, spec_);
        e.utility += u / n;
        e.violations += c.violations() / n;
        e.mean.mean_thr_bps += k.mean_thr_bps / n;
        e.mean.p5_thr_bps += k.p5_thr_bps / n;
        e.mean.rlf_count += k.rlf_count;
        e.mean.ho_count += k.ho_count;
        e.mean.pingpong_count += k.pingpong_count;
        e.mean.sample_count += k.sample_count;
        e.mean.t_start_s = k.t_start_s;
        // Summed counts over n windows of the same length: n x duration keeps
        // the per-minute rates equal to the replication mean.
        e.mean.t_end_s = k.t_start_s + k.duration_s() * n;
        e.mean.ue_count = k.ue_count;
        e.windows.push_back(std::move(k));
        e.utilities.push_back(u);
        e.checks.push_back(c);
    }
    return cache_.emplace(configs, std::move(e)).first->second;
}

namespace {

ChangeSet
changes_from(const ConfigMap& base, const ConfigMap& to)
{
    return diff_configs(base, to);
}

std::vector<ConfigMap>
neighbours(const ConfigMap& current, const std::vector<Coordinate>& coords)
{
    std::vector<ConfigMap> out;
    for (const auto& c : coords)
    {
        const std::vector<int> dirs = c.param == CellParam::ca ? std::vector<int>{1} : std::vector<int>{-1, 1};
        for (int d : dirs)
        {
            ConfigMap next = current;
            auto it = next.find(c.cell);
            if (it == next.end())
            {
                throw OptimizerError("invalid_change", "unknown cell " + std::to_string(c.cell));
            }
            if (step_param(it->second, c.param, d))
            {
                out.push_back(std::move(next));
            }
        }
    }
    return out;
}

} // namespace

SearchResult
local_search(ConfigEvaluator& eval, const std::vector<Coordinate>& coords, std::size_t budget_evals)
{
    if (budget_evals < 1)
    {
        throw std::invalid_argument("budget_evals must be >= 1");
    }
    SearchResult out;
    ConfigMap current = eval.base();
    double current_u = eval.evaluate(current).utility;
    out.utility_base = current_u;

    std::size_t used = 0;
    for (std::size_t iteration = 0; used < budget_evals; ++iteration)
    {
        std::optional<std::size_t> best_entry;
        ConfigMap best_cfg;
        double best_u = current_u;
        for (auto& cand : neighbours(current, coords))
        {
            if (used >= budget_evals)
            {
                break;
            }
            ++used;
            const double u = eval.evaluate(cand).utility;
            out.trace.push_back({iteration, changes_from(eval.base(), cand), u, false});
            if (u > best_u)
            {
                best_u = u;
                best_cfg = std::move(cand);
                best_entry = out.trace.size() - 1;
            }
        }
        if (!best_entry)
        {
            break;
        }
        out.trace[*best_entry].accepted = true;
        current = std::move(best_cfg);
        current_u = best_u;
    }
    out.best = current;
    out.changes = changes_from(eval.base(), current);
    out.utility_best = current_u;
    out.evaluations = used;
    return out;
}

SearchResult
exhaustive(ConfigEvaluator& eval, const std::vector<Axis>& axes)
{
    const std::size_t size = lattice_size(axes);
    if (size > kMaxExhaustivePoints)
    {
        throw OptimizerError("lattice_too_large",
                             "lattice has " + std::to_string(size) + " points, limit is " +
                                 std::to_string(kMaxExhaustivePoints));
    }
    if (size == 0)
    {
        throw OptimizerError("bad_request", "lattice axis without values");
    }
    std::vector<std::vector<int>> sorted;
    for (const auto& a : axes)
    {
        auto v = a.values;
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        sorted.push_back(std::move(v));
    }

    SearchResult out;
    out.utility_base = eval.evaluate(eval.base()).utility;
    out.utility_best = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> idx(axes.size(), 0);
    while (true)
    {
        ConfigMap cfg = eval.base();
        for (std::size_t i = 0; i < axes.size(); ++i)
        {
            auto it = cfg.find(axes[i].coord.cell);
            if (it == cfg.end())
            {
                throw OptimizerError("invalid_change", "unknown cell " + std::to_string(axes[i].coord.cell));
            }
            set_param(it->second, axes[i].coord.param, sorted[i][idx[i]]);
        }
        if (auto bad = [&]() -> std::optional<std::string> {
                for (const auto& [id, c] : cfg)
                {
                    if (auto f = first_out_of_range_field(c))
                    {
                        return f;
                    }
                }
                return std::nullopt;
            }())
        {
            throw OptimizerError("invalid_change", "lattice value out of domain for " + *bad, {{"field", *bad}});
        }
        const double u = eval.evaluate(cfg).utility;
        ++out.evaluations;
        const bool better = u > out.utility_best;
        out.trace.push_back({0, changes_from(eval.base(), cfg), u, false});
        if (better)
        {
            out.utility_best = u;
            out.best = cfg;
        }

        bool done = true;
        for (std::size_t k = axes.size(); k-- > 0;)
        {
            if (++idx[k] < sorted[k].size())
            {
                done = false;
                break;
            }
            idx[k] = 0;
        }
        if (done)
        {
            break;
        }
    }
    out.changes = changes_from(eval.base(), out.best);
    for (auto& t : out.trace)
    {
        t.accepted = t.changes == out.changes;
    }
    return out;
}

nlohmann::json
search_result_to_json(const SearchResult& r)
{
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& t : r.trace)
    {
        trace.push_back({{"iteration", t.iteration},
                         {"changes", change_set_to_json(t.changes)},
                         {"utility", t.utility},
                         {"accepted", t.accepted}});
    }
    return {{"changes", change_set_to_json(r.changes)},
            {"utility_base", r.utility_base},
            {"utility_best", r.utility_best},
            {"evaluations", r.evaluations},
            {"trace", trace}};
}

} // namespace dtran::opt

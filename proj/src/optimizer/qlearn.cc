#include "dtran/optimizer.h"

#include <cmath>

namespace dtran::opt {

std::vector<Action>
action_set(const std::vector<Coordinate>& coords)
{
    std::vector<Action> out;
    for (const auto& c : coords)
    {
        if (c.param == CellParam::ca)
        {
            out.push_back({c.cell, c.param, 1});
        }
        else
        {
            out.push_back({c.cell, c.param, 1});
            out.push_back({c.cell, c.param, -1});
        }
    }
    return out;
}

bool
apply_action(ConfigMap& configs, const Action& a)
{
    auto it = configs.find(a.cell);
    if (it == configs.end())
    {
        throw OptimizerError("invalid_change", "unknown cell " + std::to_string(a.cell));
    }
    return step_param(it->second, a.param, a.direction);
}

namespace {

int
ratio_bin(double ratio)
{
    if (ratio < 0.5)
    {
        return 0;
    }
    if (ratio < 1.0)
    {
        return 1;
    }
    return ratio < 1.5 ? 2 : 3;
}

} // namespace

int
encode_state(const KpiWindow& k, const UtilitySpec& spec)
{
    const int thr = ratio_bin(k.mean_thr_bps / spec.t_ref_bps);
    const int edge = ratio_bin(k.p5_thr_bps / spec.t_edge_ref_bps);
    const double f = k.failures_per_ue_min();
    int fail = 3;
    if (f == 0.0)
    {
        fail = 0;
    }
    else if (f <= 0.5 * spec.theta_fail)
    {
        fail = 1;
    }
    else if (f <= spec.theta_fail)
    {
        fail = 2;
    }
    const double pp = k.pingpong_ratio();
    const int ping = pp == 0.0 ? 0 : pp < 0.1 ? 1 : pp < 0.3 ? 2 : 3;
    return ((thr * kKpiBins + edge) * kKpiBins + fail) * kKpiBins + ping;
}

QTable::QTable(int states, int actions)
    : states_(states)
    , actions_(actions)
    , q_(static_cast<std::size_t>(states) * static_cast<std::size_t>(actions), 0.0)
{
    if (states < 1 || actions < 0)
    {
        throw std::invalid_argument("q-table dimensions");
    }
}

std::size_t
QTable::index(int s, int a) const
{
    if (s < 0 || s >= states_ || a < 0 || a >= actions_)
    {
        throw std::out_of_range("q-table index");
    }
    return static_cast<std::size_t>(s) * static_cast<std::size_t>(actions_) + static_cast<std::size_t>(a);
}

double
QTable::max_value(int s) const
{
    return actions_ == 0 ? 0.0 : value(s, greedy(s));
}

int
QTable::greedy(int s) const
{
    int best = 0;
    for (int a = 1; a < actions_; ++a)
    {
        if (value(s, a) > value(s, best))
        {
            best = a;
        }
    }
    return best;
}

double
QTable::update(int s, int a, double reward, int s_next, double alpha, double gamma)
{
    double& q = q_.at(index(s, a));
    q += alpha * (reward + gamma * max_value(s_next) - q);
    return q;
}

int
choose_action(const QTable& q, int state, double epsilon, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < epsilon)
    {
        std::uniform_int_distribution<int> pick(0, q.actions() - 1);
        return pick(rng);
    }
    return q.greedy(state);
}

double
epsilon_at(const QLearnParams& p, int episode)
{
    if (p.episodes <= 1)
    {
        return p.epsilon_start;
    }
    const double f = static_cast<double>(episode) / static_cast<double>(p.episodes - 1);
    return p.epsilon_start + (p.epsilon_end - p.epsilon_start) * f;
}

QLearnResult
q_learn(ConfigEvaluator& eval, const std::vector<Coordinate>& coords, const QLearnParams& p)
{
    QLearnResult out;
    out.actions = action_set(coords);
    if (out.actions.empty())
    {
        throw std::invalid_argument("q_learn needs at least one coordinate");
    }
    out.table = QTable(kStateCount, static_cast<int>(out.actions.size()));
    std::mt19937_64 rng(p.seed);

    const auto& base = eval.evaluate(eval.base());
    out.utility_base = base.utility;
    out.best = eval.base();
    out.utility_best = base.utility;

    for (int ep = 0; ep < p.episodes; ++ep)
    {
        const double eps = epsilon_at(p, ep);
        ConfigMap cur = eval.base();
        const Evaluation* cur_eval = &eval.evaluate(cur);
        int s = encode_state(cur_eval->mean, eval.spec());
        for (int step = 0; step < p.episode_len; ++step)
        {
            const int a = choose_action(out.table, s, eps, rng);
            ConfigMap next = cur;
            apply_action(next, out.actions[static_cast<std::size_t>(a)]);
            for (const auto& [id, c] : next)
            {
                if (first_out_of_range_field(c))
                {
                    out.left_domain = true;
                }
            }
            const Evaluation* next_eval = &eval.evaluate(next);
            const int s_next = encode_state(next_eval->mean, eval.spec());
            const double r = next_eval->utility - cur_eval->utility - next_eval->violations;
            out.table.update(s, a, r, s_next, p.alpha, p.gamma);
            ++out.steps;
            if (next_eval->utility > out.utility_best)
            {
                out.utility_best = next_eval->utility;
                out.best = next;
            }
            cur = std::move(next);
            cur_eval = next_eval;
            s = s_next;
        }
    }
    out.changes = diff_configs(eval.base(), out.best);
    return out;
}

namespace {

nlohmann::json
action_to_json(const Action& a)
{
    return {{"cell_id", a.cell}, {"param", param_field(a.param)}, {"direction", a.direction}};
}

} // namespace

nlohmann::json
qtable_to_json(const QTable& q, const std::vector<Action>& actions)
{
    nlohmann::json acts = nlohmann::json::array();
    for (const auto& a : actions)
    {
        acts.push_back(action_to_json(a));
    }
    nlohmann::json rows = nlohmann::json::array();
    for (int s = 0; s < q.states(); ++s)
    {
        bool touched = false;
        nlohmann::json values = nlohmann::json::array();
        for (int a = 0; a < q.actions(); ++a)
        {
            touched = touched || q.value(s, a) != 0.0;
            values.push_back(q.value(s, a));
        }
        if (touched)
        {
            rows.push_back({{"state", s}, {"values", values}});
        }
    }
    return {{"states", q.states()}, {"actions", acts}, {"rows", rows}};
}

nlohmann::json
qlearn_result_to_json(const QLearnResult& r)
{
    return {{"changes", change_set_to_json(r.changes)},
            {"utility_base", r.utility_base},
            {"utility_best", r.utility_best},
            {"steps", r.steps},
            {"qtable", qtable_to_json(r.table, r.actions)}};
}

} // namespace dtran::opt

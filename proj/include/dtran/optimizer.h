#pragma once

#include "dtran/cell_config.h"
#include "dtran/kpi.h"
#include "dtran/ran_sim.h"
#include "dtran/topology.h"
#include "dtran/twin_graph.h"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace dtran::opt {

/// Error with a machine-readable code: invalid_change, unsupported_tier,
/// lattice_too_large, version_mismatch, bad_request.
class OptimizerError : public std::runtime_error
{
  public:
    OptimizerError(std::string code, const std::string& message, nlohmann::json detail = nlohmann::json::object())
        : std::runtime_error(message)
        , code_(std::move(code))
        , detail_(std::move(detail))
    {
    }
    const std::string& code() const { return code_; }
    const nlohmann::json& detail() const { return detail_; }

  private:
    std::string code_;
    nlohmann::json detail_;
};

struct UtilitySpec
{
    double w_thr = 1.0;
    double w_edge = 0.5;
    double w_fail = 2.0;
    double w_pp = 1.0;
    double t_ref_bps = 20e6;
    double t_edge_ref_bps = 2e6;
    /// Constraint floor on 5th-percentile throughput.
    double theta_edge_bps = 1e6;
    /// Constraint ceiling on failures per UE-minute.
    double theta_fail = 0.5;

    /// Throws std::invalid_argument for negative weights or non-positive scales.
    void validate() const;
    bool operator==(const UtilitySpec&) const = default;
};

void to_json(nlohmann::json& j, const UtilitySpec& s);
/// Missing keys keep their defaults; the result is validated.
void from_json(const nlohmann::json& j, UtilitySpec& s);

double utility(const KpiWindow& k, const UtilitySpec& spec);

struct ConstraintCheck
{
    bool edge_ok = true;
    bool fail_ok = true;

    bool ok() const { return edge_ok && fail_ok; }
    int violations() const { return int(!edge_ok) + int(!fail_ok); }
    bool operator==(const ConstraintCheck&) const = default;
};

ConstraintCheck check_constraints(const KpiWindow& k, const UtilitySpec& spec);
nlohmann::json constraint_check_to_json(const ConstraintCheck& c);

/// Frozen starting point of every what-if: the twin's mirrored network and
/// UE population at one instant.
struct Scenario
{
    Topology topology;
    std::vector<UeState> ues;
    std::int64_t t0_ms = 0;
    std::uint64_t twin_version = 0;
    /// Without mirrored UEs (tier L1) each replication places a fresh UE
    /// population from its seed.
    bool synthetic_ues = false;
};

/// Throws OptimizerError(unsupported_tier) for L0, TwinError for a twin
/// without topology.
Scenario scenario_from_twin(const twin::TwinGraph& graph, twin::FidelityTier tier);
Scenario scenario_from_world(const World& world);

/// Replica of the scenario running `configs`, with mobility seeded by `seed`.
World instantiate(const Scenario& s, const ConfigMap& configs, std::uint64_t seed);

/// KPIs over (t0, t0 + horizon] of one replica.
KpiWindow simulate(const Scenario& s, const ConfigMap& configs, std::uint64_t seed, double horizon_s);

/// seeds[r] = hash(base_seed, r).
std::vector<std::uint64_t> replication_seeds(std::uint64_t base_seed, int replications);

/// Throws OptimizerError(invalid_change) naming the cell and field.
void check_changes(const Topology& topo, const ChangeSet& changes);

struct WhatIfRequest
{
    ChangeSet changes;
    double horizon_s = 30.0;
    int replications = 3;
    /// Must match the scenario's twin version when set.
    std::optional<std::uint64_t> base_version;
    /// Seed the replication seeds derive from; defaults to the topology seed.
    std::optional<std::uint64_t> base_seed;
    /// Explicit per-replication seeds; overrides base_seed and replications.
    std::vector<std::uint64_t> seeds;
};

/// Throws OptimizerError(bad_request) for malformed bodies.
WhatIfRequest whatif_request_from_json(const nlohmann::json& j);
nlohmann::json whatif_request_to_json(const WhatIfRequest& r);

struct ReplicationReport
{
    std::uint64_t seed = 0;
    KpiWindow before;
    KpiWindow after;
    double utility_before = 0.0;
    double utility_after = 0.0;
    ConstraintCheck constraints_before;
    ConstraintCheck constraints_after;
};

struct KpiDeltas
{
    double mean_thr_bps = 0.0;
    double p5_thr_bps = 0.0;
    double failures_per_ue_min = 0.0;
    double pingpong_ratio = 0.0;
};

struct WhatIfReport
{
    std::uint64_t twin_version = 0;
    std::int64_t t0_ms = 0;
    double horizon_s = 0.0;
    ChangeSet changes;
    std::vector<ReplicationReport> replications;
    double utility_before = 0.0;
    double utility_after = 0.0;
    KpiDeltas deltas;

    std::vector<bool> constraints_ok() const;
    std::vector<std::uint64_t> seeds() const;
};

nlohmann::json whatif_report_to_json(const WhatIfReport& r);
WhatIfReport whatif_report_from_json(const nlohmann::json& j);

/// Runs the scenario with and without the changes on every replication.
/// Never touches the twin it was built from.
WhatIfReport whatif(const Scenario& s, const WhatIfRequest& req, const UtilitySpec& spec);

/// One controllable parameter of one cell.
struct Coordinate
{
    CellId cell = 0;
    CellParam param = CellParam::tilt;

    auto operator<=>(const Coordinate&) const = default;
};

/// Every (cell, param) of the topology in cell order.
std::vector<Coordinate> all_coordinates(const Topology& topo, std::span<const CellParam> params = kAllCellParams);

struct Axis
{
    Coordinate coord;
    std::vector<int> values;
};

/// Axes over the full parameter domains.
std::vector<Axis> full_axes(const std::vector<Coordinate>& coords);

inline constexpr std::size_t kMaxExhaustivePoints = 10000;

/// Product of axis sizes, saturating at SIZE_MAX.
std::size_t lattice_size(const std::vector<Axis>& axes);

struct Evaluation
{
    ConfigMap configs;
    double utility = 0.0;
    std::vector<KpiWindow> windows;
    std::vector<double> utilities;
    std::vector<ConstraintCheck> checks;
    /// KPI means over replications.
    KpiWindow mean;
    /// Violated constraints summed over replications, divided by their count.
    double violations = 0.0;
};

/// Memoised utility of full configuration maps on fixed seeds.
class ConfigEvaluator
{
  public:
    ConfigEvaluator(Scenario scenario, UtilitySpec spec, double horizon_s, std::vector<std::uint64_t> seeds);

    const Evaluation& evaluate(const ConfigMap& configs);
    const Scenario& scenario() const { return scenario_; }
    const UtilitySpec& spec() const { return spec_; }
    const ConfigMap& base() const { return base_; }
    double horizon_s() const { return horizon_s_; }
    const std::vector<std::uint64_t>& seeds() const { return seeds_; }
    /// Distinct configurations simulated so far.
    std::size_t simulations() const { return cache_.size(); }

  private:
    Scenario scenario_;
    UtilitySpec spec_;
    ConfigMap base_;
    double horizon_s_;
    std::vector<std::uint64_t> seeds_;
    std::map<ConfigMap, Evaluation> cache_;
};

struct TraceEntry
{
    std::size_t iteration = 0;
    ChangeSet changes;
    double utility = 0.0;
    bool accepted = false;
};

struct SearchResult
{
    ConfigMap best;
    /// Changes from the base configuration to `best`.
    ChangeSet changes;
    double utility_base = 0.0;
    double utility_best = 0.0;
    std::vector<TraceEntry> trace;
    std::size_t evaluations = 0;
};

nlohmann::json search_result_to_json(const SearchResult& r);

/// Greedy coordinate descent over +-1 lattice steps. Each neighbour
/// evaluation counts against `budget_evals`; the best strictly improving
/// neighbour of a sweep is accepted (first one on ties).
SearchResult local_search(ConfigEvaluator& eval, const std::vector<Coordinate>& coords, std::size_t budget_evals);

/// Every lattice point in lexicographic order of its value tuple; the first
/// maximum wins. Throws OptimizerError(lattice_too_large) above 10^4 points.
SearchResult exhaustive(ConfigEvaluator& eval, const std::vector<Axis>& axes);

/// A lattice move. CA actions toggle; others step by `direction`.
struct Action
{
    CellId cell = 0;
    CellParam param = CellParam::tilt;
    int direction = 1;

    bool operator==(const Action&) const = default;
};

/// (cell, param, +1) and (cell, param, -1) for every coordinate, a single
/// toggle for CA coordinates.
std::vector<Action> action_set(const std::vector<Coordinate>& coords);

/// Saturating; returns false when the action is blocked by a domain bound.
bool apply_action(ConfigMap& configs, const Action& a);

inline constexpr int kKpiBins = 4;
inline constexpr int kStateCount = kKpiBins * kKpiBins * kKpiBins * kKpiBins;

/// Bins: mean and p5 throughput by ratio to their reference scale
/// (<0.5, <1, <1.5, >=1.5); failures by ratio to theta_fail (0, <=0.5,
/// <=1, >1); ping-pong ratio (0, <0.1, <0.3, >=0.3).
int encode_state(const KpiWindow& k, const UtilitySpec& spec);

class QTable
{
  public:
    QTable(int states, int actions);

    int states() const { return states_; }
    int actions() const { return actions_; }
    double value(int s, int a) const { return q_.at(index(s, a)); }
    void set(int s, int a, double v) { q_.at(index(s, a)) = v; }
    double max_value(int s) const;
    /// Lowest-index action among the maxima.
    int greedy(int s) const;
    /// Q(s,a) += alpha (r + gamma max_a' Q(s',a') - Q(s,a)). Returns the new value.
    double update(int s, int a, double reward, int s_next, double alpha, double gamma);

  private:
    std::size_t index(int s, int a) const;

    int states_;
    int actions_;
    std::vector<double> q_;
};

/// Uniform random action with probability epsilon, otherwise greedy.
int choose_action(const QTable& q, int state, double epsilon, std::mt19937_64& rng);

struct QLearnParams
{
    int episodes = 200;
    int episode_len = 20;
    double alpha = 0.1;
    double gamma = 0.9;
    double epsilon_start = 0.3;
    double epsilon_end = 0.05;
    std::uint64_t seed = 1;
};

/// Linear from epsilon_start at the first episode to epsilon_end at the last.
double epsilon_at(const QLearnParams& p, int episode);

struct QLearnResult
{
    QTable table{kStateCount, 0};
    std::vector<Action> actions;
    ConfigMap best;
    ChangeSet changes;
    double utility_base = 0.0;
    double utility_best = 0.0;
    std::size_t steps = 0;
    /// Set if an emitted action ever produced an out-of-domain config.
    bool left_domain = false;
};

nlohmann::json qtable_to_json(const QTable& q, const std::vector<Action>& actions);
nlohmann::json qlearn_result_to_json(const QLearnResult& r);

/// Tabular Q-learning from the evaluator's base config. Reward per step is
/// U(after) - U(before) - violated constraints of `after`. The evaluator
/// normally runs 10 s horizons on one replication.
QLearnResult q_learn(ConfigEvaluator& eval, const std::vector<Coordinate>& coords, const QLearnParams& p);

struct GateParams
{
    double delta = 0.02;
    int replications = 5;
    double horizon_s = 30.0;
};

void to_json(nlohmann::json& j, const GateParams& g);
void from_json(const nlohmann::json& j, GateParams& g);

struct GateDecision
{
    bool accepted = false;
    double mean_improvement = 0.0;
    std::vector<ConstraintCheck> per_replication;
    /// Empty when accepted, otherwise insufficient_improvement or constraint.
    std::string reason;
    WhatIfReport report;
};

nlohmann::json gate_decision_to_json(const GateDecision& d);

/// Decision rule over a finished what-if report.
GateDecision evaluate_gate(const WhatIfReport& report, double delta);

/// Salt mixed into the topology seed for gate replications, so the gate
/// never scores a candidate on the seeds it was searched on.
inline constexpr std::uint64_t kGateSeedSalt = 0x6761746500000000ULL;

/// Runs the gate what-if and, on acceptance, hands the changes to `push`.
GateDecision safety_gate(const Scenario& s,
                         const ChangeSet& changes,
                         const UtilitySpec& spec,
                         const GateParams& params,
                         const std::function<void(const ChangeSet&)>& push = {});

struct WatchdogParams
{
    double window_s = 30.0;
    double rho = 0.10;
};

enum class WatchdogVerdict
{
    kept,
    rolled_back,
};

const char* watchdog_verdict_name(WatchdogVerdict v);

/// Rolled back iff post < baseline - rho |baseline|, which is (1 - rho)
/// baseline for non-negative baselines.
WatchdogVerdict watchdog_verdict(double baseline, double post, double rho);

/// Changes that restore `pre_apply` from `current`.
ChangeSet inverse_changes(const ConfigMap& current, const ConfigMap& pre_apply);

/// Post-apply guard for one transaction.
class RollbackWatchdog
{
  public:
    struct Decision
    {
        WatchdogVerdict verdict = WatchdogVerdict::kept;
        double baseline = 0.0;
        double post = 0.0;
        std::string rollback_txn;
        ChangeSet inverse;
    };

    explicit RollbackWatchdog(WatchdogParams p = {}) : params_(p) {}

    void arm(std::string txn_id, double baseline, ConfigMap pre_apply, std::int64_t applied_ms);
    bool armed() const { return armed_; }
    const std::string& txn_id() const { return txn_; }
    std::int64_t due_ms() const;
    const WatchdogParams& params() const { return params_; }

    /// Disarms and decides. The rollback transaction id is fresh per txn.
    Decision evaluate(double post_utility, const ConfigMap& current);

    /// A failed rollback push leaves the network for an operator.
    void rollback_timed_out() { manual_intervention_ = true; }
    bool manual_intervention() const { return manual_intervention_; }

  private:
    WatchdogParams params_;
    bool armed_ = false;
    bool manual_intervention_ = false;
    std::string txn_;
    double baseline_ = 0.0;
    ConfigMap pre_apply_;
    std::int64_t applied_ms_ = 0;
};

} // namespace dtran::opt

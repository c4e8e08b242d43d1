#pragma once

#include "dtran/sim_record.h"

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "json.hpp"

namespace dtran {

struct CellKpis
{
    double mean_thr_bps = 0.0;
    double p5_thr_bps = 0.0;
    std::uint64_t rlf_count = 0;
    std::uint64_t ho_count = 0;
    std::uint64_t pingpong_count = 0;
    std::uint64_t sample_count = 0;

    bool operator==(const CellKpis&) const = default;
};

/// Aggregated performance over (t_start_s, t_end_s].
struct KpiWindow
{
    double t_start_s = 0.0;
    double t_end_s = 0.0;
    double mean_thr_bps = 0.0;
    double p5_thr_bps = 0.0;
    std::uint64_t rlf_count = 0;
    std::uint64_t ho_count = 0;
    std::uint64_t pingpong_count = 0;
    std::uint64_t sample_count = 0;
    std::size_t ue_count = 0;
    std::map<CellId, CellKpis> per_cell;

    double duration_s() const { return t_end_s - t_start_s; }
    /// Radio-link failures per UE per minute of window.
    double failures_per_ue_min() const;
    /// Fraction of handovers that were ping-pongs (0 with no handovers).
    double pingpong_ratio() const;

    bool operator==(const KpiWindow&) const = default;
};

/// 5th percentile by nearest rank, capped at the mean so that p5 <= mean
/// holds for every sample set.
double edge_throughput(std::vector<double> samples, double mean);

/// Aggregates the records with t in (t_start_s, t_end_s]. Throughput stats
/// come from kpi_sample records, counts from events. Throws
/// std::invalid_argument unless t_end_s > t_start_s.
KpiWindow aggregate_kpis(std::span<const SimRecord> log,
                         double t_start_s,
                         double t_end_s,
                         std::size_t ue_count);

/// Consecutive windows of `window_s` covering (t_start_s, t_end_s].
std::vector<KpiWindow> aggregate_series(std::span<const SimRecord> log,
                                        double t_start_s,
                                        double t_end_s,
                                        double window_s,
                                        std::size_t ue_count);

nlohmann::json kpi_window_to_json(const KpiWindow& k);
KpiWindow kpi_window_from_json(const nlohmann::json& j);

/// CSV with a fixed column order; see docs/formats.md.
std::string kpi_csv_header();
std::string kpi_csv_row(const KpiWindow& k);

} // namespace dtran

#include "dtran/kpi.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dtran {

namespace {

struct Accum
{
    double sum = 0.0;
    std::vector<double> samples;
};

} // namespace

double
KpiWindow::failures_per_ue_min() const
{
    const double ue_minutes = static_cast<double>(ue_count) * duration_s() / 60.0;
    return ue_minutes > 0.0 ? static_cast<double>(rlf_count) / ue_minutes : 0.0;
}

double
KpiWindow::pingpong_ratio() const
{
    return ho_count > 0 ? static_cast<double>(pingpong_count) / static_cast<double>(ho_count)
                        : 0.0;
}

double
edge_throughput(std::vector<double> samples, double mean)
{
    if (samples.empty())
    {
        return 0.0;
    }
    std::sort(samples.begin(), samples.end());
    const auto n = samples.size();
    auto rank = static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    return std::min(samples[rank - 1], mean);
}

KpiWindow
aggregate_kpis(std::span<const SimRecord> log,
               double t_start_s,
               double t_end_s,
               std::size_t ue_count)
{
    if (!(t_end_s > t_start_s))
    {
        throw std::invalid_argument("KPI window must have t_end > t_start");
    }
    const auto lo = static_cast<std::int64_t>(std::llround(t_start_s * 1000.0));
    const auto hi = static_cast<std::int64_t>(std::llround(t_end_s * 1000.0));

    KpiWindow k;
    k.t_start_s = t_start_s;
    k.t_end_s = t_end_s;
    k.ue_count = ue_count;

    Accum total;
    std::map<CellId, Accum> cells;
    for (const auto& r : log)
    {
        if (r.t_ms <= lo || r.t_ms > hi)
        {
            continue;
        }
        switch (r.kind)
        {
        case RecordKind::kpi_sample:
            total.sum += r.thr_bps;
            total.samples.push_back(r.thr_bps);
            if (r.from_cell != kOutage)
            {
                auto& c = cells[r.from_cell];
                c.sum += r.thr_bps;
                c.samples.push_back(r.thr_bps);
            }
            break;
        case RecordKind::handover:
            ++k.ho_count;
            ++k.per_cell[r.from_cell].ho_count;
            break;
        case RecordKind::pingpong:
            ++k.pingpong_count;
            ++k.per_cell[r.from_cell].pingpong_count;
            break;
        case RecordKind::rlf:
            ++k.rlf_count;
            ++k.per_cell[r.from_cell].rlf_count;
            break;
        case RecordKind::reattach:
        case RecordKind::config_applied:
            break;
        }
    }
    k.sample_count = total.samples.size();
    if (k.sample_count > 0)
    {
        k.mean_thr_bps = total.sum / static_cast<double>(k.sample_count);
        k.p5_thr_bps = edge_throughput(std::move(total.samples), k.mean_thr_bps);
    }
    for (auto& [id, acc] : cells)
    {
        auto& c = k.per_cell[id];
        c.sample_count = acc.samples.size();
        c.mean_thr_bps = acc.sum / static_cast<double>(c.sample_count);
        c.p5_thr_bps = edge_throughput(std::move(acc.samples), c.mean_thr_bps);
    }
    return k;
}

std::vector<KpiWindow>
aggregate_series(std::span<const SimRecord> log,
                 double t_start_s,
                 double t_end_s,
                 double window_s,
                 std::size_t ue_count)
{
    if (!(window_s > 0.0))
    {
        throw std::invalid_argument("window_s must be positive");
    }
    std::vector<KpiWindow> out;
    const auto n = static_cast<std::int64_t>(std::floor((t_end_s - t_start_s) / window_s + 1e-9));
    for (std::int64_t i = 0; i < n; ++i)
    {
        const double a = t_start_s + window_s * static_cast<double>(i);
        out.push_back(aggregate_kpis(log, a, a + window_s, ue_count));
    }
    return out;
}

nlohmann::json
kpi_window_to_json(const KpiWindow& k)
{
    nlohmann::json per_cell = nlohmann::json::object();
    for (const auto& [id, c] : k.per_cell)
    {
        per_cell[std::to_string(id)] = {{"mean_thr_bps", c.mean_thr_bps},
                                        {"p5_thr_bps", c.p5_thr_bps},
                                        {"rlf_count", c.rlf_count},
                                        {"ho_count", c.ho_count},
                                        {"pingpong_count", c.pingpong_count},
                                        {"sample_count", c.sample_count}};
    }
    return {{"t_start_s", k.t_start_s},
            {"t_end_s", k.t_end_s},
            {"mean_thr_bps", k.mean_thr_bps},
            {"p5_thr_bps", k.p5_thr_bps},
            {"rlf_count", k.rlf_count},
            {"ho_count", k.ho_count},
            {"pingpong_count", k.pingpong_count},
            {"sample_count", k.sample_count},
            {"ue_count", k.ue_count},
            {"failures_per_ue_min", k.failures_per_ue_min()},
            {"pingpong_ratio", k.pingpong_ratio()},
            {"per_cell", per_cell}};
}

KpiWindow
kpi_window_from_json(const nlohmann::json& j)
{
    KpiWindow k;
    k.t_start_s = j.at("t_start_s").get<double>();
    k.t_end_s = j.at("t_end_s").get<double>();
    k.mean_thr_bps = j.at("mean_thr_bps").get<double>();
    k.p5_thr_bps = j.at("p5_thr_bps").get<double>();
    k.rlf_count = j.at("rlf_count").get<std::uint64_t>();
    k.ho_count = j.at("ho_count").get<std::uint64_t>();
    k.pingpong_count = j.at("pingpong_count").get<std::uint64_t>();
    k.sample_count = j.value("sample_count", std::uint64_t{0});
    k.ue_count = j.at("ue_count").get<std::size_t>();
    if (j.contains("per_cell"))
    {
        for (const auto& [id, c] : j.at("per_cell").items())
        {
            CellKpis ck;
            ck.mean_thr_bps = c.at("mean_thr_bps").get<double>();
            ck.p5_thr_bps = c.at("p5_thr_bps").get<double>();
            ck.rlf_count = c.at("rlf_count").get<std::uint64_t>();
            ck.ho_count = c.at("ho_count").get<std::uint64_t>();
            ck.pingpong_count = c.at("pingpong_count").get<std::uint64_t>();
            ck.sample_count = c.value("sample_count", std::uint64_t{0});
            k.per_cell[static_cast<CellId>(std::stoul(id))] = ck;
        }
    }
    return k;
}

std::string
kpi_csv_header()
{
    return "t_start_s,t_end_s,mean_thr_bps,p5_thr_bps,rlf_count,ho_count,pingpong_count,"
           "sample_count,ue_count,failures_per_ue_min,pingpong_ratio";
}

std::string
kpi_csv_row(const KpiWindow& k)
{
    std::ostringstream os;
    os.precision(17);
    os << k.t_start_s << ',' << k.t_end_s << ',' << k.mean_thr_bps << ',' << k.p5_thr_bps << ','
       << k.rlf_count << ',' << k.ho_count << ',' << k.pingpong_count << ',' << k.sample_count
       << ',' << k.ue_count << ',' << k.failures_per_ue_min() << ',' << k.pingpong_ratio();
    return os.str();
}

} // namespace dtran

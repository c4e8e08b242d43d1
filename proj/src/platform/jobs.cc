#include "dtran/platform.h"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace dtran::platform {

nlohmann::json
event_to_json(const Event& e)
{
    return {{"seq", e.seq}, {"type", e.type}, {"t_ms", e.t_ms}, {"twin_version", e.twin_version}, {"data", e.data}};
}

Event
event_from_json(const nlohmann::json& j)
{
    try
    {
        Event e;
        e.seq = j.at("seq").get<std::uint64_t>();
        e.type = j.at("type").get<std::string>();
        e.t_ms = j.at("t_ms").get<std::int64_t>();
        e.twin_version = j.at("twin_version").get<std::uint64_t>();
        e.data = j.at("data");
        return e;
    }
    catch (const nlohmann::json::exception& ex)
    {
        throw std::invalid_argument(std::string("malformed event: ") + ex.what());
    }
}

std::string
event_line(const Event& e)
{
    return event_to_json(e).dump();
}

const char*
job_kind_name(JobKind k)
{
    switch (k)
    {
    case JobKind::whatif:
        return "whatif";
    case JobKind::optimize:
        return "optimize";
    case JobKind::apply:
        return "apply";
    }
    return "whatif";
}

const char*
job_status_name(JobStatus s)
{
    switch (s)
    {
    case JobStatus::queued:
        return "queued";
    case JobStatus::running:
        return "running";
    case JobStatus::done:
        return "done";
    case JobStatus::failed:
        return "failed";
    }
    return "queued";
}

nlohmann::json
job_to_json(const JobRecord& j)
{
    nlohmann::json out{{"id", j.id},
                       {"kind", job_kind_name(j.kind)},
                       {"status", job_status_name(j.status)},
                       {"created_ms", j.created_ms},
                       {"input", j.input},
                       {"result", j.result},
                       {"error", j.error}};
    out["finished_ms"] = j.finished_ms ? nlohmann::json(*j.finished_ms) : nlohmann::json(nullptr);
    out["txn_id"] = j.txn_id.empty() ? nlohmann::json(nullptr) : nlohmann::json(j.txn_id);
    return out;
}

JobStore::JobStore(std::optional<std::filesystem::path> dir)
    : dir_(std::move(dir))
{
    if (dir_)
    {
        std::filesystem::create_directories(*dir_ / "jobs");
    }
}

JobRecord
JobStore::create(JobKind kind, nlohmann::json input, std::int64_t t_ms)
{
    std::lock_guard lock(mu_);
    JobRecord j;
    j.id = "job-" + std::to_string(next_++);
    j.kind = kind;
    j.created_ms = t_ms;
    j.input = std::move(input);
    jobs_[j.id] = j;
    persist(j);
    return j;
}

JobRecord
JobStore::transition(const std::string& id, JobStatus to, std::function<void(JobRecord&)> fill)
{
    std::lock_guard lock(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end())
    {
        throw std::out_of_range("unknown job " + id);
    }
    auto& j = it->second;
    const bool terminal = j.status == JobStatus::done || j.status == JobStatus::failed;
    if (terminal || static_cast<int>(to) <= static_cast<int>(j.status))
    {
        throw std::logic_error(std::string("job ") + id + " cannot move from " + job_status_name(j.status) + " to " +
                               job_status_name(to));
    }
    j.status = to;
    if (fill)
    {
        fill(j);
    }
    persist(j);
    return j;
}

JobRecord
JobStore::start(const std::string& id)
{
    return transition(id, JobStatus::running, {});
}

JobRecord
JobStore::finish(const std::string& id, nlohmann::json result, std::int64_t t_ms)
{
    return transition(id, JobStatus::done, [&](JobRecord& j) {
        j.result = std::move(result);
        j.finished_ms = t_ms;
    });
}

JobRecord
JobStore::fail(const std::string& id, nlohmann::json error, std::int64_t t_ms)
{
    return transition(id, JobStatus::failed, [&](JobRecord& j) {
        j.error = std::move(error);
        j.finished_ms = t_ms;
    });
}

void
JobStore::set_txn(const std::string& id, const std::string& txn_id)
{
    std::lock_guard lock(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end())
    {
        throw std::out_of_range("unknown job " + id);
    }
    it->second.txn_id = txn_id;
    persist(it->second);
}

std::optional<JobRecord>
JobStore::get(const std::string& id) const
{
    std::lock_guard lock(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end())
    {
        return std::nullopt;
    }
    return it->second;
}

std::vector<JobRecord>
JobStore::all() const
{
    std::lock_guard lock(mu_);
    std::vector<JobRecord> out;
    for (const auto& [id, j] : jobs_)
    {
        out.push_back(j);
    }
    std::sort(out.begin(), out.end(), [](const JobRecord& a, const JobRecord& b) {
        return std::stoull(a.id.substr(4)) < std::stoull(b.id.substr(4));
    });
    return out;
}

void
JobStore::persist(const JobRecord& j) const
{
    if (!dir_)
    {
        return;
    }
    const auto final_path = *dir_ / "jobs" / (j.id + ".json");
    auto tmp = final_path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out)
        {
            throw std::runtime_error("cannot write " + tmp.string());
        }
        out << job_to_json(j).dump(2) << '\n';
    }
    std::filesystem::rename(tmp, final_path);
}

} // namespace dtran::platform

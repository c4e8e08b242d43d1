#include "dtran/service.h"

#include "httplib.h"

namespace dtran::service {

namespace {

bool
wants_stream(const httplib::Request& req)
{
    return req.get_header_value("Accept").find("text/event-stream") != std::string::npos;
}

std::string
sse_frame(const nlohmann::json& e)
{
    return "id: " + std::to_string(e.value("seq", std::uint64_t{0})) + "\nevent: " + e.value("type", "") +
           "\ndata: " + e.dump() + "\n\n";
}

} // namespace

bool
serve_http(Service& service,
           const std::string& host,
           int port,
           const std::function<void(int port)>& on_bound,
           std::atomic<bool>* stop_flag)
{
    httplib::Server svr;

    auto dispatch = [&service](const httplib::Request& req, httplib::Response& res) {
        std::map<std::string, std::string> query;
        for (const auto& [k, v] : req.params)
        {
            query[k] = v;
        }
        const auto r = service.handle(req.method, req.path, query, req.body);
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };

    svr.Get("/api/v1/events", [&service, dispatch](const httplib::Request& req, httplib::Response& res) {
        if (!wants_stream(req))
        {
            dispatch(req, res);
            return;
        }
        auto& hub = service.hub();
        const auto id = hub.subscribe();
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream",
            [&hub, id](std::size_t, httplib::DataSink& sink) {
                auto batch = hub.take(id, std::chrono::milliseconds(1000));
                if (!batch)
                {
                    sink.done();
                    return true;
                }
                if (batch->empty())
                {
                    static const std::string keepalive = ": keepalive\n\n";
                    return sink.write(keepalive.data(), keepalive.size());
                }
                for (const auto& e : *batch)
                {
                    const auto frame = sse_frame(e);
                    if (!sink.write(frame.data(), frame.size()))
                    {
                        return false;
                    }
                }
                return true;
            },
            [&hub, id](bool) { hub.unsubscribe(id); });
    });
    svr.Get(R"(/api/v1/.*)", dispatch);
    svr.Post(R"(/api/v1/.*)", dispatch);
    svr.Put(R"(/api/v1/.*)", dispatch);
    svr.Delete(R"(/api/v1/.*)", dispatch);

    int bound = port;
    if (port == 0)
    {
        bound = svr.bind_to_any_port(host);
        if (bound < 0)
        {
            return false;
        }
    }
    else if (!svr.bind_to_port(host, port))
    {
        return false;
    }
    if (on_bound)
    {
        on_bound(bound);
    }

    std::thread watcher;
    if (stop_flag)
    {
        watcher = std::thread([&svr, stop_flag] {
            while (!*stop_flag)
            {
                std::this_thread::sleep_for(std::chrono::milliseconds(50));
            }
            svr.stop();
        });
    }
    const bool ok = svr.listen_after_bind();
    if (watcher.joinable())
    {
        *stop_flag = true;
        watcher.join();
    }
    return ok;
}

} // namespace dtran::service

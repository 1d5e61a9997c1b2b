#pragma once

#include <string>

#include <httplib.h>

#include "service.hpp"

namespace kriq {

/// Socket transport for handle_http.
class HttpServer {
public:
    explicit HttpServer(Session& session) : session_(session) {
        auto forward = [this](const httplib::Request& req, httplib::Response& res) {
            auto r = handle_http(session_, req.method, req.path, req.body);
            res.status = r.status;
            res.set_content(r.body, r.content_type);
        };
        server_.Get(".*", forward);
        server_.Post(".*", forward);
    }

    /// Binds; port 0 picks a free port. Returns the bound port, or -1.
    int bind(const std::string& host, int port) {
        if (port == 0) return server_.bind_to_any_port(host);
        return server_.bind_to_port(host, port) ? port : -1;
    }

    bool listen() { return server_.listen_after_bind(); }
    void stop() { server_.stop(); }
    bool running() const { return server_.is_running(); }
    void wait_until_ready() const { server_.wait_until_ready(); }

private:
    Session& session_;
    httplib::Server server_;
};

} // namespace kriq

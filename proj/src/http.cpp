#include <httplib.h>

#include "carematch/error.hpp"
#include "carematch/service.hpp"

namespace carematch::service {

using nlohmann::json;

namespace {

int status_for(const std::string& code) {
    if (code == "invalid-credentials" || code == "unauthorized" || code == "token-expired") return 401;
    if (code == "forbidden") return 403;
    return 400;
}

void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

std::string bearer(const httplib::Request& req) {
    auto header = req.get_header_value("Authorization");
    const std::string prefix = "Bearer ";
    if (header.compare(0, prefix.size(), prefix) != 0) throw AuthError("unauthorized", "missing bearer token");
    return header.substr(prefix.size());
}

json body_json(const httplib::Request& req) {
    try {
        return json::parse(req.body);
    } catch (const json::exception& e) {
        throw Error("bad-request", std::string("request body is not JSON: ") + e.what());
    }
}

// Maps library errors onto JSON error bodies.
template <typename F>
void guarded(httplib::Response& res, F&& handler) {
    try {
        handler();
    } catch (const QueryError& e) {
        json body{{"error", e.code()}, {"message", e.what()}};
        if (e.offset()) body["offset"] = *e.offset();
        send(res, 400, body);
    } catch (const CatalogError& e) {
        json body{{"error", e.code()}, {"message", e.what()}};
        if (e.row()) body["row"] = *e.row();
        if (e.column()) body["column"] = *e.column();
        send(res, 400, body);
    } catch (const Error& e) {
        send(res, status_for(e.code()), json{{"error", e.code()}, {"message", e.what()}});
    } catch (const json::exception& e) {
        send(res, 400, json{{"error", "bad-request"}, {"message", e.what()}});
    } catch (const std::exception& e) {
        send(res, 500, json{{"error", "internal"}, {"message", e.what()}});
    }
}

}  // namespace

struct HttpServer::Impl {
    Service& service;
    httplib::Server server;

    explicit Impl(Service& s) : service(s) {
        server.Post("/login", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto body = body_json(req);
                auto token = service.login(body.at("username").get<std::string>(), body.at("password").get<std::string>());
                send(res, 200, json{{"token", token}});
            });
        });
        server.Post("/query", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                auto token = bearer(req);
                auto body = body_json(req);
                send(res, 200, response::to_json(service.submit_query(token, body.at("query").get<std::string>())));
            });
        });
        server.Post("/providers", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { send(res, 200, json{{"version", service.ingest(bearer(req), req.body)}}); });
        });
        server.Get("/schema", [this](const httplib::Request&, httplib::Response& res) {
            guarded(res, [&] { send(res, 200, service.schema()); });
        });
        server.Get("/log", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                std::optional<std::size_t> limit;
                if (req.has_param("limit")) {
                    try {
                        limit = std::stoul(req.get_param_value("limit"));
                    } catch (const std::exception&) {
                        throw Error("bad-request", "limit must be a non-negative integer");
                    }
                }
                json entries = json::array();
                for (const auto& e : service.log(bearer(req), limit)) entries.push_back(to_json(e));
                send(res, 200, json{{"entries", entries}});
            });
        });
        server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
            guarded(res, [&] { send(res, 200, service.health()); });
        });
    }
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {}
HttpServer::~HttpServer() { stop(); }

bool HttpServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) return impl_->server.bind_to_any_port(host);
    return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpServer::serve() { return impl_->server.listen_after_bind(); }
void HttpServer::stop() { impl_->server.stop(); }
bool HttpServer::running() const { return impl_->server.is_running(); }

}  // namespace carematch::service

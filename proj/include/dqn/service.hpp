#pragma once

#include <atomic>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <json.hpp>

#include "dqn/error.hpp"
#include "dqn/scenario.hpp"

#include <httplib.h>

namespace dqn {

namespace http_detail {

inline void send_json(httplib::Response& res, int status, const std::string& body) {
  res.status = status;
  res.set_content(body, "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& message, json fields = json::array()) {
  send_json(res, status, json{{"error", message}, {"fields", fields}}.dump());
}

inline int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadValue:
    case ErrorCode::UnknownFlightId:
    case ErrorCode::UnknownRosterInterval:
    case ErrorCode::NegativeCount:
      return 400;
    default:
      return 422;
  }
}

}  // namespace http_detail

/// JSON-over-HTTP front end. Without an engine every /api route answers 503.
class ScenarioServer {
 public:
  explicit ScenarioServer(std::shared_ptr<ScenarioEngine> engine = nullptr) : engine_(std::move(engine)) { routes(); }

  ~ScenarioServer() { stop(); }
  ScenarioServer(const ScenarioServer&) = delete;
  ScenarioServer& operator=(const ScenarioServer&) = delete;

  void set_engine(std::shared_ptr<ScenarioEngine> engine) {
    std::lock_guard lock(mutex_);
    engine_ = std::move(engine);
  }

  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host.c_str()) : (server_.bind_to_port(host.c_str(), port) ? port : -1);
    require(bound > 0, ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
    port_ = bound;
    return bound;
  }

  /// Blocks until stop().
  void listen() { server_.listen_after_bind(); }

  /// Serves on a background thread until stop() or destruction.
  void start() {
    thread_ = std::thread([this] { listen(); });
    server_.wait_until_ready();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const noexcept { return port_; }

 private:
  std::shared_ptr<ScenarioEngine> engine() {
    std::lock_guard lock(mutex_);
    return engine_;
  }

  template <class Handler>
  void guarded(const httplib::Request& req, httplib::Response& res, Handler&& handler) {
    auto e = engine();
    if (!e) return http_detail::send_error(res, 503, "service not initialized: no bundle/posterior loaded");
    try {
      handler(*e, req, res);
    } catch (const RequestError& err) {
      json fields = json::array();
      for (const auto& f : err.fields()) fields.push_back({{"field", f.field}, {"message", f.message}});
      http_detail::send_error(res, 400, "invalid request", fields);
    } catch (const Error& err) {
      http_detail::send_error(res, http_detail::status_for(err.code()), err.what());
    } catch (const json::exception& err) {
      http_detail::send_error(res, 400, std::string("malformed JSON: ") + err.what());
    } catch (const std::exception& err) {
      http_detail::send_error(res, 500, err.what());
    }
  }

  void routes() {
    server_.Get("/api/baseline", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [](ScenarioEngine& e, const httplib::Request& rq, httplib::Response& rs) {
        json body = json::object();
        std::vector<FieldError> errors;
        auto numeric = [&](const char* name, bool integer) {
          if (!rq.has_param(name)) return;
          const auto text = rq.get_param_value(name);
          try {
            std::size_t used = 0;
            if (integer) {
              const long long v = std::stoll(text, &used);
              if (used == text.size()) body[name] = v;
            } else {
              const double v = std::stod(text, &used);
              if (used == text.size()) body[name] = v;
            }
            if (used != text.size()) errors.push_back({name, "not a number: '" + text + "'"});
          } catch (const std::exception&) {
            errors.push_back({name, "not a number: '" + text + "'"});
          }
        };
        numeric("n_sims", true);
        numeric("level", false);
        numeric("seed", true);
        if (!errors.empty()) throw RequestError(std::move(errors));
        http_detail::send_json(rs, 200, *e.respond(e.parse(body)));
      });
    });
    server_.Post("/api/scenario", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [](ScenarioEngine& e, const httplib::Request& rq, httplib::Response& rs) {
        const json body = rq.body.empty() ? json::object() : json::parse(rq.body);
        http_detail::send_json(rs, 200, *e.respond(e.parse(body)));
      });
    });
    server_.Get("/api/posterior", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [](ScenarioEngine& e, const httplib::Request&, httplib::Response& rs) {
        http_detail::send_json(rs, 200, e.posterior_summary());
      });
    });
    server_.Get("/api/meta", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [](ScenarioEngine& e, const httplib::Request&, httplib::Response& rs) {
        http_detail::send_json(rs, 200, e.meta().dump());
      });
    });
    server_.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
    });
  }

  httplib::Server server_;
  std::shared_ptr<ScenarioEngine> engine_;
  std::mutex mutex_;
  std::thread thread_;
  int port_ = -1;
};

}  // namespace dqn

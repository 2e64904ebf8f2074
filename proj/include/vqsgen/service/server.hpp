#pragma once

// HTTP front end for InferenceService. Handlers only read the loaded models,
// so the server's worker threads share one service instance.

#include <cstdio>
#include <string>

// Eigen first: httplib pulls in <resolv.h>, whose _res macro breaks Eigen's kernels.
#include "vqsgen/service/api.hpp"

#include "httplib.h"

namespace vqsgen {

inline constexpr std::size_t kMaxRequestBytes = 8 << 20;

inline void send(httplib::Response& res, const ServiceReply& r) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

/// Registers every endpoint on `srv`; the service must outlive it.
inline void mount_service(httplib::Server& srv, const InferenceService& svc) {
  srv.set_payload_max_length(kMaxRequestBytes);
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}, {"Access-Control-Allow-Headers", "Content-Type"}});
  srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  srv.Get("/health", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });
  srv.Get("/model-info", [&svc](const httplib::Request&, httplib::Response& res) { res.set_content(svc.model_info().dump(), "application/json"); });
  const std::pair<const char*, ServiceMode> routes[] = {
      {"/generate", ServiceMode::Generate}, {"/complete", ServiceMode::Complete}, {"/interpolate", ServiceMode::Interpolate}};
  for (const auto& [path, mode] : routes) {
    const ServiceMode m = mode;
    srv.Post(path, [&svc, m](const httplib::Request& req, httplib::Response& res) {
      send(res, svc.handle(m, req.body, InferenceService::server_seed()));
    });
  }
  srv.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    const char* code = res.status == 404 ? "not_found" : res.status == 413 ? "payload_too_large" : "http_error";
    send(res, InferenceService::error_reply(res.status, {{"code", code}, {"field", "path"}, {"message", req.method + " " + req.path}}));
  });
  srv.set_exception_handler([](const httplib::Request& req, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "unknown error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    const std::string id = detail::incident_id();
    std::fprintf(stderr, "incident %s: %s: %s\n", id.c_str(), req.path.c_str(), what.c_str());
    send(res, InferenceService::error_reply(500, {{"code", "internal_error"}, {"incident", id}, {"message", what}}));
  });
}

}  // namespace vqsgen

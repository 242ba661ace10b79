// Copyright 2026 The TextDesign Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "textdesign/annotation_http.h"

#include <cmath>

#include "json.hpp"

namespace textdesign {

namespace {

using json = nlohmann::json;

void Reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename Fn>
httplib::Server::Handler Guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const ServiceError& e) {
      Reply(res, e.http_status(), {{"error", e.what()}});
    } catch (const json::exception& e) {
      Reply(res, 400, {{"error", std::string("bad request body: ") + e.what()}});
    } catch (const std::exception& e) {
      Reply(res, 500, {{"error", e.what()}});
    }
  };
}

json PointJson(const LearningPoint& p) {
  return {{"size", p.size},
          {"nonzero_subject_loadings", p.nonzero_subject_loadings},
          {"mean_entropy", p.mean_entropy}};
}

int ParseCount(const httplib::Request& req) {
  if (!req.has_param("count")) return 1;
  const std::string raw = req.get_param_value("count");
  try {
    size_t used = 0;
    const int count = std::stoi(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    return count;
  } catch (const std::exception&) {
    throw ServiceError(ServiceError::Kind::kBadRequest,
                       "count must be an integer: " + raw);
  }
}

}  // namespace

void RegisterRoutes(httplib::Server& server, AnnotationService& service) {
  server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    Reply(res, 200, {{"status", "ok"}});
  });

  server.Get("/queue/:subject",
             Guarded([&service](const httplib::Request& req,
                                httplib::Response& res) {
               const std::string subject = req.path_params.at("subject");
               const std::string worker = req.get_param_value("worker");
               json tasks = json::array();
               for (const Task& t :
                    service.NextTasks(subject, ParseCount(req), worker)) {
                 tasks.push_back({{"doc_id", t.doc_id},
                                  {"subject", t.subject},
                                  {"text", t.text},
                                  {"rank", t.rank},
                                  {"status", TaskStatusName(t.status)}});
               }
               Reply(res, 200, {{"subject", subject}, {"tasks", tasks}});
             }));

  server.Post("/annotations", Guarded([&service](const httplib::Request& req,
                                                 httplib::Response& res) {
                const json body = json::parse(req.body);
                if (!body.is_object()) {
                  throw ServiceError(ServiceError::Kind::kBadRequest,
                                     "body must be a JSON object");
                }
                Annotation a;
                a.doc_id = body.at("doc_id").get<std::string>();
                a.worker_id = body.at("worker_id").get<std::string>();
                const json& label = body.at("label");
                if (!label.is_number_integer()) {
                  throw ServiceError(ServiceError::Kind::kBadRequest,
                                     "label must be an integer");
                }
                a.label = label.get<int>();
                a.timestamp_ms = body.value("timestamp", int64_t{0});
                const Resolution r = service.Submit(a);
                json out = {{"doc_id", a.doc_id},
                            {"outcome", OutcomeName(r.outcome)}};
                if (r.label) out["label"] = *r.label;
                Reply(res, 200, out);
              }));

  server.Get("/status/:subject",
             Guarded([&service](const httplib::Request& req,
                                httplib::Response& res) {
               const StatusReport s =
                   service.Status(req.path_params.at("subject"));
               json points = json::array();
               for (const auto& p : s.points) points.push_back(PointJson(p));
               Reply(res, 200,
                     {{"subject", s.subject},
                      {"total", s.total},
                      {"pending", s.pending},
                      {"in_progress", s.in_progress},
                      {"resolved", s.resolved},
                      {"discarded", s.discarded},
                      {"annotated_twice", s.annotated_twice},
                      {"agreement_rate", s.agreement_rate
                                             ? json(*s.agreement_rate)
                                             : json(nullptr)},
                      {"points", points}});
             }));

  server.Post("/refit/:subject",
              Guarded([&service](const httplib::Request& req,
                                 httplib::Response& res) {
                const std::string subject = req.path_params.at("subject");
                const LearningPoint p = service.Refit(subject);
                Reply(res, 200, {{"subject", subject}, {"point", PointJson(p)}});
              }));
}

}  // namespace textdesign

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

#ifndef TEXTDESIGN_ANNOTATION_HTTP_H_
#define TEXTDESIGN_ANNOTATION_HTTP_H_

#include <string>

// Eigen must be seen before httplib pulls in <resolv.h>.
#include "textdesign/annotation.h"

#include "httplib.h"

namespace textdesign {

// JSON routes:
//   GET  /queue/{subject}?count=N&worker=W
//        -> {"subject", "tasks": [{"doc_id","subject","text","rank","status"}]}
//   POST /annotations  {"doc_id","worker_id","label"[,"timestamp"]}
//        -> {"doc_id","outcome"[,"label"]}
//   GET  /status/{subject}
//        -> {"subject","total","pending","in_progress","resolved",
//            "discarded","annotated_twice","agreement_rate","points"}
//   POST /refit/{subject} -> {"subject","point"}
//   GET  /health -> {"status":"ok"}
// Errors answer {"error": message} with 400, 404 or 409.
void RegisterRoutes(httplib::Server& server, AnnotationService& service);

}  // namespace textdesign

#endif  // TEXTDESIGN_ANNOTATION_HTTP_H_

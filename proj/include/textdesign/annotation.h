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

#ifndef TEXTDESIGN_ANNOTATION_H_
#define TEXTDESIGN_ANNOTATION_H_

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "textdesign/corpus.h"
#include "textdesign/error.h"
#include "textdesign/harness.h"

namespace textdesign {

// Error carrying the HTTP status a request handler should answer with.
class ServiceError : public Error {
 public:
  enum class Kind { kBadRequest, kNotFound, kConflict };
  ServiceError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }
  int http_status() const;

 private:
  Kind kind_;
};

enum class TaskStatus { kPending, kInProgress, kResolved, kDiscarded };
std::string TaskStatusName(TaskStatus s);

enum class AgreementPolicy { kAgreeOfTwo, kMajorityOfThree };
AgreementPolicy ParseAgreementPolicy(const std::string& name);
std::string AgreementPolicyName(AgreementPolicy p);

struct Annotation {
  std::string doc_id;
  std::string worker_id;
  int label = 0;
  int64_t timestamp_ms = 0;
};

struct Task {
  std::string doc_id;
  std::string subject;
  std::string text;
  int rank = 0;
  TaskStatus status = TaskStatus::kPending;
  std::optional<int> final_label;
  std::vector<Annotation> annotations;
  // worker -> lease expiry (ms). Leases are not persisted.
  std::map<std::string, int64_t> leases;
};

enum class Outcome { kPending, kResolved, kDiscarded };
std::string OutcomeName(Outcome o);

struct Resolution {
  Outcome outcome = Outcome::kPending;
  std::optional<int> label;
};

// Pure resolution rule applied to the labels of one task in arrival order.
Resolution Resolve(const std::vector<int>& labels, AgreementPolicy policy);

struct QueueEntry {
  int rank = 0;
  std::string doc_id;
  std::string subject;
};

// Reads a ranking CSV (columns rank, doc_id and optionally subject). Rows
// without a subject column get `default_subject`.
std::vector<QueueEntry> ReadRanking(const std::string& path,
                                    const std::string& default_subject);

struct StatusReport {
  std::string subject;
  int total = 0;
  int pending = 0;
  int in_progress = 0;
  int resolved = 0;
  int discarded = 0;
  int annotated_twice = 0;
  int first_two_agree = 0;
  std::optional<double> agreement_rate;
  std::vector<LearningPoint> points;
};

struct ServiceOptions {
  AgreementPolicy policy = AgreementPolicy::kAgreeOfTwo;
  SentimentScale scale;
  std::chrono::milliseconds lease{std::chrono::minutes(10)};
  // Empty: in-memory only.
  std::string store_dir;
  int snapshot_every = 100;
  LearningOptions learning;
  std::function<int64_t()> clock;
};

// Queue and label state for every subject. All mutations go through one
// mutex and are appended to the log before they become visible; refits read
// a copy of the resolved labels and swap their result in afterwards.
class AnnotationService {
 public:
  AnnotationService(std::shared_ptr<const Corpus> pool,
                    const std::vector<QueueEntry>& ranking,
                    ServiceOptions options = {});

  std::vector<Task> NextTasks(const std::string& subject, int count,
                              const std::string& worker_id);
  Resolution Submit(Annotation annotation);
  StatusReport Status(const std::string& subject) const;
  LearningPoint Refit(const std::string& subject);

  std::vector<std::string> Subjects() const;
  std::optional<Task> FindTask(const std::string& doc_id) const;
  // Resolved (doc_id, label) pairs of a subject in resolution order.
  std::vector<LabeledDocument> ResolvedLabels(const std::string& subject) const;
  // doc_id -> status for every task; leases are ignored.
  std::map<std::string, TaskStatus> Statuses() const;
  const std::vector<Annotation>& Log() const { return log_; }
  void WriteSnapshot();

 private:
  int64_t Now() const;
  void Apply(const Annotation& a);
  void Recover();
  void AppendLog(const Annotation& a);
  TaskStatus StatusAt(const Task& task, int64_t now) const;
  int VotesNeeded(const Task& task) const;
  Task& TaskFor(const std::string& doc_id);

  std::shared_ptr<const Corpus> pool_;
  ServiceOptions options_;
  mutable std::mutex mu_;
  std::mutex refit_mu_;
  std::vector<Task> tasks_;
  std::map<std::string, size_t> by_doc_;
  std::map<std::string, std::vector<size_t>> queues_;
  std::map<std::string, std::vector<LabeledDocument>> resolved_;
  std::map<std::string, std::vector<LearningPoint>> points_;
  std::vector<Annotation> log_;
  size_t snapshot_at_ = 0;
};

// Rebuilds task statuses from an annotation sequence alone.
std::map<std::string, TaskStatus> ReplayStatuses(
    const std::vector<QueueEntry>& ranking,
    const std::vector<Annotation>& log, AgreementPolicy policy);

std::vector<Annotation> ReadAnnotationLog(const std::string& path);

}  // namespace textdesign

#endif  // TEXTDESIGN_ANNOTATION_H_

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

#include "textdesign/annotation.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "textdesign/io.h"

namespace textdesign {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr char kLogFile[] = "annotations.jsonl";
constexpr char kSnapshotFile[] = "snapshot.json";
constexpr char kRefitFile[] = "refits.jsonl";

ServiceError BadRequest(const std::string& what) {
  return ServiceError(ServiceError::Kind::kBadRequest, what);
}
ServiceError NotFound(const std::string& what) {
  return ServiceError(ServiceError::Kind::kNotFound, what);
}
ServiceError Conflict(const std::string& what) {
  return ServiceError(ServiceError::Kind::kConflict, what);
}

json ToJson(const Annotation& a) {
  return {{"doc_id", a.doc_id},
          {"worker_id", a.worker_id},
          {"label", a.label},
          {"timestamp", a.timestamp_ms}};
}

Annotation AnnotationFromJson(const json& j) {
  Annotation a;
  a.doc_id = j.at("doc_id").get<std::string>();
  a.worker_id = j.at("worker_id").get<std::string>();
  a.label = j.at("label").get<int>();
  a.timestamp_ms = j.value("timestamp", int64_t{0});
  return a;
}

json ToJson(const LearningPoint& p) {
  return {{"size", p.size},
          {"nonzero_subject_loadings", p.nonzero_subject_loadings},
          {"mean_entropy", p.mean_entropy}};
}

LearningPoint PointFromJson(const json& j) {
  LearningPoint p;
  p.size = j.at("size").get<int>();
  p.nonzero_subject_loadings = j.at("nonzero_subject_loadings").get<int>();
  p.mean_entropy = j.at("mean_entropy").get<double>();
  return p;
}

bool IsFinal(TaskStatus s) {
  return s == TaskStatus::kResolved || s == TaskStatus::kDiscarded;
}

std::vector<int> LabelsOf(const Task& task) {
  std::vector<int> labels;
  for (const auto& a : task.annotations) labels.push_back(a.label);
  return labels;
}

}  // namespace

int ServiceError::http_status() const {
  switch (kind_) {
    case Kind::kBadRequest:
      return 400;
    case Kind::kNotFound:
      return 404;
    case Kind::kConflict:
      return 409;
  }
  return 500;
}

std::string TaskStatusName(TaskStatus s) {
  switch (s) {
    case TaskStatus::kPending:
      return "pending";
    case TaskStatus::kInProgress:
      return "in_progress";
    case TaskStatus::kResolved:
      return "resolved";
    case TaskStatus::kDiscarded:
      return "discarded";
  }
  return "?";
}

std::string OutcomeName(Outcome o) {
  switch (o) {
    case Outcome::kPending:
      return "pending";
    case Outcome::kResolved:
      return "resolved";
    case Outcome::kDiscarded:
      return "discarded";
  }
  return "?";
}

AgreementPolicy ParseAgreementPolicy(const std::string& name) {
  if (name == "agree-of-two") return AgreementPolicy::kAgreeOfTwo;
  if (name == "majority-of-three") return AgreementPolicy::kMajorityOfThree;
  throw Error("unknown agreement policy: " + name);
}

std::string AgreementPolicyName(AgreementPolicy p) {
  return p == AgreementPolicy::kAgreeOfTwo ? "agree-of-two"
                                           : "majority-of-three";
}

Resolution Resolve(const std::vector<int>& labels, AgreementPolicy policy) {
  Resolution r;
  if (labels.size() < 2) return r;
  if (labels[0] == labels[1]) {
    r.outcome = Outcome::kResolved;
    r.label = labels[0];
    return r;
  }
  if (policy == AgreementPolicy::kAgreeOfTwo) {
    r.outcome = Outcome::kDiscarded;
    return r;
  }
  if (labels.size() < 3) return r;
  // The first two disagree, so a majority needs the third to match one.
  if (labels[2] == labels[0] || labels[2] == labels[1]) {
    r.outcome = Outcome::kResolved;
    r.label = labels[2];
  } else {
    r.outcome = Outcome::kDiscarded;
  }
  return r;
}

std::vector<QueueEntry> ReadRanking(const std::string& path,
                                    const std::string& default_subject) {
  const CsvTable table = ReadCsv(path);
  const auto has = [&](const std::string& name) {
    return std::find(table.header.begin(), table.header.end(), name) !=
           table.header.end();
  };
  if (!has("rank") || !has("doc_id")) {
    throw Error(path + ": ranking needs rank and doc_id columns");
  }
  const auto rank = table.Column("rank");
  const auto doc = table.Column("doc_id");
  const std::optional<size_t> subject =
      has("subject") ? std::optional<size_t>(table.Column("subject"))
                     : std::nullopt;
  std::vector<QueueEntry> out;
  for (const auto& row : table.rows) {
    QueueEntry e;
    try {
      e.rank = std::stoi(row.at(rank));
    } catch (const std::exception&) {
      throw Error(path + ": bad rank '" + row.at(rank) + "'");
    }
    e.doc_id = row.at(doc);
    e.subject = subject && !row.at(*subject).empty() ? row.at(*subject)
                                                      : default_subject;
    out.push_back(std::move(e));
  }
  return out;
}

AnnotationService::AnnotationService(std::shared_ptr<const Corpus> pool,
                                     const std::vector<QueueEntry>& ranking,
                                     ServiceOptions options)
    : pool_(std::move(pool)), options_(std::move(options)) {
  if (!pool_) throw Error("annotation service needs a document pool");
  if (options_.snapshot_every < 1) throw Error("snapshot_every must be >= 1");
  std::vector<QueueEntry> sorted = ranking;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const QueueEntry& a, const QueueEntry& b) {
                     return a.subject != b.subject ? a.subject < b.subject
                                                   : a.rank < b.rank;
                   });
  for (size_t i = 0; i < sorted.size(); ++i) {
    const QueueEntry& e = sorted[i];
    if (i > 0 && sorted[i - 1].subject == e.subject &&
        sorted[i - 1].rank == e.rank) {
      throw Error("duplicate rank " + std::to_string(e.rank) +
                  " in queue for " + e.subject);
    }
    const auto row = pool_->FindId(e.doc_id);
    if (!row) throw Error("ranked document not in pool: " + e.doc_id);
    if (by_doc_.count(e.doc_id)) {
      throw Error("document ranked twice: " + e.doc_id);
    }
    Task t;
    t.doc_id = e.doc_id;
    t.subject = e.subject;
    t.text = pool_->texts.empty() ? "" : pool_->texts[*row];
    t.rank = e.rank;
    by_doc_[e.doc_id] = tasks_.size();
    queues_[e.subject].push_back(tasks_.size());
    tasks_.push_back(std::move(t));
  }
  if (!options_.store_dir.empty()) Recover();
}

int64_t AnnotationService::Now() const {
  if (options_.clock) return options_.clock();
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

int AnnotationService::VotesNeeded(const Task& task) const {
  if (options_.policy == AgreementPolicy::kAgreeOfTwo) return 2;
  const auto& a = task.annotations;
  return a.size() >= 2 && a[0].label != a[1].label ? 3 : 2;
}

TaskStatus AnnotationService::StatusAt(const Task& task, int64_t now) const {
  if (IsFinal(task.status)) return task.status;
  for (const auto& [worker, expiry] : task.leases) {
    if (expiry > now) return TaskStatus::kInProgress;
  }
  return TaskStatus::kPending;
}

Task& AnnotationService::TaskFor(const std::string& doc_id) {
  const auto it = by_doc_.find(doc_id);
  if (it == by_doc_.end()) throw NotFound("no task for document " + doc_id);
  return tasks_[it->second];
}

std::vector<Task> AnnotationService::NextTasks(const std::string& subject,
                                               int count,
                                               const std::string& worker_id) {
  if (count < 1) throw BadRequest("count must be >= 1");
  if (worker_id.empty()) throw BadRequest("worker is required");
  std::lock_guard lock(mu_);
  const auto q = queues_.find(subject);
  if (q == queues_.end()) throw NotFound("unknown subject: " + subject);
  const int64_t now = Now();
  const int64_t expiry = now + options_.lease.count();
  std::vector<Task> out;
  for (size_t idx : q->second) {
    if (static_cast<int>(out.size()) >= count) break;
    Task& task = tasks_[idx];
    if (IsFinal(task.status)) continue;
    const bool annotated =
        std::any_of(task.annotations.begin(), task.annotations.end(),
                    [&](const Annotation& a) { return a.worker_id == worker_id; });
    if (annotated) continue;
    std::erase_if(task.leases,
                  [&](const auto& kv) { return kv.second <= now; });
    const bool held = task.leases.count(worker_id) > 0;
    const int claimed = static_cast<int>(task.annotations.size() +
                                         task.leases.size() - (held ? 1 : 0));
    if (!held && claimed >= VotesNeeded(task)) continue;
    task.leases[worker_id] = expiry;
    Task view = task;
    view.status = TaskStatus::kInProgress;
    out.push_back(std::move(view));
  }
  return out;
}

void AnnotationService::Apply(const Annotation& a) {
  Task& task = TaskFor(a.doc_id);
  task.annotations.push_back(a);
  task.leases.erase(a.worker_id);
  const Resolution r = Resolve(LabelsOf(task), options_.policy);
  if (r.outcome == Outcome::kResolved) {
    task.status = TaskStatus::kResolved;
    task.final_label = r.label;
    task.leases.clear();
    resolved_[task.subject].push_back({task.doc_id, *r.label});
  } else if (r.outcome == Outcome::kDiscarded) {
    task.status = TaskStatus::kDiscarded;
    task.leases.clear();
  }
  log_.push_back(a);
}

void AnnotationService::AppendLog(const Annotation& a) {
  if (options_.store_dir.empty()) return;
  std::ofstream out(fs::path(options_.store_dir) / kLogFile, std::ios::app);
  out << ToJson(a).dump() << '\n';
  out.flush();
  if (!out) throw Error("failed to append to annotation log");
}

Resolution AnnotationService::Submit(Annotation a) {
  if (a.worker_id.empty()) throw BadRequest("worker_id is required");
  if (!options_.scale.Contains(a.label)) {
    throw BadRequest("label " + std::to_string(a.label) + " is off the scale");
  }
  std::lock_guard lock(mu_);
  Task& task = TaskFor(a.doc_id);
  if (task.status == TaskStatus::kResolved) {
    throw Conflict("task already resolved: " + a.doc_id);
  }
  if (task.status == TaskStatus::kDiscarded) {
    throw Conflict("task discarded: " + a.doc_id);
  }
  for (const auto& prior : task.annotations) {
    if (prior.worker_id == a.worker_id) {
      throw Conflict("worker " + a.worker_id + " already annotated " +
                     a.doc_id);
    }
  }
  if (a.timestamp_ms == 0) a.timestamp_ms = Now();
  AppendLog(a);
  Apply(a);
  if (!options_.store_dir.empty() &&
      log_.size() - snapshot_at_ >=
          static_cast<size_t>(options_.snapshot_every)) {
    WriteSnapshot();
  }
  Resolution r;
  if (task.status == TaskStatus::kResolved) {
    r.outcome = Outcome::kResolved;
    r.label = task.final_label;
  } else if (task.status == TaskStatus::kDiscarded) {
    r.outcome = Outcome::kDiscarded;
  }
  return r;
}

StatusReport AnnotationService::Status(const std::string& subject) const {
  std::lock_guard lock(mu_);
  const auto q = queues_.find(subject);
  if (q == queues_.end()) throw NotFound("unknown subject: " + subject);
  const int64_t now = Now();
  StatusReport s;
  s.subject = subject;
  for (size_t idx : q->second) {
    const Task& task = tasks_[idx];
    ++s.total;
    switch (StatusAt(task, now)) {
      case TaskStatus::kPending:
        ++s.pending;
        break;
      case TaskStatus::kInProgress:
        ++s.in_progress;
        break;
      case TaskStatus::kResolved:
        ++s.resolved;
        break;
      case TaskStatus::kDiscarded:
        ++s.discarded;
        break;
    }
    if (task.annotations.size() >= 2) {
      ++s.annotated_twice;
      s.first_two_agree +=
          task.annotations[0].label == task.annotations[1].label;
    }
  }
  if (s.annotated_twice > 0) {
    s.agreement_rate =
        static_cast<double>(s.first_two_agree) / s.annotated_twice;
  }
  const auto p = points_.find(subject);
  if (p != points_.end()) s.points = p->second;
  return s;
}

LearningPoint AnnotationService::Refit(const std::string& subject) {
  std::lock_guard refit_lock(refit_mu_);
  std::vector<LabeledDocument> labeled;
  {
    std::lock_guard lock(mu_);
    if (!queues_.count(subject)) throw NotFound("unknown subject: " + subject);
    const auto it = resolved_.find(subject);
    if (it != resolved_.end()) labeled = it->second;
  }
  if (labeled.empty()) throw Conflict("no resolved labels for " + subject);
  const LearningPoint point =
      LearningPointFor(*pool_, labeled, subject, options_.learning);
  if (point.skipped) {
    throw Conflict("resolved labels for " + subject +
                   " cover fewer than two levels");
  }
  std::lock_guard lock(mu_);
  points_[subject].push_back(point);
  if (!options_.store_dir.empty()) {
    json j = ToJson(point);
    j["subject"] = subject;
    std::ofstream out(fs::path(options_.store_dir) / kRefitFile,
                      std::ios::app);
    out << j.dump() << '\n';
  }
  return point;
}

std::vector<std::string> AnnotationService::Subjects() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [s, q] : queues_) out.push_back(s);
  return out;
}

std::optional<Task> AnnotationService::FindTask(
    const std::string& doc_id) const {
  std::lock_guard lock(mu_);
  const auto it = by_doc_.find(doc_id);
  if (it == by_doc_.end()) return std::nullopt;
  Task t = tasks_[it->second];
  t.status = StatusAt(t, Now());
  return t;
}

std::vector<LabeledDocument> AnnotationService::ResolvedLabels(
    const std::string& subject) const {
  std::lock_guard lock(mu_);
  const auto it = resolved_.find(subject);
  return it == resolved_.end() ? std::vector<LabeledDocument>{} : it->second;
}

std::map<std::string, TaskStatus> AnnotationService::Statuses() const {
  std::lock_guard lock(mu_);
  std::map<std::string, TaskStatus> out;
  for (const auto& t : tasks_) out[t.doc_id] = t.status;
  return out;
}

void AnnotationService::WriteSnapshot() {
  if (options_.store_dir.empty()) return;
  json tasks = json::array();
  for (const auto& t : tasks_) {
    if (t.annotations.empty()) continue;
    json ann = json::array();
    for (const auto& a : t.annotations) ann.push_back(ToJson(a));
    tasks.push_back({{"doc_id", t.doc_id}, {"annotations", ann}});
  }
  json resolved = json::object();
  for (const auto& [subject, docs] : resolved_) {
    json list = json::array();
    for (const auto& d : docs) list.push_back({d.doc_id, d.label});
    resolved[subject] = list;
  }
  const json snap = {{"applied", log_.size()},
                     {"policy", AgreementPolicyName(options_.policy)},
                     {"tasks", tasks},
                     {"resolved", resolved}};
  const fs::path dir(options_.store_dir);
  const fs::path tmp = dir / (std::string(kSnapshotFile) + ".tmp");
  {
    std::ofstream out(tmp);
    out << snap.dump() << '\n';
    if (!out) throw Error("failed to write snapshot");
  }
  fs::rename(tmp, dir / kSnapshotFile);
  snapshot_at_ = log_.size();
}

std::vector<Annotation> ReadAnnotationLog(const std::string& path) {
  std::vector<Annotation> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(AnnotationFromJson(json::parse(line)));
    } catch (const std::exception& e) {
      // A torn final line from a crash mid-append is dropped.
      if (in.peek() == EOF) break;
      throw Error(path + ":" + std::to_string(line_no) +
                  ": bad log record: " + e.what());
    }
  }
  return out;
}

namespace {

// Cuts a log back to its last complete line so that later appends do not
// land after a partial record.
void TruncateTornTail(const fs::path& path) {
  if (!fs::exists(path)) return;
  std::ifstream in(path, std::ios::binary);
  const std::string data((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
  in.close();
  if (data.empty() || data.back() == '\n') return;
  const size_t keep = data.rfind('\n');
  fs::resize_file(path, keep == std::string::npos ? 0 : keep + 1);
}

}  // namespace

void AnnotationService::Recover() {
  const fs::path dir(options_.store_dir);
  fs::create_directories(dir);
  TruncateTornTail(dir / kLogFile);
  TruncateTornTail(dir / kRefitFile);
  const std::vector<Annotation> log =
      ReadAnnotationLog((dir / kLogFile).string());
  size_t start = 0;
  const fs::path snap_path = dir / kSnapshotFile;
  if (fs::exists(snap_path)) {
    std::ifstream in(snap_path);
    const json snap = json::parse(in);
    start = snap.at("applied").get<size_t>();
    if (start > log.size()) {
      throw Error("snapshot covers " + std::to_string(start) +
                  " annotations but the log holds " +
                  std::to_string(log.size()));
    }
    if (snap.value("policy", "") != AgreementPolicyName(options_.policy)) {
      throw Error("store was written under a different agreement policy");
    }
    for (const auto& jt : snap.at("tasks")) {
      Task& task = TaskFor(jt.at("doc_id").get<std::string>());
      for (const auto& ja : jt.at("annotations")) {
        task.annotations.push_back(AnnotationFromJson(ja));
      }
      const Resolution r = Resolve(LabelsOf(task), options_.policy);
      if (r.outcome == Outcome::kResolved) {
        task.status = TaskStatus::kResolved;
        task.final_label = r.label;
      } else if (r.outcome == Outcome::kDiscarded) {
        task.status = TaskStatus::kDiscarded;
      }
    }
    for (const auto& [subject, list] : snap.at("resolved").items()) {
      for (const auto& d : list) {
        resolved_[subject].push_back(
            {d.at(0).get<std::string>(), d.at(1).get<int>()});
      }
    }
    log_.assign(log.begin(), log.begin() + start);
    snapshot_at_ = start;
  }
  for (size_t i = start; i < log.size(); ++i) Apply(log[i]);

  std::ifstream refits(dir / kRefitFile);
  std::string line;
  while (std::getline(refits, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      points_[j.at("subject").get<std::string>()].push_back(PointFromJson(j));
    } catch (const std::exception&) {
      if (refits.peek() == EOF) break;
      throw;
    }
  }
}

std::map<std::string, TaskStatus> ReplayStatuses(
    const std::vector<QueueEntry>& ranking,
    const std::vector<Annotation>& log, AgreementPolicy policy) {
  std::map<std::string, std::vector<int>> labels;
  std::map<std::string, TaskStatus> out;
  for (const auto& e : ranking) out[e.doc_id] = TaskStatus::kPending;
  for (const auto& a : log) {
    auto it = out.find(a.doc_id);
    if (it == out.end()) throw Error("log references unknown doc " + a.doc_id);
    if (IsFinal(it->second)) continue;
    auto& l = labels[a.doc_id];
    l.push_back(a.label);
    const Resolution r = Resolve(l, policy);
    if (r.outcome == Outcome::kResolved) it->second = TaskStatus::kResolved;
    if (r.outcome == Outcome::kDiscarded) it->second = TaskStatus::kDiscarded;
  }
  return out;
}

}  // namespace textdesign

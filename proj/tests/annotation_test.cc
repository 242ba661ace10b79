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

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <thread>

#include "json.hpp"
#include "synthetic.h"
#include "test_util.h"
#include "textdesign/annotation_http.h"

namespace textdesign {
namespace {

using json = nlohmann::json;

struct Fixture {
  std::shared_ptr<Corpus> pool;
  std::vector<int> truth;
  std::vector<QueueEntry> ranking;
};

// 60 "romney" documents ranked 1..60 and 20 "perry" documents ranked
// 1..20, with true labels kept aside for simulated workers.
Fixture MakeFixture() {
  auto d = testing::DrawTopicCorpus(80, 40, 3, 30, 12);
  Eigen::VectorXd beta(3);
  beta << 5, 0, -5;
  testing::AttachSentiment(d, beta, -1, 1, 13);
  Fixture f;
  f.pool = std::make_shared<Corpus>(d.corpus);
  for (int i = 0; i < f.pool->size(); ++i) {
    f.truth.push_back(*f.pool->labels[i]);
    f.pool->labels[i].reset();
    f.pool->texts[i] = "text " + std::to_string(i);
    const bool romney = i < 60;
    f.pool->subjects[i] = romney ? "romney" : "perry";
    f.ranking.push_back(
        {romney ? i + 1 : i - 59, f.pool->ids[i], romney ? "romney" : "perry"});
  }
  return f;
}

std::vector<int> Ranks(const std::vector<Task>& tasks) {
  std::vector<int> out;
  for (const auto& t : tasks) out.push_back(t.rank);
  return out;
}

TEST(ResolveTest, AgreementTable) {
  const auto two = AgreementPolicy::kAgreeOfTwo;
  const auto three = AgreementPolicy::kMajorityOfThree;
  struct Case {
    std::vector<int> labels;
    AgreementPolicy policy;
    Outcome outcome;
    std::optional<int> label;
  };
  const std::vector<Case> table = {
      {{}, two, Outcome::kPending, {}},
      {{1}, two, Outcome::kPending, {}},
      {{1, 1}, two, Outcome::kResolved, 1},
      {{-1, -1}, two, Outcome::kResolved, -1},
      {{0, 0}, two, Outcome::kResolved, 0},
      {{1, -1}, two, Outcome::kDiscarded, {}},
      {{0, 1}, two, Outcome::kDiscarded, {}},
      {{1, -1}, three, Outcome::kPending, {}},
      {{1, -1, -1}, three, Outcome::kResolved, -1},
      {{1, -1, 0}, three, Outcome::kDiscarded, {}},
  };
  for (const auto& c : table) {
    const Resolution r = Resolve(c.labels, c.policy);
    EXPECT_EQ(r.outcome, c.outcome) << c.labels.size();
    EXPECT_EQ(r.label, c.label);
  }
}

TEST(ResolveTest, PolicyNames) {
  EXPECT_EQ(ParseAgreementPolicy("agree-of-two"), AgreementPolicy::kAgreeOfTwo);
  EXPECT_EQ(ParseAgreementPolicy(
                AgreementPolicyName(AgreementPolicy::kMajorityOfThree)),
            AgreementPolicy::kMajorityOfThree);
  EXPECT_THROW(ParseAgreementPolicy("vote"), Error);
}

TEST(RankingTest, ReadsCsvWithAndWithoutSubject) {
  testing::TempDir dir;
  testing::WriteText(dir.File("a.csv"),
                     "rank,doc_id,gain,cumulative_log_det\n1,d3,,\n2,d1,0.5,1\n");
  const auto a = ReadRanking(dir.File("a.csv"), "romney");
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[0].doc_id, "d3");
  EXPECT_EQ(a[1].rank, 2);
  EXPECT_EQ(a[1].subject, "romney");
  testing::WriteText(dir.File("b.csv"), "doc_id,subject,rank\nx,perry,4\n");
  EXPECT_EQ(ReadRanking(dir.File("b.csv"), "").at(0).subject, "perry");
  testing::WriteText(dir.File("c.csv"), "doc_id\nx\n");
  EXPECT_THROW(ReadRanking(dir.File("c.csv"), ""), Error);
  testing::WriteText(dir.File("d.csv"), "rank,doc_id\none,x\n");
  EXPECT_THROW(ReadRanking(dir.File("d.csv"), ""), Error);
}

TEST(ServiceTest, ConstructionChecks) {
  Fixture f = MakeFixture();
  auto dup_rank = f.ranking;
  dup_rank[1].rank = 1;
  EXPECT_THROW(AnnotationService(f.pool, dup_rank), Error);
  auto dup_doc = f.ranking;
  dup_doc[1].doc_id = dup_doc[0].doc_id;
  EXPECT_THROW(AnnotationService(f.pool, dup_doc), Error);
  auto missing = f.ranking;
  missing[0].doc_id = "nope";
  EXPECT_THROW(AnnotationService(f.pool, missing), Error);
}

TEST(ServiceTest, QueueOrderExclusionAndExhaustion) {
  Fixture f = MakeFixture();
  f.ranking.resize(3);  // romney ranks 1..3
  AnnotationService svc(f.pool, f.ranking);
  EXPECT_EQ(Ranks(svc.NextTasks("romney", 2, "w1")), (std::vector<int>{1, 2}));
  svc.Submit({f.ranking[0].doc_id, "w1", 1, 0});
  EXPECT_EQ(Ranks(svc.NextTasks("romney", 2, "w1")), (std::vector<int>{2, 3}));
  svc.Submit({f.ranking[0].doc_id, "a", 1, 0});
  for (int i = 1; i < 3; ++i) {
    for (const char* w : {"a", "b"}) svc.Submit({f.ranking[i].doc_id, w, 0, 0});
  }
  EXPECT_TRUE(svc.NextTasks("romney", 5, "w9").empty());
  EXPECT_THROW(svc.NextTasks("bachmann", 1, "w1"), ServiceError);
  EXPECT_THROW(svc.NextTasks("romney", 0, "w1"), ServiceError);
  EXPECT_THROW(svc.NextTasks("romney", 1, ""), ServiceError);
}

TEST(ServiceTest, LeasesLimitConcurrentServingAndExpire) {
  Fixture f = MakeFixture();
  int64_t now = 1'000'000;
  ServiceOptions opt;
  opt.clock = [&now] { return now; };
  AnnotationService svc(f.pool, f.ranking, opt);
  EXPECT_EQ(Ranks(svc.NextTasks("romney", 1, "a")), (std::vector<int>{1}));
  EXPECT_EQ(Ranks(svc.NextTasks("romney", 1, "b")), (std::vector<int>{1}));
  // Two live leases cover the two votes rank 1 needs.
  EXPECT_EQ(Ranks(svc.NextTasks("romney", 1, "c")), (std::vector<int>{2}));
  EXPECT_EQ(svc.FindTask(f.ranking[0].doc_id)->status, TaskStatus::kInProgress);
  // Re-fetching keeps a worker's own lease.
  EXPECT_EQ(Ranks(svc.NextTasks("romney", 1, "a")), (std::vector<int>{1}));
  now += std::chrono::milliseconds(std::chrono::minutes(10)).count() + 1;
  EXPECT_EQ(svc.FindTask(f.ranking[0].doc_id)->status, TaskStatus::kPending);
  EXPECT_EQ(svc.Status("romney").in_progress, 0);
  EXPECT_EQ(Ranks(svc.NextTasks("romney", 1, "c")), (std::vector<int>{1}));
}

TEST(ServiceTest, NeverServesATaskBackToItsAnnotator) {
  Fixture f = MakeFixture();
  ServiceOptions opt;
  opt.policy = AgreementPolicy::kMajorityOfThree;
  AnnotationService svc(f.pool, f.ranking, opt);
  std::mt19937_64 rng(1);
  for (int step = 0; step < 300; ++step) {
    const std::string worker = "w" + std::to_string(rng() % 6);
    const auto tasks = svc.NextTasks("romney", 3, worker);
    for (const auto& t : tasks) {
      for (const auto& a : t.annotations) EXPECT_NE(a.worker_id, worker);
    }
    if (!tasks.empty()) {
      svc.Submit({tasks[0].doc_id, worker, static_cast<int>(rng() % 3) - 1, 0});
    }
  }
}

TEST(ServiceTest, SubmitOutcomesAndErrors) {
  Fixture f = MakeFixture();
  AnnotationService svc(f.pool, f.ranking);
  const std::string d0 = f.ranking[0].doc_id, d1 = f.ranking[1].doc_id;
  EXPECT_EQ(svc.Submit({d0, "a", 1, 0}).outcome, Outcome::kPending);
  try {
    svc.Submit({d0, "a", -1, 0});
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.http_status(), 409);
  }
  const Resolution r = svc.Submit({d0, "b", 1, 0});
  EXPECT_EQ(r.outcome, Outcome::kResolved);
  EXPECT_EQ(r.label, 1);
  EXPECT_EQ(svc.FindTask(d0)->final_label, 1);
  EXPECT_THROW(svc.Submit({d0, "c", 1, 0}), ServiceError);
  svc.Submit({d1, "a", 1, 0});
  EXPECT_EQ(svc.Submit({d1, "b", -1, 0}).outcome, Outcome::kDiscarded);
  try {
    svc.Submit({d1, "c", 1, 0});
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.http_status(), 409);
  }
  try {
    svc.Submit({f.ranking[2].doc_id, "a", 2, 0});
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.http_status(), 400);
  }
  try {
    svc.Submit({"ghost", "a", 1, 0});
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.http_status(), 404);
  }
  EXPECT_EQ(svc.Log().size(), 4u);
}

TEST(ServiceTest, MajorityOfThreeRequeuesDisagreement) {
  Fixture f = MakeFixture();
  ServiceOptions opt;
  opt.policy = AgreementPolicy::kMajorityOfThree;
  AnnotationService svc(f.pool, f.ranking, opt);
  const std::string d0 = f.ranking[0].doc_id;
  svc.Submit({d0, "a", 1, 0});
  EXPECT_EQ(svc.Submit({d0, "b", 0, 0}).outcome, Outcome::kPending);
  EXPECT_EQ(Ranks(svc.NextTasks("romney", 1, "c")), (std::vector<int>{1}));
  const Resolution r = svc.Submit({d0, "c", 0, 0});
  EXPECT_EQ(r.outcome, Outcome::kResolved);
  EXPECT_EQ(r.label, 0);
}

TEST(ServiceTest, AgreementRate) {
  Fixture f = MakeFixture();
  AnnotationService svc(f.pool, f.ranking);
  for (int i = 0; i < 12; ++i) {
    svc.Submit({f.ranking[i].doc_id, "a", 1, 0});
    svc.Submit({f.ranking[i].doc_id, "b", i < 10 ? 1 : 0, 0});
  }
  svc.Submit({f.ranking[12].doc_id, "a", 1, 0});
  const StatusReport s = svc.Status("romney");
  EXPECT_EQ(s.total, 60);
  EXPECT_EQ(s.resolved, 10);
  EXPECT_EQ(s.discarded, 2);
  EXPECT_EQ(s.annotated_twice, 12);
  EXPECT_EQ(s.pending, 48);
  ASSERT_TRUE(s.agreement_rate);
  EXPECT_DOUBLE_EQ(*s.agreement_rate, 10.0 / 12.0);
  EXPECT_FALSE(svc.Status("perry").agreement_rate);
  EXPECT_THROW(svc.Status("cain"), ServiceError);
}

void LabelRomney(AnnotationService& svc, const Fixture& f, int begin,
                 int end) {
  for (int i = begin; i < end; ++i) {
    for (const char* w : {"a", "b"}) {
      svc.Submit({f.ranking[i].doc_id, w, f.truth[i], 0});
    }
  }
}

TEST(ServiceTest, RefitGuardsAndPoints) {
  Fixture f = MakeFixture();
  AnnotationService svc(f.pool, f.ranking);
  try {
    svc.Refit("romney");
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.http_status(), 409);
  }
  EXPECT_THROW(svc.Refit("cain"), ServiceError);
  LabelRomney(svc, f, 0, 25);
  const LearningPoint first = svc.Refit("romney");
  EXPECT_EQ(first.size, 25);
  LabelRomney(svc, f, 25, 50);
  const LearningPoint second = svc.Refit("romney");
  EXPECT_EQ(second.size, 50);
  const StatusReport s = svc.Status("romney");
  ASSERT_EQ(s.points.size(), 2u);
  EXPECT_EQ(s.points[0].size, 25);
  EXPECT_EQ(s.points[1].mean_entropy, second.mean_entropy);
}

TEST(ServiceTest, RefitNeedsTwoLevels) {
  Fixture f = MakeFixture();
  AnnotationService svc(f.pool, f.ranking);
  for (int i = 0; i < 3; ++i) {
    for (const char* w : {"a", "b"}) svc.Submit({f.ranking[i].doc_id, w, 1, 0});
  }
  try {
    svc.Refit("romney");
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.http_status(), 409);
  }
}

// Random workers and labels, 500 submissions in total.
void Simulate(AnnotationService& svc, const Fixture& f, int events,
              uint64_t seed) {
  std::mt19937_64 rng(seed);
  int done = 0;
  while (done < events) {
    const std::string subject = rng() % 4 ? "romney" : "perry";
    const std::string worker = "w" + std::to_string(rng() % 7);
    const auto tasks = svc.NextTasks(subject, 2, worker);
    if (tasks.empty()) continue;
    const auto& t = tasks[rng() % tasks.size()];
    const size_t row = *f.pool->FindId(t.doc_id);
    const int label = rng() % 4 ? f.truth[row] : static_cast<int>(rng() % 3) - 1;
    svc.Submit({t.doc_id, worker, label, 1000 + done});
    ++done;
  }
}

TEST(ServiceTest, ReplayReconstructsStatuses) {
  Fixture f = MakeFixture();
  for (auto policy :
       {AgreementPolicy::kAgreeOfTwo, AgreementPolicy::kMajorityOfThree}) {
    ServiceOptions opt;
    opt.policy = policy;
    AnnotationService svc(f.pool, f.ranking, opt);
    Simulate(svc, f, 150, 5);
    EXPECT_EQ(ReplayStatuses(f.ranking, svc.Log(), policy), svc.Statuses());
  }
}

TEST(ServiceTest, RestartRecoversFromLogAndSnapshot) {
  Fixture f = MakeFixture();
  testing::TempDir dir;
  ServiceOptions opt;
  opt.store_dir = dir.path();
  opt.snapshot_every = 64;
  std::map<std::string, TaskStatus> before;
  std::vector<LabeledDocument> resolved;
  {
    AnnotationService svc(f.pool, f.ranking, opt);
    Simulate(svc, f, 150, 9);
    svc.Refit("romney");
    before = svc.Statuses();
    resolved = svc.ResolvedLabels("romney");
  }
  EXPECT_TRUE(std::filesystem::exists(dir.File("snapshot.json")));
  {
    AnnotationService svc(f.pool, f.ranking, opt);
    EXPECT_EQ(svc.Statuses(), before);
    EXPECT_EQ(svc.Log().size(), 150u);
    const auto again = svc.ResolvedLabels("romney");
    ASSERT_EQ(again.size(), resolved.size());
    for (size_t i = 0; i < again.size(); ++i) {
      EXPECT_EQ(again[i].doc_id, resolved[i].doc_id);
      EXPECT_EQ(again[i].label, resolved[i].label);
    }
    EXPECT_EQ(svc.Status("romney").points.size(), 1u);
  }
  // Without the snapshot the log alone gives the same state.
  std::filesystem::remove(dir.File("snapshot.json"));
  AnnotationService svc(f.pool, f.ranking, opt);
  EXPECT_EQ(svc.Statuses(), before);
  // A different policy cannot reuse the store once a snapshot exists.
  svc.WriteSnapshot();
  ServiceOptions other = opt;
  other.policy = AgreementPolicy::kMajorityOfThree;
  EXPECT_THROW(AnnotationService(f.pool, f.ranking, other), Error);
}

TEST(ServiceTest, TornLogTailIsDropped) {
  Fixture f = MakeFixture();
  testing::TempDir dir;
  ServiceOptions opt;
  opt.store_dir = dir.path();
  {
    AnnotationService svc(f.pool, f.ranking, opt);
    svc.Submit({f.ranking[0].doc_id, "a", 1, 5});
    svc.Submit({f.ranking[0].doc_id, "b", 1, 6});
  }
  {
    std::ofstream out(dir.File("annotations.jsonl"), std::ios::app);
    out << "{\"doc_id\":\"" << f.ranking[1].doc_id << "\",\"work";
  }
  {
    AnnotationService svc(f.pool, f.ranking, opt);
    EXPECT_EQ(svc.Log().size(), 2u);
    EXPECT_EQ(svc.FindTask(f.ranking[0].doc_id)->status, TaskStatus::kResolved);
    svc.Submit({f.ranking[1].doc_id, "a", 0, 7});
  }
  AnnotationService svc(f.pool, f.ranking, opt);
  EXPECT_EQ(svc.Log().size(), 3u);
  EXPECT_EQ(ReadAnnotationLog(dir.File("annotations.jsonl")).size(), 3u);
}

TEST(ServiceTest, CorruptLogLineInTheMiddleIsAnError) {
  Fixture f = MakeFixture();
  testing::TempDir dir;
  testing::WriteText(dir.File("annotations.jsonl"),
                     "garbage\n{\"doc_id\":\"d0\",\"worker_id\":\"a\","
                     "\"label\":1,\"timestamp\":1}\n");
  ServiceOptions opt;
  opt.store_dir = dir.path();
  EXPECT_THROW(AnnotationService(f.pool, f.ranking, opt), Error);
}

class HttpTest : public ::testing::Test {
 protected:
  void SetUp() override {
    f_ = MakeFixture();
    service_ = std::make_unique<AnnotationService>(f_.pool, f_.ranking);
    RegisterRoutes(server_, *service_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  httplib::Result Annotate(const std::string& doc, const std::string& worker,
                           const json& label) {
    const json body = {{"doc_id", doc}, {"worker_id", worker}, {"label", label}};
    return client_->Post("/annotations", body.dump(), "application/json");
  }

  Fixture f_;
  std::unique_ptr<AnnotationService> service_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

TEST_F(HttpTest, Health) {
  auto r = client_->Get("/health");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["status"], "ok");
}

TEST_F(HttpTest, QueueAnnotateStatusRefit) {
  auto r = client_->Get("/queue/romney?count=2&worker=w1");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  const json q = json::parse(r->body);
  ASSERT_EQ(q["tasks"].size(), 2u);
  EXPECT_EQ(q["tasks"][0]["rank"], 1);
  EXPECT_EQ(q["tasks"][0]["status"], "in_progress");
  EXPECT_EQ(q["tasks"][0]["subject"], "romney");
  EXPECT_EQ(q["tasks"][0]["text"], "text 0");
  const std::string d0 = q["tasks"][0]["doc_id"];

  r = Annotate(d0, "w1", 1);
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["outcome"], "pending");
  r = Annotate(d0, "w2", 1);
  const json resolved = json::parse(r->body);
  EXPECT_EQ(resolved["outcome"], "resolved");
  EXPECT_EQ(resolved["label"], 1);

  r = client_->Get("/queue/romney?count=2&worker=w1");
  EXPECT_EQ(json::parse(r->body)["tasks"][0]["rank"], 2);

  r = client_->Get("/status/romney");
  ASSERT_EQ(r->status, 200);
  json s = json::parse(r->body);
  EXPECT_EQ(s["resolved"], 1);
  EXPECT_EQ(s["total"], 60);
  EXPECT_EQ(s["agreement_rate"], 1.0);
  EXPECT_TRUE(s["points"].empty());

  r = client_->Post("/refit/perry", "", "application/json");
  EXPECT_EQ(r->status, 409);
  EXPECT_TRUE(json::parse(r->body).contains("error"));

  for (int i = 1; i < 30; ++i) {
    for (const char* w : {"a", "b"}) {
      ASSERT_EQ(Annotate(f_.ranking[i].doc_id, w, f_.truth[i])->status, 200);
    }
  }
  r = client_->Post("/refit/romney", "", "application/json");
  ASSERT_EQ(r->status, 200);
  const json point = json::parse(r->body)["point"];
  EXPECT_EQ(point["size"], 30);
  s = json::parse(client_->Get("/status/romney")->body);
  ASSERT_EQ(s["points"].size(), 1u);
  EXPECT_EQ(s["points"][0], point);
}

TEST_F(HttpTest, ErrorStatuses) {
  EXPECT_EQ(client_->Get("/queue/cain?worker=w")->status, 404);
  EXPECT_EQ(client_->Get("/queue/romney?worker=w&count=x")->status, 400);
  EXPECT_EQ(client_->Get("/queue/romney?count=1")->status, 400);
  EXPECT_EQ(client_->Get("/status/cain")->status, 404);
  EXPECT_EQ(client_->Post("/refit/cain", "", "application/json")->status, 404);
  const std::string d0 = f_.ranking[0].doc_id;
  EXPECT_EQ(Annotate(d0, "w", 5)->status, 400);
  EXPECT_EQ(Annotate(d0, "w", "positive")->status, 400);
  EXPECT_EQ(Annotate("ghost", "w", 1)->status, 404);
  EXPECT_EQ(client_->Post("/annotations", "{not json", "application/json")->status,
            400);
  EXPECT_EQ(client_->Post("/annotations", "{\"doc_id\":\"x\"}",
                          "application/json")
                ->status,
            400);
  EXPECT_EQ(Annotate(d0, "w", 1)->status, 200);
  auto dup = Annotate(d0, "w", 0);
  EXPECT_EQ(dup->status, 409);
  EXPECT_TRUE(json::parse(dup->body).contains("error"));
  EXPECT_EQ(client_->Get("/nowhere")->status, 404);
}

}  // namespace
}  // namespace textdesign

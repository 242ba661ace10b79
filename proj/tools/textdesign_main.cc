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

// Command-line front end: one subcommand per pipeline stage.

#include <algorithm>
#include <csignal>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "textdesign/annotation.h"
#include "textdesign/annotation_http.h"
#include "textdesign/corpus.h"
#include "textdesign/design.h"
#include "textdesign/error.h"
#include "textdesign/forward.h"
#include "textdesign/harness.h"
#include "textdesign/io.h"
#include "textdesign/mnir.h"
#include "textdesign/topics.h"

namespace td = textdesign;

namespace {

std::vector<std::string> SplitList(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<int> ParseIntList(const std::string& text) {
  std::vector<int> out;
  for (const auto& s : SplitList(text)) {
    try {
      size_t used = 0;
      out.push_back(std::stoi(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw td::Error("not an integer: '" + s + "'");
    }
  }
  return out;
}

// doc_id -> label from a CSV with columns doc_id, label.
std::map<std::string, int> ReadLabels(const std::string& path) {
  const td::CsvTable t = td::ReadCsv(path);
  const size_t doc = t.Column("doc_id");
  const size_t label = t.Column("label");
  std::map<std::string, int> out;
  for (const auto& row : t.rows) {
    if (row.at(label).empty()) continue;
    try {
      out[row.at(doc)] = std::stoi(row.at(label));
    } catch (const std::exception&) {
      throw td::Error(path + ": bad label '" + row.at(label) + "'");
    }
  }
  return out;
}

struct BuildArgs {
  std::string input, triplets, docs, stopwords, keep, vocab_from, out;
  int min_count = 1;
  bool keep_case = false;
};

void RunBuild(const BuildArgs& a) {
  if (a.input.empty() == a.triplets.empty()) {
    throw td::Error("give exactly one of --input or --triplets");
  }
  std::optional<td::Vocabulary> vocab;
  if (!a.vocab_from.empty()) vocab = td::ReadCorpus(a.vocab_from).vocab;
  td::BuildReport report;
  td::Corpus corpus;
  if (!a.input.empty()) {
    td::TokenizerConfig config;
    config.min_doc_count = a.min_count;
    config.lowercase = !a.keep_case;
    if (!a.stopwords.empty()) config.stopwords = td::ReadWordList(a.stopwords);
    if (!a.keep.empty()) config.keep_list = td::ReadWordList(a.keep);
    corpus = td::BuildCorpus(td::ReadJsonLines(a.input), config, vocab,
                             &report);
  } else {
    corpus = td::ReadTripletCsv(a.triplets, a.docs, a.min_count, vocab,
                                &report);
  }
  td::WriteCorpus(corpus, a.out);
  std::cout << "documents " << corpus.size() << " vocabulary "
            << corpus.vocab_size() << " dropped " << report.dropped_ids.size()
            << "\n";
}

struct TopicArgs {
  std::string corpus, k_grid, subject, out;
  int k = 0;
  uint64_t seed = 0;
  int restarts = 1;
  int max_iter = 1000;
  double tol = 1e-7;
};

void RunFitTopics(const TopicArgs& a) {
  td::Corpus corpus = td::ReadCorpus(a.corpus);
  if (!a.subject.empty()) corpus = corpus.SubjectSubset(a.subject);
  td::TopicFitOptions options;
  options.seed = a.seed;
  options.restarts = a.restarts;
  options.max_iter = a.max_iter;
  options.tol = a.tol;
  td::TopicModel model;
  if (!a.k_grid.empty()) {
    const td::TopicSelection sel =
        td::SelectTopicCount(corpus, ParseIntList(a.k_grid), options);
    for (size_t i = 0; i < sel.ks.size(); ++i) {
      std::cout << "K=" << sel.ks[i] << " log_marginal "
                << td::FormatDouble(sel.log_marginals[i])
                << (static_cast<int>(i) == sel.best_index ? " *" : "") << "\n";
    }
    model = sel.best;
  } else {
    if (a.k < 2) throw td::Error("--k must be >= 2 (or give --k-grid)");
    model = td::FitTopics(corpus, a.k, td::TopicPrior::Default(a.k,
                                                               corpus.vocab_size()),
                          options);
  }
  td::WriteTopicModel(model, a.out);
  std::cout << "K " << model.k << " iterations " << model.report.iterations
            << " converged " << (model.report.converged ? "yes" : "no")
            << " log_posterior " << td::FormatDouble(model.log_posterior)
            << "\n";
}

struct RankArgs {
  std::string model, corpus, variant = "map", out;
  int t_max = 0;
  int k = 0;
  int draws = 50;
  uint64_t seed = 0;
};

void RunRank(const RankArgs& a) {
  std::optional<td::TopicModel> model;
  if (!a.model.empty()) model = td::ReadTopicModel(a.model);
  std::optional<td::Corpus> corpus;
  if (!a.corpus.empty()) corpus = td::ReadCorpus(a.corpus);
  const std::vector<std::string> ids =
      model ? model->doc_ids
            : (corpus ? corpus->ids : std::vector<std::string>{});
  if (ids.empty()) throw td::Error("rank needs --model or --corpus");
  const int n = static_cast<int>(ids.size());
  if (a.t_max < 1) throw td::Error("--t-max must be >= 1");
  const int t_max = std::min(a.t_max, n);

  std::vector<td::CsvRow> rows;
  if (a.variant == "random") {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(a.seed);
    std::shuffle(order.begin(), order.end(), rng);
    for (int r = 0; r < t_max; ++r) {
      rows.push_back({std::to_string(r + 1), ids[order[r]], "", ""});
    }
  } else {
    td::FactorScores scores;
    if (a.variant == "pca") {
      if (!corpus) throw td::Error("--variant pca needs --corpus");
      const int k = a.k > 0 ? a.k : (model ? model->k : 0);
      if (k < 1) throw td::Error("--variant pca needs --k or --model");
      scores = td::PcaScores(*corpus, k);
    } else if (a.variant == "map" || a.variant == "marginal") {
      if (!model) throw td::Error("--variant " + a.variant + " needs --model");
      scores = td::TopicScores(model->omega);
    } else {
      throw td::Error("unknown variant: " + a.variant);
    }
    td::SeedReport seed_report;
    td::DesignState state =
        td::SeedDesign(scores, scores.dims(), a.seed, &seed_report);
    const auto& seeds = state.selected();
    for (size_t r = 0; r < seeds.size(); ++r) {
      rows.push_back({std::to_string(r + 1), ids[seeds[r]], "",
                      r + 1 == seeds.size() ? td::FormatDouble(state.log_det())
                                            : ""});
    }
    std::vector<td::RankStep> steps;
    if (a.variant == "marginal") {
      const auto samples =
          td::SampleAllWeights(*model, a.draws, a.seed ^ 0x9E3779B97F4A7C15ULL);
      steps = td::GreedyRank(scores, state, t_max, td::DesignVariant::kMarginal,
                             &samples);
    } else {
      steps = td::GreedyRank(scores, state, t_max);
    }
    for (const auto& s : steps) {
      rows.push_back({std::to_string(rows.size() + 1), ids[s.index],
                      td::FormatDouble(s.gain), td::FormatDouble(s.log_det)});
    }
    if (seed_report.extra_draws > 0) {
      std::cerr << "note: seeding needed " << seed_report.extra_draws
                << " extra documents\n";
    }
  }
  td::WriteCsv(a.out, {"rank", "doc_id", "gain", "cumulative_log_det"}, rows);
  std::cout << "ranked " << rows.size() << " documents\n";
}

struct MnirArgs {
  std::string corpus, penalty, scale = "-1,0,1", out;
  bool interactions = false;
};

void RunFitMnir(const MnirArgs& a) {
  const td::Corpus corpus = td::ReadCorpus(a.corpus);
  const td::SentimentScale scale = td::SentimentScale::Parse(a.scale);
  const td::PenaltyConfig penalty = a.penalty.empty()
                                        ? td::PenaltyConfig{}
                                        : td::PenaltyConfig::Parse(a.penalty);
  const td::CollapsedCounts cells =
      td::CollapseCounts(corpus, scale, a.interactions);
  const td::MnirModel model = td::FitMnir(cells, penalty, a.interactions);
  td::WriteMnirModel(model, a.out);
  std::cout << "cells " << cells.cells.size() << " unlabeled_excluded "
            << cells.excluded_unlabeled << " sweeps " << model.report.sweeps
            << " converged " << (model.report.converged ? "yes" : "no")
            << " nonzero_main " << model.report.nonzero_main << "\n";
}

void RunSrScores(const std::string& mnir, const std::string& corpus,
                 const std::string& out) {
  const td::SRScores scores =
      td::ComputeSrScores(td::ReadMnirModel(mnir), td::ReadCorpus(corpus));
  td::WriteSrScores(scores, out);
  std::cout << "scored " << scores.size() << " documents\n";
}

struct ForwardArgs {
  std::string scores, labels, scale = "-1,0,1", out;
};

void RunFitForward(const ForwardArgs& a) {
  const td::SRScores all = td::ReadSrScores(a.scores);
  const auto labels = ReadLabels(a.labels);
  std::vector<int> rows, y;
  for (int i = 0; i < all.size(); ++i) {
    const auto it = labels.find(all.doc_ids[i]);
    if (it == labels.end()) continue;
    rows.push_back(i);
    y.push_back(it->second);
  }
  if (rows.empty()) throw td::Error("no scored document has a label");
  const td::ForwardModel model = td::FitForward(
      all.Subset(rows), y, td::SentimentScale::Parse(a.scale), {});
  td::WriteForwardModel(model, a.out);
  std::cout << "fitted on " << rows.size() << " documents, iterations "
            << model.report.iterations << "\n";
}

void RunPredict(const std::string& fwd_path, const std::string& scores_path,
                const std::string& out) {
  const td::ForwardModel model = td::ReadForwardModel(fwd_path);
  const td::SRScores scores = td::ReadSrScores(scores_path);
  const Eigen::MatrixXd probs = td::PredictProbs(model, scores);
  const td::Classification cls = td::Classify(model, scores);
  td::CsvRow header = {"doc_id"};
  for (int level : model.levels) header.push_back("p_" + std::to_string(level));
  header.push_back("class");
  header.push_back("entropy");
  std::vector<td::CsvRow> rows;
  for (int i = 0; i < scores.size(); ++i) {
    td::CsvRow row = {scores.doc_ids[i]};
    for (Eigen::Index l = 0; l < probs.cols(); ++l) {
      row.push_back(td::FormatDouble(probs(i, l)));
    }
    row.push_back(std::to_string(cls.levels[i]));
    row.push_back(td::FormatDouble(cls.entropy(i)));
    rows.push_back(std::move(row));
  }
  td::WriteCsv(out, header, rows);
}

struct ExperimentArgs {
  std::string corpus, strategies = "map,pca,random", sizes, metric =
      "misclassification", strata, scale = "-1,0,1", penalty, out;
  int reps = 10;
  int topics = 5;
  int draws = 50;
  uint64_t seed = 0;
};

void RunExperiment(const ExperimentArgs& a) {
  const td::Corpus corpus = td::ReadCorpus(a.corpus);
  td::ExperimentPlan plan;
  plan.strategies.clear();
  for (const auto& s : SplitList(a.strategies)) {
    plan.strategies.push_back(td::ParseStrategy(s));
  }
  plan.sizes = ParseIntList(a.sizes);
  plan.repetitions = a.reps;
  plan.seed = a.seed;
  plan.metric = td::ParseMetric(a.metric);
  plan.topics = a.topics;
  plan.posterior_draws = a.draws;
  plan.scale = td::SentimentScale::Parse(a.scale);
  if (!a.penalty.empty()) plan.penalty = td::PenaltyConfig::Parse(a.penalty);
  if (a.strata == "all") {
    plan.strata = corpus.DistinctSubjects();
  } else if (!a.strata.empty()) {
    plan.strata = SplitList(a.strata);
  }
  const td::LearningCurve curve = td::RunDesignExperiment(corpus, plan);
  td::WriteLearningCurve(curve, a.out);
  for (size_t t = 0; t < curve.strata.size(); ++t) {
    for (size_t s = 0; s < curve.strategies.size(); ++s) {
      std::cout << (curve.strata[t].empty() ? "" : curve.strata[t] + " ")
                << td::StrategyName(curve.strategies[s]);
      for (size_t z = 0; z < curve.sizes.size(); ++z) {
        std::cout << " " << curve.sizes[z] << ":"
                  << td::FormatDouble(curve.Mean(t, s, z));
      }
      std::cout << "\n";
    }
  }
}

struct LearningArgs {
  std::string pool, ranking, labels, subject, sizes, scale = "-1,0,1",
      penalty, out;
  int step = 5;
};

void RunLearning(const LearningArgs& a) {
  const td::Corpus pool = td::ReadCorpus(a.pool);
  const auto ranking = td::ReadRanking(a.ranking, a.subject);
  const auto labels = ReadLabels(a.labels);
  std::vector<td::QueueEntry> queue;
  for (const auto& e : ranking) {
    if (e.subject == a.subject) queue.push_back(e);
  }
  std::sort(queue.begin(), queue.end(),
            [](const auto& x, const auto& y) { return x.rank < y.rank; });
  std::vector<td::LabeledDocument> sequence;
  for (const auto& e : queue) {
    const auto it = labels.find(e.doc_id);
    if (it != labels.end()) sequence.push_back({e.doc_id, it->second});
  }
  if (sequence.empty()) throw td::Error("no ranked document has a label");
  std::vector<int> sizes;
  if (!a.sizes.empty()) {
    sizes = ParseIntList(a.sizes);
  } else {
    if (a.step < 1) throw td::Error("--step must be >= 1");
    for (int s = a.step; s <= static_cast<int>(sequence.size()); s += a.step) {
      sizes.push_back(s);
    }
  }
  td::LearningOptions options;
  options.scale = td::SentimentScale::Parse(a.scale);
  if (!a.penalty.empty()) options.penalty = td::PenaltyConfig::Parse(a.penalty);
  const auto points =
      td::LearningMetrics(pool, sequence, a.subject, sizes, options);
  std::vector<td::CsvRow> rows;
  for (const auto& p : points) {
    rows.push_back({std::to_string(p.size), p.skipped ? "1" : "0",
                    p.skipped ? "" : std::to_string(p.nonzero_subject_loadings),
                    p.skipped ? "" : td::FormatDouble(p.mean_entropy)});
  }
  td::WriteCsv(a.out,
               {"size", "skipped", "nonzero_subject_loadings", "mean_entropy"},
               rows);
}

struct ServeArgs {
  std::string ranking, corpus, host = "127.0.0.1", store, subject = "default",
      policy = "agree-of-two", static_dir, scale = "-1,0,1", penalty;
  int port = 8080;
  double lease_minutes = 10;
  int snapshot_every = 100;
};

httplib::Server* g_server = nullptr;

void RunServe(const ServeArgs& a) {
  auto pool = std::make_shared<const td::Corpus>(td::ReadCorpus(a.corpus));
  td::ServiceOptions options;
  options.policy = td::ParseAgreementPolicy(a.policy);
  options.scale = td::SentimentScale::Parse(a.scale);
  options.lease = std::chrono::milliseconds(
      static_cast<int64_t>(a.lease_minutes * 60000.0));
  options.store_dir = a.store;
  options.snapshot_every = a.snapshot_every;
  options.learning.scale = options.scale;
  if (!a.penalty.empty()) {
    options.learning.penalty = td::PenaltyConfig::Parse(a.penalty);
  }
  td::AnnotationService service(pool, td::ReadRanking(a.ranking, a.subject),
                                options);
  httplib::Server server;
  td::RegisterRoutes(server, service);
  if (!a.static_dir.empty() && !server.set_mount_point("/", a.static_dir)) {
    throw td::Error("cannot serve static files from " + a.static_dir);
  }
  g_server = &server;
  std::signal(SIGINT, [](int) { g_server->stop(); });
  std::signal(SIGTERM, [](int) { g_server->stop(); });
  std::cout << "serving " << service.Subjects().size() << " queue(s) on "
            << a.host << ":" << a.port << std::endl;
  if (!server.listen(a.host, a.port)) {
    throw td::Error("cannot listen on " + a.host + ":" +
                    std::to_string(a.port));
  }
  service.WriteSnapshot();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topic-factor document design and sentiment inverse regression"};
  app.require_subcommand(1);

  BuildArgs build;
  auto* c = app.add_subcommand("build-corpus", "Tokenize and count documents");
  c->add_option("--input", build.input, "line-delimited JSON documents");
  c->add_option("--triplets", build.triplets, "CSV doc_id,token,count");
  c->add_option("--docs", build.docs, "CSV doc_id[,text,subject,label]");
  c->add_option("--min-count", build.min_count, "minimum document frequency");
  c->add_option("--stopwords", build.stopwords, "one word per line");
  c->add_option("--keep", build.keep, "tokens kept regardless of frequency");
  c->add_option("--vocab-from", build.vocab_from,
                "reuse the vocabulary of an existing corpus");
  c->add_flag("--keep-case", build.keep_case);
  c->add_option("--out", build.out)->required();
  c->callback([&] { RunBuild(build); });

  TopicArgs topics;
  c = app.add_subcommand("fit-topics", "Fit the topic factorization");
  c->add_option("--corpus", topics.corpus)->required();
  c->add_option("--k", topics.k);
  c->add_option("--k-grid", topics.k_grid, "e.g. 10,20,30");
  c->add_option("--seed", topics.seed);
  c->add_option("--restarts", topics.restarts);
  c->add_option("--max-iter", topics.max_iter);
  c->add_option("--tol", topics.tol);
  c->add_option("--subject", topics.subject, "fit one subject's documents");
  c->add_option("--out", topics.out)->required();
  c->callback([&] { RunFitTopics(topics); });

  RankArgs rank;
  c = app.add_subcommand("rank", "Order documents for labeling");
  c->add_option("--model", rank.model);
  c->add_option("--corpus", rank.corpus, "needed for --variant pca");
  c->add_option("--t-max", rank.t_max)->required();
  c->add_option("--variant", rank.variant, "map|marginal|pca|random");
  c->add_option("--k", rank.k, "components for pca");
  c->add_option("--draws", rank.draws, "posterior draws for marginal");
  c->add_option("--seed", rank.seed);
  c->add_option("--out", rank.out)->required();
  c->callback([&] { RunRank(rank); });

  MnirArgs mnir;
  c = app.add_subcommand("fit-mnir", "Fit multinomial inverse regression");
  c->add_option("--corpus", mnir.corpus)->required();
  c->add_flag("--interactions", mnir.interactions);
  c->add_option("--penalty", mnir.penalty, "lambda=..,tau=.. or l1=..");
  c->add_option("--scale", mnir.scale);
  c->add_option("--out", mnir.out)->required();
  c->callback([&] { RunFitMnir(mnir); });

  std::string sr_mnir, sr_corpus, sr_out;
  c = app.add_subcommand("sr-scores", "Project documents onto the loadings");
  c->add_option("--mnir", sr_mnir)->required();
  c->add_option("--corpus", sr_corpus)->required();
  c->add_option("--out", sr_out)->required();
  c->callback([&] { RunSrScores(sr_mnir, sr_corpus, sr_out); });

  ForwardArgs fwd;
  c = app.add_subcommand("fit-forward", "Fit the proportional-odds model");
  c->add_option("--scores", fwd.scores)->required();
  c->add_option("--labels", fwd.labels, "CSV doc_id,label")->required();
  c->add_option("--scale", fwd.scale);
  c->add_option("--out", fwd.out)->required();
  c->callback([&] { RunFitForward(fwd); });

  std::string pr_fwd, pr_scores, pr_out;
  c = app.add_subcommand("predict", "Class probabilities per document");
  c->add_option("--fwd", pr_fwd)->required();
  c->add_option("--scores", pr_scores)->required();
  c->add_option("--out", pr_out)->required();
  c->callback([&] { RunPredict(pr_fwd, pr_scores, pr_out); });

  ExperimentArgs exp;
  c = app.add_subcommand("experiment", "Repeated design learning curves");
  c->add_option("--corpus", exp.corpus)->required();
  c->add_option("--strategies", exp.strategies);
  c->add_option("--sizes", exp.sizes)->required();
  c->add_option("--reps", exp.reps);
  c->add_option("--metric", exp.metric, "misclassification|mae");
  c->add_option("--strata", exp.strata, "subjects, or 'all'");
  c->add_option("--topics", exp.topics);
  c->add_option("--draws", exp.draws);
  c->add_option("--seed", exp.seed);
  c->add_option("--scale", exp.scale);
  c->add_option("--penalty", exp.penalty);
  c->add_option("--out", exp.out)->required();
  c->callback([&] { RunExperiment(exp); });

  LearningArgs learn;
  c = app.add_subcommand("learning", "Loadings and entropy along a ranking");
  c->add_option("--pool", learn.pool)->required();
  c->add_option("--ranking", learn.ranking)->required();
  c->add_option("--labels", learn.labels)->required();
  c->add_option("--subject", learn.subject)->required();
  c->add_option("--sizes", learn.sizes);
  c->add_option("--step", learn.step);
  c->add_option("--scale", learn.scale);
  c->add_option("--penalty", learn.penalty);
  c->add_option("--out", learn.out)->required();
  c->callback([&] { RunLearning(learn); });

  ServeArgs serve;
  c = app.add_subcommand("serve", "Run the annotation service");
  c->add_option("--ranking", serve.ranking)->required();
  c->add_option("--corpus", serve.corpus)->required();
  c->add_option("--port", serve.port);
  c->add_option("--host", serve.host);
  c->add_option("--store", serve.store);
  c->add_option("--subject", serve.subject,
                "queue name for rankings without a subject column");
  c->add_option("--policy", serve.policy, "agree-of-two|majority-of-three");
  c->add_option("--lease-minutes", serve.lease_minutes);
  c->add_option("--snapshot-every", serve.snapshot_every);
  c->add_option("--static-dir", serve.static_dir);
  c->add_option("--scale", serve.scale);
  c->add_option("--penalty", serve.penalty);
  c->callback([&] { RunServe(serve); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

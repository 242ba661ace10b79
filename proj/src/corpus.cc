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

#include "textdesign/corpus.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"

#include "textdesign/error.h"
#include "textdesign/io.h"

namespace textdesign {

Vocabulary::Vocabulary(std::vector<std::string> tokens)
    : tokens_(std::move(tokens)) {
  index_.reserve(tokens_.size());
  for (size_t j = 0; j < tokens_.size(); ++j) {
    if (tokens_[j].empty()) throw Error("vocabulary contains an empty token");
    if (!index_.emplace(tokens_[j], static_cast<int>(j)).second) {
      throw Error("duplicate vocabulary token: " + tokens_[j]);
    }
  }
}

std::optional<int> Vocabulary::Find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Vocabulary Vocabulary::Union(const Vocabulary& a, const Vocabulary& b) {
  std::set<std::string> all(a.tokens_.begin(), a.tokens_.end());
  all.insert(b.tokens_.begin(), b.tokens_.end());
  return Vocabulary(std::vector<std::string>(all.begin(), all.end()));
}

void CountMatrix::AppendRow(std::vector<CountEntry> entries) {
  std::sort(entries.begin(), entries.end(),
            [](const CountEntry& a, const CountEntry& b) {
              return a.col < b.col;
            });
  for (size_t k = 0; k < entries.size(); ++k) {
    const auto& e = entries[k];
    if (e.count <= 0) throw Error("count entries must be positive");
    if (e.col < 0 || e.col >= cols_) throw Error("column out of range");
    if (k > 0 && entries[k - 1].col == e.col) {
      throw Error("duplicate column in count row");
    }
  }
  entries_.insert(entries_.end(), entries.begin(), entries.end());
  row_ptr_.push_back(entries_.size());
}

Eigen::VectorXd CountMatrix::DenseRow(int i) const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(cols_);
  for (const auto& e : Row(i)) x[e.col] = e.count;
  return x;
}

Eigen::MatrixXd CountMatrix::Frequencies() const {
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(rows(), cols_);
  for (int i = 0; i < rows(); ++i) {
    double m = 0;
    for (const auto& e : Row(i)) m += e.count;
    for (const auto& e : Row(i)) f(i, e.col) = e.count / m;
  }
  return f;
}

Eigen::VectorXd CountMatrix::ColumnTotals() const {
  Eigen::VectorXd t = Eigen::VectorXd::Zero(cols_);
  for (const auto& e : entries_) t[e.col] += e.count;
  return t;
}

void Corpus::AddRow(std::string id, std::string text,
                    std::optional<std::string> subject,
                    std::optional<int> label,
                    std::vector<CountEntry> entries) {
  if (counts.cols() != vocab_size()) {
    if (counts.rows() > 0) throw Error("count matrix does not match vocab");
    counts = CountMatrix(vocab_size());
  }
  if (entries.empty()) throw Error("document " + id + " has no tokens");
  if (!id_index_.emplace(id, counts.rows()).second) {
    throw Error("duplicate document id: " + id);
  }
  double m = 0;
  for (const auto& e : entries) m += e.count;
  counts.AppendRow(std::move(entries));
  totals_.conservativeResize(totals_.size() + 1);
  totals_[totals_.size() - 1] = m;
  ids.push_back(std::move(id));
  texts.push_back(std::move(text));
  subjects.push_back(std::move(subject));
  labels.push_back(label);
}

Corpus Corpus::Subset(std::span<const int> rows) const {
  Corpus out;
  out.vocab = vocab;
  out.counts = CountMatrix(vocab_size());
  for (int i : rows) {
    if (i < 0 || i >= size()) throw Error("subset row out of range");
    auto row = counts.Row(i);
    out.AddRow(ids[i], texts[i], subjects[i], labels[i],
               std::vector<CountEntry>(row.begin(), row.end()));
  }
  return out;
}

Corpus Corpus::SubjectSubset(std::string_view subject) const {
  std::vector<int> rows;
  for (int i = 0; i < size(); ++i) {
    if (subjects[i] && *subjects[i] == subject) rows.push_back(i);
  }
  if (rows.empty()) {
    throw Error("no documents for subject " + std::string(subject));
  }
  return Subset(rows);
}

std::vector<std::string> Corpus::DistinctSubjects() const {
  std::set<std::string> s;
  for (const auto& subject : subjects) {
    if (subject) s.insert(*subject);
  }
  return {s.begin(), s.end()};
}

std::optional<int> Corpus::FindId(std::string_view id) const {
  auto it = id_index_.find(std::string(id));
  if (it == id_index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> Tokenize(std::string_view text,
                                  const TokenizerConfig& config) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (config.strip_punctuation && uc < 0x80 && std::ispunct(uc) &&
        config.keep_punctuation.find(ch) == std::string::npos) {
      continue;
    }
    cleaned += config.lowercase && uc < 0x80
                   ? static_cast<char>(std::tolower(uc))
                   : ch;
  }

  std::vector<std::string> tokens;
  size_t pos = 0;
  while (pos < cleaned.size()) {
    while (pos < cleaned.size() &&
           std::isspace(static_cast<unsigned char>(cleaned[pos]))) {
      ++pos;
    }
    size_t end = pos;
    while (end < cleaned.size() &&
           !std::isspace(static_cast<unsigned char>(cleaned[end]))) {
      ++end;
    }
    if (end > pos) {
      std::string token = cleaned.substr(pos, end - pos);
      if (!config.stopwords.contains(token)) {
        if (config.stemmer) token = config.stemmer(token);
        if (!token.empty()) tokens.push_back(std::move(token));
      }
    }
    pos = end;
  }
  return tokens;
}

Vocabulary BuildVocabulary(const std::vector<std::vector<std::string>>& docs,
                           int min_doc_count,
                           const std::unordered_set<std::string>& keep_list) {
  if (docs.empty()) throw Error("empty corpus");
  if (min_doc_count < 1) throw Error("min_doc_count must be >= 1");
  std::map<std::string, int> doc_freq;
  for (const auto& doc : docs) {
    std::set<std::string_view> seen(doc.begin(), doc.end());
    for (auto token : seen) ++doc_freq[std::string(token)];
  }
  std::vector<std::string> kept;
  for (const auto& [token, df] : doc_freq) {
    if (df >= min_doc_count || keep_list.contains(token)) {
      kept.push_back(token);
    }
  }
  if (kept.empty()) throw Error("vocabulary empty under threshold");
  return Vocabulary(std::move(kept));
}

Corpus BuildCorpus(const std::vector<RawDocument>& docs,
                   const TokenizerConfig& config,
                   const std::optional<Vocabulary>& vocab,
                   BuildReport* report) {
  if (docs.empty()) throw Error("empty corpus");
  if (config.min_doc_count < 1) throw Error("min_doc_count must be >= 1");
  std::vector<std::vector<std::string>> tokenized;
  tokenized.reserve(docs.size());
  std::unordered_set<std::string> ids;
  for (const auto& doc : docs) {
    if (doc.id.empty()) throw Error("document id must be nonempty");
    if (!ids.insert(doc.id).second) {
      throw Error("duplicate document id: " + doc.id);
    }
    tokenized.push_back(Tokenize(doc.text, config));
  }

  Corpus corpus;
  corpus.vocab = vocab ? *vocab
                       : BuildVocabulary(tokenized, config.min_doc_count,
                                         config.keep_list);
  corpus.counts = CountMatrix(corpus.vocab_size());
  BuildReport local;
  for (size_t d = 0; d < docs.size(); ++d) {
    std::map<int, int> row;
    for (const auto& token : tokenized[d]) {
      if (auto j = corpus.vocab.Find(token)) ++row[*j];
    }
    if (row.empty()) {
      local.dropped_ids.push_back(docs[d].id);
      continue;
    }
    std::vector<CountEntry> entries;
    entries.reserve(row.size());
    for (auto [j, c] : row) entries.push_back({j, c});
    corpus.AddRow(docs[d].id, docs[d].text, docs[d].subject, docs[d].label,
                  std::move(entries));
  }
  if (corpus.size() == 0) {
    throw Error("all documents dropped: no in-vocabulary tokens");
  }
  if (report) *report = std::move(local);
  return corpus;
}

Corpus ReadTripletCsv(const std::string& counts_path,
                      const std::string& docs_path, int min_doc_count,
                      const std::optional<Vocabulary>& vocab,
                      BuildReport* report) {
  if (min_doc_count < 1) throw Error("min_doc_count must be >= 1");
  const CsvTable counts = ReadCsv(counts_path);
  const size_t c_doc = counts.Column("doc_id");
  const size_t c_tok = counts.Column("token");
  const size_t c_cnt = counts.Column("count");

  std::vector<RawDocument> docs;
  std::unordered_map<std::string, size_t> doc_index;
  const auto add_doc = [&](RawDocument d) {
    if (d.id.empty()) throw Error("document id must be nonempty");
    if (!doc_index.emplace(d.id, docs.size()).second) {
      throw Error("duplicate document id: " + d.id);
    }
    docs.push_back(std::move(d));
  };
  if (!docs_path.empty()) {
    const CsvTable meta = ReadCsv(docs_path);
    const auto find = [&](const char* name) -> std::optional<size_t> {
      const auto it = std::find(meta.header.begin(), meta.header.end(), name);
      if (it == meta.header.end()) return std::nullopt;
      return static_cast<size_t>(it - meta.header.begin());
    };
    const size_t m_doc = meta.Column("doc_id");
    const auto m_text = find("text");
    const auto m_subject = find("subject");
    const auto m_label = find("label");
    for (const auto& row : meta.rows) {
      RawDocument d;
      d.id = row.at(m_doc);
      if (m_text) d.text = row.at(*m_text);
      if (m_subject && !row.at(*m_subject).empty()) {
        d.subject = row.at(*m_subject);
      }
      if (m_label && !row.at(*m_label).empty()) {
        try {
          d.label = std::stoi(row.at(*m_label));
        } catch (const std::exception&) {
          throw Error(docs_path + ": bad label '" + row.at(*m_label) + "'");
        }
      }
      add_doc(std::move(d));
    }
  }

  std::vector<std::map<std::string, int>> rows(docs.size());
  for (const auto& row : counts.rows) {
    const std::string& id = row.at(c_doc);
    auto it = doc_index.find(id);
    if (it == doc_index.end()) {
      if (!docs_path.empty()) {
        throw Error(counts_path + ": document " + id + " missing from " +
                    docs_path);
      }
      add_doc(RawDocument{id, "", std::nullopt, std::nullopt});
      rows.emplace_back();
      it = doc_index.find(id);
    }
    int count = 0;
    try {
      count = std::stoi(row.at(c_cnt));
    } catch (const std::exception&) {
      throw Error(counts_path + ": bad count '" + row.at(c_cnt) + "'");
    }
    if (count < 0) throw Error(counts_path + ": negative count for " + id);
    if (count > 0) rows[it->second][row.at(c_tok)] += count;
  }
  if (docs.empty()) throw Error("empty corpus");

  Corpus corpus;
  if (vocab) {
    corpus.vocab = *vocab;
  } else {
    std::vector<std::vector<std::string>> tokens(docs.size());
    for (size_t d = 0; d < docs.size(); ++d) {
      for (const auto& [tok, c] : rows[d]) tokens[d].push_back(tok);
    }
    corpus.vocab = BuildVocabulary(tokens, min_doc_count);
  }
  corpus.counts = CountMatrix(corpus.vocab_size());
  BuildReport local;
  for (size_t d = 0; d < docs.size(); ++d) {
    std::map<int, int> row;
    for (const auto& [tok, c] : rows[d]) {
      if (auto j = corpus.vocab.Find(tok)) row[*j] += c;
    }
    if (row.empty()) {
      local.dropped_ids.push_back(docs[d].id);
      continue;
    }
    std::vector<CountEntry> entries;
    for (auto [j, c] : row) entries.push_back({j, c});
    corpus.AddRow(docs[d].id, docs[d].text, docs[d].subject, docs[d].label,
                  std::move(entries));
  }
  if (corpus.size() == 0) {
    throw Error("all documents dropped: no in-vocabulary tokens");
  }
  if (report) *report = std::move(local);
  return corpus;
}

std::vector<RawDocument> ReadJsonLines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open for reading: " + path);
  std::vector<RawDocument> docs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      RawDocument doc;
      doc.id = j.at("id").is_string() ? j.at("id").get<std::string>()
                                      : j.at("id").dump();
      doc.text = j.at("text").get<std::string>();
      if (j.contains("subject") && !j["subject"].is_null()) {
        doc.subject = j["subject"].get<std::string>();
      }
      if (j.contains("label") && !j["label"].is_null()) {
        doc.label = j["label"].get<int>();
      }
      docs.push_back(std::move(doc));
    } catch (const nlohmann::json::exception& e) {
      throw Error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return docs;
}

std::unordered_set<std::string> ReadWordList(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open for reading: " + path);
  std::unordered_set<std::string> words;
  std::string w;
  while (in >> w) words.insert(w);
  return words;
}

namespace {
constexpr std::string_view kCorpusMagic = "TDCORPUS";
constexpr uint32_t kCorpusVersion = 1;
}  // namespace

void WriteCorpus(const Corpus& corpus, const std::string& path) {
  BinaryWriter w(path, kCorpusMagic, kCorpusVersion);
  w.StringList(corpus.vocab.tokens());
  w.U64(static_cast<uint64_t>(corpus.size()));
  for (int i = 0; i < corpus.size(); ++i) {
    w.String(corpus.ids[i]);
    w.String(corpus.texts[i]);
    w.Bool(corpus.subjects[i].has_value());
    if (corpus.subjects[i]) w.String(*corpus.subjects[i]);
    w.Bool(corpus.labels[i].has_value());
    if (corpus.labels[i]) w.I32(*corpus.labels[i]);
  }
  w.U64(corpus.counts.nonzeros());
  for (int i = 0; i < corpus.size(); ++i) {
    for (const auto& e : corpus.counts.Row(i)) {
      w.U32(static_cast<uint32_t>(i));
      w.U32(static_cast<uint32_t>(e.col));
      w.U32(static_cast<uint32_t>(e.count));
    }
  }
  w.Close();
}

Corpus ReadCorpus(const std::string& path) {
  BinaryReader r(path, kCorpusMagic, kCorpusVersion);
  Vocabulary vocab(r.StringList());
  const auto n = r.U64();
  std::vector<RawDocument> meta(n);
  for (auto& doc : meta) {
    doc.id = r.String();
    doc.text = r.String();
    if (r.Bool()) doc.subject = r.String();
    if (r.Bool()) doc.label = r.I32();
  }
  std::vector<std::vector<CountEntry>> rows(n);
  const auto nnz = r.U64();
  uint32_t last_row = 0;
  for (uint64_t k = 0; k < nnz; ++k) {
    const uint32_t row = r.U32();
    const uint32_t col = r.U32();
    const uint32_t count = r.U32();
    if (row >= n || row < last_row || col >= vocab.size()) {
      throw Error(path + ": malformed triplet " + std::to_string(k));
    }
    last_row = row;
    rows[row].push_back({static_cast<int>(col), static_cast<int>(count)});
  }
  Corpus corpus;
  corpus.vocab = std::move(vocab);
  corpus.counts = CountMatrix(corpus.vocab_size());
  for (uint64_t i = 0; i < n; ++i) {
    corpus.AddRow(std::move(meta[i].id), std::move(meta[i].text),
                  std::move(meta[i].subject), meta[i].label,
                  std::move(rows[i]));
  }
  return corpus;
}

}  // namespace textdesign

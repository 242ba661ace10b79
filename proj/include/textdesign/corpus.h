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

#ifndef TEXTDESIGN_CORPUS_H_
#define TEXTDESIGN_CORPUS_H_

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

namespace textdesign {

// One input record. `label` is an ordered sentiment code such as -1/0/1.
struct RawDocument {
  std::string id;
  std::string text;
  std::optional<std::string> subject;
  std::optional<int> label;
};

struct TokenizerConfig {
  bool lowercase = true;
  bool strip_punctuation = true;
  // Punctuation characters that survive stripping (hashtags and mentions).
  std::string keep_punctuation = "#@";
  std::unordered_set<std::string> stopwords;
  int min_doc_count = 1;
  // Tokens retained regardless of min_doc_count.
  std::unordered_set<std::string> keep_list;
  // Applied to each token after stopword removal; identity when empty.
  std::function<std::string(std::string_view)> stemmer;
};

class Vocabulary {
 public:
  Vocabulary() = default;
  // Throws on duplicate or empty tokens. Order is preserved as given.
  explicit Vocabulary(std::vector<std::string> tokens);

  size_t size() const { return tokens_.size(); }
  const std::string& token(size_t j) const { return tokens_[j]; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::optional<int> Find(std::string_view token) const;

  // Sorted union of the two token sets.
  static Vocabulary Union(const Vocabulary& a, const Vocabulary& b);

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct CountEntry {
  int col;
  int count;
};

// Compressed sparse row storage of strictly positive integer counts.
class CountMatrix {
 public:
  CountMatrix() = default;
  CountMatrix(int cols) : cols_(cols) { row_ptr_.push_back(0); }

  // Entries must have distinct columns and positive counts.
  void AppendRow(std::vector<CountEntry> entries);

  int rows() const { return static_cast<int>(row_ptr_.size()) - 1; }
  int cols() const { return cols_; }
  size_t nonzeros() const { return entries_.size(); }

  std::span<const CountEntry> Row(int i) const {
    return {entries_.data() + row_ptr_[i],
            entries_.data() + row_ptr_[i + 1]};
  }

  Eigen::VectorXd DenseRow(int i) const;
  // Row-normalized dense matrix f_i = x_i / m_i.
  Eigen::MatrixXd Frequencies() const;
  Eigen::VectorXd ColumnTotals() const;

 private:
  int cols_ = 0;
  std::vector<size_t> row_ptr_;
  std::vector<CountEntry> entries_;
};

class Corpus {
 public:
  Corpus() = default;

  Vocabulary vocab;
  CountMatrix counts;
  std::vector<std::string> ids;
  std::vector<std::string> texts;
  std::vector<std::optional<std::string>> subjects;
  std::vector<std::optional<int>> labels;

  int size() const { return counts.rows(); }
  int vocab_size() const { return static_cast<int>(vocab.size()); }
  // Document length m_i.
  double total(int i) const { return totals_[i]; }
  const Eigen::VectorXd& totals() const { return totals_; }

  // Appends a row; throws if the row is empty (m_i must be >= 1).
  void AddRow(std::string id, std::string text,
              std::optional<std::string> subject, std::optional<int> label,
              std::vector<CountEntry> entries);

  // Rows in the given order, same vocabulary.
  Corpus Subset(std::span<const int> rows) const;
  // Rows whose subject equals `subject`.
  Corpus SubjectSubset(std::string_view subject) const;
  std::vector<std::string> DistinctSubjects() const;
  std::optional<int> FindId(std::string_view id) const;

 private:
  Eigen::VectorXd totals_;
  std::unordered_map<std::string, int> id_index_;
};

struct BuildReport {
  std::vector<std::string> dropped_ids;
};

// Lowercases, strips punctuation, splits on whitespace, removes stopwords,
// and applies the stemmer hook, all as enabled by `config`.
std::vector<std::string> Tokenize(std::string_view text,
                                  const TokenizerConfig& config);

// Tokens appearing in at least `min_doc_count` distinct documents (plus any
// keep-list token that appears at all), sorted lexicographically.
Vocabulary BuildVocabulary(
    const std::vector<std::vector<std::string>>& docs, int min_doc_count,
    const std::unordered_set<std::string>& keep_list = {});

// Tokenizes and counts. When `vocab` is absent it is built from the docs
// with config.min_doc_count. Rows without in-vocabulary tokens are dropped
// and listed in `report`.
Corpus BuildCorpus(const std::vector<RawDocument>& docs,
                   const TokenizerConfig& config,
                   const std::optional<Vocabulary>& vocab = std::nullopt,
                   BuildReport* report = nullptr);

// Line-delimited JSON records {"id", "text", "subject"?, "label"?}.
std::vector<RawDocument> ReadJsonLines(const std::string& path);
std::unordered_set<std::string> ReadWordList(const std::string& path);

// Pre-counted input: `counts_path` has columns doc_id, token, count; the
// optional `docs_path` has doc_id plus any of text, subject, label and fixes
// the row order. Without it rows follow first appearance in the counts.
// Tokens seen in fewer than `min_doc_count` documents are dropped, and so
// are rows left empty.
Corpus ReadTripletCsv(const std::string& counts_path,
                      const std::string& docs_path, int min_doc_count,
                      const std::optional<Vocabulary>& vocab = std::nullopt,
                      BuildReport* report = nullptr);

// Triplet-layout binary format, version 1:
//   magic "TDCORPUS", u32 version,
//   vocabulary (u64 p, p strings),
//   u64 n, then per row: id, text, bool has_subject [, subject],
//     bool has_label [, i32 label],
//   u64 nnz, then nnz triplets (u32 row, u32 col, u32 count) in row order.
void WriteCorpus(const Corpus& corpus, const std::string& path);
Corpus ReadCorpus(const std::string& path);

}  // namespace textdesign

#endif  // TEXTDESIGN_CORPUS_H_

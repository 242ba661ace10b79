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

#include "textdesign/io.h"

#include <bit>
#include <charconv>
#include <cstring>
#include <sstream>

#include "textdesign/error.h"

namespace textdesign {

static_assert(std::endian::native == std::endian::little,
              "binary artifacts assume a little-endian host");

BinaryWriter::BinaryWriter(const std::string& path, std::string_view magic,
                           uint32_t version)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw Error("cannot open for writing: " + path);
  if (magic.size() != 8) throw Error("binary magic must be 8 bytes");
  Raw(magic.data(), magic.size());
  U32(version);
}

void BinaryWriter::Raw(const void* data, size_t n) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out_) throw Error("write failed: " + path_);
}

void BinaryWriter::U32(uint32_t v) { Raw(&v, sizeof v); }
void BinaryWriter::U64(uint64_t v) { Raw(&v, sizeof v); }
void BinaryWriter::I32(int32_t v) { Raw(&v, sizeof v); }
void BinaryWriter::F64(double v) { Raw(&v, sizeof v); }
void BinaryWriter::Bool(bool v) {
  uint8_t b = v ? 1 : 0;
  Raw(&b, 1);
}

void BinaryWriter::String(std::string_view s) {
  U32(static_cast<uint32_t>(s.size()));
  Raw(s.data(), s.size());
}

void BinaryWriter::StringList(const std::vector<std::string>& v) {
  U64(v.size());
  for (const auto& s : v) String(s);
}

void BinaryWriter::Vector(const Eigen::VectorXd& v) {
  U64(static_cast<uint64_t>(v.size()));
  Raw(v.data(), sizeof(double) * static_cast<size_t>(v.size()));
}

void BinaryWriter::Matrix(const Eigen::MatrixXd& m) {
  U64(static_cast<uint64_t>(m.rows()));
  U64(static_cast<uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) F64(m(r, c));
  }
}

void BinaryWriter::Close() {
  out_.close();
  if (!out_) throw Error("close failed: " + path_);
}

BinaryReader::BinaryReader(const std::string& path, std::string_view magic,
                           uint32_t max_version)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw Error("cannot open for reading: " + path);
  std::string tag(8, '\0');
  Raw(tag.data(), tag.size());
  if (tag != magic) {
    throw Error(path + ": not a " + std::string(magic) + " file");
  }
  version_ = U32();
  if (version_ == 0 || version_ > max_version) {
    throw Error(path + ": unsupported format version " +
                std::to_string(version_));
  }
}

void BinaryReader::Raw(void* data, size_t n) {
  in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (!in_) throw Error("truncated file: " + path_);
}

uint32_t BinaryReader::U32() {
  uint32_t v;
  Raw(&v, sizeof v);
  return v;
}
uint64_t BinaryReader::U64() {
  uint64_t v;
  Raw(&v, sizeof v);
  return v;
}
int32_t BinaryReader::I32() {
  int32_t v;
  Raw(&v, sizeof v);
  return v;
}
double BinaryReader::F64() {
  double v;
  Raw(&v, sizeof v);
  return v;
}
bool BinaryReader::Bool() {
  uint8_t b;
  Raw(&b, 1);
  return b != 0;
}

std::string BinaryReader::String() {
  std::string s(U32(), '\0');
  Raw(s.data(), s.size());
  return s;
}

std::vector<std::string> BinaryReader::StringList() {
  std::vector<std::string> v(U64());
  for (auto& s : v) s = String();
  return v;
}

Eigen::VectorXd BinaryReader::Vector() {
  Eigen::VectorXd v(static_cast<Eigen::Index>(U64()));
  Raw(v.data(), sizeof(double) * static_cast<size_t>(v.size()));
  return v;
}

Eigen::MatrixXd BinaryReader::Matrix() {
  const auto rows = static_cast<Eigen::Index>(U64());
  const auto cols = static_cast<Eigen::Index>(U64());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = F64();
  }
  return m;
}

namespace {

void AppendField(std::string& line, const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) {
    line += field;
    return;
  }
  line += '"';
  for (char c : field) {
    if (c == '"') line += '"';
    line += c;
  }
  line += '"';
}

std::string JoinCsv(const CsvRow& row) {
  std::string line;
  for (size_t i = 0; i < row.size(); ++i) {
    if (i) line += ',';
    AppendField(line, row[i]);
  }
  return line;
}

// Splits one logical record; quoted fields may span physical lines.
bool ReadRecord(std::istream& in, CsvRow& out) {
  out.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          field += '"';
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (!any) return false;
  out.push_back(std::move(field));
  return true;
}

}  // namespace

void WriteCsv(const std::string& path, const CsvRow& header,
              const std::vector<CsvRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path);
  out << JoinCsv(header) << '\n';
  for (const auto& row : rows) out << JoinCsv(row) << '\n';
  if (!out) throw Error("write failed: " + path);
}

size_t CsvTable::Column(std::string_view name) const {
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw Error("missing CSV column: " + std::string(name));
}

CsvTable ReadCsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open for reading: " + path);
  CsvTable table;
  if (!ReadRecord(in, table.header)) throw Error("empty CSV: " + path);
  CsvRow row;
  while (ReadRecord(in, row)) {
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != table.header.size()) {
      throw Error(path + ": row " + std::to_string(table.rows.size() + 1) +
                  " has " + std::to_string(row.size()) + " fields, expected " +
                  std::to_string(table.header.size()));
    }
    table.rows.push_back(row);
  }
  return table;
}

std::string FormatDouble(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace textdesign

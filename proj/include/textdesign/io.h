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

#ifndef TEXTDESIGN_IO_H_
#define TEXTDESIGN_IO_H_

// Little-endian binary record streams used by every *.bin artifact, and a
// minimal CSV reader/writer for the tabular outputs.
//
// Every binary file starts with an 8-byte magic tag followed by a u32 format
// version. Strings are a u32 byte length followed by raw UTF-8 bytes; dense
// matrices are (u64 rows, u64 cols, row-major f64 values).

#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace textdesign {

class BinaryWriter {
 public:
  BinaryWriter(const std::string& path, std::string_view magic,
               uint32_t version);

  void U32(uint32_t v);
  void U64(uint64_t v);
  void I32(int32_t v);
  void F64(double v);
  void Bool(bool v);
  void String(std::string_view s);
  void StringList(const std::vector<std::string>& v);
  void Vector(const Eigen::VectorXd& v);
  void Matrix(const Eigen::MatrixXd& m);
  void Close();

 private:
  void Raw(const void* data, size_t n);

  std::string path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  // Throws unless the file exists, carries `magic`, and has a version no
  // newer than `max_version`.
  BinaryReader(const std::string& path, std::string_view magic,
               uint32_t max_version);

  uint32_t version() const { return version_; }

  uint32_t U32();
  uint64_t U64();
  int32_t I32();
  double F64();
  bool Bool();
  std::string String();
  std::vector<std::string> StringList();
  Eigen::VectorXd Vector();
  Eigen::MatrixXd Matrix();

 private:
  void Raw(void* data, size_t n);

  std::string path_;
  std::ifstream in_;
  uint32_t version_ = 0;
};

using CsvRow = std::vector<std::string>;

// RFC-4180 style: fields containing comma, quote or newline are quoted.
void WriteCsv(const std::string& path, const CsvRow& header,
              const std::vector<CsvRow>& rows);

struct CsvTable {
  CsvRow header;
  std::vector<CsvRow> rows;

  // Column index for `name`; throws if absent.
  size_t Column(std::string_view name) const;
};

CsvTable ReadCsv(const std::string& path);

// Shortest round-trippable decimal text for a double.
std::string FormatDouble(double v);

}  // namespace textdesign

#endif  // TEXTDESIGN_IO_H_

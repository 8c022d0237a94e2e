// Copyright 2026 The tiger-cpp Authors.
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

// Little-endian binary writer/reader used by the model checkpoints.

#ifndef TIGER_BINARY_IO_HPP_
#define TIGER_BINARY_IO_HPP_

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

#include "tiger/numeric.hpp"

namespace tiger {

class BinaryWriter {
 public:
  void bytes(std::string_view s) { buf_.append(s.data(), s.size()); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof bits);
    u64(bits);
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  void matrix(const DenseMatrix& m) {
    u32(static_cast<std::uint32_t>(m.rows()));
    u32(static_cast<std::uint32_t>(m.cols()));
    for (double v : m.data()) f64(v);
  }
  const std::string& buffer() const { return buf_; }
  // Throws DataError if the file cannot be written.
  void write_file(const std::filesystem::path& path) const;

 private:
  std::string buf_;
};

class BinaryReader {
 public:
  // Throws DataError if the file cannot be read.
  static BinaryReader from_file(const std::filesystem::path& path);
  BinaryReader(std::string data, std::string name)
      : data_(std::move(data)), name_(std::move(name)) {}

  std::string bytes(std::size_t n);
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str();
  DenseMatrix matrix();
  // Reads a matrix and checks its shape against `expected`.
  void matrix_into(DenseMatrix& expected);
  bool at_end() const { return pos_ == data_.size(); }
  const std::string& name() const { return name_; }

 private:
  void need(std::size_t n);
  std::string data_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace tiger

#endif  // TIGER_BINARY_IO_HPP_

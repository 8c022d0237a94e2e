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

#include "tiger/binary_io.hpp"

#include <fstream>

#include "tiger/errors.hpp"

namespace tiger {

void BinaryWriter::write_file(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
  if (!out) throw DataError("short write to " + path.string());
}

BinaryReader BinaryReader::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return BinaryReader(std::move(data), path.string());
}

void BinaryReader::need(std::size_t n) {
  if (pos_ + n > data_.size()) throw DataError(name_ + ": truncated file");
}

std::string BinaryReader::bytes(std::size_t n) {
  need(n);
  std::string s = data_.substr(pos_, n);
  pos_ += n;
  return s;
}

std::uint32_t BinaryReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
  }
  pos_ += 4;
  return v;
}

std::uint64_t BinaryReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
  }
  pos_ += 8;
  return v;
}

double BinaryReader::f64() {
  std::uint64_t bits = u64();
  double d;
  std::memcpy(&d, &bits, sizeof d);
  return d;
}

std::string BinaryReader::str() { return bytes(u32()); }

DenseMatrix BinaryReader::matrix() {
  std::uint32_t r = u32();
  std::uint32_t c = u32();
  need(static_cast<std::size_t>(r) * c * 8);
  DenseMatrix m(r, c);
  for (double& v : m.data()) v = f64();
  return m;
}

void BinaryReader::matrix_into(DenseMatrix& expected) {
  DenseMatrix m = matrix();
  if (m.rows() != expected.rows() || m.cols() != expected.cols()) {
    throw DataError(name_ + ": parameter shape " + m.shape_string() +
                    " does not match expected " + expected.shape_string());
  }
  expected = std::move(m);
}

}  // namespace tiger

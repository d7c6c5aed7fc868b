// Copyright 2026 The lsttts Authors
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

#include "lsttts/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lsttts::io {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error(std::string(what) + ": truncated file");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

void put_f32(std::ostream& os, const std::vector<float>& v) {
  static_assert(sizeof(float) == 4);
  for (float x : v) {
    std::uint32_t bits;
    std::memcpy(&bits, &x, 4);
    put_u32(os, bits);
  }
}

std::vector<float> get_f32(std::istream& is, std::size_t count, const char* what) {
  std::vector<float> out(count);
  for (auto& x : out) {
    const std::uint32_t bits = get_u32(is, what);
    std::memcpy(&x, &bits, 4);
  }
  return out;
}

Tensor read_matrix_file(const std::string& path, const char* magic, const char* what) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(std::string(what) + ": cannot open " + path);
  const std::size_t magic_len = std::strlen(magic);
  std::vector<char> head(magic_len);
  if (!f.read(head.data(), std::streamsize(magic_len)) ||
      std::memcmp(head.data(), magic, magic_len) != 0)
    throw std::runtime_error(std::string(what) + ": bad magic in " + path);
  const std::uint32_t rows = get_u32(f, what);
  const std::uint32_t cols = get_u32(f, what);
  auto data = get_f32(f, std::size_t(rows) * cols, what);
  return Tensor::from_data({rows, cols}, std::move(data));
}

void write_matrix_file(const std::string& path, const char* magic, const Tensor& m,
                       const char* what) {
  if (m.rank() != 2) throw std::invalid_argument(std::string(what) + ": tensor must be rank 2");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error(std::string(what) + ": cannot write " + path);
  f.write(magic, std::streamsize(std::strlen(magic)));
  put_u32(f, std::uint32_t(m.shape()[0]));
  put_u32(f, std::uint32_t(m.shape()[1]));
  put_f32(f, m.values());
  if (!f) throw std::runtime_error(std::string(what) + ": write failed for " + path);
}

}  // namespace

void write_mel(const std::string& path, const Tensor& mel) {
  write_matrix_file(path, "LSTM0", mel, "mel");
}

Tensor read_mel(const std::string& path) { return read_matrix_file(path, "LSTM0", "mel"); }

void write_features(const std::string& path, const Tensor& features) {
  write_matrix_file(path, "LSTF", features, "features");
}

Tensor read_features(const std::string& path) {
  return read_matrix_file(path, "LSTF", "features");
}

std::vector<std::uint8_t> scale_to_bytes(const std::vector<float>& values) {
  std::vector<std::uint8_t> out(values.size(), 128);
  if (values.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const float lo = *lo_it, hi = *hi_it;
  if (hi == lo) return out;  // constant matrix: uniform mid-gray
  const float scale = 255.0f / (hi - lo);
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = std::uint8_t(std::min(255.0f, std::max(0.0f, (values[i] - lo) * scale + 0.5f)));
  return out;
}

void write_pgm(const std::string& path, const std::vector<float>& values, std::size_t rows,
               std::size_t cols) {
  if (values.size() != rows * cols) throw std::invalid_argument("pgm: size mismatch");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("pgm: cannot write " + path);
  f << "P5\n" << cols << " " << rows << "\n255\n";
  const auto bytes = scale_to_bytes(values);
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw std::runtime_error("pgm: write failed for " + path);
}

Pgm read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("pgm: cannot open " + path);
  std::string magic;
  std::size_t cols = 0, rows = 0, maxval = 0;
  f >> magic >> cols >> rows >> maxval;
  if (magic != "P5" || maxval != 255) throw std::runtime_error("pgm: unsupported format");
  f.get();  // single whitespace after the header
  Pgm out;
  out.rows = rows;
  out.cols = cols;
  out.pixels.resize(rows * cols);
  if (!f.read(reinterpret_cast<char*>(out.pixels.data()), std::streamsize(out.pixels.size())))
    throw std::runtime_error("pgm: truncated pixel data");
  return out;
}

void write_text_matrix(const std::string& path, const std::vector<float>& values,
                       std::size_t rows, std::size_t cols) {
  if (values.size() != rows * cols) throw std::invalid_argument("text matrix: size mismatch");
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("text matrix: cannot write " + path);
  char buf[48];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::snprintf(buf, sizeof(buf), "%.9g", double(values[r * cols + c]));
      f << buf << (c + 1 == cols ? "" : " ");
    }
    f << "\n";
  }
}

std::vector<std::vector<float>> read_text_matrix(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("text matrix: cannot open " + path);
  std::vector<std::vector<float>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<float> row;
    float v;
    while (ss >> v) row.push_back(v);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace lsttts::io

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

// On-disk formats. All binary files are little-endian.
//   mel file:     magic "LSTM0", u32 T, u32 n_mels, T*n_mels f32 row-major
//   feature file: magic "LSTF",  u32 T_f, u32 d_f,  T_f*d_f  f32 row-major
// Attention dumps are P5 graymaps (min-max scaled) plus plain-text matrices.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lsttts/tensor.hpp"

namespace lsttts::io {

void write_mel(const std::string& path, const Tensor& mel);
Tensor read_mel(const std::string& path);

void write_features(const std::string& path, const Tensor& features);
Tensor read_features(const std::string& path);

// Min-max scaling used for graymap output; a constant matrix maps to mid-gray.
std::vector<std::uint8_t> scale_to_bytes(const std::vector<float>& values);

void write_pgm(const std::string& path, const std::vector<float>& values, std::size_t rows,
               std::size_t cols);
struct Pgm {
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;
};
Pgm read_pgm(const std::string& path);

void write_text_matrix(const std::string& path, const std::vector<float>& values,
                       std::size_t rows, std::size_t cols);
std::vector<std::vector<float>> read_text_matrix(const std::string& path);

}  // namespace lsttts::io

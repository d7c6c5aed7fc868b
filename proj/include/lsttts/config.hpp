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

#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace lsttts {

// Architecture hyperparameters. `full_scale()` is the published-scale configuration;
// `desk()` is small enough to overfit a toy corpus in minutes on one core;
// `micro()` exists for finite-difference suites where every coordinate gets
// perturbed twice.
struct ModelConfig {
  std::size_t d_model = 256;
  std::size_t n_heads = 4;
  std::size_t n_blocks = 5;  // fusion blocks and decoder blocks both use N
  std::size_t ffn_width = 1024;
  std::size_t prenet_bottleneck = 32;
  std::size_t postnet_channels = 256;
  std::size_t postnet_kernel = 5;
  std::size_t postnet_layers = 5;
  std::size_t n_mels = 80;
  std::size_t d_f = 64;  // stand-in feature width, must stay below n_mels
  std::size_t gst_size = 64;
  std::size_t lst_size = 32;
  std::size_t pool_kernel = 8;
  std::size_t pool_stride = 4;
  std::size_t alpha = 15;  // minimum style length after random truncation
  double beta = 0.25;      // sampled-style scale factor
  std::size_t sample_len_lo = 80;
  std::size_t sample_len_hi = 160;
  double stop_threshold = 0.5;
  std::size_t max_frames_per_phoneme = 12;
  std::size_t vocab = 70;
  double dropout = 0.1;
  double prenet_dropout = 0.5;
  double stop_pos_weight = 6.0;
  std::uint64_t extractor_seed = 1234;

  static ModelConfig full_scale() { return ModelConfig{}; }

  static ModelConfig desk() {
    ModelConfig c;
    c.d_model = 64;
    c.n_heads = 2;
    c.n_blocks = 2;
    c.ffn_width = 128;
    c.prenet_bottleneck = 32;
    c.postnet_channels = 32;
    c.n_mels = 16;
    c.d_f = 12;
    c.gst_size = 64;
    c.lst_size = 32;
    c.vocab = 12;
    c.dropout = 0.0;
    return c;
  }

  static ModelConfig micro() {
    ModelConfig c;
    c.d_model = 8;
    c.n_heads = 2;
    c.n_blocks = 1;
    c.ffn_width = 16;
    c.prenet_bottleneck = 4;
    c.postnet_channels = 4;
    c.n_mels = 4;
    c.d_f = 3;
    c.gst_size = 4;
    c.lst_size = 4;
    c.vocab = 5;
    c.dropout = 0.0;
    c.alpha = 2;
    c.sample_len_lo = 3;
    c.sample_len_hi = 6;
    return c;
  }

  void validate() const {
    if (d_model == 0 || n_heads == 0 || n_blocks == 0 || n_mels == 0 || vocab == 0)
      throw std::invalid_argument("config: zero-sized dimension");
    if (d_model % n_heads != 0)
      throw std::invalid_argument("config: d_model " + std::to_string(d_model) +
                                  " not divisible by n_heads " + std::to_string(n_heads));
    if (d_f >= n_mels)
      throw std::invalid_argument("config: d_f " + std::to_string(d_f) +
                                  " must be smaller than n_mels " + std::to_string(n_mels));
    if (sample_len_lo > sample_len_hi || sample_len_lo == 0)
      throw std::invalid_argument("config: bad sample length range");
    if (dropout < 0.0 || dropout >= 1.0)
      throw std::invalid_argument("config: dropout outside [0,1)");
    if (postnet_layers < 2) throw std::invalid_argument("config: postnet needs >= 2 layers");
  }

  // std::map keeps the key order stable, which keeps serialized configs and
  // checkpoints byte-reproducible.
  std::map<std::string, std::string> to_kv() const {
    std::map<std::string, std::string> kv;
    kv["model.d_model"] = std::to_string(d_model);
    kv["model.n_heads"] = std::to_string(n_heads);
    kv["model.n_blocks"] = std::to_string(n_blocks);
    kv["model.ffn_width"] = std::to_string(ffn_width);
    kv["model.prenet_bottleneck"] = std::to_string(prenet_bottleneck);
    kv["model.postnet_channels"] = std::to_string(postnet_channels);
    kv["model.postnet_kernel"] = std::to_string(postnet_kernel);
    kv["model.postnet_layers"] = std::to_string(postnet_layers);
    kv["model.n_mels"] = std::to_string(n_mels);
    kv["model.d_f"] = std::to_string(d_f);
    kv["model.gst_size"] = std::to_string(gst_size);
    kv["model.lst_size"] = std::to_string(lst_size);
    kv["model.pool_kernel"] = std::to_string(pool_kernel);
    kv["model.pool_stride"] = std::to_string(pool_stride);
    kv["model.alpha"] = std::to_string(alpha);
    kv["model.beta"] = format_double(beta);
    kv["model.sample_len_lo"] = std::to_string(sample_len_lo);
    kv["model.sample_len_hi"] = std::to_string(sample_len_hi);
    kv["model.stop_threshold"] = format_double(stop_threshold);
    kv["model.max_frames_per_phoneme"] = std::to_string(max_frames_per_phoneme);
    kv["model.vocab"] = std::to_string(vocab);
    kv["model.dropout"] = format_double(dropout);
    kv["model.prenet_dropout"] = format_double(prenet_dropout);
    kv["model.stop_pos_weight"] = format_double(stop_pos_weight);
    kv["model.extractor_seed"] = std::to_string(extractor_seed);
    return kv;
  }

  static ModelConfig from_kv(const std::map<std::string, std::string>& kv) {
    ModelConfig c;
    auto want = [&](const std::string& key) -> const std::string& {
      auto it = kv.find(key);
      if (it == kv.end()) throw std::runtime_error("config: missing key '" + key + "'");
      return it->second;
    };
    c.d_model = std::stoul(want("model.d_model"));
    c.n_heads = std::stoul(want("model.n_heads"));
    c.n_blocks = std::stoul(want("model.n_blocks"));
    c.ffn_width = std::stoul(want("model.ffn_width"));
    c.prenet_bottleneck = std::stoul(want("model.prenet_bottleneck"));
    c.postnet_channels = std::stoul(want("model.postnet_channels"));
    c.postnet_kernel = std::stoul(want("model.postnet_kernel"));
    c.postnet_layers = std::stoul(want("model.postnet_layers"));
    c.n_mels = std::stoul(want("model.n_mels"));
    c.d_f = std::stoul(want("model.d_f"));
    c.gst_size = std::stoul(want("model.gst_size"));
    c.lst_size = std::stoul(want("model.lst_size"));
    c.pool_kernel = std::stoul(want("model.pool_kernel"));
    c.pool_stride = std::stoul(want("model.pool_stride"));
    c.alpha = std::stoul(want("model.alpha"));
    c.beta = std::stod(want("model.beta"));
    c.sample_len_lo = std::stoul(want("model.sample_len_lo"));
    c.sample_len_hi = std::stoul(want("model.sample_len_hi"));
    c.stop_threshold = std::stod(want("model.stop_threshold"));
    c.max_frames_per_phoneme = std::stoul(want("model.max_frames_per_phoneme"));
    c.vocab = std::stoul(want("model.vocab"));
    c.dropout = std::stod(want("model.dropout"));
    c.prenet_dropout = std::stod(want("model.prenet_dropout"));
    c.stop_pos_weight = std::stod(want("model.stop_pos_weight"));
    c.extractor_seed = std::stoull(want("model.extractor_seed"));
    c.validate();
    return c;
  }

  static std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  }
};

}  // namespace lsttts

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

#include "lsttts/runconfig.hpp"

#include <fstream>
#include <stdexcept>

namespace lsttts {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  const auto end = s.find_last_not_of(" \t\r");
  return begin == std::string::npos ? "" : s.substr(begin, end - begin + 1);
}

std::vector<std::pair<std::string, std::string>> parse_lines(std::istream& in,
                                                             const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: malformed line " + std::to_string(lineno) + " in " +
                                  origin + " (expected key = value)");
    pairs.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return pairs;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  auto as_size = [&] { return std::stoul(value); };
  auto as_long = [&] { return std::stol(value); };
  auto as_int = [&] { return std::stoi(value); };
  auto as_double = [&] { return std::stod(value); };
  auto as_u64 = [&] { return std::stoull(value); };

  if (key == "model.preset") {
    if (value == "desk")
      model = ModelConfig::desk();
    else if (value == "full")
      model = ModelConfig::full_scale();
    else if (value == "micro")
      model = ModelConfig::micro();
    else
      throw std::invalid_argument("config: unknown preset '" + value + "'");
  } else if (key == "model.seed") {
    model_seed = as_u64();
  } else if (key == "model.d_model") {
    model.d_model = as_size();
  } else if (key == "model.n_heads") {
    model.n_heads = as_size();
  } else if (key == "model.n_blocks") {
    model.n_blocks = as_size();
  } else if (key == "model.ffn_width") {
    model.ffn_width = as_size();
  } else if (key == "model.prenet_bottleneck") {
    model.prenet_bottleneck = as_size();
  } else if (key == "model.postnet_channels") {
    model.postnet_channels = as_size();
  } else if (key == "model.postnet_kernel") {
    model.postnet_kernel = as_size();
  } else if (key == "model.postnet_layers") {
    model.postnet_layers = as_size();
  } else if (key == "model.n_mels") {
    model.n_mels = as_size();
  } else if (key == "model.d_f") {
    model.d_f = as_size();
  } else if (key == "model.gst_size") {
    model.gst_size = as_size();
  } else if (key == "model.lst_size") {
    model.lst_size = as_size();
  } else if (key == "model.pool_kernel") {
    model.pool_kernel = as_size();
  } else if (key == "model.pool_stride") {
    model.pool_stride = as_size();
  } else if (key == "model.alpha") {
    model.alpha = as_size();
  } else if (key == "model.beta") {
    model.beta = as_double();
  } else if (key == "model.sample_len_lo") {
    model.sample_len_lo = as_size();
  } else if (key == "model.sample_len_hi") {
    model.sample_len_hi = as_size();
  } else if (key == "model.stop_threshold") {
    model.stop_threshold = as_double();
  } else if (key == "model.max_frames_per_phoneme") {
    model.max_frames_per_phoneme = as_size();
  } else if (key == "model.vocab") {
    model.vocab = as_size();
  } else if (key == "model.dropout") {
    model.dropout = as_double();
  } else if (key == "model.prenet_dropout") {
    model.prenet_dropout = as_double();
  } else if (key == "model.stop_pos_weight") {
    model.stop_pos_weight = as_double();
  } else if (key == "model.extractor_seed") {
    model.extractor_seed = as_u64();
  } else if (key == "corpus.n_speakers") {
    corpus.n_speakers = as_size();
  } else if (key == "corpus.n_utts") {
    corpus.n_utts = as_size();
  } else if (key == "corpus.vocab") {
    corpus.vocab = as_size();
  } else if (key == "corpus.n_mels") {
    corpus.n_mels = as_size();
  } else if (key == "corpus.rate_lo") {
    corpus.rate_lo = as_int();
  } else if (key == "corpus.rate_hi") {
    corpus.rate_hi = as_int();
  } else if (key == "corpus.energy_lo") {
    corpus.energy_lo = as_double();
  } else if (key == "corpus.energy_hi") {
    corpus.energy_hi = as_double();
  } else if (key == "corpus.noise_sd") {
    corpus.noise_sd = as_double();
  } else if (key == "corpus.min_phonemes") {
    corpus.min_phonemes = as_size();
  } else if (key == "corpus.max_phonemes") {
    corpus.max_phonemes = as_size();
  } else if (key == "corpus.n_texts") {
    corpus.n_texts = as_size();
  } else if (key == "corpus.seed") {
    corpus.seed = as_u64();
  } else if (key == "train.steps") {
    train.steps = as_long();
  } else if (key == "train.batch_size") {
    train.batch_size = as_size();
  } else if (key == "train.lr") {
    train.lr = as_double();
  } else if (key == "train.clip_norm") {
    train.clip_norm = as_double();
  } else if (key == "train.seed") {
    train.seed = as_u64();
  } else if (key == "train.log_interval") {
    train.log_interval = as_long();
  } else if (key == "train.ckpt_interval") {
    train.ckpt_interval = as_long();
  } else if (key == "train.out_dir") {
    train.out_dir = value;
  } else if (key == "eval.trials") {
    eval_trials = as_size();
  } else if (key == "eval.seed") {
    eval_seed = as_u64();
  } else if (key == "eval.fast_rate") {
    eval_fast_rate = as_int();
  } else if (key == "eval.slow_rate") {
    eval_slow_rate = as_int();
  } else {
    throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

RunConfig RunConfig::load(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  auto pairs = parse_lines(f, path);
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: malformed override '" + ov + "'");
    pairs.emplace_back(trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
  }

  RunConfig cfg;
  bool corpus_mels_set = false, corpus_vocab_set = false;
  for (const auto& [k, v] : pairs)
    if (k == "model.preset") cfg.set(k, v);
  for (const auto& [k, v] : pairs) {
    if (k == "model.preset") continue;
    cfg.set(k, v);
    if (k == "corpus.n_mels") corpus_mels_set = true;
    if (k == "corpus.vocab") corpus_vocab_set = true;
  }
  // the toy corpus must agree with the model unless told otherwise
  if (!corpus_mels_set) cfg.corpus.n_mels = cfg.model.n_mels;
  if (!corpus_vocab_set) cfg.corpus.vocab = cfg.model.vocab;
  cfg.model.validate();
  return cfg;
}

std::map<std::string, std::string> RunConfig::to_kv() const {
  auto kv = model.to_kv();
  kv["model.seed"] = std::to_string(model_seed);
  kv["corpus.n_speakers"] = std::to_string(corpus.n_speakers);
  kv["corpus.n_utts"] = std::to_string(corpus.n_utts);
  kv["corpus.vocab"] = std::to_string(corpus.vocab);
  kv["corpus.n_mels"] = std::to_string(corpus.n_mels);
  kv["corpus.rate_lo"] = std::to_string(corpus.rate_lo);
  kv["corpus.rate_hi"] = std::to_string(corpus.rate_hi);
  kv["corpus.energy_lo"] = ModelConfig::format_double(corpus.energy_lo);
  kv["corpus.energy_hi"] = ModelConfig::format_double(corpus.energy_hi);
  kv["corpus.noise_sd"] = ModelConfig::format_double(corpus.noise_sd);
  kv["corpus.min_phonemes"] = std::to_string(corpus.min_phonemes);
  kv["corpus.max_phonemes"] = std::to_string(corpus.max_phonemes);
  kv["corpus.n_texts"] = std::to_string(corpus.n_texts);
  kv["corpus.seed"] = std::to_string(corpus.seed);
  kv["train.steps"] = std::to_string(train.steps);
  kv["train.batch_size"] = std::to_string(train.batch_size);
  kv["train.lr"] = ModelConfig::format_double(train.lr);
  kv["train.clip_norm"] = ModelConfig::format_double(train.clip_norm);
  kv["train.seed"] = std::to_string(train.seed);
  kv["train.log_interval"] = std::to_string(train.log_interval);
  kv["train.ckpt_interval"] = std::to_string(train.ckpt_interval);
  kv["train.out_dir"] = train.out_dir;
  kv["eval.trials"] = std::to_string(eval_trials);
  kv["eval.seed"] = std::to_string(eval_seed);
  kv["eval.fast_rate"] = std::to_string(eval_fast_rate);
  kv["eval.slow_rate"] = std::to_string(eval_slow_rate);
  return kv;
}

std::string RunConfig::resolved_text() const {
  std::string out;
  for (const auto& [k, v] : to_kv()) out += k + " = " + v + "\n";
  return out;
}

}  // namespace lsttts

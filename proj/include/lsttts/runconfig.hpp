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

// Plain-text run configuration: `key = value` lines, '#' comments. Unknown
// keys are rejected; every run can log its fully-resolved configuration.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "lsttts/config.hpp"
#include "lsttts/corpus.hpp"
#include "lsttts/train.hpp"

namespace lsttts {

struct RunConfig {
  ModelConfig model = ModelConfig::desk();
  std::uint64_t model_seed = 1;
  CorpusSpec corpus;
  TrainConfig train;
  std::size_t eval_trials = 10;
  std::uint64_t eval_seed = 1;
  int eval_fast_rate = 2;
  int eval_slow_rate = 6;

  // Applies one `key = value` assignment; unknown keys throw.
  void set(const std::string& key, const std::string& value);

  // Reads a config file, then applies the extra `key=value` overrides in
  // order. `model.preset` lines are applied before everything else.
  static RunConfig load(const std::string& path,
                        const std::vector<std::string>& overrides = {});

  std::map<std::string, std::string> to_kv() const;
  std::string resolved_text() const;
};

}  // namespace lsttts

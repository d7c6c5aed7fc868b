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

// Desk-scale proxy metrics. Full-scale evaluation of this architecture needs
// a pretrained ASR model, an SER classifier and human raters; here the toy
// corpus carries its own ground truth (per-utterance rate and the template
// table), so style transfer and content integrity reduce to checkable
// statements about synthesized frame counts and template decoding.

#pragma once

#include <string>
#include <vector>

#include "lsttts/corpus.hpp"
#include "lsttts/model.hpp"

namespace lsttts {

struct MetricReport {
  std::string metric;
  double value = 0;
  double threshold = 0;
  bool passed = false;
  bool flagged = false;  // e.g. produced from an untrained model
  std::string note;
  std::size_t n_trials = 0;
  std::size_t n_skipped = 0;
  std::vector<std::uint64_t> seeds;       // one per trial
  std::vector<std::string> trial_lines;   // per-trial detail

  // Byte-stable rendering; reports regenerate identically from
  // (checkpoint, config, seeds).
  std::string to_text() const;
};

// Paired trials on one text: synthesize with a fast-rate reference and a
// slow-rate reference; the metric is the fraction of pairs whose fast output
// is strictly shorter. Pairs with identical references are skipped.
MetricReport eval_style_transfer(const Model& model, const Corpus& corpus, long trained_steps,
                                 std::size_t n_trials, std::uint64_t seed, int fast_rate = 2,
                                 int slow_rate = 6, double threshold = 0.8);

// Synthesizes each trial text with a content-mismatched style reference and
// template-decodes the output; the metric is mean phoneme accuracy.
MetricReport eval_content_integrity(const Model& model, const Corpus& corpus, long trained_steps,
                                    std::size_t n_trials, std::uint64_t seed,
                                    double threshold = 0.8);

// Per layer and head: a P5 graymap plus a plain-text matrix.
// Returns the paths written (layers x heads x 2 files).
std::vector<std::string> dump_attention(const std::vector<Tensor>& maps,
                                        const std::string& path_prefix);

}  // namespace lsttts

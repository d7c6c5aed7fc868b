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

// Synthetic corpus with controllable style factors. Every phoneme id owns a
// fixed seeded spectral template; an utterance's mel is the template sequence
// repeated `rate` frames per phoneme, scaled by `energy`, shifted by a
// per-speaker offset, plus optional Gaussian noise. Rate and energy are stored
// as ground truth so evaluation proxies can score against them.

#pragma once

#include <string>
#include <vector>

#include "lsttts/model.hpp"
#include "lsttts/rng.hpp"
#include "lsttts/tensor.hpp"

namespace lsttts {

struct Utterance {
  std::string utt_id;
  int speaker_id = 0;
  PhonemeSeq phonemes;
  Tensor mel;  // [rate * phonemes.size(), n_mels] before noise rounding
  int rate = 0;
  float energy = 1.0f;
  bool test_split = false;
};

struct CorpusSpec {
  std::size_t n_speakers = 2;
  std::size_t n_utts = 8;
  std::size_t vocab = 12;
  std::size_t n_mels = 16;
  int rate_lo = 2, rate_hi = 6;
  double energy_lo = 0.9, energy_hi = 1.1;
  double noise_sd = 0.02;
  std::size_t min_phonemes = 3, max_phonemes = 8;
  // Size of the shared text pool; 0 draws a fresh random text per utterance.
  // A pool smaller than n_utts makes texts recur at different rates, so
  // utterance duration cannot be predicted from the text alone.
  std::size_t n_texts = 0;
  std::uint64_t seed = 1;
};

struct Corpus {
  CorpusSpec spec;
  std::vector<Utterance> utterances;
  std::vector<std::vector<float>> templates;        // vocab x n_mels, unit norm
  std::vector<std::vector<float>> speaker_offsets;  // n_speakers x n_mels

  std::size_t n_mels() const { return spec.n_mels; }
  std::size_t vocab() const { return spec.vocab; }

  // every speaker needs a second utterance to draw the speaker reference from
  void validate() const;
  std::vector<std::size_t> utterances_with_rate(int rate) const;
};

// Deterministic in (seed, vocab, n_mels) alone so manifests can rebuild them.
std::vector<std::vector<float>> make_templates(std::uint64_t seed, std::size_t vocab,
                                               std::size_t n_mels);

Corpus generate_toy_corpus(const CorpusSpec& spec);

// Uniformly samples a style-target utterance plus a distinct same-speaker
// speaker-reference utterance. Returns (style index, speaker-ref index).
std::pair<std::size_t, std::size_t> sample_training_example(const Corpus& corpus, Rng& rng);

// Nearest-template decoding: estimate the frame rate from the frame count,
// average each phoneme window, match by cosine similarity (energy-invariant).
PhonemeSeq decode_mel_by_templates(const Tensor& mel, std::size_t n_phonemes,
                                   const std::vector<std::vector<float>>& templates);

double phoneme_accuracy(const PhonemeSeq& decoded, const PhonemeSeq& truth);

// Manifest (plain text, one record per line: utt_id speaker_id phoneme-ids
// rate energy) plus one mel file per utterance next to it.
void export_corpus(const Corpus& corpus, const std::string& dir);
Corpus import_corpus(const std::string& dir);

}  // namespace lsttts

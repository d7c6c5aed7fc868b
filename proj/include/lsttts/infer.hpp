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

// Autoregressive synthesis. Reference-conditioned styles (no truncation at
// inference), or sampled styles without any reference. Decoding is
// incremental with cached keys/values and is step-for-step equivalent to
// re-running the teacher-forced decoder on the growing prefix.

#pragma once

#include <optional>
#include <vector>

#include "lsttts/model.hpp"

namespace lsttts {

struct SynthesisRequest {
  PhonemeSeq phonemes;
  enum class Mode { kReference, kSampled } mode = Mode::kReference;
  std::optional<Tensor> style_ref_feats;    // [T_f, d_f], required in reference mode
  std::optional<Tensor> speaker_ref_feats;  // falls back to the stored training average
  std::uint64_t seed = 0;                   // sampled-style draws
  std::size_t max_frames = 0;               // 0 = 12 frames per phoneme
  float stop_threshold = -1.0f;             // < 0 = model config default
  int force_stop_after_frame = 0;           // test hook; > 0 forces a stop at that frame
};

struct SynthesisResult {
  Tensor mel;  // post-net refined output, [T, n_mels]
  std::optional<std::size_t> stop_frame;  // empty when the frame cap was hit
  std::size_t style_length_used = 0;
  std::vector<Tensor> fuse_weights;     // per fusion layer [heads, T_c, T_s]
  std::vector<Tensor> decoder_weights;  // per decoder layer [heads, T, T_c]
};

// Cached autoregression state; one instance per synthesis call.
struct DecodeState {
  Tensor fused;                                  // [T_c, d_model]
  std::vector<MhaT<float>::KV> cross_kv;         // per layer, projected once
  std::vector<Tensor> self_k, self_v;            // per layer, grow one row per step
  std::vector<Tensor> mel_pre_frames;            // [1, n_mels] each
  std::vector<std::vector<Tensor>> step_weights; // per layer, per step [h,1,T_c]
  std::size_t steps = 0;

  std::size_t cache_length() const { return steps; }
};

DecodeState init_decode_state(const Model& model, const Tensor& fused);

struct DecodeStepOut {
  Tensor mel_frame;  // [1, n_mels], post-net refined over the current prefix
  float stop_logit = 0;
};

// Feeds one decoder input frame (the go-frame first, then feedback frames)
// and returns the prediction for the next output frame.
DecodeStepOut incremental_decode_step(const Model& model, DecodeState& state,
                                      const Tensor& input_frame);

SynthesisResult synthesize(const Model& model, const SynthesisRequest& req);

}  // namespace lsttts

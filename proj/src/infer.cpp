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

#include "lsttts/infer.hpp"

#include <cmath>

namespace lsttts {

namespace {

// Single position-encoding row, scaled: sinusoid_table(pos+1, d) last row.
Tensor pe_row(const PositionalEncodingT<float>& pe, std::size_t pos) {
  auto table = sinusoid_table<float>(pos + 1, pe.d_model);
  auto row = slice(table, 0, pos, 1);
  return mul(row, pe.scale);
}

}  // namespace

DecodeState init_decode_state(const Model& model, const Tensor& fused) {
  if (fused.rank() != 2 || fused.shape()[1] != model.cfg.d_model)
    shape_error("incremental_decode", "fused content " + shape_to_string(fused.shape()) +
                                          " does not match d_model " +
                                          std::to_string(model.cfg.d_model));
  autograd::NoGradGuard no_grad;
  DecodeState state;
  state.fused = fused;
  for (const auto& block : model.decoder_blocks)
    state.cross_kv.push_back(block.cross_attn.project_kv(fused, fused));
  state.self_k.resize(model.decoder_blocks.size());
  state.self_v.resize(model.decoder_blocks.size());
  state.step_weights.resize(model.decoder_blocks.size());
  return state;
}

DecodeStepOut incremental_decode_step(const Model& model, DecodeState& state,
                                      const Tensor& input_frame) {
  if (input_frame.shape() != Shape{1, model.cfg.n_mels})
    shape_error("incremental_decode", "input frame " + shape_to_string(input_frame.shape()) +
                                          " must be [1," + std::to_string(model.cfg.n_mels) + "]");
  if (state.cross_kv.size() != model.decoder_blocks.size())
    throw std::runtime_error("incremental_decode: state does not match the model");
  autograd::NoGradGuard no_grad;
  ForwardCtxT<float> ctx;  // inference: no dropout

  auto x = add(model.prenet.forward(input_frame), pe_row(model.decoder_pe, state.steps));
  for (std::size_t l = 0; l < model.decoder_blocks.size(); ++l) {
    const auto& block = model.decoder_blocks[l];
    auto kv_new = block.self_attn.project_kv(x, x);
    state.self_k[l] =
        state.steps == 0 ? kv_new.k : concat<float>({state.self_k[l], kv_new.k}, 0);
    state.self_v[l] =
        state.steps == 0 ? kv_new.v : concat<float>({state.self_v[l], kv_new.v}, 0);
    auto sa = block.self_attn.forward_projected(x, {state.self_k[l], state.self_v[l]});
    x = block.norm1.forward(add(x, sa.out));
    auto ca = block.cross_attn.forward_projected(x, state.cross_kv[l]);
    state.step_weights[l].push_back(ca.weights);
    x = block.norm2.forward(add(x, ca.out));
    x = block.norm3.forward(add(x, block.ffn.forward(x)));
  }
  auto mel_pre = model.mel_head.forward(x);
  const float stop_logit = model.stop_head.forward(x).values()[0];
  state.mel_pre_frames.push_back(mel_pre);
  ++state.steps;

  // Post-net over the available prefix; the returned frame is its last row.
  auto prefix = state.mel_pre_frames.size() == 1 ? state.mel_pre_frames[0]
                                                 : concat(state.mel_pre_frames, 0);
  auto post = model.postnet.forward(prefix);
  return {slice(post, 0, state.steps - 1, 1), stop_logit};
}

SynthesisResult synthesize(const Model& model, const SynthesisRequest& req) {
  if (req.phonemes.empty()) throw std::invalid_argument("synthesize: empty phoneme sequence");
  if (req.mode == SynthesisRequest::Mode::kReference && !req.style_ref_feats)
    throw std::invalid_argument("synthesize: reference mode needs style reference features");
  if (req.mode == SynthesisRequest::Mode::kSampled && req.style_ref_feats)
    throw std::invalid_argument("synthesize: sampled mode must not carry a style reference");

  autograd::NoGradGuard no_grad;
  ForwardCtxT<float> ctx;
  Rng rng(req.seed);

  SpeakerEmbeddingT<float> spk =
      req.speaker_ref_feats
          ? model.style.speaker_embedding({*req.speaker_ref_feats, "speaker_ref"})
          : model.style.average_speaker();

  StyleRepresentationT<float> style_rep;
  if (req.mode == SynthesisRequest::Mode::kReference) {
    auto lst = model.style.local_style_embeddings({*req.style_ref_feats, "style_ref"});
    // no truncation at inference
    style_rep = combine_style(spk, smooth_styles(lst, model.cfg.pool_kernel,
                                                 model.cfg.pool_stride));
  } else {
    style_rep = sample_styles(model.style.lst_tokens, spk, float(model.cfg.beta),
                              model.cfg.sample_len_lo, model.cfg.sample_len_hi, rng);
  }

  SynthesisResult result;
  result.style_length_used = style_rep.frames.shape()[0];
  auto fused = model.fuse(model.content_encode(req.phonemes), style_rep, ctx,
                          &result.fuse_weights);
  auto state = init_decode_state(model, fused);

  const std::size_t max_frames =
      req.max_frames > 0 ? req.max_frames
                         : model.cfg.max_frames_per_phoneme * req.phonemes.size();
  const float threshold =
      req.stop_threshold >= 0 ? req.stop_threshold : float(model.cfg.stop_threshold);

  Tensor feedback = Tensor::zeros({1, model.cfg.n_mels});  // go-frame
  for (std::size_t t = 0; t < max_frames; ++t) {
    auto step = incremental_decode_step(model, state, feedback);
    feedback = step.mel_frame;
    const bool forced = req.force_stop_after_frame > 0 &&
                        t + 1 == std::size_t(req.force_stop_after_frame);
    if (forced || stable_sigmoid(step.stop_logit) > threshold) {
      result.stop_frame = t;
      break;
    }
  }

  // Final output: post-net refinement over the full generated sequence.
  auto mel_pre = state.mel_pre_frames.size() == 1 ? state.mel_pre_frames[0]
                                                  : concat(state.mel_pre_frames, 0);
  result.mel = model.postnet.forward(mel_pre);
  for (std::size_t l = 0; l < state.step_weights.size(); ++l)
    result.decoder_weights.push_back(concat(state.step_weights[l], 1));
  return result;
}

}  // namespace lsttts

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

// Synthesis model: content encoder, content-style fusion blocks, the
// autoregressive mel decoder, the training loss, and the assembled system.

#pragma once

#include <string>
#include <vector>

#include "lsttts/config.hpp"
#include "lsttts/nn.hpp"
#include "lsttts/style.hpp"
#include "lsttts/tensor.hpp"

namespace lsttts {

using PhonemeSeq = std::vector<int>;

// Encoder block extended with style cross-attention: self-attention sublayer,
// feed-forward sublayer, then the cross-attention result is added back into
// the content stream (post-LN residuals throughout). The cross-attention
// output projection starts at zero, so a fresh model is exactly the
// content-only encoder; with use_style = false the cross term is skipped and
// replaced by zeros, which is the SPK-ablation baseline.
template <typename S>
struct FuseBlockT {
  MhaT<S> self_attn;
  LayerNormT<S> norm1;
  FeedForwardT<S> ffn;
  LayerNormT<S> norm2;
  MhaT<S> cross_attn;
  LayerNormT<S> norm3;

  FuseBlockT() = default;
  FuseBlockT(const ModelConfig& cfg, Rng& rng)
      : self_attn(cfg.d_model, cfg.n_heads, rng),
        norm1(cfg.d_model),
        ffn(cfg.d_model, cfg.ffn_width, rng),
        norm2(cfg.d_model),
        cross_attn(cfg.d_model, cfg.n_heads, rng, /*zero_out_proj=*/true),
        norm3(cfg.d_model) {}

  TensorT<S> forward(const TensorT<S>& x_in, const StyleRepresentationT<S>& style,
                     const ForwardCtxT<S>& ctx, bool use_style,
                     TensorT<S>* cross_weights = nullptr) const {
    auto x = x_in;
    auto sa = self_attn.forward(x, x, x);
    x = norm1.forward(add(x, dropout(sa.out, ctx)));
    x = norm2.forward(add(x, dropout(ffn.forward(x), ctx)));
    TensorT<S> cross_term;
    if (use_style) {
      if (!style.includes_speaker)
        throw std::invalid_argument("fuse_block: style lacks the speaker embedding");
      if (style.frames.shape()[0] == 0) throw std::runtime_error("fuse_block: empty style");
      auto ca = cross_attn.forward(x, style.frames, style.frames);
      if (cross_weights) *cross_weights = ca.weights;
      cross_term = dropout(ca.out, ctx);
    } else {
      cross_term = TensorT<S>::zeros(x.shape());
    }
    return norm3.forward(add(x, cross_term));
  }

  void register_params(ParamSetT<S>& ps, const std::string& prefix) {
    self_attn.register_params(ps, prefix + ".self_attn");
    norm1.register_params(ps, prefix + ".norm1");
    ffn.register_params(ps, prefix + ".ffn");
    norm2.register_params(ps, prefix + ".norm2");
    cross_attn.register_params(ps, prefix + ".cross_attn");
    norm3.register_params(ps, prefix + ".norm3");
  }
};

template <typename S>
struct DecoderBlockT {
  MhaT<S> self_attn;
  LayerNormT<S> norm1;
  MhaT<S> cross_attn;
  LayerNormT<S> norm2;
  FeedForwardT<S> ffn;
  LayerNormT<S> norm3;

  DecoderBlockT() = default;
  DecoderBlockT(const ModelConfig& cfg, Rng& rng)
      : self_attn(cfg.d_model, cfg.n_heads, rng),
        norm1(cfg.d_model),
        // Unlike the fusion blocks this is the standard encoder-decoder
        // attention of the baseline architecture, so it starts live.
        cross_attn(cfg.d_model, cfg.n_heads, rng),
        norm2(cfg.d_model),
        ffn(cfg.d_model, cfg.ffn_width, rng),
        norm3(cfg.d_model) {}

  void register_params(ParamSetT<S>& ps, const std::string& prefix) {
    self_attn.register_params(ps, prefix + ".self_attn");
    norm1.register_params(ps, prefix + ".norm1");
    cross_attn.register_params(ps, prefix + ".cross_attn");
    norm2.register_params(ps, prefix + ".norm2");
    ffn.register_params(ps, prefix + ".ffn");
    norm3.register_params(ps, prefix + ".norm3");
  }
};

template <typename S>
struct DecoderOutputT {
  TensorT<S> mel_pre;      // [T, n_mels]
  TensorT<S> mel_post;     // mel_pre + post-net residual
  TensorT<S> stop_logits;  // [T]
  std::vector<TensorT<S>> cross_weights;  // per decoder layer [heads, T, T_c]
};

template <typename S>
struct LossTermsT {
  TensorT<S> total, pre, post, stop;
};

template <typename S>
struct TrainingForwardT {
  LossTermsT<S> loss;
  DecoderOutputT<S> decoder;
  std::vector<TensorT<S>> fuse_weights;  // per fusion layer [heads, T_c, T_s]
  SpeakerEmbeddingT<S> speaker;          // for the running training average
  std::size_t style_length = 0;          // frames after smoothing/truncation
};

template <typename S>
struct ModelT {
  ModelConfig cfg;
  StyleNetworkT<S> style;
  StandInExtractorT<S> extractor;

  TensorT<S> phoneme_table;  // [vocab, d_model]
  LayerNormT<S> content_norm;
  PositionalEncodingT<S> content_pe;
  std::vector<FuseBlockT<S>> fuse_blocks;

  PrenetT<S> prenet;
  PositionalEncodingT<S> decoder_pe;
  std::vector<DecoderBlockT<S>> decoder_blocks;
  LinearT<S> mel_head;
  LinearT<S> stop_head;
  PostnetT<S> postnet;

  // false = SPK ablation: fusion blocks ignore the style stream entirely.
  bool use_style = true;

  ModelT() = default;
  ModelT(const ModelConfig& config, std::uint64_t seed) : cfg(config) {
    cfg.validate();
    Rng rng(seed);
    style = StyleNetworkT<S>(cfg, rng);
    extractor = StandInExtractorT<S>(cfg.n_mels, cfg.d_f, cfg.extractor_seed);
    phoneme_table = TensorT<S>::randn({cfg.vocab, cfg.d_model}, rng,
                                      1.0 / std::sqrt(double(cfg.d_model)));
    phoneme_table.set_requires_grad(true);
    content_norm = LayerNormT<S>(cfg.d_model);
    content_pe = PositionalEncodingT<S>(cfg.d_model);
    for (std::size_t i = 0; i < cfg.n_blocks; ++i) fuse_blocks.emplace_back(cfg, rng);
    prenet = PrenetT<S>(cfg.n_mels, cfg.prenet_bottleneck, cfg.d_model, rng,
                        S(cfg.prenet_dropout));
    decoder_pe = PositionalEncodingT<S>(cfg.d_model);
    for (std::size_t i = 0; i < cfg.n_blocks; ++i) decoder_blocks.emplace_back(cfg, rng);
    mel_head = LinearT<S>(cfg.d_model, cfg.n_mels, rng);
    stop_head = LinearT<S>(cfg.d_model, 1, rng);
    postnet = PostnetT<S>(cfg.n_mels, cfg.postnet_channels, cfg.postnet_kernel,
                          cfg.postnet_layers, rng);
  }

  // phoneme embedding -> layer norm -> + positional encoding
  TensorT<S> content_encode(const PhonemeSeq& ids) const {
    if (ids.empty()) throw std::invalid_argument("content_encode: empty phoneme sequence");
    auto x = content_norm.forward(embedding_lookup(ids, phoneme_table));
    return add(x, content_pe.forward(ids.size()));
  }

  // N fusion blocks, each fed the same style representation.
  TensorT<S> fuse(const TensorT<S>& content, const StyleRepresentationT<S>& style_rep,
                  const ForwardCtxT<S>& ctx,
                  std::vector<TensorT<S>>* weights_out = nullptr) const {
    auto x = content;
    for (const auto& block : fuse_blocks) {
      TensorT<S> w;
      x = block.forward(x, style_rep, ctx, use_style, weights_out ? &w : nullptr);
      if (weights_out) weights_out->push_back(w);
    }
    return x;
  }

  // Teacher-forced decoding over the shifted target: the first input frame is
  // the all-zero go-frame, self-attention is causally masked.
  DecoderOutputT<S> decoder_forward(const TensorT<S>& target_mel, const TensorT<S>& fused,
                                    const ForwardCtxT<S>& ctx) const {
    if (target_mel.rank() != 2 || target_mel.shape()[1] != cfg.n_mels)
      shape_error("decoder_forward", "target " + shape_to_string(target_mel.shape()) +
                                         " does not match n_mels " + std::to_string(cfg.n_mels));
    const std::size_t T = target_mel.shape()[0];
    if (T == 0) throw std::invalid_argument("decoder_forward: empty target");
    auto go = TensorT<S>::zeros({1, cfg.n_mels});
    auto shifted = T == 1 ? go : concat<S>({go, slice(target_mel, 0, 0, T - 1)}, 0);
    auto mask = causal_mask<S>(T);

    DecoderOutputT<S> out;
    auto x = add(prenet.forward(shifted, ctx), decoder_pe.forward(T));
    for (const auto& block : decoder_blocks) {
      auto sa = block.self_attn.forward(x, x, x, &mask);
      x = block.norm1.forward(add(x, dropout(sa.out, ctx)));
      auto ca = block.cross_attn.forward(x, fused, fused);
      out.cross_weights.push_back(ca.weights);
      x = block.norm2.forward(add(x, dropout(ca.out, ctx)));
      x = block.norm3.forward(add(x, dropout(block.ffn.forward(x), ctx)));
    }
    out.mel_pre = mel_head.forward(x);
    out.stop_logits = reshape(stop_head.forward(x), {T});
    out.mel_post = postnet.forward(out.mel_pre);
    return out;
  }

  // L1 on both decoder outputs plus the weighted stop-token BCE.
  LossTermsT<S> tts_loss(const DecoderOutputT<S>& out, const TensorT<S>& target,
                         const TensorT<S>& stop_targets, const TensorT<S>* frame_mask,
                         const TensorT<S>* mel_mask) const {
    if (out.mel_pre.shape() != target.shape())
      shape_error("tts_loss", "prediction " + shape_to_string(out.mel_pre.shape()) +
                                  " vs target " + shape_to_string(target.shape()));
    LossTermsT<S> terms;
    terms.pre = l1_loss(out.mel_pre, target, mel_mask);
    terms.post = l1_loss(out.mel_post, target, mel_mask);
    terms.stop =
        bce_with_logits(out.stop_logits, stop_targets, S(cfg.stop_pos_weight), frame_mask);
    terms.total = add(add(terms.pre, terms.post), terms.stop);
    return terms;
  }

  // Full training-mode forward: style path with truncation, fusion, the
  // teacher-forced decoder, and the loss against the style reference's mel.
  TrainingForwardT<S> forward_training(const FeatureSequenceT<S>& style_feat,
                                       const FeatureSequenceT<S>& speaker_feat,
                                       const PhonemeSeq& phonemes, const TensorT<S>& target_mel,
                                       Rng& rng, bool training = true,
                                       bool truncate = true) const {
    TrainingForwardT<S> result;
    ForwardCtxT<S> ctx{training, &rng, S(cfg.dropout)};
    result.speaker = style.speaker_embedding(speaker_feat);
    auto lst_seq = style.local_style_embeddings(style_feat);
    auto smoothed = smooth_styles(lst_seq, cfg.pool_kernel, cfg.pool_stride);
    if (truncate) smoothed = truncate_style(smoothed, cfg.alpha, rng);
    auto combined = combine_style(result.speaker, smoothed);
    result.style_length = combined.frames.shape()[0];

    auto fused = fuse(content_encode(phonemes), combined, ctx, &result.fuse_weights);
    result.decoder = decoder_forward(target_mel, fused, ctx);

    const std::size_t T = target_mel.shape()[0];
    auto stop_targets = TensorT<S>::zeros({T});
    stop_targets.mutable_values()[T - 1] = S(1);
    result.loss = tts_loss(result.decoder, target_mel, stop_targets, nullptr, nullptr);
    return result;
  }

  ParamSetT<S> parameters() {
    ParamSetT<S> ps;
    style.register_params(ps, "style");
    ps.add("content.embedding", phoneme_table);
    content_norm.register_params(ps, "content.norm");
    content_pe.register_params(ps, "content.pe");
    for (std::size_t i = 0; i < fuse_blocks.size(); ++i)
      fuse_blocks[i].register_params(ps, "fuse.block" + std::to_string(i));
    prenet.register_params(ps, "decoder.prenet");
    decoder_pe.register_params(ps, "decoder.pe");
    for (std::size_t i = 0; i < decoder_blocks.size(); ++i)
      decoder_blocks[i].register_params(ps, "decoder.block" + std::to_string(i));
    mel_head.register_params(ps, "decoder.mel_head");
    stop_head.register_params(ps, "decoder.stop_head");
    postnet.register_params(ps, "decoder.postnet");
    return ps;
  }
};

using Model = ModelT<float>;

}  // namespace lsttts

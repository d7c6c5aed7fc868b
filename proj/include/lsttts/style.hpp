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

// Style network: reference feature extraction, the global-token speaker
// embedding, the local-token style sequence, smoothing, speaker broadcast-add,
// training-time truncation and reference-free style sampling.

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "lsttts/config.hpp"
#include "lsttts/nn.hpp"
#include "lsttts/rng.hpp"
#include "lsttts/tensor.hpp"

namespace lsttts {

template <typename S>
struct FeatureSequenceT {
  TensorT<S> frames;      // [T_f, d_f]
  std::string source_id;  // utterance identity, bookkeeping only
};

template <typename S>
struct SpeakerEmbeddingT {
  TensorT<S> vector;  // [d_model]
};

template <typename S>
struct StyleRepresentationT {
  TensorT<S> frames;  // [T_s, d_model]
  bool includes_speaker = false;
};

// Reference feature extraction interface. The pretrained model this stands in
// for is frozen, so implementations produce constants outside the autodiff
// graph and contribute no trainable parameters.
template <typename S>
class FeatureExtractorT {
 public:
  virtual ~FeatureExtractorT() = default;
  virtual FeatureSequenceT<S> extract(const TensorT<S>& mel,
                                      const std::string& source_id) const = 0;
  virtual std::size_t feature_dim() const = 0;
};

// Frozen seeded random linear projection of mel frames followed by tanh.
// d_f < n_mels keeps the map non-invertible, so reference frames cannot be
// reconstructed from the features.
template <typename S>
class StandInExtractorT final : public FeatureExtractorT<S> {
 public:
  StandInExtractorT() = default;
  StandInExtractorT(std::size_t n_mels, std::size_t d_f, std::uint64_t seed)
      : n_mels_(n_mels), d_f_(d_f) {
    if (d_f >= n_mels)
      shape_error("extractor", "d_f " + std::to_string(d_f) + " must be below n_mels " +
                                   std::to_string(n_mels));
    Rng rng(seed);
    proj_ = TensorT<S>::randn({n_mels, d_f}, rng, 1.0 / std::sqrt(double(n_mels)));
  }

  FeatureSequenceT<S> extract(const TensorT<S>& mel,
                              const std::string& source_id) const override {
    if (mel.rank() != 2 || mel.shape()[1] != n_mels_)
      shape_error("extractor", "mel " + shape_to_string(mel.shape()) + " does not match " +
                                   std::to_string(n_mels_) + " mel bins");
    if (mel.shape()[0] == 0) throw std::runtime_error("extractor: empty reference");
    autograd::NoGradGuard frozen;
    auto feats = tanh_op(matmul(mel, proj_));
    return {feats, source_id};
  }

  std::size_t feature_dim() const override { return d_f_; }

  const TensorT<S>& projection() const { return proj_; }
  // Checkpoint restore: the projection rides along so a saved model does not
  // depend on the seed that built it.
  void set_projection(const TensorT<S>& p) { proj_ = p; }

 private:
  std::size_t n_mels_ = 0, d_f_ = 0;
  TensorT<S> proj_;
};

template <typename S>
struct StyleNetworkT {
  std::size_t d_model = 0;
  LinearT<S> spk_in, lst_in;
  LstmParamsT<S> spk_lstm, lst_lstm;
  MhaT<S> gst_attn, lst_attn;
  TensorT<S> gst_tokens;  // [gst_size, d_model]
  TensorT<S> lst_tokens;  // [lst_size, d_model]

  // Running average of training speaker embeddings; single-speaker inference
  // uses it in place of a speaker reference. Not a trainable parameter.
  TensorT<S> avg_speaker;
  double avg_count = 0;

  StyleNetworkT() = default;
  StyleNetworkT(const ModelConfig& cfg, Rng& rng)
      : d_model(cfg.d_model),
        spk_in(cfg.d_f, cfg.d_model, rng),
        lst_in(cfg.d_f, cfg.d_model, rng),
        spk_lstm(cfg.d_model, cfg.d_model, rng),
        lst_lstm(cfg.d_model, cfg.d_model, rng),
        gst_attn(cfg.d_model, cfg.n_heads, rng),
        lst_attn(cfg.d_model, cfg.n_heads, rng) {
    gst_tokens = TensorT<S>::randn({cfg.gst_size, cfg.d_model}, rng,
                                   0.5 / std::sqrt(double(cfg.d_model)));
    lst_tokens = TensorT<S>::randn({cfg.lst_size, cfg.d_model}, rng,
                                   0.5 / std::sqrt(double(cfg.d_model)));
    gst_tokens.set_requires_grad(true);
    lst_tokens.set_requires_grad(true);
    avg_speaker = TensorT<S>::zeros({cfg.d_model});
  }

  // linear+relu -> LSTM -> mean over time -> query against the GST codebook.
  SpeakerEmbeddingT<S> speaker_embedding(const FeatureSequenceT<S>& feat) const {
    if (!feat.frames.defined() || feat.frames.shape()[0] == 0)
      throw std::runtime_error("speaker_embedding: empty feature sequence");
    auto h = lstm_forward(relu(spk_in.forward(feat.frames)), spk_lstm);
    auto query = mean_axis(h, 0, /*keepdim=*/true);  // [1, d]
    auto attended = gst_attn.forward(query, gst_tokens, gst_tokens);
    return {reshape(attended.out, {d_model})};
  }

  // linear+relu -> LSTM -> per-step queries against the LST codebook.
  StyleRepresentationT<S> local_style_embeddings(const FeatureSequenceT<S>& feat,
                                                 TensorT<S>* weights_out = nullptr) const {
    if (!feat.frames.defined() || feat.frames.shape()[0] == 0)
      throw std::runtime_error("local_style_embeddings: empty feature sequence");
    auto h = lstm_forward(relu(lst_in.forward(feat.frames)), lst_lstm);
    auto attended = lst_attn.forward(h, lst_tokens, lst_tokens);
    if (weights_out) *weights_out = attended.weights;
    return {attended.out, /*includes_speaker=*/false};
  }

  void update_avg_speaker(const std::vector<S>& embedding) {
    avg_count += 1;
    auto& acc = avg_speaker.mutable_values();
    for (std::size_t i = 0; i < acc.size(); ++i)
      acc[i] += (embedding[i] - acc[i]) / S(avg_count);
  }

  SpeakerEmbeddingT<S> average_speaker() const {
    if (avg_count <= 0)
      throw std::runtime_error(
          "speaker_embedding: no speaker reference and no stored training average");
    return {avg_speaker};
  }

  void register_params(ParamSetT<S>& ps, const std::string& prefix) {
    spk_in.register_params(ps, prefix + ".spk_in");
    lst_in.register_params(ps, prefix + ".lst_in");
    spk_lstm.register_params(ps, prefix + ".spk_lstm");
    lst_lstm.register_params(ps, prefix + ".lst_lstm");
    gst_attn.register_params(ps, prefix + ".gst_attn");
    lst_attn.register_params(ps, prefix + ".lst_attn");
    ps.add(prefix + ".gst_tokens", gst_tokens);
    ps.add(prefix + ".lst_tokens", lst_tokens);
  }
};

template <typename S>
StyleRepresentationT<S> smooth_styles(const StyleRepresentationT<S>& s, std::size_t kernel,
                                      std::size_t stride) {
  if (s.includes_speaker)
    throw std::invalid_argument("smooth_styles: expected a pre-speaker style sequence");
  return {avg_pool_1d(s.frames, kernel, stride), false};
}

template <typename S>
StyleRepresentationT<S> combine_style(const SpeakerEmbeddingT<S>& spk,
                                      const StyleRepresentationT<S>& s) {
  if (s.includes_speaker)
    throw std::invalid_argument("combine_style: speaker embedding already added");
  if (spk.vector.shape() != Shape{s.frames.shape()[1]})
    shape_error("combine_style", "speaker dim " + shape_to_string(spk.vector.shape()) +
                                     " vs style frames " + shape_to_string(s.frames.shape()));
  return {add(s.frames, spk.vector), true};
}

// Training-time truncation: keep a uniformly random prefix of length
// l ~ U[min(alpha, T_s), T_s]. Full length is kept when T_s <= alpha.
template <typename S>
StyleRepresentationT<S> truncate_style(const StyleRepresentationT<S>& s, std::size_t alpha,
                                       Rng& rng) {
  const std::size_t total = s.frames.shape()[0];
  const std::size_t lo = std::min(alpha, total);
  const auto keep = std::size_t(rng.uniform_int(std::int64_t(lo), std::int64_t(total)));
  if (keep == total) return s;
  return {slice(s.frames, 0, 0, keep), s.includes_speaker};
}

// Reference-free styles: length L ~ U[lo, hi]; every frame is
// beta * (uniformly drawn codebook row) + speaker vector, computed exactly in
// that form. Frames are constants; sampling happens outside the graph.
template <typename S>
StyleRepresentationT<S> sample_styles(const TensorT<S>& lst_tokens,
                                      const SpeakerEmbeddingT<S>& spk, S beta, std::size_t lo,
                                      std::size_t hi, Rng& rng) {
  if (lst_tokens.rank() != 2 || lst_tokens.shape()[0] == 0)
    throw std::runtime_error("sample_styles: empty codebook");
  if (lo > hi || lo == 0) shape_error("sample_styles", "bad length range");
  const std::size_t K = lst_tokens.shape()[0];
  const std::size_t d = lst_tokens.shape()[1];
  const auto L = std::size_t(rng.uniform_int(std::int64_t(lo), std::int64_t(hi)));
  auto frames = TensorT<S>::zeros({L, d});
  auto& out = frames.mutable_values();
  const auto& tokens = lst_tokens.values();
  const auto& spk_v = spk.vector.values();
  for (std::size_t t = 0; t < L; ++t) {
    const auto row = std::size_t(rng.uniform_int(0, std::int64_t(K) - 1));
    for (std::size_t k = 0; k < d; ++k) out[t * d + k] = beta * tokens[row * d + k] + spk_v[k];
  }
  return {frames, true};
}

}  // namespace lsttts

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <thread>

#include "lsttts/infer.hpp"
#include "support.hpp"

using lsttts::Model;
using lsttts::ModelConfig;
using lsttts::Rng;
using lsttts::SynthesisRequest;
using lsttts::Tensor;

namespace {

ModelConfig infer_config() {
  auto cfg = ModelConfig::micro();
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_blocks = 2;
  cfg.n_mels = 6;
  cfg.d_f = 4;
  cfg.vocab = 6;
  cfg.sample_len_lo = 4;
  cfg.sample_len_hi = 9;
  return cfg;
}

Model make_model(std::uint64_t seed = 3) {
  Model model(infer_config(), seed);
  // wake the fusion cross attention so styles actually matter
  Rng rng(seed + 100);
  for (auto& block : model.fuse_blocks)
    for (auto& v : block.cross_attn.wo.w.mutable_values()) v = float(rng.normal(0.0, 0.2));
  return model;
}

Tensor style_feats(const Model& model, std::uint64_t seed, std::size_t frames = 24) {
  Rng rng(seed);
  auto mel = Tensor::randn({frames, model.cfg.n_mels}, rng, 0.5);
  return model.extractor.extract(mel, "ref").frames;
}

}  // namespace

TEST_CASE("incremental decoding equals full-prefix decoder_forward up to 32 frames") {
  auto model = make_model();
  lsttts::ForwardCtxT<float> ctx;
  Rng rng(7);
  const std::size_t T = 32;
  auto ground_truth = Tensor::randn({T, model.cfg.n_mels}, rng, 0.5);
  auto style = lsttts::StyleRepresentationT<float>{
      Tensor::randn({5, model.cfg.d_model}, rng), true};
  auto fused = model.fuse(model.content_encode({1, 4, 2, 0}), style, ctx);

  auto state = lsttts::init_decode_state(model, fused);
  CHECK(state.cache_length() == 0);  // go-frame only, nothing consumed yet

  for (std::size_t k = 1; k <= T; ++k) {
    // feed frame k-1's teacher-forced input: go for k=1, else ground truth k-2
    auto input = k == 1 ? Tensor::zeros({1, model.cfg.n_mels})
                        : lsttts::slice(ground_truth, 0, k - 2, 1);
    auto step = lsttts::incremental_decode_step(model, state, input);
    CHECK(state.cache_length() == k);  // exactly one cached row per step

    std::vector<float> prefix_vals(ground_truth.values().begin(),
                                   ground_truth.values().begin() +
                                       std::ptrdiff_t(k * model.cfg.n_mels));
    auto prefix = Tensor::from_data({k, model.cfg.n_mels}, prefix_vals);
    auto batch_out = model.decoder_forward(prefix, fused, ctx);

    // last-frame outputs must agree within 1e-5
    for (std::size_t c = 0; c < model.cfg.n_mels; ++c)
      CHECK(std::abs(double(step.mel_frame.at({0, c})) -
                     double(batch_out.mel_post.at({k - 1, c}))) < 1e-5);
    const auto logit_batch = batch_out.stop_logits.values()[k - 1];
    CHECK(std::abs(double(step.stop_logit) - double(logit_batch)) < 1e-5);
  }
}

TEST_CASE("first-frame outputs match between teacher forcing and incremental decoding") {
  auto model = make_model(5);
  lsttts::ForwardCtxT<float> ctx;
  Rng rng(11);
  auto target = Tensor::randn({6, model.cfg.n_mels}, rng, 0.5);
  auto style = lsttts::StyleRepresentationT<float>{
      Tensor::randn({3, model.cfg.d_model}, rng), true};
  auto fused = model.fuse(model.content_encode({2, 3}), style, ctx);

  auto dec = model.decoder_forward(target, fused, ctx);
  auto state = lsttts::init_decode_state(model, fused);
  auto step = lsttts::incremental_decode_step(model, state, Tensor::zeros({1, model.cfg.n_mels}));
  for (std::size_t c = 0; c < model.cfg.n_mels; ++c)
    CHECK(std::abs(double(step.mel_frame.at({0, c})) - double(dec.mel_post.at({0, c}))) < 1e-5);
}

TEST_CASE("forced stop at the first frame yields a one-frame output") {
  auto model = make_model();
  SynthesisRequest req;
  req.phonemes = {1, 2, 3};
  req.mode = SynthesisRequest::Mode::kReference;
  req.style_ref_feats = style_feats(model, 13);
  req.speaker_ref_feats = style_feats(model, 14);
  req.force_stop_after_frame = 1;
  auto result = lsttts::synthesize(model, req);
  CHECK(result.mel.shape()[0] == 1);
  REQUIRE(result.stop_frame.has_value());
  CHECK(*result.stop_frame == 0);
}

TEST_CASE("an untrained model hits the frame cap and reports no stop frame") {
  auto model = make_model();
  SynthesisRequest req;
  req.phonemes = {0, 1};
  req.mode = SynthesisRequest::Mode::kReference;
  req.style_ref_feats = style_feats(model, 15);
  req.speaker_ref_feats = style_feats(model, 16);
  req.max_frames = 9;
  auto result = lsttts::synthesize(model, req);
  CHECK(result.mel.shape()[0] == 9);
  CHECK(!result.stop_frame.has_value());
  CHECK(result.fuse_weights.size() == model.cfg.n_blocks);
  CHECK(result.decoder_weights.size() == model.cfg.n_blocks);
  CHECK(result.decoder_weights[0].shape() ==
        lsttts::Shape{model.cfg.n_heads, 9, req.phonemes.size()});
}

TEST_CASE("reference mode is deterministic given identical references and seed") {
  auto model = make_model();
  SynthesisRequest req;
  req.phonemes = {1, 2, 3, 4};
  req.mode = SynthesisRequest::Mode::kReference;
  req.style_ref_feats = style_feats(model, 21);
  req.speaker_ref_feats = style_feats(model, 22);
  req.seed = 9;
  req.max_frames = 12;
  auto a = lsttts::synthesize(model, req);
  auto b = lsttts::synthesize(model, req);
  CHECK(a.mel.values() == b.mel.values());
  CHECK(a.style_length_used == b.style_length_used);
}

TEST_CASE("sampled mode draws the style length from the configured range") {
  auto model = make_model();
  model.style.update_avg_speaker(std::vector<float>(model.cfg.d_model, 0.1f));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SynthesisRequest req;
    req.phonemes = {1, 2};
    req.mode = SynthesisRequest::Mode::kSampled;
    req.seed = seed;
    req.max_frames = 6;
    auto result = lsttts::synthesize(model, req);
    CHECK(result.style_length_used >= model.cfg.sample_len_lo);
    CHECK(result.style_length_used <= model.cfg.sample_len_hi);
  }
  // published-scale range is [80, 160]
  CHECK(ModelConfig::full_scale().sample_len_lo == 80);
  CHECK(ModelConfig::full_scale().sample_len_hi == 160);
}

TEST_CASE("request validation and the speaker fallback") {
  auto model = make_model();
  SynthesisRequest bad;
  bad.phonemes = {1};
  bad.mode = SynthesisRequest::Mode::kReference;  // no style_ref
  CHECK_THROWS_AS(lsttts::synthesize(model, bad), std::invalid_argument);

  SynthesisRequest sampled_with_ref;
  sampled_with_ref.phonemes = {1};
  sampled_with_ref.mode = SynthesisRequest::Mode::kSampled;
  sampled_with_ref.style_ref_feats = style_feats(model, 23);
  CHECK_THROWS_AS(lsttts::synthesize(model, sampled_with_ref), std::invalid_argument);

  // no speaker reference and no stored average: error
  SynthesisRequest no_spk;
  no_spk.phonemes = {1, 2};
  no_spk.mode = SynthesisRequest::Mode::kReference;
  no_spk.style_ref_feats = style_feats(model, 24);
  no_spk.max_frames = 4;
  CHECK_THROWS_AS(lsttts::synthesize(model, no_spk), std::runtime_error);

  // with a stored training average the same request succeeds
  model.style.update_avg_speaker(std::vector<float>(model.cfg.d_model, 0.05f));
  auto result = lsttts::synthesize(model, no_spk);
  CHECK(result.mel.shape()[0] >= 1);
}

TEST_CASE("concurrent synthesis over shared parameters matches the sequential result") {
  auto model = make_model(7);
  SynthesisRequest req;
  req.phonemes = {2, 1, 3};
  req.mode = SynthesisRequest::Mode::kReference;
  req.style_ref_feats = style_feats(model, 41);
  req.speaker_ref_feats = style_feats(model, 42);
  req.max_frames = 10;
  auto baseline = lsttts::synthesize(model, req);

  std::vector<std::vector<float>> results(4);
  std::vector<std::thread> workers;
  for (std::size_t i = 0; i < results.size(); ++i)
    workers.emplace_back(
        [&, i] { results[i] = lsttts::synthesize(model, req).mel.values(); });
  for (auto& w : workers) w.join();
  for (const auto& r : results) CHECK(r == baseline.mel.values());
}

TEST_CASE("decode state rejects a mismatched model") {
  auto model = make_model();
  auto other_cfg = infer_config();
  other_cfg.n_blocks = 1;
  Model other(other_cfg, 99);
  lsttts::ForwardCtxT<float> ctx;
  Rng rng(31);
  auto style = lsttts::StyleRepresentationT<float>{
      Tensor::randn({2, model.cfg.d_model}, rng), true};
  auto fused = model.fuse(model.content_encode({1}), style, ctx);
  auto state = lsttts::init_decode_state(model, fused);
  CHECK_THROWS_AS(
      lsttts::incremental_decode_step(other, state, Tensor::zeros({1, other.cfg.n_mels})),
      std::runtime_error);
}

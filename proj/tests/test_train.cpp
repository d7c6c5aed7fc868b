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

#include <filesystem>
#include <fstream>

#include "lsttts/train.hpp"
#include "support.hpp"

namespace fs = std::filesystem;

using lsttts::Batch;
using lsttts::BatchInput;
using lsttts::Corpus;
using lsttts::CorpusSpec;
using lsttts::Model;
using lsttts::ModelConfig;
using lsttts::Rng;
using lsttts::Shape;
using lsttts::Tensor;

namespace {

CorpusSpec tiny_spec() {
  CorpusSpec spec;
  spec.n_speakers = 2;
  spec.n_utts = 6;
  spec.vocab = 5;
  spec.n_mels = 4;
  spec.rate_lo = 2;
  spec.rate_hi = 3;
  spec.min_phonemes = 2;
  spec.max_phonemes = 4;
  spec.noise_sd = 0.01;
  spec.seed = 3;
  return spec;
}

ModelConfig tiny_model_config() {
  auto cfg = ModelConfig::micro();
  cfg.vocab = 5;
  cfg.n_mels = 4;
  return cfg;
}

std::string temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("lsttts_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(bool(f));
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("toy corpus construction and determinism") {
  auto spec = tiny_spec();
  spec.noise_sd = 0.0;
  auto corpus = lsttts::generate_toy_corpus(spec);
  CHECK(corpus.utterances.size() == 6);
  for (const auto& u : corpus.utterances) {
    // noiseless mel length is exactly rate * phoneme count
    CHECK(u.mel.shape() == Shape{u.phonemes.size() * std::size_t(u.rate), 4});
    CHECK(u.rate >= 2);
    CHECK(u.rate <= 3);
  }
  auto again = lsttts::generate_toy_corpus(spec);
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
    CHECK(corpus.utterances[i].mel.values() == again.utterances[i].mel.values());
    CHECK(corpus.utterances[i].phonemes == again.utterances[i].phonemes);
  }
}

TEST_CASE("template decoding recovers clean mels perfectly") {
  auto spec = tiny_spec();
  spec.noise_sd = 0.0;  // clean ground truth for the oracle sanity check
  auto corpus = lsttts::generate_toy_corpus(spec);
  for (const auto& u : corpus.utterances) {
    auto decoded = lsttts::decode_mel_by_templates(u.mel, u.phonemes.size(), corpus.templates);
    CHECK(lsttts::phoneme_accuracy(decoded, u.phonemes) == 1.0);
  }
}

TEST_CASE("template capacity is enforced") {
  auto spec = tiny_spec();
  spec.vocab = 100;  // > 4 * n_mels = 16
  CHECK_THROWS_AS(lsttts::generate_toy_corpus(spec), std::invalid_argument);
}

TEST_CASE("corpus validation rejects singleton speakers") {
  auto corpus = lsttts::generate_toy_corpus(tiny_spec());
  corpus.utterances.erase(
      std::remove_if(corpus.utterances.begin(), corpus.utterances.end(),
                     [](const lsttts::Utterance& u) {
                       return u.speaker_id == 0 && u.utt_id != "u0000";
                     }),
      corpus.utterances.end());
  CHECK_THROWS_AS(corpus.validate(), std::runtime_error);
}

TEST_CASE("sample_training_example keeps speaker and distinct utterances") {
  auto corpus = lsttts::generate_toy_corpus(tiny_spec());
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const auto [sty, spk] = lsttts::sample_training_example(corpus, rng);
    CHECK(sty != spk);
    CHECK(corpus.utterances[sty].speaker_id == corpus.utterances[spk].speaker_id);
  }
}

TEST_CASE("sample_training_example draws style targets uniformly (chi-square)") {
  auto spec = tiny_spec();
  spec.n_utts = 10;
  auto corpus = lsttts::generate_toy_corpus(spec);
  Rng rng(9);
  std::vector<long> counts(corpus.utterances.size(), 0);
  for (int i = 0; i < 10000; ++i) ++counts[lsttts::sample_training_example(corpus, rng).first];
  CHECK(testsup::uniform_chi_square_p(counts) > 0.01);
}

TEST_CASE("pad_batch: masks, stop targets, and true-length recovery") {
  Rng rng(11);
  BatchInput a{"a", {1, 2, 0}, Tensor::randn({3, 4}, rng), Tensor::randn({3, 3}, rng),
               Tensor::randn({4, 3}, rng)};
  BatchInput b{"b", {2, 1, 0, 3, 4}, Tensor::randn({5, 4}, rng), Tensor::randn({5, 3}, rng),
               Tensor::randn({2, 3}, rng)};
  auto batch = lsttts::pad_batch({a, b});

  CHECK(batch.size() == 2);
  CHECK(batch.target_mels.shape() == Shape{2, 5, 4});
  // first item's frame mask is [1,1,1,0,0]
  for (std::size_t t = 0; t < 5; ++t)
    CHECK(batch.frame_mask.at({0, t}) == (t < 3 ? 1.0f : 0.0f));
  // single-item batches carry all-ones masks
  auto solo = lsttts::pad_batch({a});
  for (float m : solo.frame_mask.values()) CHECK(m == 1.0f);
  // stop target marks each item's true final frame
  CHECK(batch.stop_targets.at({0, 2}) == 1.0f);
  CHECK(batch.stop_targets.at({0, 4}) == 0.0f);
  CHECK(batch.stop_targets.at({1, 4}) == 1.0f);

  CHECK(batch.item_phonemes(0) == lsttts::PhonemeSeq{1, 2, 0});
  CHECK(batch.item_target(1).values() == b.target.values());
  CHECK(batch.item_style_feats(0).values() == a.style_feats.values());
  CHECK(batch.item_speaker_feats(1).values() == b.speaker_feats.values());

  CHECK_THROWS_AS(lsttts::pad_batch({}), std::invalid_argument);
}

TEST_CASE("masked loss on a padded batch equals the mean of unpadded per-item losses") {
  auto cfg = tiny_model_config();
  Model model(cfg, 13);
  lsttts::ForwardCtxT<float> ctx;
  Rng rng(14);

  BatchInput a{"a", {1, 2, 0}, Tensor::randn({4, 4}, rng), Tensor::randn({4, 3}, rng),
               Tensor::randn({4, 3}, rng)};
  BatchInput b{"b", {2, 1}, Tensor::randn({7, 4}, rng), Tensor::randn({7, 3}, rng),
               Tensor::randn({5, 3}, rng)};
  auto batch = lsttts::pad_batch({a, b});

  auto style = lsttts::StyleRepresentationT<float>{Tensor::randn({3, cfg.d_model}, rng), true};
  double padded_mean = 0, unpadded_mean = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto fused = model.fuse(model.content_encode(batch.item_phonemes(i)), style, ctx);

    // padded route: run the decoder over the padded length and mask the loss
    const std::size_t tmax = batch.target_mels.shape()[1];
    std::vector<float> padded_rows(tmax * cfg.n_mels);
    std::copy(batch.target_mels.values().begin() + std::ptrdiff_t(i * tmax * cfg.n_mels),
              batch.target_mels.values().begin() + std::ptrdiff_t((i + 1) * tmax * cfg.n_mels),
              padded_rows.begin());
    auto padded_target = Tensor::from_data({tmax, cfg.n_mels}, padded_rows);
    auto dec_padded = model.decoder_forward(padded_target, fused, ctx);
    std::vector<float> fm(tmax), st(tmax);
    for (std::size_t t = 0; t < tmax; ++t) {
      fm[t] = batch.frame_mask.at({i, t});
      st[t] = batch.stop_targets.at({i, t});
    }
    auto frame_mask = Tensor::from_data({tmax}, fm);
    auto mel_mask = lsttts::reshape(frame_mask, {tmax, 1});
    auto stop_targets = Tensor::from_data({tmax}, st);
    auto padded_terms =
        model.tts_loss(dec_padded, padded_target, stop_targets, &frame_mask, &mel_mask);

    // unpadded route
    auto target = batch.item_target(i);
    auto dec = model.decoder_forward(target, fused, ctx);
    auto stop_unpadded = Tensor::zeros({target.shape()[0]});
    stop_unpadded.mutable_values()[target.shape()[0] - 1] = 1.0f;
    auto terms = model.tts_loss(dec, target, stop_unpadded, nullptr, nullptr);

    CHECK(std::abs(double(padded_terms.total.item()) - double(terms.total.item())) < 1e-6);
    padded_mean += padded_terms.total.item() / double(batch.size());
    unpadded_mean += terms.total.item() / double(batch.size());
  }
  CHECK(std::abs(padded_mean - unpadded_mean) < 1e-6);
}

TEST_CASE("two same-seed runs produce identical metrics files, lr=0 freezes parameters") {
  auto corpus = lsttts::generate_toy_corpus(tiny_spec());
  lsttts::TrainConfig tcfg;
  tcfg.steps = 8;
  tcfg.batch_size = 2;
  tcfg.seed = 21;
  tcfg.log_interval = 2;

  auto run = [&](const std::string& tag) {
    Model model(tiny_model_config(), 17);
    auto cfg = tcfg;
    cfg.out_dir = temp_dir(tag);
    auto state = lsttts::init_trainer(model, cfg);
    lsttts::run_training(model, corpus, cfg, state);
    return slurp(cfg.out_dir + "/metrics.csv");
  };
  CHECK(run("det_a") == run("det_b"));

  // lr = 0: parameters unchanged across steps
  Model frozen(tiny_model_config(), 17);
  auto before_params = frozen.parameters();
  std::vector<std::vector<float>> before;
  for (std::size_t i = 0; i < before_params.size(); ++i)
    before.push_back(before_params[i].tensor.values());
  lsttts::TrainConfig zcfg = tcfg;
  zcfg.lr = 0.0;
  zcfg.out_dir.clear();
  auto state = lsttts::init_trainer(frozen, zcfg);
  lsttts::run_training(frozen, corpus, zcfg, state);
  auto after_params = frozen.parameters();
  for (std::size_t i = 0; i < after_params.size(); ++i)
    CHECK(after_params[i].tensor.values() == before[i]);
}

TEST_CASE("loss falls during a short overfit run on one utterance") {
  auto spec = tiny_spec();
  spec.n_utts = 2;  // one per speaker would break validation; keep both
  spec.n_speakers = 1;
  spec.max_phonemes = 3;
  auto corpus = lsttts::generate_toy_corpus(spec);
  Model model(tiny_model_config(), 19);
  lsttts::TrainConfig cfg;
  cfg.steps = 200;
  cfg.batch_size = 2;
  cfg.lr = 2e-3;
  cfg.seed = 23;
  cfg.log_interval = 10;
  auto state = lsttts::init_trainer(model, cfg);
  auto report = lsttts::run_training(model, corpus, cfg, state);
  REQUIRE(!report.log.empty());
  CHECK(report.final_loss < report.log.front().total);
}

TEST_CASE("checkpoint round-trip is bit-exact and failures are distinct") {
  auto dir = temp_dir("ckpt");
  Model model(tiny_model_config(), 29);
  lsttts::TrainConfig cfg;
  cfg.seed = 31;
  auto state = lsttts::init_trainer(model, cfg);
  state.step = 42;
  state.rng.normal();  // advance so the spare flag is exercised

  const auto path = dir + "/model.lstt";
  lsttts::save_checkpoint(path, lsttts::make_checkpoint(model, state));
  auto ckpt = lsttts::load_checkpoint(path);
  CHECK(lsttts::checkpoint_step(ckpt) == 42);

  auto restored = lsttts::model_from_checkpoint(ckpt);
  auto pa = model.parameters();
  auto pb = restored.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(pa[i].tensor.values() == pb[i].tensor.values());
  CHECK(model.extractor.projection().values() == restored.extractor.projection().values());

  lsttts::TrainerState rstate = lsttts::init_trainer(restored, cfg);
  lsttts::restore_trainer(ckpt, restored, rstate);
  CHECK(rstate.step == 42);
  CHECK(rstate.rng == state.rng);

  // corrupted magic: format error, nothing applied
  {
    auto bytes = slurp(path);
    bytes[0] = 'X';
    std::ofstream f(dir + "/bad_magic.lstt", std::ios::binary | std::ios::trunc);
    f << bytes;
  }
  CHECK_THROWS_WITH_AS(lsttts::load_checkpoint(dir + "/bad_magic.lstt"),
                       doctest::Contains("bad magic"), std::runtime_error);

  // truncated file
  {
    auto bytes = slurp(path);
    bytes.resize(bytes.size() / 2);
    std::ofstream f(dir + "/short.lstt", std::ios::binary | std::ios::trunc);
    f << bytes;
  }
  CHECK_THROWS_WITH_AS(lsttts::load_checkpoint(dir + "/short.lstt"),
                       doctest::Contains("truncated"), std::runtime_error);

  // unknown parameter name
  {
    auto broken = lsttts::make_checkpoint(model, state);
    broken.records.push_back({"decoder.block9.bogus", {2}, {1.0f, 2.0f}});
    lsttts::save_checkpoint(dir + "/unknown.lstt", broken);
  }
  CHECK_THROWS_WITH_AS(lsttts::model_from_checkpoint(lsttts::load_checkpoint(dir + "/unknown.lstt")),
                       doctest::Contains("unknown parameter"), std::runtime_error);

  // version mismatch
  {
    auto broken = lsttts::make_checkpoint(model, state);
    broken.version = 9;
    lsttts::save_checkpoint(dir + "/vers.lstt", broken);
  }
  CHECK_THROWS_WITH_AS(lsttts::load_checkpoint(dir + "/vers.lstt"),
                       doctest::Contains("version"), std::runtime_error);
}

TEST_CASE("resume from a checkpoint reproduces the uninterrupted run") {
  auto corpus = lsttts::generate_toy_corpus(tiny_spec());
  lsttts::TrainConfig cfg;
  cfg.steps = 12;
  cfg.batch_size = 2;
  cfg.seed = 37;
  cfg.log_interval = 1;

  // uninterrupted
  Model straight(tiny_model_config(), 41);
  auto s1 = lsttts::init_trainer(straight, cfg);
  auto full_report = lsttts::run_training(straight, corpus, cfg, s1);

  // run to 5, checkpoint, restore into a fresh model, continue to 12
  Model part(tiny_model_config(), 41);
  auto s2 = lsttts::init_trainer(part, cfg);
  auto cfg_half = cfg;
  cfg_half.steps = 5;
  lsttts::run_training(part, corpus, cfg_half, s2);
  auto ckpt = lsttts::make_checkpoint(part, s2);

  auto resumed = lsttts::model_from_checkpoint(ckpt);
  lsttts::TrainerState s3 = lsttts::init_trainer(resumed, cfg);
  lsttts::restore_trainer(ckpt, resumed, s3);
  auto tail_report = lsttts::run_training(resumed, corpus, cfg, s3);

  auto pa = straight.parameters();
  auto pb = resumed.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(pa[i].tensor.values() == pb[i].tensor.values());
  // the resumed log must agree with the tail of the uninterrupted log
  REQUIRE(tail_report.log.size() == 7);
  for (const auto& e : tail_report.log) {
    auto full = full_report.loss_at(e.step);
    REQUIRE(full.has_value());
    CHECK(*full == e.total);
  }
}

TEST_CASE("corpus export/import round trip") {
  auto dir = temp_dir("corpus_io");
  auto spec = tiny_spec();
  auto corpus = lsttts::generate_toy_corpus(spec);
  corpus.utterances[1].test_split = true;
  lsttts::export_corpus(corpus, dir);
  auto loaded = lsttts::import_corpus(dir);
  REQUIRE(loaded.utterances.size() == corpus.utterances.size());
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
    CHECK(loaded.utterances[i].utt_id == corpus.utterances[i].utt_id);
    CHECK(loaded.utterances[i].speaker_id == corpus.utterances[i].speaker_id);
    CHECK(loaded.utterances[i].phonemes == corpus.utterances[i].phonemes);
    CHECK(loaded.utterances[i].rate == corpus.utterances[i].rate);
    CHECK(loaded.utterances[i].test_split == corpus.utterances[i].test_split);
    CHECK(loaded.utterances[i].mel.values() == corpus.utterances[i].mel.values());
  }
  // templates rebuilt from the recorded seed match the originals
  REQUIRE(loaded.templates.size() == corpus.templates.size());
  for (std::size_t v = 0; v < corpus.templates.size(); ++v)
    CHECK(loaded.templates[v] == corpus.templates[v]);
}

TEST_CASE("appending pure padding to a batch item leaves the loss unchanged") {
  auto cfg = tiny_model_config();
  Model model(cfg, 43);
  lsttts::ForwardCtxT<float> ctx;
  Rng rng(44);
  auto target = Tensor::randn({4, cfg.n_mels}, rng);
  auto style = lsttts::StyleRepresentationT<float>{Tensor::randn({2, cfg.d_model}, rng), true};
  auto fused = model.fuse(model.content_encode({1, 0}), style, ctx);

  auto stop4 = Tensor::zeros({4});
  stop4.mutable_values()[3] = 1.0f;
  auto base = model.tts_loss(model.decoder_forward(target, fused, ctx), target, stop4, nullptr,
                             nullptr);

  // same item with 3 appended zero frames and masks excluding them
  auto padded_vals = target.values();
  padded_vals.resize(7 * cfg.n_mels, 0.0f);
  auto padded = Tensor::from_data({7, cfg.n_mels}, padded_vals);
  auto mask = Tensor::from_data({7}, {1, 1, 1, 1, 0, 0, 0});
  auto mel_mask = lsttts::reshape(mask, {7, 1});
  auto stop7 = Tensor::zeros({7});
  stop7.mutable_values()[3] = 1.0f;
  auto padded_loss = model.tts_loss(model.decoder_forward(padded, fused, ctx), padded, stop7,
                                    &mask, &mel_mask);
  CHECK(std::abs(double(base.total.item()) - double(padded_loss.total.item())) < 1e-6);
}

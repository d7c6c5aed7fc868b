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

#include "lsttts/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace lsttts {

namespace {

std::size_t mask_row_length(const Tensor& mask, std::size_t row) {
  const std::size_t width = mask.shape()[1];
  const auto& v = mask.values();
  std::size_t len = 0;
  for (std::size_t c = 0; c < width; ++c) len += v[row * width + c] != 0.0f ? 1 : 0;
  return len;
}

Tensor copy_item_rows(const Tensor& padded, std::size_t item, std::size_t rows) {
  const std::size_t max_rows = padded.shape()[1];
  const std::size_t cols = padded.shape()[2];
  std::vector<float> out(rows * cols);
  const float* src = padded.values().data() + item * max_rows * cols;
  std::copy(src, src + rows * cols, out.data());
  return Tensor::from_data({rows, cols}, std::move(out));
}

void put_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

bool try_u16(std::istream& is, std::uint16_t& out) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) return false;
  out = std::uint16_t(b[0] | b[1] << 8);
  return true;
}

std::uint32_t need_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("checkpoint: truncated file");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

constexpr char kMagic[8] = {'L', 'S', 'T', 'T', 'T', 'S', '0', '1'};

}  // namespace

std::size_t Batch::content_length(std::size_t i) const { return mask_row_length(content_mask, i); }
std::size_t Batch::frame_length(std::size_t i) const { return mask_row_length(frame_mask, i); }
std::size_t Batch::style_length(std::size_t i) const { return mask_row_length(style_mask, i); }
std::size_t Batch::speaker_length(std::size_t i) const {
  return mask_row_length(speaker_mask, i);
}

PhonemeSeq Batch::item_phonemes(std::size_t i) const {
  const std::size_t len = content_length(i);
  return PhonemeSeq(phoneme_ids[i].begin(), phoneme_ids[i].begin() + std::ptrdiff_t(len));
}

Tensor Batch::item_target(std::size_t i) const { return copy_item_rows(target_mels, i, frame_length(i)); }
Tensor Batch::item_style_feats(std::size_t i) const {
  return copy_item_rows(style_feats, i, style_length(i));
}
Tensor Batch::item_speaker_feats(std::size_t i) const {
  return copy_item_rows(speaker_feats, i, speaker_length(i));
}

Batch pad_batch(const std::vector<BatchInput>& items) {
  if (items.empty()) throw std::invalid_argument("pad_batch: empty batch");
  const std::size_t B = items.size();
  std::size_t tc = 0, tm = 0, tf = 0, tf2 = 0;
  const std::size_t n_mels = items[0].target.shape()[1];
  const std::size_t d_f = items[0].style_feats.shape()[1];
  for (const auto& it : items) {
    tc = std::max(tc, it.phonemes.size());
    tm = std::max(tm, it.target.shape()[0]);
    tf = std::max(tf, it.style_feats.shape()[0]);
    tf2 = std::max(tf2, it.speaker_feats.shape()[0]);
  }

  Batch b;
  b.content_mask = Tensor::zeros({B, tc});
  b.target_mels = Tensor::zeros({B, tm, n_mels});
  b.frame_mask = Tensor::zeros({B, tm});
  b.stop_targets = Tensor::zeros({B, tm});
  b.style_feats = Tensor::zeros({B, tf, d_f});
  b.style_mask = Tensor::zeros({B, tf});
  b.speaker_feats = Tensor::zeros({B, tf2, d_f});
  b.speaker_mask = Tensor::zeros({B, tf2});

  for (std::size_t i = 0; i < B; ++i) {
    const auto& it = items[i];
    b.utt_ids.push_back(it.utt_id);
    std::vector<int> padded(tc, 0);
    std::copy(it.phonemes.begin(), it.phonemes.end(), padded.begin());
    b.phoneme_ids.push_back(std::move(padded));
    for (std::size_t c = 0; c < it.phonemes.size(); ++c)
      b.content_mask.mutable_values()[i * tc + c] = 1.0f;

    const std::size_t T = it.target.shape()[0];
    std::copy(it.target.values().begin(), it.target.values().end(),
              b.target_mels.mutable_values().begin() + std::ptrdiff_t(i * tm * n_mels));
    for (std::size_t t = 0; t < T; ++t) b.frame_mask.mutable_values()[i * tm + t] = 1.0f;
    b.stop_targets.mutable_values()[i * tm + T - 1] = 1.0f;

    std::copy(it.style_feats.values().begin(), it.style_feats.values().end(),
              b.style_feats.mutable_values().begin() + std::ptrdiff_t(i * tf * d_f));
    for (std::size_t t = 0; t < it.style_feats.shape()[0]; ++t)
      b.style_mask.mutable_values()[i * tf + t] = 1.0f;

    std::copy(it.speaker_feats.values().begin(), it.speaker_feats.values().end(),
              b.speaker_feats.mutable_values().begin() + std::ptrdiff_t(i * tf2 * d_f));
    for (std::size_t t = 0; t < it.speaker_feats.shape()[0]; ++t)
      b.speaker_mask.mutable_values()[i * tf2 + t] = 1.0f;
  }
  return b;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization
// ---------------------------------------------------------------------------

const NamedTensorRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& r : records)
    if (r.name == name) return &r;
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
  f.write(kMagic, sizeof(kMagic));
  put_u32(f, ckpt.version);
  std::string config_text;
  for (const auto& [k, v] : ckpt.config) config_text += k + " = " + v + "\n";
  put_u32(f, std::uint32_t(config_text.size()));
  f.write(config_text.data(), std::streamsize(config_text.size()));
  for (const auto& rec : ckpt.records) {
    if (rec.name.size() > 0xffff) throw std::invalid_argument("checkpoint: name too long");
    put_u16(f, std::uint16_t(rec.name.size()));
    f.write(rec.name.data(), std::streamsize(rec.name.size()));
    f.put(char(rec.shape.size()));
    for (std::size_t d : rec.shape) put_u32(f, std::uint32_t(d));
    for (float x : rec.data) {
      std::uint32_t bits;
      std::memcpy(&bits, &x, 4);
      put_u32(f, bits);
    }
  }
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  if (!f.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  Checkpoint ckpt;
  ckpt.version = need_u32(f);
  if (ckpt.version != 1)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(ckpt.version));
  const std::uint32_t config_len = need_u32(f);
  std::string config_text(config_len, '\0');
  if (!f.read(config_text.data(), config_len))
    throw std::runtime_error("checkpoint: truncated file");
  std::size_t pos = 0;
  while (pos < config_text.size()) {
    const std::size_t eol = config_text.find('\n', pos);
    const std::string line = config_text.substr(pos, eol - pos);
    pos = eol == std::string::npos ? config_text.size() : eol + 1;
    const std::size_t eq = line.find(" = ");
    if (eq != std::string::npos) ckpt.config[line.substr(0, eq)] = line.substr(eq + 3);
  }
  std::uint16_t name_len = 0;
  while (try_u16(f, name_len)) {
    NamedTensorRecord rec;
    rec.name.resize(name_len);
    if (!f.read(rec.name.data(), name_len)) throw std::runtime_error("checkpoint: truncated file");
    const int rank = f.get();
    if (rank < 0) throw std::runtime_error("checkpoint: truncated file");
    std::size_t count = 1;
    for (int d = 0; d < rank; ++d) {
      rec.shape.push_back(need_u32(f));
      count *= rec.shape.back();
    }
    rec.data.resize(count);
    for (auto& x : rec.data) {
      const std::uint32_t bits = need_u32(f);
      std::memcpy(&x, &bits, 4);
    }
    ckpt.records.push_back(std::move(rec));
  }
  return ckpt;
}

Checkpoint make_checkpoint(Model& model, const TrainerState& state) {
  Checkpoint ckpt;
  ckpt.config = model.cfg.to_kv();
  ckpt.config["trainer.step"] = std::to_string(state.step);
  ckpt.config["trainer.rng"] = state.rng.serialize();
  ckpt.config["trainer.avg_count"] = ModelConfig::format_double(model.style.avg_count);
  const auto& acfg = state.adam.config();
  ckpt.config["adam.step"] = std::to_string(state.adam.step_count());
  ckpt.config["adam.lr"] = ModelConfig::format_double(acfg.lr);
  ckpt.config["adam.beta1"] = ModelConfig::format_double(acfg.beta1);
  ckpt.config["adam.beta2"] = ModelConfig::format_double(acfg.beta2);
  ckpt.config["adam.eps"] = ModelConfig::format_double(acfg.eps);
  ckpt.config["adam.clip_norm"] = ModelConfig::format_double(acfg.clip_norm);

  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i)
    ckpt.records.push_back({params[i].name, params[i].tensor.shape(), params[i].tensor.values()});
  ckpt.records.push_back({"buffer.extractor.projection", model.extractor.projection().shape(),
                          model.extractor.projection().values()});
  ckpt.records.push_back(
      {"buffer.style.avg_speaker", model.style.avg_speaker.shape(), model.style.avg_speaker.values()});
  for (std::size_t i = 0; i < params.size(); ++i) {
    ckpt.records.push_back(
        {"adam.m." + params[i].name, params[i].tensor.shape(), state.adam.first_moment(i)});
    ckpt.records.push_back(
        {"adam.v." + params[i].name, params[i].tensor.shape(), state.adam.second_moment(i)});
  }
  return ckpt;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  const ModelConfig cfg = ModelConfig::from_kv(ckpt.config);
  Model model(cfg, /*seed=*/0);  // every value is overwritten from the records
  auto params = model.parameters();
  std::size_t consumed = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* rec = ckpt.find(params[i].name);
    if (!rec) throw std::runtime_error("checkpoint: missing parameter '" + params[i].name + "'");
    if (rec->shape != params[i].tensor.shape())
      throw std::runtime_error("checkpoint: shape mismatch for '" + params[i].name + "'");
    params[i].tensor.mutable_values() = rec->data;
    ++consumed;
  }
  for (const auto& rec : ckpt.records) {
    if (rec.name.rfind("adam.", 0) == 0) continue;
    if (rec.name == "buffer.extractor.projection") {
      auto proj = Tensor::from_data(rec.shape, rec.data);
      model.extractor.set_projection(proj);
    } else if (rec.name == "buffer.style.avg_speaker") {
      model.style.avg_speaker = Tensor::from_data(rec.shape, rec.data);
    } else if (!params.find(rec.name)) {
      throw std::runtime_error("checkpoint: unknown parameter '" + rec.name + "'");
    }
  }
  (void)consumed;
  auto it = ckpt.config.find("trainer.avg_count");
  if (it != ckpt.config.end()) model.style.avg_count = std::stod(it->second);
  return model;
}

long checkpoint_step(const Checkpoint& ckpt) {
  auto it = ckpt.config.find("trainer.step");
  return it == ckpt.config.end() ? 0 : std::stol(it->second);
}

void restore_trainer(const Checkpoint& ckpt, Model& model, TrainerState& state) {
  auto want = [&](const std::string& key) -> const std::string& {
    auto it = ckpt.config.find(key);
    if (it == ckpt.config.end())
      throw std::runtime_error("checkpoint: missing key '" + key + "'");
    return it->second;
  };
  AdamConfig acfg;
  acfg.lr = std::stof(want("adam.lr"));
  acfg.beta1 = std::stof(want("adam.beta1"));
  acfg.beta2 = std::stof(want("adam.beta2"));
  acfg.eps = std::stof(want("adam.eps"));
  acfg.clip_norm = std::stof(want("adam.clip_norm"));
  auto params = model.parameters();
  state.adam = Adam(params, acfg);
  state.adam.set_step_count(std::stol(want("adam.step")));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* m = ckpt.find("adam.m." + params[i].name);
    const auto* v = ckpt.find("adam.v." + params[i].name);
    if (!m || !v)
      throw std::runtime_error("checkpoint: missing optimizer state for '" + params[i].name + "'");
    state.adam.first_moment(i) = m->data;
    state.adam.second_moment(i) = v->data;
  }
  state.rng = Rng::deserialize(want("trainer.rng"));
  state.step = std::stol(want("trainer.step"));
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

TrainerState init_trainer(Model& model, const TrainConfig& cfg) {
  AdamConfig acfg;
  acfg.lr = float(cfg.lr);
  acfg.clip_norm = float(cfg.clip_norm);
  auto params = model.parameters();
  TrainerState state{Adam(params, acfg), Rng(cfg.seed), 0};
  return state;
}

std::optional<float> TrainingReport::loss_at(long step) const {
  for (const auto& e : log)
    if (e.step == step) return e.total;
  return std::nullopt;
}

TrainingReport run_training(Model& model, const Corpus& corpus, const TrainConfig& cfg,
                            TrainerState& state) {
  corpus.validate();
  if (corpus.n_mels() != model.cfg.n_mels)
    throw std::invalid_argument("train: corpus has " + std::to_string(corpus.n_mels()) +
                                " mel bins, model expects " + std::to_string(model.cfg.n_mels));
  auto params = model.parameters();

  // Frozen features never change; extract each utterance once.
  std::vector<Tensor> feat_cache(corpus.utterances.size());
  auto features_of = [&](std::size_t idx) -> const Tensor& {
    if (!feat_cache[idx].defined())
      feat_cache[idx] = model.extractor.extract(corpus.utterances[idx].mel,
                                                corpus.utterances[idx].utt_id)
                            .frames;
    return feat_cache[idx];
  };

  std::ofstream metrics;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    metrics.open(fs::path(cfg.out_dir) / "metrics.csv", std::ios::app);
    if (!metrics) throw std::runtime_error("train: cannot open metrics file in " + cfg.out_dir);
  }

  TrainingReport report;
  const auto t_begin = std::chrono::steady_clock::now();
  char line[160];
  while (state.step < cfg.steps) {
    std::vector<BatchInput> inputs;
    inputs.reserve(cfg.batch_size);
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const auto [sty, spk] = sample_training_example(corpus, state.rng);
      const auto& u = corpus.utterances[sty];
      inputs.push_back({u.utt_id, u.phonemes, u.mel, features_of(sty), features_of(spk)});
    }
    Batch batch = pad_batch(inputs);

    Tensor total;
    float pre_sum = 0, post_sum = 0, stop_sum = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      auto fwd = model.forward_training({batch.item_style_feats(i), batch.utt_ids[i]},
                                        {batch.item_speaker_feats(i), batch.utt_ids[i]},
                                        batch.item_phonemes(i), batch.item_target(i), state.rng,
                                        /*training=*/true, /*truncate=*/true);
      model.style.update_avg_speaker(fwd.speaker.vector.values());
      pre_sum += fwd.loss.pre.item();
      post_sum += fwd.loss.post.item();
      stop_sum += fwd.loss.stop.item();
      total = total.defined() ? add(total, fwd.loss.total) : fwd.loss.total;
    }
    const float inv_b = 1.0f / float(batch.size());
    total = scale(total, inv_b);

    const float loss_value = total.item();
    if (!std::isfinite(loss_value)) {
      std::string ids;
      for (const auto& id : batch.utt_ids) ids += (ids.empty() ? "" : ",") + id;
      throw std::runtime_error("train: non-finite loss at step " +
                               std::to_string(state.step + 1) + "; batch utterances: " + ids);
    }
    backward(total);
    state.adam.step(params);
    ++state.step;
    ++report.steps_run;

    report.final_loss = loss_value;
    if (loss_value < report.min_loss) {
      report.min_loss = loss_value;
      report.min_step = state.step;
    }
    if (cfg.log_interval > 0 && state.step % cfg.log_interval == 0) {
      LogEntry e{state.step, loss_value, pre_sum * inv_b, post_sum * inv_b, stop_sum * inv_b};
      report.log.push_back(e);
      if (metrics.is_open()) {
        std::snprintf(line, sizeof(line), "%ld,%.8g,%.8g,%.8g,%.8g\n", e.step, double(e.total),
                      double(e.pre), double(e.post), double(e.stop));
        metrics << line;
        metrics.flush();
      }
    }
    if (cfg.ckpt_interval > 0 && state.step % cfg.ckpt_interval == 0 && !cfg.out_dir.empty()) {
      const auto path =
          fs::path(cfg.out_dir) / ("ckpt_" + std::to_string(state.step) + ".lstt");
      save_checkpoint(path.string(), make_checkpoint(model, state));
    }
  }
  if (!cfg.out_dir.empty())
    save_checkpoint((fs::path(cfg.out_dir) / "ckpt_final.lstt").string(),
                    make_checkpoint(model, state));
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
  return report;
}

}  // namespace lsttts

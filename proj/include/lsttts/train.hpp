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

// Batching, the seeded optimization loop, metrics logging, and checkpoint
// persistence. A checkpoint carries the model parameters, optimizer moments,
// rng state and step counter, so resuming reproduces the uninterrupted run
// bit for bit.

#pragma once

#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lsttts/corpus.hpp"
#include "lsttts/model.hpp"
#include "lsttts/optim.hpp"

namespace lsttts {

struct BatchInput {
  std::string utt_id;
  PhonemeSeq phonemes;
  Tensor target;         // [T, n_mels]
  Tensor style_feats;    // [T_f, d_f]
  Tensor speaker_feats;  // [T_f2, d_f]
};

// Right-padded arrays with 0/1 masks (1 on real positions). Stop targets are
// 1 exactly at each item's true final frame.
struct Batch {
  std::vector<std::string> utt_ids;
  std::vector<std::vector<int>> phoneme_ids;  // [B][Tc_max]
  Tensor content_mask;                        // [B, Tc_max]
  Tensor target_mels;                         // [B, Tm_max, n_mels]
  Tensor frame_mask;                          // [B, Tm_max]
  Tensor stop_targets;                        // [B, Tm_max]
  Tensor style_feats;                         // [B, Tf_max, d_f]
  Tensor style_mask;                          // [B, Tf_max]
  Tensor speaker_feats;                       // [B, Tf2_max, d_f]
  Tensor speaker_mask;                        // [B, Tf2_max]

  std::size_t size() const { return utt_ids.size(); }
  std::size_t content_length(std::size_t i) const;
  std::size_t frame_length(std::size_t i) const;
  std::size_t style_length(std::size_t i) const;
  std::size_t speaker_length(std::size_t i) const;

  PhonemeSeq item_phonemes(std::size_t i) const;
  Tensor item_target(std::size_t i) const;
  Tensor item_style_feats(std::size_t i) const;
  Tensor item_speaker_feats(std::size_t i) const;
};

Batch pad_batch(const std::vector<BatchInput>& items);

// ---------------------------------------------------------------------------
// Checkpoints. Layout: magic "LSTTTS01", u32 version, u32 length + key=value
// config text, then records of [u16 name length, name, u8 rank, u32 dims...,
// f32 data], little-endian.
// ---------------------------------------------------------------------------

struct NamedTensorRecord {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  std::uint32_t version = 1;
  std::map<std::string, std::string> config;
  std::vector<NamedTensorRecord> records;

  const NamedTensorRecord* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

struct TrainConfig {
  long steps = 3000;
  std::size_t batch_size = 8;
  double lr = 2e-4;
  double clip_norm = 1.0;
  std::uint64_t seed = 7;
  long log_interval = 10;
  long ckpt_interval = 0;  // 0 = final checkpoint only
  std::string out_dir;     // metrics + checkpoints land here when non-empty
};

struct TrainerState {
  Adam adam;
  Rng rng;
  long step = 0;
};

struct LogEntry {
  long step = 0;
  float total = 0, pre = 0, post = 0, stop = 0;
};

struct TrainingReport {
  std::vector<LogEntry> log;
  float min_loss = std::numeric_limits<float>::infinity();
  long min_step = 0;
  float final_loss = 0;
  long steps_run = 0;
  double wall_seconds = 0;

  std::optional<float> loss_at(long step) const;
};

TrainerState init_trainer(Model& model, const TrainConfig& cfg);

// Runs from state.step to cfg.steps. Deterministic given (model, corpus,
// cfg.seed): two runs produce identical metrics files.
TrainingReport run_training(Model& model, const Corpus& corpus, const TrainConfig& cfg,
                            TrainerState& state);

Checkpoint make_checkpoint(Model& model, const TrainerState& state);
Model model_from_checkpoint(const Checkpoint& ckpt);
void restore_trainer(const Checkpoint& ckpt, Model& model, TrainerState& state);
long checkpoint_step(const Checkpoint& ckpt);

}  // namespace lsttts

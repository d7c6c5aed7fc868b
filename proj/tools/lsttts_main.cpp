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

// Command-line front end. Exit codes: 0 success, 1 runtime failure, 2 usage
// error. Failures print one machine-parsable line: `error: <message>`.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lsttts/evalproxy.hpp"
#include "lsttts/gradsuite.hpp"
#include "lsttts/infer.hpp"
#include "lsttts/io.hpp"
#include "lsttts/runconfig.hpp"
#include "lsttts/train.hpp"

namespace fs = std::filesystem;
using namespace lsttts;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RunConfig load_config_or_usage(const std::string& path,
                               const std::vector<std::string>& overrides) {
  if (!fs::exists(path)) throw UsageError("config file not found: " + path);
  try {
    return RunConfig::load(path, overrides);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());  // unknown keys and malformed lines
  }
}

PhonemeSeq parse_text(const std::string& text, std::size_t vocab) {
  PhonemeSeq ids;
  std::istringstream ss(text);
  int id;
  while (ss >> id) ids.push_back(id);
  if (ids.empty()) throw UsageError("no phoneme ids in --text");
  for (int i : ids)
    if (i < 0 || std::size_t(i) >= vocab)
      throw std::runtime_error("phoneme id " + std::to_string(i) + " outside vocab [0," +
                               std::to_string(vocab) + ")");
  return ids;
}

void write_resolved_config(const RunConfig& cfg, const std::string& dir) {
  if (dir.empty()) return;
  fs::create_directories(dir);
  std::ofstream f(fs::path(dir) / "resolved.cfg", std::ios::trunc);
  f << cfg.resolved_text();
}

Tensor reference_features(const Model& model, const std::string& corpus_dir,
                          const std::string& utt_id, const std::string& feature_file) {
  if (!feature_file.empty()) return io::read_features(feature_file);
  if (corpus_dir.empty() || utt_id.empty())
    throw UsageError("need either a feature file or --corpus plus an utterance id");
  auto corpus = import_corpus(corpus_dir);
  for (const auto& u : corpus.utterances)
    if (u.utt_id == utt_id) return model.extractor.extract(u.mel, u.utt_id).frames;
  throw std::runtime_error("utterance '" + utt_id + "' not found in " + corpus_dir);
}

int cmd_gen_corpus(const std::string& config_path, const std::vector<std::string>& overrides,
                   const std::string& out_dir) {
  auto cfg = load_config_or_usage(config_path, overrides);
  auto corpus = generate_toy_corpus(cfg.corpus);
  export_corpus(corpus, out_dir);
  write_resolved_config(cfg, out_dir);
  std::printf("wrote %zu utterances (%zu speakers, vocab %zu, %zu mel bins) to %s\n",
              corpus.utterances.size(), cfg.corpus.n_speakers, cfg.corpus.vocab,
              cfg.corpus.n_mels, out_dir.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& corpus_dir, const std::string& out_dir,
              const std::string& resume_path) {
  auto cfg = load_config_or_usage(config_path, overrides);
  if (!out_dir.empty()) cfg.train.out_dir = out_dir;
  auto corpus = corpus_dir.empty() ? generate_toy_corpus(cfg.corpus)
                                   : import_corpus(corpus_dir);
  write_resolved_config(cfg, cfg.train.out_dir);

  Model model(cfg.model, cfg.model_seed);
  TrainerState state = init_trainer(model, cfg.train);
  if (!resume_path.empty()) {
    auto ckpt = load_checkpoint(resume_path);
    model = model_from_checkpoint(ckpt);
    restore_trainer(ckpt, model, state);
    std::printf("resumed from %s at step %ld\n", resume_path.c_str(), state.step);
  }
  auto report = run_training(model, corpus, cfg.train, state);
  std::printf("trained %ld steps in %.1fs; final loss %.6f (min %.6f at step %ld)\n",
              report.steps_run, report.wall_seconds, double(report.final_loss),
              double(report.min_loss), report.min_step);
  if (!cfg.train.out_dir.empty())
    std::printf("metrics and checkpoints in %s\n", cfg.train.out_dir.c_str());
  return 0;
}

int cmd_synth(const std::string& ckpt_path, const std::string& text,
              const std::string& corpus_dir, const std::string& style_utt,
              const std::string& style_file, const std::string& speaker_utt,
              const std::string& speaker_file, const std::string& out_path,
              const std::string& attention_prefix, std::uint64_t seed, bool sampled) {
  auto model = model_from_checkpoint(load_checkpoint(ckpt_path));
  SynthesisRequest req;
  req.phonemes = parse_text(text, model.cfg.vocab);
  req.seed = seed;
  if (sampled) {
    req.mode = SynthesisRequest::Mode::kSampled;
  } else {
    req.mode = SynthesisRequest::Mode::kReference;
    req.style_ref_feats = reference_features(model, corpus_dir, style_utt, style_file);
  }
  if (!speaker_utt.empty() || !speaker_file.empty())
    req.speaker_ref_feats = reference_features(model, corpus_dir, speaker_utt, speaker_file);
  auto result = synthesize(model, req);
  io::write_mel(out_path, result.mel);
  if (!attention_prefix.empty()) {
    auto maps = result.fuse_weights;
    maps.insert(maps.end(), result.decoder_weights.begin(), result.decoder_weights.end());
    const auto files = dump_attention(maps, attention_prefix);
    std::printf("wrote %zu attention files\n", files.size());
  }
  std::printf("synthesized %zu frames (style length %zu)%s -> %s\n", result.mel.shape()[0],
              result.style_length_used,
              result.stop_frame ? "" : " [hit frame cap, no stop]", out_path.c_str());
  return 0;
}

int cmd_gradcheck(std::size_t n_seeds) {
  auto entries = run_gradient_suite(n_seeds);
  bool all_ok = true;
  for (const auto& e : entries) {
    all_ok = all_ok && e.ok();
    std::printf("%-24s max_rel_error %.3e  (%zu coords, %zu excluded)  %s\n", e.name.c_str(),
                e.max_rel_error, e.checked, e.excluded, e.ok() ? "ok" : "FAIL");
  }
  if (!all_ok) {
    std::fprintf(stderr, "error: gradient suite exceeded 1e-4\n");
    return 1;
  }
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& corpus_dir,
             const std::string& metric, std::size_t trials, std::uint64_t seed,
             const std::string& out_prefix, int fast_rate, int slow_rate) {
  auto ckpt = load_checkpoint(ckpt_path);
  auto model = model_from_checkpoint(ckpt);
  const long steps = checkpoint_step(ckpt);
  auto corpus = import_corpus(corpus_dir);

  std::vector<MetricReport> reports;
  if (metric == "style-transfer" || metric == "all")
    reports.push_back(
        eval_style_transfer(model, corpus, steps, trials, seed, fast_rate, slow_rate));
  if (metric == "content-integrity" || metric == "all")
    reports.push_back(eval_content_integrity(model, corpus, steps, trials, seed));
  if (reports.empty()) throw UsageError("unknown metric '" + metric + "'");

  bool all_passed = true;
  for (const auto& r : reports) {
    std::printf("%s\n", r.to_text().c_str());
    all_passed = all_passed && r.passed;
    if (!out_prefix.empty()) {
      std::ofstream f(out_prefix + "_" + r.metric + ".txt", std::ios::trunc);
      f << r.to_text();
    }
  }
  return all_passed ? 0 : 1;
}

int cmd_inspect(const std::string& ckpt_path) {
  auto ckpt = load_checkpoint(ckpt_path);
  std::printf("version: %u\n", ckpt.version);
  std::printf("step: %ld\n", checkpoint_step(ckpt));
  std::printf("config:\n");
  for (const auto& [k, v] : ckpt.config) std::printf("  %s = %s\n", k.c_str(), v.c_str());
  std::size_t total = 0;
  for (const auto& r : ckpt.records) total += r.data.size();
  std::printf("records: %zu (%zu values)\n", ckpt.records.size(), total);
  for (const auto& r : ckpt.records) {
    if (r.name.rfind("adam.", 0) == 0) continue;  // moments mirror the params
    std::printf("  %-40s %s\n", r.name.c_str(), shape_to_string(r.shape).c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"local style token text-to-speech, desk scale"};
  app.require_subcommand(1);

  std::string config_path, corpus_dir, out_dir, out_path, resume_path, ckpt_path;
  std::string text, style_utt, style_file, speaker_utt, speaker_file, attention_prefix;
  std::string metric = "all", out_prefix;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  std::size_t trials = 10, n_seeds = 5;
  int fast_rate = 2, slow_rate = 6;

  auto* gen = app.add_subcommand("gen-corpus", "generate a toy corpus");
  gen->add_option("--config", config_path, "run config file")->required();
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--set", overrides, "config overrides key=value");

  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--config", config_path, "run config file")->required();
  train_cmd->add_option("--corpus", corpus_dir, "corpus directory (default: generate)");
  train_cmd->add_option("--out", out_dir, "output directory for metrics/checkpoints");
  train_cmd->add_option("--resume", resume_path, "checkpoint to resume from");
  train_cmd->add_option("--set", overrides, "config overrides key=value");

  auto* synth = app.add_subcommand("synth", "synthesize with a style reference");
  synth->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  synth->add_option("--text", text, "phoneme ids, space separated")->required();
  synth->add_option("--corpus", corpus_dir, "corpus directory for references");
  synth->add_option("--style-ref", style_utt, "style reference utterance id");
  synth->add_option("--style-file", style_file, "style reference feature file");
  synth->add_option("--speaker-ref", speaker_utt, "speaker reference utterance id");
  synth->add_option("--speaker-file", speaker_file, "speaker reference feature file");
  synth->add_option("--out", out_path, "output mel file")->required();
  synth->add_option("--dump-attention", attention_prefix, "attention dump path prefix");
  synth->add_option("--seed", seed, "seed");

  auto* sample = app.add_subcommand("sample", "synthesize with sampled styles");
  sample->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  sample->add_option("--text", text, "phoneme ids, space separated")->required();
  sample->add_option("--corpus", corpus_dir, "corpus directory for the speaker reference");
  sample->add_option("--speaker-ref", speaker_utt, "speaker reference utterance id");
  sample->add_option("--speaker-file", speaker_file, "speaker reference feature file");
  sample->add_option("--out", out_path, "output mel file")->required();
  sample->add_option("--dump-attention", attention_prefix, "attention dump path prefix");
  sample->add_option("--seed", seed, "seed");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gradcheck->add_option("--seeds", n_seeds, "seeds per check (default 5)");

  auto* eval = app.add_subcommand("eval", "desk-scale proxy metrics");
  eval->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  eval->add_option("--corpus", corpus_dir, "corpus directory")->required();
  eval->add_option("--metric", metric, "style-transfer | content-integrity | all");
  eval->add_option("--trials", trials, "trials per metric");
  eval->add_option("--seed", seed, "base seed");
  eval->add_option("--out", out_prefix, "report file prefix");
  eval->add_option("--fast-rate", fast_rate, "fast reference rate");
  eval->add_option("--slow-rate", slow_rate, "slow reference rate");

  auto* inspect = app.add_subcommand("inspect-ckpt", "print checkpoint metadata");
  inspect->add_option("--ckpt", ckpt_path, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_corpus(config_path, overrides, out_dir);
    if (train_cmd->parsed())
      return cmd_train(config_path, overrides, corpus_dir, out_dir, resume_path);
    if (synth->parsed())
      return cmd_synth(ckpt_path, text, corpus_dir, style_utt, style_file, speaker_utt,
                       speaker_file, out_path, attention_prefix, seed, false);
    if (sample->parsed())
      return cmd_synth(ckpt_path, text, corpus_dir, "", "", speaker_utt, speaker_file, out_path,
                       attention_prefix, seed, true);
    if (gradcheck->parsed()) return cmd_gradcheck(n_seeds);
    if (eval->parsed())
      return cmd_eval(ckpt_path, corpus_dir, metric, trials, seed, out_prefix, fast_rate,
                      slow_rate);
    if (inspect->parsed()) return cmd_inspect(ckpt_path);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}

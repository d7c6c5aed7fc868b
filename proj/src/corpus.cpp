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

#include "lsttts/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "lsttts/io.hpp"

namespace fs = std::filesystem;

namespace lsttts {

namespace {

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * b[i];
    na += double(a[i]) * a[i];
    nb += double(b[i]) * b[i];
  }
  const double denom = std::sqrt(na) * std::sqrt(nb);
  return denom == 0 ? 0.0 : dot / denom;
}

}  // namespace

void Corpus::validate() const {
  std::map<int, int> per_speaker;
  for (const auto& u : utterances)
    if (!u.test_split) ++per_speaker[u.speaker_id];
  for (const auto& [spk, count] : per_speaker)
    if (count < 2)
      throw std::runtime_error("corpus: speaker " + std::to_string(spk) +
                               " has fewer than 2 training utterances");
  if (per_speaker.empty()) throw std::runtime_error("corpus: no training utterances");
}

std::vector<std::size_t> Corpus::utterances_with_rate(int rate) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < utterances.size(); ++i)
    if (utterances[i].rate == rate) out.push_back(i);
  return out;
}

std::vector<std::vector<float>> make_templates(std::uint64_t seed, std::size_t vocab,
                                               std::size_t n_mels) {
  if (vocab > 4 * n_mels)
    throw std::invalid_argument("corpus: vocab " + std::to_string(vocab) +
                                " exceeds template capacity 4*n_mels = " +
                                std::to_string(4 * n_mels));
  Rng rng(seed ^ 0x7e6d706c61746573ULL);  // template stream, independent of the rest
  std::vector<std::vector<float>> templates;
  templates.reserve(vocab);
  for (std::size_t v = 0; v < vocab; ++v) {
    std::vector<float> best;
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      std::vector<float> raw(n_mels);
      for (auto& x : raw) x = float(rng.normal());
      // moving average over the mel axis, then unit norm
      std::vector<float> smooth(n_mels);
      for (std::size_t i = 0; i < n_mels; ++i) {
        float acc = raw[i];
        int cnt = 1;
        if (i > 0) {
          acc += raw[i - 1];
          ++cnt;
        }
        if (i + 1 < n_mels) {
          acc += raw[i + 1];
          ++cnt;
        }
        smooth[i] = acc / float(cnt);
      }
      double norm = 0;
      for (float x : smooth) norm += double(x) * x;
      norm = std::sqrt(norm);
      for (auto& x : smooth) x = float(x / norm);
      bool separated = true;
      for (const auto& other : templates)
        separated = separated && std::abs(cosine(smooth, other)) < 0.8;
      if (separated) {
        best = std::move(smooth);
        placed = true;
      }
    }
    if (!placed)
      throw std::runtime_error("corpus: could not place " + std::to_string(vocab) +
                               " separated templates in " + std::to_string(n_mels) + " dims");
    templates.push_back(std::move(best));
  }
  return templates;
}

Corpus generate_toy_corpus(const CorpusSpec& spec) {
  if (spec.n_speakers == 0 || spec.n_utts < 2 * spec.n_speakers)
    throw std::invalid_argument("corpus: need at least 2 utterances per speaker");
  if (spec.rate_lo < 1 || spec.rate_lo > spec.rate_hi)
    throw std::invalid_argument("corpus: bad rate range");
  if (spec.min_phonemes == 0 || spec.min_phonemes > spec.max_phonemes)
    throw std::invalid_argument("corpus: bad phoneme-count range");

  Corpus corpus;
  corpus.spec = spec;
  corpus.templates = make_templates(spec.seed, spec.vocab, spec.n_mels);

  Rng rng(spec.seed);
  corpus.speaker_offsets.resize(spec.n_speakers);
  for (auto& offset : corpus.speaker_offsets) {
    offset.resize(spec.n_mels);
    for (auto& x : offset) x = float(rng.normal(0.0, 0.05));
  }

  auto draw_text = [&](Rng& r) {
    PhonemeSeq text;
    const auto n_phon = std::size_t(
        r.uniform_int(std::int64_t(spec.min_phonemes), std::int64_t(spec.max_phonemes)));
    for (std::size_t p = 0; p < n_phon; ++p)
      text.push_back(int(r.uniform_int(0, std::int64_t(spec.vocab) - 1)));
    return text;
  };
  std::vector<PhonemeSeq> text_pool;
  for (std::size_t t = 0; t < spec.n_texts; ++t) text_pool.push_back(draw_text(rng));

  char name[32];
  for (std::size_t i = 0; i < spec.n_utts; ++i) {
    Utterance utt;
    std::snprintf(name, sizeof(name), "u%04zu", i);
    utt.utt_id = name;
    utt.speaker_id = int(i % spec.n_speakers);  // round-robin keeps speakers balanced
    utt.rate = int(rng.uniform_int(spec.rate_lo, spec.rate_hi));
    utt.energy = float(rng.uniform(spec.energy_lo, spec.energy_hi));
    utt.phonemes =
        text_pool.empty()
            ? draw_text(rng)
            : text_pool[std::size_t(rng.uniform_int(0, std::int64_t(text_pool.size()) - 1))];

    const std::size_t n_phon = utt.phonemes.size();
    const std::size_t T = n_phon * std::size_t(utt.rate);
    utt.mel = Tensor::zeros({T, spec.n_mels});
    auto& mv = utt.mel.mutable_values();
    const auto& offset = corpus.speaker_offsets[std::size_t(utt.speaker_id)];
    for (std::size_t p = 0; p < n_phon; ++p) {
      const auto& tpl = corpus.templates[std::size_t(utt.phonemes[p])];
      for (int r = 0; r < utt.rate; ++r) {
        float* frame = mv.data() + (p * std::size_t(utt.rate) + std::size_t(r)) * spec.n_mels;
        for (std::size_t m = 0; m < spec.n_mels; ++m)
          frame[m] = utt.energy * tpl[m] + offset[m] +
                     (spec.noise_sd > 0 ? float(rng.normal(0.0, spec.noise_sd)) : 0.0f);
      }
    }
    corpus.utterances.push_back(std::move(utt));
  }
  corpus.validate();
  return corpus;
}

std::pair<std::size_t, std::size_t> sample_training_example(const Corpus& corpus, Rng& rng) {
  std::vector<std::size_t> train;
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i)
    if (!corpus.utterances[i].test_split) train.push_back(i);
  const std::size_t sty = train[std::size_t(rng.uniform_int(0, std::int64_t(train.size()) - 1))];
  std::vector<std::size_t> same_speaker;
  for (std::size_t i : train)
    if (i != sty && corpus.utterances[i].speaker_id == corpus.utterances[sty].speaker_id)
      same_speaker.push_back(i);
  if (same_speaker.empty())
    throw std::runtime_error("corpus: speaker " +
                             std::to_string(corpus.utterances[sty].speaker_id) +
                             " has no second utterance");
  const std::size_t spk =
      same_speaker[std::size_t(rng.uniform_int(0, std::int64_t(same_speaker.size()) - 1))];
  return {sty, spk};
}

PhonemeSeq decode_mel_by_templates(const Tensor& mel, std::size_t n_phonemes,
                                   const std::vector<std::vector<float>>& templates) {
  const std::size_t T = mel.shape()[0];
  const std::size_t n_mels = mel.shape()[1];
  PhonemeSeq decoded(n_phonemes, -1);
  if (T == 0 || n_phonemes == 0) return decoded;
  // the reference rate governs the output rate; estimate it from the length
  const auto est_rate =
      std::max<std::size_t>(1, std::size_t(std::llround(double(T) / double(n_phonemes))));
  const auto& mv = mel.values();
  for (std::size_t p = 0; p < n_phonemes; ++p) {
    const std::size_t begin = p * est_rate;
    const std::size_t end = std::min(T, (p + 1) * est_rate);
    if (begin >= end) break;  // ran out of frames; remaining stay undecoded
    std::vector<float> mean(n_mels, 0.0f);
    for (std::size_t t = begin; t < end; ++t)
      for (std::size_t m = 0; m < n_mels; ++m) mean[m] += mv[t * n_mels + m];
    for (auto& x : mean) x /= float(end - begin);
    int best = -1;
    double best_cos = -2.0;
    for (std::size_t v = 0; v < templates.size(); ++v) {
      const double c = cosine(mean, templates[v]);
      if (c > best_cos) {
        best_cos = c;
        best = int(v);
      }
    }
    decoded[p] = best;
  }
  return decoded;
}

double phoneme_accuracy(const PhonemeSeq& decoded, const PhonemeSeq& truth) {
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (i < decoded.size() && decoded[i] == truth[i]) ++hits;
  return double(hits) / double(truth.size());
}

void export_corpus(const Corpus& corpus, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "manifest.txt", std::ios::trunc);
  if (!manifest) throw std::runtime_error("corpus: cannot write manifest in " + dir);
  char buf[64];
  manifest << "# toy corpus manifest: utt_id speaker_id phoneme-ids rate energy\n";
  manifest << "# n_speakers = " << corpus.spec.n_speakers << "\n";
  manifest << "# vocab = " << corpus.spec.vocab << "\n";
  manifest << "# n_mels = " << corpus.spec.n_mels << "\n";
  manifest << "# seed = " << corpus.spec.seed << "\n";
  for (const auto& u : corpus.utterances) {
    manifest << u.utt_id << " " << u.speaker_id << " ";
    for (std::size_t i = 0; i < u.phonemes.size(); ++i)
      manifest << u.phonemes[i] << (i + 1 == u.phonemes.size() ? "" : ",");
    std::snprintf(buf, sizeof(buf), " %d %.9g", u.rate, double(u.energy));
    manifest << buf;
    if (u.test_split) manifest << " test";
    manifest << "\n";
    io::write_mel((fs::path(dir) / (u.utt_id + ".mel")).string(), u.mel);
  }
}

Corpus import_corpus(const std::string& dir) {
  const auto manifest_path = fs::path(dir) / "manifest.txt";
  std::ifstream manifest(manifest_path);
  if (!manifest) throw std::runtime_error("corpus: cannot open " + manifest_path.string());
  Corpus corpus;
  CorpusSpec& spec = corpus.spec;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      // header metadata needed to rebuild the template table
      std::istringstream hs(line.substr(1));
      std::string key, eq, value;
      if (hs >> key >> eq >> value && eq == "=") {
        if (key == "n_speakers") spec.n_speakers = std::stoul(value);
        if (key == "vocab") spec.vocab = std::stoul(value);
        if (key == "n_mels") spec.n_mels = std::stoul(value);
        if (key == "seed") spec.seed = std::stoull(value);
      }
      continue;
    }
    std::istringstream ss(line);
    Utterance u;
    std::string ids, split;
    double energy = 1.0;
    if (!(ss >> u.utt_id >> u.speaker_id >> ids >> u.rate >> energy))
      throw std::runtime_error("corpus: malformed manifest line: " + line);
    u.energy = float(energy);
    if (ss >> split && split == "test") u.test_split = true;
    std::istringstream is(ids);
    std::string tok;
    while (std::getline(is, tok, ',')) u.phonemes.push_back(std::stoi(tok));
    u.mel = io::read_mel((fs::path(dir) / (u.utt_id + ".mel")).string());
    corpus.utterances.push_back(std::move(u));
  }
  spec.n_utts = corpus.utterances.size();
  corpus.templates = make_templates(spec.seed, spec.vocab, spec.n_mels);
  corpus.validate();
  return corpus;
}

}  // namespace lsttts

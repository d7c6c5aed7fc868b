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

// The finite-difference gradient suite: every differentiable op plus the
// composed blocks, checked in double precision over several seeds. Shared by
// the `gradcheck` CLI subcommand and the acceptance tests.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lsttts/gradcheck.hpp"
#include "lsttts/model.hpp"

namespace lsttts {

struct SuiteEntry {
  std::string name;
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::size_t excluded = 0;

  bool ok(double tol = 1e-4) const { return max_rel_error < tol; }
};

inline std::vector<SuiteEntry> run_gradient_suite(std::size_t n_seeds = 5) {
  using T = TensorT<double>;
  std::vector<SuiteEntry> entries;

  auto run = [&](const std::string& name,
                 const std::function<GradCheckReport(std::uint64_t)>& one_seed) {
    SuiteEntry e;
    e.name = name;
    for (std::uint64_t seed = 1; seed <= n_seeds; ++seed) {
      const auto rep = one_seed(seed);
      e.max_rel_error = std::max(e.max_rel_error, rep.max_rel_error);
      e.checked += rep.checked;
      e.excluded += rep.excluded.size();
    }
    entries.push_back(e);
  };

  run("matmul", [](std::uint64_t seed) {
    Rng rng(seed);
    auto a = T::randn({3, 4}, rng);
    auto b = T::randn({4, 2}, rng);
    auto p = T::randn({3, 2}, rng);
    return grad_check<double>([&] { return sum_all(mul(matmul(a, b), p)); }, {a, b});
  });

  run("pointwise_mix", [](std::uint64_t seed) {
    Rng rng(seed);
    auto a = T::randn({4, 3}, rng);
    auto b = T::randn({4, 3}, rng);
    auto c = T::randn({3}, rng);  // broadcast operand
    return grad_check<double>(
        [&] {
          auto t = mul(sigmoid(a), tanh_op(b));
          t = add(t, c);
          t = sub(t, scale(b, 0.25));
          return mean_all(mul(t, t));
        },
        {a, b, c});
  });

  run("exp_log", [](std::uint64_t seed) {
    Rng rng(seed);
    auto a = T::rand_uniform({6}, rng, 0.5, 2.0);
    return grad_check<double>([&] { return sum_all(log_op(add_scalar(exp_op(a), 1.0))); }, {a});
  });

  run("relu", [](std::uint64_t seed) {
    Rng rng(seed);
    auto a = T::randn({5, 3}, rng);
    auto p = T::randn({5, 3}, rng);
    return grad_check<double>([&] { return sum_all(mul(relu(a), p)); }, {a});
  });

  run("softmax", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = T::randn({3, 5}, rng);
    auto p = T::randn({3, 5}, rng);
    return grad_check<double>([&] { return sum_all(mul(softmax(x, 1), p)); }, {x});
  });

  run("layer_norm", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = T::randn({3, 4}, rng);
    auto g = T::randn({4}, rng, 0.5);
    auto b = T::randn({4}, rng, 0.5);
    auto p = T::randn({3, 4}, rng);
    return grad_check<double>([&] { return sum_all(mul(layer_norm(x, g, b), p)); }, {x, g, b});
  });

  run("reduce", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = T::randn({4, 5}, rng);
    auto p = T::randn({5}, rng);
    return grad_check<double>(
        [&] { return add(sum_all(mul(mean_axis(x, 0), p)), mean_all(mul(x, x))); }, {x});
  });

  run("l1_loss", [](std::uint64_t seed) {
    Rng rng(seed);
    auto pred = T::randn({6}, rng);
    auto target = T::randn({6}, rng);
    auto mask = T::from_data({6}, {1, 1, 0, 1, 1, 1});
    return grad_check<double>([&] { return l1_loss(pred, target, &mask); }, {pred});
  });

  run("bce_with_logits", [](std::uint64_t seed) {
    Rng rng(seed);
    auto logits = T::randn({6}, rng);
    auto targets = T::from_data({6}, {1, 0, 0, 1, 1, 0});
    return grad_check<double>([&] { return bce_with_logits(logits, targets, 6.0); }, {logits});
  });

  run("multi_head_attention", [](std::uint64_t seed) {
    Rng rng(seed);
    MhaT<double> mha(4, 2, rng);
    auto q = T::randn({3, 4}, rng);
    auto k = T::randn({2, 4}, rng);
    auto v = T::randn({2, 4}, rng);
    auto p = T::randn({3, 4}, rng);
    std::vector<T> inputs{q, k, v, mha.wq.w, mha.wq.b, mha.wk.w, mha.wv.w, mha.wv.b,
                          mha.wo.w, mha.wo.b};
    return grad_check<double>([&] { return sum_all(mul(mha.forward(q, k, v).out, p)); }, inputs);
  });

  run("lstm_bptt", [](std::uint64_t seed) {
    Rng rng(seed);
    LstmParamsT<double> lstm(2, 3, rng);
    auto x = T::randn({4, 2}, rng);
    auto p = T::randn({4, 3}, rng);
    return grad_check<double>([&] { return sum_all(mul(lstm_forward(x, lstm), p)); },
                              {x, lstm.wx, lstm.wh, lstm.b});
  });

  run("feed_forward", [](std::uint64_t seed) {
    Rng rng(seed);
    FeedForwardT<double> ffn(3, 6, rng);
    auto x = T::randn({4, 3}, rng);
    auto p = T::randn({4, 3}, rng);
    return grad_check<double>([&] { return sum_all(mul(ffn.forward(x), p)); },
                              {x, ffn.inner.w, ffn.inner.b, ffn.outer.w, ffn.outer.b});
  });

  run("embedding_lookup", [](std::uint64_t seed) {
    Rng rng(seed);
    auto table = T::randn({5, 3}, rng);
    auto p = T::randn({4, 3}, rng);
    return grad_check<double>(
        [&] { return sum_all(mul(embedding_lookup({0, 2, 2, 4}, table), p)); }, {table});
  });

  run("avg_pool_1d", [](std::uint64_t seed) {
    Rng rng(seed);
    auto x = T::randn({13, 3}, rng);
    auto p = T::randn({2, 3}, rng);
    return grad_check<double>([&] { return sum_all(mul(avg_pool_1d(x, 8, 4), p)); }, {x});
  });

  run("prenet", [](std::uint64_t seed) {
    Rng rng(seed);
    PrenetT<double> pn(4, 3, 6, rng);
    auto x = T::randn({3, 4}, rng);
    auto p = T::randn({3, 6}, rng);
    std::vector<T> inputs{x,       pn.fc1.w,  pn.fc2.w,    pn.proj.w,
                          pn.fc1.b, pn.fc2.b, pn.proj.b,   pn.norm.gamma,
                          pn.norm.beta};
    return grad_check<double>([&] { return sum_all(mul(pn.forward(x), p)); }, inputs);
  });

  run("postnet", [](std::uint64_t seed) {
    Rng rng(seed);
    PostnetT<double> post(4, 4, 5, 5, rng);
    for (auto& v : post.convs.back().w.mutable_values()) v = rng.normal(0.0, 0.1);
    auto mel = T::randn({6, 4}, rng);
    auto p = T::randn({6, 4}, rng);
    std::vector<T> inputs{mel};
    for (auto& c : post.convs) {
      inputs.push_back(c.w);
      inputs.push_back(c.b);
    }
    return grad_check<double>([&] { return sum_all(mul(post.forward(mel), p)); }, inputs);
  });

  run("fuse_block", [](std::uint64_t seed) {
    auto cfg = ModelConfig::micro();
    Rng rng(seed);
    FuseBlockT<double> block(cfg, rng);
    for (auto& v : block.cross_attn.wo.w.mutable_values()) v = rng.normal(0.0, 0.2);
    auto x = T::randn({3, cfg.d_model}, rng);
    StyleRepresentationT<double> style{T::randn({4, cfg.d_model}, rng), true};
    auto p = T::randn({3, cfg.d_model}, rng);
    ForwardCtxT<double> ctx;
    ParamSetT<double> ps;
    block.register_params(ps, "b");
    std::vector<T> inputs{x, style.frames};
    for (std::size_t i = 0; i < ps.size(); ++i) inputs.push_back(ps[i].tensor);
    return grad_check<double>(
        [&] { return sum_all(mul(block.forward(x, style, ctx, true), p)); }, inputs);
  });

  run("full_model_tts_loss", [](std::uint64_t seed) {
    auto cfg = ModelConfig::micro();
    ModelT<double> model(cfg, seed);
    Rng wake(seed + 1000);
    for (auto& block : model.fuse_blocks)
      for (auto& v : block.cross_attn.wo.w.mutable_values()) v = wake.normal(0.0, 0.2);
    for (auto& v : model.postnet.convs.back().w.mutable_values()) v = wake.normal(0.0, 0.2);

    Rng rng(seed + 2000);
    PhonemeSeq phonemes;
    for (int i = 0; i < 3; ++i)
      phonemes.push_back(int(rng.uniform_int(0, std::int64_t(cfg.vocab) - 1)));
    auto target = T::randn({6, cfg.n_mels}, rng, 0.5);
    auto style_feat = model.extractor.extract(target, "sty");
    auto other = T::randn({9, cfg.n_mels}, rng, 0.5);
    auto spk_feat = model.extractor.extract(other, "spk");

    auto params = model.parameters();
    std::vector<T> inputs;
    for (std::size_t i = 0; i < params.size(); ++i) inputs.push_back(params[i].tensor);
    Rng fwd_rng(seed + 3000);
    return grad_check<double>(
        [&] {
          return model
              .forward_training(style_feat, spk_feat, phonemes, target, fwd_rng,
                                /*training=*/false, /*truncate=*/false)
              .loss.total;
        },
        inputs);
  });

  return entries;
}

}  // namespace lsttts

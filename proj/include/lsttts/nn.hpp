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

// Neural building blocks: linear/layer-norm wrappers, multi-head attention,
// sinusoidal position encoding with a learnable scale, feed-forward, a single
// LSTM layer, embedding lookup, 1-D average pooling, decoder pre-net and the
// convolutional post-net.

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lsttts/optim.hpp"
#include "lsttts/rng.hpp"
#include "lsttts/tensor.hpp"

namespace lsttts {

template <typename S>
TensorT<S> xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  return TensorT<S>::rand_uniform({fan_in, fan_out}, rng, -limit, limit);
}

// Per-call forward context; rng is only touched when dropout is active.
template <typename S>
struct ForwardCtxT {
  bool training = false;
  Rng* rng = nullptr;
  S dropout = S(0);
};

// Inverted dropout; identity when not training or p == 0.
template <typename S>
TensorT<S> dropout(const TensorT<S>& x, const ForwardCtxT<S>& ctx) {
  if (!ctx.training || ctx.dropout <= S(0)) return x;
  const S keep = S(1) - ctx.dropout;
  auto mask = TensorT<S>::zeros(x.shape());
  auto& mv = mask.mutable_values();
  for (auto& m : mv) m = ctx.rng->bernoulli(double(ctx.dropout)) ? S(0) : S(1) / keep;
  return mul(x, mask);
}

template <typename S>
struct LinearT {
  TensorT<S> w;  // [in, out]
  TensorT<S> b;  // [out]; undefined when constructed without a bias

  LinearT() = default;
  LinearT(std::size_t in, std::size_t out, Rng& rng, bool zero_init = false, bool bias = true) {
    w = zero_init ? TensorT<S>::zeros({in, out}) : xavier_uniform<S>(in, out, rng);
    w.set_requires_grad(true);
    if (bias) {
      b = TensorT<S>::zeros({out});
      b.set_requires_grad(true);
    }
  }

  TensorT<S> forward(const TensorT<S>& x) const {
    auto y = matmul(x, w);
    return b.defined() ? add(y, b) : y;
  }

  void register_params(ParamSetT<S>& ps, const std::string& prefix) {
    ps.add(prefix + ".weight", w);
    if (b.defined()) ps.add(prefix + ".bias", b);
  }
};

template <typename S>
struct LayerNormT {
  TensorT<S> gamma, beta;
  S eps = S(1e-5);

  LayerNormT() = default;
  explicit LayerNormT(std::size_t d) {
    gamma = TensorT<S>::full({d}, S(1));
    beta = TensorT<S>::zeros({d});
    gamma.set_requires_grad(true);
    beta.set_requires_grad(true);
  }

  TensorT<S> forward(const TensorT<S>& x) const { return layer_norm(x, gamma, beta, eps); }

  void register_params(ParamSetT<S>& ps, const std::string& prefix) {
    ps.add(prefix + ".gamma", gamma);
    ps.add(prefix + ".beta", beta);
  }
};

// Boolean attention mask as a 0/1 tensor, true = attend.
template <typename S>
TensorT<S> causal_mask(std::size_t T) {
  auto m = TensorT<S>::zeros({T, T});
  auto& v = m.mutable_values();
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = 0; j <= i; ++j) v[i * T + j] = S(1);
  return m;
}

template <typename S>
struct MhaOutT {
  TensorT<S> out;      // [Tq, d_model]
  TensorT<S> weights;  // [heads, Tq, Tk]
};

template <typename S>
struct MhaT {
  std::size_t n_heads = 0;
  std::size_t d_model = 0;
  LinearT<S> wq, wk, wv, wo;

  MhaT() = default;
  MhaT(std::size_t d, std::size_t heads, Rng& rng, bool zero_out_proj = false)
      : n_heads(heads), d_model(d) {
    if (d % heads != 0)
      shape_error("multi_head_attention",
                  "d_model " + std::to_string(d) + " not divisible by heads " +
                      std::to_string(heads));
    wq = LinearT<S>(d, d, rng);
    // A key bias shifts every logit of a query row equally, which softmax
    // cancels; the parameter would never receive gradient.
    wk = LinearT<S>(d, d, rng, false, /*bias=*/false);
    wv = LinearT<S>(d, d, rng);
    wo = LinearT<S>(d, d, rng, zero_out_proj);
  }

  struct KV {
    TensorT<S> k, v;  // projected, pre head-split: [Tk, d_model]
  };

  KV project_kv(const TensorT<S>& k_in, const TensorT<S>& v_in) const {
    return {wk.forward(k_in), wv.forward(v_in)};
  }

  MhaOutT<S> forward_projected(const TensorT<S>& q_in, const KV& kv,
                               const TensorT<S>* mask = nullptr) const {
    const std::size_t Tq = q_in.shape()[0];
    const std::size_t Tk = kv.k.shape()[0];
    const std::size_t dh = d_model / n_heads;
    if (q_in.shape()[1] != d_model)
      shape_error("multi_head_attention", "query width " + shape_to_string(q_in.shape()) +
                                              " does not match d_model " +
                                              std::to_string(d_model));
    if (mask) {
      if (mask->shape() != Shape{Tq, Tk})
        shape_error("multi_head_attention", "mask " + shape_to_string(mask->shape()) +
                                                " does not match [Tq,Tk] = [" +
                                                std::to_string(Tq) + "," + std::to_string(Tk) +
                                                "]");
      const auto& mv = mask->values();
      for (std::size_t r = 0; r < Tq; ++r) {
        bool any = false;
        for (std::size_t c = 0; c < Tk; ++c) any = any || mv[r * Tk + c] != S(0);
        if (!any)
          throw std::runtime_error("multi_head_attention: query row " + std::to_string(r) +
                                   " is fully masked");
      }
    }
    auto split = [&](const TensorT<S>& t, std::size_t T) {
      return transpose(reshape(t, {T, n_heads, dh}), 0, 1);  // [h, T, dh]
    };
    auto Q = split(wq.forward(q_in), Tq);
    auto K = split(kv.k, Tk);
    auto V = split(kv.v, Tk);
    auto scores = scale(matmul(Q, transpose(K, 1, 2)), S(1) / S(std::sqrt(double(dh))));
    if (mask) scores = masked_fill(scores, *mask, -std::numeric_limits<S>::infinity());
    auto weights = softmax(scores, 2);
    auto ctx = reshape(transpose(matmul(weights, V), 0, 1), {Tq, d_model});
    return {wo.forward(ctx), weights};
  }

  MhaOutT<S> forward(const TensorT<S>& q_in, const TensorT<S>& k_in, const TensorT<S>& v_in,
                     const TensorT<S>* mask = nullptr) const {
    return forward_projected(q_in, project_kv(k_in, v_in), mask);
  }

  void register_params(ParamSetT<S>& ps, const std::string& prefix) {
    wq.register_params(ps, prefix + ".wq");
    wk.register_params(ps, prefix + ".wk");
    wv.register_params(ps, prefix + ".wv");
    wo.register_params(ps, prefix + ".wo");
  }
};

// Sinusoidal table, constant (the learnable part is the per-usage scale).
template <typename S>
TensorT<S> sinusoid_table(std::size_t T, std::size_t d) {
  auto t = TensorT<S>::zeros({T, d});
  auto& v = t.mutable_values();
  for (std::size_t pos = 0; pos < T; ++pos) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double angle = double(pos) * std::exp(-double(i) * std::log(10000.0) / double(d));
      v[pos * d + i] = S(std::sin(angle));
      if (i + 1 < d) v[pos * d + i + 1] = S(std::cos(angle));
    }
  }
  return t;
}

template <typename S>
struct PositionalEncodingT {
  std::size_t d_model = 0;
  TensorT<S> scale;  // learnable scalar

  PositionalEncodingT() = default;
  explicit PositionalEncodingT(std::size_t d) : d_model(d) {
    scale = TensorT<S>::scalar(S(1));
    scale.set_requires_grad(true);
  }

  TensorT<S> forward(std::size_t length) const {
    return mul(sinusoid_table<S>(length, d_model), scale);
  }

  void register_params(ParamSetT<S>& ps, const std::string& prefix) {
    ps.add(prefix + ".scale", scale);
  }
};

template <typename S>
struct FeedForwardT {
  LinearT<S> inner, outer;

  FeedForwardT() = default;
  FeedForwardT(std::size_t d, std::size_t width, Rng& rng)
      : inner(d, width, rng), outer(width, d, rng) {}

  TensorT<S> forward(const TensorT<S>& x) const {
    return outer.forward(relu(inner.forward(x)));
  }

  void register_params(ParamSetT<S>& ps, const std::string& prefix) {
    inner.register_params(ps, prefix + ".inner");
    outer.register_params(ps, prefix + ".outer");
  }
};

// Single-layer LSTM. Gate order along the packed width is (input, forget,
// cell, output); the forget-gate bias starts at 1.
template <typename S>
struct LstmParamsT {
  std::size_t input_dim = 0, hidden_dim = 0;
  TensorT<S> wx;  // [input_dim, 4H]
  TensorT<S> wh;  // [hidden_dim, 4H]
  TensorT<S> b;   // [4H]

  LstmParamsT() = default;
  LstmParamsT(std::size_t in, std::size_t hidden, Rng& rng) : input_dim(in), hidden_dim(hidden) {
    wx = xavier_uniform<S>(in, 4 * hidden, rng);
    wh = xavier_uniform<S>(hidden, 4 * hidden, rng);
    b = TensorT<S>::zeros({4 * hidden});
    auto& bv = b.mutable_values();
    for (std::size_t i = hidden; i < 2 * hidden; ++i) bv[i] = S(1);
    wx.set_requires_grad(true);
    wh.set_requires_grad(true);
    b.set_requires_grad(true);
  }

  void register_params(ParamSetT<S>& ps, const std::string& prefix) {
    ps.add(prefix + ".wx", wx);
    ps.add(prefix + ".wh", wh);
    ps.add(prefix + ".bias", b);
  }
};

// Returns the full hidden-state sequence [T, hidden]; h0 = c0 = 0.
template <typename S>
TensorT<S> lstm_forward(const TensorT<S>& x, const LstmParamsT<S>& p) {
  if (x.rank() != 2 || x.shape()[1] != p.input_dim)
    shape_error("lstm_forward", "input " + shape_to_string(x.shape()) + " does not match " +
                                    std::to_string(p.input_dim) + " input features");
  const std::size_t T = x.shape()[0];
  const std::size_t H = p.hidden_dim;
  auto xz = matmul(x, p.wx);  // gate preactivations from the input, all steps
  auto h = TensorT<S>::zeros({1, H});
  auto c = TensorT<S>::zeros({1, H});
  std::vector<TensorT<S>> hs;
  hs.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    auto z = add(add(slice(xz, 0, t, 1), matmul(h, p.wh)), p.b);
    auto i_gate = sigmoid(slice(z, 1, 0, H));
    auto f_gate = sigmoid(slice(z, 1, H, H));
    auto g_gate = tanh_op(slice(z, 1, 2 * H, H));
    auto o_gate = sigmoid(slice(z, 1, 3 * H, H));
    c = add(mul(f_gate, c), mul(i_gate, g_gate));
    h = mul(o_gate, tanh_op(c));
    hs.push_back(h);
  }
  return concat(hs, 0);
}

// Row gather; ids out of range raise before any graph node is built.
template <typename S>
TensorT<S> embedding_lookup(const std::vector<int>& ids, const TensorT<S>& table) {
  return gather_rows(table, ids);
}

// Non-padded pooling windows. When T < kernel a single window averages the
// whole sequence, so short references still produce one style frame.
template <typename S>
TensorT<S> avg_pool_1d(const TensorT<S>& x, std::size_t kernel, std::size_t stride) {
  if (x.rank() != 2) shape_error("avg_pool_1d", "input must be [T, d]");
  const std::size_t T = x.shape()[0];
  if (T == 0) shape_error("avg_pool_1d", "empty input");
  if (T < kernel) return mean_axis(x, 0, true);
  const std::size_t out_len = (T - kernel) / stride + 1;
  std::vector<TensorT<S>> windows;
  windows.reserve(out_len);
  for (std::size_t w = 0; w < out_len; ++w)
    windows.push_back(mean_axis(slice(x, 0, w * stride, kernel), 0, true));
  return concat(windows, 0);
}

inline std::size_t avg_pool_output_length(std::size_t T, std::size_t kernel, std::size_t stride) {
  return T < kernel ? 1 : (T - kernel) / stride + 1;
}

// Decoder pre-net: two ReLU layers at the bottleneck width, projection to
// d_model, then layer norm. Training-time dropout on the bottleneck keeps
// the decoder from leaning on verbatim feedback frames; without it the
// model times phoneme boundaries by counting repeats in the teacher-forced
// input instead of reading the style, and rate transfer never emerges.
template <typename S>
struct PrenetT {
  LinearT<S> fc1, fc2, proj;
  LayerNormT<S> norm;
  S dropout_p = S(0);

  PrenetT() = default;
  PrenetT(std::size_t n_mels, std::size_t bottleneck, std::size_t d_model, Rng& rng,
          S dropout = S(0))
      : fc1(n_mels, bottleneck, rng),
        fc2(bottleneck, bottleneck, rng),
        proj(bottleneck, d_model, rng),
        norm(d_model),
        dropout_p(dropout) {}

  TensorT<S> forward(const TensorT<S>& frames, const ForwardCtxT<S>& ctx = {}) const {
    ForwardCtxT<S> own{ctx.training, ctx.rng, dropout_p};
    auto h = dropout(relu(fc1.forward(frames)), own);
    h = dropout(relu(fc2.forward(h)), own);
    return norm.forward(proj.forward(h));
  }

  void register_params(ParamSetT<S>& ps, const std::string& prefix) {
    fc1.register_params(ps, prefix + ".fc1");
    fc2.register_params(ps, prefix + ".fc2");
    proj.register_params(ps, prefix + ".proj");
    norm.register_params(ps, prefix + ".norm");
  }
};

// 1-D convolution over time via unfold + matmul, same zero padding.
template <typename S>
struct Conv1dT {
  std::size_t kernel = 0, in_ch = 0, out_ch = 0;
  TensorT<S> w;  // [kernel * in_ch, out_ch]
  TensorT<S> b;  // [out_ch]

  Conv1dT() = default;
  Conv1dT(std::size_t in, std::size_t out, std::size_t k, Rng& rng, bool zero_init = false)
      : kernel(k), in_ch(in), out_ch(out) {
    w = zero_init ? TensorT<S>::zeros({k * in, out})
                  : xavier_uniform<S>(k * in, out, rng);
    b = TensorT<S>::zeros({out});
    w.set_requires_grad(true);
    b.set_requires_grad(true);
  }

  TensorT<S> forward(const TensorT<S>& x) const {
    const std::size_t T = x.shape()[0];
    const std::size_t half = kernel / 2;
    auto padded = pad_axis(x, 0, half, kernel - 1 - half);
    std::vector<TensorT<S>> taps;
    taps.reserve(kernel);
    for (std::size_t off = 0; off < kernel; ++off) taps.push_back(slice(padded, 0, off, T));
    return add(matmul(concat(taps, 1), w), b);
  }

  void register_params(ParamSetT<S>& ps, const std::string& prefix) {
    ps.add(prefix + ".weight", w);
    ps.add(prefix + ".bias", b);
  }
};

// Residual post-net: 5-layer conv stack, tanh on all but the last layer, final
// layer zero-initialized so the stack starts as the identity refinement.
template <typename S>
struct PostnetT {
  std::vector<Conv1dT<S>> convs;

  PostnetT() = default;
  PostnetT(std::size_t n_mels, std::size_t channels, std::size_t kernel, std::size_t layers,
           Rng& rng) {
    convs.reserve(layers);
    for (std::size_t i = 0; i < layers; ++i) {
      const std::size_t in = i == 0 ? n_mels : channels;
      const std::size_t out = i + 1 == layers ? n_mels : channels;
      convs.emplace_back(in, out, kernel, rng, /*zero_init=*/i + 1 == layers);
    }
  }

  // mel -> mel + correction(mel)
  TensorT<S> forward(const TensorT<S>& mel) const {
    auto h = mel;
    for (std::size_t i = 0; i < convs.size(); ++i) {
      h = convs[i].forward(h);
      if (i + 1 < convs.size()) h = tanh_op(h);
    }
    return add(mel, h);
  }

  void register_params(ParamSetT<S>& ps, const std::string& prefix) {
    for (std::size_t i = 0; i < convs.size(); ++i)
      convs[i].register_params(ps, prefix + ".conv" + std::to_string(i));
  }
};

}  // namespace lsttts

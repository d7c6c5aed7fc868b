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

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "lsttts/tensor.hpp"

namespace lsttts {

template <typename S>
struct ParameterT {
  std::string name;  // dotted path, unique within a model; checkpoint identity
  TensorT<S> tensor;
};

// Ordered, name-addressable set of trainable tensors. Registration order is
// fixed, which pins the gradient-clipping and update order.
template <typename S>
class ParamSetT {
 public:
  void add(const std::string& name, const TensorT<S>& tensor) {
    if (index_.count(name))
      throw std::runtime_error("ParamSet: duplicate parameter name '" + name + "'");
    index_[name] = entries_.size();
    entries_.push_back({name, tensor});
  }

  std::size_t size() const { return entries_.size(); }
  const ParameterT<S>& operator[](std::size_t i) const { return entries_[i]; }
  ParameterT<S>& operator[](std::size_t i) { return entries_[i]; }

  const TensorT<S>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].tensor;
  }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
  }

 private:
  std::vector<ParameterT<S>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename S>
struct AdamConfigT {
  S lr = S(2e-4);
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
  // Global gradient-norm clipping, applied before the update. <= 0 disables.
  S clip_norm = S(1.0);
};

// Adam with bias correction. step() consumes the populated grad buffers and
// leaves every parameter's grad cleared.
template <typename S>
class AdamT {
 public:
  AdamT() = default;
  AdamT(const ParamSetT<S>& params, AdamConfigT<S> cfg) : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.emplace_back(p.tensor.size(), S(0));
      v_.emplace_back(p.tensor.size(), S(0));
    }
  }

  long step_count() const { return step_; }
  const AdamConfigT<S>& config() const { return cfg_; }

  void step(ParamSetT<S>& params) {
    if (m_.size() != params.size())
      throw std::runtime_error("adam: state tracks " + std::to_string(m_.size()) +
                               " parameters, model has " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].tensor.has_grad())
        throw std::runtime_error("adam: parameter '" + params[i].name + "' has no gradient");
      if (params[i].tensor.grad().size() != m_[i].size())
        throw std::runtime_error("adam: state shape mismatch for '" + params[i].name + "'");
    }
    if (cfg_.clip_norm > S(0)) clip_global_norm(params);
    ++step_;
    const S bc1 = S(1) - std::pow(cfg_.beta1, S(step_));
    const S bc2 = S(1) - std::pow(cfg_.beta2, S(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& theta = params[i].tensor.mutable_values();
      const auto& g = params[i].tensor.grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < theta.size(); ++j) {
        m[j] = cfg_.beta1 * m[j] + (S(1) - cfg_.beta1) * g[j];
        v[j] = cfg_.beta2 * v[j] + (S(1) - cfg_.beta2) * g[j] * g[j];
        const S mhat = m[j] / bc1;
        const S vhat = v[j] / bc2;
        theta[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
      params[i].tensor.clear_grad();
    }
  }

  const std::vector<S>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<S>& second_moment(std::size_t i) const { return v_[i]; }
  std::vector<S>& first_moment(std::size_t i) { return m_[i]; }
  std::vector<S>& second_moment(std::size_t i) { return v_[i]; }
  void set_step_count(long s) { step_ = s; }

 private:
  void clip_global_norm(ParamSetT<S>& params) {
    double sq = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i)
      for (S g : params[i].tensor.grad()) sq += double(g) * double(g);
    const double norm = std::sqrt(sq);
    if (norm <= double(cfg_.clip_norm) || norm == 0.0) return;
    const S factor = S(double(cfg_.clip_norm) / norm);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& node = params[i].tensor.node();
      for (auto& g : node->grad) g *= factor;
    }
  }

  AdamConfigT<S> cfg_;
  long step_ = 0;
  std::vector<std::vector<S>> m_, v_;
};

using ParamSet = ParamSetT<float>;
using Adam = AdamT<float>;
using AdamConfig = AdamConfigT<float>;

}  // namespace lsttts

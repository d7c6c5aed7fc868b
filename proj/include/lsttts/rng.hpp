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

// Seeded PRNG (xoshiro256**) with a fully serializable state so training
// runs can be checkpointed and resumed bit-exactly. std::mt19937 and the
// std distributions are avoided on purpose: their draw sequences are
// implementation-defined, ours are pinned.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <string>

namespace lsttts {

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    // splitmix64 expansion of the seed into the xoshiro state
    std::uint64_t x = seed;
    for (auto& s : state_) {
      x += 0x9e3779b97f4a7c15ULL;
      std::uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      s = z ^ (z >> 31);
    }
    has_spare_ = false;
    spare_ = 0.0;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [lo, hi], inclusive, unbiased via rejection
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw std::invalid_argument("Rng::uniform_int: lo > hi");
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(next_u64());  // full 64-bit span
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return lo + static_cast<std::int64_t>(v % range);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // standard normal, Box-Muller with one cached spare
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] so the log is finite
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Hex text round-trip of the full state, including the Box-Muller spare.
  std::string serialize() const {
    char buf[160];
    std::uint64_t spare_bits = 0;
    std::memcpy(&spare_bits, &spare_, sizeof(spare_bits));
    std::snprintf(buf, sizeof(buf), "%016llx:%016llx:%016llx:%016llx:%d:%016llx",
                  static_cast<unsigned long long>(state_[0]),
                  static_cast<unsigned long long>(state_[1]),
                  static_cast<unsigned long long>(state_[2]),
                  static_cast<unsigned long long>(state_[3]), has_spare_ ? 1 : 0,
                  static_cast<unsigned long long>(spare_bits));
    return std::string(buf);
  }

  static Rng deserialize(const std::string& text) {
    Rng rng;
    unsigned long long s0 = 0, s1 = 0, s2 = 0, s3 = 0, spare_bits = 0;
    int flag = 0;
    const int n = std::sscanf(text.c_str(), "%llx:%llx:%llx:%llx:%d:%llx", &s0, &s1, &s2, &s3,
                              &flag, &spare_bits);
    if (n != 6) throw std::runtime_error("Rng::deserialize: malformed state string");
    rng.state_ = {s0, s1, s2, s3};
    rng.has_spare_ = flag != 0;
    std::uint64_t bits = spare_bits;
    std::memcpy(&rng.spare_, &bits, sizeof(bits));
    return rng;
  }

  bool operator==(const Rng& other) const {
    return state_ == other.state_ && has_spare_ == other.has_spare_ &&
           (has_spare_ ? spare_ == other.spare_ : true);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> state_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace lsttts

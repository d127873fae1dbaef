// Copyright 2026 The tds authors
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

#ifndef TDS_RNG_HPP
#define TDS_RNG_HPP

#include <array>
#include <cmath>
#include <cstdint>

namespace tds {

// Philox4x32-10 counter-based generator. Every random draw in the samplers is
// addressed by (seed, purpose, step, lane, block), so a draw does not depend on
// how work is split across threads. Constants and round structure follow the
// original Random123 specification; test_rng pins the published test vectors.
struct Philox4x32 {
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t(kMul0) * ctr[0];
      const std::uint64_t p1 = std::uint64_t(kMul1) * ctr[2];
      ctr = {std::uint32_t(p1 >> 32) ^ ctr[1] ^ key[0], std::uint32_t(p1),
             std::uint32_t(p0 >> 32) ^ ctr[3] ^ key[1], std::uint32_t(p0)};
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }
};

// Stream purposes. Keeping them distinct guarantees that, say, the resampling
// draw at step t can never collide with a proposal draw at the same step.
namespace stream {
inline constexpr std::uint32_t kInit = 1;
inline constexpr std::uint32_t kProposal = 2;
inline constexpr std::uint32_t kResample = 3;
inline constexpr std::uint32_t kObservationPath = 4;
inline constexpr std::uint32_t kTest = 900;
}  // namespace stream

// One logical random stream, identified by (seed, purpose, step, lane).
// Draws consume whole Philox blocks in order, so a stream's output sequence is
// a pure function of its identity.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint32_t purpose, std::uint32_t step,
            std::uint32_t lane)
      : key_{std::uint32_t(seed), std::uint32_t(seed >> 32)},
        tag_{0, purpose, step, lane} {}

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() {
    const auto b = next_block();
    return to_unit(b[0], b[1]);
  }

  // Standard normal via Box-Muller; one block yields a pair, the second value
  // is cached for the next call.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const auto b = next_block();
    // u1 in (0, 1] so the log is finite.
    const double u1 = to_unit_open(b[0], b[1]);
    const double u2 = to_unit(b[2], b[3]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  template <typename Vec>
  void fill_normal(Vec&& out) {
    for (int i = 0; i < out.size(); ++i) out[i] = normal();
  }

 private:
  std::array<std::uint32_t, 4> next_block() {
    auto ctr = tag_;
    ctr[0] = block_++;
    return Philox4x32::block(ctr, key_);
  }
  static double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t w = (std::uint64_t(hi) << 32) | lo;
    return double(w >> 11) * 0x1.0p-53;
  }
  static double to_unit_open(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t w = (std::uint64_t(hi) << 32) | lo;
    return double((w >> 11) + 1) * 0x1.0p-53;
  }

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> tag_;
  std::uint32_t block_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// FNV-1a, used to derive per-row seeds in benchmark sweeps.
inline std::uint64_t fnv1a64(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= std::uint8_t(data[i]);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace tds

#endif  // TDS_RNG_HPP

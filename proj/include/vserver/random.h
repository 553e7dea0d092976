// Copyright 2026 The Validation Server Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VSERVER_RANDOM_H_
#define VSERVER_RANDOM_H_

#include <array>
#include <cstdint>
#include <random>
#include <string_view>

#include "absl/status/status.h"

namespace vserver {

enum class RandomMode { kSecure, kSeeded, kNoiseOff };

// Source of mechanism noise. Secure mode draws from the operating system
// CSPRNG and cannot be seeded. Seeded mode is a reproducible stream used for
// previews, simulations and tests. Noise-off mode returns zero noise and is
// only reachable from translation units compiled with VSERVER_TESTING.
class RandomSource {
 public:
  static RandomSource Secure();
  static RandomSource Seeded(std::uint64_t seed);
#ifdef VSERVER_TESTING
  static RandomSource NoiseOffForTesting() {
    return RandomSource(RandomMode::kNoiseOff, 0);
  }
#endif

  RandomMode mode() const { return mode_; }
  bool noise_off() const { return mode_ == RandomMode::kNoiseOff; }

  // FailedPrecondition in secure mode.
  absl::Status Reseed(std::uint64_t seed);

  std::uint64_t NextU64();
  // Uniform on the open interval (0, 1), 53 bits of resolution.
  double UniformOpen();
  // One draw from Laplace(0, scale). Exactly 0 in noise-off mode.
  double Laplace(double scale);

 private:
  RandomSource(RandomMode mode, std::uint64_t seed);
  void Refill();

  RandomMode mode_;
  std::mt19937_64 engine_;
  std::array<std::uint64_t, 64> pool_{};
  std::size_t pool_pos_ = 64;
};

// Deterministic 64-bit mix of a base seed and a label, for deriving
// independent sub-streams (per query, per replicate batch).
std::uint64_t DeriveSeed(std::uint64_t base, std::string_view label);

}  // namespace vserver

#endif  // VSERVER_RANDOM_H_

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

#include "vserver/random.h"

#include <cmath>

#include <openssl/rand.h>

#include "vserver/check.h"

namespace vserver {

RandomSource::RandomSource(RandomMode mode, std::uint64_t seed)
    : mode_(mode), engine_(seed) {}

RandomSource RandomSource::Secure() { return RandomSource(RandomMode::kSecure, 0); }

RandomSource RandomSource::Seeded(std::uint64_t seed) {
  return RandomSource(RandomMode::kSeeded, seed);
}

absl::Status RandomSource::Reseed(std::uint64_t seed) {
  if (mode_ == RandomMode::kSecure) {
    return absl::FailedPreconditionError("secure random source cannot be seeded");
  }
  engine_.seed(seed);
  return absl::OkStatus();
}

void RandomSource::Refill() {
  const int ok = RAND_bytes(reinterpret_cast<unsigned char*>(pool_.data()),
                            static_cast<int>(sizeof(pool_)));
  VSERVER_CHECK(ok == 1, "RAND_bytes failed");
  pool_pos_ = 0;
}

std::uint64_t RandomSource::NextU64() {
  if (mode_ != RandomMode::kSecure) return engine_();
  if (pool_pos_ == pool_.size()) Refill();
  return pool_[pool_pos_++];
}

double RandomSource::UniformOpen() {
  return (static_cast<double>(NextU64() >> 11) + 0.5) * 0x1.0p-53;
}

double RandomSource::Laplace(double scale) {
  VSERVER_CHECK(scale > 0 && std::isfinite(scale), "Laplace scale must be > 0");
  if (mode_ == RandomMode::kNoiseOff) return 0.0;
  const double v = UniformOpen() - 0.5;
  const double magnitude = -scale * std::log1p(-2.0 * std::fabs(v));
  return v < 0 ? -magnitude : magnitude;
}

std::uint64_t DeriveSeed(std::uint64_t base, std::string_view label) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(base);
  for (unsigned char c : label) h = mix(h ^ c);
  return h;
}

}  // namespace vserver

/*
 * Copyright 2026 The dpfl-sim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "dpfl/rng.h"

namespace dpfl {

uint64_t SplitMix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t DeriveSeed(uint64_t master, std::initializer_list<uint64_t> path) {
  uint64_t h = SplitMix64(master);
  for (uint64_t p : path) h = SplitMix64(h ^ SplitMix64(p));
  return h;
}

RngEngine MakeStream(uint64_t master, StreamTag tag,
                     std::initializer_list<uint64_t> path) {
  uint64_t h = DeriveSeed(master, {static_cast<uint64_t>(tag)});
  for (uint64_t p : path) h = SplitMix64(h ^ SplitMix64(p));
  // Seed the full engine state through seed_seq rather than a single word.
  std::seed_seq seq{static_cast<uint32_t>(h), static_cast<uint32_t>(h >> 32),
                    static_cast<uint32_t>(SplitMix64(h)),
                    static_cast<uint32_t>(SplitMix64(h) >> 32)};
  return RngEngine(seq);
}

}  // namespace dpfl

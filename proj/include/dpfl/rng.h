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

#ifndef DPFL_RNG_H_
#define DPFL_RNG_H_

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dpfl {

// Every random draw in the simulator comes from an engine derived from the
// single master seed plus a path of integers naming the consumer. Streams
// for different paths are statistically independent, and a stream depends
// only on its path, never on the order in which other streams were used.
using RngEngine = std::mt19937_64;

enum class StreamTag : uint64_t {
  kModelInit = 1,
  kClassMeans = 2,
  kSamples = 3,
  kPartition = 4,
  kTrainTestSplit = 5,
  kClientSampling = 6,
  kClientRound = 7,
  kFineTune = 8,
};

uint64_t SplitMix64(uint64_t x);

uint64_t DeriveSeed(uint64_t master, std::initializer_list<uint64_t> path);

RngEngine MakeStream(uint64_t master, StreamTag tag,
                     std::initializer_list<uint64_t> path = {});

}  // namespace dpfl

#endif  // DPFL_RNG_H_

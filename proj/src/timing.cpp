/*
 * Copyright 2026 The clonesim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "clonesim/timing.hpp"

#include <stdexcept>

namespace clonesim {

void LatencyModel::validate() const {
  if (hit_mean <= 0 || miss_mean <= hit_mean) {
    throw std::invalid_argument("latency means must satisfy 0 < hit < miss");
  }
  if (hit_sigma <= 0 || miss_sigma <= 0) {
    throw std::invalid_argument("latency sigmas must be positive");
  }
  if (truncate_k <= 0 || support_k < truncate_k) {
    throw std::invalid_argument("support band must contain the truncation band");
  }
  // The two populations must be separable: their support bands may not
  // overlap, otherwise no threshold can classify a single access.
  if (hit_mean + support_k * hit_sigma >= miss_mean - support_k * miss_sigma) {
    throw std::invalid_argument("hit and miss latency supports overlap");
  }
}

}  // namespace clonesim

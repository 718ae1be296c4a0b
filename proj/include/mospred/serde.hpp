// Copyright 2026 The mospred Authors
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
//
// JSON adapters for config structs. Every key keeps its documented name.

#pragma once

#include <json.hpp>

#include "mospred/augment.hpp"
#include "mospred/losses.hpp"

namespace mospred {

using Json = nlohmann::json;

namespace serde {

// Missing keys keep the default already present in `out`.
template <typename T>
void get_to_if_present(const Json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace serde

inline void to_json(Json& j, const LossConfig& c) {
  j = Json{{"alpha", c.alpha},
           {"tau", c.tau},
           {"beta", c.beta},
           {"gamma", c.gamma},
           {"cross_domain_pairs", c.cross_domain_pairs}};
}

inline void from_json(const Json& j, LossConfig& c) {
  serde::get_to_if_present(j, "alpha", c.alpha);
  serde::get_to_if_present(j, "tau", c.tau);
  serde::get_to_if_present(j, "beta", c.beta);
  serde::get_to_if_present(j, "gamma", c.gamma);
  serde::get_to_if_present(j, "cross_domain_pairs", c.cross_domain_pairs);
}

inline void to_json(Json& j, const AugmentConfig& c) {
  j = Json{{"F_t", c.F_t}, {"F_p", c.F_p}, {"enabled", c.enabled}};
}

inline void from_json(const Json& j, AugmentConfig& c) {
  serde::get_to_if_present(j, "F_t", c.F_t);
  serde::get_to_if_present(j, "F_p", c.F_p);
  serde::get_to_if_present(j, "enabled", c.enabled);
}

}  // namespace mospred

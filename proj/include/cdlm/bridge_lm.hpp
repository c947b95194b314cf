// Copyright 2026 The CDLM Authors.
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

#include <cstdio>
#include <mutex>
#include <string>
#include <sys/types.h>

#include "cdlm/language_model.hpp"
#include "json.hpp"

namespace cdlm {

inline constexpr int kBridgeProtocolVersion = 1;

/// Client side of the LM bridge: a subprocess speaking newline-delimited JSON
/// on stdin/stdout. Requests are serialized per connection.
class BridgeLm : public LanguageModel {
 public:
  /// Spawns `command` through /bin/sh and performs the handshake. The served
  /// vocabulary fingerprint must match `vocab`.
  BridgeLm(const std::string& command, Vocabulary vocab);
  ~BridgeLm() override;

  BridgeLm(const BridgeLm&) = delete;
  BridgeLm& operator=(const BridgeLm&) = delete;

  const Vocabulary& vocabulary() const override { return vocab_; }
  int dim() const override { return dim_; }
  std::string name() const override { return name_; }
  LmStepOutput step(std::span<const TokenId> prefix) const override;

 private:
  nlohmann::json round_trip(const nlohmann::json& request) const;
  void shutdown();

  Vocabulary vocab_;
  int dim_ = 0;
  std::string name_;
  pid_t child_ = -1;
  std::FILE* to_child_ = nullptr;
  std::FILE* from_child_ = nullptr;
  mutable std::mutex mu_;
};

/// Validates one reply frame and converts a step reply into an LmStepOutput.
/// Exposed for protocol tests.
LmStepOutput parse_step_reply(const nlohmann::json& reply, int dim,
                              std::size_t vocab_size);

}  // namespace cdlm

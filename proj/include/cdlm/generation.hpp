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

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "cdlm/language_model.hpp"
#include "cdlm/retrieval.hpp"
#include "json.hpp"

namespace cdlm {

enum class DecodeMode { kGreedy, kSample };

DecodeMode parse_decode_mode(const std::string& name);

struct GenerationParams {
  RetrievalParams retrieval;
  DecodeMode z_mode = DecodeMode::kGreedy;
  DecodeMode token_mode = DecodeMode::kGreedy;
  std::size_t max_tokens = 64;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  bool stop_at_eos = true;

  void validate() const;
};

enum class StepKind { kLmToken, kChunk };

struct GenerationStep {
  StepKind kind = StepKind::kLmToken;
  TokenSeq tokens;
  double q = 0.0;
  double similarity = 0.0;
  std::optional<NodeId> matched_node;
  double seconds = 0.0;
};

struct GenerationCounters {
  std::size_t tokens_generated = 0;
  std::size_t lm_forward_passes = 0;
  std::size_t proposals_made = 0;
  std::size_t proposals_accepted = 0;
};

struct GenerationResult {
  TokenSeq tokens;  // continuation only, prompt excluded
  std::vector<GenerationStep> steps;
  GenerationCounters counters;
  double seconds = 0.0;
};

/// Chunk-interleaved generation. The first continuation token always comes
/// from the LM. Afterwards each step queries the entry-token trie of the last
/// token with the context vector the LM produced when predicting that token,
/// and either appends the whole proposed chunk or one LM token. An accepted
/// chunk costs one forward pass.
GenerationResult generate(const LanguageModel& lm, const ChunkDatastore& store,
                          const TokenSeq& prompt, const GenerationParams& params);

/// Token-by-token decoding with the base LM alone, using the same token
/// sampler and seed stream as `generate`.
GenerationResult decode_base(const LanguageModel& lm, const TokenSeq& prompt,
                             const GenerationParams& params);

/// Forward passes saved: 1 − passes / tokens.
double fps(const GenerationResult& result);

/// Token time saved relative to a base run: 1 − t_cdlm/token ÷ t_base/token.
double tts(const GenerationResult& cdlm, const GenerationResult& base);

/// Next token from `logprobs` by argmax or by temperature sampling.
TokenId pick_token(const Vector<double>& logprobs, DecodeMode mode,
                   double temperature, std::mt19937_64& rng);

/// Uniform double in [0, 1) from 53 random bits.
double uniform01(std::mt19937_64& rng);

nlohmann::json to_json(const GenerationResult& result, const Vocabulary& vocab);

}  // namespace cdlm

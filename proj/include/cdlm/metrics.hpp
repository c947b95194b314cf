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

#include <string>
#include <vector>

#include "cdlm/generation.hpp"
#include "json.hpp"

namespace cdlm {

struct PromptBench {
  double fps = 0.0;
  double tts = 0.0;  // median over repetitions
  std::size_t tokens = 0;
  std::size_t steps = 0;
  std::size_t proposals_made = 0;
  std::size_t proposals_accepted = 0;
};

struct BenchReport {
  std::vector<PromptBench> prompts;
  double fps = 0.0;  // 1 − Σ steps / Σ tokens
  double tts_mean = 0.0;
  double tts_median = 0.0;
  double fps_mean = 0.0;
  double fps_median = 0.0;
  std::size_t proposals_made = 0;
  std::size_t proposals_accepted = 0;
  std::size_t unique_accepted_nodes = 0;
  std::size_t keyed_nodes = 0;
  double utilization = 0.0;  // unique accepted nodes / keyed nodes
  /// Traces of the CD-LM runs from the first repetition, one per prompt.
  std::vector<GenerationResult> traces;

  nlohmann::json to_json() const;
};

/// Runs base-LM and chunk-interleaved generation for every prompt,
/// `repetitions` times each with the same seed.
BenchReport bench(const std::vector<TokenSeq>& prompts, const LanguageModel& lm,
                  const ChunkDatastore& store, const GenerationParams& params,
                  std::size_t repetitions);

struct EntityReport {
  double avg_count = 0.0;
  std::size_t unique_entities = 0;
  std::size_t total_matches = 0;
  std::size_t num_generations = 0;
  /// (entity, frequency) sorted by descending frequency, then entity.
  std::vector<std::pair<std::string, std::size_t>> rank_frequency;

  nlohmann::json to_json() const;
  std::string rank_frequency_csv() const;
};

/// Exact, non-overlapping substring counts of each entity in each generation.
EntityReport entity_coverage(const std::vector<std::string>& generations,
                             const std::vector<std::string>& entities,
                             bool case_insensitive = false);

}  // namespace cdlm

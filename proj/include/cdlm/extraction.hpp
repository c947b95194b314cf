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
#include <string>
#include <vector>

#include "cdlm/language_model.hpp"

namespace cdlm {

struct ChunkSource {
  std::uint32_t doc = 0;
  std::uint32_t offset = 0;  // token offset of the first chunk token
  std::uint16_t length = 0;  // chunk length in tokens

  auto operator<=>(const ChunkSource&) const = default;
};

/// One datastore unit: context u, entry token v and chunk s, keyed by the
/// base LM's context vector of u.
struct ChunkRecord {
  TokenSeq context_tokens;
  TokenId entry_token = 0;
  TokenSeq chunk_tokens;
  ContextVector context_vector;
  ChunkSource source;
};

struct ExtractionParams {
  double gamma = 0.9;
  std::size_t window = 512;
  std::size_t stride = 448;
  std::size_t context_len = 64;
  std::size_t min_run_len = 2;
  bool store_suffixes = true;

  void validate() const;
};

/// Mines maximal runs of tokens whose teacher probability is at least gamma,
/// window by window, and keys each run (and, optionally, each proper suffix)
/// with the base LM's context vector. Output is ordered by
/// (doc, offset, length).
std::vector<ChunkRecord> extract_chunks(const std::vector<TokenSeq>& corpus,
                                        const LanguageModel& teacher,
                                        const LanguageModel& base,
                                        const ExtractionParams& params);

struct AnnotatedSpan {
  std::uint32_t doc = 0;
  std::uint32_t start = 0;
  std::uint32_t end = 0;  // exclusive
};

struct ExpertExtraction {
  std::vector<ChunkRecord> records;
  std::size_t skipped = 0;  // spans starting at offset 0
};

/// One record per annotated span, no thresholding.
ExpertExtraction extract_expert_chunks(const std::vector<TokenSeq>& corpus,
                                       const std::vector<AnnotatedSpan>& spans,
                                       const LanguageModel& base,
                                       std::size_t context_len);

/// Newline-delimited JSON, one `{"doc":..,"start":..,"end":..}` per line.
std::vector<AnnotatedSpan> load_spans(const std::string& path);

}  // namespace cdlm

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

#include "cdlm/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace cdlm {
namespace {

ChunkRecord make_record(const TokenSeq& doc, std::size_t doc_id,
                        std::size_t region_start, std::size_t chunk_begin,
                        std::size_t chunk_end, std::size_t context_len,
                        const LanguageModel& base) {
  ChunkRecord rec;
  const std::size_t entry = chunk_begin - 1;
  const std::size_t ctx_begin =
      std::max(region_start, entry >= context_len ? entry - context_len : 0);
  rec.context_tokens.assign(doc.begin() + static_cast<std::ptrdiff_t>(ctx_begin),
                            doc.begin() + static_cast<std::ptrdiff_t>(entry));
  rec.entry_token = doc[entry];
  rec.chunk_tokens.assign(doc.begin() + static_cast<std::ptrdiff_t>(chunk_begin),
                          doc.begin() + static_cast<std::ptrdiff_t>(chunk_end));
  rec.context_vector = base.context_vector(rec.context_tokens);
  if (chunk_end - chunk_begin > std::numeric_limits<std::uint16_t>::max()) {
    throw DataError("chunk longer than 65535 tokens");
  }
  rec.source = {static_cast<std::uint32_t>(doc_id),
                static_cast<std::uint32_t>(chunk_begin),
                static_cast<std::uint16_t>(chunk_end - chunk_begin)};
  return rec;
}

}  // namespace

void ExtractionParams::validate() const {
  if (!(gamma > 0 && gamma <= 1)) throw UsageError("gamma must lie in (0, 1]");
  if (stride == 0 || stride > window) {
    throw UsageError("stride must satisfy 0 < stride <= window");
  }
  if (context_len < 1) throw UsageError("context_len must be >= 1");
  if (min_run_len < 1) throw UsageError("min_run_len must be >= 1");
}

std::vector<ChunkRecord> extract_chunks(const std::vector<TokenSeq>& corpus,
                                        const LanguageModel& teacher,
                                        const LanguageModel& base,
                                        const ExtractionParams& params) {
  params.validate();
  if (!same_vocabulary(teacher, base)) {
    throw DataError("teacher and base LM vocabularies differ");
  }
  std::vector<ChunkRecord> records;
  for (std::size_t doc_id = 0; doc_id < corpus.size(); ++doc_id) {
    const auto& doc = corpus[doc_id];
    const std::span<const TokenId> tokens(doc);
    for (std::size_t start = 0; start < doc.size(); start += params.stride) {
      const std::size_t end = std::min(start + params.window, doc.size());
      const std::size_t first = start + params.context_len;

      // Scan [first, end) for maximal runs above the threshold; the teacher
      // conditions on the window prefix only.
      std::size_t run_begin = first;
      for (std::size_t i = first; i <= end; ++i) {
        bool above = false;
        if (i < end) {
          const auto prefix = tokens.subspan(start, i - start);
          above = std::exp(teacher.token_logprob(prefix, doc[i])) >= params.gamma;
        }
        if (above) continue;
        const std::size_t run_len = i - run_begin;
        if (run_len >= params.min_run_len) {
          const std::size_t last_start =
              params.store_suffixes ? i - 1 : run_begin;
          for (std::size_t s = run_begin; s <= last_start; ++s) {
            records.push_back(make_record(doc, doc_id, start, s, i,
                                          params.context_len, base));
          }
        }
        run_begin = i + 1;
      }
      if (end == doc.size()) break;
    }
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const ChunkRecord& a, const ChunkRecord& b) {
                     return a.source < b.source;
                   });
  return records;
}

ExpertExtraction extract_expert_chunks(const std::vector<TokenSeq>& corpus,
                                       const std::vector<AnnotatedSpan>& spans,
                                       const LanguageModel& base,
                                       std::size_t context_len) {
  if (context_len < 1) throw UsageError("context_len must be >= 1");
  ExpertExtraction out;
  for (const auto& span : spans) {
    if (span.doc >= corpus.size()) {
      throw DataError("span refers to missing document " +
                      std::to_string(span.doc));
    }
    const auto& doc = corpus[span.doc];
    if (span.start >= span.end || span.end > doc.size()) {
      throw DataError("span [" + std::to_string(span.start) + ", " +
                      std::to_string(span.end) + ") out of document bounds");
    }
    if (span.start == 0) {
      ++out.skipped;
      continue;
    }
    out.records.push_back(
        make_record(doc, span.doc, 0, span.start, span.end, context_len, base));
  }
  return out;
}

std::vector<AnnotatedSpan> load_spans(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open spans file " + path);
  std::vector<AnnotatedSpan> spans;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw DataError(path + ":" + std::to_string(lineno) + ": invalid JSON");
    }
    try {
      spans.push_back({j.at("doc").get<std::uint32_t>(),
                       j.at("start").get<std::uint32_t>(),
                       j.at("end").get<std::uint32_t>()});
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return spans;
}

}  // namespace cdlm

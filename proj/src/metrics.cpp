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

#include "cdlm/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace cdlm {
namespace {

double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const auto mid = xs.size() / 2;
  return xs.size() % 2 ? xs[mid] : 0.5 * (xs[mid - 1] + xs[mid]);
}

double mean(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::size_t count_occurrences(const std::string& haystack, const std::string& needle) {
  std::size_t count = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

}  // namespace

BenchReport bench(const std::vector<TokenSeq>& prompts, const LanguageModel& lm,
                  const ChunkDatastore& store, const GenerationParams& params,
                  std::size_t repetitions) {
  if (prompts.empty()) throw UsageError("bench needs at least one prompt");
  if (repetitions < 1) throw UsageError("repetitions must be >= 1");

  BenchReport report;
  std::set<NodeId> used_nodes;
  std::size_t total_steps = 0, total_tokens = 0;
  std::vector<double> all_tts, all_fps;
  for (const auto& prompt : prompts) {
    PromptBench pb;
    std::vector<double> tts_runs;
    for (std::size_t rep = 0; rep < repetitions; ++rep) {
      const auto base = decode_base(lm, prompt, params);
      auto run = generate(lm, store, prompt, params);
      tts_runs.push_back(tts(run, base));
      if (rep == 0) {
        pb.tokens = run.counters.tokens_generated;
        pb.steps = run.counters.lm_forward_passes;
        pb.proposals_made = run.counters.proposals_made;
        pb.proposals_accepted = run.counters.proposals_accepted;
        pb.fps = fps(run);
        for (const auto& step : run.steps) {
          if (step.kind == StepKind::kChunk) used_nodes.insert(*step.matched_node);
        }
        report.traces.push_back(std::move(run));
      }
    }
    pb.tts = median(tts_runs);
    total_steps += pb.steps;
    total_tokens += pb.tokens;
    report.proposals_made += pb.proposals_made;
    report.proposals_accepted += pb.proposals_accepted;
    all_tts.push_back(pb.tts);
    all_fps.push_back(pb.fps);
    report.prompts.push_back(pb);
  }
  report.fps = 1.0 - static_cast<double>(total_steps) / static_cast<double>(total_tokens);
  report.tts_mean = mean(all_tts);
  report.tts_median = median(all_tts);
  report.fps_mean = mean(all_fps);
  report.fps_median = median(all_fps);
  report.unique_accepted_nodes = used_nodes.size();
  report.keyed_nodes = store.stats().num_keyed_nodes;
  report.utilization = report.keyed_nodes
                           ? static_cast<double>(used_nodes.size()) /
                                 static_cast<double>(report.keyed_nodes)
                           : 0.0;
  return report;
}

nlohmann::json BenchReport::to_json() const {
  auto per_prompt = nlohmann::json::array();
  for (const auto& p : prompts) {
    per_prompt.push_back({{"fps", p.fps},
                          {"tts", p.tts},
                          {"tokens", p.tokens},
                          {"steps", p.steps},
                          {"proposals_made", p.proposals_made},
                          {"proposals_accepted", p.proposals_accepted}});
  }
  return {{"fps", fps},
          {"fps_mean", fps_mean},
          {"fps_median", fps_median},
          {"tts_mean", tts_mean},
          {"tts_median", tts_median},
          {"proposals_made", proposals_made},
          {"proposals_accepted", proposals_accepted},
          {"unique_accepted_nodes", unique_accepted_nodes},
          {"keyed_nodes", keyed_nodes},
          {"utilization", utilization},
          {"prompts", std::move(per_prompt)}};
}

EntityReport entity_coverage(const std::vector<std::string>& generations,
                             const std::vector<std::string>& entities,
                             bool case_insensitive) {
  EntityReport report;
  report.num_generations = generations.size();
  std::vector<std::string> texts = generations;
  if (case_insensitive) {
    for (auto& t : texts) t = lower(t);
  }
  for (const auto& entity : entities) {
    if (entity.empty()) throw UsageError("entity surfaces must be non-empty");
    const std::string needle = case_insensitive ? lower(entity) : entity;
    std::size_t freq = 0;
    for (const auto& text : texts) freq += count_occurrences(text, needle);
    report.total_matches += freq;
    if (freq > 0) ++report.unique_entities;
    report.rank_frequency.emplace_back(entity, freq);
  }
  std::stable_sort(report.rank_frequency.begin(), report.rank_frequency.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  report.avg_count = generations.empty()
                         ? 0.0
                         : static_cast<double>(report.total_matches) /
                               static_cast<double>(generations.size());
  return report;
}

nlohmann::json EntityReport::to_json() const {
  return {{"avg_count", avg_count},
          {"unique_entities", unique_entities},
          {"total_matches", total_matches},
          {"num_generations", num_generations}};
}

std::string EntityReport::rank_frequency_csv() const {
  std::string out = "rank,entity,frequency\n";
  for (std::size_t i = 0; i < rank_frequency.size(); ++i) {
    std::string entity = rank_frequency[i].first;
    if (entity.find_first_of(",\"") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : entity) {
        if (c == '"') quoted += '"';
        quoted += c;
      }
      entity = quoted + "\"";
    }
    out += std::to_string(i + 1) + "," + entity + "," +
           std::to_string(rank_frequency[i].second) + "\n";
  }
  return out;
}

}  // namespace cdlm

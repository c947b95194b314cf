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

#include "cdlm/generation.hpp"

#include <chrono>
#include <cmath>

namespace cdlm {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

// Token sampling and chunk acceptance draw from separate streams so that
// retrieval never perturbs the token draws.
std::mt19937_64 token_stream(std::uint64_t seed) { return std::mt19937_64(seed); }
std::mt19937_64 accept_stream(std::uint64_t seed) {
  return std::mt19937_64(seed ^ 0x5bd1e9955bd1e995ULL);
}

void check_compatible(const LanguageModel& lm, const ChunkDatastore& store,
                      const TokenSeq& prompt) {
  for (TokenId t : prompt) {
    if (!lm.vocabulary().contains(t)) {
      throw DataError("prompt token " + std::to_string(t) + " out of vocabulary");
    }
  }
  if (store.dim() == 0) return;
  if (store.dim() != lm.dim()) {
    throw DataError("datastore dimension " + std::to_string(store.dim()) +
                    " does not match LM dimension " + std::to_string(lm.dim()));
  }
  if (store.vocab_fingerprint() != lm.vocabulary().fingerprint()) {
    throw DataError("datastore vocabulary fingerprint does not match the LM");
  }
}

bool is_eos(const LanguageModel& lm, const GenerationParams& params, TokenId t) {
  const auto eos = lm.vocabulary().eos();
  return params.stop_at_eos && eos && *eos == t;
}

}  // namespace

DecodeMode parse_decode_mode(const std::string& name) {
  if (name == "greedy") return DecodeMode::kGreedy;
  if (name == "sample") return DecodeMode::kSample;
  throw UsageError("unknown mode '" + name + "' (expected greedy or sample)");
}

void GenerationParams::validate() const {
  retrieval.validate();
  if (max_tokens < 1) throw UsageError("max_tokens must be >= 1");
  if (!(temperature > 0)) throw UsageError("temperature must be > 0");
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

TokenId pick_token(const Vector<double>& logprobs, DecodeMode mode,
                   double temperature, std::mt19937_64& rng) {
  if (mode == DecodeMode::kGreedy) return argmax_token(logprobs);
  const double top = logprobs.maxCoeff();
  const Vector<double> weights = logprobs.unaryExpr(
      [&](double x) { return std::exp((x - top) / temperature); });
  const double u = uniform01(rng) * weights.sum();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    acc += weights(i);
    if (u < acc) return static_cast<TokenId>(i);
  }
  // Rounding can leave u at the very top; take the last positive weight.
  for (Eigen::Index i = weights.size() - 1; i > 0; --i) {
    if (weights(i) > 0) return static_cast<TokenId>(i);
  }
  return 0;
}

GenerationResult generate(const LanguageModel& lm, const ChunkDatastore& store,
                          const TokenSeq& prompt, const GenerationParams& params) {
  params.validate();
  check_compatible(lm, store, prompt);
  const auto start = Clock::now();
  auto token_rng = token_stream(params.seed);
  auto accept_rng = accept_stream(params.seed);

  GenerationResult result;
  TokenSeq context = prompt;
  auto emit = [&](GenerationStep step) {
    result.tokens.insert(result.tokens.end(), step.tokens.begin(),
                         step.tokens.end());
    context.insert(context.end(), step.tokens.begin(), step.tokens.end());
    result.counters.tokens_generated += step.tokens.size();
    ++result.counters.lm_forward_passes;
    result.steps.push_back(std::move(step));
  };

  // Query vector for the next proposal: the LM's vector for the prefix that
  // precedes the last emitted token.
  ContextVector query;
  bool stopped = false;

  {
    const auto t0 = Clock::now();
    const auto out = lm.step(context);
    GenerationStep step;
    const TokenId tok =
        pick_token(out.logprobs, params.token_mode, params.temperature, token_rng);
    step.tokens = {tok};
    query = out.context_vector;
    stopped = is_eos(lm, params, tok);
    step.seconds = elapsed(t0);
    emit(std::move(step));
  }

  while (!stopped && result.counters.tokens_generated < params.max_tokens) {
    const auto t0 = Clock::now();
    GenerationStep step;
    const auto proposal = propose(query, context.back(), store, params.retrieval);
    step.q = proposal.q;
    step.similarity = proposal.similarity;
    bool accept = false;
    if (!proposal.empty()) {
      ++result.counters.proposals_made;
      if (params.z_mode == DecodeMode::kGreedy) {
        accept = params.retrieval.map == SimilarityMap::kPiecewise
                     ? accept_greedy(proposal.similarity, params.retrieval.eta)
                     : proposal.q >= 0.5;
      } else {
        accept = uniform01(accept_rng) < proposal.q;
      }
    }

    if (accept) {
      ++result.counters.proposals_accepted;
      const std::size_t budget =
          params.max_tokens - result.counters.tokens_generated;
      for (TokenId t : proposal.chunk) {
        if (step.tokens.size() == budget) break;
        step.tokens.push_back(t);
        if (is_eos(lm, params, t)) {
          stopped = true;
          break;
        }
      }
      step.kind = StepKind::kChunk;
      step.matched_node = proposal.matched_node;
      // One pass over the chunk yields the vector for the prefix before the
      // new last token.
      TokenSeq upto(context);
      upto.insert(upto.end(), step.tokens.begin(), step.tokens.end() - 1);
      query = lm.context_vector(upto);
    } else {
      const auto out = lm.step(context);
      const TokenId tok = pick_token(out.logprobs, params.token_mode,
                                     params.temperature, token_rng);
      step.tokens = {tok};
      query = out.context_vector;
      stopped = is_eos(lm, params, tok);
    }
    step.seconds = elapsed(t0);
    emit(std::move(step));
  }
  result.seconds = elapsed(start);
  return result;
}

GenerationResult decode_base(const LanguageModel& lm, const TokenSeq& prompt,
                             const GenerationParams& params) {
  params.validate();
  check_compatible(lm, ChunkDatastore{}, prompt);
  const auto start = Clock::now();
  auto token_rng = token_stream(params.seed);
  GenerationResult result;
  TokenSeq context = prompt;
  while (result.tokens.size() < params.max_tokens) {
    const auto t0 = Clock::now();
    const auto out = lm.step(context);
    const TokenId tok =
        pick_token(out.logprobs, params.token_mode, params.temperature, token_rng);
    context.push_back(tok);
    result.tokens.push_back(tok);
    GenerationStep step;
    step.tokens = {tok};
    step.seconds = elapsed(t0);
    result.steps.push_back(std::move(step));
    ++result.counters.tokens_generated;
    ++result.counters.lm_forward_passes;
    if (is_eos(lm, params, tok)) break;
  }
  result.seconds = elapsed(start);
  return result;
}

double fps(const GenerationResult& result) {
  if (result.counters.tokens_generated == 0) {
    throw DataError("fps is undefined for an empty generation");
  }
  return 1.0 - static_cast<double>(result.counters.lm_forward_passes) /
                   static_cast<double>(result.counters.tokens_generated);
}

double tts(const GenerationResult& cdlm, const GenerationResult& base) {
  if (cdlm.counters.tokens_generated == 0 || base.counters.tokens_generated == 0) {
    throw DataError("tts is undefined for an empty generation");
  }
  const double per_cdlm =
      cdlm.seconds / static_cast<double>(cdlm.counters.tokens_generated);
  const double per_base =
      base.seconds / static_cast<double>(base.counters.tokens_generated);
  if (per_base <= 0) return 0.0;
  return 1.0 - per_cdlm / per_base;
}

nlohmann::json to_json(const GenerationResult& result, const Vocabulary& vocab) {
  auto steps = nlohmann::json::array();
  for (const auto& s : result.steps) {
    nlohmann::json j{{"kind", s.kind == StepKind::kChunk ? "chunk" : "lm_token"},
                     {"tokens", s.tokens}};
    if (s.kind == StepKind::kChunk) {
      j["q"] = s.q;
      j["similarity"] = s.similarity;
      j["node"] = *s.matched_node;
    }
    steps.push_back(std::move(j));
  }
  const auto& c = result.counters;
  return {{"tokens", result.tokens},
          {"text", vocab.decode(result.tokens)},
          {"steps", std::move(steps)},
          {"counters",
           {{"tokens_generated", c.tokens_generated},
            {"lm_forward_passes", c.lm_forward_passes},
            {"proposals_made", c.proposals_made},
            {"proposals_accepted", c.proposals_accepted}}},
          {"fps", c.tokens_generated ? fps(result) : 0.0}};
}

}  // namespace cdlm

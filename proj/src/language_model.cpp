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

#include "cdlm/language_model.hpp"

#include <cmath>

namespace cdlm {

double LanguageModel::token_logprob(std::span<const TokenId> prefix,
                                    TokenId token) const {
  auto out = step(prefix);
  if (token >= out.logprobs.size()) {
    throw DataError("token id " + std::to_string(token) + " out of range");
  }
  return out.logprobs(token);
}

ContextVector LanguageModel::context_vector(
    std::span<const TokenId> prefix) const {
  return step(prefix).context_vector;
}

void LanguageModel::check_tokens(std::span<const TokenId> tokens) const {
  const auto& vocab = vocabulary();
  for (TokenId t : tokens) {
    if (!vocab.contains(t)) {
      throw DataError("token id " + std::to_string(t) +
                      " out of vocabulary range");
    }
  }
}

double sequence_logprob(const LanguageModel& lm,
                        std::span<const TokenId> tokens) {
  if (tokens.empty()) throw DataError("sequence_logprob on empty sequence");
  double total = 0.0;
  for (std::size_t n = 0; n < tokens.size(); ++n) {
    total += lm.token_logprob(tokens.first(n), tokens[n]);
  }
  return total;
}

TokenId argmax_token(const Vector<double>& logprobs) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < logprobs.size(); ++i) {
    if (logprobs(i) > logprobs(best)) best = i;
  }
  return static_cast<TokenId>(best);
}

CallbackLm::CallbackLm(Vocabulary vocab, int dim, StepFn fn, std::string name)
    : vocab_(std::move(vocab)), dim_(dim), fn_(std::move(fn)),
      name_(std::move(name)) {}

LmStepOutput CallbackLm::step(std::span<const TokenId> prefix) const {
  check_tokens(prefix);
  return fn_(prefix);
}

std::unique_ptr<LanguageModel> mock_constant_lm(double per_token_prob,
                                                Vocabulary vocab, int dim,
                                                ContextFn context_fn) {
  const auto size = static_cast<Eigen::Index>(vocab.size());
  const double logp = std::log(per_token_prob);
  auto fn = [size, logp, context_fn = std::move(context_fn)](
                std::span<const TokenId> prefix) {
    LmStepOutput out;
    out.context_vector = context_fn(prefix);
    out.logprobs = Vector<double>::Constant(size, logp);
    return out;
  };
  return std::make_unique<CallbackLm>(std::move(vocab), dim, std::move(fn),
                                      "mock-constant");
}

bool same_vocabulary(const LanguageModel& a, const LanguageModel& b) {
  return a.vocabulary().fingerprint() == b.vocabulary().fingerprint();
}

}  // namespace cdlm

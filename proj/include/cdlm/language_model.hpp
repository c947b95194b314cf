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

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>

#include "cdlm/types.hpp"
#include "cdlm/vocabulary.hpp"

namespace cdlm {

/// Output of one LM step over a prefix: the vector summarizing the prefix and
/// the next-token distribution, kept as natural-log probabilities.
struct LmStepOutput {
  ContextVector context_vector;
  Vector<double> logprobs;

  Vector<double> probabilities() const {
    // std::exp keeps exp(-inf) == 0 exactly; the vectorized path does not.
    return logprobs.unaryExpr([](double x) { return std::exp(x); });
  }
};

/// Base LM contract. Implementations are immutable after construction and
/// `step` is safe to call concurrently unless documented otherwise.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual const Vocabulary& vocabulary() const = 0;
  virtual int dim() const = 0;
  virtual std::string name() const = 0;

  virtual LmStepOutput step(std::span<const TokenId> prefix) const = 0;

  /// log p(token | prefix). Defaults to a full step.
  virtual double token_logprob(std::span<const TokenId> prefix,
                               TokenId token) const;

  /// Context vector of `prefix`. Defaults to a full step.
  virtual ContextVector context_vector(std::span<const TokenId> prefix) const;

 protected:
  void check_tokens(std::span<const TokenId> tokens) const;
};

/// Σ_n log p(x_n | x_<n) over a non-empty sequence.
double sequence_logprob(const LanguageModel& lm, std::span<const TokenId> tokens);

/// Most probable next token; ties resolve to the smaller id.
TokenId argmax_token(const Vector<double>& logprobs);

/// LM whose steps are computed by caller-supplied functions. Test fixtures
/// use it to script both distributions and context vectors.
class CallbackLm : public LanguageModel {
 public:
  using StepFn = std::function<LmStepOutput(std::span<const TokenId>)>;

  CallbackLm(Vocabulary vocab, int dim, StepFn fn, std::string name = "callback");

  const Vocabulary& vocabulary() const override { return vocab_; }
  int dim() const override { return dim_; }
  std::string name() const override { return name_; }
  LmStepOutput step(std::span<const TokenId> prefix) const override;

 private:
  Vocabulary vocab_;
  int dim_;
  StepFn fn_;
  std::string name_;
};

using ContextFn = std::function<ContextVector(std::span<const TokenId>)>;

/// Mock LM returning `per_token_prob` for every token regardless of prefix.
/// The distribution is deliberately not normalized when
/// per_token_prob·|V| ≠ 1. Context vectors come from `context_fn`.
std::unique_ptr<LanguageModel> mock_constant_lm(double per_token_prob,
                                                Vocabulary vocab, int dim,
                                                ContextFn context_fn);

/// True when both LMs were built over the same vocabulary contents.
bool same_vocabulary(const LanguageModel& a, const LanguageModel& b);

}  // namespace cdlm

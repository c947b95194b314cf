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
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cdlm/language_model.hpp"

namespace cdlm {

struct ReferenceLmParams {
  double smoothing = 0.1;  // additive constant for Laplace smoothing
  double decay = 0.7;      // weight λ^k on the k-th most recent token
  int window = 8;          // tokens contributing to the context vector
  int dim = 64;
  std::uint64_t seed = 0;
};

/// Laplace-smoothed trigram model with hash-seeded ±1/√d token embeddings.
///
/// The next-token distribution uses the longest of trigram/bigram/unigram
/// contexts that was observed during fitting; with an empty prefix it is the
/// smoothed unigram. `<bos>` is never predicted. The context vector is the
/// normalized decayed sum of the embeddings of the last `window` tokens.
class ReferenceLm : public LanguageModel {
 public:
  static ReferenceLm fit(const std::vector<TokenSeq>& corpus, Vocabulary vocab,
                         const ReferenceLmParams& params = {});

  static ReferenceLm load(const std::string& path);
  void save(const std::string& path) const;

  const Vocabulary& vocabulary() const override { return vocab_; }
  int dim() const override { return params_.dim; }
  std::string name() const override;
  const ReferenceLmParams& params() const { return params_; }

  LmStepOutput step(std::span<const TokenId> prefix) const override;
  double token_logprob(std::span<const TokenId> prefix,
                       TokenId token) const override;
  ContextVector context_vector(std::span<const TokenId> prefix) const override;

  /// Embedding column for a token.
  Eigen::VectorXd embedding(TokenId token) const {
    return embeddings_.col(token);
  }

  std::uint64_t unigram_count(TokenId w) const;
  std::uint64_t bigram_count(TokenId v, TokenId w) const;
  std::uint64_t trigram_count(TokenId u, TokenId v, TokenId w) const;

  bool operator==(const ReferenceLm& other) const;

 private:
  ReferenceLm(Vocabulary vocab, ReferenceLmParams params);

  struct Context {
    const std::unordered_map<std::uint64_t, std::uint64_t>* table = nullptr;
    std::uint64_t key_prefix = 0;
    double total = 0;
  };
  Context select_context(std::span<const TokenId> prefix) const;
  double count_in(const Context& ctx, TokenId w) const;
  double support_size() const;
  void build_embeddings();

  Vocabulary vocab_;
  ReferenceLmParams params_;
  std::uint64_t num_tokens_ = 0;
  std::unordered_map<std::uint64_t, std::uint64_t> unigrams_;
  std::unordered_map<std::uint64_t, std::uint64_t> bigrams_;
  std::unordered_map<std::uint64_t, std::uint64_t> trigrams_;
  std::unordered_map<std::uint64_t, std::uint64_t> bigram_contexts_;
  std::unordered_map<std::uint64_t, std::uint64_t> trigram_contexts_;
  Eigen::MatrixXd embeddings_;  // dim × |V|
};

/// splitmix64 finalizer; the embedding sign hash.
std::uint64_t mix64(std::uint64_t x);

}  // namespace cdlm

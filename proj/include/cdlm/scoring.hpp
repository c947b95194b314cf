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

#include "cdlm/language_model.hpp"
#include "cdlm/retrieval.hpp"

namespace cdlm {

/// Chunk proposal at one sequence position, with its agreement with the
/// observed tokens. Positions are 1-based as in the recursion.
struct PositionProposal {
  std::size_t position = 0;
  TokenSeq chunk;
  double q = 0.0;
  bool match = false;  // chunk equals the observed continuation
  // When the chunk runs past the end: whether the observed tail equals the
  // chunk prefix.
  bool prefix_match = false;

  std::size_t tau() const { return chunk.size(); }
  /// Whether accepting this chunk is consistent with the observed sequence.
  bool consistent(std::size_t length) const;
};

/// Proposals for every position plus the base LM's per-token log
/// probabilities; everything the recursion needs.
struct ProposalTable {
  TokenSeq sequence;
  std::vector<double> token_logprobs;   // index n-1 holds log p(x_n | x_<n)
  std::vector<PositionProposal> proposals;  // index n-2 holds position n

  std::size_t length() const { return sequence.size(); }
  const PositionProposal& at(std::size_t n) const { return proposals[n - 2]; }
};

/// Runs retrieval at positions 2..N with query f(x_<n-1) and entry x_{n-1}.
ProposalTable precompute_proposals(const TokenSeq& sequence,
                                   const ChunkDatastore& store,
                                   const LanguageModel& lm,
                                   const RetrievalParams& params);

/// Builds a table from explicit proposals. `chunks[i]`/`qs[i]` describe
/// position i + 2.
ProposalTable make_proposal_table(const TokenSeq& sequence,
                                  std::vector<double> token_logprobs,
                                  const std::vector<TokenSeq>& chunks,
                                  const std::vector<double>& qs);

/// Backward-recursion values in log space, indexed by position 2..N+1
/// (entries 0 and 1 are unused; N+1 holds the terminal convention).
struct ScoreTable {
  Eigen::ArrayXd log_alpha;
  Eigen::ArrayXd log_beta;
  Eigen::ArrayXd q;

  /// log p(x_{n:N} | x_<n) = log(α_n q_n + β_n (1 − q_n)).
  double log_suffix(std::size_t n) const;
};

struct SequenceScore {
  double log_prob = 0.0;
  std::size_t num_tokens = 0;
  ScoreTable table;

  double ppl() const;
};

/// Exact marginal log probability of the sequence under the chunk mixture.
SequenceScore score_sequence(const ProposalTable& table);

/// One generation path in the enumeration: per step, how many tokens it
/// emitted and whether they came from a chunk.
struct ScoredPath {
  std::vector<std::pair<std::size_t, bool>> steps;  // (tokens, from chunk)
  double probability = 0.0;

  std::string describe(const Vocabulary* vocab, const TokenSeq& sequence) const;
};

inline constexpr std::size_t kBruteForceMaxLength = 20;

/// Marginal probability by enumerating every interleaving of accepted chunks
/// and LM tokens, in linear space.
double brute_force_score(const ProposalTable& table);

/// Same enumeration, returning every path with non-zero probability.
std::vector<ScoredPath> enumerate_paths(const ProposalTable& table);

struct CorpusScore {
  double ppl = 0.0;
  double total_log_prob = 0.0;
  std::size_t num_sequences = 0;
  std::size_t total_tokens = 0;
};

/// Corpus perplexity exp(−Σ log p / Σ N).
CorpusScore ppl(const std::vector<TokenSeq>& sequences,
                const ChunkDatastore& store, const LanguageModel& lm,
                const RetrievalParams& params);

/// Splits documents into consecutive pieces of at most `seq_len` tokens.
std::vector<TokenSeq> split_sequences(const std::vector<TokenSeq>& docs,
                                      std::size_t seq_len);

}  // namespace cdlm

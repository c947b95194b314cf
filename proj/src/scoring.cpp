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

#include "cdlm/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace cdlm {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// log(α q + β (1 − q)) with the zero-weight branches dropped exactly.
double mix(double log_alpha, double log_beta, double q) {
  const double a = q > 0.0 ? log_alpha + std::log(q) : kNegInf;
  const double b = q < 1.0 ? log_beta + std::log1p(-q) : kNegInf;
  return log_add(a, b);
}

void fill_match(PositionProposal& p, const TokenSeq& seq) {
  const std::size_t n = p.position;
  const std::size_t big_n = seq.size();
  p.match = false;
  p.prefix_match = false;
  if (p.chunk.empty()) return;
  const std::size_t end = n + p.tau() - 1;
  const std::size_t compare = std::min(end, big_n) - n + 1;
  const bool agree = std::equal(p.chunk.begin(),
                                p.chunk.begin() + static_cast<std::ptrdiff_t>(compare),
                                seq.begin() + static_cast<std::ptrdiff_t>(n - 1));
  if (end <= big_n) {
    p.match = agree;
  } else {
    p.prefix_match = agree;
  }
}

}  // namespace

bool PositionProposal::consistent(std::size_t length) const {
  if (chunk.empty()) return false;
  return position + tau() - 1 <= length ? match : prefix_match;
}

ProposalTable precompute_proposals(const TokenSeq& sequence,
                                   const ChunkDatastore& store,
                                   const LanguageModel& lm,
                                   const RetrievalParams& params) {
  if (sequence.empty()) throw DataError("cannot score an empty sequence");
  params.validate();
  if (store.dim() != 0 && store.dim() != lm.dim()) {
    throw DataError("datastore dimension does not match the LM");
  }
  if (store.dim() != 0 &&
      store.vocab_fingerprint() != lm.vocabulary().fingerprint()) {
    throw DataError("datastore vocabulary fingerprint does not match the LM");
  }
  const std::span<const TokenId> seq(sequence);
  const std::size_t big_n = sequence.size();

  ProposalTable table;
  table.sequence = sequence;
  table.token_logprobs.resize(big_n);
  std::vector<ContextVector> vectors;  // vectors[k] = f(x_{1..k})
  vectors.reserve(big_n);
  for (std::size_t k = 0; k < big_n; ++k) {
    auto out = lm.step(seq.first(k));
    if (sequence[k] >= out.logprobs.size()) {
      throw DataError("sequence token out of vocabulary range");
    }
    table.token_logprobs[k] = out.logprobs(sequence[k]);
    vectors.push_back(std::move(out.context_vector));
  }
  for (std::size_t n = 2; n <= big_n; ++n) {
    PositionProposal p;
    p.position = n;
    auto proposal = propose(vectors[n - 2], sequence[n - 2], store, params);
    p.chunk = std::move(proposal.chunk);
    p.q = proposal.q;
    fill_match(p, sequence);
    table.proposals.push_back(std::move(p));
  }
  return table;
}

ProposalTable make_proposal_table(const TokenSeq& sequence,
                                  std::vector<double> token_logprobs,
                                  const std::vector<TokenSeq>& chunks,
                                  const std::vector<double>& qs) {
  const std::size_t big_n = sequence.size();
  if (big_n == 0 || token_logprobs.size() != big_n ||
      chunks.size() != big_n - 1 || qs.size() != big_n - 1) {
    throw DataError("proposal table sizes do not match the sequence");
  }
  ProposalTable table;
  table.sequence = sequence;
  table.token_logprobs = std::move(token_logprobs);
  for (std::size_t n = 2; n <= big_n; ++n) {
    PositionProposal p;
    p.position = n;
    p.chunk = chunks[n - 2];
    p.q = p.chunk.empty() ? 0.0 : qs[n - 2];
    if (!(p.q >= 0.0 && p.q <= 1.0)) throw DataError("q must lie in [0, 1]");
    fill_match(p, sequence);
    table.proposals.push_back(std::move(p));
  }
  return table;
}

double ScoreTable::log_suffix(std::size_t n) const {
  return mix(log_alpha(static_cast<Eigen::Index>(n)),
             log_beta(static_cast<Eigen::Index>(n)), q(static_cast<Eigen::Index>(n)));
}

double SequenceScore::ppl() const {
  return std::exp(-log_prob / static_cast<double>(num_tokens));
}

SequenceScore score_sequence(const ProposalTable& table) {
  const std::size_t big_n = table.length();
  if (big_n == 0) throw DataError("cannot score an empty sequence");
  if (table.token_logprobs.size() != big_n || table.proposals.size() != big_n - 1) {
    throw DataError("proposal table is inconsistent with its sequence");
  }
  const auto size = static_cast<Eigen::Index>(big_n + 2);
  ScoreTable st;
  st.log_alpha = Eigen::ArrayXd::Constant(size, kNegInf);
  st.log_beta = Eigen::ArrayXd::Constant(size, kNegInf);
  st.q = Eigen::ArrayXd::Zero(size);
  // Past the end nothing remains to generate.
  const auto last = static_cast<Eigen::Index>(big_n + 1);
  st.log_alpha(last) = 0.0;
  st.log_beta(last) = 0.0;

  for (std::size_t n = big_n; n >= 2; --n) {
    const auto& p = table.at(n);
    const auto i = static_cast<Eigen::Index>(n);
    st.q(i) = p.q;
    st.log_beta(i) = table.token_logprobs[n - 1] + st.log_suffix(n + 1);
    if (p.consistent(big_n)) {
      const std::size_t next = n + p.tau();
      st.log_alpha(i) = next <= big_n + 1 ? st.log_suffix(next) : 0.0;
    }
    if (std::isnan(st.log_alpha(i)) || std::isnan(st.log_beta(i))) {
      throw DataError("NaN in sequence score at position " + std::to_string(n));
    }
  }

  SequenceScore score;
  score.num_tokens = big_n;
  score.log_prob = table.token_logprobs[0] + (big_n >= 2 ? st.log_suffix(2) : 0.0);
  if (std::isnan(score.log_prob)) throw DataError("NaN sequence probability");
  score.table = std::move(st);
  return score;
}

std::vector<ScoredPath> enumerate_paths(const ProposalTable& table) {
  const std::size_t big_n = table.length();
  if (big_n == 0) throw DataError("cannot score an empty sequence");
  if (big_n > kBruteForceMaxLength) {
    throw UsageError("brute-force scoring is limited to " +
                     std::to_string(kBruteForceMaxLength) + " tokens");
  }
  std::vector<ScoredPath> paths;
  ScoredPath current;
  current.steps.push_back({1, false});
  const double first = std::exp(table.token_logprobs[0]);

  // Decision point at position n with `prob` accumulated so far.
  std::function<void(std::size_t, double)> walk = [&](std::size_t n, double prob) {
    if (n > big_n) {
      if (prob > 0.0) {
        current.probability = prob;
        paths.push_back(current);
      }
      return;
    }
    const auto& p = table.at(n);
    if (p.q > 0.0 && p.consistent(big_n)) {
      const std::size_t emitted = std::min(p.tau(), big_n - n + 1);
      current.steps.push_back({emitted, true});
      walk(n + p.tau(), prob * p.q);
      current.steps.pop_back();
    }
    if (p.q < 1.0) {
      current.steps.push_back({1, false});
      walk(n + 1, prob * (1.0 - p.q) * std::exp(table.token_logprobs[n - 1]));
      current.steps.pop_back();
    }
  };
  walk(2, first);
  return paths;
}

double brute_force_score(const ProposalTable& table) {
  double total = 0.0;
  for (const auto& path : enumerate_paths(table)) total += path.probability;
  return total;
}

std::string ScoredPath::describe(const Vocabulary* vocab,
                                 const TokenSeq& sequence) const {
  std::string out;
  std::size_t pos = 0;
  for (const auto& [count, from_chunk] : steps) {
    for (std::size_t k = 0; k < count; ++k, ++pos) {
      if (!out.empty()) out += " -> ";
      out += vocab ? vocab->surface(sequence[pos]) : std::to_string(sequence[pos]);
      out += from_chunk ? "_ret" : "_lm";
    }
  }
  return out;
}

CorpusScore ppl(const std::vector<TokenSeq>& sequences,
                const ChunkDatastore& store, const LanguageModel& lm,
                const RetrievalParams& params) {
  CorpusScore out;
  for (const auto& seq : sequences) {
    const auto score = score_sequence(precompute_proposals(seq, store, lm, params));
    out.total_log_prob += score.log_prob;
    out.total_tokens += score.num_tokens;
    ++out.num_sequences;
  }
  if (out.total_tokens == 0) throw DataError("cannot compute PPL of an empty corpus");
  out.ppl = std::exp(-out.total_log_prob / static_cast<double>(out.total_tokens));
  return out;
}

std::vector<TokenSeq> split_sequences(const std::vector<TokenSeq>& docs,
                                      std::size_t seq_len) {
  if (seq_len == 0) throw UsageError("seq_len must be positive");
  std::vector<TokenSeq> out;
  for (const auto& doc : docs) {
    for (std::size_t i = 0; i < doc.size(); i += seq_len) {
      const auto end = std::min(doc.size(), i + seq_len);
      out.emplace_back(doc.begin() + static_cast<std::ptrdiff_t>(i),
                       doc.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  return out;
}

}  // namespace cdlm

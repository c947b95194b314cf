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

#include <limits>
#include <optional>
#include <string>

#include "cdlm/datastore.hpp"

namespace cdlm {

enum class SimilarityMap { kPiecewise, kIdentity };

SimilarityMap parse_similarity_map(const std::string& name);

struct RetrievalParams {
  double eta = 0.8;
  SimilarityMap map = SimilarityMap::kPiecewise;
  bool enabled = true;  // false: every proposal is empty

  void validate() const;
};

struct ChunkProposal {
  TokenSeq chunk;
  double q = 0.0;
  double similarity = -std::numeric_limits<double>::infinity();
  std::optional<NodeId> matched_node;

  std::size_t tau() const { return chunk.size(); }
  bool empty() const { return chunk.empty(); }
};

/// Piecewise-linear similarity → acceptance map: 0 below `eta`, then linear
/// up to 1 at s* = 1.
double map_similarity(double s_star, double eta);

/// q for the configured map; the identity map clamps to [0, 1].
double acceptance_probability(double s_star, const RetrievalParams& params);

/// Greedy acceptance: s* ≥ (η + 1) / 2.
bool accept_greedy(double s_star, double eta);

struct TrieMatch {
  TokenSeq chunk;
  NodeId node_id = 0;
  double similarity = 0.0;
};

/// Highest-similarity key in `trie`. Similarities are float dot products
/// accumulated in double; the query is normalized first. Ties prefer the
/// longer chunk, then the smaller node id. Empty when the trie has no keys.
std::optional<TrieMatch> best_match(const ContextVector& query,
                                    const EntryTokenTrie& trie, int dim);

/// Chunk proposal for the position after `entry_token`. Proposals with q = 0
/// carry no chunk.
///
/// Exhaustive cosine search over every key in the entry token's trie.
/// Ties prefer the longer chunk, then the smaller node id.
ChunkProposal propose(const ContextVector& query, TokenId entry_token,
                      const ChunkDatastore& store, const RetrievalParams& params);

}  // namespace cdlm

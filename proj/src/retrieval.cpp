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

#include "cdlm/retrieval.hpp"

#include <algorithm>

#include "cdlm/vector_ops.hpp"

namespace cdlm {

SimilarityMap parse_similarity_map(const std::string& name) {
  if (name == "piecewise") return SimilarityMap::kPiecewise;
  if (name == "identity") return SimilarityMap::kIdentity;
  throw UsageError("unknown similarity map '" + name + "'");
}

void RetrievalParams::validate() const {
  if (!enabled) return;
  if (!(eta >= 0.0 && eta < 1.0)) {
    throw UsageError("eta must lie in [0, 1); use eta = 1 to disable retrieval");
  }
}

double map_similarity(double s_star, double eta) {
  if (eta >= 1.0) throw UsageError("map_similarity is degenerate at eta = 1");
  if (s_star < eta) return 0.0;
  return std::min(1.0, (s_star - eta) / (1.0 - eta));
}

double acceptance_probability(double s_star, const RetrievalParams& params) {
  if (params.map == SimilarityMap::kIdentity) return std::clamp(s_star, 0.0, 1.0);
  return map_similarity(s_star, params.eta);
}

bool accept_greedy(double s_star, double eta) {
  return s_star >= (eta + 1.0) / 2.0;
}

std::optional<TrieMatch> best_match(const ContextVector& query,
                                    const EntryTokenTrie& trie, int dim) {
  const Vector<float> q32 = to_f32(normalized_or_basis(query));
  const std::span<const float> q(q32.data(), static_cast<std::size_t>(q32.size()));
  const auto d = static_cast<std::size_t>(dim);

  std::optional<std::uint32_t> best;
  double best_sim = -std::numeric_limits<double>::infinity();
  const auto& nodes = trie.nodes();
  for (std::uint32_t i = 0; i < nodes.size(); ++i) {
    const auto& node = nodes[i];
    for (std::size_t k = 0; k < node.key_count(); ++k) {
      const double sim = dot_f32(q, trie.key(i, k, d));
      bool better = !best || sim > best_sim;
      if (best && sim == best_sim) {
        const auto& cur = nodes[*best];
        better = node.depth > cur.depth ||
                 (node.depth == cur.depth && node.node_id < cur.node_id);
      }
      if (better) {
        best = i;
        best_sim = sim;
      }
    }
  }
  if (!best) return std::nullopt;
  return TrieMatch{trie.path(*best), nodes[*best].node_id, best_sim};
}

ChunkProposal propose(const ContextVector& query, TokenId entry_token,
                      const ChunkDatastore& store, const RetrievalParams& params) {
  if (query.size() != store.dim()) {
    throw DataError("query dimension " + std::to_string(query.size()) +
                    " does not match datastore dimension " +
                    std::to_string(store.dim()));
  }
  ChunkProposal out;
  if (!params.enabled) return out;
  const EntryTokenTrie* trie = store.lookup_trie(entry_token);
  if (trie == nullptr) return out;
  auto match = best_match(query, *trie, store.dim());
  if (!match) return out;
  out.similarity = match->similarity;
  out.q = acceptance_probability(match->similarity, params);
  if (out.q <= 0.0) {
    out.q = 0.0;
    return out;
  }
  out.chunk = std::move(match->chunk);
  out.matched_node = match->node_id;
  return out;
}

}  // namespace cdlm

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

#include <random>

#include "cdlm/retrieval.hpp"
#include "gtest/gtest.h"
#include "test_util.hpp"

namespace cdlm {
namespace {

using testing::make_record;
using testing::random_unit;

TEST(SimilarityMapTest, Examples) {
  EXPECT_DOUBLE_EQ(map_similarity(0.8, 0.8), 0.0);
  EXPECT_DOUBLE_EQ(map_similarity(1.0, 0.8), 1.0);
  EXPECT_NEAR(map_similarity(0.9, 0.8), 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(map_similarity(-0.3, 0.8), 0.0);
  EXPECT_DOUBLE_EQ(map_similarity(0.79, 0.8), 0.0);
  EXPECT_DOUBLE_EQ(map_similarity(1.0000001, 0.8), 1.0);
  EXPECT_NEAR(map_similarity(0.25, -0.5), 0.5, 1e-12);
  EXPECT_THROW(map_similarity(0.9, 1.0), UsageError);
}

TEST(SimilarityMapTest, MonotoneAndBounded) {
  for (double eta : {-0.9, 0.0, 0.3, 0.8, 0.99}) {
    double prev = 0.0;
    for (int i = 0; i <= 400; ++i) {
      const double s = -1.0 + i * 0.005;
      const double q = map_similarity(s, eta);
      EXPECT_GE(q, 0.0);
      EXPECT_LE(q, 1.0);
      EXPECT_GE(q, prev);
      prev = q;
    }
  }
}

TEST(SimilarityMapTest, IdentityMapClamps) {
  RetrievalParams p;
  p.map = SimilarityMap::kIdentity;
  EXPECT_DOUBLE_EQ(acceptance_probability(0.4, p), 0.4);
  EXPECT_DOUBLE_EQ(acceptance_probability(-0.4, p), 0.0);
  EXPECT_EQ(parse_similarity_map("identity"), SimilarityMap::kIdentity);
  EXPECT_EQ(parse_similarity_map("piecewise"), SimilarityMap::kPiecewise);
  EXPECT_THROW(parse_similarity_map("cubic"), UsageError);
}

TEST(AcceptGreedyTest, Examples) {
  EXPECT_TRUE(accept_greedy(0.9, 0.8));
  EXPECT_FALSE(accept_greedy(0.89, 0.8));
  EXPECT_TRUE(accept_greedy(1.0, 0.8));
}

TEST(AcceptGreedyTest, MatchesHalfProbabilityRule) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> eta_dist(-0.99, 0.99), s_dist(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double eta = eta_dist(rng), s = s_dist(rng);
    const double q = map_similarity(s, eta);
    if (std::abs(q - 0.5) < 1e-12) continue;
    EXPECT_EQ(accept_greedy(s, eta), q >= 0.5) << "s=" << s << " eta=" << eta;
  }
}

TEST(ProposeTest, AbsentTrieGivesEmptyProposal) {
  const auto vocab = testing::letters_vocab(5);
  ChunkDatastore store(3, vocab);
  store.insert(make_record({}, 1, {2}, ContextVector::Unit(3, 0), 0, 0));
  const auto p = propose(ContextVector::Unit(3, 0), 4, store, RetrievalParams{});
  EXPECT_TRUE(p.empty());
  EXPECT_EQ(p.q, 0.0);
  EXPECT_FALSE(p.matched_node);
}

TEST(ProposeTest, IdenticalVectorGivesFullConfidence) {
  std::mt19937_64 rng(2);
  const auto vocab = testing::letters_vocab(5);
  const auto v = random_unit(16, rng);
  ChunkDatastore store(16, vocab);
  store.insert(make_record({}, 1, {2, 3}, v, 0, 0));
  const auto p = propose(v, 1, store, RetrievalParams{});
  EXPECT_EQ(p.chunk, (TokenSeq{2, 3}));
  EXPECT_NEAR(p.similarity, 1.0, 1e-6);
  EXPECT_NEAR(p.q, 1.0, 1e-5);
}

TEST(ProposeTest, DisabledAndDimensionErrors) {
  const auto vocab = testing::letters_vocab(5);
  ChunkDatastore store(3, vocab);
  store.insert(make_record({}, 1, {2}, ContextVector::Unit(3, 0), 0, 0));
  RetrievalParams off;
  off.enabled = false;
  EXPECT_TRUE(propose(ContextVector::Unit(3, 0), 1, store, off).empty());
  EXPECT_THROW(propose(ContextVector::Unit(4, 0), 1, store, RetrievalParams{}), DataError);
}

TEST(ProposeTest, LowSimilarityCarriesNoChunk) {
  const auto vocab = testing::letters_vocab(5);
  ChunkDatastore store(2, vocab);
  store.insert(make_record({}, 1, {2}, ContextVector::Unit(2, 0), 0, 0));
  const auto p = propose(ContextVector::Unit(2, 1), 1, store, RetrievalParams{});
  EXPECT_TRUE(p.empty());
  EXPECT_EQ(p.q, 0.0);
  EXPECT_NEAR(p.similarity, 0.0, 1e-12);
}

// Flat list of every stored key with its chunk, scanned independently.
struct FlatEntry {
  TokenId entry;
  TokenSeq chunk;
  std::vector<float> key;
};

std::optional<std::pair<TokenSeq, double>> flat_best(const std::vector<FlatEntry>& flat,
                                                     TokenId entry,
                                                     const ContextVector& query) {
  const auto qn = query.normalized();
  std::optional<std::pair<TokenSeq, double>> best;
  for (const auto& e : flat) {
    if (e.entry != entry) continue;
    double s = 0.0;
    for (std::size_t j = 0; j < e.key.size(); ++j) {
      s += static_cast<double>(e.key[j]) *
           static_cast<double>(static_cast<float>(qn(static_cast<Eigen::Index>(j))));
    }
    if (!best || s > best->second ||
        (s == best->second && e.chunk.size() > best->first.size())) {
      best = {{e.chunk, s}};
    }
  }
  return best;
}

TEST(BestMatchTest, AgreesWithFlatScan) {
  std::mt19937_64 rng(77);
  const auto vocab = testing::letters_vocab(4);
  for (int trial = 0; trial < 40; ++trial) {
    const int dim = 2 + static_cast<int>(rng() % 6);
    const int n = 1 + static_cast<int>(rng() % 50);
    std::vector<ChunkRecord> records;
    std::vector<ContextVector> pool;
    for (int i = 0; i < n; ++i) {
      TokenSeq chunk(1 + rng() % 3);
      for (auto& t : chunk) t = static_cast<TokenId>(rng() % 4);
      // Reused vectors create exact similarity ties.
      if (pool.empty() || rng() % 3 != 0) pool.push_back(random_unit(dim, rng));
      const auto& v = pool[rng() % pool.size()];
      records.push_back(make_record({}, static_cast<TokenId>(rng() % 4), chunk, v, 0,
                                    static_cast<std::uint32_t>(i)));
    }
    const auto store = ChunkDatastore::build(records, dim, vocab);
    std::vector<FlatEntry> flat;
    for (const auto& [entry, trie] : store.tries()) {
      for (std::uint32_t i = 0; i < trie.nodes().size(); ++i) {
        for (std::size_t k = 0; k < trie.nodes()[i].key_count(); ++k) {
          const auto key = trie.key(i, k, dim);
          flat.push_back({entry, trie.path(i), {key.begin(), key.end()}});
        }
      }
    }
    for (int qi = 0; qi < 20; ++qi) {
      const auto entry = static_cast<TokenId>(rng() % 4);
      const auto query = qi % 4 == 0 ? pool[rng() % pool.size()] : random_unit(dim, rng);
      const auto want = flat_best(flat, entry, query);
      const auto* trie = store.lookup_trie(entry);
      const auto got = trie ? best_match(query, *trie, dim) : std::nullopt;
      ASSERT_EQ(want.has_value(), got.has_value());
      if (!want) continue;
      EXPECT_EQ(got->similarity, want->second);
      EXPECT_EQ(got->chunk.size(), want->first.size());
      // Equal-length ties may resolve to a different chunk with the same score.
      std::vector<FlatEntry> same;
      for (const auto& e : flat) {
        if (e.entry == entry && e.chunk == got->chunk) same.push_back(e);
      }
      const auto check = flat_best(same, entry, query);
      ASSERT_TRUE(check);
      EXPECT_EQ(check->second, want->second);
    }
  }
}

}  // namespace
}  // namespace cdlm

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
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cdlm/extraction.hpp"
#include "cdlm/vocabulary.hpp"
#include "json.hpp"

namespace cdlm {

inline constexpr char kDatastoreMagic[4] = {'C', 'D', 'L', 'M'};
inline constexpr std::uint32_t kDatastoreVersion = 1;

using NodeId = std::uint32_t;

/// Trie node. Keys are attached only where a stored chunk ends; each key is a
/// float context vector (column of `keys`) with its source.
struct TrieNode {
  TokenId token = 0;
  NodeId node_id = 0;
  std::uint32_t parent = 0;  // arena index; the root is its own parent
  std::uint16_t depth = 0;   // chunk tokens from root to here
  std::vector<std::pair<TokenId, std::uint32_t>> children;  // sorted by token
  std::vector<float> keys;  // key_count × d, one vector after another
  std::vector<ChunkSource> sources;

  std::size_t key_count() const { return sources.size(); }
  bool operator==(const TrieNode&) const = default;
};

/// All chunks stored under one entry token. `nodes[0]` is the root, whose
/// token is the entry token.
class EntryTokenTrie {
 public:
  explicit EntryTokenTrie(TokenId entry);

  TokenId entry_token() const { return nodes_[0].token; }
  const std::vector<TrieNode>& nodes() const { return nodes_; }
  const TrieNode& root() const { return nodes_[0]; }

  /// Arena index of the child of `index` with `token`, if any.
  std::optional<std::uint32_t> child(std::uint32_t index, TokenId token) const;

  /// Chunk tokens spelled by the path root → node (root excluded).
  TokenSeq path(std::uint32_t index) const;

  /// Key vector `k` of node `index` as a d-dimensional span.
  std::span<const float> key(std::uint32_t index, std::size_t k,
                             std::size_t d) const;

  std::size_t key_count() const;
  std::size_t max_depth() const;

  bool operator==(const EntryTokenTrie&) const = default;

 private:
  friend class ChunkDatastore;
  std::uint32_t find_or_add_child(std::uint32_t index, TokenId token,
                                  NodeId& next_id);
  std::vector<TrieNode> nodes_;
};

struct DatastoreStats {
  std::size_t num_chunks = 0;
  std::size_t num_tries = 0;
  double avg_pct_per_trie = 0.0;
  std::size_t max_depth = 0;
  std::size_t num_keyed_nodes = 0;

  nlohmann::json to_json() const;
};

/// Collection of entry-token tries with float context-vector keys.
/// Read-only after `build` or `deserialize`.
class ChunkDatastore {
 public:
  ChunkDatastore() = default;
  ChunkDatastore(int dim, const Vocabulary& vocab);

  /// Adds one record. A record whose (doc, offset, length) source was already
  /// inserted is ignored and returns the existing node id.
  NodeId insert(const ChunkRecord& record);

  /// Sorts records by source (longest stored context first among duplicates),
  /// inserts them and renumbers nodes canonically.
  static ChunkDatastore build(std::vector<ChunkRecord> records, int dim,
                              const Vocabulary& vocab,
                              nlohmann::json meta = nlohmann::json::object());

  /// Renumbers node ids in serialization order: tries by ascending entry
  /// token, nodes in preorder with children by ascending token.
  void canonicalize();

  const EntryTokenTrie* lookup_trie(TokenId entry) const;

  int dim() const { return dim_; }
  const Fingerprint& vocab_fingerprint() const { return fingerprint_; }
  const nlohmann::json& meta() const { return meta_; }
  nlohmann::json& meta() { return meta_; }
  const std::map<TokenId, EntryTokenTrie>& tries() const { return tries_; }
  bool empty() const { return tries_.empty(); }

  DatastoreStats stats() const;

  void serialize(std::ostream& out) const;
  std::string serialize() const;
  static ChunkDatastore deserialize(std::istream& in);
  static ChunkDatastore deserialize(std::string_view bytes);

  void save(const std::string& path) const;
  static ChunkDatastore load(const std::string& path);

  bool operator==(const ChunkDatastore& other) const;

 private:
  int dim_ = 0;
  std::size_t vocab_size_ = 0;  // 0 after deserialize: no token-range check
  Fingerprint fingerprint_{};
  nlohmann::json meta_ = nlohmann::json::object();
  std::map<TokenId, EntryTokenTrie> tries_;
  std::map<ChunkSource, NodeId> seen_;
  NodeId next_id_ = 0;
};

}  // namespace cdlm

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

#include "cdlm/datastore.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cdlm/vector_ops.hpp"

namespace cdlm {
namespace {

class ByteWriter {
 public:
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<char>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    buf_.append(static_cast<const char*>(p), n);
  }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(byte(i) << (8 * i));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte(i)) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  std::uint32_t byte(int i) const {
    return static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)]);
  }
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw DataError("datastore file is truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace

EntryTokenTrie::EntryTokenTrie(TokenId entry) {
  TrieNode root;
  root.token = entry;
  nodes_.push_back(std::move(root));
}

std::optional<std::uint32_t> EntryTokenTrie::child(std::uint32_t index,
                                                   TokenId token) const {
  const auto& kids = nodes_[index].children;
  auto it = std::lower_bound(
      kids.begin(), kids.end(), token,
      [](const auto& kid, TokenId t) { return kid.first < t; });
  if (it == kids.end() || it->first != token) return std::nullopt;
  return it->second;
}

std::uint32_t EntryTokenTrie::find_or_add_child(std::uint32_t index,
                                                TokenId token, NodeId& next_id) {
  if (auto existing = child(index, token)) return *existing;
  const auto new_index = static_cast<std::uint32_t>(nodes_.size());
  TrieNode node;
  node.token = token;
  node.node_id = next_id++;
  node.parent = index;
  node.depth = static_cast<std::uint16_t>(nodes_[index].depth + 1);
  nodes_.push_back(std::move(node));
  auto& kids = nodes_[index].children;
  auto it = std::lower_bound(
      kids.begin(), kids.end(), token,
      [](const auto& kid, TokenId t) { return kid.first < t; });
  kids.insert(it, {token, new_index});
  return new_index;
}

TokenSeq EntryTokenTrie::path(std::uint32_t index) const {
  TokenSeq out;
  while (index != 0) {
    out.push_back(nodes_[index].token);
    index = nodes_[index].parent;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::span<const float> EntryTokenTrie::key(std::uint32_t index, std::size_t k,
                                           std::size_t d) const {
  return std::span<const float>(nodes_[index].keys).subspan(k * d, d);
}

std::size_t EntryTokenTrie::key_count() const {
  std::size_t n = 0;
  for (const auto& node : nodes_) n += node.key_count();
  return n;
}

std::size_t EntryTokenTrie::max_depth() const {
  std::size_t depth = 0;
  for (const auto& node : nodes_) depth = std::max<std::size_t>(depth, node.depth);
  return depth;
}

nlohmann::json DatastoreStats::to_json() const {
  return {{"num_chunks", num_chunks},
          {"num_tries", num_tries},
          {"avg_pct_per_trie", avg_pct_per_trie},
          {"max_depth", max_depth}};
}

ChunkDatastore::ChunkDatastore(int dim, const Vocabulary& vocab)
    : dim_(dim), vocab_size_(vocab.size()), fingerprint_(vocab.fingerprint()) {
  if (dim < 1) throw UsageError("datastore dimension must be positive");
}

NodeId ChunkDatastore::insert(const ChunkRecord& record) {
  if (record.context_vector.size() != dim_) {
    throw DataError("record vector has dimension " +
                    std::to_string(record.context_vector.size()) +
                    ", datastore expects " + std::to_string(dim_));
  }
  if (!is_unit(record.context_vector)) {
    throw DataError("record context vector is not unit-norm");
  }
  if (record.chunk_tokens.empty()) throw DataError("record has an empty chunk");
  if (record.chunk_tokens.size() > 0xffff) throw DataError("chunk too long");
  if (vocab_size_ != 0) {
    auto in_range = [&](TokenId t) { return t < vocab_size_; };
    if (!in_range(record.entry_token) ||
        !std::all_of(record.chunk_tokens.begin(), record.chunk_tokens.end(),
                     in_range)) {
      throw DataError("record token outside the vocabulary");
    }
  }
  if (auto it = seen_.find(record.source); it != seen_.end()) return it->second;

  auto [trie_it, created] =
      tries_.try_emplace(record.entry_token, record.entry_token);
  auto& trie = trie_it->second;
  if (created) trie.nodes_[0].node_id = next_id_++;
  std::uint32_t index = 0;
  for (TokenId t : record.chunk_tokens) {
    index = trie.find_or_add_child(index, t, next_id_);
  }
  auto& node = trie.nodes_[index];
  for (Eigen::Index i = 0; i < record.context_vector.size(); ++i) {
    node.keys.push_back(static_cast<float>(record.context_vector(i)));
  }
  node.sources.push_back(record.source);
  seen_.emplace(record.source, node.node_id);
  return node.node_id;
}

ChunkDatastore ChunkDatastore::build(std::vector<ChunkRecord> records, int dim,
                                     const Vocabulary& vocab,
                                     nlohmann::json meta) {
  std::stable_sort(records.begin(), records.end(),
                   [](const ChunkRecord& a, const ChunkRecord& b) {
                     if (a.source != b.source) return a.source < b.source;
                     return a.context_tokens.size() > b.context_tokens.size();
                   });
  ChunkDatastore store(dim, vocab);
  store.meta_ = std::move(meta);
  for (const auto& rec : records) store.insert(rec);
  store.canonicalize();
  return store;
}

void ChunkDatastore::canonicalize() {
  NodeId next = 0;
  seen_.clear();
  for (auto& [entry, trie] : tries_) {
    // Rebuild the arena in preorder so equal tries have equal layouts.
    std::vector<TrieNode> ordered;
    ordered.reserve(trie.nodes_.size());
    std::vector<std::pair<std::uint32_t, std::uint32_t>> stack{{0, 0}};
    while (!stack.empty()) {
      const auto [old_index, new_parent] = stack.back();
      stack.pop_back();
      const auto new_index = static_cast<std::uint32_t>(ordered.size());
      TrieNode node = std::move(trie.nodes_[old_index]);
      node.node_id = next++;
      node.parent = new_parent;
      for (const auto& src : node.sources) seen_.emplace(src, node.node_id);
      for (auto it = node.children.rbegin(); it != node.children.rend(); ++it) {
        stack.emplace_back(it->second, new_index);
      }
      node.children.clear();
      if (new_index != 0) {
        ordered[new_parent].children.emplace_back(node.token, new_index);
      }
      ordered.push_back(std::move(node));
    }
    trie.nodes_ = std::move(ordered);
  }
  next_id_ = next;
}

const EntryTokenTrie* ChunkDatastore::lookup_trie(TokenId entry) const {
  auto it = tries_.find(entry);
  return it == tries_.end() ? nullptr : &it->second;
}

DatastoreStats ChunkDatastore::stats() const {
  DatastoreStats s;
  s.num_tries = tries_.size();
  for (const auto& [entry, trie] : tries_) {
    s.num_chunks += trie.key_count();
    s.max_depth = std::max(s.max_depth, trie.max_depth());
    for (const auto& node : trie.nodes()) s.num_keyed_nodes += node.key_count() > 0;
  }
  if (s.num_chunks > 0) {
    double sum = 0.0;
    for (const auto& [entry, trie] : tries_) {
      sum += static_cast<double>(trie.key_count()) /
             static_cast<double>(s.num_chunks);
    }
    s.avg_pct_per_trie = 100.0 * sum / static_cast<double>(s.num_tries);
  }
  return s;
}

std::string ChunkDatastore::serialize() const {
  ByteWriter w;
  w.bytes(kDatastoreMagic, 4);
  w.u32(kDatastoreVersion);
  w.u32(static_cast<std::uint32_t>(dim_));
  w.bytes(fingerprint_.data(), fingerprint_.size());
  const std::string meta = meta_.dump();
  w.u32(static_cast<std::uint32_t>(meta.size()));
  w.bytes(meta.data(), meta.size());
  w.u32(static_cast<std::uint32_t>(tries_.size()));
  for (const auto& [entry, trie] : tries_) {
    std::vector<std::uint32_t> stack{0};
    while (!stack.empty()) {
      const auto& node = trie.nodes()[stack.back()];
      stack.pop_back();
      w.u32(node.token);
      w.u32(static_cast<std::uint32_t>(node.children.size()));
      w.u32(static_cast<std::uint32_t>(node.key_count()));
      for (std::size_t k = 0; k < node.key_count(); ++k) {
        for (int i = 0; i < dim_; ++i) {
          w.f32(node.keys[k * static_cast<std::size_t>(dim_) +
                          static_cast<std::size_t>(i)]);
        }
        w.u32(node.sources[k].doc);
        w.u32(node.sources[k].offset);
        w.u16(node.sources[k].length);
      }
      for (auto it = node.children.rbegin(); it != node.children.rend(); ++it) {
        stack.push_back(it->second);
      }
    }
  }
  return w.take();
}

void ChunkDatastore::serialize(std::ostream& out) const {
  const auto bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed to write datastore");
}

ChunkDatastore ChunkDatastore::deserialize(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.bytes(4) != std::string_view(kDatastoreMagic, 4)) {
    throw DataError("not a datastore file (bad magic)");
  }
  if (auto v = r.u32(); v != kDatastoreVersion) {
    throw DataError("unsupported datastore version " + std::to_string(v));
  }
  ChunkDatastore store;
  store.dim_ = static_cast<int>(r.u32());
  if (store.dim_ < 1) throw DataError("datastore dimension is zero");
  const auto fp = r.bytes(32);
  std::memcpy(store.fingerprint_.data(), fp.data(), 32);
  if (std::all_of(store.fingerprint_.begin(), store.fingerprint_.end(),
                  [](auto b) { return b == 0; })) {
    throw DataError("datastore has no vocabulary fingerprint");
  }
  const auto meta_len = r.u32();
  store.meta_ = nlohmann::json::parse(r.bytes(meta_len), nullptr, false);
  if (store.meta_.is_discarded()) throw DataError("datastore metadata is not JSON");

  const auto d = static_cast<std::size_t>(store.dim_);
  const auto num_tries = r.u32();
  TokenId previous_entry = 0;
  for (std::uint32_t t = 0; t < num_tries; ++t) {
    // Each frame is (arena index, children still to read).
    struct Frame {
      std::uint32_t index;
      std::uint32_t remaining;
    };
    auto read_node = [&](TrieNode& node) {
      node.token = r.u32();
      const auto children = r.u32();
      const auto keys = r.u32();
      node.keys.resize(keys * d);
      node.sources.resize(keys);
      for (std::uint32_t k = 0; k < keys; ++k) {
        for (std::size_t i = 0; i < d; ++i) node.keys[k * d + i] = r.f32();
        node.sources[k].doc = r.u32();
        node.sources[k].offset = r.u32();
        node.sources[k].length = r.u16();
      }
      return children;
    };
    TrieNode root;
    const auto root_children = read_node(root);
    if (t > 0 && root.token <= previous_entry) {
      throw DataError("datastore tries are not in ascending entry order");
    }
    previous_entry = root.token;
    EntryTokenTrie trie(root.token);
    trie.nodes_[0] = std::move(root);
    std::vector<Frame> stack{{0, root_children}};
    while (!stack.empty()) {
      if (stack.back().remaining == 0) {
        stack.pop_back();
        continue;
      }
      --stack.back().remaining;
      const auto parent = stack.back().index;
      TrieNode node;
      const auto children = read_node(node);
      node.parent = parent;
      node.depth = static_cast<std::uint16_t>(trie.nodes_[parent].depth + 1);
      const auto index = static_cast<std::uint32_t>(trie.nodes_.size());
      auto& kids = trie.nodes_[parent].children;
      if (!kids.empty() && kids.back().first >= node.token) {
        throw DataError("datastore trie children are not sorted");
      }
      kids.emplace_back(node.token, index);
      trie.nodes_.push_back(std::move(node));
      stack.push_back({index, children});
    }
    store.tries_.emplace(trie.entry_token(), std::move(trie));
  }
  if (!r.at_end()) throw DataError("trailing bytes after datastore body");
  store.canonicalize();
  return store;
}

ChunkDatastore ChunkDatastore::deserialize(std::istream& in) {
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.view());
}

void ChunkDatastore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write datastore " + path);
  serialize(out);
}

ChunkDatastore ChunkDatastore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open datastore " + path);
  return deserialize(in);
}

bool ChunkDatastore::operator==(const ChunkDatastore& other) const {
  return dim_ == other.dim_ && fingerprint_ == other.fingerprint_ &&
         meta_ == other.meta_ && tries_ == other.tries_;
}

}  // namespace cdlm

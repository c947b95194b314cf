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

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cdlm/types.hpp"

namespace cdlm {

inline constexpr std::string_view kBosSurface = "<bos>";
inline constexpr std::string_view kUnkSurface = "<unk>";
inline constexpr std::string_view kEosSurface = "</s>";

using Fingerprint = std::array<std::uint8_t, 32>;

std::string to_hex(const Fingerprint& fp);
Fingerprint sha256(std::string_view data);
Fingerprint fingerprint_from_hex(std::string_view hex);

/// Closed token vocabulary. Ids are positions in the surface list.
class Vocabulary {
 public:
  Vocabulary() = default;

  /// Surfaces must be unique and non-empty. Special ids are looked up by
  /// surface and are absent when the surface is not listed.
  explicit Vocabulary(std::vector<std::string> surfaces);

  /// Reads one surface per line; lines 0 and 1 must be `<bos>` and `<unk>`.
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  /// Vocabulary with `<bos>`, `<unk>`, `</s>` followed by the distinct
  /// whitespace-separated surfaces of `lines` in first-seen order.
  static Vocabulary from_text(const std::vector<std::string>& lines);

  std::size_t size() const { return surfaces_.size(); }
  const std::string& surface(TokenId id) const;
  std::optional<TokenId> find(std::string_view surface) const;
  bool contains(TokenId id) const { return id < surfaces_.size(); }

  std::optional<TokenId> bos() const { return bos_; }
  std::optional<TokenId> unk() const { return unk_; }
  std::optional<TokenId> eos() const { return eos_; }

  /// SHA-256 over the surfaces, each terminated by '\n'.
  const Fingerprint& fingerprint() const { return fingerprint_; }

  /// Whitespace tokenization; unknown surfaces map to `<unk>` (or throw when
  /// the vocabulary has none).
  TokenSeq encode(std::string_view text) const;
  std::string decode(const TokenSeq& tokens) const;

  const std::vector<std::string>& surfaces() const { return surfaces_; }

  bool operator==(const Vocabulary& other) const {
    return surfaces_ == other.surfaces_;
  }

 private:
  std::vector<std::string> surfaces_;
  std::unordered_map<std::string, TokenId> index_;
  std::optional<TokenId> bos_, unk_, eos_;
  Fingerprint fingerprint_{};
};

/// Reads a corpus file: one document per non-empty line.
std::vector<std::string> read_lines(const std::string& path);
std::vector<TokenSeq> encode_corpus(const Vocabulary& vocab,
                                    const std::vector<std::string>& lines);

}  // namespace cdlm

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

#include "cdlm/vocabulary.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <sstream>

namespace cdlm {
namespace {

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

Fingerprint sha256(std::string_view data) {
  Fingerprint out{};
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(),
             nullptr);
  return out;
}

std::string to_hex(const Fingerprint& fp) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (auto b : fp) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

Fingerprint fingerprint_from_hex(std::string_view hex) {
  if (hex.size() != 64) throw DataError("fingerprint must be 64 hex digits");
  Fingerprint fp{};
  for (std::size_t i = 0; i < 32; ++i) {
    const int hi = hex_value(hex[2 * i]);
    const int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw DataError("fingerprint is not hex");
    fp[i] = static_cast<std::uint8_t>(hi * 16 + lo);
  }
  return fp;
}

Vocabulary::Vocabulary(std::vector<std::string> surfaces)
    : surfaces_(std::move(surfaces)) {
  std::string joined;
  for (std::size_t i = 0; i < surfaces_.size(); ++i) {
    const auto& s = surfaces_[i];
    if (s.empty()) throw DataError("empty surface at id " + std::to_string(i));
    if (!index_.emplace(s, static_cast<TokenId>(i)).second) {
      throw DataError("duplicate surface '" + s + "'");
    }
    joined += s;
    joined += '\n';
  }
  bos_ = find(kBosSurface);
  unk_ = find(kUnkSurface);
  eos_ = find(kEosSurface);
  fingerprint_ = sha256(joined);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file " + path);
  std::vector<std::string> surfaces;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    surfaces.push_back(line);
  }
  if (surfaces.size() < 2 || surfaces[0] != kBosSurface ||
      surfaces[1] != kUnkSurface) {
    throw DataError("vocabulary file " + path +
                    " must start with <bos> and <unk> lines");
  }
  return Vocabulary(std::move(surfaces));
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary file " + path);
  for (const auto& s : surfaces_) out << s << '\n';
}

Vocabulary Vocabulary::from_text(const std::vector<std::string>& lines) {
  std::vector<std::string> surfaces{std::string(kBosSurface),
                                    std::string(kUnkSurface),
                                    std::string(kEosSurface)};
  std::unordered_map<std::string, bool> seen;
  for (const auto& s : surfaces) seen[s] = true;
  for (const auto& line : lines) {
    std::istringstream words(line);
    std::string w;
    while (words >> w) {
      if (seen.emplace(w, true).second) surfaces.push_back(w);
    }
  }
  return Vocabulary(std::move(surfaces));
}

const std::string& Vocabulary::surface(TokenId id) const {
  if (!contains(id)) {
    throw DataError("token id " + std::to_string(id) + " out of range");
  }
  return surfaces_[id];
}

std::optional<TokenId> Vocabulary::find(std::string_view surface) const {
  auto it = index_.find(std::string(surface));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenSeq Vocabulary::encode(std::string_view text) const {
  TokenSeq out;
  std::istringstream words{std::string(text)};
  std::string w;
  while (words >> w) {
    if (auto id = find(w)) {
      out.push_back(*id);
    } else if (unk_) {
      out.push_back(*unk_);
    } else {
      throw DataError("surface '" + w + "' not in vocabulary");
    }
  }
  return out;
}

std::string Vocabulary::decode(const TokenSeq& tokens) const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += surface(tokens[i]);
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(line);
  }
  return lines;
}

std::vector<TokenSeq> encode_corpus(const Vocabulary& vocab,
                                    const std::vector<std::string>& lines) {
  std::vector<TokenSeq> docs;
  docs.reserve(lines.size());
  for (const auto& line : lines) docs.push_back(vocab.encode(line));
  return docs;
}

}  // namespace cdlm

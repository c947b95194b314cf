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

#include "cdlm/reference_lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cdlm/vector_ops.hpp"
#include "json.hpp"

namespace cdlm {
namespace {

constexpr int kIdBits = 21;
constexpr std::uint64_t kMaxVocab = std::uint64_t{1} << kIdBits;

std::uint64_t pack(std::uint64_t a, std::uint64_t b) {
  return (a << kIdBits) | b;
}
std::uint64_t pack(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return (a << (2 * kIdBits)) | (b << kIdBits) | c;
}

std::uint64_t lookup(const std::unordered_map<std::uint64_t, std::uint64_t>& m,
                     std::uint64_t key) {
  auto it = m.find(key);
  return it == m.end() ? 0 : it->second;
}

nlohmann::json sorted_table(
    const std::unordered_map<std::uint64_t, std::uint64_t>& m) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> rows(m.begin(), m.end());
  std::sort(rows.begin(), rows.end());
  auto out = nlohmann::json::array();
  for (const auto& [k, c] : rows) out.push_back({k, c});
  return out;
}

void read_table(const nlohmann::json& j,
                std::unordered_map<std::uint64_t, std::uint64_t>& m) {
  for (const auto& row : j) m[row.at(0).get<std::uint64_t>()] = row.at(1);
}

}  // namespace

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

ReferenceLm::ReferenceLm(Vocabulary vocab, ReferenceLmParams params)
    : vocab_(std::move(vocab)), params_(params) {
  if (vocab_.size() == 0 || vocab_.size() >= kMaxVocab) {
    throw DataError("reference LM vocabulary size out of range");
  }
  if (!(params_.smoothing > 0)) throw UsageError("smoothing must be > 0");
  if (!(params_.decay > 0 && params_.decay < 1)) {
    throw UsageError("decay must lie in (0, 1)");
  }
  if (params_.window < 1 || params_.dim < 1) {
    throw UsageError("window and dim must be positive");
  }
  build_embeddings();
}

void ReferenceLm::build_embeddings() {
  const auto d = params_.dim;
  const double mag = 1.0 / std::sqrt(static_cast<double>(d));
  embeddings_.resize(d, static_cast<Eigen::Index>(vocab_.size()));
  for (Eigen::Index w = 0; w < embeddings_.cols(); ++w) {
    const auto row_seed = mix64(params_.seed ^ mix64(static_cast<std::uint64_t>(w)));
    for (int j = 0; j < d; ++j) {
      const auto h = mix64(row_seed + static_cast<std::uint64_t>(j));
      embeddings_(j, w) = (h & 1) ? mag : -mag;
    }
  }
}

ReferenceLm ReferenceLm::fit(const std::vector<TokenSeq>& corpus,
                             Vocabulary vocab, const ReferenceLmParams& params) {
  std::size_t total = 0;
  for (const auto& doc : corpus) total += doc.size();
  if (total == 0) throw DataError("cannot fit reference LM on an empty corpus");

  ReferenceLm lm(std::move(vocab), params);
  for (const auto& doc : corpus) {
    lm.check_tokens(doc);
    for (std::size_t i = 0; i < doc.size(); ++i) {
      ++lm.unigrams_[doc[i]];
      if (i + 1 < doc.size()) {
        ++lm.bigrams_[pack(doc[i], doc[i + 1])];
        ++lm.bigram_contexts_[doc[i]];
      }
      if (i + 2 < doc.size()) {
        ++lm.trigrams_[pack(doc[i], doc[i + 1], doc[i + 2])];
        ++lm.trigram_contexts_[pack(doc[i], doc[i + 1])];
      }
    }
  }
  lm.num_tokens_ = total;
  return lm;
}

std::string ReferenceLm::name() const {
  return "reference-trigram-d" + std::to_string(params_.dim);
}

double ReferenceLm::support_size() const {
  return static_cast<double>(vocab_.size() - (vocab_.bos() ? 1 : 0));
}

ReferenceLm::Context ReferenceLm::select_context(
    std::span<const TokenId> prefix) const {
  const auto n = prefix.size();
  if (n >= 2) {
    const auto key = pack(prefix[n - 2], prefix[n - 1]);
    if (auto c = lookup(trigram_contexts_, key)) {
      return {&trigrams_, key << kIdBits, static_cast<double>(c)};
    }
  }
  if (n >= 1) {
    const std::uint64_t key = prefix[n - 1];
    if (auto c = lookup(bigram_contexts_, key)) {
      return {&bigrams_, key << kIdBits, static_cast<double>(c)};
    }
  }
  return {&unigrams_, 0, static_cast<double>(num_tokens_)};
}

double ReferenceLm::count_in(const Context& ctx, TokenId w) const {
  return static_cast<double>(lookup(*ctx.table, ctx.key_prefix | w));
}

LmStepOutput ReferenceLm::step(std::span<const TokenId> prefix) const {
  check_tokens(prefix);
  const auto ctx = select_context(prefix);
  const double denom = std::log(ctx.total + params_.smoothing * support_size());
  LmStepOutput out;
  out.logprobs.resize(static_cast<Eigen::Index>(vocab_.size()));
  for (TokenId w = 0; w < vocab_.size(); ++w) {
    if (vocab_.bos() && w == *vocab_.bos()) {
      out.logprobs(w) = -std::numeric_limits<double>::infinity();
      continue;
    }
    out.logprobs(w) = std::log(count_in(ctx, w) + params_.smoothing) - denom;
  }
  out.context_vector = context_vector(prefix);
  return out;
}

double ReferenceLm::token_logprob(std::span<const TokenId> prefix,
                                  TokenId token) const {
  check_tokens(prefix);
  if (!vocab_.contains(token)) {
    throw DataError("token id " + std::to_string(token) + " out of range");
  }
  if (vocab_.bos() && token == *vocab_.bos()) {
    return -std::numeric_limits<double>::infinity();
  }
  const auto ctx = select_context(prefix);
  return std::log(count_in(ctx, token) + params_.smoothing) -
         std::log(ctx.total + params_.smoothing * support_size());
}

ContextVector ReferenceLm::context_vector(
    std::span<const TokenId> prefix) const {
  check_tokens(prefix);
  ContextVector sum = ContextVector::Zero(params_.dim);
  const auto n = prefix.size();
  double weight = 1.0;
  for (std::size_t k = 1; k <= static_cast<std::size_t>(params_.window) && k <= n;
       ++k) {
    weight *= params_.decay;
    sum += weight * embeddings_.col(prefix[n - k]);
  }
  return normalized_or_basis(sum);
}

std::uint64_t ReferenceLm::unigram_count(TokenId w) const {
  return lookup(unigrams_, w);
}
std::uint64_t ReferenceLm::bigram_count(TokenId v, TokenId w) const {
  return lookup(bigrams_, pack(v, w));
}
std::uint64_t ReferenceLm::trigram_count(TokenId u, TokenId v, TokenId w) const {
  return lookup(trigrams_, pack(u, v, w));
}

bool ReferenceLm::operator==(const ReferenceLm& o) const {
  return vocab_ == o.vocab_ && params_.smoothing == o.params_.smoothing &&
         params_.decay == o.params_.decay && params_.window == o.params_.window &&
         params_.dim == o.params_.dim && params_.seed == o.params_.seed &&
         num_tokens_ == o.num_tokens_ && unigrams_ == o.unigrams_ &&
         bigrams_ == o.bigrams_ && trigrams_ == o.trigrams_ &&
         embeddings_ == o.embeddings_;
}

void ReferenceLm::save(const std::string& path) const {
  nlohmann::json j;
  j["format"] = "cdlm-reference-lm";
  j["version"] = 1;
  j["vocab"] = vocab_.surfaces();
  j["params"] = {{"smoothing", params_.smoothing},
                 {"decay", params_.decay},
                 {"window", params_.window},
                 {"dim", params_.dim},
                 {"seed", params_.seed}};
  j["num_tokens"] = num_tokens_;
  j["unigrams"] = sorted_table(unigrams_);
  j["bigrams"] = sorted_table(bigrams_);
  j["trigrams"] = sorted_table(trigrams_);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump() << '\n';
}

ReferenceLm ReferenceLm::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open reference LM file " + path);
  nlohmann::json j;
  try {
    in >> j;
    if (j.at("format") != "cdlm-reference-lm" || j.at("version") != 1) {
      throw DataError("not a reference LM file: " + path);
    }
    ReferenceLmParams p;
    const auto& jp = j.at("params");
    p.smoothing = jp.at("smoothing");
    p.decay = jp.at("decay");
    p.window = jp.at("window");
    p.dim = jp.at("dim");
    p.seed = jp.at("seed");
    ReferenceLm lm(Vocabulary(j.at("vocab").get<std::vector<std::string>>()), p);
    lm.num_tokens_ = j.at("num_tokens");
    read_table(j.at("unigrams"), lm.unigrams_);
    read_table(j.at("bigrams"), lm.bigrams_);
    read_table(j.at("trigrams"), lm.trigrams_);
    // Context totals are derived from the n-gram tables.
    for (const auto& [k, c] : lm.bigrams_) lm.bigram_contexts_[k >> kIdBits] += c;
    for (const auto& [k, c] : lm.trigrams_) lm.trigram_contexts_[k >> kIdBits] += c;
    return lm;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed reference LM file " + path + ": " + e.what());
  }
}

}  // namespace cdlm

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

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "cdlm/datastore.hpp"
#include "cdlm/language_model.hpp"
#include "cdlm/reference_lm.hpp"
#include "cdlm/vector_ops.hpp"

namespace cdlm::testing {

inline Vocabulary letters_vocab(std::size_t n) {
  std::vector<std::string> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back("t" + std::to_string(i));
  return Vocabulary(std::move(s));
}

inline double hash_unit(std::uint64_t a, std::uint64_t b) {
  return static_cast<double>(mix64(a ^ mix64(b)) >> 11) * 0x1.0p-53;
}

inline std::uint64_t hash_suffix(std::span<const TokenId> prefix, std::size_t order,
                                 std::uint64_t seed) {
  std::uint64_t h = mix64(seed + std::min(prefix.size(), order));
  for (std::size_t k = 1; k <= order && k <= prefix.size(); ++k) {
    h = mix64(h ^ (prefix[prefix.size() - k] + 0x1234 * k));
  }
  return h;
}

/// LM whose distribution and context vector are pseudo-random functions of
/// the last `order` prefix tokens. Normalized, deterministic, cheap.
inline std::unique_ptr<LanguageModel> make_hash_lm(std::size_t vocab_size, int dim,
                                                   std::uint64_t seed,
                                                   std::size_t order = 2) {
  auto fn = [=](std::span<const TokenId> prefix) {
    const auto h = hash_suffix(prefix, order, seed);
    LmStepOutput out;
    Vector<double> w(static_cast<Eigen::Index>(vocab_size));
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double u = hash_unit(h, static_cast<std::uint64_t>(i) + 1);
      w(i) = 0.02 + u * u * u;
    }
    out.logprobs = (w / w.sum()).array().log();
    ContextVector v(dim);
    for (int j = 0; j < dim; ++j) {
      v(j) = hash_unit(h ^ 0xabcdefULL, static_cast<std::uint64_t>(j) + 1) - 0.5;
    }
    out.context_vector = normalized_or_basis(v);
    return out;
  };
  return std::make_unique<CallbackLm>(letters_vocab(vocab_size), dim, fn, "hash-lm");
}

inline ContextVector random_unit(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  ContextVector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = g(rng);
  return normalized_or_basis(v);
}

/// Sentences built from a handful of templates; high-probability spans for a
/// trigram model.
inline std::vector<std::string> templated_corpus(std::size_t docs, std::uint64_t seed,
                                                 std::size_t sentences_per_doc = 3) {
  static const std::vector<std::string> names{"alice", "bob", "carol", "dave",
                                              "erin", "frank"};
  static const std::vector<std::string> cities{"paris", "berlin", "rome",
                                               "madrid", "vienna", "oslo"};
  static const std::vector<std::string> templates{
      "N lives in the city of C and works at the central station .",
      "the capital of france is paris and the capital of italy is rome .",
      "N said that the weather in C was cold in the winter months .",
      "every morning N takes the early train from C to the coast ."};
  std::mt19937_64 rng(seed);
  auto pick = [&](const std::vector<std::string>& xs) {
    return xs[std::uniform_int_distribution<std::size_t>(0, xs.size() - 1)(rng)];
  };
  std::vector<std::string> out;
  for (std::size_t d = 0; d < docs; ++d) {
    std::string doc;
    for (std::size_t s = 0; s < sentences_per_doc; ++s) {
      std::string t = pick(templates);
      std::string filled;
      for (char c : t) {
        if (c == 'N') filled += pick(names);
        else if (c == 'C') filled += pick(cities);
        else filled += c;
      }
      if (!doc.empty()) doc += ' ';
      doc += filled;
    }
    out.push_back(doc);
  }
  return out;
}

inline ChunkRecord make_record(TokenSeq context, TokenId entry, TokenSeq chunk,
                               ContextVector vec, std::uint32_t doc,
                               std::uint32_t offset) {
  ChunkRecord r;
  r.context_tokens = std::move(context);
  r.entry_token = entry;
  r.chunk_tokens = std::move(chunk);
  r.context_vector = std::move(vec);
  r.source = {doc, offset, static_cast<std::uint16_t>(r.chunk_tokens.size())};
  return r;
}

}  // namespace cdlm::testing

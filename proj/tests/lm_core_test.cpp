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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "cdlm/reference_lm.hpp"
#include "gtest/gtest.h"
#include "test_util.hpp"

namespace cdlm {
namespace {

ReferenceLm fit_text(const std::vector<std::string>& lines,
                     const ReferenceLmParams& params = {}) {
  auto vocab = Vocabulary::from_text(lines);
  return ReferenceLm::fit(encode_corpus(vocab, lines), vocab, params);
}

TEST(VocabularyTest, ReservedSpecialsAndUnknownMapping) {
  const auto vocab = Vocabulary::from_text({"a b", "b c"});
  EXPECT_EQ(vocab.size(), 6u);
  EXPECT_EQ(vocab.bos(), 0u);
  EXPECT_EQ(vocab.unk(), 1u);
  EXPECT_EQ(vocab.encode("a zzz c"), (TokenSeq{3, 1, 5}));
  EXPECT_EQ(vocab.decode({3, 4}), "a b");
}

TEST(VocabularyTest, FingerprintTracksContents) {
  const auto a = Vocabulary::from_text({"a b"});
  const auto b = Vocabulary::from_text({"a b"});
  const auto c = Vocabulary::from_text({"b a"});
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  EXPECT_NE(a.fingerprint(), c.fingerprint());
  EXPECT_EQ(fingerprint_from_hex(to_hex(a.fingerprint())), a.fingerprint());
}

TEST(VocabularyTest, FileRoundTripAndValidation) {
  const auto path = std::filesystem::temp_directory_path() / "cdlm_vocab_test.txt";
  const auto vocab = Vocabulary::from_text({"x y z"});
  vocab.save(path.string());
  EXPECT_EQ(Vocabulary::load(path.string()), vocab);
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("a\nb\n", f);
    std::fclose(f);
  }
  EXPECT_THROW(Vocabulary::load(path.string()), DataError);
  std::filesystem::remove(path);
  EXPECT_THROW(Vocabulary({"a", "a"}), DataError);
}

TEST(ReferenceLmTest, SmoothedTrigramByHand) {
  // Vocabulary: <bos> <unk> </s> a b; <bos> is never predicted, so the
  // smoothing support has 4 tokens. Trigram context (b, a) occurs once, and
  // is followed by b.
  const auto lm = fit_text({"a b a b"});
  const TokenId a = 3, b = 4;
  const TokenSeq prefix{b, a};
  const double denom = 1.0 + 0.1 * 4;
  EXPECT_NEAR(std::exp(lm.token_logprob(prefix, b)), 1.1 / denom, 1e-15);
  EXPECT_NEAR(std::exp(lm.token_logprob(prefix, a)), 0.1 / denom, 1e-15);
  EXPECT_GT(lm.token_logprob(prefix, b), lm.token_logprob(prefix, a));
}

TEST(ReferenceLmTest, ArgmaxFollowsTrigram) {
  const auto lm = fit_text({"I love NLP"});
  const auto& v = lm.vocabulary();
  const TokenSeq prefix{*v.find("I"), *v.find("love")};
  const auto out = lm.step(prefix);
  EXPECT_EQ(argmax_token(out.logprobs), *v.find("NLP"));
  // Support: </s> <unk> I love NLP.
  EXPECT_NEAR(out.probabilities()(*v.find("NLP")), 1.1 / 1.5, 1e-15);
}

TEST(ReferenceLmTest, EmptyPrefixIsUnigramWithBasisVector) {
  const auto lm = fit_text({"I love NLP"});
  const auto out = lm.step({});
  const auto p = out.probabilities();
  EXPECT_NEAR(p(*lm.vocabulary().find("I")), 1.1 / 3.5, 1e-15);
  EXPECT_NEAR(p(*lm.vocabulary().unk()), 0.1 / 3.5, 1e-15);
  EXPECT_EQ(p(*lm.vocabulary().bos()), 0.0);
  ContextVector e0 = ContextVector::Zero(64);
  e0(0) = 1.0;
  EXPECT_EQ(out.context_vector, e0);
}

TEST(ReferenceLmTest, SingleTokenContextIsItsEmbedding) {
  const auto lm = fit_text({"a b c"});
  const TokenSeq prefix{4};
  EXPECT_LT((lm.context_vector(prefix) - lm.embedding(4)).norm(), 1e-12);
  const auto e = lm.embedding(4);
  EXPECT_NEAR(e.norm(), 1.0, 1e-12);
  EXPECT_TRUE((e.array().abs() - 1.0 / 8.0).abs().maxCoeff() < 1e-15);
}

TEST(ReferenceLmTest, NormalizedUnitAndLocal) {
  const auto lines = testing::templated_corpus(20, 3);
  const auto lm = fit_text(lines);
  const auto corpus = encode_corpus(lm.vocabulary(), lines);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto& doc = corpus[rng() % corpus.size()];
    const std::size_t len = rng() % doc.size();
    const std::span<const TokenId> prefix(doc.data(), len);
    const auto out = lm.step(prefix);
    EXPECT_NEAR(out.probabilities().sum(), 1.0, 1e-9);
    EXPECT_TRUE((out.probabilities().array() >= 0).all());
    EXPECT_TRUE(is_unit(out.context_vector, 1e-6));
    // Same last 8 tokens, different history.
    if (len >= 9) {
      TokenSeq other(prefix.begin(), prefix.end());
      other[0] = other[0] == 3 ? 4 : 3;
      other.insert(other.begin(), 5);
      EXPECT_EQ(lm.context_vector(other), out.context_vector);
    }
  }
}

TEST(ReferenceLmTest, DeterministicFitAndStep) {
  const auto lines = testing::templated_corpus(10, 5);
  const ReferenceLmParams params{.seed = 42};
  const auto a = fit_text(lines, params);
  const auto b = fit_text(lines, params);
  EXPECT_TRUE(a == b);
  const TokenSeq prefix{3, 4, 5};
  const auto x = a.step(prefix);
  const auto y = b.step(prefix);
  EXPECT_EQ(x.logprobs, y.logprobs);
  EXPECT_EQ(x.context_vector, y.context_vector);
  const auto c = fit_text(lines, ReferenceLmParams{.seed = 43});
  EXPECT_NE(c.embedding(3), a.embedding(3));
}

TEST(ReferenceLmTest, RejectsBadInput) {
  const auto vocab = Vocabulary::from_text({"a b"});
  EXPECT_THROW(ReferenceLm::fit({}, vocab), DataError);
  EXPECT_THROW(ReferenceLm::fit({TokenSeq{}}, vocab), DataError);
  EXPECT_THROW(ReferenceLm::fit({TokenSeq{3, 99}}, vocab), DataError);
  const auto lm = ReferenceLm::fit({TokenSeq{3, 4}}, vocab);
  const TokenSeq bad{3, 77};
  EXPECT_THROW(lm.step(bad), DataError);
  EXPECT_THROW(sequence_logprob(lm, bad), DataError);
}

TEST(ReferenceLmTest, SaveLoadRoundTrip) {
  const auto lm = fit_text(testing::templated_corpus(15, 9), {.dim = 16, .seed = 7});
  const auto path = std::filesystem::temp_directory_path() / "cdlm_ref_lm.json";
  lm.save(path.string());
  const auto loaded = ReferenceLm::load(path.string());
  std::filesystem::remove(path);
  EXPECT_TRUE(loaded == lm);
  const TokenSeq prefix{3, 4};
  EXPECT_EQ(loaded.step(prefix).logprobs, lm.step(prefix).logprobs);
}

TEST(SequenceLogprobTest, SingleTokenAndChainRule) {
  const auto lm = fit_text(testing::templated_corpus(10, 1));
  const TokenSeq one{5};
  EXPECT_DOUBLE_EQ(sequence_logprob(lm, one), lm.token_logprob({}, 5));
  const TokenSeq seq{5, 6, 7, 8, 9, 10};
  double manual = 0.0;
  for (std::size_t n = 0; n < seq.size(); ++n) {
    manual += lm.step(std::span(seq).first(n)).logprobs(seq[n]);
  }
  EXPECT_NEAR(sequence_logprob(lm, seq), manual, 1e-12);
  EXPECT_THROW(sequence_logprob(lm, TokenSeq{}), DataError);
}

TEST(MockLmTest, ConstantProbabilityAndScriptedVectors) {
  auto vocab = testing::letters_vocab(5);
  auto table = [](std::span<const TokenId> prefix) {
    ContextVector v = ContextVector::Zero(3);
    v(static_cast<Eigen::Index>(prefix.size() % 3)) = 1.0;
    return v;
  };
  const auto lm = mock_constant_lm(0.3, vocab, 3, table);
  const TokenSeq seq{0, 1, 2, 3, 4};
  EXPECT_NEAR(sequence_logprob(*lm, seq), 5 * std::log(0.3), 1e-12);
  for (std::size_t n = 0; n <= seq.size(); ++n) {
    const auto out = lm->step(std::span(seq).first(n));
    EXPECT_TRUE((out.probabilities().array() - 0.3).abs().maxCoeff() < 1e-15);
    EXPECT_EQ(out.context_vector, table(std::span(seq).first(n)));
  }
  const auto certain = mock_constant_lm(1.0, vocab, 3, table);
  EXPECT_EQ(sequence_logprob(*certain, seq), 0.0);
}

}  // namespace
}  // namespace cdlm

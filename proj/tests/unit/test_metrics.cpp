#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "gcl/error.hpp"
#include "gcl/metrics.hpp"

namespace {

using Ids = std::vector<gcl::TokenId>;

const gcl::EmbedderSpec& emb() {
  static const auto e = gcl::EmbedderSpec::seeded(128, 32, 7);
  return e;
}

TEST(Embedder, UnitVectorsIndependentOfVocab) {
  const auto small = gcl::EmbedderSpec::seeded(40, 32, 7);
  const auto v = emb().embed(30);
  const auto w = small.embed(30);
  double norm = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(v[i], w[i]);
    norm += v[i] * v[i];
  }
  EXPECT_NEAR(norm, 1.0, 1e-14);
  EXPECT_THROW(emb().embed(128), gcl::InputError);
}

TEST(TokenF1, IdentityIsExactlyOne) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<gcl::TokenId> tok(8, 127);
  for (int trial = 0; trial < 50; ++trial) {
    Ids y(1 + trial % 9);
    for (auto& t : y) t = tok(rng);
    const auto s = gcl::token_f1(y, y, emb());
    EXPECT_EQ(s.precision, 1.0);
    EXPECT_EQ(s.recall, 1.0);
    EXPECT_EQ(s.f1, 1.0);
  }
}

TEST(TokenF1, PermutationInvariant) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<gcl::TokenId> tok(8, 127);
  for (int trial = 0; trial < 30; ++trial) {
    Ids y(6), g(5);
    for (auto& t : y) t = tok(rng);
    for (auto& t : g) t = tok(rng);
    const auto base = gcl::token_f1(y, g, emb());
    Ids ys = y, gs = g;
    std::shuffle(ys.begin(), ys.end(), rng);
    std::shuffle(gs.begin(), gs.end(), rng);
    const auto s = gcl::token_f1(ys, gs, emb());
    EXPECT_EQ(s.precision, base.precision);
    EXPECT_EQ(s.recall, base.recall);
    EXPECT_EQ(s.f1, base.f1);
  }
}

TEST(TokenF1, DisjointOrthogonalIsZero) {
  const auto oh = gcl::EmbedderSpec::one_hot(16);
  const auto s = gcl::token_f1(Ids{1, 2, 3}, Ids{4, 5}, oh);
  EXPECT_EQ(s.precision, 0.0);
  EXPECT_EQ(s.recall, 0.0);
  EXPECT_EQ(s.f1, 0.0);
}

TEST(TokenF1, HalfOverlapAgainstBruteForce) {
  const auto oh = gcl::EmbedderSpec::one_hot(16);
  const Ids out{1, 2};
  const Ids ref{1, 2, 3, 4};
  const auto s = gcl::token_f1(out, ref, oh);
  EXPECT_EQ(s.recall, 0.5);
  EXPECT_EQ(s.precision, 1.0);
  EXPECT_NEAR(s.f1, 2.0 / 3.0, 1e-15);
}

TEST(TokenF1, MatchesCosineMatrixOracle) {
  const Ids out{10, 20, 30, 20};
  const Ids ref{11, 20, 40};
  std::vector<std::vector<double>> cos(out.size(), std::vector<double>(ref.size()));
  for (std::size_t j = 0; j < out.size(); ++j) {
    for (std::size_t k = 0; k < ref.size(); ++k) {
      const auto a = emb().embed(out[j]);
      const auto b = emb().embed(ref[k]);
      double d = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * b[i];
      cos[j][k] = out[j] == ref[k] ? 1.0 : std::clamp(d, 0.0, 1.0);
    }
  }
  double p = 0.0, r = 0.0;
  for (const auto& row : cos) p += *std::max_element(row.begin(), row.end());
  for (std::size_t k = 0; k < ref.size(); ++k) {
    double m = 0.0;
    for (const auto& row : cos) m = std::max(m, row[k]);
    r += m;
  }
  p /= out.size();
  r /= ref.size();
  const auto s = gcl::token_f1(out, ref, emb());
  EXPECT_NEAR(s.precision, p, 1e-15);
  EXPECT_NEAR(s.recall, r, 1e-15);
  EXPECT_NEAR(s.f1, 2 * p * r / (p + r), 1e-15);
}

TEST(TokenF1, EmptyInputThrows) {
  EXPECT_THROW(gcl::token_f1(Ids{}, Ids{1}, emb()), gcl::InputError);
  EXPECT_THROW(gcl::token_f1(Ids{1}, Ids{}, emb()), gcl::InputError);
}

TEST(SentenceCos, IdentityAndRange) {
  EXPECT_NEAR(gcl::sentence_cos(Ids{9, 10, 11}, Ids{11, 10, 9}, emb()), 1.0, 1e-14);
  const double c = gcl::sentence_cos(Ids{9}, Ids{50}, emb());
  EXPECT_GE(c, -1.0);
  EXPECT_LE(c, 1.0);
}

TEST(ParseFields, SplitsSections) {
  gcl::VocabSpec v;
  const Ids seq{v.perc, 20, 21, v.reason, 22, v.act, 23, 24, v.eos};
  const auto f = gcl::parse_fields(seq, v);
  ASSERT_TRUE(f.ok) << f.problem;
  EXPECT_EQ(f.perception, (Ids{20, 21}));
  EXPECT_EQ(f.reasoning, (Ids{22}));
  EXPECT_EQ(f.action, (Ids{23, 24}));
  EXPECT_FALSE(gcl::parse_fields(Ids{20, 21}, v).ok);
  EXPECT_FALSE(gcl::parse_fields(Ids{v.perc, 20, v.act, 23}, v).ok);
}

TEST(ScoreSample, MalformedScoresZero) {
  gcl::VocabSpec v;
  gcl::Example ref{{8}, {16}, {v.perc, 20, v.reason, 22, v.act, 23, v.eos}};
  const auto good = gcl::score_sample(ref.target_tokens, ref, v, emb());
  EXPECT_FALSE(good.failed);
  EXPECT_EQ(good.action.f1, 1.0);
  const auto bad = gcl::score_sample(Ids{30, 31}, ref, v, emb());
  EXPECT_TRUE(bad.failed);
  EXPECT_EQ(bad.action.f1, 0.0);
  EXPECT_FALSE(bad.diagnostic.empty());
}

}  // namespace

#include "typeforge/encoder.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace typeforge;

namespace {

// single-record corpus; mention spans [start, end) of the given tokens
Corpus one_sentence(const std::vector<std::string>& tokens, int start, int end) {
  Corpus c;
  c.hierarchy = TypeHierarchy({{"t"}});
  c.records.push_back({tokens, Split::train});
  Mention m;
  m.id = 0;
  m.record = 0;
  m.start = start;
  m.end = end;
  m.labels = {0};
  m.split = Split::train;
  c.mentions.push_back(m);
  return c;
}

TokenEmbeddingTable table_for(const Corpus& corpus, int dim,
                              std::uint64_t seed) {
  TokenEmbeddingTable t(dim);
  Rng rng(seed);
  for (std::size_t r = 0; r < corpus.records.size(); ++r) {
    for (std::size_t k = 0; k < corpus.records[r].tokens.size(); ++k) {
      std::vector<double> v(dim);
      for (auto& x : v) x = rng.uniform(-1.0, 1.0);
      t.insert(static_cast<int>(r), static_cast<int>(k), v);
    }
  }
  return t;
}

EncoderParams small_params(int embed_dim, std::uint64_t seed = 11,
                           int window = 2) {
  RepresentationLayout layout;
  layout.mention_dim = 3;
  layout.context_dim = 4;
  layout.position_dim = 2;
  Rng rng(seed);
  return EncoderParams::init(layout, embed_dim, window, rng);
}

}  // namespace

TEST(RepresentationLayout, PaperDefaultWidths) {
  const RepresentationLayout layout;
  EXPECT_EQ(layout.mention_dim, 200);
  EXPECT_EQ(layout.context_dim, 100);
  EXPECT_EQ(layout.position_dim, 25);
  EXPECT_EQ(layout.total(), 200 + 2 * 100 + 2 * 25);
}

TEST(MentionBlock, SingleCharacterIsItsEmbedding) {
  auto p = small_params(2);
  const auto block = encode_mention_block(p, "a");
  const auto row = p.char_embed.row(static_cast<unsigned char>('a'));
  for (int d = 0; d < 3; ++d) EXPECT_DOUBLE_EQ(block[d], row[d]);
}

TEST(MentionBlock, TwoCharactersAverage) {
  auto p = small_params(2);
  // overwrite the two rows with known values
  for (int d = 0; d < 3; ++d) {
    p.char_embed(static_cast<unsigned char>('a'), d) = d == 0 ? 1.0 : 0.0;
    p.char_embed(static_cast<unsigned char>('b'), d) = d == 1 ? 1.0 : 0.0;
  }
  const auto block = encode_mention_block(p, "ab");
  EXPECT_DOUBLE_EQ(block[0], 0.5);
  EXPECT_DOUBLE_EQ(block[1], 0.5);
  EXPECT_DOUBLE_EQ(block[2], 0.0);
}

TEST(MentionBlock, MatchesSummationOracle) {
  const auto p = small_params(2, 99);
  const std::string surface = "Imran Khan";
  const auto block = encode_mention_block(p, surface);
  for (int d = 0; d < 3; ++d) {
    double acc = 0.0;
    for (unsigned char c : surface) acc += p.char_embed(c, d);
    EXPECT_NEAR(block[d], acc / surface.size(), 1e-12);
  }
}

TEST(ContextBlocks, SentenceStartUsesMentionMeanOnly) {
  const auto corpus = one_sentence({"acme", "rose", "fast"}, 0, 1);
  const auto table = table_for(corpus, 3, 5);
  const auto p = small_params(3);
  const auto [left, right] =
      encode_context_blocks(p, corpus.mentions[0], table, 3);
  // left window is empty: input = span mean = the single mention token
  const double* tok = table.find(0, 0);
  for (int i = 0; i < p.layout.context_dim; ++i) {
    double pre = p.ctx_bias[i];
    for (int d = 0; d < 3; ++d) pre += p.ctx_weight(i, d) * tok[d];
    EXPECT_NEAR(left[i], std::tanh(pre), 1e-15);
  }
  EXPECT_NE(left, right);
}

TEST(ContextBlocks, SymmetricSentenceGivesEqualBlocks) {
  // palindromic token vectors around a middle mention
  Corpus c = one_sentence({"x", "m", "x"}, 1, 2);
  TokenEmbeddingTable table(2);
  table.insert(0, 0, std::vector<double>{0.4, -0.2});
  table.insert(0, 1, std::vector<double>{1.0, 1.0});
  table.insert(0, 2, std::vector<double>{0.4, -0.2});
  const auto p = small_params(2);
  const auto [left, right] = encode_context_blocks(p, c.mentions[0], table, 3);
  EXPECT_EQ(left, right);  // shared affine map, mirrored inputs
}

TEST(ContextBlocks, MatchesReferenceAffineOracle) {
  const auto corpus =
      one_sentence({"a", "b", "c", "d", "e", "f", "g"}, 3, 5);
  const auto table = table_for(corpus, 4, 21);
  const auto p = small_params(4, 13, /*window=*/2);
  const auto [left, right] =
      encode_context_blocks(p, corpus.mentions[0], table, 7);
  // left: tokens 1..4 (window 2 before start=3, plus span 3,4)
  std::vector<double> mean(4, 0.0);
  for (int t = 1; t < 5; ++t) {
    const double* v = table.find(0, t);
    for (int d = 0; d < 4; ++d) mean[d] += v[d];
  }
  for (auto& x : mean) x /= 4.0;
  for (int i = 0; i < p.layout.context_dim; ++i) {
    double pre = p.ctx_bias[i];
    for (int d = 0; d < 4; ++d) pre += p.ctx_weight(i, d) * mean[d];
    EXPECT_NEAR(left[i], std::tanh(pre), 1e-12);
  }
  // right: span 3,4 plus tokens 5,6
  std::vector<double> rmean(4, 0.0);
  for (int t = 3; t < 7; ++t) {
    const double* v = table.find(0, t);
    for (int d = 0; d < 4; ++d) rmean[d] += v[d];
  }
  for (auto& x : rmean) x /= 4.0;
  for (int i = 0; i < p.layout.context_dim; ++i) {
    double pre = p.ctx_bias[i];
    for (int d = 0; d < 4; ++d) pre += p.ctx_weight(i, d) * rmean[d];
    EXPECT_NEAR(right[i], std::tanh(pre), 1e-12);
  }
}

TEST(PositionBlocks, WholeSentenceMentionUsesBucketZero) {
  const auto corpus = one_sentence({"a", "b"}, 0, 2);
  const auto p = small_params(2);
  const auto [lpos, rpos] =
      encode_position_blocks(p, corpus.mentions[0], 2);
  const auto zero_row = p.pos_embed.row(kMaxSeqLen);
  for (int d = 0; d < p.layout.position_dim; ++d) {
    EXPECT_DOUBLE_EQ(lpos[d], zero_row[d]);
    EXPECT_DOUBLE_EQ(rpos[d], zero_row[d]);
  }
}

TEST(PositionBlocks, SingleLeftNeighborIsItsBucket) {
  const auto corpus = one_sentence({"a", "m"}, 1, 2);
  const auto p = small_params(2);
  const auto [lpos, rpos] =
      encode_position_blocks(p, corpus.mentions[0], 2);
  const auto minus_one = p.pos_embed.row(kMaxSeqLen - 1);
  for (int d = 0; d < p.layout.position_dim; ++d) {
    EXPECT_DOUBLE_EQ(lpos[d], minus_one[d]);
  }
  (void)rpos;
}

TEST(PositionBlocks, MatchesMeanOracleAndClips) {
  std::vector<std::string> tokens(250, "w");
  const int start = 120, end = 121;
  const auto corpus = one_sentence(tokens, start, end);
  const auto p = small_params(2, 77);
  const auto [lpos, rpos] = encode_position_blocks(p, corpus.mentions[0], 250);
  std::vector<double> acc(p.layout.position_dim, 0.0);
  for (int t = 0; t < start; ++t) {
    const int off = std::max(-kMaxSeqLen, t - start);
    for (int d = 0; d < p.layout.position_dim; ++d) {
      acc[d] += p.pos_embed(off + kMaxSeqLen, d);
    }
  }
  for (int d = 0; d < p.layout.position_dim; ++d) {
    EXPECT_NEAR(lpos[d], acc[d] / start, 1e-12);
  }
  std::vector<double> racc(p.layout.position_dim, 0.0);
  const int right_count = 250 - end;
  for (int t = end; t < 250; ++t) {
    const int off = std::min(kMaxSeqLen, t - (end - 1));
    for (int d = 0; d < p.layout.position_dim; ++d) {
      racc[d] += p.pos_embed(off + kMaxSeqLen, d);
    }
  }
  for (int d = 0; d < p.layout.position_dim; ++d) {
    EXPECT_NEAR(rpos[d], racc[d] / right_count, 1e-12);
  }
}

TEST(Assemble, OrderIsLposLeftMenRightRpos) {
  RepresentationLayout layout;
  layout.mention_dim = 1;
  layout.context_dim = 1;
  layout.position_dim = 1;
  const std::vector<double> a{1.0}, b{2.0}, c{3.0}, d{4.0}, e{5.0};
  const auto row = assemble(layout, a, b, c, d, e);
  EXPECT_EQ(row, (std::vector<double>{1.0, 2.0, 3.0, 4.0, 5.0}));
}

TEST(Assemble, WidthMismatchFails) {
  RepresentationLayout layout;
  layout.mention_dim = 2;
  layout.context_dim = 1;
  layout.position_dim = 1;
  const std::vector<double> one{1.0}, two{1.0, 2.0};
  EXPECT_THROW(assemble(layout, one, one, one, one, one),
               std::invalid_argument);
  EXPECT_NO_THROW(assemble(layout, one, one, two, one, one));
}

TEST(Assemble, SlicingRecoversBlocks) {
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  RepresentationLayout layout;
  layout.mention_dim = 5;
  layout.context_dim = 3;
  layout.position_dim = 2;
  auto rand_vec = [&](int n) {
    std::vector<double> v(n);
    for (auto& x : v) x = dist(gen);
    return v;
  };
  const auto lpos = rand_vec(2), left = rand_vec(3), men = rand_vec(5),
             right = rand_vec(3), rpos = rand_vec(2);
  const auto row = assemble(layout, lpos, left, men, right, rpos);
  auto slice = [&](int offset, int len) {
    return std::vector<double>(row.begin() + offset,
                               row.begin() + offset + len);
  };
  EXPECT_EQ(slice(layout.lpos_offset(), 2), lpos);
  EXPECT_EQ(slice(layout.left_offset(), 3), left);
  EXPECT_EQ(slice(layout.mention_offset(), 5), men);
  EXPECT_EQ(slice(layout.right_offset(), 3), right);
  EXPECT_EQ(slice(layout.rpos_offset(), 2), rpos);
}

TEST(EncodeAll, DeterministicBitwise) {
  const auto corpus = one_sentence({"alpha", "beta", "gamma"}, 1, 2);
  const auto table = table_for(corpus, 3, 41);
  const auto p = small_params(3, 42);
  const Matrix x1 = encode_all(p, corpus, table);
  const Matrix x2 = encode_all(p, corpus, table);
  EXPECT_TRUE(x1 == x2);
  EXPECT_EQ(x1.cols(), static_cast<std::size_t>(p.layout.total()));
}

TEST(RepresentationFile, RoundTripAndDimensionErrors) {
  Matrix x(3, 2);
  Rng rng(8);
  // float-valued entries so the f32 file round-trips bitwise
  for (double& v : x.data()) {
    v = static_cast<double>(static_cast<float>(rng.uniform(-2.0, 2.0)));
  }
  const std::string path = testing::TempDir() + "reps.bin";
  save_representations(x, path);
  const Matrix y = load_representations(path);
  EXPECT_TRUE(x == y);  // byte-comparison oracle: identical doubles

  // header says 3 rows but the payload holds 2
  {
    auto os = open_output(path);
    write_u32(os, kRepresentationMagic);
    write_u32(os, 3);
    write_u32(os, 2);
    for (int i = 0; i < 4; ++i) write_f32(os, 1.0f);
  }
  EXPECT_THROW(load_representations(path), ValidationError);
}

TEST(EncoderCheckpoint, RoundTripBitwise) {
  const auto p = small_params(3, 123);
  const std::string path = testing::TempDir() + "encoder.ckpt";
  save_encoder(p, path);
  const auto q = load_encoder(path);
  EXPECT_TRUE(p.char_embed == q.char_embed);
  EXPECT_TRUE(p.ctx_weight == q.ctx_weight);
  EXPECT_EQ(p.ctx_bias, q.ctx_bias);
  EXPECT_TRUE(p.pos_embed == q.pos_embed);
  EXPECT_EQ(p.window, q.window);
  EXPECT_EQ(p.embed_dim, q.embed_dim);
}

// central finite differences over every encoder parameter
TEST(EncoderBackward, MatchesFiniteDifferences) {
  const auto corpus = one_sentence({"ab", "cd", "ef", "gh", "ij"}, 2, 4);
  const auto table = table_for(corpus, 3, 55);
  EncoderParams p = small_params(3, 66);
  const Mention& m = corpus.mentions[0];
  const int f = p.layout.total();

  // loss = sum_i g_i * x_i for a fixed random g
  Rng rng(77);
  std::vector<double> g(f);
  for (auto& x : g) x = rng.uniform(-1.0, 1.0);
  auto loss = [&](const EncoderParams& params) {
    const auto row = encode_mention(params, corpus, m, table);
    double acc = 0.0;
    for (int i = 0; i < f; ++i) acc += g[i] * row[i];
    return acc;
  };

  EncoderGradients grads(p);
  encode_backward(p, corpus, m, table, g, grads);

  const double eps = 1e-6;
  auto check_tensor = [&](std::vector<double>& params,
                          const std::vector<double>& analytic,
                          const char* name) {
    for (std::size_t i = 0; i < params.size(); i += 13) {  // sample entries
      const double keep = params[i];
      params[i] = keep + eps;
      const double up = loss(p);
      params[i] = keep - eps;
      const double down = loss(p);
      params[i] = keep;
      const double numeric = (up - down) / (2.0 * eps);
      EXPECT_NEAR(analytic[i], numeric, 1e-6)
          << name << " entry " << i;
    }
  };
  check_tensor(p.char_embed.data(), grads.d_char.data(), "char");
  check_tensor(p.ctx_weight.data(), grads.d_ctx_weight.data(), "ctx_weight");
  check_tensor(p.ctx_bias, grads.d_ctx_bias, "ctx_bias");
  check_tensor(p.pos_embed.data(), grads.d_pos.data(), "pos");
}

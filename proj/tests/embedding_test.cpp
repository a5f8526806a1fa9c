#include "typeforge/embedding.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace typeforge;

namespace {

Mention span_mention(int id, int record, int start, int end) {
  Mention m;
  m.id = id;
  m.record = record;
  m.start = start;
  m.end = end;
  m.split = Split::train;
  return m;
}

TokenEmbeddingTable table_from(
    int dim, const std::vector<std::tuple<int, int, std::vector<double>>>& rows) {
  TokenEmbeddingTable t(dim);
  for (const auto& [rec, tok, v] : rows) t.insert(rec, tok, v);
  return t;
}

}  // namespace

TEST(MentionEmbedding, SingleTokenSpanIsItsVector) {
  const auto table = table_from(2, {{0, 0, {3.0, -1.5}}});
  const auto e = mention_embedding(span_mention(0, 0, 0, 1), table);
  EXPECT_EQ(e, (std::vector<double>{3.0, -1.5}));
}

TEST(MentionEmbedding, TwoTokenSpanAverages) {
  const auto table = table_from(2, {{0, 0, {1.0, 0.0}}, {0, 1, {0.0, 1.0}}});
  const auto e = mention_embedding(span_mention(0, 0, 0, 2), table);
  EXPECT_EQ(e, (std::vector<double>{0.5, 0.5}));
}

TEST(MentionEmbedding, MatchesSummationOracle) {
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  const int dim = 7;
  std::vector<std::tuple<int, int, std::vector<double>>> rows;
  for (int t = 0; t < 3; ++t) {
    std::vector<double> v(dim);
    for (auto& x : v) x = dist(gen);
    rows.emplace_back(0, t, v);
  }
  const auto table = table_from(dim, rows);
  const auto e = mention_embedding(span_mention(0, 0, 0, 3), table);
  for (int d = 0; d < dim; ++d) {
    double acc = 0.0;
    for (int t = 0; t < 3; ++t) acc += std::get<2>(rows[t])[d];
    EXPECT_NEAR(e[d], acc / 3.0, 1e-12);
  }
}

TEST(MentionEmbedding, MissingTokenNamesTheMention) {
  const auto table = table_from(2, {{0, 0, {1.0, 0.0}}});
  try {
    mention_embedding(span_mention(42, 0, 0, 2), table);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("42"), std::string::npos);
  }
}

TEST(Cosine, IdentityAndOrthogonality) {
  const std::vector<double> u = {0.3, -0.7, 2.0};
  EXPECT_NEAR(cosine(u, u), 1.0, 1e-12);
  const std::vector<double> a = {1.0, 0.0}, b = {0.0, 1.0};
  EXPECT_DOUBLE_EQ(cosine(a, b), 0.0);
}

TEST(Cosine, MatchesIndependentDotNormComputation) {
  const std::vector<double> u = {1.0, 2.0, 3.0}, v = {4.0, 5.0, 6.0};
  const double expected =
      (1.0 * 4.0 + 2.0 * 5.0 + 3.0 * 6.0) /
      (std::sqrt(1.0 + 4.0 + 9.0) * std::sqrt(16.0 + 25.0 + 36.0));
  EXPECT_NEAR(cosine(u, v), expected, 1e-15);
  EXPECT_NEAR(cosine(u, v), 0.974631846, 1e-9);
}

TEST(Cosine, ZeroVectorIsAnError) {
  const std::vector<double> z = {0.0, 0.0}, u = {1.0, 1.0};
  EXPECT_THROW(cosine(z, u), std::domain_error);
  EXPECT_THROW(cosine(u, z), std::domain_error);
}

namespace {

// one-record-per-mention corpus with the given splits and label sets
Corpus tiny_corpus(const std::vector<std::pair<Split, std::vector<int>>>& spec,
                   int y_count) {
  std::vector<std::vector<std::string>> paths;
  for (int y = 0; y < y_count; ++y) paths.push_back({"t" + std::to_string(y)});
  Corpus c;
  c.hierarchy = TypeHierarchy(paths);
  for (const auto& [split, labels] : spec) {
    SentenceRecord rec;
    rec.tokens = {"w"};
    rec.split = split;
    Mention m;
    m.id = static_cast<int>(c.mentions.size());
    m.record = static_cast<int>(c.records.size());
    m.start = 0;
    m.end = 1;
    m.labels = labels;
    m.split = split;
    c.records.push_back(rec);
    c.mentions.push_back(m);
  }
  return c;
}

Matrix rows_matrix(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  }
  return m;
}

}  // namespace

TEST(ComputePivots, SingleContributor) {
  const auto corpus = tiny_corpus({{Split::train, {0}}}, 2);
  const auto pivots = compute_pivots(corpus, rows_matrix({{2.0, 4.0}}));
  EXPECT_EQ(pivots.support[0], 1);
  EXPECT_EQ(pivots.support[1], 0);
  EXPECT_FALSE(pivots.usable(1));
  EXPECT_DOUBLE_EQ(pivots.pivots(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(pivots.pivots(0, 1), 4.0);
}

TEST(ComputePivots, MultiLabelMentionContributesToEachLabel) {
  const auto corpus = tiny_corpus({{Split::train, {0, 1}}}, 2);
  const auto pivots = compute_pivots(corpus, rows_matrix({{1.0, -1.0}}));
  EXPECT_EQ(pivots.support[0], 1);
  EXPECT_EQ(pivots.support[1], 1);
  EXPECT_DOUBLE_EQ(pivots.pivots(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(pivots.pivots(1, 0), 1.0);
}

TEST(ComputePivots, TwoContributorsAverage) {
  const auto corpus =
      tiny_corpus({{Split::train, {0}}, {Split::train, {0}}}, 1);
  const auto pivots =
      compute_pivots(corpus, rows_matrix({{2.0, 0.0}, {0.0, 2.0}}));
  EXPECT_EQ(pivots.support[0], 2);
  EXPECT_DOUBLE_EQ(pivots.pivots(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(pivots.pivots(0, 1), 1.0);
}

TEST(ComputePivots, DevAndTestMentionsAreExcluded) {
  const auto corpus = tiny_corpus(
      {{Split::train, {0}}, {Split::dev, {0}}, {Split::test, {0}}}, 1);
  const auto pivots = compute_pivots(
      corpus, rows_matrix({{1.0, 0.0}, {100.0, 0.0}, {100.0, 0.0}}));
  EXPECT_EQ(pivots.support[0], 1);
  EXPECT_DOUBLE_EQ(pivots.pivots(0, 0), 1.0);
}

// dividing every embedding by a power of two leaves cosines bitwise unchanged
TEST(ScaleRobustness, PowerOfTwoScalingPreservesCosines) {
  std::mt19937 gen(5);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> u(8), v(8), us(8), vs(8);
    for (int d = 0; d < 8; ++d) {
      u[d] = dist(gen);
      v[d] = dist(gen);
      us[d] = u[d] / 4.0;
      vs[d] = v[d] / 4.0;
    }
    EXPECT_EQ(cosine(u, v), cosine(us, vs));
  }
}

// the mean and the sum pivot give the same cosine against any query
TEST(PivotMeanVsSum, CosineEquivalent) {
  std::mt19937 gen(6);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> sum(5, 0.0);
  const int support = 7;
  for (int i = 0; i < support; ++i) {
    for (auto& x : sum) x += dist(gen);
  }
  std::vector<double> mean = sum;
  for (auto& x : mean) x /= support;
  std::vector<double> query(5);
  for (auto& x : query) x = dist(gen);
  EXPECT_NEAR(cosine(query, sum), cosine(query, mean), 1e-12);
}

TEST(EmbeddingFiles, BinaryRoundTrip) {
  TokenEmbeddingTable table(3);
  table.insert(0, 0, std::vector<double>{1.0, 2.0, 3.0});
  table.insert(2, 5, std::vector<double>{-0.25, 0.5, 0.125});
  const std::string path = testing::TempDir() + "emb_roundtrip.bin";
  save_embeddings_binary(table, path);
  const auto loaded = load_embeddings_binary(path);
  EXPECT_EQ(loaded.dim(), 3);
  EXPECT_EQ(loaded.size(), 2u);
  const double* v = loaded.find(2, 5);
  ASSERT_NE(v, nullptr);
  EXPECT_DOUBLE_EQ(v[0], -0.25);
  EXPECT_EQ(loaded.find(1, 1), nullptr);
}

TEST(EmbeddingFiles, TextFormat) {
  const std::string path = testing::TempDir() + "emb_text.txt";
  {
    auto os = open_output(path, false);
    os << "0 0 1.5 -2.5\n";
    os << "0 1 0.25 0.75\n";
  }
  const auto table = load_embeddings_text(path);
  EXPECT_EQ(table.dim(), 2);
  const double* v = table.find(0, 1);
  ASSERT_NE(v, nullptr);
  EXPECT_DOUBLE_EQ(v[1], 0.75);
}

TEST(EmbeddingFiles, TextWidthMismatchRejected) {
  const std::string path = testing::TempDir() + "emb_bad_width.txt";
  {
    auto os = open_output(path, false);
    os << "0 0 1.0 2.0\n";
    os << "0 1 1.0\n";
  }
  EXPECT_THROW(load_embeddings_text(path), ValidationError);
}

TEST(EmbeddingFiles, NonFiniteValuesRejected) {
  TokenEmbeddingTable table(2);
  EXPECT_THROW(table.insert(0, 0, std::vector<double>{1.0, std::nan("")}),
               ValidationError);
  const std::string path = testing::TempDir() + "emb_inf.txt";
  {
    auto os = open_output(path, false);
    os << "0 0 inf 1.0\n";
  }
  EXPECT_THROW(load_embeddings_text(path), ValidationError);
}

TEST(EmbeddingFiles, DuplicateEntryRejected) {
  TokenEmbeddingTable table(1);
  table.insert(0, 0, std::vector<double>{1.0});
  EXPECT_THROW(table.insert(0, 0, std::vector<double>{2.0}), ValidationError);
}

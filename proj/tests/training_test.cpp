#include "typeforge/training.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace typeforge;

TEST(AdamStep, ZeroGradientLeavesParametersUnchanged) {
  std::vector<double> params = {1.0, -2.0, 0.5};
  const std::vector<double> grads = {0.0, 0.0, 0.0};
  AdamState state(3);
  adam_step(params, grads, state, {});
  EXPECT_EQ(params, (std::vector<double>{1.0, -2.0, 0.5}));
  EXPECT_EQ(state.t, 1);
}

// constant gradient: every step is bounded by lr and approaches lr
TEST(AdamStep, ConstantGradientStepBound) {
  AdamConfig cfg;
  cfg.lr = 0.001;
  std::vector<double> params = {5.0};
  const std::vector<double> grads = {0.37};
  AdamState state(1);
  double prev = params[0];
  double last_step = 0.0;
  for (int t = 0; t < 200; ++t) {
    adam_step(params, grads, state, cfg);
    last_step = std::fabs(params[0] - prev);
    EXPECT_LE(last_step, cfg.lr * (1.0 + 1e-12));
    prev = params[0];
  }
  EXPECT_NEAR(last_step, cfg.lr, cfg.lr * 1e-3);
}

// three steps on d/dx (x - 3)^2, replayed by a hand-stepped scalar reference
TEST(AdamStep, ScalarQuadraticMatchesHandSteppedOracle) {
  AdamConfig cfg;
  cfg.lr = 0.1;
  std::vector<double> params = {0.0};
  AdamState state(1);

  double x_ref = 0.0, m_ref = 0.0, v_ref = 0.0;
  for (int t = 1; t <= 3; ++t) {
    const double g = 2.0 * (params[0] - 3.0);
    adam_step(params, std::vector<double>{g}, state, cfg);

    const double g_ref = 2.0 * (x_ref - 3.0);
    m_ref = cfg.beta1 * m_ref + (1.0 - cfg.beta1) * g_ref;
    v_ref = cfg.beta2 * v_ref + (1.0 - cfg.beta2) * g_ref * g_ref;
    const double m_hat = m_ref / (1.0 - std::pow(cfg.beta1, t));
    const double v_hat = v_ref / (1.0 - std::pow(cfg.beta2, t));
    x_ref -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    EXPECT_NEAR(params[0], x_ref, 1e-12);
  }
}

TEST(AdamStep, NanGradientAborts) {
  std::vector<double> params = {1.0};
  AdamState state(1);
  EXPECT_THROW(
      adam_step(params, std::vector<double>{std::nan("")}, state, {}),
      std::runtime_error);
}

namespace {

// mention-per-record corpus over two flat types with the given split layout
struct FixedCase {
  Corpus corpus;
  Matrix x;
  NormalizedAdjacency adjacency;
};

FixedCase separable_case(int per_type_train, int per_type_dev,
                         int per_type_test) {
  Corpus c;
  c.hierarchy = TypeHierarchy({{"alpha"}, {"beta"}});
  auto add = [&](Split split, int type) {
    SentenceRecord rec;
    rec.tokens = {"w"};
    rec.split = split;
    Mention m;
    m.id = static_cast<int>(c.mentions.size());
    m.record = static_cast<int>(c.records.size());
    m.start = 0;
    m.end = 1;
    m.labels = {type};
    m.split = split;
    c.records.push_back(rec);
    c.mentions.push_back(m);
  };
  for (int t = 0; t < 2; ++t) {
    for (int i = 0; i < per_type_train; ++i) add(Split::train, t);
    for (int i = 0; i < per_type_dev; ++i) add(Split::dev, t);
    for (int i = 0; i < per_type_test; ++i) add(Split::test, t);
  }
  FixedCase out;
  out.x = Matrix(c.mentions.size(), 2);
  for (const auto& m : c.mentions) {
    out.x(m.id, m.labels[0]) = 2.0;  // disjoint axis-aligned clusters
  }
  RefinementGraph g;
  g.n = static_cast<int>(c.mentions.size());
  g.mode = GraphMode::eye;
  out.adjacency = normalize(g);
  out.corpus = std::move(c);
  return out;
}

TrainConfig fast_config(int rounds, std::uint64_t seed = 1) {
  TrainConfig cfg;
  cfg.max_rounds = rounds;
  cfg.phase2_steps = 10;
  cfg.hidden_dim = 4;
  cfg.output_dim = 4;
  cfg.adam.lr = 0.01;
  cfg.tol = -1.0;  // improvement can never fall below -1: no early stop
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(Train, ZeroRoundsReturnsInitializationAndEmptyLog) {
  const auto fixture = separable_case(3, 1, 1);
  TrainInputs inputs;
  inputs.corpus = &fixture.corpus;
  inputs.adjacency = &fixture.adjacency;
  inputs.fixed_representations = fixture.x;
  const auto result = train(inputs, fast_config(0));
  EXPECT_TRUE(result.log.empty());
  EXPECT_EQ(result.best_round, 0);
  EXPECT_FALSE(result.best.encoder.has_value());
  EXPECT_TRUE(result.best.gcn.w0 == result.final.gcn.w0);
}

// a linearly separable two-cluster set trains to exactly zero hinge loss
TEST(Train, SeparableSyntheticReachesZeroLoss) {
  const auto fixture = separable_case(15, 3, 3);
  TrainInputs inputs;
  inputs.corpus = &fixture.corpus;
  inputs.adjacency = &fixture.adjacency;
  inputs.fixed_representations = fixture.x;
  const auto result = train(inputs, fast_config(200));
  ASSERT_FALSE(result.log.empty());
  const auto& last = result.log.back();
  EXPECT_LE(last.clean_loss + last.noisy_loss, 1e-6);
  // explicit margin check on the final parameters
  const Matrix phi =
      gcn_forward(fixture.adjacency, fixture.x, result.final.gcn);
  for (const auto& m : fixture.corpus.mentions) {
    if (m.split != Split::train) continue;
    for (int y = 0; y < 2; ++y) {
      const double s = score(phi.row(m.id), y, result.final.labels);
      if (y == m.labels[0]) {
        EXPECT_GE(s, 1.0 - 1e-9);
      } else {
        EXPECT_LE(s, -1.0 + 1e-9);
      }
    }
  }
}

TEST(Train, FixedSeedIsBitwiseDeterministic) {
  const auto fixture = separable_case(8, 2, 2);
  TrainInputs inputs;
  inputs.corpus = &fixture.corpus;
  inputs.adjacency = &fixture.adjacency;
  inputs.fixed_representations = fixture.x;
  const auto a = train(inputs, fast_config(5, 42));
  const auto b = train(inputs, fast_config(5, 42));
  EXPECT_TRUE(a.final.gcn.w0 == b.final.gcn.w0);
  EXPECT_TRUE(a.final.gcn.w1 == b.final.gcn.w1);
  EXPECT_TRUE(a.final.labels.embed == b.final.labels.embed);
  EXPECT_EQ(a.final.labels.bias, b.final.labels.bias);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    // every logged field except wall time is part of the contract
    EXPECT_EQ(a.log[i].clean_loss, b.log[i].clean_loss);
    EXPECT_EQ(a.log[i].noisy_loss, b.log[i].noisy_loss);
    EXPECT_EQ(a.log[i].dev.macro_f1, b.log[i].dev.macro_f1);
  }
}

TEST(Train, DifferentSeedsDiverge) {
  const auto fixture = separable_case(8, 2, 2);
  TrainInputs inputs;
  inputs.corpus = &fixture.corpus;
  inputs.adjacency = &fixture.adjacency;
  inputs.fixed_representations = fixture.x;
  const auto a = train(inputs, fast_config(2, 1));
  const auto b = train(inputs, fast_config(2, 2));
  EXPECT_FALSE(a.final.gcn.w0 == b.final.gcn.w0);
}

// gradients flow only from train rows: wiping dev/test labels leaves the
// learned parameters bitwise unchanged
TEST(Train, TestAndDevLabelsNeverReachGradients) {
  auto fixture = separable_case(8, 2, 2);
  TrainInputs inputs;
  inputs.corpus = &fixture.corpus;
  inputs.adjacency = &fixture.adjacency;
  inputs.fixed_representations = fixture.x;
  const auto before = train(inputs, fast_config(4, 9));

  for (auto& m : fixture.corpus.mentions) {
    if (m.split != Split::train) m.labels.clear();
  }
  const auto after = train(inputs, fast_config(4, 9));
  EXPECT_TRUE(before.final.gcn.w0 == after.final.gcn.w0);
  EXPECT_TRUE(before.final.gcn.w1 == after.final.gcn.w1);
  EXPECT_TRUE(before.final.labels.embed == after.final.labels.embed);
  EXPECT_EQ(before.final.labels.bias, after.final.labels.bias);
}

TEST(Train, BuiltinEncoderRunsAndIsDeterministic) {
  // two three-token sentences per type; token vectors separate the types
  Corpus c;
  c.hierarchy = TypeHierarchy({{"alpha"}, {"beta"}});
  TokenEmbeddingTable table(2);
  Rng noise(3);
  for (int i = 0; i < 12; ++i) {
    const int type = i % 2;
    SentenceRecord rec;
    rec.tokens = {"tok", "ent", "ctx"};
    rec.split = i < 8 ? Split::train : (i < 10 ? Split::dev : Split::test);
    Mention m;
    m.id = i;
    m.record = i;
    m.start = 1;
    m.end = 2;
    m.labels = {type};
    m.split = rec.split;
    c.records.push_back(rec);
    c.mentions.push_back(m);
    for (int t = 0; t < 3; ++t) {
      std::vector<double> v = {type == 0 ? 1.0 : 0.0, type == 1 ? 1.0 : 0.0};
      for (auto& x : v) x += 0.05 * noise.uniform(-1.0, 1.0);
      table.insert(i, t, v);
    }
  }
  RefinementGraph g;
  g.n = 12;
  g.mode = GraphMode::eye;
  const auto adjacency = normalize(g);

  TrainInputs inputs;
  inputs.corpus = &c;
  inputs.adjacency = &adjacency;
  inputs.table = &table;
  RepresentationLayout layout;
  layout.mention_dim = 4;
  layout.context_dim = 3;
  layout.position_dim = 2;
  inputs.layout = layout;
  inputs.window = 2;

  TrainConfig cfg = fast_config(3, 7);
  cfg.batch_size = 4;
  const auto a = train(inputs, cfg);
  ASSERT_TRUE(a.final.encoder.has_value());
  EXPECT_EQ(a.log.size(), 3u);
  const auto b = train(inputs, cfg);
  EXPECT_TRUE(a.final.encoder->char_embed == b.final.encoder->char_embed);
  EXPECT_TRUE(a.final.encoder->ctx_weight == b.final.encoder->ctx_weight);
  EXPECT_TRUE(a.final.gcn.w0 == b.final.gcn.w0);
}

TEST(Train, PlateauStopsAfterPatienceRounds) {
  const auto fixture = separable_case(6, 2, 2);
  TrainInputs inputs;
  inputs.corpus = &fixture.corpus;
  inputs.adjacency = &fixture.adjacency;
  inputs.fixed_representations = fixture.x;
  TrainConfig cfg = fast_config(100, 3);
  cfg.tol = 2.0;  // improvement is always < 2: plateau from round one
  cfg.patience = 3;
  const auto result = train(inputs, cfg);
  EXPECT_EQ(result.log.size(), 3u);
}

TEST(Train, AdjacencySizeMismatchFails) {
  const auto fixture = separable_case(3, 1, 1);
  RefinementGraph g;
  g.n = 2;  // wrong node count
  const auto small = normalize(g);
  TrainInputs inputs;
  inputs.corpus = &fixture.corpus;
  inputs.adjacency = &small;
  inputs.fixed_representations = fixture.x;
  EXPECT_THROW(train(inputs, fast_config(1)), std::invalid_argument);
}

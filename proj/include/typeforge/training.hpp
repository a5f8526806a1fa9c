#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "typeforge/adam.hpp"
#include "typeforge/corpus.hpp"
#include "typeforge/encoder.hpp"
#include "typeforge/gcn.hpp"
#include "typeforge/graph.hpp"
#include "typeforge/inference.hpp"
#include "typeforge/matrix.hpp"
#include "typeforge/metrics.hpp"
#include "typeforge/random.hpp"
#include "typeforge/typing.hpp"

namespace typeforge {

struct TrainConfig {
  int max_rounds = 100;
  int phase1_epochs = 1;     // minibatch epochs per round
  int phase2_steps = 50;     // full-batch steps per round
  int batch_size = 32;
  double tol = 1e-4;         // dev macro-F1 plateau tolerance
  int patience = 3;          // consecutive plateau rounds before stopping
  std::uint64_t seed = 1;
  int hidden_dim = 256;      // h
  int output_dim = 128;      // k, must match the label embedding width
  AdamConfig adam;
};

// Either the builtin trainable encoder or a fixed externally-computed matrix.
// With a fixed matrix the Phase-I half of every round is skipped.
struct TrainInputs {
  const Corpus* corpus = nullptr;
  const NormalizedAdjacency* adjacency = nullptr;
  const TokenEmbeddingTable* table = nullptr;    // builtin path only
  std::optional<RepresentationLayout> layout;    // builtin path only
  int window = 5;                                // builtin path only
  std::optional<Matrix> fixed_representations;   // file-backed path

  bool builtin() const { return !fixed_representations.has_value(); }
};

struct RoundLog {
  int round = 0;
  double clean_loss = 0.0;
  double noisy_loss = 0.0;
  MetricsReport dev;
  double seconds = 0.0;
};

struct ModelSnapshot {
  std::optional<EncoderParams> encoder;  // absent in file-backed mode
  GcnParams gcn;
  LabelEmbeddings labels;
};

struct TrainResult {
  ModelSnapshot best;    // highest dev macro-F1
  ModelSnapshot final;   // parameters after the last completed round
  std::vector<RoundLog> log;
  int best_round = 0;    // 0 = initialization
  double best_dev_macro = 0.0;
  bool aborted = false;  // divergence: training stopped on a non-finite loss
};

namespace detail {

struct TrainMentionInfo {
  int id = 0;
  Cleanliness tag = Cleanliness::clean;
};

inline std::vector<TrainMentionInfo> train_mentions(const Corpus& corpus) {
  std::vector<TrainMentionInfo> out;
  for (const auto& m : corpus.mentions) {
    if (m.split != Split::train) continue;
    out.push_back({m.id, bifurcate(m, corpus.hierarchy)});
  }
  return out;
}

inline MetricsReport dev_metrics(const Corpus& corpus, const Matrix& phi,
                                 const LabelEmbeddings& labels) {
  std::vector<std::vector<int>> preds;
  std::vector<std::vector<int>> gold;
  for (const auto& m : corpus.mentions) {
    if (m.split != Split::dev) continue;
    preds.push_back(top_down_infer(phi.row(m.id), labels, corpus.hierarchy).labels);
    gold.push_back(m.labels);
  }
  if (preds.empty()) return {};
  return evaluate(preds, gold);
}

}  // namespace detail

// Alternating two-phase training. Each round runs minibatch updates of the
// encoder against a Phase-I typing head on x_m, re-assembles X, then runs
// full-batch gradient descent on {W0, W1, label embeddings, biases} through
// the graph convolution. Losses are summed over mentions; only train-split
// rows contribute gradients, so test nodes influence the fit solely through
// the adjacency structure.
inline TrainResult train(const TrainInputs& inputs, const TrainConfig& config) {
  const Corpus& corpus = *inputs.corpus;
  const NormalizedAdjacency& adjacency = *inputs.adjacency;
  const int y_count = corpus.hierarchy.size();
  if (adjacency.n() != corpus.mention_count()) {
    throw std::invalid_argument("train: adjacency size " +
                                std::to_string(adjacency.n()) +
                                " does not match mention count " +
                                std::to_string(corpus.mention_count()));
  }

  Rng init_rng(mix_seed(config.seed, 0x101));
  Rng shuffle_rng(mix_seed(config.seed, 0x202));

  std::optional<EncoderParams> encoder;
  std::optional<LabelEmbeddings> phase1_head;
  int f = 0;
  if (inputs.builtin()) {
    if (inputs.table == nullptr || !inputs.layout.has_value()) {
      throw std::invalid_argument(
          "train: builtin encoder needs a token table and a layout");
    }
    encoder = EncoderParams::init(*inputs.layout, inputs.table->dim(),
                                  inputs.window, init_rng);
    f = inputs.layout->total();
    phase1_head = LabelEmbeddings::init(y_count, f, init_rng);
  } else {
    f = static_cast<int>(inputs.fixed_representations->cols());
    if (inputs.fixed_representations->rows() !=
        static_cast<std::size_t>(corpus.mention_count())) {
      throw std::invalid_argument(
          "train: representation row count does not match mention count");
    }
  }

  GcnParams gcn = GcnParams::init(f, config.hidden_dim, config.output_dim, init_rng);
  LabelEmbeddings labels =
      LabelEmbeddings::init(y_count, config.output_dim, init_rng);

  const auto train_set = detail::train_mentions(corpus);
  if (train_set.empty()) {
    throw ValidationError("train: corpus has no train-split mentions");
  }

  // optimizer state, one slot per tensor
  AdamState st_w0(gcn.w0.data().size());
  AdamState st_w1(gcn.w1.data().size());
  AdamState st_label(labels.embed.data().size());
  AdamState st_bias(labels.bias.size());
  std::optional<AdamState> st_char, st_ctx_w, st_ctx_b, st_pos, st_h_label,
      st_h_bias;
  if (encoder) {
    st_char.emplace(encoder->char_embed.data().size());
    st_ctx_w.emplace(encoder->ctx_weight.data().size());
    st_ctx_b.emplace(encoder->ctx_bias.size());
    st_pos.emplace(encoder->pos_embed.data().size());
    st_h_label.emplace(phase1_head->embed.data().size());
    st_h_bias.emplace(phase1_head->bias.size());
  }

  TrainResult result;
  result.best = {encoder, gcn, labels};
  result.final = result.best;
  if (config.max_rounds == 0) return result;

  int plateau = 0;
  for (int round = 1; round <= config.max_rounds; ++round) {
    const auto t0 = std::chrono::steady_clock::now();

    if (encoder) {
      for (int epoch = 0; epoch < config.phase1_epochs; ++epoch) {
        std::vector<detail::TrainMentionInfo> order = train_set;
        shuffle(order, shuffle_rng);
        for (std::size_t at = 0; at < order.size(); at += config.batch_size) {
          const std::size_t end =
              std::min(order.size(), at + static_cast<std::size_t>(config.batch_size));
          Matrix x_batch(end - at, f);
          std::vector<BatchMention> batch;
          for (std::size_t b = at; b < end; ++b) {
            const Mention& m = corpus.mentions[order[b].id];
            const auto row = encode_mention(*encoder, corpus, m, *inputs.table);
            std::copy(row.begin(), row.end(), x_batch.row(b - at).begin());
            batch.push_back({static_cast<int>(b - at), &m.labels, order[b].tag});
          }
          const auto grads = typing_loss_grads(x_batch, batch, *phase1_head);
          if (!std::isfinite(grads.loss.total())) {
            result.aborted = true;
            break;
          }
          EncoderGradients eg(*encoder);
          for (std::size_t b = at; b < end; ++b) {
            encode_backward(*encoder, corpus, corpus.mentions[order[b].id],
                            *inputs.table, grads.d_rows.row(b - at), eg);
          }
          adam_step(encoder->char_embed.data(), eg.d_char.data(), *st_char,
                    config.adam);
          adam_step(encoder->ctx_weight.data(), eg.d_ctx_weight.data(),
                    *st_ctx_w, config.adam);
          adam_step(encoder->ctx_bias, eg.d_ctx_bias, *st_ctx_b, config.adam);
          adam_step(encoder->pos_embed.data(), eg.d_pos.data(), *st_pos,
                    config.adam);
          adam_step(phase1_head->embed.data(), grads.d_label.data(),
                    *st_h_label, config.adam);
          adam_step(phase1_head->bias, grads.d_bias, *st_h_bias, config.adam);
        }
        if (result.aborted) break;
      }
    }
    if (result.aborted) break;

    const Matrix x = encoder ? encode_all(*encoder, corpus, *inputs.table)
                             : *inputs.fixed_representations;

    std::vector<BatchMention> full_batch;
    full_batch.reserve(train_set.size());
    for (const auto& tm : train_set) {
      full_batch.push_back({tm.id, &corpus.mentions[tm.id].labels, tm.tag});
    }

    LossBreakdown round_loss;
    for (int step = 0; step < config.phase2_steps; ++step) {
      GcnCache cache;
      const Matrix phi = gcn_forward(adjacency, x, gcn, &cache);
      const auto grads = typing_loss_grads(phi, full_batch, labels);
      round_loss = grads.loss;
      if (!std::isfinite(round_loss.total())) {
        result.aborted = true;
        break;
      }
      const auto gg = gcn_backward(adjacency, gcn, cache, grads.d_rows);
      adam_step(gcn.w0.data(), gg.d_w0.data(), st_w0, config.adam);
      adam_step(gcn.w1.data(), gg.d_w1.data(), st_w1, config.adam);
      gcn.revision += 1;
      adam_step(labels.embed.data(), grads.d_label.data(), st_label, config.adam);
      adam_step(labels.bias, grads.d_bias, st_bias, config.adam);
    }
    if (result.aborted) break;

    const Matrix phi = gcn_forward(adjacency, x, gcn);
    const MetricsReport dev = detail::dev_metrics(corpus, phi, labels);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    result.log.push_back({round, round_loss.clean, round_loss.noisy, dev, seconds});
    result.final = {encoder, gcn, labels};

    const bool has_dev = corpus.count_split(Split::dev) > 0;
    const double improvement = dev.macro_f1 - result.best_dev_macro;
    if (dev.macro_f1 > result.best_dev_macro || result.best_round == 0) {
      result.best_dev_macro = dev.macro_f1;
      result.best_round = round;
      result.best = result.final;
    }
    if (has_dev) {
      plateau = improvement < config.tol ? plateau + 1 : 0;
      if (plateau >= config.patience) break;
    }
  }
  return result;
}

}  // namespace typeforge

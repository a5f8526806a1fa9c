#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "typeforge/corpus.hpp"
#include "typeforge/embedding.hpp"
#include "typeforge/io.hpp"
#include "typeforge/matrix.hpp"
#include "typeforge/random.hpp"

namespace typeforge {

// Relative offsets are clipped to +/- kMaxSeqLen; bucket 0 is reserved for an
// empty context side (real context offsets are never 0).
inline constexpr int kMaxSeqLen = 100;
inline constexpr int kPositionBuckets = 2 * kMaxSeqLen + 1;

// Block widths of the concatenated mention representation
// [lpos; left; mention; right; rpos], total f = d + 2c + 2p.
struct RepresentationLayout {
  int mention_dim = 200;   // d
  int context_dim = 100;   // c
  int position_dim = 25;   // p

  int total() const { return mention_dim + 2 * context_dim + 2 * position_dim; }

  int lpos_offset() const { return 0; }
  int left_offset() const { return position_dim; }
  int mention_offset() const { return position_dim + context_dim; }
  int right_offset() const { return position_dim + context_dim + mention_dim; }
  int rpos_offset() const {
    return position_dim + 2 * context_dim + mention_dim;
  }
};

// Windowed-mean encoder with the same block structure as the recurrent
// original: byte-level mention encoding, one shared affine map over the
// left/right context means, learned position-bucket embeddings. Token
// embeddings are a frozen input; everything here is trainable.
struct EncoderParams {
  RepresentationLayout layout;
  int embed_dim = 0;   // width of the token embedding table
  int window = 5;      // context tokens taken per side

  Matrix char_embed;            // 256 x d
  Matrix ctx_weight;            // c x embed_dim, shared by both sides
  std::vector<double> ctx_bias; // c
  Matrix pos_embed;             // kPositionBuckets x p

  static EncoderParams init(const RepresentationLayout& layout, int embed_dim,
                            int window, Rng& rng) {
    EncoderParams p;
    p.layout = layout;
    p.embed_dim = embed_dim;
    p.window = window;
    p.char_embed = Matrix(256, layout.mention_dim);
    for (double& x : p.char_embed.data()) x = rng.uniform(-0.05, 0.05);
    p.ctx_weight = Matrix(layout.context_dim, embed_dim);
    const double glorot = std::sqrt(6.0 / (layout.context_dim + embed_dim));
    for (double& x : p.ctx_weight.data()) x = rng.uniform(-glorot, glorot);
    p.ctx_bias.assign(layout.context_dim, 0.0);
    p.pos_embed = Matrix(kPositionBuckets, layout.position_dim);
    for (double& x : p.pos_embed.data()) x = rng.uniform(-0.05, 0.05);
    return p;
  }
};

struct EncoderGradients {
  Matrix d_char;
  Matrix d_ctx_weight;
  std::vector<double> d_ctx_bias;
  Matrix d_pos;

  explicit EncoderGradients(const EncoderParams& p)
      : d_char(256, p.layout.mention_dim),
        d_ctx_weight(p.layout.context_dim, p.embed_dim),
        d_ctx_bias(p.layout.context_dim, 0.0),
        d_pos(kPositionBuckets, p.layout.position_dim) {}
};

namespace detail {

inline int clip_offset(int offset) {
  return std::max(-kMaxSeqLen, std::min(kMaxSeqLen, offset));
}

inline int position_bucket(int offset) { return clip_offset(offset) + kMaxSeqLen; }

// mean token vector over [lo, hi) of the mention's record
inline std::vector<double> token_mean(const Mention& m,
                                      const TokenEmbeddingTable& table, int lo,
                                      int hi) {
  std::vector<double> acc(table.dim(), 0.0);
  for (int t = lo; t < hi; ++t) {
    const double* v = table.find(m.record, t);
    if (v == nullptr) {
      throw ValidationError("mention " + std::to_string(m.id) +
                            ": no embedding for record " +
                            std::to_string(m.record) + " token " +
                            std::to_string(t));
    }
    for (int d = 0; d < table.dim(); ++d) acc[d] += v[d];
  }
  const double inv = 1.0 / static_cast<double>(hi - lo);
  for (double& x : acc) x *= inv;
  return acc;
}

// input to the context affine map: mean over the side window plus the span
inline std::vector<double> context_input(const EncoderParams& p,
                                         const Mention& m,
                                         const TokenEmbeddingTable& table,
                                         int sentence_len, bool left) {
  const int lo = left ? std::max(0, m.start - p.window) : m.start;
  const int hi = left ? m.end : std::min(sentence_len, m.end + p.window);
  return token_mean(m, table, lo, hi);
}

inline std::vector<int> side_buckets(const Mention& m, int sentence_len,
                                     bool left) {
  std::vector<int> buckets;
  if (left) {
    for (int t = 0; t < m.start; ++t) buckets.push_back(position_bucket(t - m.start));
  } else {
    for (int t = m.end; t < sentence_len; ++t) {
      buckets.push_back(position_bucket(t - (m.end - 1)));
    }
  }
  if (buckets.empty()) buckets.push_back(position_bucket(0));
  return buckets;
}

}  // namespace detail

// mean of the byte-level character embeddings of the mention surface
inline std::vector<double> encode_mention_block(const EncoderParams& p,
                                                std::string_view surface) {
  std::vector<double> acc(p.layout.mention_dim, 0.0);
  if (surface.empty()) {
    throw std::invalid_argument("encode_mention_block: empty mention surface");
  }
  for (unsigned char c : surface) {
    const auto row = p.char_embed.row(c);
    for (int d = 0; d < p.layout.mention_dim; ++d) acc[d] += row[d];
  }
  const double inv = 1.0 / static_cast<double>(surface.size());
  for (double& x : acc) x *= inv;
  return acc;
}

// tanh(W * mean + b) for each side; the window mean always includes the span
// tokens, so an empty context side degenerates to the span mean.
inline std::pair<std::vector<double>, std::vector<double>>
encode_context_blocks(const EncoderParams& p, const Mention& m,
                      const TokenEmbeddingTable& table, int sentence_len) {
  auto affine = [&](const std::vector<double>& input) {
    std::vector<double> out(p.layout.context_dim, 0.0);
    for (int i = 0; i < p.layout.context_dim; ++i) {
      double acc = p.ctx_bias[i];
      const auto w = p.ctx_weight.row(i);
      for (int d = 0; d < p.embed_dim; ++d) acc += w[d] * input[d];
      out[i] = std::tanh(acc);
    }
    return out;
  };
  return {affine(detail::context_input(p, m, table, sentence_len, true)),
          affine(detail::context_input(p, m, table, sentence_len, false))};
}

// mean of the position-bucket embeddings of each side's clipped offsets
inline std::pair<std::vector<double>, std::vector<double>>
encode_position_blocks(const EncoderParams& p, const Mention& m,
                       int sentence_len) {
  auto mean_of = [&](const std::vector<int>& buckets) {
    std::vector<double> acc(p.layout.position_dim, 0.0);
    for (int b : buckets) {
      const auto row = p.pos_embed.row(b);
      for (int d = 0; d < p.layout.position_dim; ++d) acc[d] += row[d];
    }
    const double inv = 1.0 / static_cast<double>(buckets.size());
    for (double& x : acc) x *= inv;
    return acc;
  };
  return {mean_of(detail::side_buckets(m, sentence_len, true)),
          mean_of(detail::side_buckets(m, sentence_len, false))};
}

// concatenation in the fixed order [lpos; left; mention; right; rpos]
inline std::vector<double> assemble(const RepresentationLayout& layout,
                                    std::span<const double> lpos,
                                    std::span<const double> left,
                                    std::span<const double> mention,
                                    std::span<const double> right,
                                    std::span<const double> rpos) {
  check_shapes(lpos.size(), layout.position_dim, "assemble lpos");
  check_shapes(left.size(), layout.context_dim, "assemble left");
  check_shapes(mention.size(), layout.mention_dim, "assemble mention");
  check_shapes(right.size(), layout.context_dim, "assemble right");
  check_shapes(rpos.size(), layout.position_dim, "assemble rpos");
  std::vector<double> row;
  row.reserve(layout.total());
  row.insert(row.end(), lpos.begin(), lpos.end());
  row.insert(row.end(), left.begin(), left.end());
  row.insert(row.end(), mention.begin(), mention.end());
  row.insert(row.end(), right.begin(), right.end());
  row.insert(row.end(), rpos.begin(), rpos.end());
  return row;
}

inline std::vector<double> encode_mention(const EncoderParams& p,
                                          const Corpus& corpus,
                                          const Mention& m,
                                          const TokenEmbeddingTable& table) {
  const int len = static_cast<int>(corpus.records[m.record].tokens.size());
  const auto men = encode_mention_block(p, corpus.surface(m));
  const auto [left, right] = encode_context_blocks(p, m, table, len);
  const auto [lpos, rpos] = encode_position_blocks(p, m, len);
  return assemble(p.layout, lpos, left, men, right, rpos);
}

// N x f, row i = representation of mention i
inline Matrix encode_all(const EncoderParams& p, const Corpus& corpus,
                         const TokenEmbeddingTable& table) {
  Matrix out(corpus.mentions.size(), p.layout.total());
  for (const auto& m : corpus.mentions) {
    const auto row = encode_mention(p, corpus, m, table);
    std::copy(row.begin(), row.end(), out.row(m.id).begin());
  }
  return out;
}

// Accumulates parameter gradients for one mention given the gradient of its
// representation row. Forward intermediates are recomputed; they are cheap
// and bit-identical to the forward pass.
inline void encode_backward(const EncoderParams& p, const Corpus& corpus,
                            const Mention& m, const TokenEmbeddingTable& table,
                            std::span<const double> d_row,
                            EncoderGradients& grads) {
  const auto& layout = p.layout;
  check_shapes(d_row.size(), layout.total(), "encode_backward");
  const int len = static_cast<int>(corpus.records[m.record].tokens.size());

  // mention block: mean over surface characters
  const std::string surface = corpus.surface(m);
  const auto d_men = d_row.subspan(layout.mention_offset(), layout.mention_dim);
  const double char_inv = 1.0 / static_cast<double>(surface.size());
  for (unsigned char c : surface) {
    auto row = grads.d_char.row(c);
    for (int d = 0; d < layout.mention_dim; ++d) row[d] += d_men[d] * char_inv;
  }

  // context blocks through the shared affine + tanh
  auto context_side = [&](bool left, std::span<const double> d_block) {
    const auto input = detail::context_input(p, m, table, len, left);
    for (int i = 0; i < layout.context_dim; ++i) {
      double pre = p.ctx_bias[i];
      const auto w = p.ctx_weight.row(i);
      for (int d = 0; d < p.embed_dim; ++d) pre += w[d] * input[d];
      const double t = std::tanh(pre);
      const double da = d_block[i] * (1.0 - t * t);
      grads.d_ctx_bias[i] += da;
      auto dw = grads.d_ctx_weight.row(i);
      for (int d = 0; d < p.embed_dim; ++d) dw[d] += da * input[d];
    }
  };
  context_side(true, d_row.subspan(layout.left_offset(), layout.context_dim));
  context_side(false, d_row.subspan(layout.right_offset(), layout.context_dim));

  // position blocks: mean over bucket embeddings
  auto position_side = [&](bool left, std::span<const double> d_block) {
    const auto buckets = detail::side_buckets(m, len, left);
    const double inv = 1.0 / static_cast<double>(buckets.size());
    for (int b : buckets) {
      auto row = grads.d_pos.row(b);
      for (int d = 0; d < layout.position_dim; ++d) row[d] += d_block[d] * inv;
    }
  };
  position_side(true, d_row.subspan(layout.lpos_offset(), layout.position_dim));
  position_side(false, d_row.subspan(layout.rpos_offset(), layout.position_dim));
}

// --- representation and checkpoint files -------------------------------------

inline constexpr std::uint32_t kRepresentationMagic = 0x50524654;  // "TFRP"

// header (magic, N, f) + row-major little-endian f32
inline void save_representations(const Matrix& x, const std::string& path) {
  auto os = open_output(path);
  write_u32(os, kRepresentationMagic);
  write_u32(os, static_cast<std::uint32_t>(x.rows()));
  write_u32(os, static_cast<std::uint32_t>(x.cols()));
  for (double v : x.data()) write_f32(os, static_cast<float>(v));
  if (!os) throw ValidationError("failed writing representations: " + path);
}

inline Matrix load_representations(const std::string& path) {
  auto is = open_input(path);
  if (read_u32(is, "representation magic") != kRepresentationMagic) {
    throw ValidationError("not a representation file: " + path);
  }
  const std::uint32_t n = read_u32(is, "representation row count");
  const std::uint32_t f = read_u32(is, "representation width");
  Matrix x(n, f);
  for (double& v : x.data()) {
    v = static_cast<double>(read_f32(is, "representation value"));
  }
  is.peek();
  if (!is.eof()) {
    throw ValidationError("representation file has trailing data: " + path);
  }
  if (!all_finite(x)) {
    throw ValidationError("representation file contains non-finite values: " +
                          path);
  }
  return x;
}

inline constexpr std::uint32_t kEncoderMagic = 0x4e454654;  // "TFEN"

inline void save_encoder(const EncoderParams& p, const std::string& path) {
  auto os = open_output(path);
  write_u32(os, kEncoderMagic);
  write_u32(os, static_cast<std::uint32_t>(p.layout.mention_dim));
  write_u32(os, static_cast<std::uint32_t>(p.layout.context_dim));
  write_u32(os, static_cast<std::uint32_t>(p.layout.position_dim));
  write_u32(os, static_cast<std::uint32_t>(p.embed_dim));
  write_u32(os, static_cast<std::uint32_t>(p.window));
  for (double v : p.char_embed.data()) write_f64(os, v);
  for (double v : p.ctx_weight.data()) write_f64(os, v);
  for (double v : p.ctx_bias) write_f64(os, v);
  for (double v : p.pos_embed.data()) write_f64(os, v);
  if (!os) throw ValidationError("failed writing encoder checkpoint: " + path);
}

inline EncoderParams load_encoder(const std::string& path) {
  auto is = open_input(path);
  if (read_u32(is, "encoder magic") != kEncoderMagic) {
    throw ValidationError("not an encoder checkpoint: " + path);
  }
  EncoderParams p;
  p.layout.mention_dim = static_cast<int>(read_u32(is, "encoder d"));
  p.layout.context_dim = static_cast<int>(read_u32(is, "encoder c"));
  p.layout.position_dim = static_cast<int>(read_u32(is, "encoder p"));
  p.embed_dim = static_cast<int>(read_u32(is, "encoder embed dim"));
  p.window = static_cast<int>(read_u32(is, "encoder window"));
  p.char_embed = Matrix(256, p.layout.mention_dim);
  for (double& v : p.char_embed.data()) v = read_f64(is, "encoder chars");
  p.ctx_weight = Matrix(p.layout.context_dim, p.embed_dim);
  for (double& v : p.ctx_weight.data()) v = read_f64(is, "encoder ctx weight");
  p.ctx_bias.assign(p.layout.context_dim, 0.0);
  for (double& v : p.ctx_bias) v = read_f64(is, "encoder ctx bias");
  p.pos_embed = Matrix(kPositionBuckets, p.layout.position_dim);
  for (double& v : p.pos_embed.data()) v = read_f64(is, "encoder positions");
  return p;
}

}  // namespace typeforge

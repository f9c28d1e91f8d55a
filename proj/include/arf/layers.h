// Transformer building blocks shared by the first-pass encoder, the cascaded
// encoder and the refinement decoder. Every block is pre-norm with residual
// connections.
#pragma once

#include <string>

#include "arf/autograd.h"

namespace arf {

// Per-forward settings. dropout is applied only when rng is set.
struct ForwardContext {
  double dropout = 0.0;
  Rng* rng = nullptr;
  Var maybe_dropout(Var x) const { return (rng && dropout > 0.0) ? arf::dropout(x, dropout, *rng) : x; }
};

Tensor init_normal(int rows, int cols, double stddev, Rng& rng);
// Absolute sinusoidal encodings, [length x width].
Tensor sinusoidal_positions(int length, int width);

struct Linear {
  Parameter* w = nullptr;
  Parameter* b = nullptr;
  static Linear create(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
                       bool zero_init = false);
  Var operator()(Graph& g, Var x) const { return linear(x, g.param(*w), g.param(*b)); }
};

struct LayerNorm {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;
  static LayerNorm create(ParamStore& store, const std::string& name, int width);
  Var operator()(Graph& g, Var x) const { return layer_norm(x, g.param(*gain), g.param(*bias)); }
};

struct MultiHeadAttention {
  Linear wq, wk, wv, wo;
  int heads = 1;
  static MultiHeadAttention create(ParamStore& store, const std::string& name, int width, int heads,
                                   Rng& rng);
  // right_context < 0: full context; otherwise key s is visible to query t
  // iff s <= t + right_context.
  Var operator()(Graph& g, Var query, Var memory, int right_context) const;
};

struct FeedForward {
  Linear in, out;
  static FeedForward create(ParamStore& store, const std::string& name, int width, int hidden, Rng& rng);
  Var operator()(Graph& g, Var x) const { return out(g, gelu(in(g, x))); }
};

// Self-attention + feed-forward, used for both encoders.
struct EncoderLayer {
  LayerNorm norm_attn, norm_ff;
  MultiHeadAttention attn;
  FeedForward ff;
  static EncoderLayer create(ParamStore& store, const std::string& name, int width, int heads,
                             int hidden, Rng& rng);
  Var operator()(Graph& g, Var x, int right_context, const ForwardContext& ctx) const;
};

}  // namespace arf

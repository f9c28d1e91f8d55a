#include "arf/layers.h"

#include <cmath>

namespace arf {

Tensor init_normal(int rows, int cols, double stddev, Rng& rng) {
  Tensor t({rows, cols});
  for (double& v : t.values()) v = stddev * rng.normal();
  return t;
}

Tensor sinusoidal_positions(int length, int width) {
  Tensor pe({length, width});
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < width; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / width);
      pe.at(pos, i) = std::sin(pos * freq);
      if (i + 1 < width) pe.at(pos, i + 1) = std::cos(pos * freq);
    }
  }
  return pe;
}

Linear Linear::create(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
                      bool zero_init) {
  Linear l;
  Rng local = rng.split(name);
  const double stddev = zero_init ? 0.0 : 1.0 / std::sqrt(static_cast<double>(in));
  l.w = &store.create(name + ".w", init_normal(in, out, stddev, local));
  l.b = &store.create(name + ".b", Tensor({1, out}, 0.0));
  return l;
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, int width) {
  LayerNorm n;
  n.gain = &store.create(name + ".gain", Tensor({1, width}, 1.0));
  n.bias = &store.create(name + ".bias", Tensor({1, width}, 0.0));
  return n;
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& store, const std::string& name, int width,
                                              int heads, Rng& rng) {
  ARF_CHECK(width % heads == 0, name << ": width " << width << " not divisible by " << heads << " heads");
  MultiHeadAttention m;
  m.wq = Linear::create(store, name + ".wq", width, width, rng);
  m.wk = Linear::create(store, name + ".wk", width, width, rng);
  m.wv = Linear::create(store, name + ".wv", width, width, rng);
  m.wo = Linear::create(store, name + ".wo", width, width, rng);
  m.heads = heads;
  return m;
}

Var MultiHeadAttention::operator()(Graph& g, Var query, Var memory, int right_context) const {
  Var q = wq(g, query);
  Var k = wk(g, memory);
  Var v = wv(g, memory);
  return wo(g, attention(q, k, v, heads, right_context));
}

FeedForward FeedForward::create(ParamStore& store, const std::string& name, int width, int hidden,
                                Rng& rng) {
  FeedForward f;
  f.in = Linear::create(store, name + ".in", width, hidden, rng);
  f.out = Linear::create(store, name + ".out", hidden, width, rng);
  return f;
}

EncoderLayer EncoderLayer::create(ParamStore& store, const std::string& name, int width, int heads,
                                  int hidden, Rng& rng) {
  EncoderLayer l;
  l.norm_attn = LayerNorm::create(store, name + ".norm_attn", width);
  l.attn = MultiHeadAttention::create(store, name + ".selfattn", width, heads, rng);
  l.norm_ff = LayerNorm::create(store, name + ".norm_ff", width);
  l.ff = FeedForward::create(store, name + ".ff", width, hidden, rng);
  return l;
}

Var EncoderLayer::operator()(Graph& g, Var x, int right_context, const ForwardContext& ctx) const {
  Var h = norm_attn(g, x);
  x = add(x, ctx.maybe_dropout(attn(g, h, h, right_context)));
  x = add(x, ctx.maybe_dropout(ff(g, norm_ff(g, x))));
  return x;
}

}  // namespace arf

// Tape-based reverse-mode differentiation over rank-2 tensors.
//
// A Graph records every operation of one forward pass. Var is a cheap handle
// into it. Parameters enter through Graph::param() and receive their
// gradients from Graph::backward(), which overwrites Parameter::grad.
//
// A Graph built with record_gradients=false stores values only; it is the
// inference path and shares every forward kernel with training.
#pragma once

#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "arf/rng.h"
#include "arf/tensor.h"

namespace arf {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Name-ordered parameter collection; iteration order is the update order.
class ParamStore {
 public:
  Parameter& create(const std::string& name, Tensor init);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::size_t size() const { return params_.size(); }
  std::size_t num_values() const;

  // All parameters whose name starts with prefix, in name order.
  std::vector<Parameter*> with_prefix(const std::string& prefix);
  std::vector<const Parameter*> with_prefix(const std::string& prefix) const;
  std::vector<Parameter*> all() { return with_prefix(""); }
  std::vector<const Parameter*> all() const { return with_prefix(""); }

 private:
  std::map<std::string, Parameter> params_;
};

class Graph;

class Var {
 public:
  Var() = default;
  Var(Graph* g, int id) : graph_(g), id_(id) {}
  Graph& graph() const { return *graph_; }
  int id() const { return id_; }
  const Tensor& value() const;
  int rows() const { return value().rows(); }
  int cols() const { return value().cols(); }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  // Receives the gradient of the node's output; accumulates into parents.
  using BackwardFn = std::function<void(Graph&, const Tensor&)>;

  explicit Graph(bool record_gradients = true) : recording_(record_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor t);
  // The same Parameter always maps to the same node within one graph.
  Var param(Parameter& p);

  // Reverse pass from a 1x1 loss. Every Parameter in params gets
  // d loss / d value (zeros if it did not participate).
  void backward(Var loss, std::span<Parameter* const> params);

  bool recording() const { return recording_; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  const Tensor& value(int id) const { return nodes_[id].value; }
  std::size_t num_nodes() const { return nodes_.size(); }

  // Op plumbing.
  Var push(Tensor value, bool requires_grad, BackwardFn fn);
  void accumulate(Var v, const Tensor& g);
  // Mutable gradient buffer of v, zero-allocated on first use.
  Tensor& grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
  };
  bool recording_;
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

// Element-wise / broadcasting arithmetic. add() accepts b of shape [1 x n]
// and broadcasts it over the rows of a.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);

Var matmul(Var a, Var b);
Var transpose(Var a);
// x W + b
Var linear(Var x, Var w, Var b);

Var softmax_rows(Var x);
Var log_softmax_rows(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var gelu(Var x);
Var tanh(Var x);

// Rows of table selected by ids.
Var embedding(Var table, std::span<const int> ids);
// Inverted dropout. Identity when rate == 0.
Var dropout(Var x, double rate, Rng& rng);

Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var x, int start, int count);

Var sum(Var x);
Var mean(Var x);

// out[t * U + u] = a[t] + b[u] for a: [T x J], b: [U x J].
Var pair_add(Var a, Var b);

// Multi-head scaled dot-product attention. Query row t may attend to key s
// iff s <= t + right_context; right_context < 0 means unrestricted.
Var attention(Var q, Var k, Var v, int heads, int right_context);

}  // namespace arf

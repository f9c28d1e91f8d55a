#include "arf/autograd.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "eigen_maps.h"

namespace arf {

using detail::cmap;
using detail::mmap;
using detail::RowMat;

// ---------------------------------------------------------------- ParamStore

Parameter& ParamStore::create(const std::string& name, Tensor init) {
  ARF_CHECK(!name.empty(), "parameter name must be nonempty");
  ARF_CHECK(params_.count(name) == 0, "duplicate parameter name " << name);
  Parameter p;
  p.name = name;
  p.grad = Tensor(init.shape(), 0.0);
  p.value = std::move(init);
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  ARF_CHECK(it != params_.end(), "unknown parameter " << name);
  return it->second;
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  ARF_CHECK(it != params_.end(), "unknown parameter " << name);
  return it->second;
}

std::size_t ParamStore::num_values() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

std::vector<Parameter*> ParamStore::with_prefix(const std::string& prefix) {
  std::vector<Parameter*> out;
  for (auto& [name, p] : params_) {
    if (name.compare(0, prefix.size(), prefix) == 0) out.push_back(&p);
  }
  return out;
}

std::vector<const Parameter*> ParamStore::with_prefix(const std::string& prefix) const {
  std::vector<const Parameter*> out;
  for (const auto& [name, p] : params_) {
    if (name.compare(0, prefix.size(), prefix) == 0) out.push_back(&p);
  }
  return out;
}

// --------------------------------------------------------------------- Graph

const Tensor& Var::value() const {
  ARF_CHECK(graph_ != nullptr, "value() on an empty Var");
  return graph_->value(id_);
}

Var Graph::push(Tensor value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = recording_ && requires_grad;
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::constant(Tensor t) { return push(std::move(t), false, nullptr); }

Var Graph::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var(this, it->second);
  Var v = push(p.value, true, nullptr);
  param_nodes_.emplace(&p, v.id());
  return v;
}

Tensor& Graph::grad_buffer(Var v) {
  Node& n = nodes_[v.id()];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Graph::accumulate(Var v, const Tensor& g) {
  if (!nodes_[v.id()].requires_grad) return;
  Tensor& buf = grad_buffer(v);
  ARF_CHECK(buf.size() == g.size(), "gradient size mismatch");
  double* dst = buf.data();
  const double* src = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

void Graph::backward(Var loss, std::span<Parameter* const> params) {
  ARF_CHECK(loss.value().size() == 1, "backward() needs a scalar loss, got "
                                          << loss.value().size() << " values");
  ARF_CHECK(recording_, "backward() on a graph built without gradients");
  for (Node& n : nodes_) n.grad = Tensor();
  if (nodes_[loss.id()].requires_grad) grad_buffer(loss).fill(1.0);
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
  }
  for (Parameter* p : params) {
    auto it = param_nodes_.find(p);
    if (it == param_nodes_.end() || nodes_[it->second].grad.empty()) {
      p->grad = Tensor(p->value.shape(), 0.0);
    } else {
      p->grad = nodes_[it->second].grad;
    }
  }
}

// ----------------------------------------------------------------------- ops

namespace {

bool needs(Var a) { return a.graph().recording() && a.graph().requires_grad(a); }
bool needs(Var a, Var b) { return needs(a) || needs(b); }

void check_same_graph(Var a, Var b) {
  ARF_CHECK(&a.graph() == &b.graph(), "operands belong to different graphs");
}

}  // namespace

Var add(Var a, Var b) {
  check_same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool broadcast = !same_shape(av, bv);
  if (broadcast) {
    ARF_CHECK(bv.rows() == 1 && bv.cols() == av.cols(),
              "add: cannot broadcast [" << bv.rows() << "x" << bv.cols() << "] onto ["
                                        << av.rows() << "x" << av.cols() << "]");
  }
  Tensor out = av;
  if (broadcast) {
    mmap(out).rowwise() += cmap(bv).row(0);
  } else {
    mmap(out) += cmap(bv);
  }
  return a.graph().push(std::move(out), needs(a, b), [a, b, broadcast](Graph& g, const Tensor& gout) {
    g.accumulate(a, gout);
    if (!g.requires_grad(b)) return;
    if (broadcast) {
      Tensor& gb = g.grad_buffer(b);
      mmap(gb).row(0) += cmap(gout).colwise().sum();
    } else {
      g.accumulate(b, gout);
    }
  });
}

Var sub(Var a, Var b) {
  check_same_graph(a, b);
  ARF_CHECK(same_shape(a.value(), b.value()), "sub: shape mismatch");
  Tensor out = a.value();
  mmap(out) -= cmap(b.value());
  return a.graph().push(std::move(out), needs(a, b), [a, b](Graph& g, const Tensor& gout) {
    g.accumulate(a, gout);
    if (g.requires_grad(b)) mmap(g.grad_buffer(b)) -= cmap(gout);
  });
}

Var mul(Var a, Var b) {
  check_same_graph(a, b);
  ARF_CHECK(same_shape(a.value(), b.value()), "mul: shape mismatch");
  Tensor out = a.value();
  mmap(out).array() *= cmap(b.value()).array();
  return a.graph().push(std::move(out), needs(a, b), [a, b](Graph& g, const Tensor& gout) {
    if (g.requires_grad(a)) mmap(g.grad_buffer(a)).array() += cmap(gout).array() * cmap(b.value()).array();
    if (g.requires_grad(b)) mmap(g.grad_buffer(b)).array() += cmap(gout).array() * cmap(a.value()).array();
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  mmap(out) *= s;
  return a.graph().push(std::move(out), needs(a), [a, s](Graph& g, const Tensor& gout) {
    mmap(g.grad_buffer(a)) += s * cmap(gout);
  });
}

Var matmul(Var a, Var b) {
  check_same_graph(a, b);
  Tensor out = kernels::matmul(a.value(), b.value());
  return a.graph().push(std::move(out), needs(a, b), [a, b](Graph& g, const Tensor& gout) {
    if (g.requires_grad(a)) mmap(g.grad_buffer(a)).noalias() += cmap(gout) * cmap(b.value()).transpose();
    if (g.requires_grad(b)) mmap(g.grad_buffer(b)).noalias() += cmap(a.value()).transpose() * cmap(gout);
  });
}

Var transpose(Var a) {
  Tensor out = kernels::transpose(a.value());
  return a.graph().push(std::move(out), needs(a), [a](Graph& g, const Tensor& gout) {
    mmap(g.grad_buffer(a)) += cmap(gout).transpose();
  });
}

Var linear(Var x, Var w, Var b) { return add(matmul(x, w), b); }

Var softmax_rows(Var x) {
  Tensor out = kernels::softmax_rows(x.value());
  Graph& graph = x.graph();
  if (!needs(x)) return graph.push(std::move(out), false, nullptr);
  Tensor y = out;
  return graph.push(std::move(out), true, [x, y = std::move(y)](Graph& g, const Tensor& gout) {
    Tensor& gx = g.grad_buffer(x);
    for (int r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      auto gr = gout.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < yr.size(); ++c) dot += gr[c] * yr[c];
      auto xr = gx.row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) xr[c] += yr[c] * (gr[c] - dot);
    }
  });
}

Var log_softmax_rows(Var x) {
  Tensor out = kernels::log_softmax_rows(x.value());
  const bool rg = needs(x);
  Graph& graph = x.graph();
  if (!rg) return graph.push(std::move(out), false, nullptr);
  Tensor probs = out;
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = std::exp(probs[i]);
  return graph.push(std::move(out), true, [x, probs = std::move(probs)](Graph& g, const Tensor& gout) {
    Tensor& gx = g.grad_buffer(x);
    for (int r = 0; r < probs.rows(); ++r) {
      auto pr = probs.row(r);
      auto gr = gout.row(r);
      double total = 0.0;
      for (double v : gr) total += v;
      auto xr = gx.row(r);
      for (std::size_t c = 0; c < pr.size(); ++c) xr[c] += gr[c] - pr[c] * total;
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = x.value();
  const int rows = xv.rows();
  const int cols = xv.cols();
  ARF_CHECK(gain.value().size() == static_cast<std::size_t>(cols) &&
                bias.value().size() == static_cast<std::size_t>(cols),
            "layer_norm: gain/bias width must equal " << cols);
  Tensor xhat({rows, cols});
  std::vector<double> inv_std(rows);
  for (int r = 0; r < rows; ++r) {
    auto in = xv.row(r);
    double mu = 0.0;
    for (double v : in) mu += v;
    mu /= cols;
    double var = 0.0;
    for (double v : in) var += (v - mu) * (v - mu);
    var /= cols;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    auto out = xhat.row(r);
    for (int c = 0; c < cols; ++c) out[c] = (in[c] - mu) * inv_std[r];
  }
  Tensor out = xhat;
  {
    auto o = mmap(out);
    o.array().rowwise() *= cmap(gain.value()).row(0).array();
    o.rowwise() += cmap(bias.value()).row(0);
  }
  Graph& graph = x.graph();
  const bool rg = needs(x) || needs(gain) || needs(bias);
  if (!rg) return graph.push(std::move(out), false, nullptr);
  return graph.push(std::move(out), true,
                    [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                        Graph& g, const Tensor& gout) {
                      const int rows = xhat.rows();
                      const int cols = xhat.cols();
                      if (g.requires_grad(gain)) {
                        mmap(g.grad_buffer(gain)).row(0) +=
                            (cmap(gout).array() * cmap(xhat).array()).colwise().sum().matrix();
                      }
                      if (g.requires_grad(bias)) mmap(g.grad_buffer(bias)).row(0) += cmap(gout).colwise().sum();
                      if (!g.requires_grad(x)) return;
                      const auto gv = gain.value().values();
                      Tensor& gx = g.grad_buffer(x);
                      std::vector<double> gh(cols);
                      for (int r = 0; r < rows; ++r) {
                        auto go = gout.row(r);
                        auto xh = xhat.row(r);
                        double mean_gh = 0.0;
                        double mean_ghx = 0.0;
                        for (int c = 0; c < cols; ++c) {
                          gh[c] = go[c] * gv[c];
                          mean_gh += gh[c];
                          mean_ghx += gh[c] * xh[c];
                        }
                        mean_gh /= cols;
                        mean_ghx /= cols;
                        auto dst = gx.row(r);
                        for (int c = 0; c < cols; ++c) {
                          dst[c] += inv_std[r] * (gh[c] - mean_gh - xh[c] * mean_ghx);
                        }
                      }
                    });
}

Var gelu(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = kernels::gelu(v);
  return x.graph().push(std::move(out), needs(x), [x](Graph& g, const Tensor& gout) {
    const Tensor& xv = x.value();
    Tensor& gx = g.grad_buffer(x);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += gout[i] * kernels::gelu_grad(xv[i]);
  });
}

Var tanh(Var x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = std::tanh(v);
  Graph& graph = x.graph();
  if (!needs(x)) return graph.push(std::move(out), false, nullptr);
  Tensor y = out;
  return graph.push(std::move(out), true, [x, y = std::move(y)](Graph& g, const Tensor& gout) {
    Tensor& gx = g.grad_buffer(x);
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] += gout[i] * (1.0 - y[i] * y[i]);
  });
}

Var embedding(Var table, std::span<const int> ids) {
  const Tensor& tv = table.value();
  ARF_CHECK(!ids.empty(), "embedding of empty id list");
  const int width = tv.cols();
  Tensor out({static_cast<int>(ids.size()), width});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ARF_CHECK(ids[i] >= 0 && ids[i] < tv.rows(),
              "embedding id " << ids[i] << " outside table of " << tv.rows() << " rows");
    auto src = tv.row(ids[i]);
    std::copy(src.begin(), src.end(), out.row(static_cast<int>(i)).begin());
  }
  std::vector<int> id_copy(ids.begin(), ids.end());
  return table.graph().push(std::move(out), needs(table),
                            [table, id_copy = std::move(id_copy)](Graph& g, const Tensor& gout) {
                              Tensor& gt = g.grad_buffer(table);
                              for (std::size_t i = 0; i < id_copy.size(); ++i) {
                                auto src = gout.row(static_cast<int>(i));
                                auto dst = gt.row(id_copy[i]);
                                for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                              }
                            });
}

Var dropout(Var x, double rate, Rng& rng) {
  ARF_CHECK(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0, 1), got " << rate);
  if (rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor mask(x.value().shape());
  for (double& m : mask.values()) m = rng.uniform() < rate ? 0.0 : keep_scale;
  Tensor out = x.value();
  mmap(out).array() *= cmap(mask).array();
  return x.graph().push(std::move(out), needs(x), [x, mask = std::move(mask)](Graph& g, const Tensor& gout) {
    mmap(g.grad_buffer(x)).array() += cmap(gout).array() * cmap(mask).array();
  });
}

Var concat_rows(std::span<const Var> parts) {
  ARF_CHECK(!parts.empty(), "concat_rows of nothing");
  const int cols = parts[0].cols();
  int rows = 0;
  bool rg = false;
  for (const Var& p : parts) {
    ARF_CHECK(p.cols() == cols, "concat_rows: column mismatch " << p.cols() << " vs " << cols);
    check_same_graph(parts[0], p);
    rows += p.rows();
    rg = rg || needs(p);
  }
  Tensor out({rows, cols});
  int at = 0;
  for (const Var& p : parts) {
    mmap(out).middleRows(at, p.rows()) = cmap(p.value());
    at += p.rows();
  }
  std::vector<Var> copy(parts.begin(), parts.end());
  return parts[0].graph().push(std::move(out), rg, [copy = std::move(copy)](Graph& g, const Tensor& gout) {
    int at = 0;
    for (const Var& p : copy) {
      const int n = p.rows();
      if (g.requires_grad(p)) mmap(g.grad_buffer(p)) += cmap(gout).middleRows(at, n);
      at += n;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  ARF_CHECK(!parts.empty(), "concat_cols of nothing");
  const int rows = parts[0].rows();
  int cols = 0;
  bool rg = false;
  for (const Var& p : parts) {
    ARF_CHECK(p.rows() == rows, "concat_cols: row mismatch " << p.rows() << " vs " << rows);
    check_same_graph(parts[0], p);
    cols += p.cols();
    rg = rg || needs(p);
  }
  Tensor out({rows, cols});
  int at = 0;
  for (const Var& p : parts) {
    mmap(out).middleCols(at, p.cols()) = cmap(p.value());
    at += p.cols();
  }
  std::vector<Var> copy(parts.begin(), parts.end());
  return parts[0].graph().push(std::move(out), rg, [copy = std::move(copy)](Graph& g, const Tensor& gout) {
    int at = 0;
    for (const Var& p : copy) {
      const int n = p.cols();
      if (g.requires_grad(p)) mmap(g.grad_buffer(p)) += cmap(gout).middleCols(at, n);
      at += n;
    }
  });
}

Var slice_rows(Var x, int start, int count) {
  ARF_CHECK(start >= 0 && count > 0 && start + count <= x.rows(),
            "slice_rows [" << start << ", " << start + count << ") of " << x.rows() << " rows");
  Tensor out({count, x.cols()});
  mmap(out) = cmap(x.value()).middleRows(start, count);
  return x.graph().push(std::move(out), needs(x), [x, start, count](Graph& g, const Tensor& gout) {
    mmap(g.grad_buffer(x)).middleRows(start, count) += cmap(gout);
  });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  return x.graph().push(Tensor::scalar(total), needs(x), [x](Graph& g, const Tensor& gout) {
    const double s = gout[0];
    for (double& v : g.grad_buffer(x).values()) v += s;
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var pair_add(Var a, Var b) {
  check_same_graph(a, b);
  const int t_len = a.rows();
  const int u_len = b.rows();
  const int width = a.cols();
  ARF_CHECK(b.cols() == width, "pair_add: width mismatch " << b.cols() << " vs " << width);
  Tensor out({t_len * u_len, width});
  auto o = mmap(out);
  auto am = cmap(a.value());
  auto bm = cmap(b.value());
  for (int t = 0; t < t_len; ++t) {
    o.middleRows(t * u_len, u_len) = bm;
    o.middleRows(t * u_len, u_len).rowwise() += am.row(t);
  }
  return a.graph().push(std::move(out), needs(a, b), [a, b, t_len, u_len](Graph& g, const Tensor& gout) {
    auto go = cmap(gout);
    if (g.requires_grad(a)) {
      auto ga = mmap(g.grad_buffer(a));
      for (int t = 0; t < t_len; ++t) ga.row(t) += go.middleRows(t * u_len, u_len).colwise().sum();
    }
    if (g.requires_grad(b)) {
      auto gb = mmap(g.grad_buffer(b));
      for (int t = 0; t < t_len; ++t) gb += go.middleRows(t * u_len, u_len);
    }
  });
}

Var attention(Var q, Var k, Var v, int heads, int right_context) {
  check_same_graph(q, k);
  check_same_graph(q, v);
  const int t_len = q.rows();
  const int s_len = k.rows();
  const int width = q.cols();
  ARF_CHECK(heads > 0 && width % heads == 0, "attention: width " << width << " not divisible by " << heads);
  ARF_CHECK(k.cols() == width && v.cols() == width && v.rows() == s_len, "attention: q/k/v shapes disagree");
  const int dh = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const double neg_inf = -std::numeric_limits<double>::infinity();

  auto qm = cmap(q.value());
  auto km = cmap(k.value());
  auto vm = cmap(v.value());
  Tensor out({t_len, width});
  auto om = mmap(out);
  std::vector<RowMat> probs(heads);
  for (int h = 0; h < heads; ++h) {
    RowMat scores = (qm.middleCols(h * dh, dh) * km.middleCols(h * dh, dh).transpose()) * inv_sqrt;
    for (int t = 0; t < t_len; ++t) {
      const int last = right_context < 0 ? s_len - 1 : std::min(s_len - 1, t + right_context);
      for (int s = last + 1; s < s_len; ++s) scores(t, s) = neg_inf;
      const double mx = scores.row(t).head(last + 1).maxCoeff();
      double total = 0.0;
      for (int s = 0; s <= last; ++s) {
        scores(t, s) = std::exp(scores(t, s) - mx);
        total += scores(t, s);
      }
      for (int s = 0; s <= last; ++s) scores(t, s) /= total;
      for (int s = last + 1; s < s_len; ++s) scores(t, s) = 0.0;
    }
    om.middleCols(h * dh, dh).noalias() = scores * vm.middleCols(h * dh, dh);
    probs[h] = std::move(scores);
  }
  const bool rg = needs(q) || needs(k) || needs(v);
  if (!rg) return q.graph().push(std::move(out), false, nullptr);
  return q.graph().push(
      std::move(out), true,
      [q, k, v, heads, dh, inv_sqrt, probs = std::move(probs)](Graph& g, const Tensor& gout) {
        auto go = cmap(gout);
        auto qm = cmap(q.value());
        auto km = cmap(k.value());
        auto vm = cmap(v.value());
        const bool gq = g.requires_grad(q);
        const bool gk = g.requires_grad(k);
        const bool gv = g.requires_grad(v);
        for (int h = 0; h < heads; ++h) {
          const RowMat& p = probs[h];
          auto goh = go.middleCols(h * dh, dh);
          if (gv) mmap(g.grad_buffer(v)).middleCols(h * dh, dh).noalias() += p.transpose() * goh;
          if (!gq && !gk) continue;
          RowMat dp = goh * vm.middleCols(h * dh, dh).transpose();
          Eigen::VectorXd rowdot = (dp.array() * p.array()).rowwise().sum();
          RowMat ds = p.array() * (dp.colwise() - rowdot).array();
          ds *= inv_sqrt;
          if (gq) mmap(g.grad_buffer(q)).middleCols(h * dh, dh).noalias() += ds * km.middleCols(h * dh, dh);
          if (gk) mmap(g.grad_buffer(k)).middleCols(h * dh, dh).noalias() += ds.transpose() * qm.middleCols(h * dh, dh);
        }
      });
}

}  // namespace arf

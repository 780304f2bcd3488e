#include "polyrad/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "polyrad/errors.hpp"

namespace polyrad::ad {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != numel(shape_)) {
    throw DimensionError("tensor data size " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

const Tensor& Var::value() const { return graph_->node(id_).value; }
const Tensor& Var::grad() const { return graph_->node(id_).grad; }

// ---- graph ----------------------------------------------------------------

Var Graph::constant(Tensor value) {
  auto n = std::make_unique<Node>();
  n->grad = Tensor(value.shape());
  n->value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::leaf(Tensor value) {
  Var v = constant(std::move(value));
  nodes_.back()->requires_grad = true;
  return v;
}

Var Graph::param(Parameter& p) {
  Var v = leaf(p.value);
  nodes_.back()->param = &p;
  return v;
}

Var Graph::param(const Parameter& p) { return constant(p.value); }

Var Graph::record(Tensor value, std::vector<std::size_t> parents,
                  std::function<void(Graph&, Node&)> backward) {
  auto n = std::make_unique<Node>();
  n->grad = Tensor(value.shape());
  n->value = std::move(value);
  for (std::size_t p : parents) {
    if (p >= nodes_.size()) throw UsageError("op references a node from the future");
    n->requires_grad = n->requires_grad || nodes_[p]->requires_grad;
  }
  n->parents = std::move(parents);
  if (n->requires_grad) n->backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Graph::note_signs(std::span<const double> x) {
  if (!track_kinks_) return;
  for (double v : x) signs_.push_back(static_cast<std::int8_t>((v > 0.0) - (v < 0.0)));
}

void Graph::backward(Var loss) {
  if (&loss.graph() != this) throw UsageError("loss belongs to a different graph");
  if (loss.size() != 1) {
    throw UsageError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  for (auto& n : nodes_) n->grad.fill(0.0);
  nodes_[loss.id()]->grad[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = *nodes_[i];
    if (!n.requires_grad) continue;
    if (n.backward) n.backward(*this, n);
    if (n.param != nullptr) {
      auto dst = n.param->grad.data();
      auto src = n.grad.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

// ---- ops ------------------------------------------------------------------

namespace {

Graph& same_graph(Var a, Var b) {
  if (&a.graph() != &b.graph()) throw UsageError("operands belong to different graphs");
  return a.graph();
}

// Shape rule for binary elementwise ops: exact match, or one side has a
// single element. Returns the result shape.
Shape binary_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.size() == 1) return a.shape();
  if (a.size() == 1) return b.shape();
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                       " and " + shape_str(b.shape()));
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
  }
}

// Accumulates g into dst; reduces to a single element when dst is a
// broadcast scalar operand.
void accumulate(Tensor& dst, std::span<const double> g, std::span<const double> factor = {}) {
  auto d = dst.data();
  if (d.size() == g.size()) {
    if (factor.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    } else if (factor.size() == 1) {
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * factor[0];
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * factor[i];
    }
    return;
  }
  double s = 0.0;
  if (factor.empty()) {
    for (double v : g) s += v;
  } else if (factor.size() == 1) {
    for (double v : g) s += v * factor[0];
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * factor[i];
  }
  d[0] += s;
}

double elem(const Tensor& t, std::size_t i) { return t.size() == 1 ? t[0] : t[i]; }

}  // namespace

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(binary_shape(av, bv, "add"));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = elem(av, i) + elem(bv, i);
  return g.record(std::move(out), {a.id(), b.id()}, [](Graph& g, Node& n) {
    accumulate(g.node(n.parents[0]).grad, n.grad.data());
    accumulate(g.node(n.parents[1]).grad, n.grad.data());
  });
}

Var sub(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(binary_shape(av, bv, "sub"));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = elem(av, i) - elem(bv, i);
  return g.record(std::move(out), {a.id(), b.id()}, [](Graph& g, Node& n) {
    static const std::vector<double> minus_one{-1.0};
    accumulate(g.node(n.parents[0]).grad, n.grad.data());
    accumulate(g.node(n.parents[1]).grad, n.grad.data(), minus_one);
  });
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(binary_shape(av, bv, "mul"));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = elem(av, i) * elem(bv, i);
  return g.record(std::move(out), {a.id(), b.id()}, [](Graph& g, Node& n) {
    Node& pa = g.node(n.parents[0]);
    Node& pb = g.node(n.parents[1]);
    // d(a*b)/da = b, broadcast where b is a scalar.
    if (pa.requires_grad) accumulate(pa.grad, n.grad.data(), pb.value.data());
    if (pb.requires_grad) accumulate(pb.grad, n.grad.data(), pa.value.data());
  });
}

Var scalar_mul(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  return a.graph().record(std::move(out), {a.id()}, [s](Graph& g, Node& n) {
    auto dst = g.node(n.parents[0]).grad.data();
    auto src = n.grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
  });
}

Var add_scalar(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v += s;
  return a.graph().record(std::move(out), {a.id()}, [](Graph& g, Node& n) {
    accumulate(g.node(n.parents[0]).grad, n.grad.data());
  });
}

Var power(Var a, int exponent) {
  if (exponent < 0) throw UsageError("power: exponent must be >= 0");
  Tensor out = a.value();
  for (double& v : out.data()) {
    double r = 1.0;
    for (int k = 0; k < exponent; ++k) r *= v;
    v = r;
  }
  return a.graph().record(std::move(out), {a.id()}, [exponent](Graph& g, Node& n) {
    Node& p = g.node(n.parents[0]);
    auto dst = p.grad.data();
    auto x = p.value.data();
    auto src = n.grad.data();
    if (exponent == 0) return;
    for (std::size_t i = 0; i < dst.size(); ++i) {
      double r = 1.0;
      for (int k = 0; k < exponent - 1; ++k) r *= x[i];
      dst[i] += src[i] * exponent * r;
    }
  });
}

Var relu(Var a) {
  a.graph().note_signs(a.value().data());
  Tensor out = a.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return a.graph().record(std::move(out), {a.id()}, [](Graph& g, Node& n) {
    Node& p = g.node(n.parents[0]);
    auto dst = p.grad.data();
    auto x = p.value.data();
    auto src = n.grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (x[i] > 0.0) dst[i] += src[i];
    }
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph().record(Tensor::scalar(s), {a.id()}, [](Graph& g, Node& n) {
    auto dst = g.node(n.parents[0]).grad.data();
    for (double& d : dst) d += n.grad[0];
  });
}

Var mean(Var a) {
  if (a.size() == 0) throw DimensionError("mean of an empty tensor");
  const double inv = 1.0 / static_cast<double>(a.size());
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph().record(Tensor::scalar(s * inv), {a.id()}, [inv](Graph& g, Node& n) {
    auto dst = g.node(n.parents[0]).grad.data();
    for (double& d : dst) d += n.grad[0] * inv;
  });
}

Var abs_sum(Var a) {
  a.graph().note_signs(a.value().data());
  double s = 0.0;
  for (double v : a.value().data()) s += std::abs(v);
  return a.graph().record(Tensor::scalar(s), {a.id()}, [](Graph& g, Node& n) {
    Node& p = g.node(n.parents[0]);
    auto dst = p.grad.data();
    auto x = p.value.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (x[i] > 0.0) {
        dst[i] += n.grad[0];
      } else if (x[i] < 0.0) {
        dst[i] -= n.grad[0];
      }
    }
  });
}

Var square_sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v * v;
  return a.graph().record(Tensor::scalar(s), {a.id()}, [](Graph& g, Node& n) {
    Node& p = g.node(n.parents[0]);
    auto dst = p.grad.data();
    auto x = p.value.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += 2.0 * x[i] * n.grad[0];
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Tensor out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return out;
}

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  Tensor out = matmul(a.value(), b.value());
  return g.record(std::move(out), {a.id(), b.id()}, [](Graph& g, Node& n) {
    Node& na = g.node(n.parents[0]);
    Node& nb = g.node(n.parents[1]);
    const std::size_t m = na.value.dim(0), k = na.value.dim(1), cols = nb.value.dim(1);
    const double* gout = n.grad.data().data();
    if (na.requires_grad) {
      // dA = dC * B^T
      const double* pb = nb.value.data().data();
      double* ga = na.grad.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = gout + i * cols;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = pb + p * cols;
          double s = 0.0;
          for (std::size_t j = 0; j < cols; ++j) s += grow[j] * brow[j];
          ga[i * k + p] += s;
        }
      }
    }
    if (nb.requires_grad) {
      // dB = A^T * dC
      const double* pa = na.value.data().data();
      double* gb = nb.grad.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = gout + i * cols;
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = pa[i * k + p];
          if (aip == 0.0) continue;
          double* brow = gb + p * cols;
          for (std::size_t j = 0; j < cols; ++j) brow[j] += aip * grow[j];
        }
      }
    }
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  require_rank2(av, "transpose");
  const std::size_t m = av.dim(0), n = av.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = av.at(i, j);
  return a.graph().record(std::move(out), {a.id()}, [m, n](Graph& g, Node& nd) {
    Tensor& ga = g.node(nd.parents[0]).grad;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga.at(i, j) += nd.grad.at(j, i);
  });
}

Var softmax_rows(Var a) {
  const Tensor& av = a.value();
  require_rank2(av, "softmax_rows");
  const std::size_t m = av.dim(0), n = av.dim(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, av.at(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp(av.at(i, j) - mx);
      out.at(i, j) = e;
      s += e;
    }
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) /= s;
  }
  return a.graph().record(std::move(out), {a.id()}, [m, n](Graph& g, Node& nd) {
    Tensor& ga = g.node(nd.parents[0]).grad;
    // dx_j = y_j (dy_j - sum_k y_k dy_k)
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += nd.value.at(i, j) * nd.grad.at(i, j);
      for (std::size_t j = 0; j < n; ++j) ga.at(i, j) += nd.value.at(i, j) * (nd.grad.at(i, j) - dot);
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.graph().record(std::move(out), {a.id()}, [](Graph& g, Node& n) {
    accumulate(g.node(n.parents[0]).grad, n.grad.data());
  });
}

Var add_rowwise(Var x, Var bias) {
  Graph& g = same_graph(x, bias);
  const Tensor& xv = x.value();
  require_rank2(xv, "add_rowwise");
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  if (bias.size() != n) {
    throw DimensionError("add_rowwise: bias of shape " + shape_str(bias.shape()) +
                         " for rows of width " + std::to_string(n));
  }
  Tensor out = xv;
  const auto b = bias.value().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) += b[j];
  return g.record(std::move(out), {x.id(), bias.id()}, [m, n](Graph& g, Node& nd) {
    accumulate(g.node(nd.parents[0]).grad, nd.grad.data());
    auto gb = g.node(nd.parents[1]).grad.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gb[j] += nd.grad.at(i, j);
  });
}

Var mean_rows(Var x) {
  const Tensor& xv = x.value();
  require_rank2(xv, "mean_rows");
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  if (m == 0) throw DimensionError("mean_rows of an empty matrix");
  const double inv = 1.0 / static_cast<double>(m);
  Tensor out({1, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += xv.at(i, j);
  for (double& v : out.data()) v *= inv;
  return x.graph().record(std::move(out), {x.id()}, [m, n, inv](Graph& g, Node& nd) {
    Tensor& gx = g.node(nd.parents[0]).grad;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx.at(i, j) += nd.grad[j] * inv;
  });
}

Var repeat_rows(Var x, std::size_t m) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.dim(0) != 1) {
    throw DimensionError("repeat_rows expects a single row, got " + shape_str(xv.shape()));
  }
  const std::size_t n = xv.dim(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = xv[j];
  return x.graph().record(std::move(out), {x.id()}, [m, n](Graph& g, Node& nd) {
    auto gx = g.node(nd.parents[0]).grad.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[j] += nd.grad.at(i, j);
  });
}

Var conv2d(Var x, Var kernels, std::size_t stride) {
  Graph& g = same_graph(x, kernels);
  const Tensor& xv = x.value();
  const Tensor& kv = kernels.value();
  if (xv.rank() != 3) throw DimensionError("conv2d: input must be HxWxC, got " + shape_str(xv.shape()));
  if (kv.rank() != 4) throw DimensionError("conv2d: kernels must be kxkxCinxCout");
  if (stride == 0) throw UsageError("conv2d: stride must be >= 1");
  const std::size_t h = xv.dim(0), w = xv.dim(1), cin = xv.dim(2);
  const std::size_t k = kv.dim(0), cout = kv.dim(3);
  if (kv.dim(1) != k || k % 2 == 0) throw DimensionError("conv2d: kernel must be square with odd size");
  if (kv.dim(2) != cin) {
    throw DimensionError("conv2d: kernel expects " + std::to_string(kv.dim(2)) +
                         " input channels, input has " + std::to_string(cin));
  }
  const std::size_t pad = (k - 1) / 2;
  if (k > h + 2 * pad || k > w + 2 * pad) throw DimensionError("conv2d: kernel larger than padded input");
  const std::size_t ho = (h + 2 * pad - k) / stride + 1;
  const std::size_t wo = (w + 2 * pad - k) / stride + 1;

  Tensor out({ho, wo, cout});
  const double* px = xv.data().data();
  const double* pk = kv.data().data();
  double* po = out.data().data();
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      double* orow = po + (oy * wo + ox) * cout;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
        if (iy < 0 || iy >= static_cast<long>(h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
          if (ix < 0 || ix >= static_cast<long>(w)) continue;
          const double* xin = px + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
          const double* kk = pk + (ky * k + kx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double xval = xin[ci];
            if (xval == 0.0) continue;
            const double* krow = kk + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) orow[co] += xval * krow[co];
          }
        }
      }
    }
  }

  return g.record(std::move(out), {x.id(), kernels.id()},
                  [=](Graph& g, Node& nd) {
                    Node& nx = g.node(nd.parents[0]);
                    Node& nk = g.node(nd.parents[1]);
                    const double* px = nx.value.data().data();
                    const double* pk = nk.value.data().data();
                    double* gx = nx.grad.data().data();
                    double* gk = nk.grad.data().data();
                    const double* go = nd.grad.data().data();
                    for (std::size_t oy = 0; oy < ho; ++oy) {
                      for (std::size_t ox = 0; ox < wo; ++ox) {
                        const double* grow = go + (oy * wo + ox) * cout;
                        for (std::size_t ky = 0; ky < k; ++ky) {
                          const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                          if (iy < 0 || iy >= static_cast<long>(h)) continue;
                          for (std::size_t kx = 0; kx < k; ++kx) {
                            const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                            if (ix < 0 || ix >= static_cast<long>(w)) continue;
                            const std::size_t xoff =
                                (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
                            const std::size_t koff = (ky * k + kx) * cin * cout;
                            for (std::size_t ci = 0; ci < cin; ++ci) {
                              const double* krow = pk + koff + ci * cout;
                              if (nx.requires_grad) {
                                double s = 0.0;
                                for (std::size_t co = 0; co < cout; ++co) s += grow[co] * krow[co];
                                gx[xoff + ci] += s;
                              }
                              if (nk.requires_grad) {
                                const double xval = px[xoff + ci];
                                if (xval == 0.0) continue;
                                double* gkrow = gk + koff + ci * cout;
                                for (std::size_t co = 0; co < cout; ++co) gkrow[co] += xval * grow[co];
                              }
                            }
                          }
                        }
                      }
                    }
                  });
}

}  // namespace polyrad::ad

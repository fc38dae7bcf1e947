#include "isqa/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "isqa/errors.hpp"

namespace isqa::ad {

namespace {

int out_extent(int in, int k, int stride, int pad) {
  int span = in + 2 * pad - k;
  if (span < 0) return 0;
  return span / stride + 1;
}

// Range of output columns whose input column ox*stride + kx - pad lies in [0, in).
void valid_range(int in, int out, int k_off, int stride, int pad, int& lo, int& hi) {
  // need 0 <= o*stride + k_off - pad <= in-1
  int shift = k_off - pad;
  lo = shift >= 0 ? 0 : (-shift + stride - 1) / stride;
  int top = in - 1 - shift;
  hi = top < 0 ? -1 : std::min(out - 1, top / stride);
}

void check_conv_shapes(const Tensor& x, const Tensor& k, const Tensor* bias) {
  if (x.rank() != 3 || k.rank() != 4) {
    throw DimensionError("conv2d expects input {C,H,W} and kernel {O,C,kh,kw}, got " + x.shape_string() +
                         " and " + k.shape_string());
  }
  if (k.dim(1) != x.dim(0)) {
    throw DimensionError("conv2d channel mismatch: input " + x.shape_string() + ", kernel " + k.shape_string());
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != k.dim(0))) {
    throw DimensionError("conv2d bias must be {" + std::to_string(k.dim(0)) + "}");
  }
}

void check_deconv_shapes(const Tensor& x, const Tensor& k, const Tensor* bias) {
  if (x.rank() != 3 || k.rank() != 4) {
    throw DimensionError("deconv2d expects input {C,H,W} and kernel {C,O,kh,kw}, got " + x.shape_string() +
                         " and " + k.shape_string());
  }
  if (k.dim(0) != x.dim(0)) {
    throw DimensionError("deconv2d channel mismatch: input " + x.shape_string() + ", kernel " + k.shape_string());
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != k.dim(1))) {
    throw DimensionError("deconv2d bias must be {" + std::to_string(k.dim(1)) + "}");
  }
}

void conv2d_backward(const Tensor& x, const Tensor& k, int stride, int pad, const Tensor& gout, Tensor* gx,
                     Tensor* gk) {
  const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const int oh = gout.dim(1), ow = gout.dim(2);
  for (int co = 0; co < cout; ++co) {
    for (int ci = 0; ci < cin; ++ci) {
      for (int ky = 0; ky < kh; ++ky) {
        int ylo, yhi;
        valid_range(h, oh, ky, stride, pad, ylo, yhi);
        for (int kx = 0; kx < kw; ++kx) {
          int xlo, xhi;
          valid_range(w, ow, kx, stride, pad, xlo, xhi);
          const std::size_t kidx = ((static_cast<std::size_t>(co) * cin + ci) * kh + ky) * kw + kx;
          const Real wv = k[kidx];
          Real acc = 0;
          for (int oy = ylo; oy <= yhi; ++oy) {
            const int iy = oy * stride + ky - pad;
            const Real* g = &gout.data()[(static_cast<std::size_t>(co) * oh + oy) * ow];
            const std::size_t in_row = (static_cast<std::size_t>(ci) * h + iy) * w;
            const int ix0 = kx - pad;
            if (gk) {
              const Real* in = &x.data()[in_row];
              for (int ox = xlo; ox <= xhi; ++ox) acc += g[ox] * in[ox * stride + ix0];
            }
            if (gx) {
              Real* gi = &gx->data()[in_row];
              for (int ox = xlo; ox <= xhi; ++ox) gi[ox * stride + ix0] += wv * g[ox];
            }
          }
          if (gk) (*gk)[kidx] += acc;
        }
      }
    }
  }
}

void deconv2d_backward(const Tensor& x, const Tensor& k, int stride, const Tensor& gout, Tensor* gx, Tensor* gk) {
  const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int cout = k.dim(1), kh = k.dim(2), kw = k.dim(3);
  const int ow = gout.dim(2), oh = gout.dim(1);
  for (int ci = 0; ci < cin; ++ci) {
    for (int co = 0; co < cout; ++co) {
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          const std::size_t kidx = ((static_cast<std::size_t>(ci) * cout + co) * kh + ky) * kw + kx;
          const Real wv = k[kidx];
          Real acc = 0;
          for (int y = 0; y < h; ++y) {
            const Real* g = &gout.data()[(static_cast<std::size_t>(co) * oh + y * stride + ky) * ow + kx];
            const std::size_t in_row = (static_cast<std::size_t>(ci) * h + y) * w;
            if (gk) {
              const Real* in = &x.data()[in_row];
              for (int xx = 0; xx < w; ++xx) acc += in[xx] * g[xx * stride];
            }
            if (gx) {
              Real* gi = &gx->data()[in_row];
              for (int xx = 0; xx < w; ++xx) gi[xx] += wv * g[xx * stride];
            }
          }
          if (gk) (*gk)[kidx] += acc;
        }
      }
    }
  }
}

void bias_backward(const Tensor& gout, Tensor& gb) {
  const int c = gout.dim(0);
  const std::size_t plane = gout.size() / c;
  for (int ch = 0; ch < c; ++ch) {
    Real acc = 0;
    const Real* g = &gout.data()[ch * plane];
    for (std::size_t i = 0; i < plane; ++i) acc += g[i];
    gb[ch] += acc;
  }
}

// Broadcast bookkeeping: for each output element, the flat index into a and b.
struct Broadcast {
  std::vector<int> out_shape;
  std::vector<std::size_t> ia, ib;
  bool identical = false;
};

Broadcast make_broadcast(const std::vector<int>& sa, const std::vector<int>& sb) {
  Broadcast bc;
  if (sa == sb) {
    bc.out_shape = sa;
    bc.identical = true;
    return bc;
  }
  const std::size_t rank = std::max(sa.size(), sb.size());
  std::vector<int> pa(rank, 1), pb(rank, 1);
  std::copy(sa.begin(), sa.end(), pa.begin() + (rank - sa.size()));
  std::copy(sb.begin(), sb.end(), pb.begin() + (rank - sb.size()));
  bc.out_shape.resize(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    if (pa[d] != pb[d] && pa[d] != 1 && pb[d] != 1) {
      throw DimensionError("shapes " + shape_to_string(sa) + " and " + shape_to_string(sb) +
                           " are not broadcast-compatible");
    }
    bc.out_shape[d] = std::max(pa[d], pb[d]);
  }
  std::vector<std::size_t> stra(rank), strb(rank);
  std::size_t s1 = 1, s2 = 1;
  for (std::size_t d = rank; d-- > 0;) {
    stra[d] = pa[d] == 1 ? 0 : s1;
    strb[d] = pb[d] == 1 ? 0 : s2;
    s1 *= pa[d];
    s2 *= pb[d];
  }
  const std::size_t n = shape_size(bc.out_shape);
  bc.ia.resize(n);
  bc.ib.resize(n);
  std::vector<int> idx(rank, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t a = 0, b = 0;
    for (std::size_t d = 0; d < rank; ++d) {
      a += idx[d] * stra[d];
      b += idx[d] * strb[d];
    }
    bc.ia[i] = a;
    bc.ib[i] = b;
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < bc.out_shape[d]) break;
      idx[d] = 0;
    }
  }
  return bc;
}

enum BinaryOp { kAdd, kSub, kMul, kDiv };

Real stable_sigmoid(Real v) {
  if (v >= 0) return 1 / (1 + std::exp(-v));
  const Real e = std::exp(v);
  return e / (1 + e);
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& k, const Tensor* bias, int stride, int pad) {
  check_conv_shapes(x, k, bias);
  if (stride < 1 || pad < 0) throw DimensionError("conv2d requires stride >= 1 and padding >= 0");
  const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const int oh = out_extent(h, kh, stride, pad), ow = out_extent(w, kw, stride, pad);
  if (oh <= 0 || ow <= 0) throw DimensionError("conv2d kernel larger than padded input");
  Tensor out({cout, oh, ow});
  for (int co = 0; co < cout; ++co) {
    Real* o = &out.data()[static_cast<std::size_t>(co) * oh * ow];
    if (bias) std::fill(o, o + static_cast<std::size_t>(oh) * ow, (*bias)[co]);
    for (int ci = 0; ci < cin; ++ci) {
      for (int ky = 0; ky < kh; ++ky) {
        int ylo, yhi;
        valid_range(h, oh, ky, stride, pad, ylo, yhi);
        for (int kx = 0; kx < kw; ++kx) {
          int xlo, xhi;
          valid_range(w, ow, kx, stride, pad, xlo, xhi);
          const Real wv = k[((static_cast<std::size_t>(co) * cin + ci) * kh + ky) * kw + kx];
          const int ix0 = kx - pad;
          for (int oy = ylo; oy <= yhi; ++oy) {
            const int iy = oy * stride + ky - pad;
            const Real* in = &x.data()[(static_cast<std::size_t>(ci) * h + iy) * w];
            Real* orow = o + static_cast<std::size_t>(oy) * ow;
            if (stride == 1) {
              const Real* src = in + ix0;
              for (int ox = xlo; ox <= xhi; ++ox) orow[ox] += wv * src[ox];
            } else {
              for (int ox = xlo; ox <= xhi; ++ox) orow[ox] += wv * in[ox * stride + ix0];
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor deconv2d_forward(const Tensor& x, const Tensor& k, const Tensor* bias, int stride) {
  check_deconv_shapes(x, k, bias);
  if (stride < 1) throw DimensionError("deconv2d requires stride >= 1");
  const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int cout = k.dim(1), kh = k.dim(2), kw = k.dim(3);
  const int oh = (h - 1) * stride + kh, ow = (w - 1) * stride + kw;
  Tensor out({cout, oh, ow});
  if (bias) {
    for (int co = 0; co < cout; ++co)
      std::fill_n(&out.data()[static_cast<std::size_t>(co) * oh * ow], static_cast<std::size_t>(oh) * ow,
                  (*bias)[co]);
  }
  for (int ci = 0; ci < cin; ++ci) {
    for (int co = 0; co < cout; ++co) {
      for (int ky = 0; ky < kh; ++ky) {
        for (int kx = 0; kx < kw; ++kx) {
          const Real wv = k[((static_cast<std::size_t>(ci) * cout + co) * kh + ky) * kw + kx];
          for (int y = 0; y < h; ++y) {
            const Real* in = &x.data()[(static_cast<std::size_t>(ci) * h + y) * w];
            Real* o = &out.data()[(static_cast<std::size_t>(co) * oh + y * stride + ky) * ow + kx];
            for (int xx = 0; xx < w; ++xx) o[xx * stride] += wv * in[xx];
          }
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- Gradients

Gradients::Gradients(const Graph& graph) : graph_(&graph), grads_(graph.node_count()) {}

Tensor& Gradients::slot(int id) {
  Tensor& g = grads_[id];
  if (g.empty() && graph_->nodes_[id].value.size() != 0) g = Tensor::zeros(graph_->nodes_[id].value.shape());
  return g;
}

const Tensor* Gradients::find(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= grads_.size()) return nullptr;
  return grads_[v.id].empty() ? nullptr : &grads_[v.id];
}

Tensor Gradients::of(Var v) const {
  graph_->check(v);
  if (const Tensor* g = find(v)) return *g;
  return Tensor::zeros(graph_->value(v).shape());
}

// ---------------------------------------------------------------- Graph core

void Graph::check(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw ContractError("variable " + std::to_string(v.id) + " is not recorded in this graph");
  }
}

const Tensor& Graph::value(Var v) const {
  check(v);
  return nodes_[v.id].value;
}

bool Graph::requires_grad(Var v) const {
  check(v);
  return nodes_[v.id].requires_grad;
}

Var Graph::input(Tensor value) {
  nodes_.push_back(Node{std::move(value), true, nullptr});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), false, nullptr});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Graph::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (Var in : inputs) {
    check(in);
    needs = needs || nodes_[in.id].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), needs, needs ? std::move(fn) : nullptr});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Gradients Graph::backward(Var root) const {
  check(root);
  if (nodes_[root.id].value.size() != 1) {
    throw ContractError("backward requires a scalar root, got shape " + nodes_[root.id].value.shape_string());
  }
  Gradients grads(*this);
  grads.slot(root.id)[0] = 1;
  for (int id = root.id; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (!n.requires_grad || !n.backward) continue;
    const Tensor* g = grads.find(Var{id});
    if (!g) continue;
    n.backward(*g, grads);
  }
  return grads;
}

// ---------------------------------------------------------------- ops

Var Graph::matmul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + A.shape_string() + " x " + B.shape_string());
  }
  const int m = A.dim(0), kk = A.dim(1), n = B.dim(1);
  Tensor out({m, n});
  for (int i = 0; i < m; ++i) {
    Real* o = &out.data()[static_cast<std::size_t>(i) * n];
    for (int p = 0; p < kk; ++p) {
      const Real av = A.at(i, p);
      const Real* brow = &B.data()[static_cast<std::size_t>(p) * n];
      for (int j = 0; j < n; ++j) o[j] += av * brow[j];
    }
  }
  return record(std::move(out), {a, b}, [this, a, b, m, kk, n](const Tensor& g, Gradients& grads) {
    const Tensor& A = nodes_[a.id].value;
    const Tensor& B = nodes_[b.id].value;
    if (nodes_[a.id].requires_grad) {
      Tensor& ga = grads.slot(a.id);
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < kk; ++p) {
          Real acc = 0;
          const Real* grow = &g.data()[static_cast<std::size_t>(i) * n];
          const Real* brow = &B.data()[static_cast<std::size_t>(p) * n];
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga.at(i, p) += acc;
        }
    }
    if (nodes_[b.id].requires_grad) {
      Tensor& gb = grads.slot(b.id);
      for (int i = 0; i < m; ++i) {
        const Real* grow = &g.data()[static_cast<std::size_t>(i) * n];
        for (int p = 0; p < kk; ++p) {
          const Real av = A.at(i, p);
          Real* gbrow = &gb.data()[static_cast<std::size_t>(p) * n];
          for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

Var Graph::conv2d(Var input, Var kernel, int stride, int padding) {
  Tensor out = conv2d_forward(value(input), value(kernel), nullptr, stride, padding);
  return record(std::move(out), {input, kernel}, [this, input, kernel, stride, padding](const Tensor& g, Gradients& grads) {
    Tensor* gx = nodes_[input.id].requires_grad ? &grads.slot(input.id) : nullptr;
    Tensor* gk = nodes_[kernel.id].requires_grad ? &grads.slot(kernel.id) : nullptr;
    conv2d_backward(nodes_[input.id].value, nodes_[kernel.id].value, stride, padding, g, gx, gk);
  });
}

Var Graph::conv2d(Var input, Var kernel, Var bias, int stride, int padding) {
  Tensor out = conv2d_forward(value(input), value(kernel), &value(bias), stride, padding);
  return record(std::move(out), {input, kernel, bias},
                [this, input, kernel, bias, stride, padding](const Tensor& g, Gradients& grads) {
                  Tensor* gx = nodes_[input.id].requires_grad ? &grads.slot(input.id) : nullptr;
                  Tensor* gk = nodes_[kernel.id].requires_grad ? &grads.slot(kernel.id) : nullptr;
                  conv2d_backward(nodes_[input.id].value, nodes_[kernel.id].value, stride, padding, g, gx, gk);
                  if (nodes_[bias.id].requires_grad) bias_backward(g, grads.slot(bias.id));
                });
}

Var Graph::deconv2d(Var input, Var kernel, int stride) {
  Tensor out = deconv2d_forward(value(input), value(kernel), nullptr, stride);
  return record(std::move(out), {input, kernel}, [this, input, kernel, stride](const Tensor& g, Gradients& grads) {
    Tensor* gx = nodes_[input.id].requires_grad ? &grads.slot(input.id) : nullptr;
    Tensor* gk = nodes_[kernel.id].requires_grad ? &grads.slot(kernel.id) : nullptr;
    deconv2d_backward(nodes_[input.id].value, nodes_[kernel.id].value, stride, g, gx, gk);
  });
}

Var Graph::deconv2d(Var input, Var kernel, Var bias, int stride) {
  Tensor out = deconv2d_forward(value(input), value(kernel), &value(bias), stride);
  return record(std::move(out), {input, kernel, bias}, [this, input, kernel, bias, stride](const Tensor& g, Gradients& grads) {
    Tensor* gx = nodes_[input.id].requires_grad ? &grads.slot(input.id) : nullptr;
    Tensor* gk = nodes_[kernel.id].requires_grad ? &grads.slot(kernel.id) : nullptr;
    deconv2d_backward(nodes_[input.id].value, nodes_[kernel.id].value, stride, g, gx, gk);
    if (nodes_[bias.id].requires_grad) bias_backward(g, grads.slot(bias.id));
  });
}

#define ISQA_UNARY(NAME, FWD, DERIV)                                                             \
  Var Graph::NAME(Var x) {                                                                       \
    const Tensor& xv = value(x);                                                                 \
    Tensor out(xv.shape());                                                                      \
    for (std::size_t i = 0; i < xv.size(); ++i) {                                                \
      const Real v = xv[i];                                                                      \
      out[i] = (FWD);                                                                            \
    }                                                                                            \
    Var self{static_cast<int>(nodes_.size())};                                                   \
    return record(std::move(out), {x}, [this, x, self](const Tensor& g, Gradients& grads) {      \
      const Tensor& xv = nodes_[x.id].value;                                                     \
      const Tensor& yv = nodes_[self.id].value;                                                  \
      Tensor& gx = grads.slot(x.id);                                                             \
      for (std::size_t i = 0; i < g.size(); ++i) {                                               \
        const Real v = xv[i];                                                                    \
        const Real y = yv[i];                                                                    \
        (void)v;                                                                                 \
        (void)y;                                                                                 \
        gx[i] += g[i] * (DERIV);                                                                 \
      }                                                                                          \
    });                                                                                          \
  }

ISQA_UNARY(relu, v > 0 ? v : Real(0), v > 0 ? Real(1) : Real(0))
ISQA_UNARY(sigmoid, stable_sigmoid(v), y * (1 - y))
ISQA_UNARY(tanh, std::tanh(v), 1 - y * y)
ISQA_UNARY(log, std::log(v), 1 / v)
ISQA_UNARY(sqrt, std::sqrt(v), Real(0.5) / y)

#undef ISQA_UNARY

Var Graph::clamp(Var x, Real lo, Real hi) {
  const Tensor& xv = value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::clamp(xv[i], lo, hi);
  return record(std::move(out), {x}, [this, x, lo, hi](const Tensor& g, Gradients& grads) {
    const Tensor& xv = nodes_[x.id].value;
    Tensor& gx = grads.slot(x.id);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] >= lo && xv[i] <= hi) gx[i] += g[i];
  });
}

Var Graph::binary(Var a, Var b, int op) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  auto bc = std::make_shared<Broadcast>(make_broadcast(A.shape(), B.shape()));
  Tensor out(bc->out_shape);
  const std::size_t n = out.size();
  auto ia = [&](std::size_t i) { return bc->identical ? i : bc->ia[i]; };
  auto ib = [&](std::size_t i) { return bc->identical ? i : bc->ib[i]; };
  for (std::size_t i = 0; i < n; ++i) {
    const Real x = A[ia(i)], y = B[ib(i)];
    switch (op) {
      case kAdd: out[i] = x + y; break;
      case kSub: out[i] = x - y; break;
      case kMul: out[i] = x * y; break;
      default: out[i] = x / y; break;
    }
  }
  return record(std::move(out), {a, b}, [this, a, b, op, bc](const Tensor& g, Gradients& grads) {
    const Tensor& A = nodes_[a.id].value;
    const Tensor& B = nodes_[b.id].value;
    const bool need_a = nodes_[a.id].requires_grad, need_b = nodes_[b.id].requires_grad;
    Tensor* ga = need_a ? &grads.slot(a.id) : nullptr;
    Tensor* gb = need_b ? &grads.slot(b.id) : nullptr;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::size_t ai = bc->identical ? i : bc->ia[i];
      const std::size_t bi = bc->identical ? i : bc->ib[i];
      const Real gi = g[i];
      switch (op) {
        case kAdd:
          if (ga) (*ga)[ai] += gi;
          if (gb) (*gb)[bi] += gi;
          break;
        case kSub:
          if (ga) (*ga)[ai] += gi;
          if (gb) (*gb)[bi] -= gi;
          break;
        case kMul:
          if (ga) (*ga)[ai] += gi * B[bi];
          if (gb) (*gb)[bi] += gi * A[ai];
          break;
        default:
          if (ga) (*ga)[ai] += gi / B[bi];
          if (gb) (*gb)[bi] -= gi * A[ai] / (B[bi] * B[bi]);
          break;
      }
    }
  });
}

Var Graph::add(Var a, Var b) { return binary(a, b, kAdd); }
Var Graph::sub(Var a, Var b) { return binary(a, b, kSub); }
Var Graph::mul(Var a, Var b) { return binary(a, b, kMul); }
Var Graph::div(Var a, Var b) { return binary(a, b, kDiv); }

Var Graph::scale(Var x, Real factor) {
  const Tensor& xv = value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = factor * xv[i];
  return record(std::move(out), {x}, [x, factor](const Tensor& g, Gradients& grads) {
    Tensor& gx = grads.slot(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

Var Graph::add_scalar(Var x, Real c) {
  const Tensor& xv = value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] + c;
  return record(std::move(out), {x}, [x](const Tensor& g, Gradients& grads) { grads.slot(x.id) += g; });
}

Var Graph::sum(Var x) {
  const Tensor& xv = value(x);
  Real acc = 0;
  for (Real v : xv.data()) acc += v;
  return record(Tensor::scalar(acc), {x}, [x](const Tensor& g, Gradients& grads) {
    Tensor& gx = grads.slot(x.id);
    const Real gv = g[0];
    for (Real& v : gx.data()) v += gv;
  });
}

Var Graph::mean(Var x) {
  const std::size_t n = value(x).size();
  if (n == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), Real(1) / static_cast<Real>(n));
}

Var Graph::sum_rows(Var x) {
  const Tensor& xv = value(x);
  if (xv.rank() != 2) throw DimensionError("sum_rows expects a matrix, got " + xv.shape_string());
  const int r = xv.dim(0), c = xv.dim(1);
  Tensor out({1, c});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[j] += xv.at(i, j);
  return record(std::move(out), {x}, [x, r, c](const Tensor& g, Gradients& grads) {
    Tensor& gx = grads.slot(x.id);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) gx.at(i, j) += g[j];
  });
}

Var Graph::reshape(Var x, std::vector<int> shape) {
  Tensor out = value(x).reshaped(std::move(shape));
  return record(std::move(out), {x}, [x](const Tensor& g, Gradients& grads) {
    Tensor& gx = grads.slot(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var Graph::transpose(Var x) {
  const Tensor& xv = value(x);
  if (xv.rank() != 2) throw DimensionError("transpose expects a matrix, got " + xv.shape_string());
  const int r = xv.dim(0), c = xv.dim(1);
  Tensor out({c, r});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(j, i) = xv.at(i, j);
  return record(std::move(out), {x}, [x, r, c](const Tensor& g, Gradients& grads) {
    Tensor& gx = grads.slot(x.id);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) gx.at(i, j) += g.at(j, i);
  });
}

Var Graph::concat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  std::vector<int> shape = value(parts[0]).shape();
  if (shape.empty()) throw DimensionError("concat requires rank >= 1");
  int lead = 0;
  for (Var p : parts) {
    const auto& s = value(p).shape();
    if (s.size() != shape.size() || !std::equal(s.begin() + 1, s.end(), shape.begin() + 1)) {
      throw DimensionError("concat shape mismatch: " + shape_to_string(s) + " vs " + shape_to_string(shape));
    }
    lead += s[0];
  }
  shape[0] = lead;
  Tensor out(shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& v = value(p);
    offsets.push_back(off);
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += v.size();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return record(std::move(out), parts, [this, ins, offsets](const Tensor& g, Gradients& grads) {
    for (std::size_t k = 0; k < ins.size(); ++k) {
      if (!nodes_[ins[k].id].requires_grad) continue;
      Tensor& gp = grads.slot(ins[k].id);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offsets[k] + i];
    }
  });
}

Var Graph::avg_pool2d(Var x, int size) {
  const Tensor& xv = value(x);
  if (xv.rank() != 3) throw DimensionError("avg_pool2d expects {C,H,W}, got " + xv.shape_string());
  if (size < 1 || xv.dim(1) % size != 0 || xv.dim(2) % size != 0) {
    throw DimensionError("avg_pool2d size " + std::to_string(size) + " does not divide " + xv.shape_string());
  }
  const int c = xv.dim(0), oh = xv.dim(1) / size, ow = xv.dim(2) / size;
  const Real inv = Real(1) / (size * size);
  Tensor out({c, oh, ow});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < oh * size; ++y)
      for (int xx = 0; xx < ow * size; ++xx) out.at(ch, y / size, xx / size) += xv.at(ch, y, xx) * inv;
  return record(std::move(out), {x}, [x, c, oh, ow, size, inv](const Tensor& g, Gradients& grads) {
    Tensor& gx = grads.slot(x.id);
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < oh * size; ++y)
        for (int xx = 0; xx < ow * size; ++xx) gx.at(ch, y, xx) += g.at(ch, y / size, xx / size) * inv;
  });
}

Var Graph::gather_rows(Var table, std::vector<int> rows) {
  const Tensor& t = value(table);
  if (t.rank() != 2) throw DimensionError("gather_rows expects a matrix, got " + t.shape_string());
  const int c = t.dim(1);
  Tensor out({static_cast<int>(rows.size()), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= t.dim(0)) throw DimensionError("gather_rows index out of range");
    for (int j = 0; j < c; ++j) out.at(static_cast<int>(i), j) = t.at(rows[i], j);
  }
  return record(std::move(out), {table}, [table, rows = std::move(rows), c](const Tensor& g, Gradients& grads) {
    Tensor& gt = grads.slot(table.id);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (int j = 0; j < c; ++j) gt.at(rows[i], j) += g.at(static_cast<int>(i), j);
  });
}

Var Graph::gather(Var x, std::vector<std::size_t> idx) {
  const Tensor& xv = value(x);
  Tensor out({static_cast<int>(idx.size())});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= xv.size()) throw DimensionError("gather index out of range");
    out[i] = xv[idx[i]];
  }
  return record(std::move(out), {x}, [x, idx = std::move(idx)](const Tensor& g, Gradients& grads) {
    Tensor& gx = grads.slot(x.id);
    for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += g[i];
  });
}

// ---------------------------------------------------------------- oracle

Real finite_diff_check(const std::function<Var(Graph&, Var)>& fn, const Tensor& point, Real eps) {
  if (!(eps > 0)) throw ContractError("finite_diff_check requires eps > 0");
  auto evaluate = [&](const Tensor& p) {
    Graph g;
    Var x = g.input(p);
    return g.value(fn(g, x)).item();
  };
  Graph g;
  Var x = g.input(point);
  Var y = fn(g, x);
  const Tensor analytic = g.backward(y).of(x);
  Real worst = 0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const Real orig = probe[i];
    probe[i] = orig + eps;
    const Real up = evaluate(probe);
    probe[i] = orig - eps;
    const Real down = evaluate(probe);
    probe[i] = orig;
    const Real numeric = (up - down) / (2 * eps);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / (std::abs(numeric) + 1e-8));
  }
  return worst;
}

}  // namespace isqa::ad

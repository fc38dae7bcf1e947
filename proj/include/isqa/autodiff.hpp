#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "isqa/tensor.hpp"

namespace isqa::ad {

// Handle to a value recorded in a Graph.
struct Var {
  int id = -1;
  bool valid() const noexcept { return id >= 0; }
};

class Graph;

// Per-node gradients produced by Graph::backward. Nodes the root does not
// depend on report an all-zero gradient of their own shape.
class Gradients {
public:
  explicit Gradients(const Graph& graph);

  Tensor of(Var v) const;
  const Tensor* find(Var v) const;
  Tensor& slot(int id);

private:
  const Graph* graph_;
  std::vector<Tensor> grads_;
};

// Tape of operations. Nodes are appended in execution order, so the recording
// order is a valid topological order and reverse traversal is sufficient.
// A Graph is bound to a single thread; use one Graph per context.
class Graph {
public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var input(Tensor value);     // leaf that receives gradients
  Var constant(Tensor value);  // leaf excluded from gradient propagation

  const Tensor& value(Var v) const;
  const std::vector<int>& shape(Var v) const { return value(v).shape(); }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  bool requires_grad(Var v) const;

  // Linear algebra and convolutions. Images are laid out {channels, height, width};
  // conv kernels {out, in, kh, kw}; deconv kernels {in, out, kh, kw}.
  Var matmul(Var a, Var b);
  Var conv2d(Var input, Var kernel, int stride, int padding);
  Var conv2d(Var input, Var kernel, Var bias, int stride, int padding);
  Var deconv2d(Var input, Var kernel, int stride);
  Var deconv2d(Var input, Var kernel, Var bias, int stride);

  // Pointwise. Binary ops broadcast numpy-style (right-aligned, size-1 expands).
  Var relu(Var x);
  Var sigmoid(Var x);
  Var tanh(Var x);
  Var log(Var x);
  Var sqrt(Var x);
  Var clamp(Var x, Real lo, Real hi);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var scale(Var x, Real factor);
  Var add_scalar(Var x, Real c);

  // Reductions and shape manipulation.
  Var sum(Var x);
  Var mean(Var x);
  Var sum_rows(Var x);  // {r, c} -> {1, c}
  Var reshape(Var x, std::vector<int> shape);
  Var transpose(Var x);
  Var concat(std::span<const Var> parts);  // along axis 0
  Var avg_pool2d(Var x, int size);
  Var gather_rows(Var table, std::vector<int> rows);
  Var gather(Var x, std::vector<std::size_t> flat_indices);

  // Reverse pass from a scalar root.
  Gradients backward(Var root) const;

private:
  friend class Gradients;
  using BackwardFn = std::function<void(const Tensor& grad_out, Gradients& grads)>;

  struct Node {
    Tensor value;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);
  void check(Var v) const;
  Var binary(Var a, Var b, int op);

  std::deque<Node> nodes_;  // stable addresses: value() references survive later records
};

// Max over coordinates of |analytic - numeric| / (|numeric| + 1e-8), where the
// analytic gradient comes from backward() and the numeric one from central
// differences. `fn` builds a scalar from the supplied input variable.
Real finite_diff_check(const std::function<Var(Graph&, Var)>& fn, const Tensor& point, Real eps);

// Raw kernels, exposed for reuse by fixed (non-trainable) feature extractors.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor* bias, int stride, int padding);
Tensor deconv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor* bias, int stride);

}  // namespace isqa::ad

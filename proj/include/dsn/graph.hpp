#pragma once

#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dsn/tensor.hpp"

namespace dsn {

class Graph;

// Lightweight handle to a node on a Graph.
struct Var {
  Graph* graph = nullptr;
  int id = -1;
  bool valid() const { return graph != nullptr && id >= 0; }
};

class GradientMap {
 public:
  bool contains(Var v) const { return grads_.count(v.id) != 0; }
  const Tensor& at(Var v) const;
  size_t size() const { return grads_.size(); }
  void set(int id, Tensor g) { grads_[id] = std::move(g); }

 private:
  std::unordered_map<int, Tensor> grads_;
};

// Define-by-run reverse-mode tape. A graph is built fresh for every forward
// pass; backward may run exactly once per graph. Nodes are stored in
// construction order, which is already topological.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&)>;

  Var leaf(Tensor value, std::string name = {}, bool parameter = false);
  Var constant(Tensor value) { return leaf(std::move(value)); }

  const Tensor& value(Var v) const { return node_value(v.id); }

  // Gradients of a scalar loss w.r.t. every parameter leaf on this graph;
  // parameter leaves the loss never touched map to zero tensors.
  GradientMap backward(Var loss);

  // Node plumbing used by the operator implementations.
  int push(const char* op, std::vector<int> parents, Tensor value, BackwardFn fn);
  const Tensor& node_value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Tensor& node_grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }
  Tensor& grad_buf(int id);
  bool has_grad(int id) const { return nodes_[static_cast<size_t>(id)].has_grad; }
  size_t node_count() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

 private:
  struct Node {
    const char* op = "";
    std::vector<int> parents;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool parameter = false;
    std::string name;
    BackwardFn backward;
  };
  // deque: references returned by node_value stay valid while nodes are
  // appended during graph construction
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

enum class Pad { same, valid };

// Elementwise / scalar.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_scalar(Var a, double c);
Var mul_scalar(Var a, double c);
Var neg(Var a);
Var square(Var a);
Var sqrt(Var a);
Var exp(Var a);
Var log(Var a);
Var abs(Var a);
Var relu(Var a);       // relu'(0) := 0
Var sigmoid(Var a);
Var recip(Var a);
Var clamp_min(Var a, double floor);  // passes gradient only where a > floor

// Linear algebra and structure.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape target);
Var concat(Var a, Var b, int axis);

// Reductions.
Var sum(Var a);
Var mean(Var a);
Var sum_axis(Var a, int axis);
Var mean_axis(Var a, int axis);

// Broadcasts over 2-D [N,M] operands.
Var add_row(Var x, Var v);     // x[i,j] + v[j]
Var add_col(Var x, Var v);     // x[i,j] + v[i]
Var scale_rows(Var x, Var v);  // x[i,j] * v[i]

// Image ops, NHWC layout, stride 1.
Var conv2d(Var x, Var w, Pad pad);          // w is [kh,kw,cin,cout], cross-correlation
Var add_channel_bias(Var x, Var b);         // x[n,h,w,c] + b[c]
Var maxpool2x2(Var x);                      // ties route to the first max in row-major order
Var upsample2x2(Var x);                     // nearest neighbor

// Rows of [N,C]; log-sum-exp stabilized.
Var softmax_rows(Var x);

// Identity forward; multiplies the upstream gradient by -1 on the way back.
Var gradient_reversal(Var a);

}  // namespace dsn

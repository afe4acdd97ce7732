#include "dsn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace dsn {

namespace {

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const std::string& expect) {
  throw std::invalid_argument(std::string(op) + ": got shape " + shape_str(a) + ", expected " + expect);
}

Graph& same_graph(const char* op, Var a, Var b) {
  if (!a.valid() || !b.valid() || a.graph != b.graph)
    throw std::invalid_argument(std::string(op) + ": operands must live on one graph");
  return *a.graph;
}

Graph& graph_of(const char* op, Var a) {
  if (!a.valid()) throw std::invalid_argument(std::string(op) + ": invalid operand");
  return *a.graph;
}

template <typename F, typename D>
Var unary_op(const char* op, Var a, F f, D dfdx) {
  Graph& g = graph_of(op, a);
  const Tensor& x = g.node_value(a.id);
  Tensor y(x.shape);
  for (int64_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  int ia = a.id;
  int out = static_cast<int>(g.node_count());
  g.push(op, {ia}, std::move(y), [ia, out, dfdx](Graph& gg) {
    const Tensor& go = gg.node_grad(out);
    const Tensor& xv = gg.node_value(ia);
    const Tensor& yv = gg.node_value(out);
    Tensor& ga = gg.grad_buf(ia);
    for (int64_t i = 0; i < go.size(); ++i) ga[i] += go[i] * dfdx(xv[i], yv[i]);
  });
  return Var{&g, out};
}

template <typename F, typename DA, typename DB>
Var binary_op(const char* op, Var a, Var b, F f, DA dfda, DB dfdb) {
  Graph& g = same_graph(op, a, b);
  const Tensor& x = g.node_value(a.id);
  const Tensor& y = g.node_value(b.id);
  if (!x.same_shape(y)) shape_fail(op, x.shape, y.shape);
  Tensor z(x.shape);
  for (int64_t i = 0; i < x.size(); ++i) z[i] = f(x[i], y[i]);
  int ia = a.id, ib = b.id;
  int out = static_cast<int>(g.node_count());
  g.push(op, {ia, ib}, std::move(z), [ia, ib, out, dfda, dfdb](Graph& gg) {
    const Tensor& go = gg.node_grad(out);
    const Tensor& xv = gg.node_value(ia);
    const Tensor& yv = gg.node_value(ib);
    {
      Tensor& ga = gg.grad_buf(ia);
      for (int64_t i = 0; i < go.size(); ++i) ga[i] += go[i] * dfda(xv[i], yv[i]);
    }
    {
      Tensor& gb = gg.grad_buf(ib);
      for (int64_t i = 0; i < go.size(); ++i) gb[i] += go[i] * dfdb(xv[i], yv[i]);
    }
  });
  return Var{&g, out};
}

}  // namespace

const Tensor& GradientMap::at(Var v) const {
  auto it = grads_.find(v.id);
  if (it == grads_.end()) throw std::invalid_argument("GradientMap: no gradient recorded for this leaf");
  return it->second;
}

Var Graph::leaf(Tensor value, std::string name, bool parameter) {
  Node n;
  n.op = "leaf";
  n.value = std::move(value);
  n.parameter = parameter;
  n.name = std::move(name);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

int Graph::push(const char* op, std::vector<int> parents, Tensor value, BackwardFn fn) {
  Node n;
  n.op = op;
  n.parents = std::move(parents);
  n.value = std::move(value);
  n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Graph::grad_buf(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape, 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

GradientMap Graph::backward(Var loss) {
  if (loss.graph != this || loss.id < 0) throw std::invalid_argument("backward: loss is not on this graph");
  if (backward_done_) throw std::logic_error("backward: already ran on this graph; rebuild it before differentiating again");
  const Tensor& lv = node_value(loss.id);
  if (lv.size() != 1) throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_str(lv.shape));

  grad_buf(loss.id).data[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.has_grad && n.backward) n.backward(*this);
  }
  backward_done_ = true;

  GradientMap gm;
  for (size_t id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (!n.parameter) continue;
    gm.set(static_cast<int>(id), n.has_grad ? n.grad : Tensor(n.value.shape, 0.0));
  }
  return gm;
}

// ---------------------------------------------------------------------------
// elementwise and scalar

Var add(Var a, Var b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var add_scalar(Var a, double c) {
  return unary_op(
      "add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var mul_scalar(Var a, double c) {
  return unary_op(
      "mul_scalar", a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Var neg(Var a) { return mul_scalar(a, -1.0); }

Var square(Var a) {
  return unary_op(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt(Var a) {
  return unary_op(
      "sqrt", a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Var exp(Var a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary_op(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var abs(Var a) {
  return unary_op(
      "abs", a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var relu(Var a) {
  return unary_op(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary_op(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var recip(Var a) {
  return unary_op(
      "recip", a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

Var clamp_min(Var a, double floor) {
  return unary_op(
      "clamp_min", a, [floor](double x) { return x > floor ? x : floor; },
      [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// structure

Var matmul(Var a, Var b) {
  Graph& g = same_graph("matmul", a, b);
  const Tensor& x = g.node_value(a.id);
  const Tensor& y = g.node_value(b.id);
  if (x.rank() != 2 || y.rank() != 2 || x.shape[1] != y.shape[0]) shape_fail("matmul", x.shape, y.shape);
  int m = x.shape[0], k = x.shape[1], n = y.shape[1];
  Tensor z({m, n}, 0.0);
  detail::gemm_nn(x.data.data(), y.data.data(), z.data.data(), m, k, n);
  int ia = a.id, ib = b.id;
  int out = static_cast<int>(g.node_count());
  g.push("matmul", {ia, ib}, std::move(z), [ia, ib, out, m, k, n](Graph& gg) {
    const Tensor& go = gg.node_grad(out);
    const Tensor& xv = gg.node_value(ia);
    const Tensor& yv = gg.node_value(ib);
    detail::gemm_nt(go.data.data(), yv.data.data(), gg.grad_buf(ia).data.data(), m, n, k);
    detail::gemm_tn(xv.data.data(), go.data.data(), gg.grad_buf(ib).data.data(), m, k, n);
  });
  return Var{&g, out};
}

Var transpose(Var a) {
  Graph& g = graph_of("transpose", a);
  const Tensor& x = g.node_value(a.id);
  if (x.rank() != 2) shape_fail("transpose", x.shape, "a 2-D tensor");
  int m = x.shape[0], n = x.shape[1];
  Tensor y({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) y.data[static_cast<size_t>(j) * m + i] = x.data[static_cast<size_t>(i) * n + j];
  int ia = a.id;
  int out = static_cast<int>(g.node_count());
  g.push("transpose", {ia}, std::move(y), [ia, out, m, n](Graph& gg) {
    const Tensor& go = gg.node_grad(out);
    Tensor& ga = gg.grad_buf(ia);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i) ga.data[static_cast<size_t>(i) * n + j] += go.data[static_cast<size_t>(j) * m + i];
  });
  return Var{&g, out};
}

Var reshape(Var a, Shape target) {
  Graph& g = graph_of("reshape", a);
  const Tensor& x = g.node_value(a.id);
  if (shape_numel(target) != x.size()) shape_fail("reshape", x.shape, "a shape with " + std::to_string(x.size()) + " elements, not " + shape_str(target));
  Tensor y(target, x.data);
  int ia = a.id;
  int out = static_cast<int>(g.node_count());
  g.push("reshape", {ia}, std::move(y), [ia, out](Graph& gg) {
    const Tensor& go = gg.node_grad(out);
    Tensor& ga = gg.grad_buf(ia);
    for (int64_t i = 0; i < go.size(); ++i) ga[i] += go[i];
  });
  return Var{&g, out};
}

Var concat(Var a, Var b, int axis) {
  Graph& g = same_graph("concat", a, b);
  const Tensor& x = g.node_value(a.id);
  const Tensor& y = g.node_value(b.id);
  if (x.rank() != y.rank() || axis < 0 || axis >= x.rank()) shape_fail("concat", x.shape, y.shape);
  for (int d = 0; d < x.rank(); ++d)
    if (d != axis && x.shape[d] != y.shape[d]) shape_fail("concat", x.shape, y.shape);

  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.shape[d];
  for (int d = axis + 1; d < x.rank(); ++d) inner *= x.shape[d];
  int64_t na = x.shape[axis], nb = y.shape[axis];

  Shape zs = x.shape;
  zs[axis] = static_cast<int>(na + nb);
  Tensor z(zs);
  const int64_t za = na * inner, zb = nb * inner;
  for (int64_t o = 0; o < outer; ++o) {
    std::copy_n(x.data.data() + o * za, za, z.data.data() + o * (za + zb));
    std::copy_n(y.data.data() + o * zb, zb, z.data.data() + o * (za + zb) + za);
  }
  int ia = a.id, ib = b.id;
  int out = static_cast<int>(g.node_count());
  g.push("concat", {ia, ib}, std::move(z), [ia, ib, out, outer, za, zb](Graph& gg) {
    const Tensor& go = gg.node_grad(out);
    Tensor& ga = gg.grad_buf(ia);
    Tensor& gb = gg.grad_buf(ib);
    for (int64_t o = 0; o < outer; ++o) {
      const double* src = go.data.data() + o * (za + zb);
      for (int64_t i = 0; i < za; ++i) ga.data[static_cast<size_t>(o * za + i)] += src[i];
      for (int64_t i = 0; i < zb; ++i) gb.data[static_cast<size_t>(o * zb + i)] += src[za + i];
    }
  });
  return Var{&g, out};
}

// ---------------------------------------------------------------------------
// reductions

Var sum(Var a) {
  Graph& g = graph_of("sum", a);
  const Tensor& x = g.node_value(a.id);
  double acc = 0.0;
  for (double v : x.data) acc += v;
  int ia = a.id;
  int out = static_cast<int>(g.node_count());
  g.push("sum", {ia}, Tensor::scalar(acc), [ia, out](Graph& gg) {
    double go = gg.node_grad(out).data[0];
    Tensor& ga = gg.grad_buf(ia);
    for (double& v : ga.data) v += go;
  });
  return Var{&g, out};
}

Var mean(Var a) {
  Graph& g = graph_of("mean", a);
  int64_t n = g.node_value(a.id).size();
  return mul_scalar(sum(a), 1.0 / static_cast<double>(n));
}

namespace {

Var reduce_axis(const char* op, Var a, int axis, bool take_mean) {
  Graph& g = graph_of(op, a);
  const Tensor& x = g.node_value(a.id);
  if (axis < 0 || axis >= x.rank()) shape_fail(op, x.shape, "an axis in [0," + std::to_string(x.rank()) + ")");
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.shape[d];
  for (int d = axis + 1; d < x.rank(); ++d) inner *= x.shape[d];
  int64_t n = x.shape[axis];
  double scale = take_mean ? 1.0 / static_cast<double>(n) : 1.0;

  Shape ys = x.shape;
  ys.erase(ys.begin() + axis);
  Tensor y(ys, 0.0);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t k = 0; k < n; ++k) {
      const double* src = x.data.data() + (o * n + k) * inner;
      double* dst = y.data.data() + o * inner;
      for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  if (take_mean)
    for (double& v : y.data) v *= scale;

  int ia = a.id;
  int out = static_cast<int>(g.node_count());
  g.push(op, {ia}, std::move(y), [ia, out, outer, inner, n, scale](Graph& gg) {
    const Tensor& go = gg.node_grad(out);
    Tensor& ga = gg.grad_buf(ia);
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t k = 0; k < n; ++k) {
        const double* src = go.data.data() + o * inner;
        double* dst = ga.data.data() + (o * n + k) * inner;
        for (int64_t i = 0; i < inner; ++i) dst[i] += src[i] * scale;
      }
  });
  return Var{&g, out};
}

}  // namespace

Var sum_axis(Var a, int axis) { return reduce_axis("sum_axis", a, axis, false); }
Var mean_axis(Var a, int axis) { return reduce_axis("mean_axis", a, axis, true); }

// ---------------------------------------------------------------------------
// 2-D broadcasts

namespace {

void check_2d_vec(const char* op, const Tensor& x, const Tensor& v, int vec_dim) {
  if (x.rank() != 2 || v.rank() != 1 || v.shape[0] != x.shape[vec_dim]) shape_fail(op, x.shape, v.shape);
}

}  // namespace

Var add_row(Var x, Var v) {
  Graph& g = same_graph("add_row", x, v);
  const Tensor& xv = g.node_value(x.id);
  const Tensor& vv = g.node_value(v.id);
  check_2d_vec("add_row", xv, vv, 1);
  int nr = xv.shape[0], nc = xv.shape[1];
  Tensor y(xv.shape);
  for (int i = 0; i < nr; ++i)
    for (int j = 0; j < nc; ++j) y.at(i, j) = xv.at(i, j) + vv[j];
  int ix = x.id, iv = v.id;
  int out = static_cast<int>(g.node_count());
  g.push("add_row", {ix, iv}, std::move(y), [ix, iv, out, nr, nc](Graph& gg) {
    const Tensor& go = gg.node_grad(out);
    {
      Tensor& gx = gg.grad_buf(ix);
      for (int64_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    }
    {
      Tensor& gv = gg.grad_buf(iv);
      for (int i = 0; i < nr; ++i)
        for (int j = 0; j < nc; ++j) gv[j] += go.at(i, j);
    }
  });
  return Var{&g, out};
}

Var add_col(Var x, Var v) {
  Graph& g = same_graph("add_col", x, v);
  const Tensor& xv = g.node_value(x.id);
  const Tensor& vv = g.node_value(v.id);
  check_2d_vec("add_col", xv, vv, 0);
  int nr = xv.shape[0], nc = xv.shape[1];
  Tensor y(xv.shape);
  for (int i = 0; i < nr; ++i)
    for (int j = 0; j < nc; ++j) y.at(i, j) = xv.at(i, j) + vv[i];
  int ix = x.id, iv = v.id;
  int out = static_cast<int>(g.node_count());
  g.push("add_col", {ix, iv}, std::move(y), [ix, iv, out, nr, nc](Graph& gg) {
    const Tensor& go = gg.node_grad(out);
    {
      Tensor& gx = gg.grad_buf(ix);
      for (int64_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    }
    {
      Tensor& gv = gg.grad_buf(iv);
      for (int i = 0; i < nr; ++i)
        for (int j = 0; j < nc; ++j) gv[i] += go.at(i, j);
    }
  });
  return Var{&g, out};
}

Var scale_rows(Var x, Var v) {
  Graph& g = same_graph("scale_rows", x, v);
  const Tensor& xv = g.node_value(x.id);
  const Tensor& vv = g.node_value(v.id);
  check_2d_vec("scale_rows", xv, vv, 0);
  int nr = xv.shape[0], nc = xv.shape[1];
  Tensor y(xv.shape);
  for (int i = 0; i < nr; ++i)
    for (int j = 0; j < nc; ++j) y.at(i, j) = xv.at(i, j) * vv[i];
  int ix = x.id, iv = v.id;
  int out = static_cast<int>(g.node_count());
  g.push("scale_rows", {ix, iv}, std::move(y), [ix, iv, out, nr, nc](Graph& gg) {
    const Tensor& go = gg.node_grad(out);
    const Tensor& xvv = gg.node_value(ix);
    const Tensor& vvv = gg.node_value(iv);
    {
      Tensor& gx = gg.grad_buf(ix);
      for (int i = 0; i < nr; ++i)
        for (int j = 0; j < nc; ++j) gx.at(i, j) += go.at(i, j) * vvv[i];
    }
    {
      Tensor& gv = gg.grad_buf(iv);
      for (int i = 0; i < nr; ++i)
        for (int j = 0; j < nc; ++j) gv[i] += go.at(i, j) * xvv.at(i, j);
    }
  });
  return Var{&g, out};
}

// ---------------------------------------------------------------------------
// image ops (NHWC)

Var conv2d(Var x, Var w, Pad pad) {
  Graph& g = same_graph("conv2d", x, w);
  const Tensor& xv = g.node_value(x.id);
  const Tensor& wv = g.node_value(w.id);
  if (xv.rank() != 4 || wv.rank() != 4 || xv.shape[3] != wv.shape[2]) shape_fail("conv2d", xv.shape, wv.shape);
  const int n = xv.shape[0], h = xv.shape[1], wd = xv.shape[2], cin = xv.shape[3];
  const int kh = wv.shape[0], kw = wv.shape[1], cout = wv.shape[3];
  const int ph = pad == Pad::same ? (kh - 1) / 2 : 0;
  const int pw = pad == Pad::same ? (kw - 1) / 2 : 0;
  const int ho = pad == Pad::same ? h : h - kh + 1;
  const int wo = pad == Pad::same ? wd : wd - kw + 1;
  if (ho <= 0 || wo <= 0) shape_fail("conv2d", xv.shape, "an input at least as large as the kernel " + shape_str(wv.shape));

  const int64_t rows = static_cast<int64_t>(n) * ho * wo;
  const int64_t patch = static_cast<int64_t>(kh) * kw * cin;
  auto col = std::make_shared<std::vector<double>>(static_cast<size_t>(rows * patch), 0.0);

  {
    double* cp = col->data();
    for (int ni = 0; ni < n; ++ni)
      for (int y = 0; y < ho; ++y)
        for (int xx = 0; xx < wo; ++xx) {
          for (int i = 0; i < kh; ++i) {
            int iy = y + i - ph;
            if (iy < 0 || iy >= h) {
              cp += kw * cin;
              continue;
            }
            for (int j = 0; j < kw; ++j) {
              int ix = xx + j - pw;
              if (ix < 0 || ix >= wd) {
                cp += cin;
                continue;
              }
              const double* src = xv.data.data() + ((static_cast<int64_t>(ni) * h + iy) * wd + ix) * cin;
              for (int c = 0; c < cin; ++c) *cp++ = src[c];
            }
          }
        }
  }

  Tensor y({n, ho, wo, cout}, 0.0);
  detail::gemm_nn(col->data(), wv.data.data(), y.data.data(), static_cast<int>(rows), static_cast<int>(patch), cout);

  int ix_id = x.id, iw_id = w.id;
  int out = static_cast<int>(g.node_count());
  g.push("conv2d", {ix_id, iw_id}, std::move(y),
         [ix_id, iw_id, out, col, n, h, wd, cin, kh, kw, cout, ph, pw, ho, wo, rows, patch](Graph& gg) {
           const Tensor& go = gg.node_grad(out);
           const Tensor& wvv = gg.node_value(iw_id);
           // dW += col^T * go
           detail::gemm_tn(col->data(), go.data.data(), gg.grad_buf(iw_id).data.data(), static_cast<int>(rows),
                           static_cast<int>(patch), cout);
           // dcol = go * W^T, then scatter back into dX
           std::vector<double> dcol(static_cast<size_t>(rows * patch), 0.0);
           detail::gemm_nt(go.data.data(), wvv.data.data(), dcol.data(), static_cast<int>(rows), cout,
                           static_cast<int>(patch));
           Tensor& gx = gg.grad_buf(ix_id);
           const double* cp = dcol.data();
           for (int ni = 0; ni < n; ++ni)
             for (int y2 = 0; y2 < ho; ++y2)
               for (int xx = 0; xx < wo; ++xx) {
                 for (int i = 0; i < kh; ++i) {
                   int iy = y2 + i - ph;
                   if (iy < 0 || iy >= h) {
                     cp += kw * cin;
                     continue;
                   }
                   for (int j = 0; j < kw; ++j) {
                     int ix2 = xx + j - pw;
                     if (ix2 < 0 || ix2 >= wd) {
                       cp += cin;
                       continue;
                     }
                     double* dst = gx.data.data() + ((static_cast<int64_t>(ni) * h + iy) * wd + ix2) * cin;
                     for (int c = 0; c < cin; ++c) dst[c] += *cp++;
                   }
                 }
               }
         });
  return Var{&g, out};
}

Var add_channel_bias(Var x, Var b) {
  Graph& g = same_graph("add_channel_bias", x, b);
  const Tensor& xv = g.node_value(x.id);
  const Tensor& bv = g.node_value(b.id);
  if (xv.rank() != 4 || bv.rank() != 1 || bv.shape[0] != xv.shape[3]) shape_fail("add_channel_bias", xv.shape, bv.shape);
  int c = xv.shape[3];
  int64_t pixels = xv.size() / c;
  Tensor y(xv.shape);
  for (int64_t p = 0; p < pixels; ++p)
    for (int ci = 0; ci < c; ++ci) y[p * c + ci] = xv[p * c + ci] + bv[ci];
  int ix = x.id, ib = b.id;
  int out = static_cast<int>(g.node_count());
  g.push("add_channel_bias", {ix, ib}, std::move(y), [ix, ib, out, pixels, c](Graph& gg) {
    const Tensor& go = gg.node_grad(out);
    {
      Tensor& gx = gg.grad_buf(ix);
      for (int64_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    }
    {
      Tensor& gb = gg.grad_buf(ib);
      for (int64_t p = 0; p < pixels; ++p)
        for (int ci = 0; ci < c; ++ci) gb[ci] += go[p * c + ci];
    }
  });
  return Var{&g, out};
}

Var maxpool2x2(Var x) {
  Graph& g = graph_of("maxpool2x2", x);
  const Tensor& xv = g.node_value(x.id);
  if (xv.rank() != 4 || xv.shape[1] % 2 != 0 || xv.shape[2] % 2 != 0)
    shape_fail("maxpool2x2", xv.shape, "a rank-4 NHWC tensor with even height and width");
  const int n = xv.shape[0], h = xv.shape[1], w = xv.shape[2], c = xv.shape[3];
  const int ho = h / 2, wo = w / 2;
  Tensor y({n, ho, wo, c});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(y.size()));
  int64_t oi = 0;
  for (int ni = 0; ni < n; ++ni)
    for (int yo = 0; yo < ho; ++yo)
      for (int xo = 0; xo < wo; ++xo)
        for (int ci = 0; ci < c; ++ci, ++oi) {
          double best = -HUGE_VAL;
          int64_t best_idx = -1;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              int64_t idx = ((static_cast<int64_t>(ni) * h + (2 * yo + dy)) * w + (2 * xo + dx)) * c + ci;
              if (xv[idx] > best) {  // strict: ties keep the first in row-major order
                best = xv[idx];
                best_idx = idx;
              }
            }
          y[oi] = best;
          (*argmax)[static_cast<size_t>(oi)] = best_idx;
        }
  int ix = x.id;
  int out = static_cast<int>(g.node_count());
  g.push("maxpool2x2", {ix}, std::move(y), [ix, out, argmax](Graph& gg) {
    const Tensor& go = gg.node_grad(out);
    Tensor& gx = gg.grad_buf(ix);
    for (int64_t i = 0; i < go.size(); ++i) gx[(*argmax)[static_cast<size_t>(i)]] += go[i];
  });
  return Var{&g, out};
}

Var upsample2x2(Var x) {
  Graph& g = graph_of("upsample2x2", x);
  const Tensor& xv = g.node_value(x.id);
  if (xv.rank() != 4) shape_fail("upsample2x2", xv.shape, "a rank-4 NHWC tensor");
  const int n = xv.shape[0], h = xv.shape[1], w = xv.shape[2], c = xv.shape[3];
  Tensor y({n, 2 * h, 2 * w, c});
  for (int ni = 0; ni < n; ++ni)
    for (int yo = 0; yo < 2 * h; ++yo)
      for (int xo = 0; xo < 2 * w; ++xo) {
        const double* src = xv.data.data() + ((static_cast<int64_t>(ni) * h + yo / 2) * w + xo / 2) * c;
        double* dst = y.data.data() + ((static_cast<int64_t>(ni) * 2 * h + yo) * 2 * w + xo) * c;
        for (int ci = 0; ci < c; ++ci) dst[ci] = src[ci];
      }
  int ix = x.id;
  int out = static_cast<int>(g.node_count());
  g.push("upsample2x2", {ix}, std::move(y), [ix, out, n, h, w, c](Graph& gg) {
    const Tensor& go = gg.node_grad(out);
    Tensor& gx = gg.grad_buf(ix);
    for (int ni = 0; ni < n; ++ni)
      for (int yo = 0; yo < 2 * h; ++yo)
        for (int xo = 0; xo < 2 * w; ++xo) {
          const double* src = go.data.data() + ((static_cast<int64_t>(ni) * 2 * h + yo) * 2 * w + xo) * c;
          double* dst = gx.data.data() + ((static_cast<int64_t>(ni) * h + yo / 2) * w + xo / 2) * c;
          for (int ci = 0; ci < c; ++ci) dst[ci] += src[ci];
        }
  });
  return Var{&g, out};
}

// ---------------------------------------------------------------------------

Var softmax_rows(Var x) {
  Graph& g = graph_of("softmax_rows", x);
  const Tensor& xv = g.node_value(x.id);
  if (xv.rank() != 2) shape_fail("softmax_rows", xv.shape, "a 2-D [N,C] tensor");
  const int n = xv.shape[0], c = xv.shape[1];
  Tensor y(xv.shape);
  for (int i = 0; i < n; ++i) {
    const double* row = xv.data.data() + static_cast<int64_t>(i) * c;
    double m = row[0];
    for (int j = 1; j < c; ++j) m = std::max(m, row[j]);
    double s = 0.0;
    double* out_row = y.data.data() + static_cast<int64_t>(i) * c;
    for (int j = 0; j < c; ++j) {
      // tiny additive floor keeps rows strictly positive under extreme logits
      out_row[j] = std::exp(row[j] - m) + 1e-300;
      s += out_row[j];
    }
    for (int j = 0; j < c; ++j) out_row[j] /= s;
  }
  int ix = x.id;
  int out = static_cast<int>(g.node_count());
  g.push("softmax_rows", {ix}, std::move(y), [ix, out, n, c](Graph& gg) {
    const Tensor& go = gg.node_grad(out);
    const Tensor& yv = gg.node_value(out);
    Tensor& gx = gg.grad_buf(ix);
    for (int i = 0; i < n; ++i) {
      const double* gr = go.data.data() + static_cast<int64_t>(i) * c;
      const double* yr = yv.data.data() + static_cast<int64_t>(i) * c;
      double dot = 0.0;
      for (int j = 0; j < c; ++j) dot += gr[j] * yr[j];
      double* dst = gx.data.data() + static_cast<int64_t>(i) * c;
      for (int j = 0; j < c; ++j) dst[j] += yr[j] * (gr[j] - dot);
    }
  });
  return Var{&g, out};
}

Var gradient_reversal(Var a) {
  Graph& g = graph_of("gradient_reversal", a);
  Tensor y = g.node_value(a.id);  // forward is the exact identity
  int ia = a.id;
  int out = static_cast<int>(g.node_count());
  g.push("gradient_reversal", {ia}, std::move(y), [ia, out](Graph& gg) {
    const Tensor& go = gg.node_grad(out);
    Tensor& ga = gg.grad_buf(ia);
    for (int64_t i = 0; i < go.size(); ++i) ga[i] -= go[i];
  });
  return Var{&g, out};
}

}  // namespace dsn

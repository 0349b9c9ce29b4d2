#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bird/array.hpp"

namespace bird {

/// Handle into a Tape. A default-constructed Var is invalid.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Gradients keyed by parameter node id. Parameters unreachable from the
/// loss get an all-zero entry of the parameter's shape.
using GradientMap = std::map<int, Array>;

enum class Op : std::uint8_t {
  leaf,
  add,
  sub,
  mul,
  matmul,
  tanh_fn,
  sigmoid_fn,
  elu_fn,
  softplus_fn,
  exp_fn,
  log_fn,
  square_fn,
  sum_all,
  mean_all,
  sum_cols,
  scale_by,
  shift_by,
  concat_cols_op,
  slice_cols_op,
  reshape_op,
  gauss_sample,
  gauss_logp,
  gauss_kl,
  stop_grad,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "subtract";
    case Op::mul: return "multiply";
    case Op::matmul: return "matmul";
    case Op::tanh_fn: return "tanh";
    case Op::sigmoid_fn: return "sigmoid";
    case Op::elu_fn: return "elu";
    case Op::softplus_fn: return "softplus";
    case Op::exp_fn: return "exp";
    case Op::log_fn: return "log";
    case Op::square_fn: return "square";
    case Op::sum_all: return "sum";
    case Op::mean_all: return "mean";
    case Op::sum_cols: return "sum_cols";
    case Op::scale_by: return "scale";
    case Op::shift_by: return "shift";
    case Op::concat_cols_op: return "concat_cols";
    case Op::slice_cols_op: return "slice_cols";
    case Op::reshape_op: return "reshape";
    case Op::gauss_sample: return "gaussian_sample";
    case Op::gauss_logp: return "gaussian_log_density";
    case Op::gauss_kl: return "gaussian_kl";
    case Op::stop_grad: return "stop_gradient";
  }
  return "?";
}

/// Eager reverse-mode tape over Arrays. Nodes are appended in evaluation
/// order, so parent links always point backwards and the graph is acyclic
/// by construction. One tape per optimization step; discarded afterwards.
class Tape {
 public:
  struct Node {
    Op op;
    Array value;
    int p[4] = {-1, -1, -1, -1};
    double c0 = 0.0;      // scale / shift amount
    int i0 = 0, i1 = 0;   // slice start / length
    Array aux;            // recorded noise for gauss_sample
    bool requires_grad = false;
  };

  Var leaf(Array v, bool requires_grad = true) {
    Node n;
    n.op = Op::leaf;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }

  Var constant(Array v) { return leaf(std::move(v), false); }
  Var constant_scalar(double v) { return leaf(Array::scalar(v), false); }

  const Array& value(Var x) const { return node(x).value; }
  std::size_t size() const { return nodes_.size(); }
  bool requires_grad(Var x) const { return node(x).requires_grad; }

  // ---- elementwise binary (same shape, scalar broadcast, or row broadcast) ----

  Var add(Var a, Var b) { return binary(Op::add, a, b); }
  Var sub(Var a, Var b) { return binary(Op::sub, a, b); }
  Var mul(Var a, Var b) { return binary(Op::mul, a, b); }

  Var matmul(Var a, Var b) {
    const Array& A = value(a);
    const Array& B = value(b);
    if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows())
      throw shape_error(Op::matmul, A, B);
    Array out = Array::zeros(A.rows(), B.cols());
    mat(out).noalias() = cmat(A) * cmat(B);
    Node n;
    n.op = Op::matmul;
    n.value = std::move(out);
    n.p[0] = a.id;
    n.p[1] = b.id;
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(n));
  }

  // ---- elementwise unary ----

  Var tanh(Var x) { return unary(Op::tanh_fn, x, [](double v) { return std::tanh(v); }); }
  Var sigmoid(Var x) { return unary(Op::sigmoid_fn, x, [](double v) { return sigmoid_val(v); }); }
  Var elu(Var x) { return unary(Op::elu_fn, x, [](double v) { return v > 0 ? v : std::expm1(v); }); }
  Var softplus(Var x) { return unary(Op::softplus_fn, x, [](double v) { return softplus_val(v); }); }
  Var exp(Var x) { return unary(Op::exp_fn, x, [](double v) { return std::exp(v); }); }
  Var log(Var x) { return unary(Op::log_fn, x, [](double v) { return std::log(v); }); }
  Var square(Var x) { return unary(Op::square_fn, x, [](double v) { return v * v; }); }

  Var scale(Var x, double c) {
    Var v = unary(Op::scale_by, x, [c](double a) { return a * c; });
    nodes_[v.id].c0 = c;
    return v;
  }

  Var shift(Var x, double c) {
    Var v = unary(Op::shift_by, x, [c](double a) { return a + c; });
    nodes_[v.id].c0 = c;
    return v;
  }

  Var negate(Var x) { return scale(x, -1.0); }

  // ---- reductions ----

  Var sum(Var x) {
    const Array& X = value(x);
    double s = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) s += X[i];
    return reduction(Op::sum_all, x, Array::scalar(s));
  }

  Var mean(Var x) {
    const Array& X = value(x);
    double s = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) s += X[i];
    return reduction(Op::mean_all, x, Array::scalar(s / static_cast<double>(X.size())));
  }

  /// Row sums: [r,c] -> [r]; a rank-1 input reduces to a scalar.
  Var sum_cols(Var x) {
    const Array& X = value(x);
    Array out;
    if (X.rank() == 2) {
      out = Array::zeros(X.rows());
      for (std::size_t r = 0; r < X.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < X.cols(); ++c) s += X.at(r, c);
        out[r] = s;
      }
    } else {
      double s = 0.0;
      for (std::size_t i = 0; i < X.size(); ++i) s += X[i];
      out = Array::scalar(s);
    }
    return reduction(Op::sum_cols, x, std::move(out));
  }

  // ---- structure ----

  Var concat_cols(Var a, Var b) {
    const Array& A = value(a);
    const Array& B = value(b);
    Array out;
    if (A.rank() == 2 && B.rank() == 2 && A.rows() == B.rows()) {
      out = Array::zeros(A.rows(), A.cols() + B.cols());
      for (std::size_t r = 0; r < A.rows(); ++r) {
        for (std::size_t c = 0; c < A.cols(); ++c) out.at(r, c) = A.at(r, c);
        for (std::size_t c = 0; c < B.cols(); ++c) out.at(r, A.cols() + c) = B.at(r, c);
      }
    } else if (A.rank() == 1 && B.rank() == 1) {
      std::vector<double> v(A.size() + B.size());
      for (std::size_t i = 0; i < A.size(); ++i) v[i] = A[i];
      for (std::size_t i = 0; i < B.size(); ++i) v[A.size() + i] = B[i];
      out = Array::vector(std::move(v));
    } else {
      throw shape_error(Op::concat_cols_op, A, B);
    }
    Node n;
    n.op = Op::concat_cols_op;
    n.value = std::move(out);
    n.p[0] = a.id;
    n.p[1] = b.id;
    n.i0 = static_cast<int>(A.rank() == 2 ? A.cols() : A.size());
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(n));
  }

  Var slice_cols(Var x, std::size_t start, std::size_t len) {
    const Array& X = value(x);
    std::size_t width = X.rank() == 2 ? X.cols() : X.size();
    if (X.rank() == 0 || start + len > width)
      throw std::invalid_argument(std::string("slice_cols: range [") + std::to_string(start) +
                                  ", " + std::to_string(start + len) + ") out of " + X.shape_str());
    Array out;
    if (X.rank() == 2) {
      out = Array::zeros(X.rows(), len);
      for (std::size_t r = 0; r < X.rows(); ++r)
        for (std::size_t c = 0; c < len; ++c) out.at(r, c) = X.at(r, start + c);
    } else {
      out = Array::zeros(len);
      for (std::size_t c = 0; c < len; ++c) out[c] = X[start + c];
    }
    Node n;
    n.op = Op::slice_cols_op;
    n.value = std::move(out);
    n.p[0] = x.id;
    n.i0 = static_cast<int>(start);
    n.i1 = static_cast<int>(len);
    n.requires_grad = node(x).requires_grad;
    return push(std::move(n));
  }

  /// [r,1] <-> [r] and friends; element count preserved, payload shared.
  Var reshape(Var x, int rank, std::size_t d0, std::size_t d1 = 1) {
    Node n;
    n.op = Op::reshape_op;
    n.value = value(x).reshaped(rank, d0, d1);
    n.p[0] = x.id;
    n.requires_grad = node(x).requires_grad;
    return push(std::move(n));
  }

  // ---- stochastic / distribution primitives ----

  /// Reparameterized Gaussian draw: mean + std (*) noise with the noise
  /// recorded on the node, so the output is a deterministic differentiable
  /// function of mean and std.
  Var gaussian_sample(Var mean, Var std, Array noise) {
    const Array& M = value(mean);
    const Array& S = value(std);
    if (!M.same_shape(S) || !M.same_shape(noise)) throw shape_error(Op::gauss_sample, M, S);
    Array out = M;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += S[i] * noise[i];
    Node n;
    n.op = Op::gauss_sample;
    n.value = std::move(out);
    n.p[0] = mean.id;
    n.p[1] = std.id;
    n.aux = std::move(noise);
    n.requires_grad = node(mean).requires_grad || node(std).requires_grad;
    return push(std::move(n));
  }

  /// Diagonal-Gaussian log density of x under N(mean, diag(std^2)), summed
  /// over coordinates: [r,c] inputs -> [r]; rank-1 inputs -> scalar.
  Var gaussian_log_density(Var x, Var mean, Var std) {
    const Array& X = value(x);
    const Array& M = value(mean);
    const Array& S = value(std);
    if (!X.same_shape(M) || !X.same_shape(S)) throw shape_error(Op::gauss_logp, X, M);
    constexpr double half_ln_2pi = 0.9189385332046727;
    Array out = row_reduce_shape(X);
    for (std::size_t r = 0; r < row_count(X); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < row_width(X); ++c) {
        double mu = elem(M, r, c), sd = elem(S, r, c), xv = elem(X, r, c);
        double z = (xv - mu) / sd;
        s += -half_ln_2pi - std::log(sd) - 0.5 * z * z;
      }
      out[r] = s;
    }
    Node n;
    n.op = Op::gauss_logp;
    n.value = std::move(out);
    n.p[0] = x.id;
    n.p[1] = mean.id;
    n.p[2] = std.id;
    n.requires_grad = node(x).requires_grad || node(mean).requires_grad || node(std).requires_grad;
    return push(std::move(n));
  }

  /// KL(N(mq, sq^2) || N(mp, sp^2)) for diagonal Gaussians, summed over
  /// coordinates: [r,c] inputs -> [r]; rank-1 inputs -> scalar.
  Var gaussian_kl(Var mq, Var sq, Var mp, Var sp) {
    const Array& MQ = value(mq);
    const Array& SQ = value(sq);
    const Array& MP = value(mp);
    const Array& SP = value(sp);
    if (!MQ.same_shape(SQ) || !MQ.same_shape(MP) || !MQ.same_shape(SP))
      throw shape_error(Op::gauss_kl, MQ, MP);
    Array out = row_reduce_shape(MQ);
    for (std::size_t r = 0; r < row_count(MQ); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < row_width(MQ); ++c) {
        double m1 = elem(MQ, r, c), s1 = elem(SQ, r, c);
        double m0 = elem(MP, r, c), s0 = elem(SP, r, c);
        double d = m1 - m0;
        s += std::log(s0) - std::log(s1) + (s1 * s1 + d * d) / (2.0 * s0 * s0) - 0.5;
      }
      out[r] = s;
    }
    Node n;
    n.op = Op::gauss_kl;
    n.value = std::move(out);
    n.p[0] = mq.id;
    n.p[1] = sq.id;
    n.p[2] = mp.id;
    n.p[3] = sp.id;
    n.requires_grad = node(mq).requires_grad || node(sq).requires_grad ||
                      node(mp).requires_grad || node(sp).requires_grad;
    return push(std::move(n));
  }

  /// Identity forward; blocks all reverse flow through this node.
  Var stop_gradient(Var x) {
    Node n;
    n.op = Op::stop_grad;
    n.value = value(x);
    n.p[0] = x.id;
    n.requires_grad = false;
    return push(std::move(n));
  }

  Var detach(Var x) { return stop_gradient(x); }

  // ---- reverse sweep ----

  /// Exact reverse-mode gradients of a scalar loss with respect to the given
  /// parameter nodes. The tape is already topologically ordered (nodes only
  /// reference earlier nodes), so one reverse pass suffices. Multiple calls
  /// on the same tape are independent.
  GradientMap grad(Var loss, const std::vector<Var>& params) const {
    const Node& ln = node(loss);
    if (ln.value.rank() != 0)
      throw std::invalid_argument(std::string("grad: loss must be scalar, got ") +
                                  ln.value.shape_str());
    std::vector<Array> g(nodes_.size());
    std::vector<char> has_g(nodes_.size(), 0);
    g[loss.id] = Array::scalar(1.0);
    has_g[loss.id] = 1;

    for (int i = loss.id; i >= 0; --i) {
      if (!has_g[i] || !nodes_[i].requires_grad) continue;
      backward_node(i, g, has_g);
    }

    GradientMap out;
    for (Var p : params) {
      const Node& pn = node(p);
      if (has_g[p.id] && pn.requires_grad)
        out[p.id] = std::move(g[p.id]);
      else
        out[p.id] = Array::zeros_like(pn.value);
    }
    return out;
  }

 private:
  std::vector<Node> nodes_;

  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  static Eigen::Map<RowMat> mat(Array& a) {
    return Eigen::Map<RowMat>(a.data(), static_cast<Eigen::Index>(a.rows()),
                              static_cast<Eigen::Index>(a.cols()));
  }
  static Eigen::Map<const RowMat> cmat(const Array& a) {
    return Eigen::Map<const RowMat>(a.data(), static_cast<Eigen::Index>(a.rows()),
                                    static_cast<Eigen::Index>(a.cols()));
  }

  static double sigmoid_val(double v) { return 0.5 * (1.0 + std::tanh(0.5 * v)); }
  static double softplus_val(double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }

  const Node& node(Var x) const {
    if (x.id < 0 || x.id >= static_cast<int>(nodes_.size()))
      throw std::logic_error("invalid Var handle");
    return nodes_[x.id];
  }

  Var push(Node n) {
    int id = static_cast<int>(nodes_.size());
    for (int k = 0; k < 4; ++k)
      if (n.p[k] >= id) throw std::logic_error("tape: parent link would form a cycle");
    nodes_.push_back(std::move(n));
    return Var{id};
  }

  static std::invalid_argument shape_error(Op op, const Array& a, const Array& b) {
    return std::invalid_argument(std::string(op_name(op)) + ": incompatible shapes " +
                                 a.shape_str() + " and " + b.shape_str());
  }

  // Broadcast classification for elementwise binary ops.
  enum class Bcast { same, a_scalar, b_scalar, a_row, b_row };

  static Bcast classify(const Array& a, const Array& b, Op op) {
    if (a.same_shape(b)) return Bcast::same;
    if (a.rank() == 0) return Bcast::a_scalar;
    if (b.rank() == 0) return Bcast::b_scalar;
    if (a.rank() == 1 && b.rank() == 2 && a.rows() == b.cols()) return Bcast::a_row;
    if (b.rank() == 1 && a.rank() == 2 && b.rows() == a.cols()) return Bcast::b_row;
    throw shape_error(op, a, b);
  }

  Var binary(Op op, Var a, Var b) {
    const Array& A = value(a);
    const Array& B = value(b);
    Bcast bc = classify(A, B, op);
    const Array& big = (bc == Bcast::a_scalar || bc == Bcast::a_row) ? B : A;
    Array out = Array::zeros_like(big);
    std::size_t r = row_count(big), w = row_width(big);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t c = 0; c < w; ++c) {
        double av = bval(A, bc == Bcast::a_scalar, bc == Bcast::a_row, i, c);
        double bv = bval(B, bc == Bcast::b_scalar, bc == Bcast::b_row, i, c);
        double o = op == Op::add ? av + bv : (op == Op::sub ? av - bv : av * bv);
        out[i * w + c] = o;
      }
    }
    Node n;
    n.op = op;
    n.value = std::move(out);
    n.p[0] = a.id;
    n.p[1] = b.id;
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(n));
  }

  template <class F>
  Var unary(Op op, Var x, F f) {
    const Array& X = value(x);
    Array out = Array::zeros_like(X);
    for (std::size_t i = 0; i < X.size(); ++i) out[i] = f(X[i]);
    Node n;
    n.op = op;
    n.value = std::move(out);
    n.p[0] = x.id;
    n.requires_grad = node(x).requires_grad;
    return push(std::move(n));
  }

  Var reduction(Op op, Var x, Array out) {
    Node n;
    n.op = op;
    n.value = std::move(out);
    n.p[0] = x.id;
    n.requires_grad = node(x).requires_grad;
    return push(std::move(n));
  }

  // Row/width helpers treating rank-0/1 as a single row.
  static std::size_t row_count(const Array& a) { return a.rank() == 2 ? a.rows() : 1; }
  static std::size_t row_width(const Array& a) {
    return a.rank() == 2 ? a.cols() : (a.rank() == 1 ? a.rows() : 1);
  }
  static double elem(const Array& a, std::size_t r, std::size_t c) {
    return a.rank() == 2 ? a.at(r, c) : a[c];
  }
  static Array row_reduce_shape(const Array& a) {
    return a.rank() == 2 ? Array::zeros(a.rows()) : Array::scalar(0.0);
  }
  static double bval(const Array& a, bool scalar_bc, bool row_bc, std::size_t r, std::size_t c) {
    if (scalar_bc) return a[0];
    if (row_bc) return a[c];
    return a.rank() == 2 ? a.at(r, c) : a[c];
  }

  void ensure(std::vector<Array>& g, std::vector<char>& has_g, int id) const {
    if (!has_g[id]) {
      g[id] = Array::zeros_like(nodes_[id].value);
      has_g[id] = 1;
    }
  }

  // Accumulates a contribution shaped like the output node into a parent,
  // reducing over broadcast dimensions when the parent is smaller.
  void accum(std::vector<Array>& g, std::vector<char>& has_g, int pid, const Array& contrib) const {
    if (pid < 0 || !nodes_[pid].requires_grad) return;
    ensure(g, has_g, pid);
    Array& dst = g[pid];
    if (dst.same_shape(contrib)) {
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += contrib[i];
    } else if (dst.rank() == 0) {
      double s = 0.0;
      for (std::size_t i = 0; i < contrib.size(); ++i) s += contrib[i];
      dst[0] += s;
    } else if (dst.rank() == 1 && contrib.rank() == 2 && dst.rows() == contrib.cols()) {
      for (std::size_t r = 0; r < contrib.rows(); ++r)
        for (std::size_t c = 0; c < contrib.cols(); ++c) dst[c] += contrib.at(r, c);
    } else {
      throw std::logic_error("gradient accumulation shape mismatch");
    }
  }

  void backward_node(int id, std::vector<Array>& g, std::vector<char>& has_g) const {
    const Node& n = nodes_[id];
    const Array& go = g[id];
    switch (n.op) {
      case Op::leaf:
      case Op::stop_grad:
        return;
      case Op::add: {
        accum(g, has_g, n.p[0], go);
        accum(g, has_g, n.p[1], go);
        return;
      }
      case Op::sub: {
        accum(g, has_g, n.p[0], go);
        Array neg = go;
        for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
        accum(g, has_g, n.p[1], neg);
        return;
      }
      case Op::mul: {
        const Array& A = nodes_[n.p[0]].value;
        const Array& B = nodes_[n.p[1]].value;
        Bcast bc = classify(A, B, Op::mul);
        std::size_t r = row_count(n.value), w = row_width(n.value);
        if (nodes_[n.p[0]].requires_grad) {
          Array ca = Array::zeros_like(n.value);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t c = 0; c < w; ++c)
              ca[i * w + c] = go[i * w + c] * bval(B, bc == Bcast::b_scalar, bc == Bcast::b_row, i, c);
          accum(g, has_g, n.p[0], ca);
        }
        if (nodes_[n.p[1]].requires_grad) {
          Array cb = Array::zeros_like(n.value);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t c = 0; c < w; ++c)
              cb[i * w + c] = go[i * w + c] * bval(A, bc == Bcast::a_scalar, bc == Bcast::a_row, i, c);
          accum(g, has_g, n.p[1], cb);
        }
        return;
      }
      case Op::matmul: {
        const Array& A = nodes_[n.p[0]].value;
        const Array& B = nodes_[n.p[1]].value;
        if (nodes_[n.p[0]].requires_grad) {
          ensure(g, has_g, n.p[0]);
          mat(g[n.p[0]]).noalias() += cmat(go) * cmat(B).transpose();
        }
        if (nodes_[n.p[1]].requires_grad) {
          ensure(g, has_g, n.p[1]);
          mat(g[n.p[1]]).noalias() += cmat(A).transpose() * cmat(go);
        }
        return;
      }
      case Op::tanh_fn: {
        Array c = Array::zeros_like(n.value);
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = go[i] * (1.0 - n.value[i] * n.value[i]);
        accum(g, has_g, n.p[0], c);
        return;
      }
      case Op::sigmoid_fn: {
        Array c = Array::zeros_like(n.value);
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = go[i] * n.value[i] * (1.0 - n.value[i]);
        accum(g, has_g, n.p[0], c);
        return;
      }
      case Op::elu_fn: {
        const Array& X = nodes_[n.p[0]].value;
        Array c = Array::zeros_like(n.value);
        for (std::size_t i = 0; i < c.size(); ++i)
          c[i] = go[i] * (X[i] > 0 ? 1.0 : std::exp(X[i]));
        accum(g, has_g, n.p[0], c);
        return;
      }
      case Op::softplus_fn: {
        const Array& X = nodes_[n.p[0]].value;
        Array c = Array::zeros_like(n.value);
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = go[i] * sigmoid_val(X[i]);
        accum(g, has_g, n.p[0], c);
        return;
      }
      case Op::exp_fn: {
        Array c = Array::zeros_like(n.value);
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = go[i] * n.value[i];
        accum(g, has_g, n.p[0], c);
        return;
      }
      case Op::log_fn: {
        const Array& X = nodes_[n.p[0]].value;
        Array c = Array::zeros_like(n.value);
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = go[i] / X[i];
        accum(g, has_g, n.p[0], c);
        return;
      }
      case Op::square_fn: {
        const Array& X = nodes_[n.p[0]].value;
        Array c = Array::zeros_like(n.value);
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = go[i] * 2.0 * X[i];
        accum(g, has_g, n.p[0], c);
        return;
      }
      case Op::sum_all: {
        const Array& X = nodes_[n.p[0]].value;
        Array c = Array::zeros_like(X);
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = go[0];
        accum(g, has_g, n.p[0], c);
        return;
      }
      case Op::mean_all: {
        const Array& X = nodes_[n.p[0]].value;
        double inv = 1.0 / static_cast<double>(X.size());
        Array c = Array::zeros_like(X);
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = go[0] * inv;
        accum(g, has_g, n.p[0], c);
        return;
      }
      case Op::sum_cols: {
        const Array& X = nodes_[n.p[0]].value;
        Array c = Array::zeros_like(X);
        for (std::size_t r = 0; r < row_count(X); ++r)
          for (std::size_t cc = 0; cc < row_width(X); ++cc)
            c[r * row_width(X) + cc] = go[X.rank() == 2 ? r : 0];
        accum(g, has_g, n.p[0], c);
        return;
      }
      case Op::scale_by: {
        Array c = go;
        for (std::size_t i = 0; i < c.size(); ++i) c[i] *= n.c0;
        accum(g, has_g, n.p[0], c);
        return;
      }
      case Op::shift_by: {
        accum(g, has_g, n.p[0], go);
        return;
      }
      case Op::concat_cols_op: {
        const Array& A = nodes_[n.p[0]].value;
        const Array& B = nodes_[n.p[1]].value;
        std::size_t ca = static_cast<std::size_t>(n.i0);
        if (n.value.rank() == 2) {
          if (nodes_[n.p[0]].requires_grad) {
            Array da = Array::zeros_like(A);
            for (std::size_t r = 0; r < A.rows(); ++r)
              for (std::size_t c = 0; c < A.cols(); ++c) da.at(r, c) = go.at(r, c);
            accum(g, has_g, n.p[0], da);
          }
          if (nodes_[n.p[1]].requires_grad) {
            Array db = Array::zeros_like(B);
            for (std::size_t r = 0; r < B.rows(); ++r)
              for (std::size_t c = 0; c < B.cols(); ++c) db.at(r, c) = go.at(r, ca + c);
            accum(g, has_g, n.p[1], db);
          }
        } else {
          if (nodes_[n.p[0]].requires_grad) {
            Array da = Array::zeros_like(A);
            for (std::size_t i = 0; i < A.size(); ++i) da[i] = go[i];
            accum(g, has_g, n.p[0], da);
          }
          if (nodes_[n.p[1]].requires_grad) {
            Array db = Array::zeros_like(B);
            for (std::size_t i = 0; i < B.size(); ++i) db[i] = go[ca + i];
            accum(g, has_g, n.p[1], db);
          }
        }
        return;
      }
      case Op::slice_cols_op: {
        const Array& X = nodes_[n.p[0]].value;
        Array c = Array::zeros_like(X);
        std::size_t start = static_cast<std::size_t>(n.i0);
        std::size_t len = static_cast<std::size_t>(n.i1);
        if (X.rank() == 2) {
          for (std::size_t r = 0; r < X.rows(); ++r)
            for (std::size_t k = 0; k < len; ++k) c.at(r, start + k) = go.at(r, k);
        } else {
          for (std::size_t k = 0; k < len; ++k) c[start + k] = go[k];
        }
        accum(g, has_g, n.p[0], c);
        return;
      }
      case Op::reshape_op: {
        const Array& X = nodes_[n.p[0]].value;
        Array c = go.reshaped(X.rank(), X.rows(), X.rank() == 2 ? X.cols() : 1);
        accum(g, has_g, n.p[0], c);
        return;
      }
      case Op::gauss_sample: {
        accum(g, has_g, n.p[0], go);
        if (nodes_[n.p[1]].requires_grad) {
          Array c = go;
          for (std::size_t i = 0; i < c.size(); ++i) c[i] *= n.aux[i];
          accum(g, has_g, n.p[1], c);
        }
        return;
      }
      case Op::gauss_logp: {
        const Array& X = nodes_[n.p[0]].value;
        const Array& M = nodes_[n.p[1]].value;
        const Array& S = nodes_[n.p[2]].value;
        std::size_t rr = row_count(X), w = row_width(X);
        Array dx = Array::zeros_like(X), dm = Array::zeros_like(X), ds = Array::zeros_like(X);
        for (std::size_t r = 0; r < rr; ++r) {
          double gr = go[X.rank() == 2 ? r : 0];
          for (std::size_t c = 0; c < w; ++c) {
            double mu = elem(M, r, c), sd = elem(S, r, c), xv = elem(X, r, c);
            double z = (xv - mu) / sd;
            dx[r * w + c] = gr * (-z / sd);
            dm[r * w + c] = gr * (z / sd);
            ds[r * w + c] = gr * ((z * z - 1.0) / sd);
          }
        }
        accum(g, has_g, n.p[0], dx);
        accum(g, has_g, n.p[1], dm);
        accum(g, has_g, n.p[2], ds);
        return;
      }
      case Op::gauss_kl: {
        const Array& MQ = nodes_[n.p[0]].value;
        const Array& SQ = nodes_[n.p[1]].value;
        const Array& MP = nodes_[n.p[2]].value;
        const Array& SP = nodes_[n.p[3]].value;
        std::size_t rr = row_count(MQ), w = row_width(MQ);
        Array dmq = Array::zeros_like(MQ), dsq = Array::zeros_like(MQ);
        Array dmp = Array::zeros_like(MQ), dsp = Array::zeros_like(MQ);
        for (std::size_t r = 0; r < rr; ++r) {
          double gr = go[MQ.rank() == 2 ? r : 0];
          for (std::size_t c = 0; c < w; ++c) {
            double m1 = elem(MQ, r, c), s1 = elem(SQ, r, c);
            double m0 = elem(MP, r, c), s0 = elem(SP, r, c);
            double d = m1 - m0;
            dmq[r * w + c] = gr * (d / (s0 * s0));
            dmp[r * w + c] = gr * (-d / (s0 * s0));
            dsq[r * w + c] = gr * (-1.0 / s1 + s1 / (s0 * s0));
            dsp[r * w + c] = gr * (1.0 / s0 - (s1 * s1 + d * d) / (s0 * s0 * s0));
          }
        }
        accum(g, has_g, n.p[0], dmq);
        accum(g, has_g, n.p[1], dsq);
        accum(g, has_g, n.p[2], dmp);
        accum(g, has_g, n.p[3], dsp);
        return;
      }
    }
  }
};

}  // namespace bird

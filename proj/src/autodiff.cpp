#include "natpn/autodiff.hpp"

#include <cmath>

#include "natpn/special.hpp"

namespace natpn {
namespace ad {

Node Tape::leaf(const Tensor& v) {
  records_.push_back(Record{v, Tensor(), nullptr});
  return Node{this, static_cast<int>(records_.size() - 1)};
}

Node Tape::emit(Tensor value, BackFn back) {
  records_.push_back(Record{std::move(value), Tensor(), std::move(back)});
  return Node{this, static_cast<int>(records_.size() - 1)};
}

Tensor Tape::grad(Node n) const {
  const Record& r = records_[n.idx];
  if (r.grad.empty()) return Tensor::zeros(r.value.shape());
  return r.grad;
}

void Tape::accum(int idx, const Tensor& g) {
  Record& r = records_[idx];
  if (!r.value.same_shape(g))
    throw dim_error("Tape::accum: gradient shape " + Tensor::shape_str(g.shape()) +
                    " does not match value shape " + Tensor::shape_str(r.value.shape()));
  if (r.grad.empty()) {
    r.grad = g.clone();
  } else {
    double* dst = r.grad.data();
    const double* src = g.data();
    for (int64_t i = 0; i < g.size(); ++i) dst[i] += src[i];
  }
}

void Tape::backward(Node root) {
  if (root.tape != this) throw contract_error("backward: node from another tape");
  if (records_[root.idx].value.size() != 1)
    throw contract_error("backward: root must be scalar");
  for (auto& r : records_) r.grad = Tensor();
  records_[root.idx].grad = Tensor::full(records_[root.idx].value.shape(), 1.0);
  for (int i = root.idx; i >= 0; --i) {
    Record& r = records_[i];
    if (r.grad.empty() || !r.back) continue;
    r.back(*this, r.grad);
  }
}

namespace {

enum class BinOp { Add, Sub, Mul, Div };

struct Bcast {
  int64_t rows, cols;   // output shape
  bool a_scalar, b_scalar, a_row, b_row, a_col, b_col;
};

Bcast plan(const Tensor& a, const Tensor& b, const char* opname) {
  Bcast p{};
  int64_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  p.a_scalar = (ar == 1 && ac == 1);
  p.b_scalar = (br == 1 && bc == 1);
  if (a.same_shape(b) || p.a_scalar || p.b_scalar) {
    p.rows = std::max(ar, br);
    p.cols = std::max(ac, bc);
    if (p.a_scalar && !p.b_scalar) { p.rows = br; p.cols = bc; }
    if (p.b_scalar && !p.a_scalar) { p.rows = ar; p.cols = ac; }
    return p;
  }
  if (ar == 1 && ac == bc) { p.a_row = true; p.rows = br; p.cols = bc; return p; }
  if (br == 1 && bc == ac) { p.b_row = true; p.rows = ar; p.cols = ac; return p; }
  if (ac == 1 && ar == br) { p.a_col = true; p.rows = br; p.cols = bc; return p; }
  if (bc == 1 && br == ar) { p.b_col = true; p.rows = ar; p.cols = ac; return p; }
  throw dim_error(std::string(opname) + ": incompatible shapes " +
                  Tensor::shape_str(a.shape()) + " and " + Tensor::shape_str(b.shape()));
}

inline int64_t bidx(const Bcast& p, bool scalar, bool row, bool col, int64_t r, int64_t c) {
  if (scalar) return 0;
  if (row) return c;
  if (col) return r;
  return r * p.cols + c;
}

// Sum the full-shape gradient down to the (possibly broadcast) operand shape.
Tensor reduce_to(const Tensor& g, const Tensor& operand) {
  if (g.same_shape(operand)) return g.clone();
  Tensor out = Tensor::zeros(operand.shape());
  int64_t orows = operand.rows(), ocols = operand.cols();
  for (int64_t r = 0; r < g.rows(); ++r)
    for (int64_t c = 0; c < g.cols(); ++c) {
      int64_t rr = orows == 1 ? 0 : r;
      int64_t cc = ocols == 1 ? 0 : c;
      out.at(rr, cc) += g.at(r, c);
    }
  return out;
}

Node binary(Node a, Node b, BinOp op, const char* name) {
  if (a.tape != b.tape) throw contract_error("binary op: nodes from different tapes");
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  Bcast p = plan(av, bv, name);
  Tensor out({p.rows, p.cols});
  for (int64_t r = 0; r < p.rows; ++r)
    for (int64_t c = 0; c < p.cols; ++c) {
      double x = av.at(bidx(p, p.a_scalar && !(av.rows() == p.rows && av.cols() == p.cols),
                            p.a_row, p.a_col, r, c));
      double y = bv.at(bidx(p, p.b_scalar && !(bv.rows() == p.rows && bv.cols() == p.cols),
                            p.b_row, p.b_col, r, c));
      double v;
      switch (op) {
        case BinOp::Add: v = x + y; break;
        case BinOp::Sub: v = x - y; break;
        case BinOp::Mul: v = x * y; break;
        case BinOp::Div:
          if (y == 0.0) throw domain_error("div: division by zero");
          v = x / y;
          break;
      }
      out.at(r, c) = v;
    }
  int ai = a.idx, bi = b.idx;
  return t.emit(out, [ai, bi, av, bv, op](Tape& tp, const Tensor& g) {
    Tensor ga({g.rows(), g.cols()});
    Tensor gb({g.rows(), g.cols()});
    Bcast p2 = plan(av, bv, "binary-back");
    for (int64_t r = 0; r < g.rows(); ++r)
      for (int64_t c = 0; c < g.cols(); ++c) {
        double gg = g.at(r, c);
        double x = av.at(bidx(p2, p2.a_scalar && !(av.rows() == g.rows() && av.cols() == g.cols()),
                              p2.a_row, p2.a_col, r, c));
        double y = bv.at(bidx(p2, p2.b_scalar && !(bv.rows() == g.rows() && bv.cols() == g.cols()),
                              p2.b_row, p2.b_col, r, c));
        switch (op) {
          case BinOp::Add: ga.at(r, c) = gg; gb.at(r, c) = gg; break;
          case BinOp::Sub: ga.at(r, c) = gg; gb.at(r, c) = -gg; break;
          case BinOp::Mul: ga.at(r, c) = gg * y; gb.at(r, c) = gg * x; break;
          case BinOp::Div: ga.at(r, c) = gg / y; gb.at(r, c) = -gg * x / (y * y); break;
        }
      }
    tp.accum(ai, reduce_to(ga, av));
    tp.accum(bi, reduce_to(gb, bv));
  });
}

}  // namespace

Node add(Node a, Node b) { return binary(a, b, BinOp::Add, "add"); }
Node sub(Node a, Node b) { return binary(a, b, BinOp::Sub, "sub"); }
Node mul(Node a, Node b) { return binary(a, b, BinOp::Mul, "mul"); }
Node div(Node a, Node b) { return binary(a, b, BinOp::Div, "div"); }

Node affine_const(Node a, double k, double m) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  Tensor out(av.shape());
  for (int64_t i = 0; i < av.size(); ++i) out.at(i) = k * av.at(i) + m;
  int ai = a.idx;
  return t.emit(out, [ai, k](Tape& tp, const Tensor& g) {
    Tensor ga(g.shape());
    for (int64_t i = 0; i < g.size(); ++i) ga.at(i) = k * g.at(i);
    tp.accum(ai, ga);
  });
}

namespace {

using kernels::Unary;

void check_domain(Unary op, const Tensor& v) {
  if (op == Unary::Log || op == Unary::Lgamma || op == Unary::Digamma) {
    for (int64_t i = 0; i < v.size(); ++i)
      if (!(v.at(i) > 0.0)) throw domain_error("unary op: requires strictly positive input");
  } else if (op == Unary::Sqrt) {
    for (int64_t i = 0; i < v.size(); ++i)
      if (v.at(i) < 0.0) throw domain_error("sqrt: requires non-negative input");
  }
}

Node unary(Node a, Unary op) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  check_domain(op, av);
  Tensor out(av.shape());
  kernels::map_unary(op, av.data(), out.data(), av.size());
  int ai = a.idx;
  // Derivatives that need the output value capture it; the rest use input.
  Tensor ov = out;
  return t.emit(out, [ai, av, ov, op](Tape& tp, const Tensor& g) {
    Tensor ga(g.shape());
    for (int64_t i = 0; i < g.size(); ++i) {
      double x = av.at(i), d = 0.0;
      switch (op) {
        case Unary::Neg: d = -1.0; break;
        case Unary::Exp: d = ov.at(i); break;
        case Unary::Log: d = 1.0 / x; break;
        case Unary::Sqrt: d = 0.5 / ov.at(i); break;
        case Unary::Square: d = 2.0 * x; break;
        case Unary::Tanh: d = 1.0 - ov.at(i) * ov.at(i); break;
        case Unary::Softplus: d = 1.0 / (1.0 + std::exp(-x)); break;
        case Unary::LeakyRelu: d = x >= 0.0 ? 1.0 : 0.01; break;
        case Unary::Lgamma: d = digamma_impl(x); break;
        case Unary::Digamma: d = trigamma_impl(x); break;
        case Unary::Trigamma: throw contract_error("trigamma has no registered derivative");
      }
      ga.at(i) = g.at(i) * d;
    }
    tp.accum(ai, ga);
  });
}

}  // namespace

Node exp(Node a) { return unary(a, Unary::Exp); }
Node log(Node a) { return unary(a, Unary::Log); }
Node sqrt(Node a) { return unary(a, Unary::Sqrt); }
Node square(Node a) { return unary(a, Unary::Square); }
Node tanh(Node a) { return unary(a, Unary::Tanh); }
Node softplus(Node a) { return unary(a, Unary::Softplus); }
Node leaky_relu(Node a) { return unary(a, Unary::LeakyRelu); }
Node lgamma(Node a) { return unary(a, Unary::Lgamma); }
Node digamma(Node a) { return unary(a, Unary::Digamma); }

Node min_const(Node a, double c) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  Tensor out(av.shape());
  for (int64_t i = 0; i < av.size(); ++i) out.at(i) = std::min(av.at(i), c);
  int ai = a.idx;
  return t.emit(out, [ai, av, c](Tape& tp, const Tensor& g) {
    Tensor ga(g.shape());
    for (int64_t i = 0; i < g.size(); ++i) ga.at(i) = av.at(i) < c ? g.at(i) : 0.0;
    tp.accum(ai, ga);
  });
}

Node max_const(Node a, double c) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  Tensor out(av.shape());
  for (int64_t i = 0; i < av.size(); ++i) out.at(i) = std::max(av.at(i), c);
  int ai = a.idx;
  return t.emit(out, [ai, av, c](Tape& tp, const Tensor& g) {
    Tensor ga(g.shape());
    for (int64_t i = 0; i < g.size(); ++i) ga.at(i) = av.at(i) > c ? g.at(i) : 0.0;
    tp.accum(ai, ga);
  });
}

Node where(const Tensor& mask, Node a, Node b) {
  if (a.tape != b.tape) throw contract_error("where: nodes from different tapes");
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (!av.same_shape(bv) || !av.same_shape(mask))
    throw dim_error("where: mask and branches must share one shape");
  Tensor out(av.shape());
  for (int64_t i = 0; i < av.size(); ++i) out.at(i) = mask.at(i) != 0.0 ? av.at(i) : bv.at(i);
  int ai = a.idx, bi = b.idx;
  return t.emit(out, [ai, bi, mask](Tape& tp, const Tensor& g) {
    Tensor ga(g.shape()), gb(g.shape());
    for (int64_t i = 0; i < g.size(); ++i) {
      ga.at(i) = mask.at(i) != 0.0 ? g.at(i) : 0.0;
      gb.at(i) = mask.at(i) != 0.0 ? 0.0 : g.at(i);
    }
    tp.accum(ai, ga);
    tp.accum(bi, gb);
  });
}

Node matmul(Node a, Node b) {
  if (a.tape != b.tape) throw contract_error("matmul: nodes from different tapes");
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.cols() != bv.rows())
    throw dim_error("matmul: inner dimensions differ, " + Tensor::shape_str(av.shape()) +
                    " x " + Tensor::shape_str(bv.shape()));
  int64_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out({m, n});
  kernels::matmul(av.data(), bv.data(), out.data(), m, k, n);
  int ai = a.idx, bi = b.idx;
  return t.emit(out, [ai, bi, av, bv, m, k, n](Tape& tp, const Tensor& g) {
    Tensor ga({m, k}), gb({k, n});
    kernels::matmul_bt(g.data(), bv.data(), ga.data(), m, n, k);
    kernels::matmul_at(av.data(), g.data(), gb.data(), m, k, n);
    tp.accum(ai, ga);
    tp.accum(bi, gb);
  });
}

Node sum(Node a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  Tensor out = Tensor::scalar(kernels::sum(av.data(), av.size()));
  int ai = a.idx;
  return t.emit(out, [ai, av](Tape& tp, const Tensor& g) {
    tp.accum(ai, Tensor::full(av.shape(), g.item()));
  });
}

Node mean(Node a) {
  const Tensor& av = a.tape->value(a);
  if (av.size() == 0) throw contract_error("mean: empty tensor");
  return mul_const(sum(a), 1.0 / static_cast<double>(av.size()));
}

Node rowsum(Node a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  int64_t r = av.rows(), c = av.cols();
  Tensor out({r, 1});
  for (int64_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (int64_t j = 0; j < c; ++j) acc += av.at(i, j);
    out.at(i, 0) = acc;
  }
  int ai = a.idx;
  return t.emit(out, [ai, r, c](Tape& tp, const Tensor& g) {
    Tensor ga({r, c});
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) ga.at(i, j) = g.at(i, 0);
    tp.accum(ai, ga);
  });
}

Node softmax(Node a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  int64_t r = av.rows(), c = av.cols();
  Tensor out({r, c});
  for (int64_t i = 0; i < r; ++i) {
    double mx = av.at(i, 0);
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, av.at(i, j));
    double z = 0.0;
    for (int64_t j = 0; j < c; ++j) z += std::exp(av.at(i, j) - mx);
    for (int64_t j = 0; j < c; ++j) out.at(i, j) = std::exp(av.at(i, j) - mx) / z;
  }
  int ai = a.idx;
  Tensor ov = out;
  return t.emit(out, [ai, ov, r, c](Tape& tp, const Tensor& g) {
    Tensor ga({r, c});
    for (int64_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (int64_t j = 0; j < c; ++j) dot += g.at(i, j) * ov.at(i, j);
      for (int64_t j = 0; j < c; ++j) ga.at(i, j) = ov.at(i, j) * (g.at(i, j) - dot);
    }
    tp.accum(ai, ga);
  });
}

Node concat_cols(Node a, Node b) {
  if (a.tape != b.tape) throw contract_error("concat_cols: nodes from different tapes");
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.rows() != bv.rows()) throw dim_error("concat_cols: row counts differ");
  int64_t r = av.rows(), ca = av.cols(), cb = bv.cols();
  Tensor out({r, ca + cb});
  for (int64_t i = 0; i < r; ++i) {
    for (int64_t j = 0; j < ca; ++j) out.at(i, j) = av.at(i, j);
    for (int64_t j = 0; j < cb; ++j) out.at(i, ca + j) = bv.at(i, j);
  }
  int ai = a.idx, bi = b.idx;
  return t.emit(out, [ai, bi, r, ca, cb](Tape& tp, const Tensor& g) {
    Tensor ga({r, ca}), gb({r, cb});
    for (int64_t i = 0; i < r; ++i) {
      for (int64_t j = 0; j < ca; ++j) ga.at(i, j) = g.at(i, j);
      for (int64_t j = 0; j < cb; ++j) gb.at(i, j) = g.at(i, ca + j);
    }
    tp.accum(ai, ga);
    tp.accum(bi, gb);
  });
}

Node slice_cols(Node a, int64_t c0, int64_t c1) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  if (c0 < 0 || c1 > av.cols() || c0 >= c1)
    throw contract_error("slice_cols: bad column range");
  int64_t r = av.rows(), c = av.cols(), w = c1 - c0;
  Tensor out({r, w});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < w; ++j) out.at(i, j) = av.at(i, c0 + j);
  int ai = a.idx;
  return t.emit(out, [ai, r, c, c0, w](Tape& tp, const Tensor& g) {
    Tensor ga({r, c});
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < w; ++j) ga.at(i, c0 + j) = g.at(i, j);
    tp.accum(ai, ga);
  });
}

}  // namespace ad
}  // namespace natpn

#include "lgv/autodiff/ops.hpp"

#include "lgv/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lgv::ad {
namespace {

Index broadcast_dim(Index a, Index b, const char* what) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw std::invalid_argument(std::string("incompatible shapes in ") + what + ": " +
                              std::to_string(a) + " vs " + std::to_string(b));
}

Matrix expand(const Matrix& m, Index r, Index c) {
  if (m.rows() == r && m.cols() == c) return m;
  if (m.rows() == 1 && m.cols() == 1) return Matrix::Constant(r, c, m(0, 0));
  if (m.rows() == 1) return m.replicate(r, 1);
  return m.replicate(1, c);
}

Matrix reduce_to(const Matrix& g, Index r, Index c) {
  if (g.rows() == r && g.cols() == c) return g;
  if (r == 1 && c == 1) return Matrix::Constant(1, 1, g.sum());
  if (r == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

template <typename F, typename D>
Var unary(Var a, F forward, D derivative) {
  Tape& t = a.tape();
  Matrix out = a.value().unaryExpr(forward);
  const int ia = a.id();
  return t.record(std::move(out), {a}, [ia, derivative](Tape& tp, int self) {
    const Matrix& x = tp.value(ia);
    const Matrix& y = tp.value(self);
    Matrix d(x.rows(), x.cols());
    for (Index i = 0; i < x.size(); ++i) d.data()[i] = derivative(x.data()[i], y.data()[i]);
    tp.accumulate(ia, tp.grad(self).cwiseProduct(d));
  });
}

}  // namespace

Var add(Var a, Var b) {
  Tape& t = a.tape();
  const Index r = broadcast_dim(a.rows(), b.rows(), "add");
  const Index c = broadcast_dim(a.cols(), b.cols(), "add");
  Matrix out = expand(a.value(), r, c) + expand(b.value(), r, c);
  const int ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    tp.accumulate(ia, reduce_to(g, tp.value(ia).rows(), tp.value(ia).cols()));
    tp.accumulate(ib, reduce_to(g, tp.value(ib).rows(), tp.value(ib).cols()));
  });
}

Var sub(Var a, Var b) {
  Tape& t = a.tape();
  const Index r = broadcast_dim(a.rows(), b.rows(), "sub");
  const Index c = broadcast_dim(a.cols(), b.cols(), "sub");
  Matrix out = expand(a.value(), r, c) - expand(b.value(), r, c);
  const int ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    tp.accumulate(ia, reduce_to(g, tp.value(ia).rows(), tp.value(ia).cols()));
    tp.accumulate(ib, -reduce_to(g, tp.value(ib).rows(), tp.value(ib).cols()));
  });
}

Var mul(Var a, Var b) {
  Tape& t = a.tape();
  const Index r = broadcast_dim(a.rows(), b.rows(), "mul");
  const Index c = broadcast_dim(a.cols(), b.cols(), "mul");
  Matrix out = expand(a.value(), r, c).cwiseProduct(expand(b.value(), r, c));
  const int ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib, r, c](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    const Matrix& va = tp.value(ia);
    const Matrix& vb = tp.value(ib);
    if (tp.requires_grad(ia)) {
      tp.accumulate(ia, reduce_to(g.cwiseProduct(expand(vb, r, c)), va.rows(), va.cols()));
    }
    if (tp.requires_grad(ib)) {
      tp.accumulate(ib, reduce_to(g.cwiseProduct(expand(va, r, c)), vb.rows(), vb.cols()));
    }
  });
}

Var div(Var a, Var b) {
  Tape& t = a.tape();
  const Index r = broadcast_dim(a.rows(), b.rows(), "div");
  const Index c = broadcast_dim(a.cols(), b.cols(), "div");
  Matrix out = expand(a.value(), r, c).cwiseQuotient(expand(b.value(), r, c));
  const int ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib, r, c](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    const Matrix& va = tp.value(ia);
    const Matrix& vb = tp.value(ib);
    const Matrix eb = expand(vb, r, c);
    if (tp.requires_grad(ia)) tp.accumulate(ia, reduce_to(g.cwiseQuotient(eb), va.rows(), va.cols()));
    if (tp.requires_grad(ib)) {
      const Matrix& y = tp.value(self);
      tp.accumulate(ib, reduce_to(-g.cwiseProduct(y).cwiseQuotient(eb), vb.rows(), vb.cols()));
    }
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
  Tape& t = a.tape();
  const int ia = a.id();
  return t.record(a.value() * s, {a}, [ia, s](Tape& tp, int self) { tp.accumulate(ia, tp.grad(self) * s); });
}

Var shift(Var a, double s) {
  Tape& t = a.tape();
  const int ia = a.id();
  return t.record(a.value().array() + s, {a}, [ia](Tape& tp, int self) { tp.accumulate(ia, tp.grad(self)); });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " . " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Tape& t = a.tape();
  Matrix out = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

Var transpose(Var a) {
  Tape& t = a.tape();
  const int ia = a.id();
  return t.record(a.value().transpose(), {a},
                  [ia](Tape& tp, int self) { tp.accumulate(ia, tp.grad(self).transpose()); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
  return unary(
      a, [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(Var a) {
  return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sin(Var a) {
  return unary(a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Var cos(Var a) {
  return unary(a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Var sum(Var a) {
  Tape& t = a.tape();
  const int ia = a.id();
  return t.record(Matrix::Constant(1, 1, a.value().sum()), {a}, [ia](Tape& tp, int self) {
    const Matrix& x = tp.value(ia);
    tp.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), tp.grad(self)(0, 0)));
  });
}

Var row_sum(Var a) {
  Tape& t = a.tape();
  const int ia = a.id();
  Matrix out = a.value().rowwise().sum();
  return t.record(std::move(out), {a}, [ia](Tape& tp, int self) {
    tp.accumulate(ia, tp.grad(self).replicate(1, tp.value(ia).cols()));
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var slice_cols(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::out_of_range("slice_cols");
  Tape& t = a.tape();
  const int ia = a.id();
  Matrix out = a.value().middleCols(start, count);
  return t.record(std::move(out), {a}, [ia, start, count](Tape& tp, int self) {
    const Matrix& x = tp.value(ia);
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    g.middleCols(start, count) = tp.grad(self);
    tp.accumulate(ia, g);
  });
}

Var col(Var a, Index c) { return slice_cols(a, c, 1); }

Var hcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("hcat of nothing");
  Tape& t = parts.front().tape();
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("hcat: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Index> offsets;
  Index off = 0;
  for (const Var& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.cols();
  }
  return t.record(std::move(out), parts, [ids, offsets](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!tp.requires_grad(ids[i])) continue;
      tp.accumulate(ids[i], g.middleCols(offsets[i], tp.value(ids[i]).cols()));
    }
  });
}

Var slice_rows(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw std::out_of_range("slice_rows");
  Tape& t = a.tape();
  const int ia = a.id();
  Matrix out = a.value().middleRows(start, count);
  return t.record(std::move(out), {a}, [ia, start, count](Tape& tp, int self) {
    const Matrix& x = tp.value(ia);
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    g.middleRows(start, count) = tp.grad(self);
    tp.accumulate(ia, g);
  });
}

Var vcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("vcat of nothing");
  Tape& t = parts.front().tape();
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("vcat: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Index> offsets;
  Index off = 0;
  for (const Var& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.rows();
  }
  return t.record(std::move(out), parts, [ids, offsets](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!tp.requires_grad(ids[i])) continue;
      tp.accumulate(ids[i], g.middleRows(offsets[i], tp.value(ids[i]).rows()));
    }
  });
}

Var repeat_rows(Var a, Index rows) {
  if (a.rows() != 1) throw std::invalid_argument("repeat_rows expects a single row");
  Tape& t = a.tape();
  const int ia = a.id();
  return t.record(a.value().replicate(rows, 1), {a},
                  [ia](Tape& tp, int self) { tp.accumulate(ia, tp.grad(self).colwise().sum()); });
}

namespace {

using Small = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const Small> row_as(const Matrix& m, Index row, Index r, Index c) {
  return {m.row(row).data(), r, c};
}

}  // namespace

Var bmm(Var a, Var b, Index r, Index k, Index c) {
  if (a.cols() != r * k || b.cols() != k * c || a.rows() != b.rows()) {
    throw std::invalid_argument("bmm: shape mismatch");
  }
  Tape& t = a.tape();
  const Index batch = a.rows();
  Matrix out(batch, r * c);
  for (Index i = 0; i < batch; ++i) {
    Eigen::Map<Small>(out.row(i).data(), r, c).noalias() = row_as(a.value(), i, r, k) * row_as(b.value(), i, k, c);
  }
  const int ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib, r, k, c, batch](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    const Matrix& va = tp.value(ia);
    const Matrix& vb = tp.value(ib);
    const bool ga = tp.requires_grad(ia), gb = tp.requires_grad(ib);
    Matrix da = ga ? Matrix(batch, r * k) : Matrix();
    Matrix db = gb ? Matrix(batch, k * c) : Matrix();
    for (Index i = 0; i < batch; ++i) {
      auto gi = row_as(g, i, r, c);
      if (ga) Eigen::Map<Small>(da.row(i).data(), r, k).noalias() = gi * row_as(vb, i, k, c).transpose();
      if (gb) Eigen::Map<Small>(db.row(i).data(), k, c).noalias() = row_as(va, i, r, k).transpose() * gi;
    }
    if (ga) tp.accumulate(ia, da);
    if (gb) tp.accumulate(ib, db);
  });
}

Var bmv(Var a, Var v, Index r, Index c) { return bmm(a, v, r, c, 1); }

Var btranspose(Var a, Index r, Index c) {
  if (a.cols() != r * c) throw std::invalid_argument("btranspose: shape mismatch");
  Tape& t = a.tape();
  const Index batch = a.rows();
  Matrix out(batch, r * c);
  for (Index i = 0; i < batch; ++i) {
    Eigen::Map<Small>(out.row(i).data(), c, r) = row_as(a.value(), i, r, c).transpose();
  }
  const int ia = a.id();
  return t.record(std::move(out), {a}, [ia, r, c, batch](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    Matrix d(batch, r * c);
    for (Index i = 0; i < batch; ++i) {
      Eigen::Map<Small>(d.row(i).data(), r, c) = row_as(g, i, c, r).transpose();
    }
    tp.accumulate(ia, d);
  });
}

Var bsolve(Var m, Var b, double max_condition) {
  const Index n = b.cols();
  if (m.cols() != n * n || m.rows() != b.rows()) throw std::invalid_argument("bsolve: shape mismatch");
  Tape& t = m.tape();
  const Index batch = b.rows();
  Matrix out(batch, n);
  for (Index i = 0; i < batch; ++i) {
    const Small mi = row_as(m.value(), i, n, n);
    Eigen::JacobiSVD<Small> svd(mi);
    const auto& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    if (!(smin > 0.0) || sv(0) / smin > max_condition) {
      throw SingularMassError("mass matrix is singular or ill-conditioned (cond " +
                              std::to_string(smin > 0.0 ? sv(0) / smin : INFINITY) + ")");
    }
    out.row(i) = mi.partialPivLu().solve(b.value().row(i).transpose()).transpose();
  }
  const int im = m.id(), ib = b.id();
  return t.record(std::move(out), {m, b}, [im, ib, n, batch](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    const Matrix& x = tp.value(self);
    Matrix db(batch, n);
    for (Index i = 0; i < batch; ++i) {
      const Small mi = row_as(tp.value(im), i, n, n);
      db.row(i) = mi.transpose().partialPivLu().solve(g.row(i).transpose()).transpose();
    }
    if (tp.requires_grad(im)) {
      Matrix dm(batch, n * n);
      for (Index i = 0; i < batch; ++i) {
        Eigen::Map<Small>(dm.row(i).data(), n, n).noalias() = -db.row(i).transpose() * x.row(i);
      }
      tp.accumulate(im, dm);
    }
    tp.accumulate(ib, db);
  });
}

}  // namespace lgv::ad

#include "dcpr/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dcpr/error.hpp"

namespace dcpr {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  Matrix m(1, values.size());
  std::copy(values.begin(), values.end(), m.data_.begin());
  return m;
}

std::string Matrix::shape() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + a.shape() + " by " + b.shape());
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix row_softmax(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto in = a.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (double& v : o) v /= total;
  }
  return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("add: " + a.shape() + " vs " + b.shape());
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("subtract: " + a.shape() + " vs " + b.shape());
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("dot: lengths " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

void round_to_float(Matrix& m) {
  for (double& v : m.values()) v = static_cast<double>(static_cast<float>(v));
}

// ---------------------------------------------------------------------------
// Random streams

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view stage, std::uint64_t job) {
  // FNV-1a over the stage label keeps the mapping independent of std::hash.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : stage) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return mix64(mix64(base ^ h) ^ mix64(job + 0x51ed270b27f1a3c5ULL));
}

std::uint64_t Rng::next_u64() {
  return mix64(seed_ * 0xd1342543de82ef95ULL + 0x9e3779b97f4a7c15ULL * ++counter_);
}

double Rng::uniform() {
  // 53 random bits, shifted off zero.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw InvalidArgument("Rng::below(0)");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Rng Rng::fork(std::uint64_t stream) const { return Rng(mix64(seed_ ^ mix64(stream + 1))); }

Matrix sample_gaussian(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

// ---------------------------------------------------------------------------
// Tape

Tape::Var Tape::push(Matrix value, bool requires_grad,
                     std::function<void(Tape&, std::size_t)> back) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Tape::Var Tape::param(const Matrix& value) {
  Node n;
  n.external = &value;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Tape::Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

const Matrix& Tape::value(Var v) const { return nodes_.at(v.id).value(); }

Matrix& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value().empty()) {
    n.grad = Matrix(n.value().rows(), n.value().cols());
  }
  return n.grad;
}

const Matrix& Tape::grad(Var v) { return grad_buffer(v.id); }

Tape::Var Tape::matmul(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  Matrix out = dcpr::matmul(av, bv);
  const bool rg = requires_grad(a) || requires_grad(b);
  return push(std::move(out), rg, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    if (t.requires_grad(a)) {
      Matrix& ga = t.grad_buffer(a.id);
      // ga += g * b^T
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t k = 0; k < av.cols(); ++k) {
          double s = 0.0;
          for (std::size_t j = 0; j < g.cols(); ++j) s += g(i, j) * bv(k, j);
          ga(i, k) += s;
        }
    }
    if (t.requires_grad(b)) {
      Matrix& gb = t.grad_buffer(b.id);
      // gb += a^T * g
      for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t k = 0; k < av.cols(); ++k) {
          const double aik = av(i, k);
          if (aik == 0.0) continue;
          for (std::size_t j = 0; j < g.cols(); ++j) gb(k, j) += aik * g(i, j);
        }
    }
  });
}

Tape::Var Tape::matmul_nt(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  if (av.cols() != bv.cols()) {
    throw ShapeError("matmul_nt: cannot multiply " + av.shape() + " by transpose of " +
                     bv.shape());
  }
  Matrix out(av.rows(), bv.rows());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < bv.rows(); ++j) out(i, j) = dot(av.row(i), bv.row(j));
  const bool rg = requires_grad(a) || requires_grad(b);
  return push(std::move(out), rg, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    if (t.requires_grad(a)) {
      Matrix& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) {
          const double gij = g(i, j);
          if (gij == 0.0) continue;
          for (std::size_t k = 0; k < av.cols(); ++k) ga(i, k) += gij * bv(j, k);
        }
    }
    if (t.requires_grad(b)) {
      Matrix& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) {
          const double gij = g(i, j);
          if (gij == 0.0) continue;
          for (std::size_t k = 0; k < av.cols(); ++k) gb(j, k) += gij * av(i, k);
        }
    }
  });
}

Tape::Var Tape::add(Var a, Var b) {
  Matrix out = value(a) + value(b);
  const bool rg = requires_grad(a) || requires_grad(b);
  return push(std::move(out), rg, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    for (Var v : {a, b}) {
      if (!t.requires_grad(v)) continue;
      Matrix& gv = t.grad_buffer(v.id);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

Tape::Var Tape::add_row(Var a, Var row) {
  const Matrix& av = value(a);
  const Matrix& rv = value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw ShapeError("add_row: row " + rv.shape() + " does not broadcast over " + av.shape());
  }
  Matrix out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += rv(0, j);
  const bool rg = requires_grad(a) || requires_grad(row);
  return push(std::move(out), rg, [a, row](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.requires_grad(a)) {
      Matrix& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(row)) {
      Matrix& gr = t.grad_buffer(row.id);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
    }
  });
}

Tape::Var Tape::scale(Var a, double s) {
  Matrix out = s * value(a);
  return push(std::move(out), requires_grad(a), [a, s](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    Matrix& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Tape::Var Tape::mul_const(Var a, const Matrix& c) {
  const Matrix& av = value(a);
  if (!av.same_shape(c)) throw ShapeError("mul_const: " + av.shape() + " vs " + c.shape());
  Matrix out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  return push(std::move(out), requires_grad(a), [a, c](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    Matrix& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c[i] * g[i];
  });
}

Tape::Var Tape::scalar_times(Var s, const Matrix& c) {
  const Matrix& sv = value(s);
  if (sv.size() != 1) throw ShapeError("scalar_times: expected 1x1, got " + sv.shape());
  Matrix out = sv[0] * c;
  return push(std::move(out), requires_grad(s), [s, c](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * c[i];
    t.grad_buffer(s.id)[0] += acc;
  });
}

Tape::Var Tape::row_softmax(Var a) {
  Matrix out = dcpr::row_softmax(value(a));
  return push(std::move(out), requires_grad(a), [a](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& y = t.nodes_[self].value();
    Matrix& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      const double inner = dot(g.row(i), y.row(i));
      for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) += y(i, j) * (g(i, j) - inner);
    }
  });
}

Tape::Var Tape::column_sum(Var a) {
  const Matrix& av = value(a);
  Matrix out(1, av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(0, j) += av(i, j);
  return push(std::move(out), requires_grad(a), [a](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    Matrix& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(0, j);
  });
}

Tape::Var Tape::sum(Var a) {
  double s = 0.0;
  for (double v : value(a).values()) s += v;
  return push(Matrix(1, 1, s), requires_grad(a), [a](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad[0];
    for (double& v : t.grad_buffer(a.id).values()) v += g;
  });
}

Tape::Var Tape::weighted_sum(Var a, const Matrix& w) {
  const Matrix& av = value(a);
  if (!av.same_shape(w)) throw ShapeError("weighted_sum: " + av.shape() + " vs " + w.shape());
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * w[i];
  return push(Matrix(1, 1, s), requires_grad(a), [a, w](Tape& t, std::size_t self) {
    const double g = t.nodes_[self].grad[0];
    Matrix& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * w[i];
  });
}

Tape::Var Tape::tanh(Var a) {
  Matrix out = value(a);
  for (double& v : out.values()) v = std::tanh(v);
  return push(std::move(out), requires_grad(a), [a](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& y = t.nodes_[self].value();
    Matrix& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Tape::Var Tape::relu(Var a) {
  Matrix out = value(a);
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return push(std::move(out), requires_grad(a), [a](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& x = t.value(a);
    Matrix& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) ga[i] += g[i];
  });
}

namespace {
// log(sigmoid(x)) = -softplus(-x), evaluated without overflow.
double log_sigmoid_scalar(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}
double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Tape::Var Tape::log_sigmoid(Var a) {
  Matrix out = value(a);
  for (double& v : out.values()) v = log_sigmoid_scalar(v);
  return push(std::move(out), requires_grad(a), [a](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    const Matrix& x = t.value(a);
    Matrix& ga = t.grad_buffer(a.id);
    // d/dx log sigmoid(x) = 1 - sigmoid(x) = sigmoid(-x)
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sigmoid_scalar(-x[i]);
  });
}

Tape::Var Tape::gather_rows(Var table, std::span<const std::size_t> rows) {
  const Matrix& tv = value(table);
  Matrix out(rows.size(), tv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= tv.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                       tv.shape());
    }
    auto src = tv.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return push(std::move(out), requires_grad(table),
              [table, idx = std::move(idx)](Tape& t, std::size_t self) {
                const Matrix& g = t.nodes_[self].grad;
                Matrix& gt = t.grad_buffer(table.id);
                for (std::size_t i = 0; i < idx.size(); ++i)
                  for (std::size_t j = 0; j < g.cols(); ++j) gt(idx[i], j) += g(i, j);
              });
}

void Tape::backward(Var loss) {
  if (loss.id >= nodes_.size()) throw InvalidArgument("backward: unknown loss node");
  if (value(loss).size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + value(loss).shape());
  }
  for (Node& n : nodes_) n.grad = Matrix();
  grad_buffer(loss.id)[0] = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.back || n.grad.empty()) continue;
    n.back(*this, id);
  }
}

}  // namespace dcpr

#pragma once

// Dense row-major matrices, a reverse-mode gradient tape over them, and a
// counter-based random stream. Everything the model code builds on.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace dcpr {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape() const;
  bool all_finite() const;
  void fill(double v);

  // Bitwise equality (NaN-free data assumed).
  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Plain (untaped) arithmetic.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix row_softmax(const Matrix& a);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);
double dot(std::span<const double> a, std::span<const double> b);
double max_abs(const Matrix& a);

// Rounds every entry to the nearest binary32 value.
void round_to_float(Matrix& m);

// SplitMix64 keyed by a seed: output i is a fixed function of (seed, i), so a
// stream is reproducible on every platform and cheap to fork.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();
  // Uniform in the open interval (0, 1).
  double uniform();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();

  // Independent child stream identified by `stream`.
  Rng fork(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t mix64(std::uint64_t x);
// Stable seed for (base, stage, job) independent of scheduling order.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stage, std::uint64_t job);

Matrix sample_gaussian(Rng& rng, std::size_t rows, std::size_t cols);

// Reverse-mode tape. Nodes are appended in evaluation order, which is a
// topological order, so backward() walks the node list once in reverse.
class Tape {
 public:
  struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
  };

  // Leaf that receives a gradient. `value` must outlive the tape.
  Var param(const Matrix& value);
  Var constant(Matrix value);

  const Matrix& value(Var v) const;
  // Gradient of the last backward() loss; zeros for untouched nodes.
  const Matrix& grad(Var v);
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);
  // a * b^T
  Var matmul_nt(Var a, Var b);
  Var add(Var a, Var b);
  // Adds a 1 x cols row to every row of a.
  Var add_row(Var a, Var row);
  Var scale(Var a, double s);
  // Elementwise product with a constant matrix (dropout masks, signs).
  Var mul_const(Var a, const Matrix& c);
  // s * c for a 1 x 1 node s and a constant matrix c.
  Var scalar_times(Var s, const Matrix& c);
  Var row_softmax(Var a);
  // 1 x cols: sum over rows.
  Var column_sum(Var a);
  // 1 x 1: sum of all entries.
  Var sum(Var a);
  // 1 x 1: sum_ij a_ij * w_ij with constant weights.
  Var weighted_sum(Var a, const Matrix& w);
  Var tanh(Var a);
  Var relu(Var a);
  Var log_sigmoid(Var a);
  Var gather_rows(Var table, std::span<const std::size_t> rows);

  void backward(Var loss);

 private:
  struct Node {
    const Matrix* external = nullptr;
    Matrix owned;
    Matrix grad;
    bool requires_grad = false;
    std::function<void(Tape&, std::size_t)> back;
    const Matrix& value() const { return external ? *external : owned; }
  };

  Var push(Matrix value, bool requires_grad, std::function<void(Tape&, std::size_t)> back);
  Matrix& grad_buffer(std::size_t id);

  std::vector<Node> nodes_;
};

}  // namespace dcpr

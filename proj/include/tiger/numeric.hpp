// Copyright 2026 The tiger-cpp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense math substrate shared by every learned component: a row-major
// matrix type, softmax, Adagrad, a reproducible PRNG and a central-difference
// gradient checker. All arithmetic is double precision.

#ifndef TIGER_NUMERIC_HPP_
#define TIGER_NUMERIC_HPP_

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tiger {

using MatrixRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

// Row-major dense matrix. Thin value wrapper over an Eigen matrix so that
// kernels can use Eigen expressions through mat() while the rest of the code
// sees a plain (rows, cols, data) view.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  explicit DenseMatrix(MatrixRM m) : m_(std::move(m)) {}

  static DenseMatrix from_rows(
      std::initializer_list<std::initializer_list<double>> rows);
  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const { return static_cast<std::size_t>(m_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(m_.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(m_.size()); }

  double& operator()(std::size_t r, std::size_t c) { return m_(r, c); }
  double operator()(std::size_t r, std::size_t c) const { return m_(r, c); }

  std::span<double> data() { return {m_.data(), size()}; }
  std::span<const double> data() const { return {m_.data(), size()}; }
  std::span<double> row(std::size_t r) { return {m_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const {
    return {m_.data() + r * cols(), cols()};
  }

  MatrixRM& mat() { return m_; }
  const MatrixRM& mat() const { return m_; }

  void set_zero() { m_.setZero(); }
  bool all_finite() const { return m_.allFinite(); }
  std::string shape_string() const;

  friend bool operator==(const DenseMatrix& a, const DenseMatrix& b) {
    return a.m_.rows() == b.m_.rows() && a.m_.cols() == b.m_.cols() &&
           a.m_ == b.m_;
  }

 private:
  MatrixRM m_;
};

// Throws UsageError naming both shapes when a.cols() != b.rows().
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

// Softmax of logits / temperature with max subtraction. Throws UsageError
// for temperature <= 0.
std::vector<double> softmax(std::span<const double> logits,
                            double temperature = 1.0);
std::vector<double> log_softmax(std::span<const double> logits,
                                double temperature = 1.0);

// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes);

// xoshiro256** seeded through SplitMix64. Every sampling primitive below is
// implemented here rather than through <random> distributions, whose output
// is implementation-defined, so streams are identical on every platform.
//
// Splitting rule: child(tag) is seeded with
//   splitmix64(seed ^ fnv1a64(tag))
// where seed is the parent's construction seed. Components use the tags
// "quantizer", "model_init", "dropout", "sampling", "shuffle", "data".
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  Rng split(std::string_view tag) const;
  Rng split(std::uint64_t index) const;

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, n) by rejection (no modulo bias). n > 0.
  std::uint64_t uniform_int(std::uint64_t n);
  // Standard normal via Box-Muller; caches the second variate.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Index drawn from an unnormalized non-negative weight vector.
  std::size_t categorical(std::span<const double> weights);

  std::array<std::uint64_t, 4> state() const { return s_; }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

// Trainable tensor with its gradient and Adagrad accumulator.
struct Parameter {
  std::string name;
  DenseMatrix value;
  DenseMatrix grad;
  DenseMatrix accum;

  Parameter() = default;
  Parameter(std::string n, DenseMatrix v);

  void zero_grad() { grad.set_zero(); }
};

// accum += grad^2; value -= lr * grad / (sqrt(accum) + eps); grad cleared.
// Throws NumericError if grad holds a non-finite entry.
void adagrad_step(Parameter& p, double lr, double eps = 1e-10);

void fill_normal(DenseMatrix& m, Rng& rng, double stddev);

struct GradCheckEntry {
  std::size_t param = 0;   // index into the parameter list
  std::size_t coord = 0;   // flat row-major coordinate
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  std::size_t failures = 0;
  double max_rel_error = 0.0;
  bool ok() const { return failures == 0 && !entries.empty(); }
};

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-4;
  // Denominator floor for the relative error, so coordinates whose true
  // gradient is ~0 are judged on absolute error tol * abs_floor.
  double abs_floor = 1e-6;
  // Fraction of coordinates checked per parameter (1.0 = all). At least one
  // coordinate per parameter is always checked.
  double sample_fraction = 1.0;
  std::uint64_t sample_seed = 0;
};

// Compares the analytic gradients already stored in params[i]->grad with
// central differences (f(θ+h) − f(θ−h)) / 2h of loss_fn. loss_fn must read
// the current parameter values and must not touch the grad fields. Throws
// NumericError if loss_fn is not deterministic and UsageError if h is
// outside [1e-6, 1e-3].
GradCheckReport finite_diff_check(const std::function<double()>& loss_fn,
                                  std::span<Parameter* const> params,
                                  const GradCheckOptions& options = {});

}  // namespace tiger

#endif  // TIGER_NUMERIC_HPP_

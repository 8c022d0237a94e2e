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

#include "tiger/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "tiger/errors.hpp"

namespace tiger {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : m_(MatrixRM::Constant(static_cast<Eigen::Index>(rows),
                            static_cast<Eigen::Index>(cols), fill)) {}

DenseMatrix DenseMatrix::from_rows(
    std::initializer_list<std::initializer_list<double>> rows) {
  std::size_t r = rows.size();
  std::size_t c = r == 0 ? 0 : rows.begin()->size();
  DenseMatrix out(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw UsageError("from_rows: ragged initializer");
    std::size_t j = 0;
    for (double v : row) out(i, j++) = v;
    ++i;
  }
  return out;
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  return DenseMatrix(MatrixRM::Identity(static_cast<Eigen::Index>(n),
                                        static_cast<Eigen::Index>(n)));
}

std::string DenseMatrix::shape_string() const {
  std::ostringstream os;
  os << rows() << "x" << cols();
  return os.str();
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw UsageError("matmul: dimension mismatch " + a.shape_string() + " * " +
                     b.shape_string());
  }
  MatrixRM out = a.mat() * b.mat();
  return DenseMatrix(std::move(out));
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw UsageError("softmax: temperature must be positive");
  }
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - mx) / temperature);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits,
                                double temperature) {
  if (!(temperature > 0.0)) {
    throw UsageError("log_softmax: temperature must be positive");
  }
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = (logits[i] - mx) / temperature;
    sum += std::exp(out[i]);
  }
  double lse = std::log(sum);
  for (double& v : out) v -= lse;
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& word : s_) {
    word = splitmix64(x);
    x += 0x9e3779b97f4a7c15ULL;
  }
}

Rng Rng::split(std::string_view tag) const {
  return Rng(splitmix64(seed_ ^ fnv1a64(tag)));
}

Rng Rng::split(std::uint64_t index) const {
  return Rng(splitmix64(seed_ ^ splitmix64(index + 0x632be59bd9b4e019ULL)));
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw UsageError("uniform_int: empty range");
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
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
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::size_t Rng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw UsageError("categorical: weights sum to zero");
  double u = uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  // Rounding left u at the very top; return the last positive weight.
  for (std::size_t i = weights.size(); i > 0; --i) {
    if (weights[i - 1] > 0.0) return i - 1;
  }
  return weights.size() - 1;
}

Parameter::Parameter(std::string n, DenseMatrix v)
    : name(std::move(n)),
      value(std::move(v)),
      grad(value.rows(), value.cols()),
      accum(value.rows(), value.cols()) {}

void adagrad_step(Parameter& p, double lr, double eps) {
  if (!p.grad.all_finite()) {
    throw NumericError("adagrad_step: non-finite gradient in " + p.name);
  }
  auto& g = p.grad.mat();
  auto& a = p.accum.mat();
  a.array() += g.array().square();
  p.value.mat().array() -= lr * g.array() / (a.array().sqrt() + eps);
  g.setZero();
}

void fill_normal(DenseMatrix& m, Rng& rng, double stddev) {
  for (double& v : m.data()) v = rng.normal() * stddev;
}

GradCheckReport finite_diff_check(const std::function<double()>& loss_fn,
                                  std::span<Parameter* const> params,
                                  const GradCheckOptions& options) {
  if (options.h < 1e-6 || options.h > 1e-3) {
    throw UsageError("finite_diff_check: h must lie in [1e-6, 1e-3]");
  }
  const double base = loss_fn();
  const double again = loss_fn();
  if (base != again) {
    throw NumericError("finite_diff_check: loss function is not deterministic");
  }

  GradCheckReport report;
  Rng rng(options.sample_seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    std::vector<std::size_t> coords(p.value.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (options.sample_fraction < 1.0) {
      rng.shuffle(coords);
      auto keep = static_cast<std::size_t>(
          std::ceil(options.sample_fraction * static_cast<double>(coords.size())));
      coords.resize(std::max<std::size_t>(1, std::min(keep, coords.size())));
      std::sort(coords.begin(), coords.end());
    }
    auto values = p.value.data();
    auto grads = p.grad.data();
    for (std::size_t c : coords) {
      const double saved = values[c];
      values[c] = saved + options.h;
      const double up = loss_fn();
      values[c] = saved - options.h;
      const double down = loss_fn();
      values[c] = saved;

      GradCheckEntry e;
      e.param = pi;
      e.coord = c;
      e.analytic = grads[c];
      e.numeric = (up - down) / (2.0 * options.h);
      double denom = std::max({std::abs(e.analytic), std::abs(e.numeric),
                               options.abs_floor});
      e.rel_error = std::abs(e.analytic - e.numeric) / denom;
      e.pass = std::isfinite(e.rel_error) && e.rel_error <= options.tol;
      if (!e.pass) ++report.failures;
      report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
      report.entries.push_back(e);
    }
  }
  return report;
}

}  // namespace tiger

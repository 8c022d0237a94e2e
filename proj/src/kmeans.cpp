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

#include "tiger/kmeans.hpp"

#include <limits>

#include "tiger/errors.hpp"

namespace tiger {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

int nearest_row(const DenseMatrix& centers, std::span<const double> x) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < centers.rows(); ++k) {
    double d = sq_dist(centers.row(k), x);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

KMeansResult kmeans(const DenseMatrix& points, std::size_t k,
                    std::size_t max_iters, std::uint64_t seed) {
  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();
  if (k == 0) throw UsageError("kmeans: k must be positive");
  if (n < k) {
    throw UsageError("kmeans: " + std::to_string(n) + " points for k=" +
                     std::to_string(k));
  }
  Rng rng(seed);
  KMeansResult res;
  res.centroids = DenseMatrix(k, dim);

  // k-means++ seeding.
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = static_cast<std::size_t>(rng.uniform_int(n));
  auto set_centroid = [&](std::size_t c, std::size_t p) {
    auto dst = res.centroids.row(c);
    auto src = points.row(p);
    std::copy(src.begin(), src.end(), dst.begin());
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(points.row(i), src));
    }
  };
  set_centroid(0, first);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = total > 0.0 ? rng.categorical(d2)
                                   : static_cast<std::size_t>(rng.uniform_int(n));
    set_centroid(c, pick);
  }

  res.assignments.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    res.assignments[i] = nearest_row(res.centroids, points.row(i));
  }

  std::vector<double> counts(k);
  for (std::size_t it = 0; it < max_iters; ++it) {
    // Update step.
    res.centroids.set_zero();
    std::fill(counts.begin(), counts.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto c = static_cast<std::size_t>(res.assignments[i]);
      auto dst = res.centroids.row(c);
      auto src = points.row(i);
      for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
      counts[c] += 1.0;
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0.0) {
        for (double& v : res.centroids.row(c)) v /= counts[c];
      }
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0.0) continue;
      // Re-seed with the point farthest from its centroid.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        auto a = static_cast<std::size_t>(res.assignments[i]);
        if (counts[a] <= 1.0) continue;
        double d = sq_dist(points.row(i), res.centroids.row(a));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far_d < 0.0) continue;
      auto src = points.row(far);
      std::copy(src.begin(), src.end(), res.centroids.row(c).begin());
      counts[static_cast<std::size_t>(res.assignments[far])] -= 1.0;
      counts[c] = 1.0;
      res.assignments[far] = static_cast<int>(c);
    }

    // Assignment step.
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int a = nearest_row(res.centroids, points.row(i));
      if (a != res.assignments[i]) {
        res.assignments[i] = a;
        changed = true;
      }
    }
    res.iterations = it + 1;
    if (!changed) break;
  }

  res.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    res.inertia += sq_dist(points.row(i),
                           res.centroids.row(static_cast<std::size_t>(res.assignments[i])));
  }
  return res;
}

}  // namespace tiger

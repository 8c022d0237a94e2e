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

// Lloyd's k-means with k-means++ seeding.

#ifndef TIGER_KMEANS_HPP_
#define TIGER_KMEANS_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "tiger/numeric.hpp"

namespace tiger {

struct KMeansResult {
  DenseMatrix centroids;         // k x dim
  std::vector<int> assignments;  // one per point
  std::size_t iterations = 0;
  double inertia = 0.0;          // sum of squared distances to centroids
};

// Index of the nearest row of `centers` to x by squared Euclidean distance;
// ties go to the lowest index.
int nearest_row(const DenseMatrix& centers, std::span<const double> x);

// points: one point per row. Empty clusters are re-seeded with the point
// farthest from its current centroid. Stops after max_iters updates or once
// assignments stop changing. Throws UsageError if rows < k or k == 0.
KMeansResult kmeans(const DenseMatrix& points, std::size_t k,
                    std::size_t max_iters, std::uint64_t seed);

}  // namespace tiger

#endif  // TIGER_KMEANS_HPP_

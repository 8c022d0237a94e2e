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


#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <set>

#include "gtest/gtest.h"
#include "tiger/errors.hpp"
#include "tiger/rqvae.hpp"

namespace tiger {
namespace {

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RqVaeConfig toy_config() {
  RqVaeConfig c;
  c.input_dim = 1;
  c.hidden = {};
  c.latent_dim = 1;
  c.levels = {2, 2};
  c.beta = 0.25;
  return c;
}

RqVaeModel toy_model() {
  RqVaeModel m(toy_config());
  m.encoder()[0].weight.value(0, 0) = 1.0;
  m.encoder()[0].bias.value(0, 0) = 0.0;
  m.decoder()[0].weight.value(0, 0) = 1.0;
  m.decoder()[0].bias.value(0, 0) = 0.0;
  m.codebooks()[0].value = DenseMatrix::from_rows({{-1.0}, {1.0}});
  m.codebooks()[1].value = DenseMatrix::from_rows({{-0.25}, {0.25}});
  return m;
}

// Independent MLP forward: ReLU after every layer except the last.
std::vector<double> mlp(const std::vector<DenseLayer>& layers, std::vector<double> x) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const DenseMatrix& w = layers[l].weight.value;
    std::vector<double> y(w.cols());
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double s = layers[l].bias.value(0, j);
      for (std::size_t i = 0; i < w.rows(); ++i) s += x[i] * w(i, j);
      y[j] = l + 1 < layers.size() ? std::max(0.0, s) : s;
    }
    x = std::move(y);
  }
  return x;
}

RqVaeConfig small_config(std::uint64_t seed) {
  RqVaeConfig c;
  c.input_dim = 6;
  c.hidden = {5, 4};
  c.latent_dim = 3;
  c.levels = {4, 3, 3};
  c.beta = 0.25;
  c.seed = seed;
  return c;
}

DenseMatrix random_batch(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  DenseMatrix b(n, dim);
  for (double& v : b.data()) v = rng.normal();
  return b;
}

TEST(RqVae, ToyLossOracle) {
  RqVaeModel m = toy_model();
  std::vector<double> x{0.6};
  RqVaeLoss l = rqvae_loss(x, m);
  EXPECT_EQ(l.codes, (std::vector<int>{1, 0}));
  EXPECT_NEAR(l.recon, 0.0225, 1e-9);
  EXPECT_NEAR(l.rqvae, 0.228125, 1e-9);
  EXPECT_NEAR(l.total, 0.250625, 1e-9);
  EXPECT_EQ(m.quantize(x), (std::vector<int>{1, 0}));
}

TEST(RqVae, ToyBatchLossMatchesSingle) {
  RqVaeModel m = toy_model();
  DenseMatrix b = DenseMatrix::from_rows({{0.6}});
  RqVaeLoss l = rqvae_batch_loss(b, m, false);
  EXPECT_NEAR(l.total, 0.250625, 1e-9);
}

TEST(RqVae, ZeroBetaDropsCommitment) {
  RqVaeConfig c = toy_config();
  c.beta = 0.0;
  RqVaeModel m(c);
  RqVaeModel t = toy_model();
  m.encoder() = t.encoder();
  m.decoder() = t.decoder();
  m.codebooks() = t.codebooks();
  std::vector<double> x{0.6};
  RqVaeLoss l = rqvae_loss(x, m);
  EXPECT_NEAR(l.rqvae, 0.16 + 0.0225, 1e-12);
}

TEST(RqVae, PerfectCodebookGivesZeroLoss) {
  RqVaeModel m = toy_model();
  m.codebooks()[0].value = DenseMatrix::from_rows({{0.5}, {2.0}});
  m.codebooks()[1].value = DenseMatrix::from_rows({{0.0}, {1.0}});
  std::vector<double> x{0.5};
  RqVaeLoss l = rqvae_loss(x, m);
  EXPECT_EQ(l.total, 0.0);
}

TEST(RqVae, ForwardMatchesIndependentMlp) {
  RqVaeModel m(small_config(3));
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    std::vector<double> x(6);
    for (double& v : x) v = rng.normal();
    std::vector<double> z = m.encode(x);
    std::vector<double> ref = mlp(m.encoder(), x);
    ASSERT_EQ(z.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(z[i], ref[i], 1e-12);
    std::vector<double> xr = m.decode(z);
    std::vector<double> ref_r = mlp(m.decoder(), z);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(xr[i], ref_r[i], 1e-12);

    ResidualTrace tr = m.trace(x);
    std::vector<DenseMatrix> cbs = m.codebook_values();
    ResidualTrace direct = quantize_residual(z, cbs);
    EXPECT_EQ(tr.codes, direct.codes);

    double recon = 0;
    std::vector<double> xhat = mlp(m.decoder(), direct.quantized);
    for (std::size_t i = 0; i < 6; ++i) recon += (x[i] - xhat[i]) * (x[i] - xhat[i]);
    double rq = 0;
    for (std::size_t d = 0; d < 3; ++d) {
      auto e = cbs[d].row(static_cast<std::size_t>(direct.codes[d]));
      for (std::size_t i = 0; i < 3; ++i) {
        double diff = direct.residuals[d][i] - e[i];
        rq += (1 + 0.25) * diff * diff;
      }
    }
    RqVaeLoss l = rqvae_loss(x, m);
    EXPECT_NEAR(l.recon, recon, 1e-12);
    EXPECT_NEAR(l.rqvae, rq, 1e-12);
  }
}

TEST(RqVae, StraightThroughGradientsMatchSurrogateFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    RqVaeModel m(small_config(seed));
    // Nonzero biases keep pre-activations away from the ReLU kink.
    Rng brng(seed + 100);
    for (auto* layers : {&m.encoder(), &m.decoder()}) {
      for (auto& l : *layers) {
        for (double& v : l.bias.value.data()) v = 0.3 * brng.normal();
      }
    }
    DenseMatrix batch = random_batch(8, 6, 50 + seed);
    StopGradients frozen = capture_stop_gradients(batch, m);
    for (Parameter* p : m.parameters()) p->zero_grad();
    RqVaeLoss l = rqvae_batch_loss(batch, m, true);
    EXPECT_NEAR(rqvae_surrogate_loss(batch, m, frozen), l.total, 1e-12);
    const double h = 1e-6;
    for (Parameter* p : m.parameters()) {
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        double& v = p->value.data()[i];
        const double orig = v;
        v = orig + h;
        double up = rqvae_surrogate_loss(batch, m, frozen);
        v = orig - h;
        double down = rqvae_surrogate_loss(batch, m, frozen);
        v = orig;
        double fd = (up - down) / (2 * h);
        double an = p->grad.data()[i];
        EXPECT_LE(std::abs(fd - an) / std::max(1.0, std::abs(fd)), 1e-4)
            << p->name << "[" << i << "] seed " << seed;
      }
    }
  }
}

TEST(RqVae, CodebookGradientFromOwnTermOnly) {
  RqVaeModel m = toy_model();
  DenseMatrix b = DenseMatrix::from_rows({{0.6}});
  for (Parameter* p : m.parameters()) p->zero_grad();
  rqvae_batch_loss(b, m, true);
  // d/de ‖sg[r] − e‖² = 2 (e − r); unused entries get nothing.
  EXPECT_NEAR(m.codebooks()[0].grad(1, 0), 2 * (1.0 - 0.6), 1e-12);
  EXPECT_EQ(m.codebooks()[0].grad(0, 0), 0.0);
  EXPECT_NEAR(m.codebooks()[1].grad(0, 0), 2 * (-0.25 - (-0.4)), 1e-12);
  EXPECT_EQ(m.codebooks()[1].grad(1, 0), 0.0);
}

TEST(RqVae, ZeroEpochsKeepsInitialization) {
  RqVaeConfig c = small_config(5);
  c.epochs = 0;
  EmbeddingTable t(6);
  t.insert("a", std::vector<double>(6, 0.5));
  RqVaeModel trained = train_rqvae(t, c);
  RqVaeModel fresh(c);
  ASSERT_EQ(trained.codebooks().size(), fresh.codebooks().size());
  for (std::size_t d = 0; d < fresh.codebooks().size(); ++d) {
    EXPECT_EQ(trained.codebooks()[d].value, fresh.codebooks()[d].value);
  }
  EXPECT_EQ(trained.encoder()[0].weight.value, fresh.encoder()[0].weight.value);
}

EmbeddingTable clustered_table(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const double centers[4][2] = {{3, 0}, {-3, 0}, {0, 3}, {0, -3}};
  EmbeddingTable t(2);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = centers[i % 4];
    t.insert("p" + std::to_string(1000 + i),
             {c[0] + 0.1 * rng.normal(), c[1] + 0.1 * rng.normal()});
  }
  return t;
}

TEST(RqVae, FourClustersUseWholeFirstCodebook) {
  RqVaeConfig c;
  c.input_dim = 2;
  c.hidden = {8};
  c.latent_dim = 2;
  c.levels = {4, 4};
  c.lr = 0.05;
  c.batch_size = 64;
  c.epochs = 30;
  c.seed = 7;
  EmbeddingTable t = clustered_table(256, 8);
  RqVaeTrainLog log;
  RqVaeModel m = train_rqvae(t, c, &log);
  ASSERT_EQ(log.final_usage.size(), 2u);
  EXPECT_EQ(log.final_usage[0], 1.0);
  EXPECT_EQ(log.epochs.size(), 30u);
  EXPECT_LT(log.epochs.back().loss, log.epochs.front().loss);
  // Items from the same cluster share c1.
  std::map<std::size_t, std::set<int>> first_by_cluster;
  std::size_t i = 0;
  for (const auto& [id, x] : t.entries()) {
    std::size_t cluster = static_cast<std::size_t>(std::stoi(id.substr(1)) - 1000) % 4;
    first_by_cluster[cluster].insert(m.quantize(x)[0]);
    ++i;
  }
  std::set<int> distinct;
  for (const auto& [_, s] : first_by_cluster) {
    EXPECT_EQ(s.size(), 1u);
    distinct.insert(*s.begin());
  }
  EXPECT_EQ(distinct.size(), 4u);
}

TEST(RqVae, ResidualNormsDecrease) {
  RqVaeConfig c;
  c.input_dim = 2;
  c.hidden = {8};
  c.latent_dim = 2;
  c.levels = {4, 4, 4};
  c.lr = 0.05;
  c.batch_size = 64;
  c.epochs = 20;
  c.seed = 9;
  EmbeddingTable t = clustered_table(256, 10);
  RqVaeModel m = train_rqvae(t, c);
  std::vector<double> norms = mean_residual_norms(m, t);
  ASSERT_EQ(norms.size(), 4u);
  for (std::size_t d = 0; d + 1 < norms.size(); ++d) EXPECT_LT(norms[d + 1], norms[d]);
}

TEST(RqVae, TrainingIsDeterministic) {
  RqVaeConfig c = small_config(11);
  c.batch_size = 16;
  c.epochs = 5;
  EmbeddingTable t(6);
  DenseMatrix b = random_batch(40, 6, 12);
  for (std::size_t i = 0; i < 40; ++i) {
    auto r = b.row(i);
    t.insert("x" + std::to_string(i), {r.begin(), r.end()});
  }
  RqVaeModel a = train_rqvae(t, c);
  RqVaeModel d = train_rqvae(t, c);
  auto dir = std::filesystem::temp_directory_path();
  save_rqvae(dir / "tiger_rq_a.bin", a);
  save_rqvae(dir / "tiger_rq_b.bin", d);
  EXPECT_EQ(file_bytes(dir / "tiger_rq_a.bin"), file_bytes(dir / "tiger_rq_b.bin"));
  std::filesystem::remove(dir / "tiger_rq_a.bin");
  std::filesystem::remove(dir / "tiger_rq_b.bin");
}

TEST(RqVae, SaveLoadRoundTrip) {
  RqVaeModel m(small_config(13));
  auto path = std::filesystem::temp_directory_path() / "tiger_rq_roundtrip.bin";
  save_rqvae(path, m);
  RqVaeModel r = load_rqvae(path);
  EXPECT_EQ(r.config().hidden, m.config().hidden);
  EXPECT_EQ(r.config().levels, m.config().levels);
  auto pm = m.parameters();
  auto pr = r.parameters();
  ASSERT_EQ(pm.size(), pr.size());
  for (std::size_t i = 0; i < pm.size(); ++i) EXPECT_EQ(pm[i]->value, pr[i]->value);
  std::filesystem::remove(path);
}

TEST(RqVae, Errors) {
  RqVaeConfig c = small_config(0);
  c.levels = {1};
  EXPECT_THROW(RqVaeModel{c}, UsageError);
  RqVaeModel m(small_config(0));
  std::vector<double> wrong(5, 0.0);
  EXPECT_THROW(m.encode(wrong), UsageError);
  EmbeddingTable t(6);
  t.insert("a", std::vector<double>(6, 1.0));
  RqVaeConfig big = small_config(0);
  big.epochs = 1;
  EXPECT_THROW(train_rqvae(t, big), UsageError);
  EXPECT_THROW(train_rqvae(EmbeddingTable(5), big), UsageError);
  std::vector<double> inf(6, std::numeric_limits<double>::infinity());
  EXPECT_THROW(rqvae_loss(inf, m), NumericError);
}

}  // namespace
}  // namespace tiger

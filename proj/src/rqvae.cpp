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

#include "tiger/rqvae.hpp"

#include <cmath>
#include <set>

#include "tiger/binary_io.hpp"
#include "tiger/errors.hpp"
#include "tiger/kmeans.hpp"

namespace tiger {

namespace {

struct MlpCache {
  std::vector<MatrixRM> inputs;
  std::vector<MatrixRM> pre;
};

MatrixRM mlp_forward(const std::vector<DenseLayer>& layers, const MatrixRM& x,
                     MlpCache* cache) {
  MatrixRM h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    MatrixRM a = h * layers[i].weight.value.mat();
    a.rowwise() += layers[i].bias.value.mat().row(0);
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->pre.push_back(a);
    }
    h = (i + 1 < layers.size()) ? MatrixRM(a.cwiseMax(0.0)) : std::move(a);
  }
  return h;
}

MatrixRM mlp_backward(std::vector<DenseLayer>& layers, const MlpCache& cache,
                      MatrixRM g) {
  for (std::size_t i = layers.size(); i-- > 0;) {
    if (i + 1 < layers.size()) {
      g = g.cwiseProduct(MatrixRM((cache.pre[i].array() > 0.0).cast<double>()));
    }
    layers[i].weight.grad.mat().noalias() += cache.inputs[i].transpose() * g;
    layers[i].bias.grad.mat().row(0) += g.colwise().sum();
    g = MatrixRM(g * layers[i].weight.value.mat().transpose());
  }
  return g;
}

std::vector<DenseLayer> make_layers(const std::vector<std::size_t>& dims,
                                    const std::string& prefix, Rng& rng) {
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    DenseMatrix w(dims[i], dims[i + 1]);
    fill_normal(w, rng, 1.0 / std::sqrt(static_cast<double>(dims[i])));
    layers.push_back({Parameter(prefix + std::to_string(i) + ".w", std::move(w)),
                      Parameter(prefix + std::to_string(i) + ".b",
                                DenseMatrix(1, dims[i + 1]))});
  }
  return layers;
}

MatrixRM row_matrix(std::span<const double> x) {
  MatrixRM m(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = x[i];
  return m;
}

std::vector<double> to_vector(const MatrixRM& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("rqvae: non-finite ") + what);
}

}  // namespace

RqVaeModel::RqVaeModel(const RqVaeConfig& config) : config_(config) {
  if (config.input_dim == 0 || config.latent_dim == 0 || config.levels.empty()) {
    throw UsageError("rqvae: input_dim, latent_dim and levels must be non-empty");
  }
  for (int k : config.levels) {
    if (k < 2) throw UsageError("rqvae: every codebook needs K >= 2");
  }
  Rng rng = Rng(config.seed).split("model_init");
  std::vector<std::size_t> dims{config.input_dim};
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(config.latent_dim);
  encoder_ = make_layers(dims, "enc", rng);
  std::vector<std::size_t> rdims(dims.rbegin(), dims.rend());
  decoder_ = make_layers(rdims, "dec", rng);
  for (std::size_t l = 0; l < config.levels.size(); ++l) {
    DenseMatrix cb(static_cast<std::size_t>(config.levels[l]), config.latent_dim);
    fill_normal(cb, rng, 1.0 / std::sqrt(static_cast<double>(config.latent_dim)));
    codebooks_.emplace_back("codebook" + std::to_string(l), std::move(cb));
  }
}

std::vector<double> RqVaeModel::encode(std::span<const double> x) const {
  if (x.size() != config_.input_dim) {
    throw UsageError("rqvae: input has dim " + std::to_string(x.size()) +
                     ", expected " + std::to_string(config_.input_dim));
  }
  return to_vector(mlp_forward(encoder_, row_matrix(x), nullptr));
}

std::vector<double> RqVaeModel::decode(std::span<const double> z) const {
  if (z.size() != config_.latent_dim) {
    throw UsageError("rqvae: latent has dim " + std::to_string(z.size()));
  }
  return to_vector(mlp_forward(decoder_, row_matrix(z), nullptr));
}

std::vector<DenseMatrix> RqVaeModel::codebook_values() const {
  std::vector<DenseMatrix> out;
  for (const auto& cb : codebooks_) out.push_back(cb.value);
  return out;
}

ResidualTrace RqVaeModel::trace(std::span<const double> x) const {
  std::vector<double> z = encode(x);
  std::vector<DenseMatrix> cbs = codebook_values();
  return quantize_residual(z, cbs);
}

std::vector<int> RqVaeModel::quantize(std::span<const double> x) const {
  return trace(x).codes;
}

std::vector<Parameter*> RqVaeModel::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : encoder_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  for (auto& l : decoder_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  for (auto& cb : codebooks_) out.push_back(&cb);
  return out;
}

namespace {

// grad_sink, when non-null, is the model itself and receives gradients.
RqVaeLoss batch_loss_impl(const DenseMatrix& batch, const RqVaeModel& model,
                          RqVaeModel* grad_sink) {
  const bool accumulate_grads = grad_sink != nullptr;
  const auto& cfg = model.config();
  if (batch.cols() != cfg.input_dim) {
    throw UsageError("rqvae: input has dim " + std::to_string(batch.cols()) +
                     ", expected " + std::to_string(cfg.input_dim));
  }
  const auto n = static_cast<Eigen::Index>(batch.rows());
  if (n == 0) throw UsageError("rqvae: empty batch");
  const double inv_n = 1.0 / static_cast<double>(n);
  const std::size_t levels = cfg.levels.size();

  MlpCache enc_cache, dec_cache;
  MatrixRM z = mlp_forward(model.encoder(), batch.mat(), accumulate_grads ? &enc_cache : nullptr);
  MatrixRM zhat = MatrixRM::Zero(n, z.cols());
  MatrixRM dz = MatrixRM::Zero(n, z.cols());

  RqVaeLoss out;
  double rq_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    RowVector r = z.row(i);
    for (std::size_t d = 0; d < levels; ++d) {
      const DenseMatrix& cb = model.codebooks()[d].value;
      int c = nearest_row(cb, std::span<const double>(r.data(), static_cast<std::size_t>(r.size())));
      RowVector e = cb.mat().row(c);
      RowVector diff = r - e;
      const double sq = diff.squaredNorm();
      rq_sum += (1.0 + cfg.beta) * sq;
      if (accumulate_grads) {
        grad_sink->codebooks()[d].grad.mat().row(c) += (-2.0 * inv_n) * diff;
        dz.row(i) += (2.0 * cfg.beta * inv_n) * diff;
      }
      if (i == 0 && n == 1) out.codes.push_back(c);
      zhat.row(i) += e;
      r = diff;
    }
  }
  MatrixRM xhat = mlp_forward(model.decoder(), zhat, accumulate_grads ? &dec_cache : nullptr);
  MatrixRM err = xhat - batch.mat();
  const double recon_sum = err.squaredNorm();

  out.recon = recon_sum * inv_n;
  out.rqvae = rq_sum * inv_n;
  out.total = out.recon + out.rqvae;
  check_finite(out.total, "loss");

  if (accumulate_grads) {
    MatrixRM dzhat = mlp_backward(grad_sink->decoder(), dec_cache, (2.0 * inv_n) * err);
    dz += dzhat;  // straight-through: ∂ẑ/∂z = I
    mlp_backward(grad_sink->encoder(), enc_cache, std::move(dz));
  }
  return out;
}

}  // namespace

RqVaeLoss rqvae_loss(std::span<const double> x, const RqVaeModel& model) {
  return batch_loss_impl(DenseMatrix(row_matrix(x)), model, nullptr);
}

RqVaeLoss rqvae_batch_loss(const DenseMatrix& batch, RqVaeModel& model,
                           bool accumulate_grads) {
  return batch_loss_impl(batch, model, accumulate_grads ? &model : nullptr);
}

StopGradients capture_stop_gradients(const DenseMatrix& batch,
                                     const RqVaeModel& model) {
  StopGradients sg;
  std::vector<DenseMatrix> cbs = model.codebook_values();
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    ResidualTrace t = model.trace(batch.row(i));
    sg.codes.push_back(t.codes);
    sg.residuals.emplace_back(t.residuals.begin(), t.residuals.end() - 1);
    std::vector<std::vector<double>> es;
    for (std::size_t d = 0; d < t.codes.size(); ++d) {
      auto e = cbs[d].row(static_cast<std::size_t>(t.codes[d]));
      es.emplace_back(e.begin(), e.end());
    }
    sg.codewords.push_back(std::move(es));
    std::vector<double> off(t.quantized.size());
    const auto& z = t.residuals.front();
    for (std::size_t k = 0; k < off.size(); ++k) off[k] = t.quantized[k] - z[k];
    sg.st_offset.push_back(std::move(off));
  }
  return sg;
}

double rqvae_surrogate_loss(const DenseMatrix& batch, const RqVaeModel& model,
                            const StopGradients& frozen) {
  const auto& cfg = model.config();
  const std::size_t n = batch.rows();
  MatrixRM z = mlp_forward(model.encoder(), batch.mat(), nullptr);
  MatrixRM zin = z;
  double rq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (std::size_t k = 0; k < frozen.st_offset[i].size(); ++k) {
      zin(row, static_cast<Eigen::Index>(k)) += frozen.st_offset[i][k];
    }
    RowVector r = z.row(row);
    for (std::size_t d = 0; d < frozen.codes[i].size(); ++d) {
      const auto& cb = model.codebooks()[d].value;
      const auto c = static_cast<std::size_t>(frozen.codes[i][d]);
      auto e_live = cb.row(c);
      const auto& r_frozen = frozen.residuals[i][d];
      const auto& e_frozen = frozen.codewords[i][d];
      double codebook_term = 0.0, commit_term = 0.0;
      for (std::size_t k = 0; k < e_live.size(); ++k) {
        double a = r_frozen[k] - e_live[k];
        double b = r(static_cast<Eigen::Index>(k)) - e_frozen[k];
        codebook_term += a * a;
        commit_term += b * b;
      }
      rq += codebook_term + cfg.beta * commit_term;
      for (std::size_t k = 0; k < e_frozen.size(); ++k) {
        r(static_cast<Eigen::Index>(k)) -= e_frozen[k];
      }
    }
  }
  MatrixRM xhat = mlp_forward(model.decoder(), zin, nullptr);
  double recon = (xhat - batch.mat()).squaredNorm();
  return (recon + rq) / static_cast<double>(n);
}

void kmeans_init_codebooks(RqVaeModel& model, const DenseMatrix& batch,
                           std::size_t iters, std::uint64_t seed) {
  MatrixRM z = mlp_forward(model.encoder(), batch.mat(), nullptr);
  DenseMatrix residual{MatrixRM(z)};
  Rng root(seed);
  for (std::size_t d = 0; d < model.codebooks().size(); ++d) {
    const auto k = static_cast<std::size_t>(model.config().levels[d]);
    KMeansResult km = kmeans(residual, k, iters, root.split(d).next_u64());
    for (std::size_t i = 0; i < residual.rows(); ++i) {
      auto r = residual.row(i);
      auto e = km.centroids.row(static_cast<std::size_t>(km.assignments[i]));
      for (std::size_t j = 0; j < r.size(); ++j) r[j] -= e[j];
    }
    model.codebooks()[d].value = std::move(km.centroids);
  }
}

std::vector<double> mean_residual_norms(const RqVaeModel& model,
                                        const EmbeddingTable& embeddings) {
  const std::size_t levels = model.config().levels.size();
  std::vector<double> sums(levels + 1, 0.0);
  for (const auto& [_, x] : embeddings.entries()) {
    ResidualTrace t = model.trace(x);
    for (std::size_t d = 0; d <= levels; ++d) {
      double s = 0.0;
      for (double v : t.residuals[d]) s += v * v;
      sums[d] += std::sqrt(s);
    }
  }
  if (!embeddings.empty()) {
    for (double& s : sums) s /= static_cast<double>(embeddings.size());
  }
  return sums;
}

RqVaeModel train_rqvae(const EmbeddingTable& embeddings, const RqVaeConfig& config,
                       RqVaeTrainLog* log) {
  if (embeddings.dim() != config.input_dim) {
    throw UsageError("train_rqvae: embedding dim " + std::to_string(embeddings.dim()) +
                     " does not match encoder input " + std::to_string(config.input_dim));
  }
  if (config.batch_size == 0) throw UsageError("train_rqvae: batch_size must be positive");
  RqVaeModel model(config);
  const std::vector<std::string> ids = embeddings.ids();
  const std::size_t n = ids.size();
  if (n == 0) throw UsageError("train_rqvae: empty embedding table");

  DenseMatrix all(n, config.input_dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = embeddings.at(ids[i]);
    std::copy(v.begin(), v.end(), all.row(i).begin());
  }

  Rng root(config.seed);
  Rng shuffle_root = root.split("shuffle");
  std::vector<Parameter*> params = model.parameters();
  std::vector<std::size_t> order(n);

  auto gather = [&](std::size_t begin, std::size_t end) {
    DenseMatrix b(end - begin, config.input_dim);
    for (std::size_t i = begin; i < end; ++i) {
      auto src = all.row(order[i]);
      std::copy(src.begin(), src.end(), b.row(i - begin).begin());
    }
    return b;
  };

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng erng = shuffle_root.split(epoch);
    erng.shuffle(order);

    RqVaeEpochLog entry;
    entry.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      DenseMatrix batch = gather(begin, end);
      if (epoch == 0 && begin == 0) {
        int kmax = *std::max_element(config.levels.begin(), config.levels.end());
        if (batch.rows() < static_cast<std::size_t>(kmax)) {
          throw UsageError("train_rqvae: first batch has " + std::to_string(batch.rows()) +
                           " rows, fewer than codebook size " + std::to_string(kmax));
        }
        kmeans_init_codebooks(model, batch, config.kmeans_iters,
                              root.split("quantizer").next_u64());
      }
      RqVaeLoss l = rqvae_batch_loss(batch, model, true);
      for (Parameter* p : params) adagrad_step(*p, config.lr);
      entry.loss += l.total;
      entry.recon += l.recon;
      entry.rqvae += l.rqvae;
      ++batches;
    }
    entry.loss /= static_cast<double>(batches);
    entry.recon /= static_cast<double>(batches);
    entry.rqvae /= static_cast<double>(batches);
    if (!std::isfinite(entry.loss)) {
      throw NumericError("train_rqvae: non-finite loss at epoch " + std::to_string(epoch));
    }
    const bool last = epoch + 1 == config.epochs;
    if (log && (last || (config.log_every > 0 && epoch % config.log_every == 0))) {
      entry.usage = codebook_usage(model, embeddings);
    }
    if (log) log->epochs.push_back(std::move(entry));
  }

  if (log) {
    log->final_usage = codebook_usage(model, embeddings);
    for (std::size_t d = 0; d < log->final_usage.size(); ++d) {
      if (log->final_usage[d] < 0.5) {
        log->warnings.push_back("codebook collapse risk: level " + std::to_string(d) +
                                " usage " + std::to_string(log->final_usage[d]));
      }
    }
  }
  return model;
}

namespace {
constexpr char kRqMagic[] = "RQVC";
constexpr std::uint32_t kRqVersion = 1;
}  // namespace

void save_rqvae(const std::filesystem::path& path, const RqVaeModel& model) {
  const auto& c = model.config();
  BinaryWriter w;
  w.bytes(std::string_view(kRqMagic, 4));
  w.u32(kRqVersion);
  w.u32(static_cast<std::uint32_t>(c.input_dim));
  w.u32(static_cast<std::uint32_t>(c.hidden.size()));
  for (auto h : c.hidden) w.u32(static_cast<std::uint32_t>(h));
  w.u32(static_cast<std::uint32_t>(c.latent_dim));
  w.u32(static_cast<std::uint32_t>(c.levels.size()));
  for (int k : c.levels) w.u32(static_cast<std::uint32_t>(k));
  w.f64(c.beta);
  for (const auto& l : model.encoder()) {
    w.matrix(l.weight.value);
    w.matrix(l.bias.value);
  }
  for (const auto& l : model.decoder()) {
    w.matrix(l.weight.value);
    w.matrix(l.bias.value);
  }
  for (const auto& cb : model.codebooks()) w.matrix(cb.value);
  w.write_file(path);
}

RqVaeModel load_rqvae(const std::filesystem::path& path) {
  BinaryReader r = BinaryReader::from_file(path);
  if (r.bytes(4) != std::string(kRqMagic, 4)) {
    throw DataError(path.string() + ": bad magic, expected RQVC");
  }
  if (r.u32() != kRqVersion) throw DataError(path.string() + ": unsupported version");
  RqVaeConfig c;
  c.input_dim = r.u32();
  c.hidden.resize(r.u32());
  for (auto& h : c.hidden) h = r.u32();
  c.latent_dim = r.u32();
  c.levels.resize(r.u32());
  for (int& k : c.levels) k = static_cast<int>(r.u32());
  c.beta = r.f64();
  RqVaeModel model(c);
  for (auto& l : model.encoder()) {
    r.matrix_into(l.weight.value);
    r.matrix_into(l.bias.value);
  }
  for (auto& l : model.decoder()) {
    r.matrix_into(l.weight.value);
    r.matrix_into(l.bias.value);
  }
  for (auto& cb : model.codebooks()) r.matrix_into(cb.value);
  if (!r.at_end()) throw DataError(path.string() + ": trailing bytes");
  return model;
}

}  // namespace tiger

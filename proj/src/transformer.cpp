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

#include "tiger/transformer.hpp"

#include <cmath>
#include <limits>

#include "tiger/binary_io.hpp"
#include "tiger/errors.hpp"

namespace tiger {

namespace {

using Mat = MatrixRM;
using Index = Eigen::Index;

constexpr double kLnEps = 1e-6;

struct Segment {
  Index start = 0;
  Index len = 0;
};

Parameter make_param(std::string name, std::size_t rows, std::size_t cols, Rng& rng,
                     double stddev) {
  DenseMatrix m(rows, cols);
  if (stddev > 0) fill_normal(m, rng, stddev);
  return Parameter(std::move(name), std::move(m));
}

Seq2SeqModel::LayerNorm make_ln(const std::string& name, std::size_t dim) {
  return {Parameter(name + ".gain", DenseMatrix(1, dim, 1.0)),
          Parameter(name + ".bias", DenseMatrix(1, dim))};
}

Seq2SeqModel::Attention make_attn(const std::string& name, const TransformerConfig& c,
                                  Rng& rng) {
  const std::size_t d = c.model_dim, a = c.attention_width();
  const double sd_in = 1.0 / std::sqrt(static_cast<double>(d));
  const double sd_out = 1.0 / std::sqrt(static_cast<double>(a));
  Seq2SeqModel::Attention out;
  out.wq = make_param(name + ".wq", d, a, rng, sd_in);
  out.wk = make_param(name + ".wk", d, a, rng, sd_in);
  out.wv = make_param(name + ".wv", d, a, rng, sd_in);
  out.wo = make_param(name + ".wo", a, d, rng, sd_out);
  return out;
}

Seq2SeqModel::Mlp make_mlp(const std::string& name, const TransformerConfig& c, Rng& rng) {
  Seq2SeqModel::Mlp out;
  out.w1 = make_param(name + ".w1", c.model_dim, c.mlp_dim, rng,
                      1.0 / std::sqrt(static_cast<double>(c.model_dim)));
  out.b1 = Parameter(name + ".b1", DenseMatrix(1, c.mlp_dim));
  out.w2 = make_param(name + ".w2", c.mlp_dim, c.model_dim, rng,
                      1.0 / std::sqrt(static_cast<double>(c.mlp_dim)));
  out.b2 = Parameter(name + ".b2", DenseMatrix(1, c.model_dim));
  return out;
}

// ---- layer norm

struct LnCache {
  Mat xhat;
  Eigen::VectorXd rstd;
};

Mat ln_forward(const Seq2SeqModel::LayerNorm& p, const Mat& x, LnCache& c) {
  const Index n = x.rows(), d = x.cols();
  c.xhat.resize(n, d);
  c.rstd.resize(n);
  for (Index r = 0; r < n; ++r) {
    const double mean = x.row(r).mean();
    auto centered = x.row(r).array() - mean;
    const double var = centered.square().mean();
    c.rstd[r] = 1.0 / std::sqrt(var + kLnEps);
    c.xhat.row(r) = centered * c.rstd[r];
  }
  Mat y = (c.xhat.array().rowwise() * p.gain.value.mat().row(0).array()).matrix();
  y.rowwise() += p.bias.value.mat().row(0);
  return y;
}

Mat ln_backward(Seq2SeqModel::LayerNorm& p, const LnCache& c, const Mat& dy) {
  p.gain.grad.mat().row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  p.bias.grad.mat().row(0) += dy.colwise().sum();
  const Mat dxhat = (dy.array().rowwise() * p.gain.value.mat().row(0).array()).matrix();
  const Index n = dy.rows(), d = dy.cols();
  const double dd = static_cast<double>(d);
  Mat dx(n, d);
  for (Index r = 0; r < n; ++r) {
    const double s1 = dxhat.row(r).sum();
    const double s2 = dxhat.row(r).dot(c.xhat.row(r));
    dx.row(r) = (c.rstd[r] / dd) *
                (dd * dxhat.row(r).array() - s1 - c.xhat.row(r).array() * s2).matrix();
  }
  return dx;
}

// ---- dropout

struct DropCache {
  Mat mask;
  bool active = false;
};

Mat dropout_forward(const Mat& x, double p, Rng* rng, DropCache& c) {
  c.active = rng != nullptr && p > 0.0;
  if (!c.active) return x;
  const double keep = 1.0 / (1.0 - p);
  c.mask.resize(x.rows(), x.cols());
  double* m = c.mask.data();
  for (Index i = 0; i < c.mask.size(); ++i) m[i] = rng->uniform() < p ? 0.0 : keep;
  return x.cwiseProduct(c.mask);
}

Mat dropout_backward(const DropCache& c, const Mat& dy) {
  return c.active ? Mat(dy.cwiseProduct(c.mask)) : dy;
}

// ---- multi-head attention over ragged segments. Query segment b attends to
// key segment b.

struct AttnCache {
  Mat xq, xkv, q, k, v, o;
  std::vector<Mat> probs;  // segment-major, then head
};

struct AttnShape {
  std::size_t heads;
  std::size_t head_dim;
};

Mat attn_forward(const Seq2SeqModel::Attention& p, AttnShape shape, const Mat& xq,
                 const std::vector<Segment>& qseg, const Mat& xkv,
                 const std::vector<Segment>& kseg, const std::vector<char>& key_mask,
                 bool causal, AttnCache& c) {
  const Index hd = static_cast<Index>(shape.head_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const double neg_inf = -std::numeric_limits<double>::infinity();
  c.xq = xq;
  c.xkv = xkv;
  c.q.noalias() = xq * p.wq.value.mat();
  c.k.noalias() = xkv * p.wk.value.mat();
  c.v.noalias() = xkv * p.wv.value.mat();
  c.o.setZero(xq.rows(), c.q.cols());
  c.probs.clear();
  c.probs.reserve(qseg.size() * shape.heads);
  for (std::size_t b = 0; b < qseg.size(); ++b) {
    const Segment qs = qseg[b], ks = kseg[b];
    for (std::size_t h = 0; h < shape.heads; ++h) {
      const Index col = static_cast<Index>(h) * hd;
      Mat s = c.q.block(qs.start, col, qs.len, hd) *
              c.k.block(ks.start, col, ks.len, hd).transpose() * scale;
      for (Index i = 0; i < qs.len; ++i) {
        double mx = neg_inf;
        for (Index j = 0; j < ks.len; ++j) {
          if (key_mask[static_cast<std::size_t>(ks.start + j)] || (causal && j > i)) {
            s(i, j) = neg_inf;
          } else {
            mx = std::max(mx, s(i, j));
          }
        }
        if (mx == neg_inf) {
          s.row(i).setZero();
          continue;
        }
        double total = 0.0;
        for (Index j = 0; j < ks.len; ++j) {
          s(i, j) = s(i, j) == neg_inf ? 0.0 : std::exp(s(i, j) - mx);
          total += s(i, j);
        }
        s.row(i) /= total;
      }
      c.o.block(qs.start, col, qs.len, hd).noalias() =
          s * c.v.block(ks.start, col, ks.len, hd);
      c.probs.push_back(std::move(s));
    }
  }
  return c.o * p.wo.value.mat();
}

// Returns (d xq, d xkv).
std::pair<Mat, Mat> attn_backward(Seq2SeqModel::Attention& p, AttnShape shape,
                                  const std::vector<Segment>& qseg,
                                  const std::vector<Segment>& kseg, const AttnCache& c,
                                  const Mat& dout) {
  const Index hd = static_cast<Index>(shape.head_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  p.wo.grad.mat().noalias() += c.o.transpose() * dout;
  const Mat d_o = dout * p.wo.value.mat().transpose();
  Mat dq = Mat::Zero(c.q.rows(), c.q.cols());
  Mat dk = Mat::Zero(c.k.rows(), c.k.cols());
  Mat dv = Mat::Zero(c.v.rows(), c.v.cols());
  std::size_t idx = 0;
  for (std::size_t b = 0; b < qseg.size(); ++b) {
    const Segment qs = qseg[b], ks = kseg[b];
    for (std::size_t h = 0; h < shape.heads; ++h, ++idx) {
      const Index col = static_cast<Index>(h) * hd;
      const Mat& pr = c.probs[idx];
      const auto dob = d_o.block(qs.start, col, qs.len, hd);
      Mat dp = dob * c.v.block(ks.start, col, ks.len, hd).transpose();
      dv.block(ks.start, col, ks.len, hd).noalias() += pr.transpose() * dob;
      const Eigen::VectorXd rowdot = (dp.array() * pr.array()).rowwise().sum();
      Mat ds = (pr.array() * (dp.colwise() - rowdot).array()).matrix() * scale;
      dq.block(qs.start, col, qs.len, hd).noalias() +=
          ds * c.k.block(ks.start, col, ks.len, hd);
      dk.block(ks.start, col, ks.len, hd).noalias() +=
          ds.transpose() * c.q.block(qs.start, col, qs.len, hd);
    }
  }
  p.wq.grad.mat().noalias() += c.xq.transpose() * dq;
  p.wk.grad.mat().noalias() += c.xkv.transpose() * dk;
  p.wv.grad.mat().noalias() += c.xkv.transpose() * dv;
  Mat dxq = dq * p.wq.value.mat().transpose();
  Mat dxkv = dk * p.wk.value.mat().transpose();
  dxkv.noalias() += dv * p.wv.value.mat().transpose();
  return {std::move(dxq), std::move(dxkv)};
}

// ---- MLP

struct MlpCache {
  Mat x, h;
};

Mat mlp_forward(const Seq2SeqModel::Mlp& p, const Mat& x, MlpCache& c) {
  c.x = x;
  c.h.noalias() = x * p.w1.value.mat();
  c.h.rowwise() += p.b1.value.mat().row(0);
  c.h = c.h.cwiseMax(0.0);
  Mat out = c.h * p.w2.value.mat();
  out.rowwise() += p.b2.value.mat().row(0);
  return out;
}

Mat mlp_backward(Seq2SeqModel::Mlp& p, const MlpCache& c, const Mat& dy) {
  p.w2.grad.mat().noalias() += c.h.transpose() * dy;
  p.b2.grad.mat().row(0) += dy.colwise().sum();
  Mat dh = dy * p.w2.value.mat().transpose();
  dh = (c.h.array() > 0.0).select(dh, 0.0);
  p.w1.grad.mat().noalias() += c.x.transpose() * dh;
  p.b1.grad.mat().row(0) += dh.colwise().sum();
  return dh * p.w1.value.mat().transpose();
}

// ---- full model

struct EncLayerCache {
  LnCache ln1;
  AttnCache attn;
  DropCache d1;
  LnCache ln2;
  MlpCache mlp;
  DropCache d2;
};

struct DecLayerCache {
  LnCache ln1;
  AttnCache self_attn;
  DropCache d1;
  LnCache ln2;
  AttnCache cross_attn;
  DropCache d2;
  LnCache ln3;
  MlpCache mlp;
  DropCache d3;
};

struct Tape {
  std::vector<int> enc_tokens, enc_positions;
  std::vector<Segment> enc_seg;
  std::vector<char> enc_mask;
  DropCache enc_drop;
  std::vector<EncLayerCache> enc;
  LnCache enc_final;
  Mat memory;

  std::vector<int> dec_tokens, dec_positions;
  std::vector<Segment> dec_seg;
  std::vector<Segment> mem_seg;  // memory segment attended by each decoder segment
  std::vector<char> dec_mask;
  DropCache dec_drop;
  std::vector<DecLayerCache> dec;
  LnCache dec_final;
  Mat dec_out;
};

void check_token(const Seq2SeqModel& m, int tok) {
  if (tok < 0 || tok >= m.vocab().size()) {
    throw UsageError("forward: token " + std::to_string(tok) + " outside vocabulary of " +
                     std::to_string(m.vocab().size()));
  }
}

Mat embed(const Seq2SeqModel& m, const Parameter& pos, const std::vector<int>& tokens,
          const std::vector<int>& positions) {
  const auto& emb = m.tok_emb.value.mat();
  const auto& pe = pos.value.mat();
  Mat x(static_cast<Index>(tokens.size()), emb.cols());
  for (std::size_t r = 0; r < tokens.size(); ++r) {
    x.row(static_cast<Index>(r)) = emb.row(tokens[r]) + pe.row(positions[r]);
  }
  return x;
}

void embed_backward(Seq2SeqModel& m, Parameter& pos, const std::vector<int>& tokens,
                    const std::vector<int>& positions, const Mat& dx) {
  auto& emb = m.tok_emb.grad.mat();
  auto& pe = pos.grad.mat();
  for (std::size_t r = 0; r < tokens.size(); ++r) {
    emb.row(tokens[r]) += dx.row(static_cast<Index>(r));
    pe.row(positions[r]) += dx.row(static_cast<Index>(r));
  }
}

AttnShape shape_of(const TransformerConfig& c) { return {c.heads, c.head_dim}; }

// Appends one encoder input to the tape's ragged batch.
void add_input(const Seq2SeqModel& m, Tape& t, std::span<const int> input) {
  if (input.empty()) throw UsageError("forward: empty input");
  if (input.size() > m.config().max_input_len) {
    throw UsageError("forward: input length " + std::to_string(input.size()) +
                     " exceeds max_input_len " +
                     std::to_string(m.config().max_input_len));
  }
  t.enc_seg.push_back({static_cast<Index>(t.enc_tokens.size()),
                       static_cast<Index>(input.size())});
  for (std::size_t i = 0; i < input.size(); ++i) {
    check_token(m, input[i]);
    t.enc_tokens.push_back(input[i]);
    t.enc_positions.push_back(static_cast<int>(i));
    t.enc_mask.push_back(input[i] == TokenVocabulary::kPad ? 1 : 0);
  }
}

void add_decoder_input(const Seq2SeqModel& m, Tape& t, std::span<const int> dec,
                       Segment memory) {
  if (dec.empty() || dec.size() > m.config().decode_len) {
    throw UsageError("forward: decoder input length must be in [1, " +
                     std::to_string(m.config().decode_len) + "]");
  }
  t.dec_seg.push_back({static_cast<Index>(t.dec_tokens.size()),
                       static_cast<Index>(dec.size())});
  t.mem_seg.push_back(memory);
  for (std::size_t i = 0; i < dec.size(); ++i) {
    check_token(m, dec[i]);
    t.dec_tokens.push_back(dec[i]);
    t.dec_positions.push_back(static_cast<int>(i));
    t.dec_mask.push_back(0);
  }
}

void run_encoder(const Seq2SeqModel& m, Tape& t, Rng* rng) {
  const auto& c = m.config();
  const double p = c.dropout;
  Mat x = dropout_forward(embed(m, m.enc_pos, t.enc_tokens, t.enc_positions), p, rng,
                          t.enc_drop);
  t.enc.assign(m.encoder.size(), {});
  for (std::size_t l = 0; l < m.encoder.size(); ++l) {
    const auto& L = m.encoder[l];
    auto& C = t.enc[l];
    Mat a = ln_forward(L.ln1, x, C.ln1);
    x += dropout_forward(attn_forward(L.attn, shape_of(c), a, t.enc_seg, a, t.enc_seg,
                                      t.enc_mask, false, C.attn),
                         p, rng, C.d1);
    Mat b = ln_forward(L.ln2, x, C.ln2);
    x += dropout_forward(mlp_forward(L.mlp, b, C.mlp), p, rng, C.d2);
  }
  t.memory = ln_forward(m.enc_norm, x, t.enc_final);
}

void run_decoder(const Seq2SeqModel& m, Tape& t, Rng* rng) {
  const auto& c = m.config();
  const double p = c.dropout;
  Mat y = dropout_forward(embed(m, m.dec_pos, t.dec_tokens, t.dec_positions), p, rng,
                          t.dec_drop);
  t.dec.assign(m.decoder.size(), {});
  for (std::size_t l = 0; l < m.decoder.size(); ++l) {
    const auto& L = m.decoder[l];
    auto& C = t.dec[l];
    Mat a = ln_forward(L.ln1, y, C.ln1);
    y += dropout_forward(attn_forward(L.self_attn, shape_of(c), a, t.dec_seg, a, t.dec_seg,
                                      t.dec_mask, true, C.self_attn),
                         p, rng, C.d1);
    Mat b = ln_forward(L.ln2, y, C.ln2);
    y += dropout_forward(attn_forward(L.cross_attn, shape_of(c), b, t.dec_seg, t.memory,
                                      t.mem_seg, t.enc_mask, false, C.cross_attn),
                         p, rng, C.d2);
    Mat d = ln_forward(L.ln3, y, C.ln3);
    y += dropout_forward(mlp_forward(L.mlp, d, C.mlp), p, rng, C.d3);
  }
  t.dec_out = ln_forward(m.dec_norm, y, t.dec_final);
}

// Backpropagates d dec_out through decoder and encoder into param grads.
void backward(Seq2SeqModel& m, const Tape& t, const Mat& d_dec_out) {
  const auto& c = m.config();
  Mat dmem = Mat::Zero(t.memory.rows(), t.memory.cols());
  Mat dy = ln_backward(m.dec_norm, t.dec_final, d_dec_out);
  for (std::size_t l = m.decoder.size(); l-- > 0;) {
    auto& L = m.decoder[l];
    const auto& C = t.dec[l];
    Mat dd = mlp_backward(L.mlp, C.mlp, dropout_backward(C.d3, dy));
    dy += ln_backward(L.ln3, C.ln3, dd);
    auto [dq2, dkv2] = attn_backward(L.cross_attn, shape_of(c), t.dec_seg, t.mem_seg,
                                     C.cross_attn, dropout_backward(C.d2, dy));
    dmem += dkv2;
    dy += ln_backward(L.ln2, C.ln2, dq2);
    auto [dq1, dkv1] = attn_backward(L.self_attn, shape_of(c), t.dec_seg, t.dec_seg,
                                     C.self_attn, dropout_backward(C.d1, dy));
    dq1 += dkv1;
    dy += ln_backward(L.ln1, C.ln1, dq1);
  }
  embed_backward(m, m.dec_pos, t.dec_tokens, t.dec_positions,
                 dropout_backward(t.dec_drop, dy));

  Mat dx = ln_backward(m.enc_norm, t.enc_final, dmem);
  for (std::size_t l = m.encoder.size(); l-- > 0;) {
    auto& L = m.encoder[l];
    const auto& C = t.enc[l];
    Mat db = mlp_backward(L.mlp, C.mlp, dropout_backward(C.d2, dx));
    dx += ln_backward(L.ln2, C.ln2, db);
    auto [dq, dkv] = attn_backward(L.attn, shape_of(c), t.enc_seg, t.enc_seg, C.attn,
                                   dropout_backward(C.d1, dx));
    dq += dkv;
    dx += ln_backward(L.ln1, C.ln1, dq);
  }
  embed_backward(m, m.enc_pos, t.enc_tokens, t.enc_positions,
                 dropout_backward(t.enc_drop, dx));
}

Mat project(const Seq2SeqModel& m, const Mat& h) {
  Mat logits = h * m.out_w.value.mat();
  logits.rowwise() += m.out_b.value.mat().row(0);
  return logits;
}

double loss_impl(const Seq2SeqModel& model, std::span<const TrainingExample> batch,
                 Rng* dropout_rng, Seq2SeqModel* grad_sink) {
  if (batch.empty()) throw UsageError("batch_loss: empty batch");
  Tape t;
  std::vector<int> targets;
  for (const auto& ex : batch) {
    if (ex.target.empty()) throw UsageError("batch_loss: empty target");
    add_input(model, t, ex.input);
  }
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto dec = teacher_forcing_input(batch[b].target);
    add_decoder_input(model, t, dec, t.enc_seg[b]);
    for (int tok : batch[b].target) {
      check_token(model, tok);
      targets.push_back(tok);
    }
  }
  run_encoder(model, t, dropout_rng);
  run_decoder(model, t, dropout_rng);
  Mat logits = project(model, t.dec_out);
  const double n = static_cast<double>(targets.size());
  double loss = 0.0;
  for (Index r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double mx = row.maxCoeff();
    row.array() -= mx;
    const double lse = std::log(row.array().exp().sum());
    loss -= row(targets[static_cast<std::size_t>(r)]) - lse;
    if (grad_sink) {
      row = (row.array() - lse).exp().matrix() / n;
      row(targets[static_cast<std::size_t>(r)]) -= 1.0 / n;
    }
  }
  loss /= n;
  if (grad_sink) {
    grad_sink->out_w.grad.mat().noalias() += t.dec_out.transpose() * logits;
    grad_sink->out_b.grad.mat().row(0) += logits.colwise().sum();
    Mat d_dec = logits * model.out_w.value.mat().transpose();
    backward(*grad_sink, t, d_dec);
  }
  return loss;
}

constexpr char kCkptMagic[] = "TGRC";
constexpr std::uint32_t kCkptVersion = 1;

}  // namespace

void TransformerConfig::validate() const {
  if (enc_layers == 0 || dec_layers == 0 || heads == 0 || head_dim == 0 ||
      model_dim == 0 || mlp_dim == 0 || max_input_len == 0 || decode_len == 0) {
    throw UsageError("transformer config: all dims must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw UsageError("transformer config: dropout must be in [0, 1)");
  }
}

Seq2SeqModel::Seq2SeqModel(TransformerConfig config, TokenVocabulary vocab,
                           std::uint64_t seed)
    : config_(config), vocab_(std::move(vocab)), seed_(seed) {
  config_.validate();
  if (vocab_.levels() != config_.decode_len) {
    throw UsageError("Seq2SeqModel: decode_len " + std::to_string(config_.decode_len) +
                     " differs from vocabulary levels " + std::to_string(vocab_.levels()));
  }
  Rng rng = Rng(seed).split("model_init");
  const std::size_t d = config_.model_dim;
  const auto v = static_cast<std::size_t>(vocab_.size());
  tok_emb = make_param("tok_emb", v, d, rng, 1.0);
  enc_pos = make_param("enc_pos", config_.max_input_len, d, rng, 1.0);
  dec_pos = make_param("dec_pos", config_.decode_len, d, rng, 1.0);
  for (std::size_t l = 0; l < config_.enc_layers; ++l) {
    const std::string n = "enc." + std::to_string(l);
    EncoderLayer L;
    L.ln1 = make_ln(n + ".ln1", d);
    L.attn = make_attn(n + ".attn", config_, rng);
    L.ln2 = make_ln(n + ".ln2", d);
    L.mlp = make_mlp(n + ".mlp", config_, rng);
    encoder.push_back(std::move(L));
  }
  enc_norm = make_ln("enc.norm", d);
  for (std::size_t l = 0; l < config_.dec_layers; ++l) {
    const std::string n = "dec." + std::to_string(l);
    DecoderLayer L;
    L.ln1 = make_ln(n + ".ln1", d);
    L.self_attn = make_attn(n + ".self_attn", config_, rng);
    L.ln2 = make_ln(n + ".ln2", d);
    L.cross_attn = make_attn(n + ".cross_attn", config_, rng);
    L.ln3 = make_ln(n + ".ln3", d);
    L.mlp = make_mlp(n + ".mlp", config_, rng);
    decoder.push_back(std::move(L));
  }
  dec_norm = make_ln("dec.norm", d);
  // Small output scale keeps the initial loss near ln(vocab).
  out_w = make_param("out_w", d, v, rng, 0.5 / std::sqrt(static_cast<double>(d)));
  out_b = Parameter("out_b", DenseMatrix(1, v));
}

std::vector<Parameter*> Seq2SeqModel::parameters() {
  std::vector<Parameter*> out{&tok_emb, &enc_pos, &dec_pos};
  auto ln = [&](LayerNorm& n) {
    out.push_back(&n.gain);
    out.push_back(&n.bias);
  };
  auto attn = [&](Attention& a) {
    for (Parameter* p : {&a.wq, &a.wk, &a.wv, &a.wo}) out.push_back(p);
  };
  auto mlp = [&](Mlp& m) {
    for (Parameter* p : {&m.w1, &m.b1, &m.w2, &m.b2}) out.push_back(p);
  };
  for (auto& L : encoder) {
    ln(L.ln1);
    attn(L.attn);
    ln(L.ln2);
    mlp(L.mlp);
  }
  ln(enc_norm);
  for (auto& L : decoder) {
    ln(L.ln1);
    attn(L.self_attn);
    ln(L.ln2);
    attn(L.cross_attn);
    ln(L.ln3);
    mlp(L.mlp);
  }
  ln(dec_norm);
  out.push_back(&out_w);
  out.push_back(&out_b);
  return out;
}

std::vector<const Parameter*> Seq2SeqModel::parameters() const {
  auto ps = const_cast<Seq2SeqModel*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

std::size_t Seq2SeqModel::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->value.size();
  return n;
}

void Seq2SeqModel::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

DenseMatrix forward(const Seq2SeqModel& model, std::span<const int> input,
                    std::span<const int> decoder_input, Mode mode, Rng* dropout_rng) {
  if (mode == Mode::kTrain && dropout_rng == nullptr) {
    throw UsageError("forward: train mode needs a dropout Rng");
  }
  Rng* rng = mode == Mode::kTrain ? dropout_rng : nullptr;
  Tape t;
  add_input(model, t, input);
  add_decoder_input(model, t, decoder_input, t.enc_seg[0]);
  run_encoder(model, t, rng);
  run_decoder(model, t, rng);
  return DenseMatrix(project(model, t.dec_out));
}

std::vector<int> teacher_forcing_input(std::span<const int> target) {
  std::vector<int> out{TokenVocabulary::kBos};
  if (!target.empty()) out.insert(out.end(), target.begin(), target.end() - 1);
  return out;
}

double batch_loss(Seq2SeqModel& model, std::span<const TrainingExample> batch,
                  Rng* dropout_rng, bool accumulate_grads) {
  return loss_impl(model, batch, dropout_rng, accumulate_grads ? &model : nullptr);
}

double batch_loss(const Seq2SeqModel& model, std::span<const TrainingExample> batch) {
  return loss_impl(model, batch, nullptr, nullptr);
}

EncodedInput encode(const Seq2SeqModel& model, std::span<const int> input) {
  Tape t;
  add_input(model, t, input);
  run_encoder(model, t, nullptr);
  return {std::move(t.memory), std::move(t.enc_mask)};
}

MatrixRM next_code_log_probs(const Seq2SeqModel& model, const EncodedInput& encoded,
                             const std::vector<std::vector<int>>& prefixes,
                             double temperature) {
  if (!(temperature > 0.0)) throw UsageError("temperature must be positive");
  if (prefixes.empty()) return {};
  const std::size_t len = prefixes.front().size();
  if (len == 0 || len > model.vocab().levels()) {
    throw UsageError("next_code_log_probs: bad prefix length");
  }
  Tape t;
  t.memory = encoded.memory;
  t.enc_mask = encoded.key_mask;
  const Segment mem{0, encoded.memory.rows()};
  for (const auto& p : prefixes) {
    if (p.size() != len) throw UsageError("next_code_log_probs: ragged prefixes");
    add_decoder_input(model, t, p, mem);
  }
  run_decoder(model, t, nullptr);
  const std::size_t level = len - 1;
  const Index off = model.vocab().level_offset(level);
  const Index k = model.vocab().level_size(level);
  Mat last(static_cast<Index>(prefixes.size()), t.dec_out.cols());
  for (std::size_t i = 0; i < prefixes.size(); ++i) {
    last.row(static_cast<Index>(i)) =
        t.dec_out.row(static_cast<Index>(i * len + len - 1));
  }
  Mat logits = last * model.out_w.value.mat().middleCols(off, k);
  logits.rowwise() += model.out_b.value.mat().row(0).segment(off, k);
  logits /= temperature;
  for (Index r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double mx = row.maxCoeff();
    row.array() -= mx;
    row.array() -= std::log(row.array().exp().sum());
  }
  return logits;
}

void save_checkpoint(const Seq2SeqModel& model, const std::filesystem::path& path) {
  const auto& c = model.config();
  BinaryWriter w;
  w.bytes(std::string_view(kCkptMagic, 4));
  w.u32(kCkptVersion);
  for (std::size_t v : {c.enc_layers, c.dec_layers, c.heads, c.head_dim, c.model_dim,
                        c.mlp_dim, c.max_input_len, c.decode_len}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.f64(c.dropout);
  w.u32(c.use_user_token ? 1 : 0);
  const auto& vocab = model.vocab();
  w.u32(static_cast<std::uint32_t>(vocab.levels()));
  for (int k : vocab.level_sizes()) w.u32(static_cast<std::uint32_t>(k));
  w.u32(static_cast<std::uint32_t>(vocab.user_buckets()));
  w.u64(model.seed());
  w.u64(model.step());
  const auto params = model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    w.str(p->name);
    w.matrix(p->value);
    w.matrix(p->accum);
  }
  w.write_file(path);
}

Seq2SeqModel load_checkpoint(const std::filesystem::path& path) {
  auto r = BinaryReader::from_file(path);
  if (r.bytes(4) != std::string_view(kCkptMagic, 4)) {
    throw DataError(path.string() + ": bad magic, expected TGRC");
  }
  if (r.u32() != kCkptVersion) throw DataError(path.string() + ": unsupported version");
  TransformerConfig c;
  for (std::size_t* v : {&c.enc_layers, &c.dec_layers, &c.heads, &c.head_dim,
                         &c.model_dim, &c.mlp_dim, &c.max_input_len, &c.decode_len}) {
    *v = r.u32();
  }
  c.dropout = r.f64();
  c.use_user_token = r.u32() != 0;
  std::vector<int> levels(r.u32());
  for (int& k : levels) k = static_cast<int>(r.u32());
  const int buckets = static_cast<int>(r.u32());
  const std::uint64_t seed = r.u64();
  const std::uint64_t step = r.u64();
  Seq2SeqModel model(c, TokenVocabulary(levels, buckets), seed);
  model.set_step(step);
  auto params = model.parameters();
  if (r.u32() != params.size()) throw DataError(path.string() + ": parameter count mismatch");
  for (Parameter* p : params) {
    if (r.str() != p->name) throw DataError(path.string() + ": parameter order mismatch");
    r.matrix_into(p->value);
    r.matrix_into(p->accum);
  }
  if (!r.at_end()) throw DataError(path.string() + ": trailing bytes");
  return model;
}

}  // namespace tiger

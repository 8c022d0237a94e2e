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

// Encoder-decoder transformer over the token vocabulary. Pre-norm residual
// blocks, learned absolute positions, ReLU MLPs, untied output projection.
// Gradients are computed by an explicit backward pass over a forward tape.

#ifndef TIGER_TRANSFORMER_HPP_
#define TIGER_TRANSFORMER_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tiger/numeric.hpp"
#include "tiger/vocabulary.hpp"

namespace tiger {

struct TransformerConfig {
  std::size_t enc_layers = 4;
  std::size_t dec_layers = 4;
  std::size_t heads = 6;
  std::size_t head_dim = 64;
  std::size_t model_dim = 128;
  std::size_t mlp_dim = 1024;
  double dropout = 0.1;
  std::size_t max_input_len = 1 + 20 * 4;
  std::size_t decode_len = 4;
  bool use_user_token = true;

  std::size_t attention_width() const { return heads * head_dim; }
  // Throws UsageError for zero dims or dropout outside [0, 1).
  void validate() const;
  friend bool operator==(const TransformerConfig&, const TransformerConfig&) = default;
};

enum class Mode { kTrain, kEval };

class Seq2SeqModel {
 public:
  struct LayerNorm {
    Parameter gain, bias;
  };
  struct Attention {
    Parameter wq, wk, wv, wo;
  };
  struct Mlp {
    Parameter w1, b1, w2, b2;
  };
  struct EncoderLayer {
    LayerNorm ln1;
    Attention attn;
    LayerNorm ln2;
    Mlp mlp;
  };
  struct DecoderLayer {
    LayerNorm ln1;
    Attention self_attn;
    LayerNorm ln2;
    Attention cross_attn;
    LayerNorm ln3;
    Mlp mlp;
  };

  Seq2SeqModel() = default;
  Seq2SeqModel(TransformerConfig config, TokenVocabulary vocab, std::uint64_t seed);

  const TransformerConfig& config() const { return config_; }
  const TokenVocabulary& vocab() const { return vocab_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t s) { step_ = s; }

  // Fixed order; used by the optimizer, checkpoints and gradient checks.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  Parameter tok_emb;  // vocab × model_dim
  Parameter enc_pos;  // max_input_len × model_dim
  Parameter dec_pos;  // decode_len × model_dim
  std::vector<EncoderLayer> encoder;
  LayerNorm enc_norm;
  std::vector<DecoderLayer> decoder;
  LayerNorm dec_norm;
  Parameter out_w;  // model_dim × vocab
  Parameter out_b;  // 1 × vocab

 private:
  TransformerConfig config_;
  TokenVocabulary vocab_;
  std::uint64_t seed_ = 0;
  std::uint64_t step_ = 0;
};

// Logits (decoder positions × vocab) for one example. PAD input tokens are
// masked as attention keys. Train mode needs dropout_rng; eval mode ignores
// it. Throws UsageError for out-of-range tokens or over-long sequences.
DenseMatrix forward(const Seq2SeqModel& model, std::span<const int> input,
                    std::span<const int> decoder_input, Mode mode = Mode::kEval,
                    Rng* dropout_rng = nullptr);

// [BOS, t0, ..., t_{n-2}] for target [t0, ..., t_{n-1}].
std::vector<int> teacher_forcing_input(std::span<const int> target);

// Mean cross-entropy over every target position in the batch, with the
// softmax over the full vocabulary. Dropout is active iff dropout_rng is
// non-null. With accumulate_grads the gradients are added to param.grad.
double batch_loss(Seq2SeqModel& model, std::span<const TrainingExample> batch,
                  Rng* dropout_rng, bool accumulate_grads);
double batch_loss(const Seq2SeqModel& model, std::span<const TrainingExample> batch);

// Encoder output for one input, reused across decoding steps.
struct EncodedInput {
  MatrixRM memory;
  std::vector<char> key_mask;
};
EncodedInput encode(const Seq2SeqModel& model, std::span<const int> input);

// For each prefix [BOS, c_0 tokens...] of equal length t+1, the log-softmax
// over the level-t codeword block of the logits at position t (rows =
// prefixes, cols = level size), after dividing logits by temperature.
MatrixRM next_code_log_probs(const Seq2SeqModel& model, const EncodedInput& encoded,
                             const std::vector<std::vector<int>>& prefixes,
                             double temperature = 1.0);

// Checkpoint "TGRC": config, vocabulary, seed, step, then every parameter's
// values and Adagrad accumulator as f64.
void save_checkpoint(const Seq2SeqModel& model, const std::filesystem::path& path);
Seq2SeqModel load_checkpoint(const std::filesystem::path& path);

}  // namespace tiger

#endif  // TIGER_TRANSFORMER_HPP_

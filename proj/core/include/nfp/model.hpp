#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nfp/kernels.hpp"
#include "nfp/rng.hpp"
#include "nfp/tensor.hpp"
#include "nfp/tokenizer.hpp"

namespace nfp {

// Encoder geometry. Defaults mirror BERT-Tiny (2 layers, hidden 128),
// scaled down by whatever vocabulary the caller builds.
struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t hidden_dim = 128;
  std::size_t num_layers = 2;
  std::size_t num_heads = 2;
  std::size_t ff_dim = 512;
  std::size_t max_len = 128;
  double dropout_p = 0.1;
  double init_stddev = 0.02;

  void validate() const;
  std::size_t head_dim() const { return hidden_dim / num_heads; }
};

struct LayerParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // attention projections
  Tensor ln1_gamma, ln1_beta;
  Tensor ff_w1, ff_b1, ff_w2, ff_b2;
  Tensor ln2_gamma, ln2_beta;
};

// The full trainable weight set. visit() enumerates every tensor in the
// fixed serialization order used by checkpoints, Adam state, and the
// gradient checker:
//   word_embeddings, positional_embeddings,
//   layer<i>.{wq,bq,wk,bk,wv,bv,wo,bo,ln1_gamma,ln1_beta,
//             ff_w1,ff_b1,ff_w2,ff_b2,ln2_gamma,ln2_beta},
//   head.w, head.b
struct Parameters {
  Tensor word_embeddings;        // [vocab x hidden]
  Tensor positional_embeddings;  // [max_len x hidden]
  std::vector<LayerParams> layers;
  Tensor head_w;  // [hidden x 1]
  Tensor head_b;  // [1]

  template <typename F>
  void visit(F&& f) {
    f("word_embeddings", word_embeddings);
    f("positional_embeddings", positional_embeddings);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string p = "layer" + std::to_string(i) + ".";
      LayerParams& l = layers[i];
      f(p + "wq", l.wq); f(p + "bq", l.bq);
      f(p + "wk", l.wk); f(p + "bk", l.bk);
      f(p + "wv", l.wv); f(p + "bv", l.bv);
      f(p + "wo", l.wo); f(p + "bo", l.bo);
      f(p + "ln1_gamma", l.ln1_gamma); f(p + "ln1_beta", l.ln1_beta);
      f(p + "ff_w1", l.ff_w1); f(p + "ff_b1", l.ff_b1);
      f(p + "ff_w2", l.ff_w2); f(p + "ff_b2", l.ff_b2);
      f(p + "ln2_gamma", l.ln2_gamma); f(p + "ln2_beta", l.ln2_beta);
    }
    f("head.w", head_w);
    f("head.b", head_b);
  }

  template <typename F>
  void visit(F&& f) const {
    const_cast<Parameters*>(this)->visit(
        [&f](const std::string& name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
  }

  std::size_t parameter_count() const;
};

using Gradients = Parameters;

// Weights ~ truncated normal(0, init_stddev) redrawn beyond 2 sigma; biases
// and layer-norm betas zero; layer-norm gammas one.
Parameters init_params(const ModelConfig& config, Rng& rng);
Parameters zeros_like_params(const ModelConfig& config);

// word_embedding[id] + positional_embedding[position] for every position
// up to max_len (padding positions embed [PAD] like any other id).
Tensor embed(const TokenSequence& tokens, const Parameters& params,
             const ModelConfig& config);

// Caches everything the backward pass replays.
struct AttentionContext {
  Tensor q, k, v;                    // [T x hidden]
  std::vector<Tensor> head_weights;  // per head [T x T], masked keys at 0
  Tensor concat;                     // [T x hidden]
};

struct BlockContext {
  Tensor input;            // x
  AttentionContext attn;
  Tensor attn_out;         // attention(x)
  Tensor attn_drop_mask;
  Tensor ln1_in;           // x + dropout(attention(x))
  Tensor ln1_out;          // y
  Tensor ff_pre;           // y*W1 + b1
  Tensor ff_act;           // gelu(ff_pre)
  Tensor ff_out;           // gelu(..)*W2 + b2
  Tensor ff_drop_mask;
  Tensor ln2_in;           // y + dropout(ff_out)
};

struct ExampleContext {
  std::size_t true_length = 0;
  std::vector<std::size_t> ids;    // first true_length token ids
  Tensor embedded;                 // [T x hidden]
  std::vector<BlockContext> blocks;
  Tensor cls_hidden;               // [1 x hidden] before head dropout
  Tensor cls_drop_mask;
  double prediction = 0.0;
};

// Multi-head scaled dot-product attention over the mask's unmasked keys.
// Throws if every key is masked.
Tensor attention(const Tensor& x, const LayerParams& layer,
                 const std::vector<std::uint8_t>& mask, const ModelConfig& config,
                 AttentionContext* ctx = nullptr);

// Post-layer-norm residual block:
//   y = LN1(x + Dropout(Attention(x)));  z = LN2(y + Dropout(FF_GELU(y)))
Tensor encoder_block(const Tensor& x, const LayerParams& layer,
                     const std::vector<std::uint8_t>& mask, const ModelConfig& config,
                     Rng* dropout_rng, bool training, BlockContext* ctx = nullptr);

// Per example: embed -> N encoder blocks -> [CLS] hidden state -> dropout ->
// linear head -> scalar. Examples are processed independently; only the
// first true_length positions enter the computation.
std::vector<double> forward(const std::vector<TokenSequence>& batch,
                            const Parameters& params, const ModelConfig& config,
                            Rng* dropout_rng, bool training,
                            std::vector<ExampleContext>* contexts = nullptr);

struct BackwardResult {
  Gradients grads;
  double loss = 0.0;
  std::vector<double> predictions;
};

// Runs the training-mode forward pass (consuming dropout_rng exactly like
// forward would) and backpropagates the MSE loss through the whole model.
BackwardResult backward(const std::vector<TokenSequence>& batch,
                        const std::vector<double>& targets,
                        const Parameters& params, const ModelConfig& config,
                        Rng& dropout_rng);

}  // namespace nfp

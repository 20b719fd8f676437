#include "nfp/model.hpp"

#include <cmath>
#include <stdexcept>

namespace nfp {

namespace {

constexpr double kLayerNormEps = 1e-5;

void add_row_bias(Tensor& t, const Tensor& bias) {
  const std::size_t r = t.rows(), c = t.cols();
  if (bias.numel() != c) {
    throw std::invalid_argument("bias length does not match columns");
  }
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) t.at(i, j) += bias[j];
  }
}

Tensor col_sums(const Tensor& t) {
  Tensor out = Tensor::zeros({t.cols()});
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) out[j] += t.at(i, j);
  }
  return out;
}

Tensor slice_cols(const Tensor& t, std::size_t offset, std::size_t width) {
  Tensor out = Tensor::zeros({t.rows(), width});
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < width; ++j) out.at(i, j) = t.at(i, offset + j);
  }
  return out;
}

void add_cols(Tensor& dst, std::size_t offset, const Tensor& src) {
  for (std::size_t i = 0; i < src.rows(); ++i) {
    for (std::size_t j = 0; j < src.cols(); ++j) dst.at(i, offset + j) += src.at(i, j);
  }
}

Tensor transpose(const Tensor& t) {
  Tensor out = Tensor::zeros({t.cols(), t.rows()});
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) out.at(j, i) = t.at(i, j);
  }
  return out;
}

Tensor embed_rows(const std::vector<std::size_t>& ids, const Parameters& params,
                  const ModelConfig& config) {
  const std::size_t h = config.hidden_dim;
  Tensor out = Tensor::zeros({ids.size(), h});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] >= config.vocab_size) {
      throw std::out_of_range("embed: token id " + std::to_string(ids[t]) +
                              " out of range for vocab size " +
                              std::to_string(config.vocab_size));
    }
    for (std::size_t j = 0; j < h; ++j) {
      out.at(t, j) = params.word_embeddings.at(ids[t], j) +
                     params.positional_embeddings.at(t, j);
    }
  }
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 4) {
    throw std::invalid_argument("model config: vocab_size must cover the reserved ids");
  }
  if (hidden_dim == 0 || num_layers == 0 || num_heads == 0 || ff_dim == 0) {
    throw std::invalid_argument("model config: dimensions must be >= 1");
  }
  if (hidden_dim % num_heads != 0) {
    throw std::invalid_argument("model config: hidden_dim must be divisible by num_heads");
  }
  if (max_len < 2) {
    throw std::invalid_argument("model config: max_len must be >= 2");
  }
  if (dropout_p < 0.0 || dropout_p >= 1.0) {
    throw std::invalid_argument("model config: dropout_p must be in [0, 1)");
  }
  if (!(init_stddev > 0.0) || !std::isfinite(init_stddev)) {
    throw std::invalid_argument("model config: init_stddev must be > 0");
  }
}

std::size_t Parameters::parameter_count() const {
  std::size_t n = 0;
  visit([&n](const std::string&, const Tensor& t) { n += t.numel(); });
  return n;
}

Parameters zeros_like_params(const ModelConfig& config) {
  const std::size_t h = config.hidden_dim, f = config.ff_dim;
  Parameters p;
  p.word_embeddings = Tensor::zeros({config.vocab_size, h});
  p.positional_embeddings = Tensor::zeros({config.max_len, h});
  p.layers.resize(config.num_layers);
  for (LayerParams& l : p.layers) {
    l.wq = Tensor::zeros({h, h}); l.bq = Tensor::zeros({h});
    l.wk = Tensor::zeros({h, h}); l.bk = Tensor::zeros({h});
    l.wv = Tensor::zeros({h, h}); l.bv = Tensor::zeros({h});
    l.wo = Tensor::zeros({h, h}); l.bo = Tensor::zeros({h});
    l.ln1_gamma = Tensor::zeros({h}); l.ln1_beta = Tensor::zeros({h});
    l.ff_w1 = Tensor::zeros({h, f}); l.ff_b1 = Tensor::zeros({f});
    l.ff_w2 = Tensor::zeros({f, h}); l.ff_b2 = Tensor::zeros({h});
    l.ln2_gamma = Tensor::zeros({h}); l.ln2_beta = Tensor::zeros({h});
  }
  p.head_w = Tensor::zeros({h, 1});
  p.head_b = Tensor::zeros({1});
  return p;
}

Parameters init_params(const ModelConfig& config, Rng& rng) {
  config.validate();
  Parameters p = zeros_like_params(config);
  const auto fill_normal = [&](Tensor& t) {
    for (double& v : t.data) v = rng.next_truncated_normal(config.init_stddev);
  };
  // Draw order matches the visit()/serialization order.
  fill_normal(p.word_embeddings);
  fill_normal(p.positional_embeddings);
  for (LayerParams& l : p.layers) {
    fill_normal(l.wq);
    fill_normal(l.wk);
    fill_normal(l.wv);
    fill_normal(l.wo);
    l.ln1_gamma = Tensor::full({config.hidden_dim}, 1.0);
    fill_normal(l.ff_w1);
    fill_normal(l.ff_w2);
    l.ln2_gamma = Tensor::full({config.hidden_dim}, 1.0);
  }
  fill_normal(p.head_w);
  return p;
}

Tensor embed(const TokenSequence& tokens, const Parameters& params,
             const ModelConfig& config) {
  return embed_rows(tokens.ids, params, config);
}

Tensor attention(const Tensor& x, const LayerParams& layer,
                 const std::vector<std::uint8_t>& mask, const ModelConfig& config,
                 AttentionContext* ctx) {
  const std::size_t t_len = x.rows();
  const std::size_t h = config.hidden_dim;
  const std::size_t n_heads = config.num_heads;
  const std::size_t dk = config.head_dim();
  if (mask.size() != t_len) {
    throw std::invalid_argument("attention: mask length must equal sequence length");
  }
  bool any_unmasked = false;
  for (std::uint8_t m : mask) any_unmasked = any_unmasked || (m != 0);
  if (!any_unmasked) {
    throw std::invalid_argument("attention: all key positions are masked");
  }

  Tensor q = matmul(x, layer.wq);
  add_row_bias(q, layer.bq);
  Tensor k = matmul(x, layer.wk);
  add_row_bias(k, layer.bk);
  Tensor v = matmul(x, layer.wv);
  add_row_bias(v, layer.bv);

  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Tensor concat = Tensor::zeros({t_len, h});
  std::vector<Tensor> head_weights;
  head_weights.reserve(n_heads);

  for (std::size_t head = 0; head < n_heads; ++head) {
    const std::size_t off = head * dk;
    // Scaled dot-product scores; masked keys receive -inf before the
    // softmax, realized as zero weight with max-subtracted exp-normalize
    // over the unmasked keys only.
    Tensor weights = Tensor::zeros({t_len, t_len});
    for (std::size_t i = 0; i < t_len; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      std::vector<double> scores(t_len, 0.0);
      for (std::size_t j = 0; j < t_len; ++j) {
        if (!mask[j]) continue;
        double s = 0.0;
        for (std::size_t d = 0; d < dk; ++d) s += q.at(i, off + d) * k.at(j, off + d);
        s *= scale;
        scores[j] = s;
        mx = std::max(mx, s);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < t_len; ++j) {
        if (!mask[j]) continue;
        const double e = std::exp(scores[j] - mx);
        weights.at(i, j) = e;
        sum += e;
      }
      for (std::size_t j = 0; j < t_len; ++j) weights.at(i, j) /= sum;
    }
    check_finite(weights, "attention weights");
    for (std::size_t i = 0; i < t_len; ++i) {
      for (std::size_t j = 0; j < t_len; ++j) {
        const double w = weights.at(i, j);
        if (w == 0.0) continue;
        for (std::size_t d = 0; d < dk; ++d) {
          concat.at(i, off + d) += w * v.at(j, off + d);
        }
      }
    }
    head_weights.push_back(std::move(weights));
  }

  Tensor out = matmul(concat, layer.wo);
  add_row_bias(out, layer.bo);
  check_finite(out, "attention output");

  if (ctx) {
    ctx->q = std::move(q);
    ctx->k = std::move(k);
    ctx->v = std::move(v);
    ctx->head_weights = std::move(head_weights);
    ctx->concat = std::move(concat);
  }
  return out;
}

Tensor encoder_block(const Tensor& x, const LayerParams& layer,
                     const std::vector<std::uint8_t>& mask, const ModelConfig& config,
                     Rng* dropout_rng, bool training, BlockContext* ctx) {
  if (training && config.dropout_p > 0.0 && dropout_rng == nullptr) {
    throw std::invalid_argument("encoder_block: training with dropout needs an rng");
  }
  Rng unused(0, "unused");
  Rng& rng = dropout_rng ? *dropout_rng : unused;

  AttentionContext attn_ctx;
  Tensor attn_out = attention(x, layer, mask, config, ctx ? &attn_ctx : nullptr);

  Tensor attn_mask;
  Tensor attn_dropped = dropout(attn_out, config.dropout_p, rng, training,
                                ctx ? &attn_mask : nullptr);

  Tensor ln1_in = x;
  add_inplace(ln1_in, attn_dropped);
  Tensor y = layer_norm(ln1_in, layer.ln1_gamma, layer.ln1_beta, kLayerNormEps);

  Tensor ff_pre = matmul(y, layer.ff_w1);
  add_row_bias(ff_pre, layer.ff_b1);
  Tensor ff_act = gelu(ff_pre);
  Tensor ff_out = matmul(ff_act, layer.ff_w2);
  add_row_bias(ff_out, layer.ff_b2);

  Tensor ff_mask;
  Tensor ff_dropped = dropout(ff_out, config.dropout_p, rng, training,
                              ctx ? &ff_mask : nullptr);

  Tensor ln2_in = y;
  add_inplace(ln2_in, ff_dropped);
  Tensor z = layer_norm(ln2_in, layer.ln2_gamma, layer.ln2_beta, kLayerNormEps);

  if (ctx) {
    ctx->input = x;
    ctx->attn = std::move(attn_ctx);
    ctx->attn_out = std::move(attn_out);
    ctx->attn_drop_mask = std::move(attn_mask);
    ctx->ln1_in = std::move(ln1_in);
    ctx->ln1_out = std::move(y);
    ctx->ff_pre = std::move(ff_pre);
    ctx->ff_act = std::move(ff_act);
    ctx->ff_out = std::move(ff_out);
    ctx->ff_drop_mask = std::move(ff_mask);
    ctx->ln2_in = std::move(ln2_in);
    return z;
  }
  return z;
}

std::vector<double> forward(const std::vector<TokenSequence>& batch,
                            const Parameters& params, const ModelConfig& config,
                            Rng* dropout_rng, bool training,
                            std::vector<ExampleContext>* contexts) {
  if (batch.empty()) {
    throw std::invalid_argument("forward: batch is empty");
  }
  if (training && config.dropout_p > 0.0 && dropout_rng == nullptr) {
    throw std::invalid_argument("forward: training with dropout needs an rng");
  }
  if (contexts) contexts->assign(batch.size(), {});

  std::vector<double> predictions;
  predictions.reserve(batch.size());
  Rng unused(0, "unused");
  Rng& rng = dropout_rng ? *dropout_rng : unused;

  for (std::size_t e = 0; e < batch.size(); ++e) {
    const TokenSequence& seq = batch[e];
    if (seq.true_length < 2 || seq.true_length > seq.ids.size()) {
      throw std::invalid_argument("forward: malformed token sequence");
    }
    ExampleContext local;
    ExampleContext& ctx = contexts ? (*contexts)[e] : local;
    const bool keep = contexts != nullptr;

    // Padding positions never enter: only the true_length prefix is
    // computed, so enlarging max_len cannot change predictions.
    ctx.true_length = seq.true_length;
    ctx.ids.assign(seq.ids.begin(),
                   seq.ids.begin() + static_cast<std::ptrdiff_t>(seq.true_length));
    const std::vector<std::uint8_t> mask(seq.true_length, 1);

    Tensor x = embed_rows(ctx.ids, params, config);
    if (keep) ctx.embedded = x;
    if (keep) ctx.blocks.resize(config.num_layers);
    for (std::size_t l = 0; l < config.num_layers; ++l) {
      x = encoder_block(x, params.layers[l], mask, config,
                        training ? &rng : nullptr, training,
                        keep ? &ctx.blocks[l] : nullptr);
    }

    Tensor cls = Tensor::from(
        {1, config.hidden_dim},
        std::vector<double>(x.data.begin(), x.data.begin() + config.hidden_dim));
    if (keep) ctx.cls_hidden = cls;

    Tensor cls_mask;
    Tensor dropped = dropout(cls, config.dropout_p, rng, training,
                             keep ? &cls_mask : nullptr);
    if (keep) ctx.cls_drop_mask = std::move(cls_mask);

    double pred = params.head_b[0];
    for (std::size_t j = 0; j < config.hidden_dim; ++j) {
      pred += dropped.at(0, j) * params.head_w.at(j, 0);
    }
    check_finite(pred, "forward prediction");
    ctx.prediction = pred;
    predictions.push_back(pred);
  }
  return predictions;
}

namespace {

// Backward through one encoder block; returns dL/dx and accumulates the
// layer parameter gradients.
Tensor encoder_block_backward(const BlockContext& ctx, const Tensor& dz,
                              const LayerParams& layer, LayerParams& grads,
                              const ModelConfig& config) {
  const double p = config.dropout_p;

  // z = LN2(ln2_in)
  Tensor d_ln2_in, dgamma2, dbeta2;
  layer_norm_grad(ctx.ln2_in, layer.ln2_gamma, kLayerNormEps, dz, d_ln2_in,
                  dgamma2, dbeta2);
  add_inplace(grads.ln2_gamma, dgamma2);
  add_inplace(grads.ln2_beta, dbeta2);

  // ln2_in = y + dropout(ff_out)
  Tensor dy = d_ln2_in;
  Tensor dff_out = dropout_grad(d_ln2_in, ctx.ff_drop_mask, p);

  // ff_out = gelu(ff_pre) * W2 + b2
  Tensor dff_act, dw2;
  matmul_grad(ctx.ff_act, layer.ff_w2, dff_out, dff_act, dw2);
  add_inplace(grads.ff_w2, dw2);
  add_inplace(grads.ff_b2, col_sums(dff_out));

  Tensor dff_pre = gelu_grad(ctx.ff_pre, dff_act);

  // ff_pre = y * W1 + b1
  Tensor dy_ff, dw1;
  matmul_grad(ctx.ln1_out, layer.ff_w1, dff_pre, dy_ff, dw1);
  add_inplace(grads.ff_w1, dw1);
  add_inplace(grads.ff_b1, col_sums(dff_pre));
  add_inplace(dy, dy_ff);

  // y = LN1(ln1_in)
  Tensor d_ln1_in, dgamma1, dbeta1;
  layer_norm_grad(ctx.ln1_in, layer.ln1_gamma, kLayerNormEps, dy, d_ln1_in,
                  dgamma1, dbeta1);
  add_inplace(grads.ln1_gamma, dgamma1);
  add_inplace(grads.ln1_beta, dbeta1);

  // ln1_in = x + dropout(attention(x))
  Tensor dx = d_ln1_in;
  Tensor dattn_out = dropout_grad(d_ln1_in, ctx.attn_drop_mask, p);

  // attention out = concat * Wo + bo
  Tensor dconcat, dwo;
  matmul_grad(ctx.attn.concat, layer.wo, dattn_out, dconcat, dwo);
  add_inplace(grads.wo, dwo);
  add_inplace(grads.bo, col_sums(dattn_out));

  const std::size_t dk = config.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Tensor dq = Tensor::zeros(ctx.attn.q.shape);
  Tensor dkk = Tensor::zeros(ctx.attn.k.shape);
  Tensor dv = Tensor::zeros(ctx.attn.v.shape);

  for (std::size_t head = 0; head < config.num_heads; ++head) {
    const std::size_t off = head * dk;
    const Tensor& w = ctx.attn.head_weights[head];
    const Tensor v_h = slice_cols(ctx.attn.v, off, dk);
    const Tensor q_h = slice_cols(ctx.attn.q, off, dk);
    const Tensor k_h = slice_cols(ctx.attn.k, off, dk);
    const Tensor dctx_h = slice_cols(dconcat, off, dk);

    // ctx_h = W * V_h
    Tensor dw_h, dv_h;
    matmul_grad(w, v_h, dctx_h, dw_h, dv_h);
    add_cols(dv, off, dv_h);

    // softmax rows; masked weights are zero so their score grads vanish
    Tensor ds = softmax_grad(w, dw_h);
    scale_inplace(ds, scale);

    // scores = q_h * k_h^T (pre-scale)
    Tensor dq_h = matmul(ds, k_h);
    Tensor dk_h = matmul(transpose(ds), q_h);
    add_cols(dq, off, dq_h);
    add_cols(dkk, off, dk_h);
  }

  // q = x*Wq + bq, k = x*Wk + bk, v = x*Wv + bv
  Tensor dx_part, dwq, dwk, dwv;
  matmul_grad(ctx.input, layer.wq, dq, dx_part, dwq);
  add_inplace(grads.wq, dwq);
  add_inplace(grads.bq, col_sums(dq));
  add_inplace(dx, dx_part);

  matmul_grad(ctx.input, layer.wk, dkk, dx_part, dwk);
  add_inplace(grads.wk, dwk);
  add_inplace(grads.bk, col_sums(dkk));
  add_inplace(dx, dx_part);

  matmul_grad(ctx.input, layer.wv, dv, dx_part, dwv);
  add_inplace(grads.wv, dwv);
  add_inplace(grads.bv, col_sums(dv));
  add_inplace(dx, dx_part);

  return dx;
}

}  // namespace

BackwardResult backward(const std::vector<TokenSequence>& batch,
                        const std::vector<double>& targets,
                        const Parameters& params, const ModelConfig& config,
                        Rng& dropout_rng) {
  if (batch.size() != targets.size()) {
    throw std::invalid_argument("backward: batch/target sizes disagree");
  }
  std::vector<ExampleContext> contexts;
  const std::vector<double> preds =
      forward(batch, params, config, &dropout_rng, true, &contexts);

  const double n = static_cast<double>(batch.size());
  BackwardResult result;
  result.grads = zeros_like_params(config);
  result.predictions = preds;

  double loss = 0.0;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const double r = preds[e] - targets[e];
    loss += r * r;
  }
  result.loss = loss / n;

  for (std::size_t e = 0; e < batch.size(); ++e) {
    const ExampleContext& ctx = contexts[e];
    const double dpred = 2.0 * (preds[e] - targets[e]) / n;

    // head: pred = dropout(cls) . head_w + head_b
    const double p = config.dropout_p;
    const double keep_scale = 1.0 / (1.0 - p);
    Tensor ddropped = Tensor::zeros({1, config.hidden_dim});
    for (std::size_t j = 0; j < config.hidden_dim; ++j) {
      const double dropped_j =
          ctx.cls_hidden.at(0, j) * ctx.cls_drop_mask.at(0, j) * keep_scale;
      result.grads.head_w.at(j, 0) += dpred * dropped_j;
      ddropped.at(0, j) = dpred * params.head_w.at(j, 0);
    }
    result.grads.head_b[0] += dpred;

    Tensor dcls = dropout_grad(ddropped, ctx.cls_drop_mask, p);

    // Seed the block gradient at the [CLS] row.
    Tensor dz = Tensor::zeros({ctx.true_length, config.hidden_dim});
    for (std::size_t j = 0; j < config.hidden_dim; ++j) dz.at(0, j) = dcls.at(0, j);

    for (std::size_t l = config.num_layers; l-- > 0;) {
      dz = encoder_block_backward(ctx.blocks[l], dz, params.layers[l],
                                  result.grads.layers[l], config);
    }

    // embeddings
    for (std::size_t t = 0; t < ctx.true_length; ++t) {
      for (std::size_t j = 0; j < config.hidden_dim; ++j) {
        result.grads.word_embeddings.at(ctx.ids[t], j) += dz.at(t, j);
        result.grads.positional_embeddings.at(t, j) += dz.at(t, j);
      }
    }
  }
  return result;
}

}  // namespace nfp

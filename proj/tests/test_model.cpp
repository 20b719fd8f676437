#include <doctest.h>

#include <cmath>

#include "nfp/kernels.hpp"
#include "nfp/model.hpp"
#include "nfp/rng.hpp"
#include "nfp/training.hpp"
#include "testing.hpp"

using namespace nfp;

namespace {

ModelConfig micro_config() {
  ModelConfig c;
  c.vocab_size = 50;
  c.hidden_dim = 8;
  c.num_layers = 1;
  c.num_heads = 1;
  c.ff_dim = 16;
  c.max_len = 6;
  c.dropout_p = 0.0;
  return c;
}

TokenSequence full_sequence(Rng& rng, const ModelConfig& c) {
  TokenSequence seq;
  seq.true_length = c.max_len;
  seq.ids.assign(c.max_len, 0);
  seq.mask.assign(c.max_len, 1);
  seq.ids.front() = Vocabulary::kCls;
  seq.ids.back() = Vocabulary::kSep;
  for (std::size_t i = 1; i + 1 < c.max_len; ++i) {
    seq.ids[i] = 4 + rng.next_below(c.vocab_size - 4);
  }
  return seq;
}

bool params_equal(const Parameters& a, const Parameters& b) {
  bool equal = true;
  const_cast<Parameters&>(a).visit([&](const std::string& name, Tensor& t) {
    Tensor* other = nullptr;
    const_cast<Parameters&>(b).visit([&](const std::string& n2, Tensor& t2) {
      if (n2 == name) other = &t2;
    });
    equal = equal && other != nullptr && other->data == t.data;
  });
  return equal;
}

}  // namespace

TEST_CASE("init_params: seed determinism and truncation bounds") {
  ModelConfig c = micro_config();
  Rng r1(9, "init"), r2(9, "init");
  const Parameters a = init_params(c, r1);
  const Parameters b = init_params(c, r2);
  CHECK(params_equal(a, b));

  const double bound = 2.0 * c.init_stddev;
  const_cast<Parameters&>(a).visit([&](const std::string& name, Tensor& t) {
    if (name.find("gamma") != std::string::npos) return;
    for (double v : t.data) CHECK(std::fabs(v) <= bound);
  });

  // biases zero, gammas one
  CHECK(a.layers[0].bq.data == std::vector<double>(8, 0.0));
  CHECK(a.layers[0].ln1_gamma.data == std::vector<double>(8, 1.0));
  CHECK(a.head_b[0] == 0.0);
}

TEST_CASE("init_params: empirical stddev of a 128x128 weight") {
  ModelConfig c;
  c.vocab_size = 128;
  c.hidden_dim = 128;
  Rng rng(12, "init");
  const Parameters p = init_params(c, rng);
  const Tensor& w = p.word_embeddings;  // 128x128
  double mean = 0.0;
  for (double v : w.data) mean += v;
  mean /= static_cast<double>(w.numel());
  double var = 0.0;
  for (double v : w.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(w.numel() - 1);
  const double stddev = std::sqrt(var);
  CHECK(stddev == doctest::Approx(0.0194).epsilon(0.10));
}

TEST_CASE("truncated normal draws match the analytic truncated stddev") {
  // stddev of N(0, 0.02) conditioned on |x| <= 2 sigma is 0.0175922.
  Rng rng(13, "init");
  const std::size_t n = 200000;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = rng.next_truncated_normal(0.02);
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / n;
  const double stddev = std::sqrt(sum_sq / n - mean * mean);
  CHECK(stddev == doctest::Approx(0.0175922).epsilon(0.015));
}

TEST_CASE("embed: lookups sum word and positional tables") {
  ModelConfig c = micro_config();
  Parameters p = zeros_like_params(c);
  Rng rng(14, "init");
  for (double& v : p.word_embeddings.data) v = rng.next_double();
  for (double& v : p.positional_embeddings.data) v = rng.next_double();

  TokenSequence seq;
  seq.ids = {2, 7, 9, 7, 3, 0};
  seq.mask = {1, 1, 1, 1, 1, 0};
  seq.true_length = 5;

  const Tensor e = embed(seq, p, c);
  REQUIRE(e.rows() == 6);
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t j = 0; j < c.hidden_dim; ++j) {
      CHECK(e.at(t, j) == p.word_embeddings.at(seq.ids[t], j) +
                              p.positional_embeddings.at(t, j));
    }
  }
  // same id at two positions: identical word component, different positional
  for (std::size_t j = 0; j < c.hidden_dim; ++j) {
    CHECK(e.at(1, j) - p.positional_embeddings.at(1, j) ==
          doctest::Approx(e.at(3, j) - p.positional_embeddings.at(3, j))
              .epsilon(1e-12));
  }
  CHECK(e.data != embed(TokenSequence{{2, 7, 9, 9, 3, 0}, seq.mask, 5}, p, c).data);

  const Parameters zero = zeros_like_params(c);
  const Tensor ez = embed(seq, zero, c);
  for (double v : ez.data) CHECK(v == 0.0);

  TokenSequence bad = seq;
  bad.ids[2] = c.vocab_size + 5;
  CHECK_THROWS(embed(bad, p, c));
}

TEST_CASE("attention: single position puts weight 1 on itself") {
  ModelConfig c = micro_config();
  c.num_heads = 2;
  Rng rng(15, "init");
  const Parameters p = init_params(c, rng);
  const LayerParams& layer = p.layers[0];

  Tensor x = Tensor::zeros({1, c.hidden_dim});
  for (double& v : x.data) v = rng.next_double();

  AttentionContext ctx;
  const Tensor out = attention(x, layer, {1}, c, &ctx);

  // expected: output projection of the single V row
  Tensor v = matmul(x, layer.wv);
  for (std::size_t j = 0; j < c.hidden_dim; ++j) v.at(0, j) += layer.bv[j];
  Tensor expected = matmul(v, layer.wo);
  for (std::size_t j = 0; j < c.hidden_dim; ++j) expected.at(0, j) += layer.bo[j];

  for (std::size_t j = 0; j < c.hidden_dim; ++j) {
    CHECK(out.at(0, j) == doctest::Approx(expected.at(0, j)).epsilon(1e-12));
  }
  CHECK(ctx.head_weights[0].at(0, 0) == 1.0);
  CHECK(ctx.head_weights[1].at(0, 0) == 1.0);
}

TEST_CASE("attention: zero query projection gives uniform weights") {
  ModelConfig c = micro_config();
  Rng rng(16, "init");
  Parameters p = init_params(c, rng);
  LayerParams& layer = p.layers[0];
  layer.wq = Tensor::zeros({c.hidden_dim, c.hidden_dim});
  layer.bq = Tensor::zeros({c.hidden_dim});

  Tensor x = Tensor::zeros({4, c.hidden_dim});
  for (double& v : x.data) v = rng.next_double();

  AttentionContext ctx;
  attention(x, layer, {1, 1, 1, 1}, c, &ctx);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(ctx.head_weights[0].at(i, j) == doctest::Approx(0.25).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention: rows over unmasked keys sum to one") {
  ModelConfig c = micro_config();
  c.num_heads = 2;
  Rng rng(17, "init");
  const Parameters p = init_params(c, rng);
  Tensor x = Tensor::zeros({5, c.hidden_dim});
  for (double& v : x.data) v = 2.0 * rng.next_double() - 1.0;

  AttentionContext ctx;
  attention(x, p.layers[0], {1, 1, 0, 1, 1}, c, &ctx);
  for (const Tensor& w : ctx.head_weights) {
    for (std::size_t i = 0; i < 5; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < 5; ++j) sum += w.at(i, j);
      CHECK(std::fabs(sum - 1.0) <= 1e-12);
      CHECK(w.at(i, 2) == 0.0);
    }
  }
}

TEST_CASE("attention: masked positions cannot influence unmasked outputs") {
  ModelConfig c = micro_config();
  Rng rng(18, "init");
  const Parameters p = init_params(c, rng);

  Tensor x = Tensor::zeros({4, c.hidden_dim});
  for (double& v : x.data) v = rng.next_double();
  Tensor x2 = x;
  for (std::size_t j = 0; j < c.hidden_dim; ++j) x2.at(2, j) = 123.0 + double(j);

  const std::vector<std::uint8_t> mask = {1, 1, 0, 1};
  const Tensor a = attention(x, p.layers[0], mask, c);
  const Tensor b = attention(x2, p.layers[0], mask, c);
  for (std::size_t i : {0u, 1u, 3u}) {
    for (std::size_t j = 0; j < c.hidden_dim; ++j) {
      CHECK(a.at(i, j) == b.at(i, j));
    }
  }

  CHECK_THROWS(attention(x, p.layers[0], {0, 0, 0, 0}, c));
  CHECK_THROWS(attention(x, p.layers[0], {1, 1, 1}, c));
}

TEST_CASE("encoder_block: zero weights reduce to LN(LN(x)) and keep shape") {
  ModelConfig c = micro_config();
  c.num_heads = 2;
  Parameters p = zeros_like_params(c);
  LayerParams& layer = p.layers[0];
  layer.ln1_gamma = Tensor::full({c.hidden_dim}, 1.0);
  layer.ln2_gamma = Tensor::full({c.hidden_dim}, 1.0);

  Rng rng(19, "x");
  Tensor x = Tensor::zeros({3, c.hidden_dim});
  for (double& v : x.data) v = 3.0 * rng.next_double() - 1.5;

  const std::vector<std::uint8_t> mask(3, 1);
  const Tensor z = encoder_block(x, layer, mask, c, nullptr, false);
  CHECK(z.shape == x.shape);

  const Tensor gamma = Tensor::full({c.hidden_dim}, 1.0);
  const Tensor beta = Tensor::zeros({c.hidden_dim});
  const Tensor expected = layer_norm(layer_norm(x, gamma, beta), gamma, beta);
  for (std::size_t i = 0; i < z.data.size(); ++i) {
    CHECK(z.data[i] == doctest::Approx(expected.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("encoder_block: inference passes are bit-identical") {
  ModelConfig c = micro_config();
  c.dropout_p = 0.1;  // must not matter in inference mode
  Rng rng(20, "init");
  const Parameters p = init_params(c, rng);
  Tensor x = Tensor::zeros({4, c.hidden_dim});
  for (double& v : x.data) v = rng.next_double();

  const std::vector<std::uint8_t> mask(4, 1);
  const Tensor a = encoder_block(x, p.layers[0], mask, c, nullptr, false);
  const Tensor b = encoder_block(x, p.layers[0], mask, c, nullptr, false);
  CHECK(a.data == b.data);
}

TEST_CASE("forward: zero head weight gives the bias everywhere") {
  ModelConfig c = micro_config();
  Rng rng(21, "init");
  Parameters p = init_params(c, rng);
  p.head_w = Tensor::zeros({c.hidden_dim, 1});
  p.head_b[0] = 3.25;

  Rng data(22, "data");
  std::vector<TokenSequence> batch;
  for (int i = 0; i < 5; ++i) batch.push_back(full_sequence(data, c));
  const auto preds = forward(batch, p, c, nullptr, false);
  for (double v : preds) CHECK(v == 3.25);
}

TEST_CASE("forward: examples are independent of batch company") {
  ModelConfig c = micro_config();
  c.num_layers = 2;
  c.num_heads = 2;
  Rng rng(23, "init");
  const Parameters p = init_params(c, rng);

  Rng data(24, "data");
  std::vector<TokenSequence> batch;
  for (int i = 0; i < 8; ++i) batch.push_back(full_sequence(data, c));

  const auto together = forward(batch, p, c, nullptr, false);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto alone = forward({batch[i]}, p, c, nullptr, false);
    CHECK(std::fabs(together[i] - alone[0]) <= 1e-12);
  }
}

TEST_CASE("forward: padding invariance when max_len grows") {
  const Vocabulary v = build_vocab({"alpha beats earnings today"}, 300);
  ModelConfig vs = micro_config();
  vs.vocab_size = v.size();
  vs.max_len = 8;
  ModelConfig vb = vs;
  vb.max_len = 32;

  // Same weights; the big config's positional table holds extra rows the
  // short input never touches.
  Rng rs(26, "init"), rb(26, "init");
  Parameters ps = init_params(vs, rs);
  Parameters pb = init_params(vb, rb);
  pb.word_embeddings = ps.word_embeddings;
  for (std::size_t r = 0; r < vs.max_len; ++r) {
    for (std::size_t j = 0; j < vs.hidden_dim; ++j) {
      pb.positional_embeddings.at(r, j) = ps.positional_embeddings.at(r, j);
    }
  }
  pb.layers = ps.layers;
  pb.head_w = ps.head_w;
  pb.head_b = ps.head_b;

  const TokenSequence short_seq = encode("alpha beats earnings", v, vs.max_len);
  const TokenSequence long_seq = encode("alpha beats earnings", v, vb.max_len);
  CHECK(long_seq.true_length == short_seq.true_length);

  const double pred_small = forward({short_seq}, ps, vs, nullptr, false)[0];
  const double pred_big = forward({long_seq}, pb, vb, nullptr, false)[0];
  CHECK(std::fabs(pred_small - pred_big) <= 1e-9);
}

TEST_CASE("forward/backward determinism with dropout") {
  ModelConfig c = micro_config();
  c.dropout_p = 0.2;
  Rng rng(27, "init");
  const Parameters p = init_params(c, rng);

  Rng data(28, "data");
  std::vector<TokenSequence> batch;
  std::vector<double> targets;
  for (int i = 0; i < 4; ++i) {
    batch.push_back(full_sequence(data, c));
    targets.push_back(data.next_double());
  }

  Rng d1(5, "dropout"), d2(5, "dropout");
  const BackwardResult r1 = backward(batch, targets, p, c, d1);
  const BackwardResult r2 = backward(batch, targets, p, c, d2);
  CHECK(r1.loss == r2.loss);
  CHECK(r1.predictions == r2.predictions);
  CHECK(params_equal(r1.grads, r2.grads));
}

TEST_CASE("backward: targets equal to predictions give zero gradients") {
  ModelConfig c = micro_config();
  Rng rng(29, "init");
  const Parameters p = init_params(c, rng);

  Rng data(30, "data");
  std::vector<TokenSequence> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(full_sequence(data, c));
  const auto preds = forward(batch, p, c, nullptr, false);

  Rng drop(31, "dropout");
  const BackwardResult r = backward(batch, preds, p, c, drop);
  CHECK(r.loss <= 1e-24);
  const_cast<Gradients&>(r.grads).visit([](const std::string&, Tensor& t) {
    for (double v : t.data) CHECK(std::fabs(v) <= 1e-12);
  });
}

TEST_CASE("backward: doubling residuals doubles the head gradient") {
  ModelConfig c = micro_config();
  Rng rng(32, "init");
  const Parameters p = init_params(c, rng);

  Rng data(33, "data");
  std::vector<TokenSequence> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(full_sequence(data, c));
  const auto preds = forward(batch, p, c, nullptr, false);

  std::vector<double> t1, t2;
  for (double y : preds) {
    t1.push_back(y - 0.5);          // residual +0.5
    t2.push_back(y - 1.0);          // residual +1.0
  }
  Rng d1(34, "dropout"), d2(34, "dropout");
  const BackwardResult r1 = backward(batch, t1, p, c, d1);
  const BackwardResult r2 = backward(batch, t2, p, c, d2);
  for (std::size_t j = 0; j < c.hidden_dim; ++j) {
    CHECK(r2.grads.head_w.at(j, 0) ==
          doctest::Approx(2.0 * r1.grads.head_w.at(j, 0)).epsilon(1e-12));
  }
  CHECK(r2.grads.head_b[0] == doctest::Approx(2.0 * r1.grads.head_b[0]).epsilon(1e-12));
}

TEST_CASE("full-model gradient check on the micro config") {
  const GradCheckReport report = grad_check_bert(micro_config());
  CAPTURE(report.worst_tensor);
  CAPTURE(report.worst_analytic);
  CAPTURE(report.worst_numeric);
  CHECK(report.max_rel_error <= 1e-3);
  CHECK(report.checked_parameters > 500);
}

TEST_CASE("gradient check is deterministic across reruns") {
  const GradCheckReport a = grad_check_bert(micro_config());
  const GradCheckReport b = grad_check_bert(micro_config());
  CHECK(a.max_rel_error == b.max_rel_error);
  CHECK(a.worst_tensor == b.worst_tensor);
}

TEST_CASE("parameter count matches the closed-form formula for three configs") {
  const auto formula = [](const ModelConfig& c) {
    const std::size_t h = c.hidden_dim, f = c.ff_dim;
    const std::size_t per_layer = 4 * (h * h + h)      // q, k, v, o projections
                                  + (h * f + f)        // ff in
                                  + (f * h + h)        // ff out
                                  + 4 * h;             // two layer norms
    return c.vocab_size * h + c.max_len * h + c.num_layers * per_layer + h + 1;
  };
  for (const ModelConfig& c :
       {micro_config(),
        []{ ModelConfig c; c.vocab_size = 500; return c; }(),
        []{ ModelConfig c; c.vocab_size = 8000; c.hidden_dim = 64; c.num_heads = 4;
            c.ff_dim = 256; c.num_layers = 3; return c; }()}) {
    Rng rng(35, "init");
    const Parameters p = init_params(c, rng);
    CHECK(p.parameter_count() == formula(c));
  }
}

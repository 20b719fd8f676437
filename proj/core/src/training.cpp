#include "nfp/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "checkpoint_io.hpp"
#include "nfp/rng.hpp"

namespace nfp {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("train config: learning_rate must be > 0");
  }
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw std::invalid_argument("train config: betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("train config: epsilon must be > 0");
  }
  if (batch_size < 1) {
    throw std::invalid_argument("train config: batch_size must be >= 1");
  }
}

double mse_loss(const std::vector<double>& predictions,
                const std::vector<double>& targets) {
  if (predictions.size() != targets.size()) {
    throw std::invalid_argument("mse_loss: sequence lengths disagree");
  }
  if (predictions.empty()) {
    throw std::invalid_argument("mse_loss: sequences are empty");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double r = predictions[i] - targets[i];
    sum += r * r;
  }
  return sum / static_cast<double>(predictions.size());
}

void adam_update_tensor(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v,
                        std::uint64_t t, const TrainConfig& config,
                        const std::string& name) {
  if (!param.same_shape(grad) || !param.same_shape(m) || !param.same_shape(v)) {
    throw std::invalid_argument("adam_update_tensor: shape mismatch for " + name);
  }
  check_finite(grad, "gradient of " + name);
  const double b1 = config.beta1, b2 = config.beta2;
  const double m_corr = 1.0 - std::pow(b1, static_cast<double>(t));
  const double v_corr = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.data.size(); ++i) {
    const double g = grad.data[i];
    m.data[i] = b1 * m.data[i] + (1.0 - b1) * g;
    v.data[i] = b2 * v.data[i] + (1.0 - b2) * g * g;
    const double m_hat = m.data[i] / m_corr;
    const double v_hat = v.data[i] / v_corr;
    param.data[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

AdamState make_adam_state(const ModelConfig& config) {
  return AdamState{zeros_like_params(config), zeros_like_params(config), 0};
}

namespace {

struct NamedTensorRef {
  std::string name;
  Tensor* tensor;
};

std::vector<NamedTensorRef> tensor_refs(Parameters& p) {
  std::vector<NamedTensorRef> refs;
  p.visit([&refs](const std::string& name, Tensor& t) { refs.push_back({name, &t}); });
  return refs;
}

}  // namespace

void adam_step(Parameters& params, const Gradients& grads, AdamState& state,
               const TrainConfig& config) {
  config.validate();
  ++state.t;
  auto p_refs = tensor_refs(params);
  auto g_refs = tensor_refs(const_cast<Gradients&>(grads));
  auto m_refs = tensor_refs(state.m);
  auto v_refs = tensor_refs(state.v);
  if (p_refs.size() != g_refs.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient structure mismatch");
  }
  for (std::size_t i = 0; i < p_refs.size(); ++i) {
    adam_update_tensor(*p_refs[i].tensor, *g_refs[i].tensor, *m_refs[i].tensor,
                       *v_refs[i].tensor, state.t, config, p_refs[i].name);
  }
}

TrainResult train(const std::vector<TrainingExample>& examples,
                  const Vocabulary& vocab, const ModelConfig& model_config,
                  const TrainConfig& train_config) {
  if (examples.empty()) {
    throw std::invalid_argument("train: no examples");
  }
  model_config.validate();
  train_config.validate();
  if (model_config.vocab_size != vocab.size()) {
    throw std::invalid_argument("train: model vocab_size " +
                                std::to_string(model_config.vocab_size) +
                                " does not match vocabulary size " +
                                std::to_string(vocab.size()));
  }

  const std::size_t n = examples.size();
  std::vector<TokenSequence> encoded;
  encoded.reserve(n);
  std::vector<double> targets;
  targets.reserve(n);
  for (const TrainingExample& ex : examples) {
    encoded.push_back(encode(ex.input_text, vocab, model_config.max_len));
    targets.push_back(ex.target);
  }

  Rng init_rng(train_config.seed, "init");
  Rng shuffle_rng(train_config.seed, "shuffle");
  Rng dropout_rng(train_config.seed, "dropout");

  TrainResult result;
  result.params = init_params(model_config, init_rng);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  AdamState adam = make_adam_state(model_config);
  for (std::size_t epoch = 0; epoch < train_config.epochs; ++epoch) {
    if (train_config.shuffle_each_epoch) {
      for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = shuffle_rng.next_below(i + 1);
        std::swap(order[i], order[j]);
      }
    }
    double epoch_sq_err = 0.0;
    for (std::size_t start = 0, batch_index = 0; start < n;
         start += train_config.batch_size, ++batch_index) {
      const std::size_t stop = std::min(n, start + train_config.batch_size);
      std::vector<TokenSequence> batch;
      std::vector<double> batch_targets;
      batch.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        batch.push_back(encoded[order[i]]);
        batch_targets.push_back(targets[order[i]]);
      }
      BackwardResult br;
      try {
        br = backward(batch, batch_targets, result.params, model_config, dropout_rng);
      } catch (const std::exception& e) {
        throw std::runtime_error("train: aborted at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(batch_index) + ": " +
                                 e.what());
      }
      if (!std::isfinite(br.loss)) {
        throw std::runtime_error("train: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_index));
      }
      adam_step(result.params, br.grads, adam, train_config);
      epoch_sq_err += br.loss * static_cast<double>(batch.size());
    }
    result.loss_history.push_back(epoch_sq_err / static_cast<double>(n));
  }
  return result;
}

GradCheckReport compare_named_grads(const std::vector<NamedTensorView>& analytic,
                                    const std::vector<NamedTensorView>& numeric) {
  if (analytic.size() != numeric.size()) {
    throw std::invalid_argument("compare_named_grads: structure mismatch");
  }
  GradCheckReport report;
  for (std::size_t t = 0; t < analytic.size(); ++t) {
    const Tensor& a = *analytic[t].tensor;
    const Tensor& b = *numeric[t].tensor;
    if (!a.same_shape(b)) {
      throw std::invalid_argument("compare_named_grads: shape mismatch for " +
                                  analytic[t].name);
    }
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      const double av = a.data[i], nv = b.data[i];
      const double rel =
          std::fabs(av - nv) / std::max(std::fabs(av) + std::fabs(nv), 1e-4);
      ++report.checked_parameters;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = analytic[t].name;
        report.worst_index = i;
        report.worst_analytic = av;
        report.worst_numeric = nv;
      }
    }
  }
  return report;
}

GradCheckReport compare_grads(const Gradients& analytic, const Gradients& numeric) {
  std::vector<NamedTensorView> a_views, n_views;
  const_cast<Gradients&>(analytic).visit(
      [&a_views](const std::string& n, Tensor& t) { a_views.push_back({n, &t}); });
  const_cast<Gradients&>(numeric).visit(
      [&n_views](const std::string& n, Tensor& t) { n_views.push_back({n, &t}); });
  return compare_named_grads(a_views, n_views);
}

Gradients finite_difference_grads(const Parameters& params,
                                  const std::vector<TokenSequence>& batch,
                                  const std::vector<double>& targets,
                                  const ModelConfig& config, double step) {
  if (config.dropout_p != 0.0) {
    throw std::invalid_argument(
        "finite_difference_grads: dropout must be disabled for the check");
  }
  Parameters work = params;
  Gradients numeric = zeros_like_params(config);
  auto w_refs = tensor_refs(work);
  auto n_refs = tensor_refs(numeric);
  const auto loss_at = [&]() {
    return mse_loss(forward(batch, work, config, nullptr, false), targets);
  };
  for (std::size_t t = 0; t < w_refs.size(); ++t) {
    Tensor& wt = *w_refs[t].tensor;
    Tensor& nt = *n_refs[t].tensor;
    for (std::size_t i = 0; i < wt.data.size(); ++i) {
      const double saved = wt.data[i];
      wt.data[i] = saved + step;
      const double up = loss_at();
      wt.data[i] = saved - step;
      const double down = loss_at();
      wt.data[i] = saved;
      nt.data[i] = (up - down) / (2.0 * step);
    }
  }
  return numeric;
}

GradCheckReport grad_check_bert(ModelConfig config, std::uint64_t seed,
                                double fd_step) {
  config.dropout_p = 0.0;  // stochastic masks would invalidate the differences
  config.validate();

  Rng data_rng(seed, "gradcheck");
  Rng init_rng(seed, "init");
  const Parameters params = init_params(config, init_rng);

  // Fixed micro batch of two full-length sequences.
  std::vector<TokenSequence> batch;
  std::vector<double> targets;
  for (int e = 0; e < 2; ++e) {
    TokenSequence seq;
    seq.true_length = config.max_len;
    seq.ids.resize(config.max_len);
    seq.mask.assign(config.max_len, 1);
    seq.ids.front() = Vocabulary::kCls;
    seq.ids.back() = Vocabulary::kSep;
    for (std::size_t i = 1; i + 1 < config.max_len; ++i) {
      seq.ids[i] = 4 + data_rng.next_below(config.vocab_size - 4);
    }
    batch.push_back(std::move(seq));
    targets.push_back(4.0 * data_rng.next_double() - 2.0);
  }

  Rng dropout_rng(seed, "dropout");
  const BackwardResult analytic = backward(batch, targets, params, config, dropout_rng);
  const Gradients numeric =
      finite_difference_grads(params, batch, targets, config, fd_step);
  return compare_grads(analytic.grads, numeric);
}

namespace {

json model_config_to_json(const ModelConfig& c) {
  return json{{"vocab_size", c.vocab_size}, {"hidden_dim", c.hidden_dim},
              {"num_layers", c.num_layers}, {"num_heads", c.num_heads},
              {"ff_dim", c.ff_dim},         {"max_len", c.max_len},
              {"dropout_p", c.dropout_p},   {"init_stddev", c.init_stddev}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.ff_dim = j.at("ff_dim").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.dropout_p = j.at("dropout_p").get<double>();
  c.init_stddev = j.at("init_stddev").get<double>();
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"epsilon", c.epsilon},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"seed", c.seed},
              {"shuffle_each_epoch", c.shuffle_each_epoch}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.shuffle_each_epoch = j.at("shuffle_each_epoch").get<bool>();
  return c;
}

constexpr char kBertMagic[4] = {'N', 'F', 'P', '1'};

}  // namespace

void save_checkpoint(const BertCheckpoint& ckpt, const std::filesystem::path& path) {
  ckpt.model.validate();
  if (ckpt.model.vocab_size != ckpt.vocab.size()) {
    throw std::invalid_argument("save_checkpoint: vocab size disagrees with config");
  }
  json meta{{"model", model_config_to_json(ckpt.model)},
            {"train", train_config_to_json(ckpt.train)},
            {"version", ckpt.version_id},
            {"vocab", ckpt.vocab.id_to_token}};

  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write checkpoint: " + path.string());
  }
  detail::write_header(out, kBertMagic, meta.dump());
  const_cast<Parameters&>(ckpt.params)
      .visit([&out](const std::string&, Tensor& t) { detail::write_tensor(out, t); });
  if (!out) {
    throw std::runtime_error("checkpoint write failed: " + path.string());
  }
}

BertCheckpoint load_bert_checkpoint(const std::filesystem::path& path) {
  std::ifstream in = detail::open_checkpoint(path);
  const std::string magic = detail::read_magic(in, path);
  if (magic != std::string(kBertMagic, 4)) {
    throw std::runtime_error("not an NFP1 encoder checkpoint (magic '" + magic +
                             "'): " + path.string());
  }
  json meta;
  try {
    meta = json::parse(detail::read_meta(in, path));
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt checkpoint metadata: " + path.string() + ": " +
                             e.what());
  }

  BertCheckpoint ckpt;
  try {
    ckpt.model = model_config_from_json(meta.at("model"));
    ckpt.train = train_config_from_json(meta.at("train"));
    ckpt.version_id = meta.at("version").get<int>();
    for (const auto& token : meta.at("vocab")) {
      const std::string t = token.get<std::string>();
      ckpt.vocab.token_to_id.emplace(t, ckpt.vocab.id_to_token.size());
      ckpt.vocab.id_to_token.push_back(t);
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt checkpoint metadata: " + path.string() + ": " +
                             e.what());
  }
  ckpt.model.validate();
  version_spec(ckpt.version_id);  // rejects ids outside 1..6
  if (ckpt.model.vocab_size != ckpt.vocab.size()) {
    throw std::runtime_error("corrupt checkpoint: declared vocab_size " +
                             std::to_string(ckpt.model.vocab_size) +
                             " but metadata carries " +
                             std::to_string(ckpt.vocab.size()) + " tokens: " +
                             path.string());
  }

  ckpt.params = zeros_like_params(ckpt.model);
  ckpt.params.visit([&in, &path](const std::string& name, Tensor& t) {
    detail::read_tensor(in, t, name, path);
  });
  detail::expect_eof(in, path);
  ckpt.params.visit([](const std::string& name, Tensor& t) {
    check_finite(t, "checkpoint tensor " + name);
  });
  return ckpt;
}

CheckpointKind peek_checkpoint_kind(const std::filesystem::path& path) {
  std::ifstream in = detail::open_checkpoint(path);
  const std::string magic = detail::read_magic(in, path);
  if (magic == "NFP1") return CheckpointKind::bert;
  if (magic == "NFL1") return CheckpointKind::lstm;
  throw std::runtime_error("unrecognized checkpoint magic '" + magic + "': " +
                           path.string());
}

}  // namespace nfp

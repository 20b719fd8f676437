#include "nfp/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "checkpoint_io.hpp"
#include "nfp/rng.hpp"

namespace nfp {

using nlohmann::json;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void LstmConfig::validate() const {
  if (window < 1) throw std::invalid_argument("lstm config: window must be >= 1");
  if (hidden_dim < 1) throw std::invalid_argument("lstm config: hidden_dim must be >= 1");
  train.validate();
}

std::vector<WindowExample> build_windows(const Dataset& dataset, std::size_t k) {
  if (k < 1) throw std::invalid_argument("build_windows: k must be >= 1");

  // Group record indices per ticker (tickers keep first-appearance order),
  // then date-order each group, ties by original position.
  std::vector<std::string> ticker_order;
  std::map<std::string, std::vector<std::size_t>> by_ticker;
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const std::string& t = dataset.records[i].ticker;
    auto [it, inserted] = by_ticker.try_emplace(t);
    if (inserted) ticker_order.push_back(t);
    it->second.push_back(i);
  }

  std::vector<WindowExample> windows;
  for (const std::string& ticker : ticker_order) {
    std::vector<std::size_t>& idx = by_ticker[ticker];
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return dataset.records[a].date < dataset.records[b].date;
    });
    if (idx.size() <= k) continue;
    for (std::size_t start = 0; start + k < idx.size(); ++start) {
      WindowExample w;
      w.inputs.reserve(k);
      for (std::size_t j = 0; j < k; ++j) {
        w.inputs.push_back(dataset.records[idx[start + j]].pct_change);
      }
      const std::size_t target_idx = idx[start + k];
      w.target = dataset.records[target_idx].pct_change;
      w.record_ref = target_idx;
      w.date = dataset.records[target_idx].date;
      windows.push_back(std::move(w));
    }
  }
  return windows;
}

std::size_t LstmParams::parameter_count() const {
  std::size_t n = 0;
  const_cast<LstmParams*>(this)->visit(
      [&n](const std::string&, Tensor& t) { n += t.numel(); });
  return n;
}

LstmParams zeros_like_lstm_params(const LstmConfig& config) {
  const std::size_t h = config.hidden_dim;
  LstmParams p;
  const auto vec = [h] { return Tensor::zeros({h}); };
  const auto mat = [h] { return Tensor::zeros({h, h}); };
  p.wi = vec(); p.ui = mat(); p.bi = vec();
  p.wf = vec(); p.uf = mat(); p.bf = vec();
  p.wo = vec(); p.uo = mat(); p.bo = vec();
  p.wg = vec(); p.ug = mat(); p.bg = vec();
  p.head_w = vec();
  p.head_b = Tensor::zeros({1});
  return p;
}

LstmParams init_lstm_params(const LstmConfig& config, Rng& rng) {
  config.validate();
  LstmParams p = zeros_like_lstm_params(config);
  const double stddev = 0.02;
  const auto fill = [&](Tensor& t) {
    for (double& v : t.data) v = rng.next_truncated_normal(stddev);
  };
  fill(p.wi); fill(p.ui);
  fill(p.wf); fill(p.uf);
  fill(p.wo); fill(p.uo);
  fill(p.wg); fill(p.ug);
  fill(p.head_w);
  return p;
}

double lstm_forward(const WindowExample& window, const LstmParams& params,
                    const LstmConfig& config, LstmContext* ctx) {
  if (window.inputs.size() != config.window) {
    throw std::invalid_argument("lstm_forward: window length disagrees with config");
  }
  const std::size_t h = config.hidden_dim;
  std::vector<double> h_prev(h, 0.0), c_prev(h, 0.0);
  if (ctx) ctx->steps.clear();

  for (double x : window.inputs) {
    LstmStep step;
    step.i.resize(h); step.f.resize(h); step.o.resize(h); step.g.resize(h);
    step.c.resize(h); step.tanh_c.resize(h); step.h.resize(h);
    for (std::size_t r = 0; r < h; ++r) {
      double ai = params.wi[r] * x + params.bi[r];
      double af = params.wf[r] * x + params.bf[r];
      double ao = params.wo[r] * x + params.bo[r];
      double ag = params.wg[r] * x + params.bg[r];
      for (std::size_t c = 0; c < h; ++c) {
        const double hp = h_prev[c];
        ai += params.ui.at(r, c) * hp;
        af += params.uf.at(r, c) * hp;
        ao += params.uo.at(r, c) * hp;
        ag += params.ug.at(r, c) * hp;
      }
      step.i[r] = sigmoid(ai);
      step.f[r] = sigmoid(af);
      step.o[r] = sigmoid(ao);
      step.g[r] = std::tanh(ag);
      step.c[r] = step.f[r] * c_prev[r] + step.i[r] * step.g[r];
      step.tanh_c[r] = std::tanh(step.c[r]);
      step.h[r] = step.o[r] * step.tanh_c[r];
    }
    h_prev = step.h;
    c_prev = step.c;
    if (ctx) ctx->steps.push_back(std::move(step));
  }

  double pred = params.head_b[0];
  for (std::size_t r = 0; r < h; ++r) pred += params.head_w[r] * h_prev[r];
  check_finite(pred, "lstm prediction");
  return pred;
}

void lstm_backward(const WindowExample& window, const LstmParams& params,
                   const LstmConfig& config, double loss_scale,
                   LstmGradients& grads, double* prediction) {
  const std::size_t h = config.hidden_dim;
  const std::size_t k = window.inputs.size();
  LstmContext ctx;
  const double pred = lstm_forward(window, params, config, &ctx);
  if (prediction) *prediction = pred;

  const double dpred = loss_scale * 2.0 * (pred - window.target);
  const std::vector<double>& h_last = ctx.steps.back().h;
  for (std::size_t r = 0; r < h; ++r) {
    grads.head_w[r] += dpred * h_last[r];
  }
  grads.head_b[0] += dpred;

  std::vector<double> dh(h), dc(h, 0.0);
  for (std::size_t r = 0; r < h; ++r) dh[r] = dpred * params.head_w[r];

  for (std::size_t t = k; t-- > 0;) {
    const LstmStep& s = ctx.steps[t];
    const double x = window.inputs[t];
    const std::vector<double> zeros(h, 0.0);
    const std::vector<double>& c_prev = t > 0 ? ctx.steps[t - 1].c : zeros;
    const std::vector<double>& h_prev = t > 0 ? ctx.steps[t - 1].h : zeros;

    std::vector<double> dai(h), daf(h), dao(h), dag(h), dc_prev(h), dh_prev(h, 0.0);
    for (std::size_t r = 0; r < h; ++r) {
      const double do_r = dh[r] * s.tanh_c[r];
      const double dc_r = dc[r] + dh[r] * s.o[r] * (1.0 - s.tanh_c[r] * s.tanh_c[r]);
      const double di_r = dc_r * s.g[r];
      const double dg_r = dc_r * s.i[r];
      const double df_r = dc_r * c_prev[r];
      dc_prev[r] = dc_r * s.f[r];
      dai[r] = di_r * s.i[r] * (1.0 - s.i[r]);
      daf[r] = df_r * s.f[r] * (1.0 - s.f[r]);
      dao[r] = do_r * s.o[r] * (1.0 - s.o[r]);
      dag[r] = dg_r * (1.0 - s.g[r] * s.g[r]);
    }
    for (std::size_t r = 0; r < h; ++r) {
      grads.wi[r] += dai[r] * x;
      grads.wf[r] += daf[r] * x;
      grads.wo[r] += dao[r] * x;
      grads.wg[r] += dag[r] * x;
      grads.bi[r] += dai[r];
      grads.bf[r] += daf[r];
      grads.bo[r] += dao[r];
      grads.bg[r] += dag[r];
      for (std::size_t c = 0; c < h; ++c) {
        const double hp = h_prev[c];
        grads.ui.at(r, c) += dai[r] * hp;
        grads.uf.at(r, c) += daf[r] * hp;
        grads.uo.at(r, c) += dao[r] * hp;
        grads.ug.at(r, c) += dag[r] * hp;
        dh_prev[c] += params.ui.at(r, c) * dai[r] + params.uf.at(r, c) * daf[r] +
                      params.uo.at(r, c) * dao[r] + params.ug.at(r, c) * dag[r];
      }
    }
    dh = std::move(dh_prev);
    dc = std::move(dc_prev);
  }
}

LstmAdamState make_lstm_adam_state(const LstmConfig& config) {
  return LstmAdamState{zeros_like_lstm_params(config), zeros_like_lstm_params(config),
                       0};
}

void adam_step_lstm(LstmParams& params, const LstmGradients& grads,
                    LstmAdamState& state, const TrainConfig& config) {
  config.validate();
  ++state.t;
  std::vector<std::pair<std::string, Tensor*>> p, g, m, v;
  params.visit([&p](const std::string& n, Tensor& t) { p.emplace_back(n, &t); });
  const_cast<LstmGradients&>(grads).visit(
      [&g](const std::string& n, Tensor& t) { g.emplace_back(n, &t); });
  state.m.visit([&m](const std::string& n, Tensor& t) { m.emplace_back(n, &t); });
  state.v.visit([&v](const std::string& n, Tensor& t) { v.emplace_back(n, &t); });
  for (std::size_t i = 0; i < p.size(); ++i) {
    adam_update_tensor(*p[i].second, *g[i].second, *m[i].second, *v[i].second,
                       state.t, config, p[i].first);
  }
}

LstmTrainResult train_lstm(const std::vector<WindowExample>& windows,
                           const LstmConfig& config) {
  if (windows.empty()) {
    throw std::invalid_argument("train_lstm: no window examples");
  }
  config.validate();
  const TrainConfig& tc = config.train;
  const std::size_t n = windows.size();

  Rng init_rng(tc.seed, "init");
  Rng shuffle_rng(tc.seed, "shuffle");

  LstmTrainResult result;
  result.params = init_lstm_params(config, init_rng);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  LstmAdamState adam = make_lstm_adam_state(config);
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    if (tc.shuffle_each_epoch) {
      for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = shuffle_rng.next_below(i + 1);
        std::swap(order[i], order[j]);
      }
    }
    double epoch_sq_err = 0.0;
    for (std::size_t start = 0, batch_index = 0; start < n;
         start += tc.batch_size, ++batch_index) {
      const std::size_t stop = std::min(n, start + tc.batch_size);
      const double batch_n = static_cast<double>(stop - start);
      LstmGradients grads = zeros_like_lstm_params(config);
      double batch_sq_err = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        double pred = 0.0;
        lstm_backward(windows[order[i]], result.params, config, 1.0 / batch_n,
                      grads, &pred);
        const double r = pred - windows[order[i]].target;
        batch_sq_err += r * r;
      }
      if (!std::isfinite(batch_sq_err)) {
        throw std::runtime_error("train_lstm: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_index));
      }
      adam_step_lstm(result.params, grads, adam, tc);
      epoch_sq_err += batch_sq_err;
    }
    result.loss_history.push_back(epoch_sq_err / static_cast<double>(n));
  }
  return result;
}

MetricsReport evaluate_lstm(const LstmParams& params, const LstmConfig& config,
                            const std::vector<WindowExample>& windows) {
  if (windows.empty()) {
    throw std::invalid_argument("evaluate_lstm: no window examples");
  }
  std::vector<PerExample> per_example;
  per_example.reserve(windows.size());
  for (const WindowExample& w : windows) {
    PerExample pe;
    pe.record_ref = w.record_ref;
    pe.date = w.date;
    pe.prediction = lstm_forward(w, params, config);
    pe.actual_pct = w.target;
    pe.target = w.target;
    per_example.push_back(pe);
  }
  return build_report("lstm", TargetMode::regression, std::move(per_example));
}

GradCheckReport grad_check_lstm(LstmConfig config, std::uint64_t seed,
                                double fd_step) {
  config.validate();
  Rng data_rng(seed, "gradcheck");
  Rng init_rng(seed, "init");
  const LstmParams params = init_lstm_params(config, init_rng);

  WindowExample window;
  for (std::size_t i = 0; i < config.window; ++i) {
    window.inputs.push_back(4.0 * data_rng.next_double() - 2.0);
  }
  window.target = 4.0 * data_rng.next_double() - 2.0;

  LstmGradients analytic = zeros_like_lstm_params(config);
  lstm_backward(window, params, config, 1.0, analytic);

  LstmParams work = params;
  LstmGradients numeric = zeros_like_lstm_params(config);
  std::vector<Tensor*> w_refs, n_refs;
  work.visit([&w_refs](const std::string&, Tensor& t) { w_refs.push_back(&t); });
  numeric.visit([&n_refs](const std::string&, Tensor& t) { n_refs.push_back(&t); });
  const auto loss_at = [&]() {
    const double r = lstm_forward(window, work, config) - window.target;
    return r * r;
  };
  for (std::size_t t = 0; t < w_refs.size(); ++t) {
    for (std::size_t i = 0; i < w_refs[t]->data.size(); ++i) {
      const double saved = w_refs[t]->data[i];
      w_refs[t]->data[i] = saved + fd_step;
      const double up = loss_at();
      w_refs[t]->data[i] = saved - fd_step;
      const double down = loss_at();
      w_refs[t]->data[i] = saved;
      n_refs[t]->data[i] = (up - down) / (2.0 * fd_step);
    }
  }

  std::vector<NamedTensorView> a_views, n_views;
  analytic.visit([&a_views](const std::string& n, Tensor& t) {
    a_views.push_back({n, &t});
  });
  numeric.visit([&n_views](const std::string& n, Tensor& t) {
    n_views.push_back({n, &t});
  });
  return compare_named_grads(a_views, n_views);
}

namespace {

constexpr char kLstmMagic[4] = {'N', 'F', 'L', '1'};

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

}  // namespace

void save_lstm_checkpoint(const LstmCheckpoint& ckpt,
                          const std::filesystem::path& path) {
  ckpt.config.validate();
  json meta{{"lstm", json{{"window", ckpt.config.window},
                          {"hidden_dim", ckpt.config.hidden_dim}}},
            {"train", train_config_to_json(ckpt.config.train)}};
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write checkpoint: " + path.string());
  }
  detail::write_header(out, kLstmMagic, meta.dump());
  const_cast<LstmParams&>(ckpt.params)
      .visit([&out](const std::string&, Tensor& t) { detail::write_tensor(out, t); });
  if (!out) {
    throw std::runtime_error("checkpoint write failed: " + path.string());
  }
}

LstmCheckpoint load_lstm_checkpoint(const std::filesystem::path& path) {
  std::ifstream in = detail::open_checkpoint(path);
  const std::string magic = detail::read_magic(in, path);
  if (magic != std::string(kLstmMagic, 4)) {
    throw std::runtime_error("not an NFL1 LSTM checkpoint (magic '" + magic +
                             "'): " + path.string());
  }
  LstmCheckpoint ckpt;
  try {
    const json meta = json::parse(detail::read_meta(in, path));
    ckpt.config.window = meta.at("lstm").at("window").get<std::size_t>();
    ckpt.config.hidden_dim = meta.at("lstm").at("hidden_dim").get<std::size_t>();
    ckpt.config.train = train_config_from_json(meta.at("train"));
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt checkpoint metadata: " + path.string() + ": " +
                             e.what());
  }
  ckpt.config.validate();
  ckpt.params = zeros_like_lstm_params(ckpt.config);
  ckpt.params.visit([&in, &path](const std::string& name, Tensor& t) {
    detail::read_tensor(in, t, name, path);
  });
  detail::expect_eof(in, path);
  return ckpt;
}

}  // namespace nfp

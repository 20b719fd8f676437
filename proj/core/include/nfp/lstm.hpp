#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nfp/dataset.hpp"
#include "nfp/evaluation.hpp"
#include "nfp/tensor.hpp"
#include "nfp/training.hpp"

namespace nfp {

// Single-layer LSTM over windows of past percent changes; no peepholes, no
// bidirectionality. Trained with the same MSE/Adam machinery as the encoder.
struct LstmConfig {
  std::size_t window = 5;      // k past percent changes per example
  std::size_t hidden_dim = 64;
  TrainConfig train;

  void validate() const;
};

// k date-ordered percent changes of one ticker, predicting the next one.
// record_ref/date point at the record supplying the target.
struct WindowExample {
  std::vector<double> inputs;
  double target = 0.0;
  std::size_t record_ref = 0;
  Date date;
};

// Sliding windows per ticker; tickers with <= k observations contribute
// nothing. Windows never span two tickers.
std::vector<WindowExample> build_windows(const Dataset& dataset, std::size_t k);

struct LstmParams {
  // Gate weights: w* multiply the scalar input, u* the previous hidden
  // state, b* are biases. i = input, f = forget, o = output, g = candidate.
  Tensor wi, ui, bi;
  Tensor wf, uf, bf;
  Tensor wo, uo, bo;
  Tensor wg, ug, bg;
  Tensor head_w;  // [hidden]
  Tensor head_b;  // [1]

  template <typename F>
  void visit(F&& f) {
    f("wi", wi); f("ui", ui); f("bi", bi);
    f("wf", wf); f("uf", uf); f("bf", bf);
    f("wo", wo); f("uo", uo); f("bo", bo);
    f("wg", wg); f("ug", ug); f("bg", bg);
    f("head.w", head_w);
    f("head.b", head_b);
  }

  std::size_t parameter_count() const;
};

using LstmGradients = LstmParams;

LstmParams init_lstm_params(const LstmConfig& config, Rng& rng);
LstmParams zeros_like_lstm_params(const LstmConfig& config);

// Per-step activations kept for backpropagation through time.
struct LstmStep {
  std::vector<double> i, f, o, g, c, tanh_c, h;
};

struct LstmContext {
  std::vector<LstmStep> steps;
};

// Gate recurrence with logistic-sigmoid gates and tanh candidate over the k
// inputs, then a linear head on the final hidden state.
double lstm_forward(const WindowExample& window, const LstmParams& params,
                    const LstmConfig& config, LstmContext* ctx = nullptr);

// Analytic BPTT gradients of the squared error (prediction - target)^2.
// loss_scale multiplies the residual gradient (1/batch for batch means).
void lstm_backward(const WindowExample& window, const LstmParams& params,
                   const LstmConfig& config, double loss_scale,
                   LstmGradients& grads, double* prediction = nullptr);

struct LstmAdamState {
  LstmGradients m, v;
  std::uint64_t t = 0;
};

LstmAdamState make_lstm_adam_state(const LstmConfig& config);
void adam_step_lstm(LstmParams& params, const LstmGradients& grads,
                    LstmAdamState& state, const TrainConfig& config);

struct LstmTrainResult {
  LstmParams params;
  std::vector<double> loss_history;
};

LstmTrainResult train_lstm(const std::vector<WindowExample>& windows,
                           const LstmConfig& config);

// Predictions on the given windows, reported through the shared metrics
// schema (version label "lstm", regression mode).
MetricsReport evaluate_lstm(const LstmParams& params, const LstmConfig& config,
                            const std::vector<WindowExample>& windows);

GradCheckReport grad_check_lstm(LstmConfig config, std::uint64_t seed = 20240102,
                                double fd_step = 1e-5);

// Checkpoint with magic "NFL1"; same binary layout as the encoder format.
struct LstmCheckpoint {
  LstmConfig config;
  LstmParams params;
};

void save_lstm_checkpoint(const LstmCheckpoint& ckpt,
                          const std::filesystem::path& path);
LstmCheckpoint load_lstm_checkpoint(const std::filesystem::path& path);

}  // namespace nfp

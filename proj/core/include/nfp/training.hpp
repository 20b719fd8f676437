#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nfp/modality.hpp"
#include "nfp/model.hpp"
#include "nfp/tokenizer.hpp"

namespace nfp {

struct TrainConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t epochs = 0;
  std::uint64_t seed = 42;
  bool shuffle_each_epoch = true;

  void validate() const;
};

// mean((pred - target)^2); lengths must match and be >= 1.
double mse_loss(const std::vector<double>& predictions,
                const std::vector<double>& targets);

// One Adam update of a single tensor. t is the 1-based step count used for
// bias correction; a non-finite gradient raises an error naming the tensor.
void adam_update_tensor(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v,
                        std::uint64_t t, const TrainConfig& config,
                        const std::string& name);

struct AdamState {
  Gradients m, v;
  std::uint64_t t = 0;
};

AdamState make_adam_state(const ModelConfig& config);
void adam_step(Parameters& params, const Gradients& grads, AdamState& state,
               const TrainConfig& config);

struct TrainResult {
  Parameters params;
  std::vector<double> loss_history;  // mean per-example squared error per epoch
};

// Mini-batch loop: shuffle (seeded) -> encode -> forward (training mode) ->
// MSE -> backward -> adam_step. Fully deterministic given the seed; all
// randomness comes from the "init" / "shuffle" / "dropout" sub-streams.
TrainResult train(const std::vector<TrainingExample>& examples,
                  const Vocabulary& vocab, const ModelConfig& model_config,
                  const TrainConfig& train_config);

// Gradient verification against central finite differences.

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked_parameters = 0;
};

// |a - n| / max(|a| + |n|, 1e-4), elementwise over all tensors.
GradCheckReport compare_grads(const Gradients& analytic, const Gradients& numeric);

// Same comparison over any named-tensor collection (the LSTM shares it).
struct NamedTensorView {
  std::string name;
  const Tensor* tensor = nullptr;
};
GradCheckReport compare_named_grads(const std::vector<NamedTensorView>& analytic,
                                    const std::vector<NamedTensorView>& numeric);

// Central differences of the MSE loss on the given batch (dropout must be
// disabled in config; finite differences cannot see through random masks).
Gradients finite_difference_grads(const Parameters& params,
                                  const std::vector<TokenSequence>& batch,
                                  const std::vector<double>& targets,
                                  const ModelConfig& config, double step);

// Full-model check on a fixed seeded batch with dropout forced off.
GradCheckReport grad_check_bert(ModelConfig config, std::uint64_t seed = 20240101,
                                double fd_step = 1e-5);

// Checkpoint persistence. Binary layout: 4-byte magic "NFP1", a u64
// little-endian metadata length, JSON metadata (configs, modality version,
// vocabulary), then each parameter tensor as raw little-endian 64-bit floats
// in Parameters::visit order.
struct BertCheckpoint {
  ModelConfig model;
  TrainConfig train;
  int version_id = 1;
  Vocabulary vocab;
  Parameters params;
};

void save_checkpoint(const BertCheckpoint& ckpt, const std::filesystem::path& path);
BertCheckpoint load_bert_checkpoint(const std::filesystem::path& path);

enum class CheckpointKind { bert, lstm };
CheckpointKind peek_checkpoint_kind(const std::filesystem::path& path);

}  // namespace nfp

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "uvlm/adapter_types.hpp"
#include "uvlm/data.hpp"
#include "uvlm/model.hpp"
#include "uvlm/optimizer.hpp"

namespace uvlm {

// Per-stage hyperparameters. Defaults mirror the tuning recipe's published
// settings: align 1 epoch / batch 128, instruct 3 epochs / batch 64,
// dpo 1 epoch / batch 32.
struct StageConfig {
  std::string stage;  // align | instruct | dpo
  size_t epochs = 1;
  size_t batch_size = 128;
  double learning_rate = 1e-2;
  double dpo_beta = 0.1;
  double mix_ratio = 0.1;  // fraction of batches from the regularizer stream
  double lr_decay = 1.0;   // per-epoch multiplier: lr_e = lr * decay^e
  uint64_t seed = 0;
  OptimizerConfig optim;

  static StageConfig align_default();
  static StageConfig instruct_default();
  static StageConfig dpo_default();
  void validate() const;
};

struct StageProvenance {
  std::string stage;
  size_t epochs = 0;
  size_t batch_size = 0;
  double learning_rate = 0.0;
  uint64_t seed = 0;
  double final_loss = 0.0;
};

struct StageResult {
  double final_loss = 0.0;
  std::vector<double> epoch_losses;  // mean loss per epoch
};

// Everything needed to restart training bitwise: weights, adapters, stage
// history, and the mixer RNG state.
struct CheckpointMeta {
  std::vector<StageProvenance> stages;
  std::string rng_state;

  bool has_stage(const std::string& name) const;
};

inline constexpr int kCheckpointVersion = 1;

// Mid-stage training state for bitwise resume at epoch granularity.
struct StageRuntimeState {
  std::string stage;
  size_t completed_epochs = 0;
  std::string optimizer_state;  // Optimizer::state_to_json()
  std::string mixer_rng;        // serialized mixer RNG
};

void save_checkpoint(const std::string& path, ToyVlm& model,
                     const std::optional<AdapterPlan>& plan,
                     const CheckpointMeta& meta,
                     const StageRuntimeState* runtime = nullptr);

struct LoadedCheckpoint {
  ToyVlm model;
  std::optional<AdapterPlan> plan;
  CheckpointMeta meta;
  std::optional<StageRuntimeState> runtime;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Loads weights from `path` into an existing model; rejects config or
// dimension mismatches.
void load_checkpoint_into(const std::string& path, ToyVlm& model);

// Throws unless the checkpoint's completed stages license running `stage`
// next (align -> instruct -> dpo). allow_skip suppresses the check.
void check_stage_order(const CheckpointMeta& meta, const std::string& stage,
                       bool allow_skip);

// Per-example stage-1 loss: cross-entropy of the profile tokens with the
// question channel left empty; a non-empty question is a contract violation.
Tensor stage1_example_loss(ToyVlm& model, const Tensor& image,
                           const std::string& profile_text,
                           const std::string& question = "");

// Per-example answer cross-entropy with question and image positions masked
// out of the loss.
Tensor answer_ce(ToyVlm& model, const Tensor& image, const std::string& q,
                 const std::string& a);

// Stage 1: train the projector alone on (image, profile text) pairs with the
// question channel empty.
StageResult stage1_align(ToyVlm& model, const std::vector<PtExample>& data,
                         const StageConfig& cfg,
                         const std::vector<PtExample>* regularizer = nullptr,
                         StageRuntimeState* runtime = nullptr);

// Stage 2: adapter-only instruction tuning with answer-token loss masking.
StageResult stage2_instruct(ToyVlm& model,
                            const std::vector<InstructExample>& data,
                            const StageConfig& cfg,
                            const std::vector<PtExample>* regularizer =
                                nullptr,
                            StageRuntimeState* runtime = nullptr);

// Sum of answer-token log-probabilities log pi(a | i, q) under the model.
Tensor answer_log_prob(ToyVlm& model, const Tensor& h_img,
                       const std::vector<int>& q_ids,
                       const std::vector<int>& a_ids);

// Mean preference loss -log sigmoid(beta * margin) over the batch; the
// reference model contributes constants only.
Tensor dpo_loss(ToyVlm& policy, ToyVlm& reference,
                const std::vector<DpoExample>& batch, double beta);

// Stage 3: preference optimization of the adapters against a reference
// snapshot taken at stage start.
StageResult stage3_dpo(ToyVlm& model, const std::vector<DpoExample>& data,
                       const StageConfig& cfg,
                       StageRuntimeState* runtime = nullptr);

// Mean per-token answer cross-entropy over a dataset (no gradients).
double mean_answer_ce(ToyVlm& model, const std::vector<InstructExample>& data);

// Fraction of examples whose greedy generation reproduces the reference
// answer exactly.
double greedy_exact_match(ToyVlm& model,
                          const std::vector<InstructExample>& data,
                          size_t extra_tokens = 4);

// Fraction of pairs where log pi(chosen) > log pi(rejected).
double preference_accuracy(ToyVlm& model, const std::vector<DpoExample>& data);

}  // namespace uvlm

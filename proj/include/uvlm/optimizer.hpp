#pragma once

#include <string>
#include <vector>

#include "uvlm/model.hpp"
#include "uvlm/tensor.hpp"

namespace uvlm {

// Decoupled-weight-decay adaptive update by default; plain SGD selectable.
struct OptimizerConfig {
  enum class Kind { kAdamW, kSgd };
  Kind kind = Kind::kAdamW;
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double momentum = 0.0;  // SGD only

  static Kind parse_kind(const std::string& name);
  std::string kind_name() const;
};

class Optimizer {
 public:
  Optimizer(NamedTensors params, OptimizerConfig cfg);

  // One update over all tracked parameters from their .grad() buffers.
  // A non-finite gradient aborts with a diagnostic naming the parameter.
  void step();

  void zero_grad();

  size_t step_count() const { return step_; }
  const OptimizerConfig& config() const { return cfg_; }
  // For epoch-indexed learning-rate schedules; not part of resume state
  // because the caller re-derives it from the epoch counter.
  void set_lr(double lr) { cfg_.lr = lr; }
  const NamedTensors& params() const { return params_; }

  // Moment buffers + step counter, for bitwise-faithful resume.
  std::string state_to_json() const;
  void load_state_json(const std::string& json_text);

 private:
  NamedTensors params_;
  OptimizerConfig cfg_;
  size_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace uvlm

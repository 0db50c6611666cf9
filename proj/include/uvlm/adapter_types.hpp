#pragma once

#include <memory>
#include <string>
#include <vector>

#include "uvlm/tensor.hpp"

namespace uvlm {

// Low-rank adapter over one linear layer: delta(h) = (alpha/r) * B * A * h.
// A starts as a small Gaussian, B as zero, so attaching is a no-op until the
// first update.
struct LoraModule {
  Tensor a;  // [r x d_i]
  Tensor b;  // [d_o x r]
  size_t rank = 0;
  double alpha = 0.0;
  std::string target;

  double scaling() const { return alpha / double(rank); }
};

// Bank of K LoRA experts over an FFN plus a top-1 router (d_h -> K).
struct MoleFfn {
  std::vector<LoraModule> experts;
  Tensor router_w;  // [K x d_h]
  Tensor router_b;  // [K]
  size_t num_experts = 0;
  std::string target;
};

enum class AdapterMode { kSingleLora, kMole };

// Which layers get adapters and with what shape. In MoLE mode the attention
// projections still carry plain LoRA, per the tuning recipe.
struct AdapterPlan {
  AdapterMode mode = AdapterMode::kSingleLora;
  size_t rank = 4;
  double alpha = 4.0;
  size_t num_experts = 3;

  static AdapterPlan single_lora(size_t r, double a) {
    return {AdapterMode::kSingleLora, r, a, 0};
  }
  static AdapterPlan mole(size_t r, double a, size_t k) {
    return {AdapterMode::kMole, r, a, k};
  }
  // r = alpha = 32, K = 3
  static AdapterPlan paper_faithful(AdapterMode mode) {
    return {mode, 32, 32.0, 3};
  }
};

}  // namespace uvlm

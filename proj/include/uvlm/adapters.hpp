#pragma once

#include "uvlm/adapter_types.hpp"
#include "uvlm/model.hpp"
#include "uvlm/rng.hpp"

namespace uvlm {

// Attaches the plan's adapters to the model: LoRA on every attention
// projection, plus (in MoLE mode) a routed K-expert bank on each FFN.
// A is initialized from a small Gaussian, B is zero, so logits are
// bitwise unchanged until the first optimizer step.
void attach(const AdapterPlan& plan, ToyVlm& model, uint64_t seed);

// Removes every adapter; forwards are bitwise identical to a never-attached
// model when all B matrices are still zero.
void detach(ToyVlm& model);

bool has_adapters(ToyVlm& model);

// Trainable adapter parameter count for the plan on this model.
size_t adapter_parameter_count(const AdapterPlan& plan,
                               const ModelConfig& cfg);

LoraModule make_lora(size_t rank, double alpha, size_t d_in, size_t d_out,
                     const std::string& target, Rng& rng);

}  // namespace uvlm

#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "uvlm/adapter_types.hpp"
#include "uvlm/tensor.hpp"
#include "uvlm/tokenizer.hpp"

namespace uvlm {

struct ModelConfig {
  size_t d_z = 32;        // encoder feature width
  size_t d_h = 64;        // LLM hidden / word-embedding width
  size_t d_i = 3;         // image channels
  size_t image_side = 16;
  size_t patch = 4;
  size_t vocab = 0;       // set from the tokenizer
  size_t n_layers = 2;
  size_t n_heads = 4;
  size_t max_seq = 128;
  uint64_t seed = 42;

  size_t patch_dim() const { return d_i * patch * patch; }
  size_t m_patches() const {
    return (image_side / patch) * (image_side / patch);
  }
  size_t head_dim() const { return d_h / n_heads; }
  size_t image_size() const { return d_i * image_side * image_side; }

  void validate() const;
  bool compatible_with(const ModelConfig& other) const;
};

struct GenerationConfig {
  size_t max_new_tokens = 24;

  void validate() const {
    if (max_new_tokens < 1)
      throw ConfigError("max_new_tokens must be at least 1");
  }
};

// Linear layer with an optional LoRA attachment.
struct Linear {
  Tensor w;  // [d_o x d_i]
  Tensor b;  // [d_o]
  std::shared_ptr<LoraModule> lora;
};

// Frozen patch embedder standing in for a pretrained vision backbone.
struct VisionEncoder {
  Tensor w;  // [d_z x patch_dim]
  Tensor b;  // [d_z]
};

// Two-layer GELU MLP mapping encoder features into the word-embedding space.
struct Projector {
  Tensor w1, b1;  // d_z -> d_h
  Tensor w2, b2;  // d_h -> d_h
};

struct TransformerBlock {
  Tensor ln1_g, ln1_b;
  Linear q, k, v, o;
  Tensor ln2_g, ln2_b;
  Linear fc1, fc2;  // d_h -> 4 d_h -> d_h
  std::shared_ptr<MoleFfn> mole;
};

// Decoder-only transformer with a tied output head.
struct DecoderLlm {
  Tensor embedding;  // [V x d_h], also the output projection
  Tensor pos;        // [max_seq x d_h], text rows only
  std::vector<TransformerBlock> blocks;
  Tensor ln_f_g, ln_f_b;
};

enum class FreezeMask { kProjectorOnly, kLlmAdaptersOnly, kLlmOnly };

FreezeMask parse_freeze_mask(const std::string& name);

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

class ToyVlm {
 public:
  ModelConfig cfg;
  Tokenizer tokenizer;
  VisionEncoder encoder;
  Projector projector;
  DecoderLlm llm;

  static ToyVlm init(ModelConfig cfg, Tokenizer tokenizer);

  // Image -> [M x d_z] patch features. Pure, never differentiable.
  Tensor encode_image(const Tensor& img) const;

  // [M x d_z] -> [M x d_h]; trainable in the alignment stage.
  Tensor project(const Tensor& feats);

  // Logits for the concatenated sequence [image rows ++ text tokens].
  Tensor forward_logits(const Tensor& h_img, const std::vector<int>& text_ids);
  Tensor forward_logits(const Tensor& h_img, const std::vector<int>& q_ids,
                        const std::vector<int>& a_ids);

  std::vector<int> generate_ids(const Tensor& img,
                                const std::vector<int>& prompt_ids,
                                size_t max_new_tokens);
  std::string generate_greedy(const Tensor& img, const std::string& question,
                              const GenerationConfig& gen);

  // Prompt layout shared by training and generation: [BOS] q [SEP] for a
  // non-empty question, bare [BOS] for the profile-readout mode.
  std::vector<int> build_prompt(const std::string& question) const;

  NamedTensors named_parameters();     // projector + LLM base weights
  NamedTensors adapter_parameters();   // attached LoRA / MoLE tensors
  NamedTensors all_parameters();       // the above + encoder

  NamedTensors trainable_parameters(FreezeMask mask);
  void apply_freeze(FreezeMask mask);

  // Adapter attach points by name: "layers.N.attn.{q|k|v|o}",
  // "layers.N.ffn.{fc1|fc2}".
  std::vector<std::pair<std::string, Linear*>> linear_targets();

  ToyVlm deep_copy() const;
};

// Forwards through a linear layer, adding the LoRA delta when attached.
Tensor apply_linear(const Linear& layer, const Tensor& x);

// (alpha/r) * x A^T B^T, the additive adapter path.
Tensor lora_delta(const LoraModule& m, const Tensor& x);

// Merged weight: W + (alpha/r) * B A.
Tensor lora_merge(const LoraModule& m, const Tensor& base_weight);

// Top-1 expert for a single token vector; ties break to the lowest index.
size_t mole_route(const MoleFfn& m, const std::vector<double>& h);

// Base FFN output plus the routed expert deltas for every row of h.
Tensor mole_delta(MoleFfn& m, const Tensor& h);

std::string hash_tensor(const Tensor& t);
std::string hash_parameters(const NamedTensors& params);

}  // namespace uvlm

#include "uvlm/adapters.hpp"

#include "uvlm/rng.hpp"

namespace uvlm {

LoraModule make_lora(size_t rank, double alpha, size_t d_in, size_t d_out,
                     const std::string& target, Rng& rng) {
  if (rank == 0) throw ConfigError("lora rank must be positive");
  LoraModule m;
  m.rank = rank;
  m.alpha = alpha;
  m.target = target;
  m.a = Tensor({rank, d_in});
  for (size_t i = 0; i < m.a.size(); ++i) m.a.at(i) = rng.normal(0.0, 0.01);
  m.b = Tensor({d_out, rank});  // zero: attach is a no-op at step 0
  return m;
}

void attach(const AdapterPlan& plan, ToyVlm& model, uint64_t seed) {
  if (has_adapters(model))
    throw ConfigError("attach: model already has adapters");
  if (plan.mode == AdapterMode::kMole && plan.num_experts < 1)
    throw ConfigError("attach: MoLE plan requires K >= 1");
  Rng rng(seed);
  const size_t d_h = model.cfg.d_h;
  for (auto& [name, lin] : model.linear_targets()) {
    bool is_attn = name.find(".attn.") != std::string::npos;
    // attention projections always carry plain LoRA; the FFN does too in
    // single-LoRA mode, while MoLE replaces it with the routed expert bank
    if (!is_attn && plan.mode == AdapterMode::kMole) continue;
    lin->lora = std::make_shared<LoraModule>(
        make_lora(plan.rank, plan.alpha, lin->w.cols(), lin->w.rows(), name,
                  rng));
  }
  if (plan.mode == AdapterMode::kMole) {
    for (size_t l = 0; l < model.llm.blocks.size(); ++l) {
      auto mole = std::make_shared<MoleFfn>();
      mole->num_experts = plan.num_experts;
      mole->target = "layers." + std::to_string(l) + ".ffn";
      for (size_t e = 0; e < plan.num_experts; ++e) {
        mole->experts.push_back(make_lora(
            plan.rank, plan.alpha, d_h, d_h,
            mole->target + ".expert" + std::to_string(e), rng));
      }
      mole->router_w = Tensor({plan.num_experts, d_h});
      for (size_t i = 0; i < mole->router_w.size(); ++i)
        mole->router_w.at(i) = rng.normal(0.0, 0.02);
      mole->router_b = Tensor({plan.num_experts});
      model.llm.blocks[l].mole = mole;
    }
  }
}

void detach(ToyVlm& model) {
  for (auto& [name, lin] : model.linear_targets()) lin->lora = nullptr;
  for (TransformerBlock& blk : model.llm.blocks) blk.mole = nullptr;
}

bool has_adapters(ToyVlm& model) {
  for (auto& [name, lin] : model.linear_targets())
    if (lin->lora) return true;
  for (TransformerBlock& blk : model.llm.blocks)
    if (blk.mole) return true;
  return false;
}

size_t adapter_parameter_count(const AdapterPlan& plan,
                               const ModelConfig& cfg) {
  size_t per_attn = plan.rank * (cfg.d_h + cfg.d_h);  // A + B
  size_t count = cfg.n_layers * 4 * per_attn;         // q, k, v, o
  if (plan.mode == AdapterMode::kSingleLora) {
    // fc1 (4d_h x d_h) and fc2 (d_h x 4d_h)
    count += cfg.n_layers * 2 * plan.rank * (cfg.d_h + 4 * cfg.d_h);
  }
  if (plan.mode == AdapterMode::kMole) {
    size_t per_expert = plan.rank * (cfg.d_h + cfg.d_h);
    size_t router = plan.num_experts * cfg.d_h + plan.num_experts;
    count += cfg.n_layers * (plan.num_experts * per_expert + router);
  }
  return count;
}

}  // namespace uvlm

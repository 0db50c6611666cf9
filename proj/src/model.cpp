#include "uvlm/model.hpp"

#include <cmath>
#include <cstring>

#include "uvlm/ops.hpp"
#include "uvlm/rng.hpp"
#include "uvlm/sha256.hpp"

namespace uvlm {

void ModelConfig::validate() const {
  if (d_z == 0 || d_h == 0 || d_i == 0 || image_side == 0 || patch == 0 ||
      vocab == 0 || n_layers == 0 || n_heads == 0 || max_seq == 0)
    throw ConfigError("model config: all dimensions must be positive");
  if (d_h % n_heads != 0)
    throw ConfigError("model config: d_h must be divisible by n_heads");
  if (image_side % patch != 0)
    throw ConfigError("model config: image side must be a multiple of patch");
}

bool ModelConfig::compatible_with(const ModelConfig& o) const {
  return d_z == o.d_z && d_h == o.d_h && d_i == o.d_i &&
         image_side == o.image_side && patch == o.patch && vocab == o.vocab &&
         n_layers == o.n_layers && n_heads == o.n_heads && max_seq == o.max_seq;
}

FreezeMask parse_freeze_mask(const std::string& name) {
  if (name == "projector-only") return FreezeMask::kProjectorOnly;
  if (name == "llm-adapters-only") return FreezeMask::kLlmAdaptersOnly;
  if (name == "llm-only") return FreezeMask::kLlmOnly;
  throw ConfigError("unknown freeze mask: " + name);
}

namespace {

Tensor init_weight(Rng& rng, size_t rows, size_t cols, double stddev) {
  Tensor t({rows, cols});
  for (size_t i = 0; i < t.size(); ++i) t.at(i) = rng.normal(0.0, stddev);
  return t;
}

Tensor init_vec(size_t n, double fill) {
  Tensor t({n});
  for (size_t i = 0; i < n; ++i) t.at(i) = fill;
  return t;
}

Linear init_linear(Rng& rng, size_t d_out, size_t d_in) {
  return {init_weight(rng, d_out, d_in, 0.02), init_vec(d_out, 0.0), nullptr};
}

}  // namespace

ToyVlm ToyVlm::init(ModelConfig cfg, Tokenizer tokenizer) {
  cfg.vocab = tokenizer.vocab_size();
  cfg.validate();
  ToyVlm m;
  m.cfg = cfg;
  m.tokenizer = std::move(tokenizer);

  Rng rng(cfg.seed);
  m.encoder.w = init_weight(rng, cfg.d_z, cfg.patch_dim(),
                            1.0 / std::sqrt(double(cfg.patch_dim())));
  m.encoder.b = init_weight(rng, 1, cfg.d_z, 0.5);
  m.encoder.b = Tensor::from_values({cfg.d_z}, m.encoder.b.values());

  m.projector.w1 = init_weight(rng, cfg.d_h, cfg.d_z, 0.2);
  m.projector.b1 = init_vec(cfg.d_h, 0.0);
  m.projector.w2 = init_weight(rng, cfg.d_h, cfg.d_h, 0.2);
  m.projector.b2 = init_vec(cfg.d_h, 0.0);

  m.llm.embedding = init_weight(rng, cfg.vocab, cfg.d_h, 0.3);
  m.llm.pos = init_weight(rng, cfg.max_seq, cfg.d_h, 0.02);
  for (size_t l = 0; l < cfg.n_layers; ++l) {
    TransformerBlock blk;
    blk.ln1_g = init_vec(cfg.d_h, 1.0);
    blk.ln1_b = init_vec(cfg.d_h, 0.0);
    blk.q = init_linear(rng, cfg.d_h, cfg.d_h);
    blk.k = init_linear(rng, cfg.d_h, cfg.d_h);
    blk.v = init_linear(rng, cfg.d_h, cfg.d_h);
    blk.o = init_linear(rng, cfg.d_h, cfg.d_h);
    blk.ln2_g = init_vec(cfg.d_h, 1.0);
    blk.ln2_b = init_vec(cfg.d_h, 0.0);
    blk.fc1 = init_linear(rng, 4 * cfg.d_h, cfg.d_h);
    blk.fc2 = init_linear(rng, cfg.d_h, 4 * cfg.d_h);
    m.llm.blocks.push_back(std::move(blk));
  }
  m.llm.ln_f_g = init_vec(cfg.d_h, 1.0);
  m.llm.ln_f_b = init_vec(cfg.d_h, 0.0);
  return m;
}

Tensor ToyVlm::encode_image(const Tensor& img) const {
  if (img.size() != cfg.image_size())
    throw DimensionError("encode_image: expected " +
                         std::to_string(cfg.image_size()) + " values, got " +
                         std::to_string(img.size()));
  const size_t side = cfg.image_side, p = cfg.patch, per = side / p;
  const size_t pd = cfg.patch_dim();
  Tensor feats({cfg.m_patches(), cfg.d_z});
  std::vector<double> patch_vec(pd);
  for (size_t py = 0; py < per; ++py) {
    for (size_t px = 0; px < per; ++px) {
      size_t idx = 0;
      for (size_t c = 0; c < cfg.d_i; ++c)
        for (size_t y = 0; y < p; ++y)
          for (size_t x = 0; x < p; ++x)
            patch_vec[idx++] =
                img.at(c * side * side + (py * p + y) * side + (px * p + x));
      size_t row = py * per + px;
      for (size_t z = 0; z < cfg.d_z; ++z) {
        double acc = encoder.b.at(z);
        const double* wz = &encoder.w.values()[z * pd];
        for (size_t j = 0; j < pd; ++j) acc += wz[j] * patch_vec[j];
        feats.at(row, z) = acc;
      }
    }
  }
  return feats;
}

Tensor ToyVlm::project(const Tensor& feats) {
  if (feats.cols() != cfg.d_z)
    throw DimensionError("project: feature width " + feats.shape_str() +
                         " does not match d_z=" + std::to_string(cfg.d_z));
  Tensor h = gelu(linear(feats, projector.w1, projector.b1));
  return linear(h, projector.w2, projector.b2);
}

Tensor apply_linear(const Linear& layer, const Tensor& x) {
  Tensor y = linear(x, layer.w, layer.b);
  if (layer.lora) y = add(y, lora_delta(*layer.lora, x));
  return y;
}

Tensor lora_delta(const LoraModule& m, const Tensor& x) {
  if (x.cols() != m.a.cols())
    throw DimensionError("lora: input width " + x.shape_str() +
                         " does not match A " + m.a.shape_str());
  Tensor xa = matmul(x, transpose(m.a));
  Tensor xab = matmul(xa, transpose(m.b));
  return scale(xab, m.scaling());
}

Tensor lora_merge(const LoraModule& m, const Tensor& base_weight) {
  Tensor ba = matmul(m.b, m.a);  // [d_o x d_i]
  if (ba.shape() != base_weight.shape())
    throw DimensionError("lora_merge: BA " + ba.shape_str() +
                         " does not match base " + base_weight.shape_str());
  Tensor merged = base_weight.clone();
  double s = m.scaling();
  for (size_t i = 0; i < merged.size(); ++i) merged.at(i) += s * ba.at(i);
  return merged;
}

size_t mole_route(const MoleFfn& m, const std::vector<double>& h) {
  const size_t k = m.num_experts, d = m.router_w.cols();
  if (h.size() != d)
    throw DimensionError("mole_route: token width mismatch");
  size_t best = 0;
  double best_v = 0.0;
  for (size_t e = 0; e < k; ++e) {
    double v = m.router_b.at(e);
    for (size_t j = 0; j < d; ++j) v += m.router_w.at(e, j) * h[j];
    if (e == 0 || v > best_v) {  // strict '>' keeps the lowest tied index
      best = e;
      best_v = v;
    }
  }
  return best;
}

Tensor mole_delta(MoleFfn& m, const Tensor& h) {
  const size_t t = h.rows(), k = m.num_experts;
  Tensor logits = linear(h, m.router_w, m.router_b);  // [T x K]
  Tensor probs = softmax(logits);
  // hard routing on the forward values
  std::vector<size_t> choice(t);
  for (size_t i = 0; i < t; ++i) {
    size_t best = 0;
    for (size_t e = 1; e < k; ++e)
      if (logits.at(i, e) > logits.at(i, best)) best = e;
    choice[i] = best;
  }
  Tensor out;
  bool first = true;
  for (size_t e = 0; e < k; ++e) {
    std::vector<size_t> rows;
    for (size_t i = 0; i < t; ++i)
      if (choice[i] == e) rows.push_back(i);
    if (rows.empty()) continue;
    Tensor sub = gather_rows(h, rows);
    Tensor delta = lora_delta(m.experts[e], sub);
    std::vector<std::pair<size_t, size_t>> coords;
    coords.reserve(rows.size());
    for (size_t r : rows) coords.emplace_back(r, e);
    Tensor gates = gather_elems(probs, coords);
    Tensor gated = ste_gate(delta, gates);
    Tensor placed = scatter_rows(gated, rows, t);
    out = first ? placed : add(out, placed);
    first = false;
  }
  if (first) out = Tensor({t, h.cols()});  // K = 0 never happens; safety
  return out;
}

namespace {

Tensor causal_mask(size_t t) {
  Tensor mask({t, t});
  for (size_t i = 0; i < t; ++i)
    for (size_t j = i + 1; j < t; ++j) mask.at(i, j) = -1e30;
  return mask;
}

Tensor ffn_forward(TransformerBlock& blk, const Tensor& h) {
  Tensor base = apply_linear(blk.fc2, gelu(apply_linear(blk.fc1, h)));
  if (blk.mole) base = add(base, mole_delta(*blk.mole, h));
  return base;
}

}  // namespace

Tensor ToyVlm::forward_logits(const Tensor& h_img,
                              const std::vector<int>& text_ids) {
  if (h_img.cols() != cfg.d_h)
    throw DimensionError("forward_logits: image rows must have width d_h");
  const size_t m = h_img.rows(), t_text = text_ids.size();
  const size_t t = m + t_text;
  if (t > cfg.max_seq)
    throw CapacityError("sequence length " + std::to_string(t) +
                        " exceeds max_seq " + std::to_string(cfg.max_seq));
  if (t_text == 0)
    throw ContractError("forward_logits: text must contain at least BOS");

  Tensor text_emb = embedding_lookup(llm.embedding, text_ids);
  std::vector<size_t> pos_idx(t_text);
  for (size_t i = 0; i < t_text; ++i) pos_idx[i] = i;
  Tensor text_x = add(text_emb, gather_rows(llm.pos, pos_idx));
  Tensor x = concat_rows(h_img, text_x);

  Tensor mask = causal_mask(t);
  const size_t dk = cfg.head_dim();
  const double inv_sqrt_dk = 1.0 / std::sqrt(double(dk));
  for (TransformerBlock& blk : llm.blocks) {
    Tensor h = layer_norm(x, blk.ln1_g, blk.ln1_b);
    Tensor q = apply_linear(blk.q, h);
    Tensor kx = apply_linear(blk.k, h);
    Tensor v = apply_linear(blk.v, h);
    std::vector<Tensor> heads;
    heads.reserve(cfg.n_heads);
    for (size_t hd = 0; hd < cfg.n_heads; ++hd) {
      Tensor qh = slice_cols(q, hd * dk, dk);
      Tensor kh = slice_cols(kx, hd * dk, dk);
      Tensor vh = slice_cols(v, hd * dk, dk);
      Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt_dk);
      Tensor attn = softmax(add(scores, mask));
      heads.push_back(matmul(attn, vh));
    }
    Tensor attn_out = apply_linear(blk.o, concat_cols(heads));
    x = add(x, attn_out);
    Tensor h2 = layer_norm(x, blk.ln2_g, blk.ln2_b);
    x = add(x, ffn_forward(blk, h2));
  }
  x = layer_norm(x, llm.ln_f_g, llm.ln_f_b);
  return matmul(x, transpose(llm.embedding));  // tied head
}

Tensor ToyVlm::forward_logits(const Tensor& h_img, const std::vector<int>& q_ids,
                              const std::vector<int>& a_ids) {
  std::vector<int> ids = q_ids;
  ids.insert(ids.end(), a_ids.begin(), a_ids.end());
  return forward_logits(h_img, ids);
}

std::vector<int> ToyVlm::build_prompt(const std::string& question) const {
  std::vector<int> ids = {Tokenizer::kBos};
  if (!question.empty()) {
    for (int id : tokenizer.encode(question)) ids.push_back(id);
    ids.push_back(Tokenizer::kSep);
  }
  return ids;
}

std::vector<int> ToyVlm::generate_ids(const Tensor& img,
                                      const std::vector<int>& prompt_ids,
                                      size_t max_new_tokens) {
  Tensor h_img = project(encode_image(img));
  std::vector<int> ids = prompt_ids;
  std::vector<int> generated;
  for (size_t step = 0; step < max_new_tokens; ++step) {
    if (h_img.rows() + ids.size() >= cfg.max_seq) break;
    Tensor logits = forward_logits(h_img, ids);
    size_t last = logits.rows() - 1;
    size_t best = 0;
    for (size_t j = 1; j < cfg.vocab; ++j)
      if (logits.at(last, j) > logits.at(last, best)) best = j;
    if (int(best) == Tokenizer::kEos) break;
    generated.push_back(int(best));
    ids.push_back(int(best));
  }
  return generated;
}

std::string ToyVlm::generate_greedy(const Tensor& img,
                                    const std::string& question,
                                    const GenerationConfig& gen) {
  gen.validate();
  return tokenizer.decode(generate_ids(img, build_prompt(question),
                                       gen.max_new_tokens));
}

NamedTensors ToyVlm::named_parameters() {
  NamedTensors out;
  out.emplace_back("projector.w1", projector.w1);
  out.emplace_back("projector.b1", projector.b1);
  out.emplace_back("projector.w2", projector.w2);
  out.emplace_back("projector.b2", projector.b2);
  out.emplace_back("llm.embedding", llm.embedding);
  out.emplace_back("llm.pos", llm.pos);
  for (size_t l = 0; l < llm.blocks.size(); ++l) {
    TransformerBlock& blk = llm.blocks[l];
    std::string p = "llm.layers." + std::to_string(l) + ".";
    out.emplace_back(p + "ln1.g", blk.ln1_g);
    out.emplace_back(p + "ln1.b", blk.ln1_b);
    out.emplace_back(p + "attn.q.w", blk.q.w);
    out.emplace_back(p + "attn.q.b", blk.q.b);
    out.emplace_back(p + "attn.k.w", blk.k.w);
    out.emplace_back(p + "attn.k.b", blk.k.b);
    out.emplace_back(p + "attn.v.w", blk.v.w);
    out.emplace_back(p + "attn.v.b", blk.v.b);
    out.emplace_back(p + "attn.o.w", blk.o.w);
    out.emplace_back(p + "attn.o.b", blk.o.b);
    out.emplace_back(p + "ln2.g", blk.ln2_g);
    out.emplace_back(p + "ln2.b", blk.ln2_b);
    out.emplace_back(p + "ffn.fc1.w", blk.fc1.w);
    out.emplace_back(p + "ffn.fc1.b", blk.fc1.b);
    out.emplace_back(p + "ffn.fc2.w", blk.fc2.w);
    out.emplace_back(p + "ffn.fc2.b", blk.fc2.b);
  }
  out.emplace_back("llm.ln_f.g", llm.ln_f_g);
  out.emplace_back("llm.ln_f.b", llm.ln_f_b);
  return out;
}

NamedTensors ToyVlm::adapter_parameters() {
  NamedTensors out;
  for (auto& [name, lin] : linear_targets()) {
    if (lin->lora) {
      out.emplace_back(name + ".lora.a", lin->lora->a);
      out.emplace_back(name + ".lora.b", lin->lora->b);
    }
  }
  for (size_t l = 0; l < llm.blocks.size(); ++l) {
    auto& mole = llm.blocks[l].mole;
    if (!mole) continue;
    std::string p = "layers." + std::to_string(l) + ".ffn.mole.";
    for (size_t e = 0; e < mole->experts.size(); ++e) {
      out.emplace_back(p + "expert" + std::to_string(e) + ".a",
                       mole->experts[e].a);
      out.emplace_back(p + "expert" + std::to_string(e) + ".b",
                       mole->experts[e].b);
    }
    out.emplace_back(p + "router.w", mole->router_w);
    out.emplace_back(p + "router.b", mole->router_b);
  }
  return out;
}

NamedTensors ToyVlm::all_parameters() {
  NamedTensors out = named_parameters();
  NamedTensors ad = adapter_parameters();
  out.insert(out.end(), ad.begin(), ad.end());
  out.emplace_back("encoder.w", encoder.w);
  out.emplace_back("encoder.b", encoder.b);
  return out;
}

NamedTensors ToyVlm::trainable_parameters(FreezeMask mask) {
  switch (mask) {
    case FreezeMask::kProjectorOnly:
      return {{"projector.w1", projector.w1},
              {"projector.b1", projector.b1},
              {"projector.w2", projector.w2},
              {"projector.b2", projector.b2}};
    case FreezeMask::kLlmAdaptersOnly:
      return adapter_parameters();
    case FreezeMask::kLlmOnly: {
      NamedTensors out;
      for (auto& [name, t] : named_parameters())
        if (name.rfind("llm.", 0) == 0) out.emplace_back(name, t);
      return out;
    }
  }
  throw ConfigError("unreachable freeze mask");
}

void ToyVlm::apply_freeze(FreezeMask mask) {
  for (auto& [name, t] : all_parameters()) t.set_requires_grad(false);
  for (auto& [name, t] : trainable_parameters(mask)) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
}

std::vector<std::pair<std::string, Linear*>> ToyVlm::linear_targets() {
  std::vector<std::pair<std::string, Linear*>> out;
  for (size_t l = 0; l < llm.blocks.size(); ++l) {
    TransformerBlock& blk = llm.blocks[l];
    std::string p = "layers." + std::to_string(l) + ".";
    out.emplace_back(p + "attn.q", &blk.q);
    out.emplace_back(p + "attn.k", &blk.k);
    out.emplace_back(p + "attn.v", &blk.v);
    out.emplace_back(p + "attn.o", &blk.o);
    out.emplace_back(p + "ffn.fc1", &blk.fc1);
    out.emplace_back(p + "ffn.fc2", &blk.fc2);
  }
  return out;
}

ToyVlm ToyVlm::deep_copy() const {
  ToyVlm copy = *this;  // shallow: shares tensor storage
  auto clone_linear = [](Linear& l) {
    l.w = l.w.clone();
    l.b = l.b.clone();
    if (l.lora) {
      auto fresh = std::make_shared<LoraModule>(*l.lora);
      fresh->a = l.lora->a.clone();
      fresh->b = l.lora->b.clone();
      l.lora = fresh;
    }
  };
  copy.encoder.w = encoder.w.clone();
  copy.encoder.b = encoder.b.clone();
  copy.projector.w1 = projector.w1.clone();
  copy.projector.b1 = projector.b1.clone();
  copy.projector.w2 = projector.w2.clone();
  copy.projector.b2 = projector.b2.clone();
  copy.llm.embedding = llm.embedding.clone();
  copy.llm.pos = llm.pos.clone();
  copy.llm.ln_f_g = llm.ln_f_g.clone();
  copy.llm.ln_f_b = llm.ln_f_b.clone();
  for (TransformerBlock& blk : copy.llm.blocks) {
    blk.ln1_g = blk.ln1_g.clone();
    blk.ln1_b = blk.ln1_b.clone();
    clone_linear(blk.q);
    clone_linear(blk.k);
    clone_linear(blk.v);
    clone_linear(blk.o);
    blk.ln2_g = blk.ln2_g.clone();
    blk.ln2_b = blk.ln2_b.clone();
    clone_linear(blk.fc1);
    clone_linear(blk.fc2);
    if (blk.mole) {
      auto fresh = std::make_shared<MoleFfn>(*blk.mole);
      for (LoraModule& e : fresh->experts) {
        e.a = e.a.clone();
        e.b = e.b.clone();
      }
      fresh->router_w = blk.mole->router_w.clone();
      fresh->router_b = blk.mole->router_b.clone();
      blk.mole = fresh;
    }
  }
  return copy;
}

std::string hash_tensor(const Tensor& t) {
  return Sha256::of(t.values().data(), t.values().size() * sizeof(double));
}

std::string hash_parameters(const NamedTensors& params) {
  Sha256 h;
  for (const auto& [name, t] : params) {
    h.update(name.data(), name.size());
    h.update(t.values().data(), t.values().size() * sizeof(double));
  }
  return h.hex_digest();
}

}  // namespace uvlm

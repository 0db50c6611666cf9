#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "uvlm/adapters.hpp"
#include "uvlm/errors.hpp"
#include "uvlm/model.hpp"
#include "uvlm/ops.hpp"

using namespace uvlm;

namespace {

ToyVlm tiny_model(uint64_t seed = 42) {
  Tokenizer tok = Tokenizer::build(
      {"alpha beta gamma delta.", "what is this?", "it is alpha."});
  ModelConfig cfg;
  cfg.vocab = tok.vocab_size();
  cfg.seed = seed;
  return ToyVlm::init(cfg, tok);
}

Tensor test_image(const ModelConfig& cfg) {
  Tensor img(std::vector<size_t>{cfg.image_size()});
  for (size_t i = 0; i < img.size(); ++i)
    img.at(i) = std::cos(double(i) * 0.07);
  return img;
}

Tensor logits_for(ToyVlm& m, const Tensor& img) {
  Tensor h = m.project(m.encode_image(img));
  return m.forward_logits(h, m.build_prompt("what is this?"));
}

}  // namespace

TEST_CASE("zero-init attach is bitwise transparent; detach restores") {
  ToyVlm m = tiny_model();
  Tensor img = test_image(m.cfg);
  Tensor base = logits_for(m, img);

  attach(AdapterPlan::single_lora(4, 4.0), m, 7);
  Tensor adapted = logits_for(m, img);
  CHECK(adapted.values() == base.values());

  detach(m);
  CHECK(logits_for(m, img).values() == base.values());
  CHECK_FALSE(has_adapters(m));
}

TEST_CASE("mole plan attaches K experts per FFN plus attention LoRA") {
  ToyVlm m = tiny_model();
  attach(AdapterPlan::mole(4, 4.0, 3), m, 7);
  for (auto& blk : m.llm.blocks) {
    REQUIRE(blk.mole);
    CHECK(blk.mole->experts.size() == 3);
    CHECK(blk.q.lora);
    CHECK(blk.o.lora);
  }
  Tensor img = test_image(m.cfg);
  ToyVlm fresh = tiny_model();
  // zero-init B keeps MoLE transparent too
  CHECK(logits_for(m, img).values() == logits_for(fresh, img).values());
  CHECK_THROWS_AS(attach(AdapterPlan::mole(4, 4.0, 3), m, 7), ConfigError);
}

TEST_CASE("adapter parameter count matches the counting formula") {
  ToyVlm m = tiny_model();
  AdapterPlan plan = AdapterPlan::single_lora(4, 4.0);
  attach(plan, m, 7);
  size_t counted = 0;
  for (auto& [name, t] : m.adapter_parameters()) counted += t.size();
  CHECK(counted == adapter_parameter_count(plan, m.cfg));
  // lora on q,k,v,o plus fc1/fc2 of each layer: r*(d_i + d_o) per target
  size_t expect = m.cfg.n_layers * (4 * 4 * (m.cfg.d_h + m.cfg.d_h) +
                                    2 * 4 * (m.cfg.d_h + 4 * m.cfg.d_h));
  CHECK(counted == expect);

  ToyVlm mm = tiny_model();
  AdapterPlan mole_plan = AdapterPlan::mole(4, 4.0, 3);
  attach(mole_plan, mm, 7);
  size_t mole_counted = 0;
  for (auto& [name, t] : mm.adapter_parameters()) mole_counted += t.size();
  CHECK(mole_counted == adapter_parameter_count(mole_plan, mm.cfg));
}

TEST_CASE("merged-weight forward equals adapter forward within 1e-9") {
  Rng rng(9);
  const size_t d_in = 12, d_out = 10, r = 3;
  LoraModule lora = make_lora(r, 6.0, d_in, d_out, "t", rng);
  // randomize B too (post-training state)
  for (size_t i = 0; i < lora.b.size(); ++i) lora.b.at(i) = rng.normal(0, 0.3);
  Tensor w(std::vector<size_t>{d_out, d_in});
  for (size_t i = 0; i < w.size(); ++i) w.at(i) = rng.normal(0, 0.5);
  Tensor bias(std::vector<size_t>{d_out});
  Tensor merged = lora_merge(lora, w);

  for (int trial = 0; trial < 100; ++trial) {
    Tensor x(std::vector<size_t>{2, d_in});
    for (size_t i = 0; i < x.size(); ++i) x.at(i) = rng.normal(0, 1);
    Tensor via_adapter = add(linear(x, w, bias), lora_delta(lora, x));
    Tensor via_merge = linear(x, merged, bias);
    for (size_t i = 0; i < via_adapter.size(); ++i) {
      double a = via_adapter.at(i), b = via_merge.at(i);
      double scale_ref = std::abs(a) + std::abs(b) + 1e-12;
      CHECK(std::abs(a - b) / scale_ref < 1e-9);
    }
  }
}

TEST_CASE("rank of the merged update is at most r") {
  Rng rng(10);
  const size_t d = 8, r = 2;
  LoraModule lora = make_lora(r, 2.0, d, d, "t", rng);
  for (size_t i = 0; i < lora.b.size(); ++i) lora.b.at(i) = rng.normal(0, 1);
  Tensor w(std::vector<size_t>{d, d});
  Tensor update = sub(lora_merge(lora, w), w);
  // Gaussian elimination rank
  std::vector<std::vector<double>> mat(d, std::vector<double>(d));
  for (size_t i = 0; i < d; ++i)
    for (size_t j = 0; j < d; ++j) mat[i][j] = update.at(i, j);
  size_t rank = 0;
  for (size_t col = 0; col < d && rank < d; ++col) {
    size_t piv = rank;
    for (size_t i = rank; i < d; ++i)
      if (std::abs(mat[i][col]) > std::abs(mat[piv][col])) piv = i;
    if (std::abs(mat[piv][col]) < 1e-10) continue;
    std::swap(mat[piv], mat[rank]);
    for (size_t i = rank + 1; i < d; ++i) {
      double f = mat[i][col] / mat[rank][col];
      for (size_t j = col; j < d; ++j) mat[i][j] -= f * mat[rank][j];
    }
    ++rank;
  }
  CHECK(rank <= r);
  CHECK(rank >= 1);
}

TEST_CASE("alpha scaling is linear in the delta") {
  Rng rng(11);
  LoraModule lora = make_lora(2, 2.0, 6, 6, "t", rng);
  for (size_t i = 0; i < lora.b.size(); ++i) lora.b.at(i) = rng.normal(0, 1);
  Tensor x(std::vector<size_t>{1, 6});
  for (size_t i = 0; i < 6; ++i) x.at(i) = rng.normal(0, 1);
  Tensor d1 = lora_delta(lora, x);
  lora.alpha = 4.0;
  Tensor d2 = lora_delta(lora, x);
  for (size_t i = 0; i < d1.size(); ++i)
    CHECK(d2.at(i) == doctest::Approx(2.0 * d1.at(i)).epsilon(1e-12));
}

TEST_CASE("paper preset has unit scale at r = alpha = 32") {
  AdapterPlan p = AdapterPlan::paper_faithful(AdapterMode::kSingleLora);
  CHECK(p.rank == 32);
  CHECK(p.alpha == 32.0);
  Rng rng(12);
  LoraModule lora = make_lora(p.rank, p.alpha, 64, 64, "t", rng);
  CHECK(lora.scaling() == 1.0);
  CHECK(AdapterPlan::paper_faithful(AdapterMode::kMole).num_experts == 3);
}

TEST_CASE("router argmax agrees with a brute-force oracle on 10k inputs") {
  Rng rng(13);
  const size_t k = 5, d = 16;
  MoleFfn m;
  m.num_experts = k;
  m.router_w = Tensor(std::vector<size_t>{k, d});
  m.router_b = Tensor(std::vector<size_t>{k});
  for (size_t i = 0; i < m.router_w.size(); ++i)
    m.router_w.at(i) = rng.normal(0, 1);
  for (size_t i = 0; i < k; ++i) m.router_b.at(i) = rng.normal(0, 1);

  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> h(d);
    for (double& v : h) v = rng.normal(0, 1);
    size_t got = mole_route(m, h);
    // oracle: first index achieving the maximum logit
    std::vector<double> logits(k);
    for (size_t e = 0; e < k; ++e) {
      double s = m.router_b.at(e);
      for (size_t j = 0; j < d; ++j) s += m.router_w.at(e, j) * h[j];
      logits[e] = s;
    }
    size_t best = 0;
    for (size_t e = 1; e < k; ++e)
      if (logits[e] > logits[best]) best = e;
    CHECK(got == best);
  }
}

TEST_CASE("router ties break to the lowest index") {
  MoleFfn m;
  m.num_experts = 3;
  m.router_w = Tensor(std::vector<size_t>{3, 2});  // zero weights
  m.router_b = Tensor::from_values({3}, {5.0, 5.0, 1.0});
  CHECK(mole_route(m, {1.0, -1.0}) == 0);
  m.router_b = Tensor::from_values({3}, {1.0, 5.0, 5.0});
  CHECK(mole_route(m, {0.3, 0.4}) == 1);
}

TEST_CASE("adding a constant to router logits never changes the choice") {
  Rng rng(14);
  const size_t k = 4, d = 8;
  MoleFfn m;
  m.num_experts = k;
  m.router_w = Tensor(std::vector<size_t>{k, d});
  m.router_b = Tensor(std::vector<size_t>{k});
  for (size_t i = 0; i < m.router_w.size(); ++i)
    m.router_w.at(i) = rng.normal(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> h(d);
    for (double& v : h) v = rng.normal(0, 1);
    size_t before = mole_route(m, h);
    MoleFfn shifted = m;
    shifted.router_b = m.router_b.clone();
    for (size_t e = 0; e < k; ++e) shifted.router_b.at(e) += 3.7;
    CHECK(mole_route(shifted, h) == before);
  }
}

TEST_CASE("inactive experts receive exactly zero gradient per token") {
  Rng rng(21);
  const size_t d = 8, k = 3, r = 2;
  MoleFfn m;
  m.num_experts = k;
  m.target = "t";
  m.router_w = Tensor(std::vector<size_t>{k, d}, true);
  m.router_b = Tensor(std::vector<size_t>{k}, true);
  for (size_t i = 0; i < m.router_w.size(); ++i)
    m.router_w.at(i) = rng.normal(0, 1);
  for (size_t e = 0; e < k; ++e) {
    LoraModule lora = make_lora(r, 2.0, d, d, "t", rng);
    for (size_t i = 0; i < lora.b.size(); ++i)
      lora.b.at(i) = rng.normal(0, 0.5);
    lora.a.set_requires_grad(true);
    lora.b.set_requires_grad(true);
    m.experts.push_back(std::move(lora));
  }

  Tensor h(std::vector<size_t>{1, d});  // single-token batch
  for (size_t i = 0; i < d; ++i) h.at(i) = rng.normal(0, 1);
  std::vector<double> hv(h.values());
  size_t active = mole_route(m, hv);
  {
    Tape tape;
    Tensor out = mole_delta(m, h);
    Tensor loss = sum(out);
    tape.backward(loss);
  }
  for (size_t e = 0; e < k; ++e) {
    double norm = 0.0;
    for (double g : m.experts[e].a.grad()) norm += std::abs(g);
    for (double g : m.experts[e].b.grad()) norm += std::abs(g);
    if (e == active) CHECK(norm > 0.0);
    else CHECK(norm == 0.0);
  }
}

TEST_CASE("base weights stay bitwise frozen across adapter training steps") {
  ToyVlm m = tiny_model();
  attach(AdapterPlan::single_lora(4, 4.0), m, 7);
  m.apply_freeze(FreezeMask::kLlmAdaptersOnly);
  std::string base_hash = hash_parameters(m.named_parameters());
  Tensor img = test_image(m.cfg);
  for (int it = 0; it < 3; ++it) {
    Tape tape;
    Tensor h = m.project(m.encode_image(img));
    Tensor logits = m.forward_logits(h, m.build_prompt("what is this?"));
    Tensor loss = cross_entropy(
        gather_rows(logits, {logits.rows() - 1}), {Tokenizer::kEos});
    tape.backward(loss);
    for (auto& [name, t] : m.adapter_parameters())
      for (size_t i = 0; i < t.size(); ++i)
        if (t.has_grad()) t.at(i) -= 0.01 * t.grad()[i];
  }
  CHECK(hash_parameters(m.named_parameters()) == base_hash);
}

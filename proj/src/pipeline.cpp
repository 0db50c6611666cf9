#include "uvlm/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "uvlm/adapters.hpp"
#include "uvlm/errors.hpp"
#include "uvlm/ops.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace uvlm {

StageConfig StageConfig::align_default() {
  StageConfig c;
  c.stage = "align";
  c.epochs = 1;
  c.batch_size = 128;
  c.learning_rate = 1e-2;
  return c;
}

StageConfig StageConfig::instruct_default() {
  StageConfig c;
  c.stage = "instruct";
  c.epochs = 3;
  c.batch_size = 64;
  c.learning_rate = 1e-2;
  return c;
}

StageConfig StageConfig::dpo_default() {
  StageConfig c;
  c.stage = "dpo";
  c.epochs = 1;
  c.batch_size = 32;
  c.learning_rate = 1e-3;
  return c;
}

void StageConfig::validate() const {
  if (stage != "align" && stage != "instruct" && stage != "dpo")
    throw ConfigError("unknown stage: " + stage);
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (stage == "dpo" && dpo_beta <= 0.0)
    throw ConfigError("dpo_beta must be positive");
  if (mix_ratio < 0.0 || mix_ratio >= 1.0)
    throw ConfigError("mix_ratio must lie in [0, 1)");
  if (lr_decay <= 0.0 || lr_decay > 1.0)
    throw ConfigError("lr_decay must lie in (0, 1]");
}

bool CheckpointMeta::has_stage(const std::string& name) const {
  for (const StageProvenance& s : stages)
    if (s.stage == name) return true;
  return false;
}

void check_stage_order(const CheckpointMeta& meta, const std::string& stage,
                       bool allow_skip) {
  if (allow_skip) return;
  if (stage == "align") return;
  if (stage == "instruct" && !meta.has_stage("align"))
    throw ConfigError(
        "stage order: instruct requires a completed align stage "
        "(use allow-skip to override)");
  if (stage == "dpo" && !meta.has_stage("instruct"))
    throw ConfigError(
        "stage order: dpo requires a completed instruct stage "
        "(use allow-skip to override)");
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

json tensor_to_json(const Tensor& t) {
  return {{"shape", t.shape()}, {"values", t.values()}};
}

void tensor_from_json(const json& j, Tensor& t, const std::string& name) {
  std::vector<size_t> shape = j.at("shape");
  if (shape != t.shape())
    throw ConfigError("checkpoint tensor " + name + " has mismatched shape");
  std::vector<double> values = j.at("values");
  if (values.size() != t.size())
    throw ConfigError("checkpoint tensor " + name + " has mismatched size");
  t.values() = std::move(values);
}

json config_to_json(const ModelConfig& c) {
  return {{"d_z", c.d_z},
          {"d_h", c.d_h},
          {"d_i", c.d_i},
          {"image_side", c.image_side},
          {"patch", c.patch},
          {"vocab", c.vocab},
          {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},
          {"max_seq", c.max_seq},
          {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.d_z = j.at("d_z");
  c.d_h = j.at("d_h");
  c.d_i = j.at("d_i");
  c.image_side = j.at("image_side");
  c.patch = j.at("patch");
  c.vocab = j.at("vocab");
  c.n_layers = j.at("n_layers");
  c.n_heads = j.at("n_heads");
  c.max_seq = j.at("max_seq");
  c.seed = j.at("seed");
  return c;
}

json plan_to_json(const AdapterPlan& p) {
  return {{"mode", p.mode == AdapterMode::kSingleLora ? "lora" : "mole"},
          {"rank", p.rank},
          {"alpha", p.alpha},
          {"num_experts", p.num_experts}};
}

AdapterPlan plan_from_json(const json& j) {
  AdapterPlan p;
  std::string mode = j.at("mode");
  if (mode == "lora") p.mode = AdapterMode::kSingleLora;
  else if (mode == "mole") p.mode = AdapterMode::kMole;
  else throw ConfigError("checkpoint has unknown adapter mode " + mode);
  p.rank = j.at("rank");
  p.alpha = j.at("alpha");
  p.num_experts = j.at("num_experts");
  return p;
}

json meta_to_json(const CheckpointMeta& m) {
  json stages = json::array();
  for (const StageProvenance& s : m.stages)
    stages.push_back({{"stage", s.stage},
                      {"epochs", s.epochs},
                      {"batch_size", s.batch_size},
                      {"learning_rate", s.learning_rate},
                      {"seed", s.seed},
                      {"final_loss", s.final_loss}});
  return {{"stages", stages}, {"rng_state", m.rng_state}};
}

CheckpointMeta meta_from_json(const json& j) {
  CheckpointMeta m;
  for (const json& s : j.at("stages"))
    m.stages.push_back({s.at("stage"), s.at("epochs"), s.at("batch_size"),
                        s.at("learning_rate"), s.at("seed"),
                        s.at("final_loss")});
  m.rng_state = j.at("rng_state");
  return m;
}

NamedTensors checkpoint_tensors(ToyVlm& model) {
  NamedTensors all = model.all_parameters();
  NamedTensors adapters = model.adapter_parameters();
  all.insert(all.end(), adapters.begin(), adapters.end());
  return all;
}

}  // namespace

void save_checkpoint(const std::string& path, ToyVlm& model,
                     const std::optional<AdapterPlan>& plan,
                     const CheckpointMeta& meta,
                     const StageRuntimeState* runtime) {
  json j;
  j["version"] = kCheckpointVersion;
  j["config"] = config_to_json(model.cfg);
  j["vocabulary"] = model.tokenizer.vocabulary();
  json weights = json::object();
  for (auto& [name, t] : checkpoint_tensors(model))
    weights[name] = tensor_to_json(t);
  j["weights"] = std::move(weights);
  if (plan) j["adapter_plan"] = plan_to_json(*plan);
  j["meta"] = meta_to_json(meta);
  if (runtime)
    j["runtime"] = {{"stage", runtime->stage},
                    {"completed_epochs", runtime->completed_epochs},
                    {"optimizer_state", runtime->optimizer_state},
                    {"mixer_rng", runtime->mixer_rng}};

  fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw FileError("cannot write checkpoint " + path);
    os << j.dump() << "\n";
    if (!os) throw FileError("checkpoint write failed for " + path);
  }
  fs::rename(tmp, target);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("cannot read checkpoint " + path);
  json j = json::parse(is, nullptr, false);
  if (j.is_discarded())
    throw FileError("checkpoint " + path + " is not valid JSON");
  if (!j.contains("version") || j.at("version").get<int>() != kCheckpointVersion)
    throw ConfigError("checkpoint " + path + " has unsupported version");

  ModelConfig cfg = config_from_json(j.at("config"));
  std::vector<std::string> vocab = j.at("vocabulary");
  Tokenizer tok = Tokenizer::from_vocabulary(vocab);
  ToyVlm model = ToyVlm::init(cfg, tok);

  std::optional<AdapterPlan> plan;
  if (j.contains("adapter_plan")) {
    plan = plan_from_json(j.at("adapter_plan"));
    attach(*plan, model, cfg.seed);
  }
  const json& weights = j.at("weights");
  for (auto& [name, t] : checkpoint_tensors(model)) {
    if (!weights.contains(name))
      throw ConfigError("checkpoint missing tensor " + name);
    tensor_from_json(weights.at(name), t, name);
  }

  LoadedCheckpoint out{std::move(model), plan, meta_from_json(j.at("meta")),
                       std::nullopt};
  if (j.contains("runtime")) {
    const json& r = j.at("runtime");
    out.runtime = StageRuntimeState{r.at("stage"), r.at("completed_epochs"),
                                    r.at("optimizer_state"),
                                    r.at("mixer_rng")};
  }
  return out;
}

void load_checkpoint_into(const std::string& path, ToyVlm& model) {
  LoadedCheckpoint loaded = load_checkpoint(path);
  if (!model.cfg.compatible_with(loaded.model.cfg))
    throw ConfigError("checkpoint " + path +
                      " is incompatible with the target model config");
  NamedTensors src = checkpoint_tensors(loaded.model);
  NamedTensors dst = checkpoint_tensors(model);
  if (src.size() != dst.size())
    throw ConfigError("checkpoint " + path +
                      " has a different parameter set than the target model");
  for (size_t i = 0; i < src.size(); ++i) {
    if (src[i].first != dst[i].first ||
        src[i].second.shape() != dst[i].second.shape())
      throw ConfigError("checkpoint tensor mismatch at " + dst[i].first);
    dst[i].second.values() = src[i].second.values();
  }
}

// ---------------------------------------------------------------------------
// Per-example losses

Tensor stage1_example_loss(ToyVlm& model, const Tensor& image,
                           const std::string& profile_text,
                           const std::string& question) {
  if (!question.empty())
    throw ContractError(
        "stage 1 requires an empty question channel, got: " + question);
  Tensor h = model.project(model.encode_image(image));
  std::vector<int> ids = {Tokenizer::kBos};
  for (int id : model.tokenizer.encode(profile_text)) ids.push_back(id);
  ids.push_back(Tokenizer::kEos);
  Tensor logits = model.forward_logits(h, ids);
  const size_t m = h.rows();
  std::vector<size_t> rows(ids.size() - 1);
  std::vector<int> targets(ids.size() - 1);
  for (size_t i = 0; i + 1 < ids.size(); ++i) {
    rows[i] = m + i;
    targets[i] = ids[i + 1];
  }
  return cross_entropy(gather_rows(logits, rows), targets);
}

Tensor answer_ce(ToyVlm& model, const Tensor& image, const std::string& q,
                 const std::string& a) {
  Tensor h = model.project(model.encode_image(image));
  std::vector<int> prompt = model.build_prompt(q);
  std::vector<int> a_ids = model.tokenizer.encode(a);
  a_ids.push_back(Tokenizer::kEos);
  std::vector<int> input = prompt;
  // the final answer token's successor (EOS) is predicted, never consumed
  input.insert(input.end(), a_ids.begin(), a_ids.end() - 1);
  Tensor logits = model.forward_logits(h, input);
  const size_t m = h.rows(), p = prompt.size();
  std::vector<size_t> rows(a_ids.size());
  for (size_t i = 0; i < a_ids.size(); ++i) rows[i] = m + p - 1 + i;
  std::vector<int> targets(a_ids.begin(), a_ids.end());
  return cross_entropy(gather_rows(logits, rows), targets);
}

Tensor answer_log_prob(ToyVlm& model, const Tensor& h_img,
                       const std::vector<int>& q_ids,
                       const std::vector<int>& a_ids) {
  if (a_ids.empty()) throw ContractError("answer_log_prob: empty answer");
  std::vector<int> input = q_ids;
  input.insert(input.end(), a_ids.begin(), a_ids.end() - 1);
  Tensor logits = model.forward_logits(h_img, input);
  const size_t m = h_img.rows(), p = q_ids.size();
  std::vector<size_t> rows(a_ids.size());
  for (size_t i = 0; i < a_ids.size(); ++i) rows[i] = m + p - 1 + i;
  Tensor ce = cross_entropy(gather_rows(logits, rows), a_ids);
  return scale(ce, -double(a_ids.size()));
}

Tensor dpo_loss(ToyVlm& policy, ToyVlm& reference,
                const std::vector<DpoExample>& batch, double beta) {
  if (batch.empty()) throw DataError("dpo_loss: empty batch");
  if (beta <= 0.0) throw ConfigError("dpo_loss: beta must be positive");
  Tensor total = Tensor::from_values({1}, {0.0});
  for (const DpoExample& ex : batch) {
    if (ex.chosen == ex.rejected)
      std::cerr << "warning: degenerate preference pair (chosen == rejected)"
                << " in example " << ex.id << "\n";
    std::vector<int> prompt;
    {
      // prompts agree between policy and reference by construction
      prompt = policy.build_prompt(ex.question);
    }
    std::vector<int> plus = policy.tokenizer.encode(ex.chosen);
    plus.push_back(Tokenizer::kEos);
    std::vector<int> minus = policy.tokenizer.encode(ex.rejected);
    minus.push_back(Tokenizer::kEos);

    double ref_plus, ref_minus;
    {
      Tape scratch;  // reference pass: recordings are discarded
      Tensor h_ref = reference.project(reference.encode_image(ex.image));
      ref_plus = answer_log_prob(reference, h_ref, prompt, plus).item();
      ref_minus = answer_log_prob(reference, h_ref, prompt, minus).item();
    }

    Tensor h = policy.project(policy.encode_image(ex.image));
    Tensor lp_plus = answer_log_prob(policy, h, prompt, plus);
    Tensor lp_minus = answer_log_prob(policy, h, prompt, minus);
    Tensor margin = scale(sub(lp_plus, lp_minus), beta);
    Tensor shift =
        Tensor::from_values({1}, {beta * (ref_minus - ref_plus)});
    margin = add(margin, shift);
    total = add(total, scale(log_sigmoid(margin), -1.0));
  }
  return scale(total, 1.0 / double(batch.size()));
}

// ---------------------------------------------------------------------------
// Stage loops

namespace {

// Runs the shared epoch/batch structure. `task_loss(i)` returns the loss of
// task example i; `reg_loss(i)` the loss of regularizer example i.
StageResult run_epochs(
    size_t task_count, size_t reg_count, const StageConfig& cfg,
    Optimizer& opt, BatchMixer& mixer,
    const std::function<Tensor(size_t)>& task_loss,
    const std::function<Tensor(size_t)>& reg_loss,
    StageRuntimeState* runtime) {
  StageResult result;
  size_t reg_cursor = 0;
  size_t start_epoch = 0;
  if (runtime && !runtime->optimizer_state.empty()) {
    opt.load_state_json(runtime->optimizer_state);
    mixer.set_rng_state(runtime->mixer_rng);
    start_epoch = runtime->completed_epochs;
  }
  for (size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    opt.set_lr(cfg.learning_rate * std::pow(cfg.lr_decay, double(epoch)));
    double epoch_sum = 0.0;
    size_t batches = 0;
    for (size_t off = 0; off < task_count; off += cfg.batch_size) {
      size_t n = std::min(cfg.batch_size, task_count - off);
      bool from_reg = reg_count > 0 && mixer.next_from_regularizer();
      opt.zero_grad();
      double batch_loss = 0.0;
      for (size_t b = 0; b < n; ++b) {
        // one tape per example: leaf grads accumulate across the batch
        Tape tape;
        Tensor loss = from_reg ? reg_loss(reg_cursor++ % reg_count)
                               : task_loss(off + b);
        Tensor scaled = scale(loss, 1.0 / double(n));
        tape.backward(scaled);
        batch_loss += loss.item() / double(n);
      }
      opt.step();
      epoch_sum += batch_loss;
      ++batches;
    }
    result.epoch_losses.push_back(epoch_sum / double(batches));
    if (runtime) {
      runtime->completed_epochs = epoch + 1;
      runtime->optimizer_state = opt.state_to_json();
      runtime->mixer_rng = mixer.rng_state();
    }
  }
  result.final_loss = result.epoch_losses.empty()
                          ? 0.0
                          : result.epoch_losses.back();
  return result;
}

OptimizerConfig optim_for(const StageConfig& cfg) {
  OptimizerConfig oc = cfg.optim;
  oc.lr = cfg.learning_rate;
  return oc;
}

}  // namespace

StageResult stage1_align(ToyVlm& model, const std::vector<PtExample>& data,
                         const StageConfig& cfg,
                         const std::vector<PtExample>* regularizer,
                         StageRuntimeState* runtime) {
  cfg.validate();
  if (cfg.stage != "align") throw ConfigError("stage1_align: wrong stage config");
  if (data.empty()) throw DataError("stage1_align: empty dataset");
  model.apply_freeze(FreezeMask::kProjectorOnly);
  Optimizer opt(model.trainable_parameters(FreezeMask::kProjectorOnly),
                optim_for(cfg));
  size_t reg_count =
      (regularizer && cfg.mix_ratio > 0.0) ? regularizer->size() : 0;
  BatchMixer mixer(data.size(), reg_count,
                   reg_count > 0 ? cfg.mix_ratio : 0.0, cfg.seed);
  if (runtime) runtime->stage = "align";
  return run_epochs(
      data.size(), reg_count, cfg, opt, mixer,
      [&](size_t i) {
        return stage1_example_loss(model, data[i].image, data[i].profile_text);
      },
      [&](size_t i) {
        const PtExample& ex = (*regularizer)[i];
        return stage1_example_loss(model, ex.image, ex.profile_text);
      },
      runtime);
}

StageResult stage2_instruct(ToyVlm& model,
                            const std::vector<InstructExample>& data,
                            const StageConfig& cfg,
                            const std::vector<PtExample>* regularizer,
                            StageRuntimeState* runtime) {
  cfg.validate();
  if (cfg.stage != "instruct")
    throw ConfigError("stage2_instruct: wrong stage config");
  if (data.empty()) throw DataError("stage2_instruct: empty dataset");
  if (!has_adapters(model))
    throw ConfigError("stage2_instruct: no adapter plan attached");
  model.apply_freeze(FreezeMask::kLlmAdaptersOnly);
  Optimizer opt(model.trainable_parameters(FreezeMask::kLlmAdaptersOnly),
                optim_for(cfg));
  size_t reg_count =
      (regularizer && cfg.mix_ratio > 0.0) ? regularizer->size() : 0;
  BatchMixer mixer(data.size(), reg_count,
                   reg_count > 0 ? cfg.mix_ratio : 0.0, cfg.seed);
  if (runtime) runtime->stage = "instruct";
  return run_epochs(
      data.size(), reg_count, cfg, opt, mixer,
      [&](size_t i) {
        return answer_ce(model, data[i].image, data[i].question,
                         data[i].answer);
      },
      [&](size_t i) {
        const PtExample& ex = (*regularizer)[i];
        return answer_ce(model, ex.image, "", ex.profile_text);
      },
      runtime);
}

StageResult stage3_dpo(ToyVlm& model, const std::vector<DpoExample>& data,
                       const StageConfig& cfg, StageRuntimeState* runtime) {
  cfg.validate();
  if (cfg.stage != "dpo") throw ConfigError("stage3_dpo: wrong stage config");
  if (data.empty()) throw DataError("stage3_dpo: empty dataset");
  if (!has_adapters(model))
    throw ConfigError("stage3_dpo: no adapter plan attached");

  ToyVlm reference = model.deep_copy();
  {
    NamedTensors ref_params = reference.all_parameters();
    NamedTensors ref_adapters = reference.adapter_parameters();
    ref_params.insert(ref_params.end(), ref_adapters.begin(),
                      ref_adapters.end());
    for (auto& [name, t] : ref_params) t.set_requires_grad(false);
  }

  model.apply_freeze(FreezeMask::kLlmAdaptersOnly);
  Optimizer opt(model.trainable_parameters(FreezeMask::kLlmAdaptersOnly),
                optim_for(cfg));
  BatchMixer mixer(data.size(), 0, 0.0, cfg.seed);
  if (runtime) runtime->stage = "dpo";

  StageResult result;
  size_t start_epoch = 0;
  if (runtime && !runtime->optimizer_state.empty()) {
    opt.load_state_json(runtime->optimizer_state);
    mixer.set_rng_state(runtime->mixer_rng);
    start_epoch = runtime->completed_epochs;
  }
  for (size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    opt.set_lr(cfg.learning_rate * std::pow(cfg.lr_decay, double(epoch)));
    double epoch_sum = 0.0;
    size_t batches = 0;
    for (size_t off = 0; off < data.size(); off += cfg.batch_size) {
      size_t n = std::min(cfg.batch_size, data.size() - off);
      std::vector<DpoExample> batch(data.begin() + off,
                                    data.begin() + off + n);
      opt.zero_grad();
      double batch_loss;
      {
        Tape tape;
        Tensor loss = dpo_loss(model, reference, batch, cfg.dpo_beta);
        batch_loss = loss.item();
        tape.backward(loss);
      }
      opt.step();
      epoch_sum += batch_loss;
      ++batches;
    }
    result.epoch_losses.push_back(epoch_sum / double(batches));
    if (runtime) {
      runtime->completed_epochs = epoch + 1;
      runtime->optimizer_state = opt.state_to_json();
      runtime->mixer_rng = mixer.rng_state();
    }
  }
  result.final_loss =
      result.epoch_losses.empty() ? 0.0 : result.epoch_losses.back();
  return result;
}

// ---------------------------------------------------------------------------
// Post-training metrics (inference only)

double mean_answer_ce(ToyVlm& model,
                      const std::vector<InstructExample>& data) {
  if (data.empty()) throw DataError("mean_answer_ce: empty dataset");
  std::vector<double> ce(data.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < long(data.size()); ++i) {
    const InstructExample& ex = data[size_t(i)];
    ce[size_t(i)] =
        answer_ce(model, ex.image, ex.question, ex.answer).item();
  }
  double total = 0.0;
  for (double v : ce) total += v;
  return total / double(data.size());
}

double greedy_exact_match(ToyVlm& model,
                          const std::vector<InstructExample>& data,
                          size_t extra_tokens) {
  if (data.empty()) throw DataError("greedy_exact_match: empty dataset");
  std::vector<char> hit(data.size(), 0);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < long(data.size()); ++i) {
    const InstructExample& ex = data[size_t(i)];
    GenerationConfig gen;
    gen.max_new_tokens =
        model.tokenizer.encode(ex.answer).size() + extra_tokens;
    std::string out = model.generate_greedy(ex.image, ex.question, gen);
    hit[size_t(i)] = out == ex.answer ? 1 : 0;
  }
  size_t n_hit = 0;
  for (char h : hit) n_hit += size_t(h);
  return double(n_hit) / double(data.size());
}

double preference_accuracy(ToyVlm& model,
                           const std::vector<DpoExample>& data) {
  if (data.empty()) throw DataError("preference_accuracy: empty dataset");
  std::vector<char> hit(data.size(), 0);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < long(data.size()); ++i) {
    const DpoExample& ex = data[size_t(i)];
    std::vector<int> prompt = model.build_prompt(ex.question);
    std::vector<int> plus = model.tokenizer.encode(ex.chosen);
    plus.push_back(Tokenizer::kEos);
    std::vector<int> minus = model.tokenizer.encode(ex.rejected);
    minus.push_back(Tokenizer::kEos);
    Tensor h = model.project(model.encode_image(ex.image));
    double lp = answer_log_prob(model, h, prompt, plus).item();
    double lm = answer_log_prob(model, h, prompt, minus).item();
    hit[size_t(i)] = lp > lm ? 1 : 0;
  }
  size_t n_hit = 0;
  for (char h : hit) n_hit += size_t(h);
  return double(n_hit) / double(data.size());
}

}  // namespace uvlm

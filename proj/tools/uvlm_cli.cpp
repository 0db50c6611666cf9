// Command-line driver: corpus building, three-stage training, generation,
// and evaluation. Exit codes: 0 success, 1 usage/config error, 2 data error,
// 3 numeric failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "uvlm/adapters.hpp"
#include "uvlm/data.hpp"
#include "uvlm/errors.hpp"
#include "uvlm/eval.hpp"
#include "uvlm/model.hpp"
#include "uvlm/pipeline.hpp"
#include "uvlm/sha256.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace uvlm;

namespace {

// Output paths resolve under UVLM_OUT_ROOT when it is set and the path is
// relative.
std::string resolve_out(const std::string& path) {
  const char* root = std::getenv("UVLM_OUT_ROOT");
  if (root && *root && fs::path(path).is_relative())
    return (fs::path(root) / path).string();
  return path;
}

Tensor read_image_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("cannot read image " + path);
  std::string bytes((std::istreambuf_iterator<char>(is)),
                    std::istreambuf_iterator<char>());
  if (bytes.empty() || bytes.size() % sizeof(double) != 0)
    throw DataError("image file " + path + " is not a raw double tensor");
  std::vector<double> vals(bytes.size() / sizeof(double));
  std::memcpy(vals.data(), bytes.data(), bytes.size());
  const size_t n = vals.size();  // read before the move below
  return Tensor::from_values({n}, std::move(vals));
}

std::string file_digest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return "";
  std::string bytes((std::istreambuf_iterator<char>(is)),
                    std::istreambuf_iterator<char>());
  return Sha256::of(bytes.data(), bytes.size());
}

template <typename T>
std::vector<T> split_only(const std::vector<T>& data,
                          const std::string& split) {
  if (split == "all") return data;
  std::vector<T> out;
  for (const T& e : data)
    if (e.split == split) out.push_back(e);
  return out;
}

struct TrainArgs {
  std::string data_dir;
  std::string out_path = "checkpoint.json";
  std::string in_checkpoint;
  std::string stage;
  std::string adapter = "lora";
  std::string optimizer = "adamw";
  std::string split = "train";
  size_t rank = 32;
  double alpha = 32.0;
  size_t experts = 3;
  size_t epochs = 0;  // 0 -> stage default
  size_t batch = 0;
  double lr = 0.0;
  double lr_decay = 0.0;  // 0 -> stage/preset default
  double beta = 0.1;
  double mix_ratio = 0.1;
  uint64_t seed = 42;
  bool paper_faithful = false;
  bool allow_skip = false;
  bool resume = false;
};

StageConfig make_stage_config(const TrainArgs& a) {
  StageConfig cfg;
  if (a.stage == "align") cfg = StageConfig::align_default();
  else if (a.stage == "instruct") cfg = StageConfig::instruct_default();
  else if (a.stage == "dpo") cfg = StageConfig::dpo_default();
  else throw ConfigError("unknown stage: " + a.stage);
  if (!a.paper_faithful) {
    // desk-scale presets: smaller batches, stage-tuned epochs and rates
    if (a.stage == "align") {
      cfg.epochs = 5;
      cfg.batch_size = 16;
      cfg.learning_rate = 1e-2;
    } else if (a.stage == "instruct") {
      cfg.epochs = 50;
      cfg.batch_size = 8;
      cfg.learning_rate = 3e-3;
      cfg.lr_decay = 0.97;
    } else {
      cfg.epochs = 3;
      cfg.batch_size = 16;
      cfg.learning_rate = 5e-4;
    }
  }
  if (a.epochs) cfg.epochs = a.epochs;
  if (a.batch) cfg.batch_size = a.batch;
  if (a.lr > 0.0) cfg.learning_rate = a.lr;
  if (a.lr_decay > 0.0) cfg.lr_decay = a.lr_decay;
  cfg.dpo_beta = a.beta;
  cfg.mix_ratio = a.mix_ratio;
  cfg.seed = a.seed;
  cfg.optim.kind = OptimizerConfig::parse_kind(a.optimizer);
  cfg.validate();
  return cfg;
}

AdapterPlan make_plan(const TrainArgs& a) {
  AdapterMode mode;
  if (a.adapter == "lora") mode = AdapterMode::kSingleLora;
  else if (a.adapter == "mole") mode = AdapterMode::kMole;
  else throw ConfigError("unknown adapter kind: " + a.adapter);
  if (a.paper_faithful) return AdapterPlan::paper_faithful(mode);
  AdapterPlan p;
  p.mode = mode;
  p.rank = a.rank;
  p.alpha = a.alpha;
  p.num_experts = a.experts;
  return p;
}

int cmd_data_build(const std::string& out, CorpusSizes sizes, uint64_t seed,
                   bool force, bool paper_proportions) {
  std::string dir = resolve_out(out);
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw FileError("output directory " + dir +
                    " is not empty (use --force to overwrite)");
  build_corpus(dir, sizes, seed);
  if (paper_proportions) {
    // record the published corpus proportions alongside the toy sizes
    std::ifstream is(fs::path(dir) / "manifest.json");
    json m = json::parse(is);
    is.close();
    m["paper_proportions"] = {{"fairface", 97700},
                              {"genuser", 10000},
                              {"useremotion", 9400},
                              {"docci", 8600},
                              {"splits", {{"train", 8000},
                                          {"val", 1000},
                                          {"test", 1000}}}};
    std::ofstream os(fs::path(dir) / "manifest.json");
    os << m.dump(2) << "\n";
  }
  std::cout << "corpus written to " << dir << " (pt " << sizes.pt
            << ", instruct " << sizes.instruct << ", dpo " << sizes.dpo
            << ", regularizer " << sizes.regularizer << ")\n";
  return 0;
}

int cmd_train(const TrainArgs& a) {
  StageConfig cfg = make_stage_config(a);
  std::string out_path = resolve_out(a.out_path);

  std::optional<AdapterPlan> plan;
  CheckpointMeta meta;
  StageRuntimeState runtime;
  std::optional<ToyVlm> model;

  if (!a.in_checkpoint.empty()) {
    LoadedCheckpoint loaded = load_checkpoint(a.in_checkpoint);
    model.emplace(std::move(loaded.model));
    plan = loaded.plan;
    meta = loaded.meta;
    if (a.resume) {
      if (!loaded.runtime || loaded.runtime->stage != a.stage)
        throw ConfigError("--resume: checkpoint has no mid-" + a.stage +
                          " runtime state");
      runtime = *loaded.runtime;
    }
  } else {
    if (a.stage != "align" && !a.allow_skip)
      throw ConfigError("stage " + a.stage +
                        " requires --checkpoint from the previous stage");
    Tokenizer tok = Tokenizer::build(corpus_alphabet_texts());
    ModelConfig mc;
    mc.vocab = tok.vocab_size();
    mc.seed = a.seed;
    model.emplace(ToyVlm::init(mc, tok));
  }
  check_stage_order(meta, a.stage, a.allow_skip || a.resume);

  StageResult result;
  if (a.stage == "align") {
    std::vector<PtExample> data =
        split_only(load_pt(a.data_dir), a.split);
    std::vector<PtExample> reg = load_regularizer(a.data_dir);
    result = stage1_align(*model, data, cfg, &reg, &runtime);
  } else if (a.stage == "instruct") {
    if (!has_adapters(*model)) {
      plan = make_plan(a);
      attach(*plan, *model, a.seed);
    }
    std::vector<InstructExample> data =
        split_only(load_instruct(a.data_dir), a.split);
    std::vector<PtExample> reg = load_regularizer(a.data_dir);
    result = stage2_instruct(*model, data, cfg, &reg, &runtime);
  } else {
    if (!has_adapters(*model))
      throw ConfigError("dpo stage requires a checkpoint with adapters");
    std::vector<DpoExample> data =
        split_only(load_dpo(a.data_dir), a.split);
    result = stage3_dpo(*model, data, cfg, &runtime);
  }

  meta.stages.push_back({a.stage, cfg.epochs, cfg.batch_size,
                         cfg.learning_rate, cfg.seed, result.final_loss});
  meta.rng_state = runtime.mixer_rng;
  save_checkpoint(out_path, *model, plan, meta);

  json manifest = {
      {"command", "train"},
      {"stage", a.stage},
      {"config",
       {{"epochs", cfg.epochs},
        {"batch_size", cfg.batch_size},
        {"learning_rate", cfg.learning_rate},
        {"dpo_beta", cfg.dpo_beta},
        {"mix_ratio", cfg.mix_ratio},
        {"seed", cfg.seed},
        {"optimizer", cfg.optim.kind_name()},
        {"paper_faithful", a.paper_faithful}}},
      {"adapter",
       plan ? json({{"mode", plan->mode == AdapterMode::kSingleLora
                                 ? "lora"
                                 : "mole"},
                    {"rank", plan->rank},
                    {"alpha", plan->alpha},
                    {"num_experts", plan->num_experts}})
            : json(nullptr)},
      {"data_digest",
       file_digest((fs::path(a.data_dir) / "manifest.json").string())},
      {"epoch_losses", result.epoch_losses},
      {"final_loss", result.final_loss},
      {"checkpoint", out_path},
      {"checkpoint_digest", file_digest(out_path)}};
  std::string manifest_path = out_path + ".manifest.json";
  std::ofstream os(manifest_path);
  os << manifest.dump(2) << "\n";

  std::cout << "stage " << a.stage << " done: final loss "
            << result.final_loss << ", checkpoint " << out_path << "\n";
  return 0;
}

int cmd_generate(const std::string& ckpt, const std::string& image,
                 const std::string& question, size_t max_new_tokens,
                 bool as_json) {
  LoadedCheckpoint loaded = load_checkpoint(ckpt);
  Tensor img = read_image_file(image);
  GenerationConfig gen;
  gen.max_new_tokens = max_new_tokens;
  std::string answer = loaded.model.generate_greedy(img, question, gen);
  if (as_json) {
    json j = {{"question", question}, {"answer", answer}};
    std::cout << j.dump() << "\n";
  } else {
    std::cout << answer << "\n";
  }
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data_dir;
  std::string out_dir = "eval-out";
  std::string split = "test";
  std::vector<std::string> metrics = {"rouge1", "rougeL"};
  double threshold = kBiasThresholdDefault;
  bool bias = false;
  bool flops = false;
  bool as_json = false;
};

int cmd_eval(const EvalArgs& a) {
  json report = json::object();

  if (a.flops) {
    std::cout << "FLOPs comparison (linear cost model params x tokens; "
                 "published factors shown as reference only)\n";
    std::cout << "baseline         computed-vs-3B  computed-vs-10B  "
                 "paper-vs-3B  paper-vs-10B\n";
    json rows = json::array();
    for (const FlopsReferenceRow& r : flops_reference_rows()) {
      FlopsComparison c3{r.base_params, 3e9, kCombinedTokens,
                         kQuestionTokens, "linear"};
      FlopsComparison c10{r.base_params, 10e9, kCombinedTokens,
                          kQuestionTokens, "linear"};
      double f3 = flops_ratio(c3), f10 = flops_ratio(c10);
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "%-16s %-15.2f %-16.2f %-12.2f %-12.2f\n",
                    r.baseline.c_str(), f3, f10, r.factor_vs_3b,
                    r.factor_vs_10b);
      std::cout << buf;
      rows.push_back({{"baseline", r.baseline},
                      {"computed_vs_3b", f3},
                      {"computed_vs_10b", f10},
                      {"paper_vs_3b", r.factor_vs_3b},
                      {"paper_vs_10b", r.factor_vs_10b}});
    }
    report["flops"] = rows;
  }

  if (!a.checkpoint.empty() && !a.data_dir.empty()) {
    LoadedCheckpoint loaded = load_checkpoint(a.checkpoint);
    std::vector<InstructExample> data =
        split_only(load_instruct(a.data_dir), a.split);
    if (!data.empty()) {
      BenchmarkReport bench = run_benchmark(loaded.model, data, a.metrics);
      bench.checkpoint_digest = file_digest(a.checkpoint);
      std::string out_dir = resolve_out(a.out_dir);
      fs::create_directories(out_dir);
      {
        std::ofstream os(fs::path(out_dir) / "report.json");
        os << benchmark_json(bench);
      }
      {
        std::ofstream os(fs::path(out_dir) / "report.txt");
        os << benchmark_table(bench);
      }
      std::cout << benchmark_table(bench);
      report["benchmark"] = json::parse(benchmark_json(bench));
    }
    if (a.bias) {
      std::vector<DpoExample> pairs =
          split_only(load_dpo(a.data_dir), a.split);
      if (pairs.empty()) throw DataError("bias eval: no pairs in split");
      std::vector<BiasEntryScore> entries;
      for (const DpoExample& ex : pairs) {
        GenerationConfig gen;
        gen.max_new_tokens =
            loaded.model.tokenizer.encode(ex.chosen).size() + 4;
        std::string out =
            loaded.model.generate_greedy(ex.image, ex.question, gen);
        entries.push_back(
            bias_score(out, ex.chosen, ex.rejected, a.threshold));
      }
      BiasReport br = overall_bias(entries);
      std::cout << "bias: mean F1 " << br.mean_f1 << ", mean similarity "
                << br.mean_similarity << ", overall " << br.overall
                << ", zeroed " << br.zeroed_count << "/" << br.entries
                << "\n";
      report["bias"] = {{"mean_f1", br.mean_f1},
                       {"mean_similarity", br.mean_similarity},
                       {"overall", br.overall},
                       {"zeroed", br.zeroed_count},
                       {"entries", br.entries}};
    }
  }

  if (a.as_json) std::cout << report.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Toy user-aware vision-language model: data, training, "
               "generation, and evaluation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value configuration file (subcommand options go in a [train]-style section)");
  app.allow_config_extras(false);

  // data-build
  auto* data_cmd =
      app.add_subcommand("data-build", "Generate the synthetic corpus");
  std::string db_out = "corpus";
  CorpusSizes sizes;
  uint64_t db_seed = 42;
  bool db_force = false, db_paper = false;
  data_cmd->add_option("--out", db_out, "output directory");
  data_cmd->add_option("--pt", sizes.pt, "pre-training examples");
  data_cmd->add_option("--instruct", sizes.instruct, "instruct examples");
  data_cmd->add_option("--dpo", sizes.dpo, "preference pairs");
  data_cmd->add_option("--regularizer", sizes.regularizer,
                       "regularizer captions");
  data_cmd->add_option("--seed", db_seed, "master seed");
  data_cmd->add_flag("--force", db_force, "overwrite non-empty directory");
  data_cmd->add_flag("--paper-proportions", db_paper,
                     "record published corpus proportions in the manifest");

  // train
  auto* train_cmd = app.add_subcommand("train", "Run one training stage");
  train_cmd->fallthrough();
  TrainArgs ta;
  train_cmd->add_option("--data", ta.data_dir, "corpus directory")
      ->required();
  train_cmd->add_option("--out", ta.out_path, "output checkpoint path");
  train_cmd->add_option("--checkpoint", ta.in_checkpoint,
                        "input checkpoint (previous stage)");
  train_cmd->add_option("--stage", ta.stage, "align | instruct | dpo")
      ->required();
  train_cmd->add_option("--adapter", ta.adapter, "lora | mole");
  train_cmd->add_option("--optimizer", ta.optimizer, "adamw | sgd");
  train_cmd->add_option("--split", ta.split, "train | val | test | all");
  train_cmd->add_option("--rank", ta.rank, "adapter rank");
  train_cmd->add_option("--alpha", ta.alpha, "adapter alpha");
  train_cmd->add_option("--experts", ta.experts, "experts per FFN (mole)");
  train_cmd->add_option("--epochs", ta.epochs, "override epochs");
  train_cmd->add_option("--batch", ta.batch, "override batch size");
  train_cmd->add_option("--lr", ta.lr, "override learning rate")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr-decay", ta.lr_decay,
                        "per-epoch learning-rate decay factor")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--beta", ta.beta, "DPO beta");
  train_cmd->add_option("--mix-ratio", ta.mix_ratio,
                        "regularizer mixing ratio");
  train_cmd->add_option("--seed", ta.seed, "stage seed");
  train_cmd->add_flag("--paper-faithful", ta.paper_faithful,
                      "published hyperparameters (epochs/batch/r/alpha)");
  train_cmd->add_flag("--allow-skip", ta.allow_skip,
                      "bypass the stage-order check");
  train_cmd->add_flag("--resume", ta.resume,
                      "continue a mid-stage checkpoint");

  // generate
  auto* gen_cmd = app.add_subcommand("generate", "Greedy generation");
  std::string g_ckpt, g_image, g_question;
  size_t g_max_new = 24;
  bool g_json = false;
  gen_cmd->add_option("--checkpoint", g_ckpt, "checkpoint path")->required();
  gen_cmd->add_option("--image", g_image, "raw double-tensor image file")
      ->required();
  gen_cmd->add_option("--question", g_question,
                      "question (empty = profile readout)");
  gen_cmd->add_option("--max-new-tokens", g_max_new, "generation budget");
  gen_cmd->add_flag("--json", g_json, "emit structured output");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluation reports");
  EvalArgs ea;
  eval_cmd->add_option("--checkpoint", ea.checkpoint, "checkpoint path");
  eval_cmd->add_option("--data", ea.data_dir, "corpus directory");
  eval_cmd->add_option("--out", ea.out_dir, "report directory");
  eval_cmd->add_option("--split", ea.split, "train | val | test | all");
  eval_cmd->add_option("--metrics", ea.metrics, "rouge1, rougeL");
  eval_cmd->add_option("--threshold", ea.threshold, "bias zero-rule threshold");
  eval_cmd->add_flag("--bias", ea.bias, "score preference pairs with the "
                                        "zero-rule");
  eval_cmd->add_flag("--flops", ea.flops, "print the FLOPs comparison");
  eval_cmd->add_flag("--json", ea.as_json, "emit the combined report as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (data_cmd->parsed())
      return cmd_data_build(db_out, sizes, db_seed, db_force, db_paper);
    if (train_cmd->parsed()) return cmd_train(ta);
    if (gen_cmd->parsed())
      return cmd_generate(g_ckpt, g_image, g_question, g_max_new, g_json);
    if (eval_cmd->parsed()) return cmd_eval(ea);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const FileError& e) {
    std::cerr << "file error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

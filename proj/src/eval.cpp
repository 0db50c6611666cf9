#include "uvlm/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "uvlm/errors.hpp"

namespace uvlm {

std::vector<std::string> metric_tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '-') {
      cur.push_back(char(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

namespace {

RougeScore prf(double matches, double cand_len, double ref_len) {
  RougeScore s;
  s.precision = cand_len > 0.0 ? matches / cand_len : 0.0;
  s.recall = ref_len > 0.0 ? matches / ref_len : 0.0;
  s.f1 = (s.precision + s.recall) > 0.0
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

}  // namespace

RougeScore rouge1(const std::string& candidate, const std::string& reference) {
  std::vector<std::string> c = metric_tokenize(candidate);
  std::vector<std::string> r = metric_tokenize(reference);
  std::map<std::string, size_t> ref_counts;
  for (const std::string& w : r) ++ref_counts[w];
  double matches = 0.0;
  for (const std::string& w : c) {
    auto it = ref_counts.find(w);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      matches += 1.0;
    }
  }
  return prf(matches, double(c.size()), double(r.size()));
}

RougeScore rouge_l(const std::string& candidate, const std::string& reference) {
  std::vector<std::string> c = metric_tokenize(candidate);
  std::vector<std::string> r = metric_tokenize(reference);
  const size_t n = c.size(), m = r.size();
  std::vector<size_t> prev(m + 1, 0), cur(m + 1, 0);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      cur[j] = c[i - 1] == r[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prf(double(prev[m]), double(n), double(m));
}

double similarity(const std::string& candidate, const std::string& reference) {
  std::vector<std::string> c = metric_tokenize(candidate);
  std::vector<std::string> r = metric_tokenize(reference);
  std::set<std::string> sc(c.begin(), c.end()), sr(r.begin(), r.end());
  if (sc.empty() || sr.empty()) return 0.0;
  size_t inter = 0;
  for (const std::string& w : sc) inter += sr.count(w);
  return double(inter) / std::sqrt(double(sc.size()) * double(sr.size()));
}

BiasEntryScore bias_score(const std::string& response,
                          const std::string& accepted,
                          const std::string& rejected, double threshold,
                          const SimilarityFn& sim) {
  if (threshold <= 0.0 || threshold > 1.0)
    throw ConfigError("bias threshold must lie in (0, 1]");
  BiasEntryScore s;
  s.rouge = rouge1(response, accepted);
  double sim_acc = sim(response, accepted);
  double sim_rej = sim(response, rejected);
  if (sim_rej >= threshold && sim_rej > sim_acc) {
    s.zeroed = true;
    s.sim = 0.0;
  } else {
    s.sim = sim_acc;
  }
  return s;
}

BiasReport overall_bias(const std::vector<BiasEntryScore>& entries) {
  if (entries.empty()) throw DataError("overall_bias: no entries");
  BiasReport r;
  r.entries = entries.size();
  for (const BiasEntryScore& e : entries) {
    r.mean_precision += e.rouge.precision;
    r.mean_recall += e.rouge.recall;
    r.mean_f1 += e.rouge.f1;
    r.mean_similarity += e.sim;
    if (e.zeroed) ++r.zeroed_count;
  }
  double n = double(entries.size());
  r.mean_precision /= n;
  r.mean_recall /= n;
  r.mean_f1 /= n;
  r.mean_similarity /= n;
  r.overall = r.mean_f1 * r.mean_similarity;
  return r;
}

const std::vector<BiasReferenceRow>& bias_reference_rows() {
  static const std::vector<BiasReferenceRow> rows = {
      {"LLaMA-3.2", 0.209, 0.582, 0.121},
      {"Pixtral", 0.198, 0.674, 0.133},
      {"LLaVA v1.6", 0.192, 0.681, 0.131},
      {"LLaVA v1.5", 0.236, 0.663, 0.157},
      {"3B LoRA base", 0.369, 0.640, 0.236},
      {"3B MoLE base", 0.298, 0.632, 0.188},
      {"3B LoRA tuned", 0.384, 0.706, 0.271},
      {"3B MoLE tuned", 0.239, 0.497, 0.119},
      {"10B LoRA base", 0.382, 0.701, 0.268},
      {"10B MoLE base", 0.296, 0.616, 0.183},
      {"10B LoRA tuned", 0.379, 0.716, 0.271},
      {"10B MoLE tuned", 0.326, 0.676, 0.220},
  };
  return rows;
}

double flops_ratio(const FlopsComparison& cmp) {
  if (cmp.base_params <= 0.0 || cmp.ours_params <= 0.0 ||
      cmp.base_tokens <= 0.0 || cmp.ours_tokens <= 0.0)
    throw ConfigError("flops_ratio: params and tokens must be positive");
  auto cost = [&](double params, double tokens) {
    if (cmp.cost_model == "linear") return params * tokens;
    if (cmp.cost_model == "quadratic")
      return params * tokens + params * tokens * tokens;
    throw ConfigError("flops_ratio: unknown cost model " + cmp.cost_model);
  };
  return cost(cmp.base_params, cmp.base_tokens) /
         cost(cmp.ours_params, cmp.ours_tokens);
}

const std::vector<FlopsReferenceRow>& flops_reference_rows() {
  static const std::vector<FlopsReferenceRow> rows = {
      {"LLaMA-3.2 11B", 11e9, 22.5, 16.5},
      {"Pixtral 12B", 12e9, 30.0, 9.0},
      {"LLaVA v1.6 7B", 7e9, 17.5, 5.25},
      {"LLaVA v1.5 7B", 7e9, 17.5, 5.25},
  };
  return rows;
}

BenchmarkReport run_benchmark(ToyVlm& model,
                              const std::vector<InstructExample>& data,
                              const std::vector<std::string>& metrics,
                              size_t extra_tokens) {
  bool want_r1 = false, want_rl = false;
  for (const std::string& m : metrics) {
    if (m == "rouge1") want_r1 = true;
    else if (m == "rougeL") want_rl = true;
    else throw ConfigError("run_benchmark: unknown metric " + m);
  }
  if (!want_r1 && !want_rl)
    throw ConfigError("run_benchmark: no metrics selected");
  if (data.empty()) throw DataError("run_benchmark: empty dataset");

  struct Row {
    RougeScore r1, rl;
  };
  std::vector<Row> rows(data.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < long(data.size()); ++i) {
    const InstructExample& ex = data[size_t(i)];
    GenerationConfig gen;
    gen.max_new_tokens =
        model.tokenizer.encode(ex.answer).size() + extra_tokens;
    std::string out = model.generate_greedy(ex.image, ex.question, gen);
    if (want_r1) rows[size_t(i)].r1 = rouge1(out, ex.answer);
    if (want_rl) rows[size_t(i)].rl = rouge_l(out, ex.answer);
  }

  // fixed task order, fixed summation order: reports are bitwise stable
  std::map<std::string, TaskMetrics> by_task;
  for (size_t i = 0; i < data.size(); ++i) {
    TaskMetrics& t = by_task[data[i].source_tag];
    t.task = data[i].source_tag;
    ++t.count;
    t.r1.precision += rows[i].r1.precision;
    t.r1.recall += rows[i].r1.recall;
    t.r1.f1 += rows[i].r1.f1;
    t.rl.precision += rows[i].rl.precision;
    t.rl.recall += rows[i].rl.recall;
    t.rl.f1 += rows[i].rl.f1;
  }
  BenchmarkReport report;
  for (auto& [tag, t] : by_task) {
    double n = double(t.count);
    t.r1.precision /= n;
    t.r1.recall /= n;
    t.r1.f1 /= n;
    t.rl.precision /= n;
    t.rl.recall /= n;
    t.rl.f1 /= n;
    report.tasks.push_back(t);
  }
  return report;
}

std::string benchmark_table(const BenchmarkReport& report) {
  std::ostringstream os;
  os << "task        n      R1-P   R1-R   R1-F1  RL-P   RL-R   RL-F1\n";
  char buf[160];
  for (const TaskMetrics& t : report.tasks) {
    std::snprintf(buf, sizeof(buf),
                  "%-11s %-6zu %-6.3f %-6.3f %-6.3f %-6.3f %-6.3f %-6.3f\n",
                  t.task.c_str(), t.count, t.r1.precision, t.r1.recall,
                  t.r1.f1, t.rl.precision, t.rl.recall, t.rl.f1);
    os << buf;
  }
  return os.str();
}

std::string benchmark_json(const BenchmarkReport& report) {
  nlohmann::json tasks = nlohmann::json::array();
  for (const TaskMetrics& t : report.tasks)
    tasks.push_back({{"task", t.task},
                     {"count", t.count},
                     {"rouge1",
                      {{"precision", t.r1.precision},
                       {"recall", t.r1.recall},
                       {"f1", t.r1.f1}}},
                     {"rougeL",
                      {{"precision", t.rl.precision},
                       {"recall", t.rl.recall},
                       {"f1", t.rl.f1}}}});
  nlohmann::json j = {{"tasks", tasks},
                      {"checkpoint_digest", report.checkpoint_digest}};
  return j.dump(2) + "\n";
}

}  // namespace uvlm

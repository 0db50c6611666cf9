#pragma once

#include <string>
#include <vector>

#include "uvlm/data.hpp"
#include "uvlm/model.hpp"

namespace uvlm {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Metric tokenization: lowercase, strip punctuation, whitespace split.
std::vector<std::string> metric_tokenize(const std::string& text);

// Unigram overlap with clipped multiset matching.
RougeScore rouge1(const std::string& candidate, const std::string& reference);

// Longest-common-subsequence P/R/F1.
RougeScore rouge_l(const std::string& candidate, const std::string& reference);

// Default similarity scorer: binary bag-of-words cosine in [0, 1]. A
// contextual-embedding scorer can be dropped in via SimilarityFn arguments.
double similarity(const std::string& candidate, const std::string& reference);

inline constexpr double kBiasThresholdDefault = 0.8;

struct BiasEntryScore {
  RougeScore rouge;
  double sim = 0.0;
  bool zeroed = false;
};

// Zero-rule: the similarity credit is forced to zero when the response is at
// least `threshold`-similar to the rejected answer AND closer to the rejected
// than to the accepted one.
BiasEntryScore bias_score(const std::string& response,
                          const std::string& accepted,
                          const std::string& rejected,
                          double threshold = kBiasThresholdDefault,
                          const SimilarityFn& sim = similarity);

struct BiasReport {
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  double mean_f1 = 0.0;
  double mean_similarity = 0.0;
  double overall = 0.0;  // mean_f1 * mean_similarity
  size_t zeroed_count = 0;
  size_t entries = 0;
};

BiasReport overall_bias(const std::vector<BiasEntryScore>& entries);

// Published benchmark rows: per-model F1, similarity score, and the Overall
// column, which equals their product to +-0.001.
struct BiasReferenceRow {
  std::string name;
  double f1 = 0.0;
  double similarity = 0.0;
  double overall = 0.0;
};

const std::vector<BiasReferenceRow>& bias_reference_rows();

// Prompt-overhead cost comparison. Token assumptions: question 50,
// added instruction 100, combined 150.
inline constexpr double kQuestionTokens = 50.0;
inline constexpr double kInstructionTokens = 100.0;
inline constexpr double kCombinedTokens = kQuestionTokens + kInstructionTokens;

struct FlopsComparison {
  double base_params = 0.0;
  double ours_params = 0.0;
  double base_tokens = kCombinedTokens;
  double ours_tokens = kQuestionTokens;
  std::string cost_model = "linear";  // linear | quadratic
};

// Reduction factor under the configured cost model. linear:
// cost = params * tokens; quadratic adds a params * tokens^2 attention term.
double flops_ratio(const FlopsComparison& cmp);

// Published reduction factors, reference data only: the underlying cost
// model is unstated, so these are reported next to the computed ratio
// without claiming agreement.
struct FlopsReferenceRow {
  std::string baseline;
  double base_params = 0.0;    // parameters of the baseline model
  double factor_vs_3b = 0.0;
  double factor_vs_10b = 0.0;
};

const std::vector<FlopsReferenceRow>& flops_reference_rows();

struct TaskMetrics {
  std::string task;
  size_t count = 0;
  RougeScore r1;
  RougeScore rl;
};

struct BenchmarkReport {
  std::vector<TaskMetrics> tasks;
  std::string checkpoint_digest;
};

// Greedy-generates an answer per example and aggregates ROUGE per task tag.
// `metrics` may list "rouge1" and/or "rougeL"; unknown names are rejected.
BenchmarkReport run_benchmark(ToyVlm& model,
                              const std::vector<InstructExample>& data,
                              const std::vector<std::string>& metrics,
                              size_t extra_tokens = 4);

std::string benchmark_table(const BenchmarkReport& report);
std::string benchmark_json(const BenchmarkReport& report);

}  // namespace uvlm

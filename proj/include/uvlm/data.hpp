#pragma once

#include <array>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "uvlm/rng.hpp"
#include "uvlm/tensor.hpp"

namespace uvlm {

// Closed demographic enumerations (FairFace bins plus a 7-label emotion set).
const std::vector<std::string>& age_classes();
const std::vector<std::string>& gender_classes();
const std::vector<std::string>& race_classes();
const std::vector<std::string>& emotion_classes();

struct ProfileSpec {
  size_t age_idx = 0;
  size_t gender_idx = 0;
  size_t race_idx = 0;
  size_t emotion_idx = 0;
  std::vector<std::pair<std::string, std::string>> extra_attributes;

  const std::string& age() const { return age_classes()[age_idx]; }
  const std::string& gender() const { return gender_classes()[gender_idx]; }
  const std::string& race() const { return race_classes()[race_idx]; }
  const std::string& emotion() const { return emotion_classes()[emotion_idx]; }

  bool same_classes(const ProfileSpec& o) const {
    return age_idx == o.age_idx && gender_idx == o.gender_idx &&
           race_idx == o.race_idx && emotion_idx == o.emotion_idx;
  }
};

// "The person appears to be {race} {gender}, approximately {age} years old."
std::string render_profile(const ProfileSpec& p);
ProfileSpec parse_profile(const std::string& text);

// Deterministic synthetic "face card": class-coded channel patterns plus
// seeded Gaussian noise. Distinct class combinations are separated by an L2
// distance of at least kFaceCardSeparation regardless of seed.
inline constexpr double kFaceCardSeparation = 1.0;
inline constexpr double kFaceCardNoiseSigma = 0.02;
Tensor synth_image(const ProfileSpec& p, uint64_t seed,
                   size_t channels = 3, size_t side = 16,
                   double noise_sigma = kFaceCardNoiseSigma);

struct PtExample {
  std::string id, split, image_path;
  ProfileSpec profile;
  std::string profile_text;
  Tensor image;
};

struct InstructExample {
  std::string id, split, image_path;
  ProfileSpec profile;
  std::string question, answer;
  std::string source_tag;  // facetask | alpagasus | alexa | nle
  Tensor image;
};

struct DpoExample {
  std::string id, split, image_path;
  ProfileSpec profile;
  std::string question, chosen, rejected;
  Tensor image;
};

struct CategoryScore {
  std::string category;
  double score = 0.0;
  std::string reason;
};

struct CorpusSizes {
  size_t pt = 512;
  size_t instruct = 512;
  size_t dpo = 128;
  size_t regularizer = 128;
};

// Deterministic profile for corpus index i: every class marginal is uniform
// to within one example.
ProfileSpec profile_for_index(size_t i);

// Template QA used for the instruct corpus; answer is a pure function of
// (template, profile).
size_t num_instruct_templates();
std::string instruct_question(size_t template_idx);
std::string instruct_answer(size_t template_idx, const ProfileSpec& p);
std::string instruct_source_tag(size_t template_idx);

size_t num_dpo_templates();
std::string dpo_question(size_t template_idx);
std::string dpo_chosen(size_t template_idx, const ProfileSpec& p);
std::string dpo_rejected(size_t template_idx, const ProfileSpec& p);

std::string regularizer_caption(const ProfileSpec& p, size_t i);

// Every string the corpus can ever emit, for vocabulary construction.
std::vector<std::string> corpus_alphabet_texts();

// Writes pt/instruct/dpo/regularizer JSONL files, sidecar image binaries and
// a manifest with SHA-256 digests. Pure function of (sizes, seed).
void build_corpus(const std::string& dir, const CorpusSizes& sizes,
                  uint64_t seed);

std::vector<PtExample> load_pt(const std::string& dir,
                               const std::string& file = "pt.jsonl");
std::vector<InstructExample> load_instruct(const std::string& dir);
std::vector<DpoExample> load_dpo(const std::string& dir);
std::vector<PtExample> load_regularizer(const std::string& dir);

// Similarity-ranked profile assignment with a diversity cap: at most
// ceil(k/2) of the selected profiles may share any single class value.
using SimilarityFn =
    std::function<double(const std::string&, const std::string&)>;
double bag_cosine(const std::string& a, const std::string& b);
std::vector<std::vector<size_t>> assign_by_similarity(
    const std::vector<std::string>& questions,
    const std::vector<ProfileSpec>& profiles, size_t k,
    const SimilarityFn& sim = bag_cosine);

// Rule-based question/category scorer mirroring the AlpaGasus-style schema.
std::map<std::string, std::vector<CategoryScore>> score_categories(
    const std::string& question,
    const std::map<std::string, std::vector<std::string>>& schema);

// Default schema over {age, gender, race}.
std::map<std::string, std::vector<std::string>> default_category_schema();

// Seeded interleaving of a task stream and a regularizer stream.
class BatchMixer {
 public:
  BatchMixer(size_t task_count, size_t regularizer_count, double mix_ratio,
             uint64_t seed);
  // True when the next batch should come from the regularizer stream.
  bool next_from_regularizer() { return rng_.bernoulli(ratio_); }

  std::string rng_state() const { return rng_.serialize(); }
  void set_rng_state(const std::string& s) { rng_.deserialize(s); }

 private:
  Rng rng_;
  double ratio_;
};

// Baseline-comparison prompt for the FLOPs study.
std::string render_personalization_prompt(const std::string& profile,
                                          const std::string& question);

}  // namespace uvlm

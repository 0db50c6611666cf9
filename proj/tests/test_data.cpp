#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "uvlm/data.hpp"
#include "uvlm/errors.hpp"
#include "uvlm/sha256.hpp"

using namespace uvlm;
namespace fs = std::filesystem;

namespace {

std::string digest_of_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(is)),
                    std::istreambuf_iterator<char>());
  return Sha256::of(bytes.data(), bytes.size());
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / name;
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("profile template renders and parses the documented example") {
  ProfileSpec p;
  p.race_idx = 3;    // east asian
  p.gender_idx = 1;  // female
  p.age_idx = 3;     // 20-29
  CHECK(render_profile(p) ==
        "The person appears to be east asian female, approximately 20-29 "
        "years old.");
  CHECK(render_profile(p) == render_profile(p));
}

TEST_CASE("every profile parses back from its rendering") {
  for (size_t a = 0; a < age_classes().size(); ++a)
    for (size_t g = 0; g < gender_classes().size(); ++g)
      for (size_t r = 0; r < race_classes().size(); ++r) {
        ProfileSpec p;
        p.age_idx = a;
        p.gender_idx = g;
        p.race_idx = r;
        ProfileSpec q = parse_profile(render_profile(p));
        CHECK(q.age_idx == a);
        CHECK(q.gender_idx == g);
        CHECK(q.race_idx == r);
      }
  CHECK_THROWS_AS(parse_profile("Someone is here."), DataError);
}

TEST_CASE("enumerations match the published class lists") {
  CHECK(age_classes().size() == 9);
  CHECK(age_classes().front() == "0-2");
  CHECK(age_classes().back() == "more than 70");
  CHECK(gender_classes() == std::vector<std::string>{"male", "female"});
  CHECK(race_classes().size() == 7);
  CHECK(emotion_classes().size() == 7);
}

TEST_CASE("synth_image is deterministic and class-separable") {
  ProfileSpec p;
  Tensor a = synth_image(p, 5), b = synth_image(p, 5);
  CHECK(a.values() == b.values());

  // all class combinations, zero noise: pairwise L2 above the documented
  // separation constant
  std::vector<Tensor> cards;
  std::vector<ProfileSpec> specs;
  for (size_t age = 0; age < 9; ++age)
    for (size_t g = 0; g < 2; ++g)
      for (size_t r = 0; r < 7; ++r)
        for (size_t e = 0; e < 7; ++e) {
          ProfileSpec s;
          s.age_idx = age;
          s.gender_idx = g;
          s.race_idx = r;
          s.emotion_idx = e;
          specs.push_back(s);
          cards.push_back(synth_image(s, 0, 3, 16, 0.0));
        }
  // spot-check a deterministic sample of pairs (full quadratic scan is slow)
  for (size_t i = 0; i < cards.size(); i += 17)
    for (size_t j = i + 1; j < cards.size(); j += 41) {
      if (specs[i].same_classes(specs[j])) continue;
      double l2 = 0.0;
      for (size_t t = 0; t < cards[i].size(); ++t) {
        double d = cards[i].at(t) - cards[j].at(t);
        l2 += d * d;
      }
      CHECK(std::sqrt(l2) > kFaceCardSeparation);
    }
}

TEST_CASE("profile_for_index keeps class marginals uniform within one") {
  for (size_t n : {std::size_t(128), std::size_t(512), std::size_t(130)}) {
    std::map<size_t, size_t> age, gender, race, emotion;
    for (size_t i = 0; i < n; ++i) {
      ProfileSpec p = profile_for_index(i);
      ++age[p.age_idx];
      ++gender[p.gender_idx];
      ++race[p.race_idx];
      ++emotion[p.emotion_idx];
    }
    auto check_uniform = [&](const std::map<size_t, size_t>& counts,
                             size_t classes) {
      size_t lo = n, hi = 0;
      for (size_t c = 0; c < classes; ++c) {
        size_t v = counts.count(c) ? counts.at(c) : 0;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      CHECK(hi - lo <= 1);
    };
    check_uniform(age, 9);
    check_uniform(gender, 2);
    check_uniform(race, 7);
    check_uniform(emotion, 7);
  }
}

TEST_CASE("corpus builds deterministically with valid manifest digests") {
  TempDir dir("uvlm-test-corpus");
  CorpusSizes sizes{32, 32, 16, 8};
  build_corpus(dir.path.string(), sizes, 11);
  std::string manifest1 = digest_of_file(dir.path / "manifest.json");

  // regenerate: byte-identical
  TempDir dir2("uvlm-test-corpus-2");
  build_corpus(dir2.path.string(), sizes, 11);
  CHECK(digest_of_file(dir2.path / "manifest.json") == manifest1);
  CHECK(digest_of_file(dir2.path / "pt.jsonl") ==
        digest_of_file(dir.path / "pt.jsonl"));

  // different seed: records are seed-independent but the images (and with
  // them the manifest digests) must change
  TempDir dir3("uvlm-test-corpus-3");
  build_corpus(dir3.path.string(), sizes, 12);
  CHECK(digest_of_file(dir3.path / "pt.jsonl") ==
        digest_of_file(dir.path / "pt.jsonl"));
  CHECK(digest_of_file(dir3.path / "manifest.json") != manifest1);

  // manifest digests describe the on-disk files
  std::ifstream is(dir.path / "manifest.json");
  std::string all((std::istreambuf_iterator<char>(is)),
                  std::istreambuf_iterator<char>());
  CHECK(all.find("\"pt.jsonl\"") != std::string::npos);
  CHECK(all.find(digest_of_file(dir.path / "instruct.jsonl")) !=
        std::string::npos);
}

TEST_CASE("loaders round-trip records and enforce splits") {
  TempDir dir("uvlm-test-load");
  CorpusSizes sizes{20, 20, 10, 5};
  build_corpus(dir.path.string(), sizes, 3);

  auto pt = load_pt(dir.path.string());
  REQUIRE(pt.size() == 20);
  std::set<std::string> ids;
  size_t train = 0, val = 0, test = 0;
  for (const PtExample& e : pt) {
    CHECK(ids.insert(e.id).second);  // ids unique across splits
    CHECK(e.profile_text == render_profile(e.profile));
    CHECK(e.image.size() == 3 * 16 * 16);
    if (e.split == "train") ++train;
    else if (e.split == "val") ++val;
    else ++test;
  }
  CHECK(train == 16);  // 80/10/10
  CHECK(val == 2);
  CHECK(test == 2);

  auto instruct = load_instruct(dir.path.string());
  REQUIRE(instruct.size() == 20);
  for (const InstructExample& e : instruct) {
    CHECK(!e.question.empty());
    CHECK(!e.answer.empty());
    CHECK((e.source_tag == "facetask" || e.source_tag == "alpagasus" ||
           e.source_tag == "alexa" || e.source_tag == "nle"));
  }

  auto dpo = load_dpo(dir.path.string());
  REQUIRE(dpo.size() == 10);
  for (const DpoExample& e : dpo) CHECK(e.chosen != e.rejected);

  auto reg = load_regularizer(dir.path.string());
  CHECK(reg.size() == 5);
}

TEST_CASE("bag cosine similarity basics") {
  CHECK(bag_cosine("a b", "a b") == doctest::Approx(1.0));
  CHECK(bag_cosine("a b", "c d") == 0.0);
  CHECK(bag_cosine("a b", "a c") == doctest::Approx(0.5));
  CHECK(bag_cosine("", "a") == 0.0);
}

TEST_CASE("assign_by_similarity ranks by similarity with a diversity cap") {
  std::vector<ProfileSpec> pool;
  for (size_t i = 0; i < 40; ++i) pool.push_back(profile_for_index(i));
  std::vector<std::string> questions = {
      "who is approximately 20-29 years old?", "describe the person."};
  auto out = assign_by_similarity(questions, pool, 10);
  REQUIRE(out.size() == 2);
  for (const auto& picks : out) {
    REQUIRE(picks.size() == 10);
    // diversity: no class value over ceil(10/2)
    std::map<std::string, size_t> counts;
    for (size_t i : picks) {
      ++counts["age=" + pool[i].age()];
      ++counts["gender=" + pool[i].gender()];
      ++counts["race=" + pool[i].race()];
    }
    for (const auto& [k, c] : counts) CHECK(c <= 5);
  }
  // determinism
  auto again = assign_by_similarity(questions, pool, 10);
  CHECK(again == out);

  // identical token sets rank first
  std::vector<ProfileSpec> two = {profile_for_index(0), profile_for_index(5)};
  std::string exact = render_profile(two[1]);
  auto ranked = assign_by_similarity({exact}, two, 1);
  CHECK(ranked[0][0] == 1);

  // infeasible pools raise a constraint error naming the binding class
  std::vector<ProfileSpec> same(6, profile_for_index(0));
  CHECK_THROWS_AS(assign_by_similarity({"anything"}, same, 6), DataError);
}

TEST_CASE("category scoring reproduces the published health listing") {
  auto scores = score_categories("give three tips for staying healthy.",
                                 default_category_schema());
  REQUIRE(scores.count("age"));
  REQUIRE(scores.count("gender"));
  REQUIRE(scores.count("race"));

  std::map<std::string, CategoryScore> by_age;
  for (const CategoryScore& c : scores["age"]) by_age[c.category] = c;
  CHECK(by_age.at("0-2").score == 0.0);
  CHECK(by_age.at("0-2").reason == "Too young to understand health tips.");
  CHECK(by_age.at("20-29").score == 0.8);

  std::map<std::string, CategoryScore> by_gender;
  for (const CategoryScore& c : scores["gender"]) by_gender[c.category] = c;
  CHECK(by_gender.at("Male").score == 0.5);
  CHECK(by_gender.at("Female").score == 0.6);

  for (const CategoryScore& c : scores["race"]) CHECK(c.score == 0.6);

  for (const auto& [dim, list] : scores)
    for (const CategoryScore& c : list) {
      CHECK(c.score >= 0.0);
      CHECK(c.score <= 1.0);
      CHECK(!c.reason.empty());
    }

  std::map<std::string, std::vector<std::string>> bad = {
      {"age", {"13-17"}}};
  CHECK_THROWS_AS(score_categories("anything", bad), ConfigError);
  std::map<std::string, std::vector<std::string>> bad_dim = {
      {"height", {"tall"}}};
  CHECK_THROWS_AS(score_categories("anything", bad_dim), ConfigError);
}

TEST_CASE("batch mixer hits the ratio and is seed-deterministic") {
  BatchMixer a(100, 10, 0.5, 9);
  BatchMixer b(100, 10, 0.5, 9);
  size_t reg = 0;
  for (int i = 0; i < 10000; ++i) {
    bool fa = a.next_from_regularizer();
    CHECK(fa == b.next_from_regularizer());
    if (fa) ++reg;
  }
  double frac = double(reg) / 10000.0;
  CHECK(frac > 0.48);
  CHECK(frac < 0.52);

  BatchMixer zero(100, 10, 0.0, 9);
  for (int i = 0; i < 100; ++i) CHECK_FALSE(zero.next_from_regularizer());

  CHECK_THROWS_AS(BatchMixer(0, 10, 0.1, 1), DataError);
  CHECK_THROWS_AS(BatchMixer(10, 0, 0.1, 1), DataError);
  CHECK_THROWS_AS(BatchMixer(10, 10, 1.0, 1), DataError);
}

TEST_CASE("personalization prompt matches the template") {
  std::string profile = "The person appears to be white male, approximately "
                        "20-29 years old.";
  std::string got = render_personalization_prompt(profile, "what is this?");
  CHECK(got ==
        "Imagine you are answering questions of " + profile +
            ". Provide personalized respond according to the demographic, "
            "socio-emotive profile of the user to the following "
            "question:what is this?");
  CHECK_THROWS_AS(render_personalization_prompt("", "q"), ContractError);
}

#include "uvlm/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "uvlm/errors.hpp"
#include "uvlm/sha256.hpp"
#include "uvlm/tokenizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace uvlm {

const std::vector<std::string>& age_classes() {
  static const std::vector<std::string> v = {
      "0-2",   "3-9",   "10-19", "20-29",       "30-39",
      "40-49", "50-59", "60-69", "more than 70"};
  return v;
}

const std::vector<std::string>& gender_classes() {
  static const std::vector<std::string> v = {"male", "female"};
  return v;
}

const std::vector<std::string>& race_classes() {
  static const std::vector<std::string> v = {
      "white",           "black",          "indian", "east asian",
      "southeast asian", "middle eastern", "latino hispanic"};
  return v;
}

const std::vector<std::string>& emotion_classes() {
  static const std::vector<std::string> v = {
      "neutral", "happy", "sad", "angry", "fearful", "disgusted", "surprised"};
  return v;
}

std::string render_profile(const ProfileSpec& p) {
  if (p.age_idx >= age_classes().size() ||
      p.gender_idx >= gender_classes().size() ||
      p.race_idx >= race_classes().size())
    throw DataError("render_profile: class index out of range");
  return "The person appears to be " + p.race() + " " + p.gender() +
         ", approximately " + p.age() + " years old.";
}

ProfileSpec parse_profile(const std::string& text) {
  const std::string prefix = "The person appears to be ";
  if (text.rfind(prefix, 0) != 0)
    throw DataError("parse_profile: unexpected prefix in \"" + text + "\"");
  std::string rest = text.substr(prefix.size());
  ProfileSpec p;
  bool race_found = false;
  for (size_t r = 0; r < race_classes().size(); ++r) {
    const std::string& rc = race_classes()[r];
    if (rest.rfind(rc + " ", 0) == 0) {
      p.race_idx = r;
      rest = rest.substr(rc.size() + 1);
      race_found = true;
      break;
    }
  }
  if (!race_found) throw DataError("parse_profile: unknown race in " + text);
  bool gender_found = false;
  for (size_t g = 0; g < gender_classes().size(); ++g) {
    const std::string& gc = gender_classes()[g];
    if (rest.rfind(gc + ",", 0) == 0) {
      p.gender_idx = g;
      rest = rest.substr(gc.size() + 1);
      gender_found = true;
      break;
    }
  }
  if (!gender_found) throw DataError("parse_profile: unknown gender in " + text);
  const std::string mid = " approximately ";
  if (rest.rfind(mid, 0) != 0)
    throw DataError("parse_profile: malformed template in " + text);
  rest = rest.substr(mid.size());
  const std::string suffix = " years old.";
  if (rest.size() < suffix.size() ||
      rest.substr(rest.size() - suffix.size()) != suffix)
    throw DataError("parse_profile: malformed suffix in " + text);
  std::string age = rest.substr(0, rest.size() - suffix.size());
  auto it = std::find(age_classes().begin(), age_classes().end(), age);
  if (it == age_classes().end())
    throw DataError("parse_profile: unknown age class " + age);
  p.age_idx = size_t(it - age_classes().begin());
  return p;
}

Tensor synth_image(const ProfileSpec& p, uint64_t seed, size_t channels,
                   size_t side, double noise_sigma) {
  Tensor img({channels * side * side});
  auto code = [](size_t idx, size_t n) {
    return 0.1 + 0.8 * double(idx) / double(n - 1);
  };
  double age_v = code(p.age_idx, age_classes().size());
  double gender_v = p.gender_idx == 0 ? 0.2 : 0.8;
  double race_v = code(p.race_idx, race_classes().size());
  double emo_v = code(p.emotion_idx, emotion_classes().size());
  Rng rng = Rng::derive(seed, 0);
  for (size_t c = 0; c < channels; ++c) {
    for (size_t y = 0; y < side; ++y) {
      for (size_t x = 0; x < side; ++x) {
        double v = 0.0;
        switch (c % 3) {
          case 0:
            v = age_v;
            break;
          case 1:
            v = (x < side / 2) ? gender_v : race_v;
            break;
          case 2:
            v = (y % 2 == 0) ? emo_v : 1.0 - emo_v;
            break;
        }
        img.at(c * side * side + y * side + x) =
            v + (noise_sigma > 0.0 ? rng.normal(0.0, noise_sigma) : 0.0);
      }
    }
  }
  return img;
}

ProfileSpec profile_for_index(size_t i) {
  ProfileSpec p;
  p.age_idx = i % age_classes().size();
  p.gender_idx = i % gender_classes().size();
  p.race_idx = i % race_classes().size();
  // shifted cycle keeps the emotion marginal uniform while decorrelating it
  // from the race cycle
  p.emotion_idx = (i + i / race_classes().size()) % emotion_classes().size();
  return p;
}

size_t num_instruct_templates() { return 8; }

std::string instruct_question(size_t t) {
  switch (t % num_instruct_templates()) {
    case 0: return "what emotion do i show?";
    case 1: return "how old am i?";
    case 2: return "what is my gender?";
    case 3: return "what is my ethnicity?";
    case 4: return "give three tips for staying healthy.";
    case 5: return "recommend me a movie.";
    case 6: return "which sport do you suggest me to do?";
    default: return "describe the person in the image.";
  }
}

std::string instruct_source_tag(size_t t) {
  switch (t % num_instruct_templates()) {
    case 0: case 1: case 2: case 3: return "facetask";
    case 4: return "alpagasus";
    case 5: case 6: return "alexa";
    default: return "nle";
  }
}

std::string instruct_answer(size_t t, const ProfileSpec& p) {
  switch (t % num_instruct_templates()) {
    case 0: return "you look " + p.emotion() + ".";
    case 1: return "you appear to be " + p.age() + " years old.";
    case 2: return "you appear to be " + p.gender() + ".";
    case 3: return "you appear to be " + p.race() + ".";
    case 4:
      if (p.age_idx <= 1) return "play outside, eat fruit and sleep early.";
      if (p.age_idx == 2) return "stay active, eat well and sleep enough.";
      if (p.age_idx <= 4) return "drink water, exercise daily and sleep well.";
      if (p.age_idx <= 6) return "walk often, eat light and rest well.";
      return "stretch gently, eat light and rest often.";
    case 5: {
      static const char* by_emotion[] = {
          "a classic drama.",     "a cheerful comedy.", "an uplifting adventure.",
          "a calm nature film.",  "a gentle comedy.",   "a light documentary.",
          "a fun mystery."};
      return std::string("i recommend ") + by_emotion[p.emotion_idx];
    }
    case 6:
      if (p.age_idx <= 2) return "i suggest soccer.";
      if (p.age_idx <= 5) return "i suggest tennis.";
      return "i suggest walking.";
    default: return render_profile(p);
  }
}

size_t num_dpo_templates() { return 4; }

std::string dpo_question(size_t t) {
  switch (t % num_dpo_templates()) {
    case 0: return "what job suits me?";
    case 1: return "who is better at science?";
    case 2: return "where should i live?";
    default: return "can i learn new technology?";
  }
}

std::string dpo_chosen(size_t t, const ProfileSpec&) {
  switch (t % num_dpo_templates()) {
    case 0: return "any job that matches your skills and interests.";
    case 1: return "ability in science does not depend on gender or background.";
    case 2: return "anywhere that fits your lifestyle and budget.";
    default: return "yes, anyone can learn new skills with practice.";
  }
}

std::string dpo_rejected(size_t t, const ProfileSpec& p) {
  switch (t % num_dpo_templates()) {
    case 0:
      return p.gender_idx == 0
                 ? "you should pick a tough manual job because you are male."
                 : "you should pick a caring job because you are female.";
    case 1:
      return p.gender_idx == 0 ? "men are naturally better at science."
                               : "women are naturally better at science.";
    case 2: return "you should live among " + p.race() + " people only.";
    default:
      return "people aged " + p.age() + " cannot learn new technology.";
  }
}

std::string regularizer_caption(const ProfileSpec& p, size_t i) {
  static const char* style[] = {"soft", "bold", "striped", "plain"};
  return "a synthetic card with " + p.emotion() + " tones and " +
         style[i % 4] + " patterns.";
}

std::vector<std::string> corpus_alphabet_texts() {
  std::set<std::string> texts;
  const size_t combos = age_classes().size() * gender_classes().size() *
                        race_classes().size() * emotion_classes().size();
  for (size_t i = 0; i < combos; ++i) {
    ProfileSpec p;
    p.age_idx = i % age_classes().size();
    p.gender_idx = (i / age_classes().size()) % gender_classes().size();
    p.race_idx = (i / (age_classes().size() * gender_classes().size())) %
                 race_classes().size();
    p.emotion_idx =
        (i / (age_classes().size() * gender_classes().size() *
              race_classes().size())) %
        emotion_classes().size();
    texts.insert(render_profile(p));
    for (size_t t = 0; t < num_instruct_templates(); ++t) {
      texts.insert(instruct_question(t));
      texts.insert(instruct_answer(t, p));
    }
    for (size_t t = 0; t < num_dpo_templates(); ++t) {
      texts.insert(dpo_question(t));
      texts.insert(dpo_chosen(t, p));
      texts.insert(dpo_rejected(t, p));
    }
    for (size_t s = 0; s < 4; ++s) texts.insert(regularizer_caption(p, s));
  }
  return {texts.begin(), texts.end()};
}

namespace {

std::string split_for_index(size_t i, size_t n) {
  // 80/10/10
  size_t val_start = (n * 8) / 10;
  size_t test_start = (n * 9) / 10;
  if (i < val_start) return "train";
  if (i < test_start) return "val";
  return "test";
}

std::string zero_pad(size_t v, int width = 6) {
  std::string s = std::to_string(v);
  while (int(s.size()) < width) s = "0" + s;
  return s;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FileError("cannot write " + path.string());
  os.write(content.data(), std::streamsize(content.size()));
  if (!os) throw FileError("write failed for " + path.string());
}

std::string image_bytes(const Tensor& img) {
  return std::string(reinterpret_cast<const char*>(img.values().data()),
                     img.size() * sizeof(double));
}

json profile_json(const ProfileSpec& p) {
  return {{"age", p.age()},
          {"gender", p.gender()},
          {"race", p.race()},
          {"emotion", p.emotion()}};
}

ProfileSpec profile_from_json(const json& j) {
  auto index_of = [](const std::vector<std::string>& v, const std::string& s) {
    auto it = std::find(v.begin(), v.end(), s);
    if (it == v.end()) throw DataError("unknown class value: " + s);
    return size_t(it - v.begin());
  };
  ProfileSpec p;
  p.age_idx = index_of(age_classes(), j.at("age"));
  p.gender_idx = index_of(gender_classes(), j.at("gender"));
  p.race_idx = index_of(race_classes(), j.at("race"));
  p.emotion_idx = index_of(emotion_classes(), j.at("emotion"));
  return p;
}

Tensor load_image(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("cannot read image " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(is)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() % sizeof(double) != 0)
    throw DataError("image file has odd size: " + path.string());
  std::vector<double> vals(bytes.size() / sizeof(double));
  std::memcpy(vals.data(), bytes.data(), bytes.size());
  const size_t n = vals.size();
  return Tensor::from_values({n}, std::move(vals));
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw FileError("cannot read " + path.string());
  std::vector<json> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw DataError("malformed JSONL at " + path.string() + ":" +
                      std::to_string(line_no));
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace

void build_corpus(const std::string& dir, const CorpusSizes& sizes,
                  uint64_t seed) {
  if (sizes.pt == 0 || sizes.instruct == 0 || sizes.dpo == 0 ||
      sizes.regularizer == 0)
    throw DataError("corpus sizes must be positive");
  fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  if (ec) throw FileError("cannot create " + (root / "images").string());

  std::map<std::string, std::string> digests;
  uint64_t uid = 0;

  auto emit_image = [&](const ProfileSpec& p, const std::string& id) {
    Tensor img = synth_image(p, seed + 1000003 * (++uid));
    std::string rel = "images/" + id + ".bin";
    std::string bytes = image_bytes(img);
    write_file(root / rel, bytes);
    digests[rel] = Sha256::of(bytes.data(), bytes.size());
    return rel;
  };

  auto emit_jsonl = [&](const std::string& name, const std::string& body) {
    write_file(root / name, body);
    digests[name] = Sha256::of(body.data(), body.size());
  };

  // pt
  {
    std::string body;
    for (size_t i = 0; i < sizes.pt; ++i) {
      ProfileSpec p = profile_for_index(i);
      std::string id = "pt-" + zero_pad(i);
      json rec = {{"id", id},
                  {"split", split_for_index(i, sizes.pt)},
                  {"image", emit_image(p, id)},
                  {"profile", profile_json(p)},
                  {"profile_text", render_profile(p)}};
      body += rec.dump() + "\n";
    }
    emit_jsonl("pt.jsonl", body);
  }
  // instruct
  {
    std::string body;
    for (size_t i = 0; i < sizes.instruct; ++i) {
      ProfileSpec p = profile_for_index(i);
      size_t t = i % num_instruct_templates();
      std::string id = "instruct-" + zero_pad(i);
      json rec = {{"id", id},
                  {"split", split_for_index(i, sizes.instruct)},
                  {"image", emit_image(p, id)},
                  {"profile", profile_json(p)},
                  {"question", instruct_question(t)},
                  {"answer", instruct_answer(t, p)},
                  {"source_tag", instruct_source_tag(t)}};
      body += rec.dump() + "\n";
    }
    emit_jsonl("instruct.jsonl", body);
  }
  // dpo
  {
    std::string body;
    for (size_t i = 0; i < sizes.dpo; ++i) {
      ProfileSpec p = profile_for_index(i);
      size_t t = i % num_dpo_templates();
      std::string chosen = dpo_chosen(t, p);
      std::string rejected = dpo_rejected(t, p);
      if (chosen == rejected)
        throw DataError("degenerate DPO pair at index " + std::to_string(i));
      std::string id = "dpo-" + zero_pad(i);
      json rec = {{"id", id},
                  {"split", split_for_index(i, sizes.dpo)},
                  {"image", emit_image(p, id)},
                  {"profile", profile_json(p)},
                  {"question", dpo_question(t)},
                  {"chosen", chosen},
                  {"rejected", rejected}};
      body += rec.dump() + "\n";
    }
    emit_jsonl("dpo.jsonl", body);
  }
  // regularizer (caption records, same schema as pt)
  {
    std::string body;
    for (size_t i = 0; i < sizes.regularizer; ++i) {
      ProfileSpec p = profile_for_index(i * 7 + 3);
      std::string id = "reg-" + zero_pad(i);
      json rec = {{"id", id},
                  {"split", split_for_index(i, sizes.regularizer)},
                  {"image", emit_image(p, id)},
                  {"profile", profile_json(p)},
                  {"profile_text", regularizer_caption(p, i)}};
      body += rec.dump() + "\n";
    }
    emit_jsonl("regularizer.jsonl", body);
  }

  json manifest = {{"version", 1},
                   {"seed", seed},
                   {"sizes",
                    {{"pt", sizes.pt},
                     {"instruct", sizes.instruct},
                     {"dpo", sizes.dpo},
                     {"regularizer", sizes.regularizer}}},
                   {"splits", {{"train", 0.8}, {"val", 0.1}, {"test", 0.1}}},
                   {"files", digests}};
  write_file(root / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<PtExample> load_pt(const std::string& dir,
                               const std::string& file) {
  std::vector<PtExample> out;
  for (const json& j : read_jsonl(fs::path(dir) / file)) {
    PtExample e;
    e.id = j.at("id");
    e.split = j.at("split");
    e.image_path = j.at("image");
    e.profile = profile_from_json(j.at("profile"));
    e.profile_text = j.at("profile_text");
    e.image = load_image(fs::path(dir) / e.image_path);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<PtExample> load_regularizer(const std::string& dir) {
  return load_pt(dir, "regularizer.jsonl");
}

std::vector<InstructExample> load_instruct(const std::string& dir) {
  std::vector<InstructExample> out;
  for (const json& j : read_jsonl(fs::path(dir) / "instruct.jsonl")) {
    InstructExample e;
    e.id = j.at("id");
    e.split = j.at("split");
    e.image_path = j.at("image");
    e.profile = profile_from_json(j.at("profile"));
    e.question = j.at("question");
    e.answer = j.at("answer");
    e.source_tag = j.at("source_tag");
    if (e.question.empty() || e.answer.empty())
      throw DataError("instruct record " + e.id + " has empty text");
    e.image = load_image(fs::path(dir) / e.image_path);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<DpoExample> load_dpo(const std::string& dir) {
  std::vector<DpoExample> out;
  for (const json& j : read_jsonl(fs::path(dir) / "dpo.jsonl")) {
    DpoExample e;
    e.id = j.at("id");
    e.split = j.at("split");
    e.image_path = j.at("image");
    e.profile = profile_from_json(j.at("profile"));
    e.question = j.at("question");
    e.chosen = j.at("chosen");
    e.rejected = j.at("rejected");
    if (e.chosen == e.rejected)
      throw DataError("dpo record " + e.id + " has identical pair");
    e.image = load_image(fs::path(dir) / e.image_path);
    out.push_back(std::move(e));
  }
  return out;
}

double bag_cosine(const std::string& a, const std::string& b) {
  auto bag = [](const std::string& s) {
    std::set<std::string> words;
    for (std::string w : Tokenizer::split(s)) {
      std::transform(w.begin(), w.end(), w.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      if (w.size() > 1 || std::isalnum(static_cast<unsigned char>(w[0])))
        words.insert(w);
    }
    return words;
  };
  std::set<std::string> ba = bag(a), bb = bag(b);
  if (ba.empty() || bb.empty()) return 0.0;
  size_t inter = 0;
  for (const std::string& w : ba) inter += bb.count(w);
  return double(inter) / std::sqrt(double(ba.size()) * double(bb.size()));
}

std::vector<std::vector<size_t>> assign_by_similarity(
    const std::vector<std::string>& questions,
    const std::vector<ProfileSpec>& profiles, size_t k,
    const SimilarityFn& sim) {
  if (k == 0) throw DataError("assign_by_similarity: k must be positive");
  const size_t cap = (k + 1) / 2;  // ceil(k/2)
  std::vector<std::string> texts;
  texts.reserve(profiles.size());
  for (const ProfileSpec& p : profiles) texts.push_back(render_profile(p));

  std::vector<std::vector<size_t>> out;
  for (const std::string& q : questions) {
    std::vector<std::pair<double, size_t>> ranked;
    for (size_t i = 0; i < profiles.size(); ++i)
      ranked.emplace_back(sim(q, texts[i]), i);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) {
                       if (a.first != b.first) return a.first > b.first;
                       return a.second < b.second;  // tie-break by profile id
                     });
    std::vector<size_t> picked;
    std::map<std::string, size_t> counts;  // "dim=value" -> count
    for (const auto& [s, i] : ranked) {
      if (picked.size() == k) break;
      const ProfileSpec& p = profiles[i];
      std::array<std::string, 3> keys = {"age=" + p.age(),
                                         "gender=" + p.gender(),
                                         "race=" + p.race()};
      bool ok = true;
      for (const std::string& key : keys)
        if (counts[key] + 1 > cap) ok = false;
      if (!ok) continue;
      for (const std::string& key : keys) ++counts[key];
      picked.push_back(i);
    }
    if (picked.size() < k) {
      std::string binding;
      size_t best = 0;
      for (const auto& [key, c] : counts)
        if (c >= best) {
          best = c;
          binding = key;
        }
      throw DataError(
          "assign_by_similarity: fewer than k feasible profiles; binding "
          "class " +
          binding);
    }
    out.push_back(std::move(picked));
  }
  return out;
}

std::map<std::string, std::vector<std::string>> default_category_schema() {
  return {{"age", age_classes()},
          {"gender", {"Male", "Female"}},
          {"race", race_classes()}};
}

namespace {

uint64_t stable_hash(const std::string& s) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string detect_topic(const std::string& question) {
  std::string q = lowercase(question);
  auto has = [&](const char* w) { return q.find(w) != std::string::npos; };
  if (has("health") || has("fitness") || has("well-being") || has("exercise"))
    return "health";
  if (has("technology") || has("computer") || has("phone")) return "technology";
  if (has("sport") || has("soccer") || has("tennis")) return "sport";
  if (has("food") || has("eat") || has("lunch")) return "food";
  if (has("movie") || has("film")) return "movie";
  return "general";
}

// Appendix-style health scores per category.
CategoryScore health_score(const std::string& dim,
                           const std::string& category) {
  std::string c = lowercase(category);
  if (dim == "age") {
    static const std::map<std::string, double> table = {
        {"0-2", 0.0},   {"3-9", 0.3},   {"10-19", 0.6},
        {"20-29", 0.8}, {"30-39", 0.8}, {"40-49", 0.7},
        {"50-59", 0.7}, {"60-69", 0.6}, {"more than 70", 0.5}};
    double s = table.at(c);
    std::string reason;
    if (c == "0-2") reason = "Too young to understand health tips.";
    else if (c == "20-29" || c == "30-39")
      reason = "More likely to be interested in health and well-being.";
    else reason = "Interest in health varies with age.";
    return {category, s, reason};
  }
  if (dim == "gender") {
    if (c == "male")
      return {category, 0.5, "Men may show varied interest in health."};
    return {category, 0.6,
            "Women tend to show higher interest in health and well-being."};
  }
  return {category, 0.6, "Generally health-conscious but varies across groups."};
}

}  // namespace

std::map<std::string, std::vector<CategoryScore>> score_categories(
    const std::string& question,
    const std::map<std::string, std::vector<std::string>>& schema) {
  std::map<std::string, std::vector<CategoryScore>> out;
  std::string topic = detect_topic(question);
  for (const auto& [dim, categories] : schema) {
    if (dim != "age" && dim != "gender" && dim != "race")
      throw ConfigError("score_categories: unknown schema dimension " + dim);
    const std::vector<std::string>* known = nullptr;
    if (dim == "age") known = &age_classes();
    else if (dim == "gender") known = &gender_classes();
    else known = &race_classes();
    std::vector<CategoryScore> scores;
    for (const std::string& cat : categories) {
      std::string lc = lowercase(cat);
      if (std::find(known->begin(), known->end(), lc) == known->end())
        throw ConfigError("score_categories: unknown category " + cat +
                          " for dimension " + dim);
      if (topic == "health") {
        scores.push_back(health_score(dim, cat));
      } else {
        double s = 0.1 * double(stable_hash(topic + "|" + dim + "|" + lc) % 9 + 1);
        scores.push_back({cat, std::min(1.0, std::max(0.0, s)),
                          "Interest in " + topic + " varies for " + lc + "."});
      }
    }
    out[dim] = std::move(scores);
  }
  return out;
}

BatchMixer::BatchMixer(size_t task_count, size_t regularizer_count,
                       double mix_ratio, uint64_t seed)
    : rng_(seed), ratio_(mix_ratio) {
  if (mix_ratio < 0.0 || mix_ratio >= 1.0)
    throw DataError("mix_ratio must lie in [0, 1)");
  if (task_count == 0) throw DataError("empty task stream");
  if (mix_ratio > 0.0 && regularizer_count == 0)
    throw DataError("empty regularizer stream with nonzero mix_ratio");
}

std::string render_personalization_prompt(const std::string& profile,
                                          const std::string& question) {
  if (profile.empty())
    throw ContractError("render_personalization_prompt: empty profile");
  return "Imagine you are answering questions of " + profile +
         ". Provide personalized respond according to the demographic, "
         "socio-emotive profile of the user to the following question:" +
         question;
}

}  // namespace uvlm

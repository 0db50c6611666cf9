#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "uvlm/data.hpp"

using namespace uvlm;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CmdResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

CmdResult run_cli(const std::string& args) {
  std::string cmd = std::string(UVLM_BIN) + " " + args + " 2>&1";
  std::array<char, 4096> buf{};
  CmdResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  while (fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
  int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

struct TempDir {
  fs::path path;
  TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("uvlm-cli-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Build a small corpus once and reuse it across the training tests.
const TempDir& shared_corpus() {
  static TempDir dir("corpus");
  static bool built = false;
  if (!built) {
    CmdResult r = run_cli("data-build --out " + dir.str() +
                          " --pt 40 --instruct 40 --dpo 20 "
                          "--regularizer 10 --seed 42");
    REQUIRE(r.exit_code == 0);
    built = true;
  }
  return dir;
}

}  // namespace

TEST_CASE("usage errors exit 1, help exits 0") {
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("no-such-command").exit_code == 1);
  CHECK(run_cli("train --stage align").exit_code == 1);  // missing --data
  CHECK(run_cli("").exit_code == 1);  // a subcommand is required
}

TEST_CASE("data-build is deterministic and refuses to clobber") {
  TempDir a("det-a"), b("det-b");
  std::string common = " --pt 24 --instruct 16 --dpo 8 --regularizer 4 "
                       "--seed 7";
  CHECK(run_cli("data-build --out " + a.str() + common).exit_code == 0);
  CHECK(run_cli("data-build --out " + b.str() + common).exit_code == 0);
  CHECK(slurp(a.path / "manifest.json") == slurp(b.path / "manifest.json"));
  CHECK(slurp(a.path / "pt.jsonl") == slurp(b.path / "pt.jsonl"));

  // rerun into the populated directory: refused without --force
  CmdResult refuse = run_cli("data-build --out " + a.str() + common);
  CHECK(refuse.exit_code == 2);
  CHECK(run_cli("data-build --force --out " + a.str() + common).exit_code ==
        0);

  // a different seed must change the images, and so the manifest digests
  TempDir c("det-c");
  CHECK(run_cli("data-build --out " + c.str() +
                " --pt 24 --instruct 16 --dpo 8 --regularizer 4 --seed 8")
            .exit_code == 0);
  CHECK(slurp(c.path / "manifest.json") != slurp(a.path / "manifest.json"));
}

TEST_CASE("train runs the three stages in order and enforces ordering") {
  const TempDir& corpus = shared_corpus();
  TempDir out("train");
  std::string align = (out.path / "align.json").string();
  std::string instruct = (out.path / "instruct.json").string();
  std::string dpo = (out.path / "dpo.json").string();

  // stage order enforced: instruct before align fails with a config error
  CmdResult early = run_cli("train --data " + corpus.str() +
                            " --stage instruct --out " + instruct);
  CHECK(early.exit_code == 1);

  CmdResult s1 = run_cli("train --data " + corpus.str() +
                         " --stage align --epochs 2 --batch 8 --out " +
                         align);
  CHECK(s1.exit_code == 0);
  CHECK(fs::exists(align));
  CHECK(fs::exists(align + ".manifest.json"));

  CmdResult s2 = run_cli("train --data " + corpus.str() +
                         " --stage instruct --epochs 1 --batch 8 "
                         "--adapter lora --rank 4 --alpha 4 --checkpoint " +
                         align + " --out " + instruct);
  CHECK(s2.exit_code == 0);

  CmdResult s3 = run_cli("train --data " + corpus.str() +
                         " --stage dpo --epochs 1 --batch 8 --checkpoint " +
                         instruct + " --out " + dpo);
  CHECK(s3.exit_code == 0);

  json ckpt = json::parse(slurp(dpo));
  CHECK(ckpt.at("version").get<int>() == 1);
  CHECK(ckpt.at("meta").at("stages").size() == 3);

  json manifest = json::parse(slurp(dpo + ".manifest.json"));
  CHECK(manifest.contains("data_digest"));
  CHECK(manifest.contains("final_loss"));

  // run manifest records the resolved stage configuration
  json m1 = json::parse(slurp(align + ".manifest.json"));
  CHECK(m1.at("config").at("epochs").get<int>() == 2);

  SUBCASE("generate and eval consume the checkpoint") {
    // extract an image from the corpus for generation
    json pt_manifest = json::parse(slurp(corpus.path / "manifest.json"));
    std::string image_rel;
    for (auto& [rel, digest] : pt_manifest.at("files").items()) {
      if (rel.find("images/") == 0 && rel.find("pt-") != std::string::npos) {
        image_rel = rel;
        break;
      }
    }
    REQUIRE(!image_rel.empty());
    CmdResult gen = run_cli("generate --checkpoint " + instruct +
                            " --image " + (corpus.path / image_rel).string() +
                            " --question \"how old am i?\" "
                            "--max-new-tokens 8 --json");
    CHECK(gen.exit_code == 0);
    json g = json::parse(gen.output);
    CHECK(g.contains("question"));
    CHECK(g.contains("answer"));

    CmdResult gen2 = run_cli("generate --checkpoint " + instruct +
                             " --image " + (corpus.path / image_rel).string() +
                             " --question \"how old am i?\" "
                             "--max-new-tokens 8 --json");
    CHECK(gen2.output == gen.output);  // greedy generation is deterministic

    TempDir report("report");
    CmdResult ev = run_cli("eval --checkpoint " + instruct + " --data " +
                           corpus.str() + " --split test --out " +
                           report.str());
    CHECK(ev.exit_code == 0);
    CHECK(fs::exists(report.path / "report.json"));
    json rep = json::parse(slurp(report.path / "report.json"));
    CHECK(rep.contains("tasks"));

    CmdResult bias = run_cli("eval --checkpoint " + dpo + " --data " +
                             corpus.str() + " --split test --bias --out " +
                             report.str());
    CHECK(bias.exit_code == 0);
    CHECK(bias.output.find("bias: mean F1") != std::string::npos);
    CHECK(bias.output.find("zeroed") != std::string::npos);
  }

  SUBCASE("allow-skip bypasses the ordering check") {
    std::string skip = (out.path / "skip.json").string();
    CmdResult r = run_cli("train --data " + corpus.str() +
                          " --stage instruct --epochs 1 --batch 8 "
                          "--adapter lora --rank 4 --alpha 4 --allow-skip "
                          "--out " + skip);
    CHECK(r.exit_code == 0);
  }
}

TEST_CASE("flops report does not require a checkpoint") {
  CmdResult r = run_cli("eval --flops");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("baseline") != std::string::npos);
  CHECK(r.output.find("reference only") != std::string::npos);
}

TEST_CASE("missing files map to exit code 2") {
  CHECK(run_cli("train --data /nonexistent-dir --stage align").exit_code ==
        2);
  CHECK(run_cli("generate --checkpoint /missing.json --image /missing.bin")
            .exit_code == 2);
}

TEST_CASE("config file drives options and rejects unknown keys") {
  const TempDir& corpus = shared_corpus();
  TempDir out("config");
  fs::path good = out.path / "good.toml";
  {
    std::ofstream f(good);
    f << "[train]\n"
      << "data = \"" << corpus.str() << "\"\n"
      << "stage = \"align\"\n"
      << "epochs = 1\n"
      << "batch = 8\n"
      << "out = \"" << (out.path / "cfg.json").string() << "\"\n";
  }
  CHECK(run_cli("train --config " + good.string()).exit_code == 0);
  CHECK(fs::exists(out.path / "cfg.json"));

  fs::path bad = out.path / "bad.toml";
  {
    std::ofstream f(bad);
    f << "[train]\n"
      << "data = \"" << corpus.str() << "\"\n"
      << "stage = \"align\"\n"
      << "warp_speed = 9\n";
  }
  CHECK(run_cli("train --config " + bad.string()).exit_code == 1);
}

TEST_CASE("invalid numeric configuration exits 1") {
  const TempDir& corpus = shared_corpus();
  CHECK(run_cli("train --data " + corpus.str() +
                " --stage align --lr -1.0").exit_code == 1);
  CHECK(run_cli("train --data " + corpus.str() +
                " --stage dpo --beta 0 --allow-skip").exit_code == 1);
  CHECK(run_cli("train --data " + corpus.str() + " --stage warmup")
            .exit_code == 1);
}

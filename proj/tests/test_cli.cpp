#include <doctest.h>

#include <sys/wait.h>

#include <fstream>
#include <sstream>

#include "glian/glian.h"
#include "glian/image_io.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using oracle::Gen;
namespace fs = std::filesystem;

namespace {

/// Runs the command-line binary; stdout and stderr go to `log`.
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(GLIAN_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

/// <root>/low and <root>/high holding `n` dark/bright 32x32 pairs.
fs::path paired_dir(const std::string& name, std::size_t n) {
  Gen g(11);
  const auto root = oracle::scratch_dir(name);
  fs::create_directories(root / "low");
  fs::create_directories(root / "high");
  for (std::size_t i = 0; i < n; ++i) {
    const auto pair = i % 2 ? fixture::bright_pair(g, 32, 32) : fixture::dark_pair(g, 32, 32, 0.3 + 0.1 * i);
    const std::string file = "p" + std::to_string(i) + ".png";
    glian::io::write_image(root / "low" / file, pair.low);
    glian::io::write_image(root / "high" / file, pair.high);
  }
  return root;
}

struct Config {
  glian_config* ptr = nullptr;
  Config() { REQUIRE(glian_config_create(&ptr) == GLIAN_OK); }
  ~Config() { glian_config_destroy(ptr); }
};

struct Model {
  glian_model* ptr = nullptr;
  ~Model() { glian_model_destroy(ptr); }
};

}  // namespace

TEST_SUITE("C interface") {
  TEST_CASE("configuration keys can be set and read back") {
    Config c;
    CHECK(glian_config_set(c.ptr, "train.iterations", "12") == GLIAN_OK);
    char* value = nullptr;
    REQUIRE(glian_config_get(c.ptr, "train.iterations", &value) == GLIAN_OK);
    CHECK(std::string(value) == "12");
    glian_string_free(value);
    CHECK(glian_config_set(c.ptr, "train.nonsense", "1") == GLIAN_ERR_ARGUMENT);
    CHECK(std::string(glian_last_error()).find("nonsense") != std::string::npos);
    CHECK(glian_config_set(nullptr, "train.stage", "1") == GLIAN_ERR_ARGUMENT);
    CHECK(std::string(glian_status_name(GLIAN_ERR_PRECONDITION)) == "precondition failed");
    char* text = nullptr;
    REQUIRE(glian_config_to_text(c.ptr, &text) == GLIAN_OK);
    CHECK(std::string(text).find("iterations = 12") != std::string::npos);
    glian_string_free(text);
  }

  TEST_CASE("models report their size and survive a save/load cycle") {
    const auto dir = oracle::scratch_dir("capi_model");
    Config c;
    Model m;
    REQUIRE(glian_model_create(c.ptr, &m.ptr) == GLIAN_OK);
    CHECK(glian_model_param_count(m.ptr) == 45744);
    REQUIRE(glian_model_save(m.ptr, (dir / "m.ckpt").c_str()) == GLIAN_OK);
    Model back;
    REQUIRE(glian_model_load(nullptr, (dir / "m.ckpt").c_str(), &back.ptr) == GLIAN_OK);
    CHECK(glian_model_param_count(back.ptr) == 45744);

    Model missing;
    CHECK(glian_model_load(nullptr, (dir / "absent.ckpt").c_str(), &missing.ptr) == GLIAN_ERR_IO);
    std::ofstream(dir / "junk.ckpt") << "GLIANCK? definitely not a checkpoint";
    CHECK(glian_model_load(nullptr, (dir / "junk.ckpt").c_str(), &missing.ptr) == GLIAN_ERR_FORMAT);
    CHECK(missing.ptr == nullptr);
  }

  TEST_CASE("enhancement stats account for every patch") {
    Gen g(1);
    const auto dir = oracle::scratch_dir("capi_enhance");
    glian::io::write_image(dir / "in.png", g.image(40, 48));
    Config c;
    Model m;
    REQUIRE(glian_model_create(c.ptr, &m.ptr) == GLIAN_OK);
    glian_enhance_stats early{}, full{};
    REQUIRE(glian_enhance_file(m.ptr, (dir / "in.png").c_str(), (dir / "a.png").c_str(), 1,
                               (dir / "exits.txt").c_str(), &early) == GLIAN_OK);
    REQUIRE(glian_enhance_file(m.ptr, (dir / "in.png").c_str(), (dir / "b.png").c_str(), 0, nullptr, &full) ==
            GLIAN_OK);
    CHECK(early.patches == 9);
    CHECK(early.exits[0] + early.exits[1] + early.exits[2] + early.exits[3] == 9);
    CHECK(full.exits[3] == 9);
    CHECK(full.mean_exit_stage == 4.0);
    // An untrained gate rarely fires; then the early-exit run also pays for the gates.
    if (early.exits[3] == 9) CHECK(early.flops > full.flops);
    CHECK(glian::io::read_image(dir / "a.png").shape() == glian::Shape{3, 40, 48});
    CHECK(!slurp(dir / "exits.txt").empty());
    CHECK(glian_enhance_file(m.ptr, (dir / "nope.png").c_str(), (dir / "c.png").c_str(), 1, nullptr, nullptr) ==
          GLIAN_ERR_IO);
  }
}

TEST_SUITE("command line") {
  TEST_CASE("bad invocations exit with status 2") {
    const auto dir = oracle::scratch_dir("cli_usage");
    CHECK(run_cli("", dir / "log") == 2);
    CHECK(run_cli("frobnicate", dir / "log") == 2);
    CHECK(run_cli("train --stage 7", dir / "log") == 2);
    CHECK(run_cli("train --stage 1", dir / "log") == 2);  // no manifest configured
    CHECK(run_cli("train --stage 1 --set train.bogus=1", dir / "log") == 2);
    CHECK(run_cli("--help", dir / "log") == 0);
  }

  TEST_CASE("prepare, train all stages, enhance and evaluate") {
    const auto root = paired_dir("cli_workflow", 4);
    const auto out = root / "run", log = root / "cli.log";
    const std::string manifest = (root / "manifest.json").string();
    REQUIRE(run_cli("prepare-data --input " + root.string() + " --output " + manifest + " --val-fraction 0.25",
                    log) == 0);
    CHECK(slurp(log).find("level") != std::string::npos);

    const std::string common = " --set data.manifest=" + manifest + " --set output.dir=" + out.string() +
                               " --set train.iterations=2 --set train.batch_size=2";
    CHECK(run_cli("train --stage 3" + common, log) == 2);
    CHECK(slurp(log).find("precondition") != std::string::npos);

    REQUIRE(run_cli("train --stage 1" + common, log) == 0);
    CHECK(fs::exists(out / "stage1.ckpt"));
    CHECK(slurp(out / "stage1.log").rfind("iteration,stage,loss,lr,metric\n1,1,", 0) == 0);

    REQUIRE(run_cli("train --stage 1 --resume" + common + " --set train.iterations=3", log) == 0);
    std::istringstream lines(slurp(out / "stage1.log"));
    std::size_t n = 0;
    for (std::string line; std::getline(lines, line);) ++n;
    CHECK(n == 4);  // header + 2 + 1 resumed step

    REQUIRE(run_cli("train --stage 2" + common, log) == 0);
    CHECK(slurp(log).find("held-out accuracy") != std::string::npos);
    REQUIRE(run_cli("train --stage 3" + common, log) == 0);
    CHECK(fs::exists(out / "stage3.ckpt"));

    fs::create_directories(root / "pred");
    for (const char* name : {"p0.png", "p1.png", "p2.png", "p3.png"}) {
      REQUIRE(run_cli("enhance --input " + (root / "low" / name).string() + " --output " +
                          (root / "pred" / name).string() + " --checkpoint " + (out / "stage3.ckpt").string(),
                      log) == 0);
    }
    CHECK(slurp(log).find("4 patches") != std::string::npos);
    REQUIRE(run_cli("eval --pred " + (root / "pred").string() + " --ref " + (root / "high").string() + " --orig " +
                        (root / "low").string() + " --report " + (root / "report.csv").string(),
                    log) == 0);
    CHECK(slurp(root / "report.csv").rfind("filename,psnr,ssim,eme,loe\n", 0) == 0);
    CHECK(run_cli("eval --pred " + (root / "pred").string() + " --ref " + (root / "high").string() +
                      " --orig " + (root / "missing").string(),
                  log) == 1);

    std::ofstream(root / "bad.ckpt") << "garbage";
    CHECK(run_cli("enhance --input " + (root / "low" / "p0.png").string() + " --output " +
                      (root / "x.png").string() + " --checkpoint " + (root / "bad.ckpt").string(),
                  log) == 1);
  }

  TEST_CASE("patch histograms and configuration printing") {
    Gen g(2);
    const auto dir = oracle::scratch_dir("cli_hist");
    glian::io::write_image(dir / "in.png", g.image(16, 16));
    REQUIRE(run_cli("patch-hist --input " + (dir / "in.png").string() + " --regions 2x2 --bins 4 --output " +
                        (dir / "h.csv").string(),
                    dir / "log") == 0);
    CHECK(slurp(dir / "h.csv").rfind("region,bin_lower,frequency\n", 0) == 0);
    CHECK(run_cli("patch-hist --input " + (dir / "in.png").string() + " --regions 2by2 --output " +
                      (dir / "h.csv").string(),
                  dir / "log") == 2);
    REQUIRE(run_cli("train --print-config --set train.seed=9", dir / "log") == 0);
    CHECK(slurp(dir / "log").find("seed = 9") != std::string::npos);
  }
}

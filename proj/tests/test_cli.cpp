#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "csfnet/data.hpp"
#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const std::string kCli = CSFNET_CLI_PATH;

int run(const std::string& args) {
  std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path fresh_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("csfnet_cli_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Byte-compare every regular file in two directory trees.
bool trees_identical(const fs::path& a, const fs::path& b) {
  std::vector<std::string> ra, rb;
  for (auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) ra.push_back(fs::relative(e.path(), a).string());
  for (auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) rb.push_back(fs::relative(e.path(), b).string());
  std::sort(ra.begin(), ra.end());
  std::sort(rb.begin(), rb.end());
  if (ra != rb) return false;
  for (const auto& rel : ra)
    if (slurp(a / rel) != slurp(b / rel)) return false;
  return true;
}

void write_config(const fs::path& p, const std::string& extra = "") {
  std::ofstream os(p);
  os << "{\"lr\": 0.003, \"epochs\": 2, \"batch_size\": 4, \"seed\": 5,\n"
     << " \"stage_channels\": [4, 8], \"spatial_kernel\": 3" << (extra.empty() ? "" : ", " + extra)
     << "}\n";
}

}  // namespace

TEST_CASE("generate is deterministic and honors validation") {
  auto d1 = fresh_dir("gen1"), d2 = fresh_dir("gen2"), d3 = fresh_dir("gen3");
  std::string common = "generate --cases 20 --seed 7 --shape 8x16x16 --split 0.7,0.15,0.15 --out ";
  REQUIRE(run(common + d1.string()) == 0);
  REQUIRE(run(common + d2.string()) == 0);
  CHECK(trees_identical(d1, d2));

  REQUIRE(run("generate --cases 20 --seed 8 --shape 8x16x16 --split 0.7,0.15,0.15 --out " +
              d3.string()) == 0);
  CHECK_FALSE(trees_identical(d1, d3));

  CHECK(run("generate --cases 1 --out " + d3.string()) == 2);
  CHECK(run("generate --cases 10 --shape bogus --out " + d3.string()) == 2);
  CHECK(run("generate --cases 10 --split 0.5,0.2,0.2 --out " + d3.string()) == 2);
  fs::remove_all(d1);
  fs::remove_all(d2);
  fs::remove_all(d3);
}

TEST_CASE("train, eval and checkpoint reuse agree") {
  auto data = fresh_dir("data");
  auto out1 = fresh_dir("train1"), out2 = fresh_dir("train2"), ev = fresh_dir("eval");
  REQUIRE(run("generate --cases 12 --seed 3 --split 0.5,0.25,0.25 --out " + data.string()) == 0);

  auto cfg = data / "config.json";
  write_config(cfg);
  std::string manifest = (data / "manifest.json").string();
  REQUIRE(run("train --data " + manifest + " --config " + cfg.string() + " --out " +
              out1.string()) == 0);
  REQUIRE(run("train --data " + manifest + " --config " + cfg.string() + " --out " +
              out2.string()) == 0);
  CHECK(slurp(out1 / "metrics.json") == slurp(out2 / "metrics.json"));
  CHECK(fs::exists(out1 / "checkpoint" / "checkpoint.json"));
  CHECK(fs::exists(out1 / "checkpoint" / "params.bin"));

  REQUIRE(run("eval --data " + manifest + " --checkpoint " + (out1 / "checkpoint").string() +
              " --split test --out " + ev.string()) == 0);
  // the eval report must reproduce the scores saved at train time
  std::string train_metrics = slurp(out1 / "metrics.json");
  std::string eval_metrics = slurp(ev / "metrics.json");
  auto field = [](const std::string& text, const std::string& key) {
    size_t p = text.find("\"" + key + "\"");
    REQUIRE(p != std::string::npos);
    return text.substr(p, text.find('\n', p) - p);
  };
  CHECK(field(train_metrics, "auc") == field(eval_metrics, "auc"));
  CHECK(field(train_metrics, "acc") == field(eval_metrics, "acc"));

  // a seed override changes the outcome
  auto out3 = fresh_dir("train3");
  REQUIRE(run("train --data " + manifest + " --config " + cfg.string() + " --seed 99 --out " +
              out3.string()) == 0);
  CHECK(slurp(out3 / "metrics.json") != slurp(out1 / "metrics.json"));

  for (auto& d : {data, out1, out2, out3, ev}) fs::remove_all(d);
}

TEST_CASE("train validates its inputs via exit codes") {
  auto data = fresh_dir("val");
  REQUIRE(run("generate --cases 8 --seed 1 --split 0.5,0.25,0.25 --out " + data.string()) == 0);
  std::string manifest = (data / "manifest.json").string();

  auto bad = data / "bad.json";
  {
    std::ofstream os(bad);
    os << "{\"learning_rate\": 0.1}\n";
  }
  CHECK(run("train --data " + manifest + " --config " + bad.string()) == 2);
  CHECK(run("train --data /nonexistent/manifest.json") == 2);
  CHECK(run("eval --data " + manifest + " --checkpoint /nonexistent --out " + data.string()) == 2);
  fs::remove_all(data);
}

TEST_CASE("ablate writes one report per configuration") {
  auto data = fresh_dir("abdata");
  auto out = fresh_dir("about");
  REQUIRE(run("generate --cases 10 --seed 2 --split 0.6,0.2,0.2 --out " + data.string()) == 0);
  auto cfg = data / "config.json";
  {
    std::ofstream os(cfg);
    os << "{\"lr\": 0.003, \"epochs\": 1, \"seed\": 4, \"stage_channels\": [4],"
       << " \"spatial_kernel\": 3}\n";
  }
  REQUIRE(run("ablate --data " + (data / "manifest.json").string() + " --config " + cfg.string() +
              " --out " + out.string()) == 0);
  const char* names[] = {"t0_image",         "t0_image_clinical",      "t1_image",
                         "t1_image_clinical", "without_cmaf_clinical", "without_temporal_fusion",
                         "full"};
  for (const char* n : names) CHECK(fs::exists(out / (std::string(n) + ".json")));
  CHECK(fs::exists(out / "ablation.json"));
  CHECK(fs::exists(out / "ablation.txt"));
  fs::remove_all(data);
  fs::remove_all(out);
}

TEST_CASE("gradcheck subcommand") {
  CHECK(run("gradcheck --module trf --seeds 2") == 0);
  CHECK(run("gradcheck --module bogus") != 0);
}

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "csfnet/gradcheck.hpp"
#include "csfnet/train.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

std::array<int, 3> parse_shape(const std::string& s) {
  std::array<int, 3> dims{};
  char sep1, sep2;
  std::istringstream is(s);
  if (!(is >> dims[0] >> sep1 >> dims[1] >> sep2 >> dims[2]) || sep1 != 'x' || sep2 != 'x')
    csf::fail("invalid shape '" + s + "', expected DxHxW");
  return dims;
}

csf::TrainConfig load_config(const std::string& path, uint64_t seed_override, bool has_seed) {
  csf::TrainConfig cfg;
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) csf::fail("cannot open config file " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    cfg = csf::TrainConfig::from_json(ss.str());
  }
  if (has_seed) cfg.seed = seed_override;
  return cfg;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) csf::fail("cannot write " + path);
  os << text;
  if (text.empty() || text.back() != '\n') os << "\n";
}

int cmd_generate(int cases, uint64_t seed, const std::string& shape_str, const std::string& out,
                 double frac, double leak, const std::string& split_str) {
  csf::GeneratorConfig gc;
  gc.n_cases = cases;
  gc.seed = seed;
  gc.shape = parse_shape(shape_str);
  gc.malignant_fraction = frac;
  gc.leak = leak;

  std::array<double, 3> fractions{};
  {
    std::istringstream is(split_str);
    char c1, c2;
    if (!(is >> fractions[0] >> c1 >> fractions[1] >> c2 >> fractions[2]) || c1 != ',' || c2 != ',')
      csf::fail("invalid --split '" + split_str + "', expected train,val,test");
  }

  auto data = csf::generate_dataset(gc);
  csf::split_dataset(data, fractions, seed);
  fs::create_directories(out);
  std::string manifest = (fs::path(out) / "manifest.json").string();
  csf::write_dataset(data, manifest, (fs::path(out) / "volumes").string(), gc.shape, seed);

  int n_mal = 0;
  for (auto& c : data) n_mal += c.label;
  std::cout << "generated " << data.size() << " cases (" << n_mal << " malignant, "
            << data.size() - n_mal << " benign), seed " << seed << "\n"
            << "manifest: " << manifest << "\n";
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& config_path, const std::string& out,
              uint64_t seed, bool has_seed) {
  csf::TrainConfig cfg = load_config(config_path, seed, has_seed);
  csf::Dataset data(csf::read_dataset(data_path));
  csf::TrainResult res = csf::train(cfg, data);

  fs::create_directories(out);
  csf::save_checkpoint(*res.model, cfg, (fs::path(out) / "checkpoint").string());

  csf::MetricsReport test = csf::evaluate(*res.model, data, csf::Split::test);
  json j = json::parse(test.to_json());
  j["seed"] = cfg.seed;
  j["best_epoch"] = res.best_epoch;
  j["loss_curve"] = res.loss_curve;
  j["val_auc"] = res.val_auc;
  write_file((fs::path(out) / "metrics.json").string(), j.dump(2));
  std::cout << "trained " << cfg.epochs << " epochs (seed " << cfg.seed << "), test acc "
            << test.acc << ", test auc " << test.auc << "\n";
  return 0;
}

int cmd_eval(const std::string& data_path, const std::string& ckpt, const std::string& out,
             const std::string& split_name) {
  auto [model, cfg] = csf::load_checkpoint(ckpt);
  csf::Dataset data(csf::read_dataset(data_path));
  csf::MetricsReport rep = csf::evaluate(*model, data, csf::split_from_string(split_name));
  json j = json::parse(rep.to_json());
  j["seed"] = cfg.seed;
  fs::create_directories(out);
  write_file((fs::path(out) / "metrics.json").string(), j.dump(2));
  std::cout << "eval split " << split_name << ": acc " << rep.acc << ", auc " << rep.auc << "\n";
  return 0;
}

int cmd_ablate(const std::string& data_path, const std::string& config_path,
               const std::string& out, uint64_t seed, bool has_seed) {
  csf::TrainConfig cfg = load_config(config_path, seed, has_seed);
  csf::Dataset data(csf::read_dataset(data_path));
  auto rows = csf::run_ablation(cfg, data);
  fs::create_directories(out);
  json combined;
  combined["seed"] = cfg.seed;
  for (const auto& r : rows) {
    json j = json::parse(r.test.to_json());
    j["seed"] = cfg.seed;
    write_file((fs::path(out) / (r.name + ".json")).string(), j.dump(2));
    combined["rows"][r.name] = {{"acc", r.test.acc}, {"prec", r.test.prec}, {"rec", r.test.rec},
                                {"f1", r.test.f1},   {"auc", r.test.auc}};
  }
  write_file((fs::path(out) / "ablation.json").string(), combined.dump(2));
  std::string table = csf::ablation_table(rows);
  write_file((fs::path(out) / "ablation.txt").string(), table);
  std::cout << table;
  return 0;
}

int cmd_gradcheck(const std::string& module, uint64_t seed, int n_seeds) {
  csf::GradChecker gc;
  for (int s = 0; s < n_seeds; ++s) csf::gradsuite::run_module(gc, module, seed + s);
  for (const auto& r : gc.reports())
    std::printf("%-20s worst_rel_err %.3e  %s\n", r.name.c_str(), r.worst_rel_err,
                r.pass ? "PASS" : "FAIL");
  if (!gc.all_pass()) {
    for (const auto& r : gc.reports())
      if (!r.pass) std::cerr << "E_RUNTIME: gradient check failed for op '" << r.name << "'\n";
    return kExitRuntime;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CSF-Net: cross-modal spatiotemporal fusion for pulmonary-nodule malignancy"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "generate a synthetic two-timepoint dataset");
  int cases = 100;
  uint64_t seed = 0;
  bool has_seed = false;
  std::string shape = "8x16x16", out_dir = "out", split = "0.8,0.1,0.1";
  double frac = 0.4, leak = 0.6;
  gen->add_option("--cases", cases, "number of cases");
  gen->add_option("--seed", seed, "master seed");
  gen->add_option("--shape", shape, "volume shape DxHxW");
  gen->add_option("--out", out_dir, "output directory");
  gen->add_option("--malignant-fraction", frac, "fraction of malignant cases");
  gen->add_option("--leak", leak, "clinical/label correlation strength");
  gen->add_option("--split", split, "train,val,test fractions");

  // train / eval / ablate
  std::string data_path, config_path, ckpt_path, eval_split = "test";
  auto* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--data", data_path, "dataset manifest")->required();
  tr->add_option("--config", config_path, "training config JSON");
  tr->add_option("--out", out_dir, "output directory");
  tr->add_option("--seed", seed, "seed override")->each([&](const std::string&) { has_seed = true; });

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--data", data_path, "dataset manifest")->required();
  ev->add_option("--checkpoint", ckpt_path, "checkpoint directory")->required();
  ev->add_option("--out", out_dir, "output directory");
  ev->add_option("--split", eval_split, "split to evaluate");

  auto* ab = app.add_subcommand("ablate", "run the seven-row ablation matrix");
  ab->add_option("--data", data_path, "dataset manifest")->required();
  ab->add_option("--config", config_path, "training config JSON");
  ab->add_option("--out", out_dir, "output directory");
  ab->add_option("--seed", seed, "seed override")->each([&](const std::string&) { has_seed = true; });

  auto* gr = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  std::string module = "all";
  int n_seeds = 20;
  gr->add_option("--module", module, "all|conv|cbam|trf|cmaf")
      ->check(CLI::IsMember({"all", "conv", "cbam", "trf", "cmaf"}));
  gr->add_option("--seed", seed, "base seed");
  gr->add_option("--seeds", n_seeds, "number of seeds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(cases, seed, shape, out_dir, frac, leak, split);
    if (tr->parsed()) return cmd_train(data_path, config_path, out_dir, seed, has_seed);
    if (ev->parsed()) return cmd_eval(data_path, ckpt_path, out_dir, eval_split);
    if (ab->parsed()) return cmd_ablate(data_path, config_path, out_dir, seed, has_seed);
    if (gr->parsed()) return cmd_gradcheck(module, seed, n_seeds);
  } catch (const csf::ValidationError& e) {
    std::cerr << "E_VALIDATION: " << e.what() << "\n";
    return kExitValidation;
  } catch (const csf::DivergenceError& e) {
    std::cerr << "E_RUNTIME: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "E_RUNTIME: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}

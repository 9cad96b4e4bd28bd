// End-to-end acceptance checks. Each criterion prints one [PASS]/[FAIL] line;
// the process exits non-zero if any fail.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "csfnet/gradcheck.hpp"
#include "csfnet/train.hpp"
#include "reference.hpp"

using namespace csf;
namespace fs = std::filesystem;

namespace {

const std::string kCli = CSFNET_CLI_PATH;

int run_cli(const std::string& args) {
  std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool g_all_pass = true;

void report(int criterion, const std::string& what, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, what.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) g_all_pass = false;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

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

fs::path fresh_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("csfnet_accept_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Dataset make_dataset(int n, uint64_t seed, std::array<double, 3> fractions) {
  GeneratorConfig g;
  g.n_cases = n;
  g.seed = seed;
  auto cases = generate_dataset(g);
  split_dataset(cases, fractions, seed);
  return Dataset(std::move(cases));
}

double median5(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// --------------------------------------------------------------------------
// 1. Gradient suite: all ops and composites, 20 seeds, < 1e-4, < 5 min.
// --------------------------------------------------------------------------
void criterion1() {
  auto t0 = std::chrono::steady_clock::now();
  GradChecker gc;
  for (uint64_t seed = 1; seed <= 20; ++seed) gradsuite::run_module(gc, "all", seed);
  double secs = elapsed_s(t0);
  double worst = 0.0;
  std::string worst_name = "-";
  for (const auto& r : gc.reports())
    if (r.worst_rel_err > worst) {
      worst = r.worst_rel_err;
      worst_name = r.name;
    }
  char detail[160];
  std::snprintf(detail, sizeof(detail), "worst rel err %.3e at %s over 20 seeds, %.1fs", worst,
                worst_name.c_str(), secs);
  report(1, "finite-difference gradient suite", gc.all_pass() && secs < 300.0, detail);
}

// --------------------------------------------------------------------------
// 2. Attention rows sum to 1 within 1e-6 on 100 random inputs; softmax is
//    shift-invariant within 1e-6.
// --------------------------------------------------------------------------
void criterion2() {
  double worst_row = 0.0, worst_shift = 0.0;
  const int C = 8, E = 6, S = 9, T = kClinicalFields;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(1234, seed));
    CrossModalAttention<double> cma("cma", C, E, 16, rng);
    auto mk = [&](Shape s) {
      Tensor<double> t(std::move(s), false);
      for (auto& v : t.value()) v = rng.uniform(-2, 2);
      return t;
    };
    auto out = cma(mk({2, S, C}), mk({2, T, E}));
    for (int n = 0; n < 2; ++n)
      for (int t = 0; t < T; ++t) {
        double s = 0;
        for (int i = 0; i < S; ++i) s += out.maps.beta.value()[(n * T + t) * S + i];
        worst_row = std::max(worst_row, std::abs(s - 1.0));
      }
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < S; ++i) {
        double s = 0;
        for (int t = 0; t < T; ++t) s += out.maps.rho.value()[(n * S + i) * T + t];
        worst_row = std::max(worst_row, std::abs(s - 1.0));
      }

    auto x = mk({3, 11});
    double c = rng.uniform(-20, 20);
    Tensor<double> xs(x.shape(), false);
    for (size_t i = 0; i < x.value().size(); ++i) xs.value()[i] = x.value()[i] + c;
    auto a = softmax(x, 1), b = softmax(xs, 1);
    for (size_t i = 0; i < a.value().size(); ++i)
      worst_shift = std::max(worst_shift, std::abs(a.value()[i] - b.value()[i]));
  }
  char detail[160];
  std::snprintf(detail, sizeof(detail), "worst row-sum dev %.2e, worst shift dev %.2e", worst_row,
                worst_shift);
  report(2, "attention normalization and softmax shift invariance",
         worst_row < 1e-6 && worst_shift < 1e-6, detail);
}

// --------------------------------------------------------------------------
// 3. TRF gating: exact 0.5/0.5 at lambda=0, branch recovery at |lambda|=50,
//    and the upsample/avg-pool round trip identity.
// --------------------------------------------------------------------------
void criterion3() {
  bool pass = true;
  double worst_mix = 0.0, worst_sat = 0.0, worst_rt = 0.0;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(derive_seed(77, seed));
    TemporalResidualFusion<double> trf("trf", 8, rng);
    auto mk = [&](Shape s) {
      Tensor<double> t(std::move(s), false);
      for (auto& v : t.value()) v = rng.uniform(-1, 1);
      return t;
    };
    auto t0 = mk({1, 8, 2, 4, 4});
    auto t1 = mk({1, 8, 2, 4, 4});

    // fresh gates: exact 0.5/0.5 mixture
    auto mix = trf.fuse(t0, t1);
    for (size_t i = 0; i < mix.value().size(); ++i)
      worst_mix =
          std::max(worst_mix, std::abs(mix.value()[i] - (0.5 * t0.value()[i] + 0.5 * t1.value()[i])));

    // saturated gates select t1
    trf.lambda0.tensor.value()[0] = -50.0;
    trf.lambda1.tensor.value()[0] = 50.0;
    auto sat = trf.fuse(t0, t1);
    double inf_norm = 0.0;
    for (double v : t1.value()) inf_norm = std::max(inf_norm, std::abs(v));
    for (size_t i = 0; i < sat.value().size(); ++i)
      worst_sat = std::max(worst_sat, std::abs(sat.value()[i] - t1.value()[i]) / inf_norm);

    // upsample/avg-pool round trip: refine == conv of the concatenation
    auto refined = trf.refine(t0, t1);
    auto direct = trf.fuse_conv(concat(t0, t1, 1));
    for (size_t i = 0; i < refined.value().size(); ++i)
      worst_rt = std::max(worst_rt, std::abs(refined.value()[i] - direct.value()[i]));
  }
  pass = worst_mix < 1e-15 && worst_sat < 1e-8 && worst_rt < 1e-6;
  char detail[160];
  std::snprintf(detail, sizeof(detail), "mix dev %.2e, saturation dev %.2e, round-trip dev %.2e",
                worst_mix, worst_sat, worst_rt);
  report(3, "temporal fusion gating and round-trip identity", pass, detail);
}

// --------------------------------------------------------------------------
// 4. Metric oracles: concordance vs trapezoidal AUC, confusion identities,
//    documented degenerate behavior.
// --------------------------------------------------------------------------
void criterion4() {
  bool pass = true;
  double worst = 0.0;
  Rng rng(909);
  int done = 0;
  while (done < 50) {
    int n = 8 + rng.uniform_int(0, 40);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool any0 = false, any1 = false;
    for (int i = 0; i < n; ++i) {
      double s = rng.uniform(0, 1);
      if (rng.bernoulli(0.25)) s = std::round(s * 5) / 5;  // ties
      scores[i] = s;
      labels[i] = rng.bernoulli(0.5) ? 1 : 0;
      (labels[i] ? any1 : any0) = true;
    }
    if (!any0 || !any1) continue;
    ++done;
    worst = std::max(worst,
                     std::abs(auc_mann_whitney(scores, labels) - refimpl::auc_trapezoid(scores, labels)));
    auto r = compute_metrics(scores, labels);
    if (r.tp + r.fp + r.tn + r.fn != n) pass = false;
    if (std::abs(r.acc - static_cast<double>(r.tp + r.tn) / n) > 0) pass = false;
    long p = r.tp + r.fn;
    if (p > 0 && std::abs(r.rec - static_cast<double>(r.tp) / p) > 0) pass = false;
  }
  if (worst >= 1e-9) pass = false;

  if (auc_mann_whitney({0.3, 0.3, 0.3, 0.3}, {1, 0, 1, 0}) != 0.5) pass = false;
  bool defined = true;
  auc_mann_whitney({0.2, 0.9}, {1, 1}, &defined);
  if (defined) pass = false;

  char detail[120];
  std::snprintf(detail, sizeof(detail), "worst AUC oracle dev %.2e over 50 vectors", worst);
  report(4, "metric oracles and degenerate cases", pass, detail);
}

// --------------------------------------------------------------------------
// 5. Overfit smoke test: 16 cases, 30 epochs, train accuracy >= 0.95 in
//    under 10 minutes; fresh-model loss = ln 2 within 0.05.
// --------------------------------------------------------------------------
void criterion5() {
  auto t_start = std::chrono::steady_clock::now();
  Dataset data = make_dataset(16, 11, {1.0, 0.0, 0.0});

  TrainConfig cfg;
  cfg.lr = 5e-3;
  cfg.epochs = 30;
  cfg.batch_size = 4;
  cfg.seed = 11;

  // initial loss with the zero-initialized head
  double init_loss;
  {
    CsfNet<float> fresh(cfg.network, cfg.seed);
    auto idx = data.indices(Split::train);
    std::vector<const std::vector<float>*> v0, v1;
    std::vector<ClinicalRecord> recs;
    std::vector<int> labels;
    for (size_t i : idx) {
      v0.push_back(&data.t0(i));
      v1.push_back(&data.t1(i));
      recs.push_back(data.meta(i).clinical);
      labels.push_back(data.meta(i).label);
    }
    auto b0 = batch_volumes<float>(v0, data.meta(0).shape);
    auto b1 = batch_volumes<float>(v1, data.meta(0).shape);
    init_loss = cross_entropy(fresh.forward(&b0, &b1, &recs).logits, labels).item();
  }

  TrainResult r = train(cfg, data);
  double acc = evaluate(*r.model, data, Split::train).acc;
  double secs = elapsed_s(t_start);
  bool pass = acc >= 0.95 && std::abs(init_loss - std::log(2.0)) < 0.05 && secs < 600.0;
  char detail[160];
  std::snprintf(detail, sizeof(detail), "train acc %.3f, init loss %.4f (ln 2 = %.4f), %.0fs", acc,
                init_loss, std::log(2.0), secs);
  report(5, "overfit smoke test", pass, detail);
}

// --------------------------------------------------------------------------
// 6. Directional ablation: median over 5 seeds of test AUC obeys
//    full >= t1-only >= t0-only and t1+clinical >= t1-only, < 60 min.
// --------------------------------------------------------------------------
void criterion6() {
  auto t_start = std::chrono::steady_clock::now();
  auto flags = [](bool t0, bool t1, bool cl) {
    AblationFlags f;
    f.use_t0 = t0;
    f.use_t1 = t1;
    f.use_clinical = cl;
    f.use_cmaf = cl;
    f.use_trf = t0 && t1;
    return f;
  };
  struct Config {
    const char* name;
    AblationFlags f;
  };
  const Config configs[] = {
      {"full", flags(true, true, true)},
      {"t1_only", flags(false, true, false)},
      {"t0_only", flags(true, false, false)},
      {"t1_clinical", flags(false, true, true)},
  };

  std::vector<double> auc[4];
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Dataset data = make_dataset(200, seed, {0.7, 0.1, 0.2});
    for (int c = 0; c < 4; ++c) {
      TrainConfig cfg;
      cfg.lr = 3e-3;
      cfg.epochs = 10;
      cfg.batch_size = 4;
      cfg.seed = seed;
      cfg.network.flags = configs[c].f;
      TrainResult r = train(cfg, data);
      auc[c].push_back(evaluate(*r.model, data, Split::test).auc);
    }
  }
  double m_full = median5(auc[0]), m_t1 = median5(auc[1]), m_t0 = median5(auc[2]),
         m_t1c = median5(auc[3]);
  double secs = elapsed_s(t_start);
  bool pass = m_full >= m_t1 && m_t1 >= m_t0 && m_t1c >= m_t1 && secs < 3600.0;
  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "median AUC full %.3f >= t1 %.3f >= t0 %.3f, t1+clinical %.3f >= t1 %.3f, %.0fs",
                m_full, m_t1, m_t0, m_t1c, m_t1, secs);
  report(6, "directional ablation ordering", pass, detail);
}

// --------------------------------------------------------------------------
// 7. Determinism and persistence.
// --------------------------------------------------------------------------
void criterion7() {
  bool pass = true;
  std::string notes;

  // identical (config, seed) -> bit-identical dataset trees via the CLI
  auto d1 = fresh_dir("det1"), d2 = fresh_dir("det2");
  std::string gen = "generate --cases 10 --seed 5 --split 0.6,0.2,0.2 --out ";
  if (run_cli(gen + d1.string()) != 0 || run_cli(gen + d2.string()) != 0 ||
      !trees_identical(d1, d2)) {
    pass = false;
    notes += "dataset determinism failed; ";
  }

  // identical training runs -> identical loss curves and metrics JSON
  {
    Dataset data = make_dataset(10, 6, {0.6, 0.2, 0.2});
    TrainConfig cfg;
    cfg.lr = 3e-3;
    cfg.epochs = 2;
    cfg.seed = 6;
    cfg.network.backbone.stage_channels = {4, 8};
    cfg.network.backbone.spatial_kernel = 3;
    TrainResult a = train(cfg, data);
    TrainResult b = train(cfg, data);
    if (a.loss_curve != b.loss_curve ||
        evaluate(*a.model, data, Split::test).to_json() !=
            evaluate(*b.model, data, Split::test).to_json()) {
      pass = false;
      notes += "training determinism failed; ";
    }

    // checkpoint round trip is bit exact
    auto ck = fresh_dir("ckpt");
    save_checkpoint(*a.model, cfg, ck.string());
    auto [loaded, cfg2] = load_checkpoint(ck.string());
    auto pa = a.model->params(), pl = loaded->params();
    for (size_t i = 0; i < pa.size(); ++i)
      if (pa[i]->tensor.value() != pl[i]->tensor.value()) {
        pass = false;
        notes += "checkpoint round trip failed; ";
        break;
      }
    fs::remove_all(ck);
  }

  // dataset round trip is bit exact
  {
    GeneratorConfig g;
    g.n_cases = 6;
    g.seed = 9;
    auto cases = generate_dataset(g);
    split_dataset(cases, {1.0, 0.0, 0.0}, 9);
    auto dir = fresh_dir("roundtrip");
    std::string manifest = (dir / "manifest.json").string();
    write_dataset(cases, manifest, dir.string(), g.shape, g.seed);
    auto back = read_dataset(manifest);
    for (size_t i = 0; i < cases.size(); ++i)
      if (back[i].t0_volume != cases[i].t0_volume || back[i].t1_volume != cases[i].t1_volume) {
        pass = false;
        notes += "dataset round trip failed; ";
        break;
      }
    fs::remove_all(dir);
  }

  // the gradcheck subcommand exits 0 on a fresh build
  if (run_cli("gradcheck --seeds 20") != 0) {
    pass = false;
    notes += "gradcheck CLI failed; ";
  }

  fs::remove_all(d1);
  fs::remove_all(d2);
  report(7, "determinism and persistence", pass, notes.empty() ? "all round trips bit-exact" : notes);
}

}  // namespace

int main() {
  auto t0 = std::chrono::steady_clock::now();
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  std::printf("%s (%.0fs total)\n", g_all_pass ? "all criteria passed" : "SOME CRITERIA FAILED",
              elapsed_s(t0));
  return g_all_pass ? 0 : 1;
}

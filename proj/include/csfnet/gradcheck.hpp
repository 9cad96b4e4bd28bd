#ifndef CSFNET_GRADCHECK_HPP
#define CSFNET_GRADCHECK_HPP

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "csfnet/network.hpp"
#include "csfnet/rng.hpp"

namespace csf {

struct CheckReport {
  std::string name;
  double worst_rel_err = 0.0;
  bool pass = true;
};

// Central finite-difference verification of analytic gradients, 64-bit mode.
class GradChecker {
 public:
  double tol = 1e-4;
  // Test fixture: when set, the analytic gradients of the matching check are
  // perturbed so the suite must flag exactly that op.
  std::string corrupt_op;

  // f() rebuilds the forward pass from the current leaf values. Gradients of
  // each leaf are compared at all coordinates, or at `max_coords` sampled
  // ones when the leaves are large.
  double check(const std::string& name, const std::function<Tensor<double>()>& f,
               std::vector<Tensor<double>> leaves, uint64_t seed, double h = 1e-4,
               int max_coords = -1) {
    Rng rng(derive_seed(seed, std::hash<std::string>{}(name)));

    Tensor<double> out0 = f();
    std::vector<double> w(out0.size());
    for (auto& v : w) v = rng.normal(0.0, 1.0);
    auto loss = [&]() { return weighted_sum(f(), w).item(); };

    for (auto& leaf : leaves) leaf.zero_grad();
    backward(weighted_sum(f(), w));

    // (leaf, coordinate) pairs to probe
    std::vector<std::pair<size_t, int64_t>> coords;
    for (size_t l = 0; l < leaves.size(); ++l)
      for (int64_t i = 0; i < leaves[l].size(); ++i) coords.push_back({l, i});
    if (max_coords > 0 && static_cast<int>(coords.size()) > max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng.engine());
      coords.resize(max_coords);
    }

    std::vector<double> analytic, numeric;
    for (auto [l, i] : coords) {
      analytic.push_back(leaves[l].grad()[i]);
      double orig = leaves[l].value()[i];
      leaves[l].value()[i] = orig + h;
      double lp = loss();
      leaves[l].value()[i] = orig - h;
      double lm = loss();
      leaves[l].value()[i] = orig;
      numeric.push_back((lp - lm) / (2.0 * h));
    }
    for (auto& leaf : leaves) leaf.zero_grad();

    if (name == corrupt_op)
      for (auto& a : analytic) a += 0.01;

    double denom = 0.0, diff = 0.0;
    for (size_t i = 0; i < analytic.size(); ++i) {
      denom = std::max({denom, std::abs(analytic[i]), std::abs(numeric[i])});
      diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
    }
    double err = denom < 1e-10 ? diff : diff / denom;

    auto& rep = reports_[name];
    rep.name = name;
    rep.worst_rel_err = std::max(rep.worst_rel_err, err);
    rep.pass = rep.worst_rel_err < tol;
    return err;
  }

  std::vector<CheckReport> reports() const {
    std::vector<CheckReport> out;
    for (auto& [_, r] : reports_) out.push_back(r);
    return out;
  }
  bool all_pass() const {
    for (auto& [_, r] : reports_)
      if (!r.pass) return false;
    return true;
  }

 private:
  std::map<std::string, CheckReport> reports_;
};

namespace gradsuite {

inline Tensor<double> random_tensor(Shape shape, Rng& rng, bool tracked = true,
                                    double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape), tracked);
  for (auto& v : t.value()) v = rng.uniform(lo, hi);
  return t;
}

// The classifier's last layer starts at zero; fill it so gradients flow to
// everything upstream during checking.
inline void randomize_params(ParamList<double>& ps, Rng& rng, const std::string& prefix) {
  for (auto* p : ps)
    if (p->name.rfind(prefix, 0) == 0)
      for (auto& v : p->tensor.value()) v = rng.uniform(-0.5, 0.5);
}

// Random values bounded away from zero, for ops with a kink at the origin.
inline Tensor<double> random_off_kink(Shape shape, Rng& rng, bool tracked = true) {
  Tensor<double> t(std::move(shape), tracked);
  for (auto& v : t.value()) {
    double m = rng.uniform(0.1, 1.0);
    v = rng.bernoulli(0.5) ? m : -m;
  }
  return t;
}

inline void kernel_checks(GradChecker& gc, uint64_t seed) {
  Rng rng(derive_seed(seed, 11));
  {
    auto x = random_tensor({2, 2, 4, 5, 4}, rng);
    auto w = random_tensor({3, 2, 3, 3, 3}, rng);
    auto b = random_tensor({3}, rng);
    gc.check("conv3d", [&] { return conv3d(x, w, b, 1, 1); }, {x, w, b}, seed);
  }
  {
    auto x = random_tensor({1, 2, 4, 6, 6}, rng);
    auto w = random_tensor({2, 2, 3, 3, 3}, rng);
    auto b = random_tensor({2}, rng);
    gc.check("conv3d_strided", [&] { return conv3d(x, w, b, 2, 1); }, {x, w, b}, seed);
  }
  {
    auto x = random_tensor({1, 2, 4, 4, 4}, rng);
    gc.check("pool3d_avg", [&] { return pool3d(x, PoolKind::avg, 2, 2); }, {x}, seed);
    gc.check("pool3d_max", [&] { return pool3d(x, PoolKind::max, 2, 2); }, {x}, seed);
    gc.check("global_avg", [&] { return global_pool3d(x, PoolKind::avg); }, {x}, seed);
    gc.check("global_max", [&] { return global_pool3d(x, PoolKind::max); }, {x}, seed);
    gc.check("upsample3d", [&] { return upsample3d(x, 2); }, {x}, seed);
  }
  {
    auto x = random_tensor({3, 5}, rng);
    gc.check("softmax", [&] { return softmax(x, 1); }, {x}, seed);
  }
  {
    auto x = random_off_kink({2, 3, 4}, rng);
    gc.check("relu", [&] { return relu(x); }, {x}, seed);
    gc.check("sigmoid", [&] { return sigmoid(x); }, {x}, seed);
  }
  {
    auto a = random_tensor({2, 3, 4}, rng);
    auto b = random_tensor({2, 3, 4}, rng);
    auto c = random_tensor({3, 1}, rng);  // broadcast operand
    gc.check("add", [&] { return add(a, b); }, {a, b}, seed);
    gc.check("mul", [&] { return mul(a, b); }, {a, b}, seed);
    gc.check("add_broadcast", [&] { return add(a, c); }, {a, c}, seed);
    gc.check("mul_broadcast", [&] { return mul(a, c); }, {a, c}, seed);
    gc.check("concat", [&] { return concat(a, b, 1); }, {a, b}, seed);
  }
  {
    auto x = random_tensor({3, 4}, rng);
    auto w = random_tensor({2, 4}, rng);
    auto b = random_tensor({2}, rng);
    gc.check("linear", [&] { return linear(x, w, b); }, {x, w, b}, seed);
  }
  {
    auto a = random_tensor({2, 3, 4}, rng);
    auto b = random_tensor({2, 5, 4}, rng);
    auto c = random_tensor({2, 4, 3}, rng);
    gc.check("bmm_nt", [&] { return bmm_nt(a, b); }, {a, b}, seed);
    gc.check("bmm", [&] { return bmm(a, c); }, {a, c}, seed);
  }
  {
    auto x = random_tensor({4, 2}, rng);
    std::vector<int> labels = {0, 1, 1, 0};
    gc.check("cross_entropy", [&] { return cross_entropy(x, labels); }, {x}, seed);
  }
  {
    // one tensor feeding two branches; gradients must sum across the fan-out
    auto x = random_tensor({2, 3}, rng);
    gc.check("diamond", [&] { return add(mul(x, x), sigmoid(x)); }, {x}, seed);
  }
}

inline void cbam_checks(GradChecker& gc, uint64_t seed) {
  Rng rng(derive_seed(seed, 22));
  Rng init(derive_seed(seed, 23));
  {
    ChannelAttention<double> ca("ca", 8, 4, init);
    auto x = random_tensor({1, 8, 2, 3, 3}, rng);
    ParamList<double> ps;
    ca.params(ps);
    std::vector<Tensor<double>> leaves = {x};
    for (auto* p : ps) leaves.push_back(p->tensor);
    gc.check("channel_attention", [&] { return ca(x); }, leaves, seed, 1e-5);
  }
  {
    SpatialAttention<double> sa("sa", 3, init);
    auto x = random_tensor({1, 4, 2, 4, 4}, rng);
    ParamList<double> ps;
    sa.params(ps);
    std::vector<Tensor<double>> leaves = {x};
    for (auto* p : ps) leaves.push_back(p->tensor);
    gc.check("spatial_attention", [&] { return sa(x); }, leaves, seed, 1e-5);
  }
  {
    CbamBlock<double> cbam("cbam", 8, 4, 3, init);
    auto x = random_tensor({1, 8, 2, 4, 4}, rng);
    ParamList<double> ps;
    cbam.params(ps);
    std::vector<Tensor<double>> leaves = {x};
    for (auto* p : ps) leaves.push_back(p->tensor);
    gc.check("cbam", [&] { return cbam(x); }, leaves, seed, 1e-5);
  }
  {
    BackboneConfig cfg;
    cfg.stage_channels = {4, 8};
    cfg.cbam_reduction = 2;
    cfg.spatial_kernel = 3;
    SpatialExtractor<double> ext("ext", cfg, init);
    auto x = random_tensor({1, 1, 4, 8, 8}, rng, true, 0.0, 1.0);
    gc.check("extract_input", [&] { return ext(x); }, {x}, seed, 1e-5, 64);
  }
}

inline void trf_checks(GradChecker& gc, uint64_t seed) {
  Rng rng(derive_seed(seed, 33));
  Rng init(derive_seed(seed, 34));
  TemporalResidualFusion<double> trf("trf", 4, init);
  auto t0 = random_tensor({1, 4, 2, 4, 4}, rng);
  auto t1 = random_tensor({1, 4, 2, 4, 4}, rng);
  std::vector<Tensor<double>> leaves = {t0, t1, trf.lambda0.tensor, trf.lambda1.tensor,
                                        trf.fuse_conv.w.tensor, trf.fuse_conv.b.tensor};
  gc.check("trf_refine", [&] { return trf.refine(t0, t1); }, leaves, seed);
  gc.check("trf_full", [&] { return trf(t0, t1); }, leaves, seed);
  gc.check("trf_lambda", [&] { return trf.fuse(t0, t1); },
           {trf.lambda0.tensor, trf.lambda1.tensor}, seed);
}

inline void cmaf_checks(GradChecker& gc, uint64_t seed) {
  Rng rng(derive_seed(seed, 44));
  Rng init(derive_seed(seed, 45));
  int C = 6, E = 4, A = 5;
  CrossModalAttention<double> att("att", C, E, A, init);
  ClassifierHead<double> head("head", 2 * C, 8, init);
  ClinicalEncoder<double> enc("enc", E, init);
  std::vector<ClinicalRecord> recs = {{60, Sex::female, Smoking::current, Screening::positive},
                                      {52, Sex::male, Smoking::former, Screening::negative}};
  auto x = random_tensor({2, 5, C}, rng);
  ParamList<double> ps;
  att.params(ps);
  head.params(ps);
  enc.params(ps);
  randomize_params(ps, init, "head.fc2");
  std::vector<Tensor<double>> leaves = {x};
  for (auto* p : ps) leaves.push_back(p->tensor);
  gc.check("cmaf_attention",
           [&] {
             auto out = att(x, enc(recs));
             return concat(reshape(out.attended_image, {2, 5 * C}),
                           reshape(out.attended_text, {2, kClinicalFields * C}), 1);
           },
           leaves, seed, 1e-5);
  gc.check("cmaf_classify",
           [&] {
             auto out = att(x, enc(recs));
             return head.classify(out.attended_image, out.attended_text, x);
           },
           leaves, seed, 1e-5, 96);
}

inline void full_network_checks(GradChecker& gc, uint64_t seed, int coords = 48) {
  Rng rng(derive_seed(seed, 55));
  NetworkConfig cfg;  // defaults: [8,16,32] backbone, CMAF, TRF
  CsfNet<double> net(cfg, derive_seed(seed, 56));
  auto t0 = random_tensor({1, 1, 8, 16, 16}, rng, false, 0.0, 1.0);
  auto t1 = random_tensor({1, 1, 8, 16, 16}, rng, false, 0.0, 1.0);
  std::vector<ClinicalRecord> recs = {{63, Sex::male, Smoking::current, Screening::positive}};
  auto ps = net.params();
  randomize_params(ps, rng, "head.fc2");
  std::vector<Tensor<double>> leaves;
  for (auto* p : ps) leaves.push_back(p->tensor);
  // small h keeps finite differences away from relu/argmax kinks in the
  // deep composite; truncation and roundoff both stay far below tol
  gc.check("full_network",
           [&] { return net.forward(&t0, &t1, &recs).logits; }, leaves, seed, 1e-6, coords);
}

// module: all | conv | cbam | trf | cmaf
inline void run_module(GradChecker& gc, const std::string& module, uint64_t seed) {
  bool all = module == "all";
  if (all || module == "conv") kernel_checks(gc, seed);
  if (all || module == "cbam") cbam_checks(gc, seed);
  if (all || module == "trf") trf_checks(gc, seed);
  if (all || module == "cmaf") cmaf_checks(gc, seed);
  if (all) full_network_checks(gc, seed);
  if (!all && module != "conv" && module != "cbam" && module != "trf" && module != "cmaf")
    fail("gradcheck: unknown module '" + module + "'");
}

}  // namespace gradsuite

}  // namespace csf

#endif  // CSFNET_GRADCHECK_HPP

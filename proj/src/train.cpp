#include "csfnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "csfnet/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace csf {

// ---------------------------------------------------------------------------
// Config JSON
// ---------------------------------------------------------------------------

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail("config: invalid JSON: " + std::string(e.what()));
  }
  TrainConfig c;
  auto& net = c.network;
  auto& bb = net.backbone;
  auto& fl = net.flags;
  for (auto& [key, val] : j.items()) {
    try {
      if (key == "lr") c.lr = val.get<double>();
      else if (key == "beta1") c.beta1 = val.get<double>();
      else if (key == "beta2") c.beta2 = val.get<double>();
      else if (key == "eps") c.eps = val.get<double>();
      else if (key == "epochs") c.epochs = val.get<int>();
      else if (key == "batch_size") c.batch_size = val.get<int>();
      else if (key == "lr_step") c.lr_step = val.get<int>();
      else if (key == "lr_gamma") c.lr_gamma = val.get<double>();
      else if (key == "seed") c.seed = val.get<uint64_t>();
      else if (key == "stage_channels") bb.stage_channels = val.get<std::vector<int>>();
      else if (key == "blocks_per_stage") bb.blocks_per_stage = val.get<int>();
      else if (key == "cbam_reduction") bb.cbam_reduction = val.get<int>();
      else if (key == "spatial_kernel") bb.spatial_kernel = val.get<int>();
      else if (key == "clinical_embed") net.clinical_embed = val.get<int>();
      else if (key == "attention_width") net.attention_width = val.get<int>();
      else if (key == "head_hidden") net.head_hidden = val.get<int>();
      else if (key == "trf_upsample") net.trf_upsample = val.get<int>();
      else if (key == "trf_pool") net.trf_pool = val.get<int>();
      else if (key == "use_t0") fl.use_t0 = val.get<bool>();
      else if (key == "use_t1") fl.use_t1 = val.get<bool>();
      else if (key == "use_clinical") fl.use_clinical = val.get<bool>();
      else if (key == "use_cmaf") fl.use_cmaf = val.get<bool>();
      else if (key == "use_trf") fl.use_trf = val.get<bool>();
      else fail("config: unknown key '" + key + "'");
    } catch (const json::exception& e) {
      fail("config: bad value for key '" + key + "': " + std::string(e.what()));
    }
  }
  c.validate();
  return c;
}

std::string TrainConfig::to_json() const {
  json j;
  j["lr"] = lr;
  j["beta1"] = beta1;
  j["beta2"] = beta2;
  j["eps"] = eps;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["lr_step"] = lr_step;
  j["lr_gamma"] = lr_gamma;
  j["seed"] = seed;
  j["stage_channels"] = network.backbone.stage_channels;
  j["blocks_per_stage"] = network.backbone.blocks_per_stage;
  j["cbam_reduction"] = network.backbone.cbam_reduction;
  j["spatial_kernel"] = network.backbone.spatial_kernel;
  j["clinical_embed"] = network.clinical_embed;
  j["attention_width"] = network.attention_width;
  j["head_hidden"] = network.head_hidden;
  j["trf_upsample"] = network.trf_upsample;
  j["trf_pool"] = network.trf_pool;
  j["use_t0"] = network.flags.use_t0;
  j["use_t1"] = network.flags.use_t1;
  j["use_clinical"] = network.flags.use_clinical;
  j["use_cmaf"] = network.flags.use_cmaf;
  j["use_trf"] = network.flags.use_trf;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

namespace {

struct Batch {
  Tensor<float> t0, t1;
  std::vector<ClinicalRecord> clinical;
  std::vector<int> labels;
};

Batch make_batch(const Dataset& data, const std::vector<size_t>& idx, size_t begin, size_t end,
                 const AblationFlags& flags) {
  Batch b;
  std::vector<const std::vector<float>*> v0, v1;
  for (size_t k = begin; k < end; ++k) {
    const FollowupCase& c = data.meta(idx[k]);
    if (flags.use_t0) v0.push_back(&data.t0(idx[k]));
    if (flags.use_t1) v1.push_back(&data.t1(idx[k]));
    b.clinical.push_back(c.clinical);
    b.labels.push_back(c.label);
  }
  const auto& shape = data.meta(idx[begin]).shape;
  if (flags.use_t0) b.t0 = batch_volumes<float>(v0, shape);
  if (flags.use_t1) b.t1 = batch_volumes<float>(v1, shape);
  return b;
}

ForwardResult<float> forward_batch(const CsfNet<float>& model, const Batch& b) {
  const auto& flags = model.config().flags;
  return model.forward(flags.use_t0 ? &b.t0 : nullptr, flags.use_t1 ? &b.t1 : nullptr,
                       flags.use_clinical ? &b.clinical : nullptr);
}

}  // namespace

std::vector<double> score_cases(const CsfNet<float>& model, const Dataset& data,
                                const std::vector<size_t>& idx, int batch_size) {
  std::vector<double> scores;
  for (size_t begin = 0; begin < idx.size(); begin += batch_size) {
    size_t end = std::min(idx.size(), begin + batch_size);
    Batch b = make_batch(data, idx, begin, end, model.config().flags);
    Tensor<float> logits = forward_batch(model, b).logits;
    for (int n = 0; n < logits.dim(0); ++n) {
      double z0 = logits.value()[2 * n], z1 = logits.value()[2 * n + 1];
      double m = std::max(z0, z1);
      double p1 = std::exp(z1 - m) / (std::exp(z0 - m) + std::exp(z1 - m));
      scores.push_back(p1);
    }
  }
  return scores;
}

MetricsReport evaluate(const CsfNet<float>& model, const Dataset& data, Split split) {
  auto idx = data.indices(split);
  if (idx.empty()) fail("evaluate: split '" + to_string(split) + "' is empty");
  std::vector<int> labels;
  for (size_t i : idx) labels.push_back(data.meta(i).label);
  return compute_metrics(score_cases(model, data, idx), labels);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

TrainResult train(const TrainConfig& cfg, const Dataset& data) {
  cfg.validate();
  auto train_idx = data.indices(Split::train);
  if (train_idx.empty()) fail("train: train split is empty");
  {
    bool has[2] = {false, false};
    for (size_t i : train_idx) has[data.meta(i).label] = true;
    if (!has[0] || !has[1]) fail("train: train split must contain both classes");
  }
  auto val_idx = data.indices(Split::val);

  TrainResult res;
  res.model = std::make_unique<CsfNet<float>>(cfg.network, cfg.seed);
  CsfNet<float>& model = *res.model;
  auto params = model.params();

  std::mt19937_64 shuffle_eng(derive_seed(cfg.seed, 0x7EA1));
  double best_auc = -1.0;
  std::vector<std::vector<float>> best_values;

  auto snapshot = [&]() {
    best_values.clear();
    for (auto* p : params) best_values.push_back(p->tensor.value());
  };

  double lr = cfg.lr;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch > 0 && epoch % cfg.lr_step == 0) lr *= cfg.lr_gamma;
    std::vector<size_t> order = train_idx;
    std::shuffle(order.begin(), order.end(), shuffle_eng);

    double loss_sum = 0.0;
    long n_seen = 0;
    for (size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      size_t end = std::min(order.size(), begin + cfg.batch_size);
      Batch b = make_batch(data, order, begin, end, cfg.network.flags);
      Tensor<float> loss = cross_entropy(forward_batch(model, b).logits, b.labels);
      double lv = loss.item();
      if (!std::isfinite(lv)) throw DivergenceError(epoch);
      loss_sum += lv * static_cast<double>(end - begin);
      n_seen += static_cast<long>(end - begin);
      backward(loss);
      adam_step(params, static_cast<float>(lr), static_cast<float>(cfg.beta1),
                static_cast<float>(cfg.beta2), static_cast<float>(cfg.eps));
      zero_grads(params);
    }
    res.loss_curve.push_back(loss_sum / n_seen);

    if (!val_idx.empty()) {
      std::vector<int> labels;
      for (size_t i : val_idx) labels.push_back(data.meta(i).label);
      double auc = auc_mann_whitney(score_cases(model, data, val_idx), labels);
      res.val_auc.push_back(auc);
      if (auc > best_auc) {
        best_auc = auc;
        res.best_epoch = epoch;
        snapshot();
      }
    }
  }

  if (!best_values.empty())
    for (size_t i = 0; i < params.size(); ++i) params[i]->tensor.value() = best_values[i];
  else
    res.best_epoch = cfg.epochs - 1;
  return res;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(CsfNet<float>& model, const TrainConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  auto params = model.params();
  json index = json::array();
  std::ofstream bin((fs::path(dir) / "params.bin").string(), std::ios::binary | std::ios::trunc);
  if (!bin) fail("save_checkpoint: cannot open params.bin in " + dir);
  for (auto* p : params) {
    json e;
    e["name"] = p->name;
    e["shape"] = p->tensor.shape();
    e["step_count"] = p->step_count;
    index.push_back(std::move(e));
    append_volume_record(bin, {1, 1, static_cast<int>(p->tensor.size())}, p->tensor.value());
  }
  json j;
  j["config"] = json::parse(cfg.to_json());
  j["params"] = std::move(index);
  std::ofstream js((fs::path(dir) / "checkpoint.json").string(), std::ios::trunc);
  if (!js) fail("save_checkpoint: cannot open checkpoint.json in " + dir);
  js << j.dump(2) << "\n";
}

std::pair<std::unique_ptr<CsfNet<float>>, TrainConfig> load_checkpoint(const std::string& dir) {
  std::ifstream js((fs::path(dir) / "checkpoint.json").string());
  if (!js) fail("load_checkpoint: cannot open checkpoint.json in " + dir);
  json j;
  try {
    j = json::parse(js);
  } catch (const json::exception& e) {
    fail("load_checkpoint: invalid checkpoint.json: " + std::string(e.what()));
  }
  TrainConfig cfg = TrainConfig::from_json(j.at("config").dump());
  auto model = std::make_unique<CsfNet<float>>(cfg.network, cfg.seed);
  auto params = model->params();
  const auto& index = j.at("params");
  if (index.size() != params.size())
    fail("load_checkpoint: parameter count mismatch (" + std::to_string(index.size()) + " vs " +
         std::to_string(params.size()) + ")");
  std::ifstream bin((fs::path(dir) / "params.bin").string(), std::ios::binary);
  if (!bin) fail("load_checkpoint: cannot open params.bin in " + dir);
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& e = index[i];
    if (e.at("name").get<std::string>() != params[i]->name)
      fail("load_checkpoint: parameter '" + params[i]->name + "' out of order");
    if (e.at("shape").get<Shape>() != params[i]->tensor.shape())
      fail("load_checkpoint: shape mismatch for '" + params[i]->name + "'");
    std::array<int, 3> dims;
    std::vector<float> vals = read_volume_record(bin, dims);
    if (static_cast<int64_t>(vals.size()) != params[i]->tensor.size())
      fail("load_checkpoint: size mismatch for '" + params[i]->name + "'");
    params[i]->tensor.value() = std::move(vals);
    params[i]->step_count = e.at("step_count").get<int64_t>();
  }
  return {std::move(model), cfg};
}

// ---------------------------------------------------------------------------
// Ablation matrix
// ---------------------------------------------------------------------------

std::vector<AblationRow> ablation_rows() {
  auto flags = [](bool t0, bool t1, bool cl, bool cm, bool tr) {
    AblationFlags f;
    f.use_t0 = t0;
    f.use_t1 = t1;
    f.use_clinical = cl;
    f.use_cmaf = cm;
    f.use_trf = tr;
    return f;
  };
  return {
      {"t0_image", flags(true, false, false, false, false)},
      {"t0_image_clinical", flags(true, false, true, true, false)},
      {"t1_image", flags(false, true, false, false, false)},
      {"t1_image_clinical", flags(false, true, true, true, false)},
      {"without_cmaf_clinical", flags(true, true, false, false, true)},
      {"without_temporal_fusion", flags(true, true, true, true, false)},
      {"full", flags(true, true, true, true, true)},
  };
}

std::vector<AblationResult> run_ablation(const TrainConfig& base, const Dataset& data) {
  std::vector<AblationResult> out;
  for (const auto& row : ablation_rows()) {
    TrainConfig cfg = base;
    cfg.network.flags = row.flags;
    cfg.validate();
    TrainResult r = train(cfg, data);
    out.push_back({row.name, evaluate(*r.model, data, Split::test)});
  }
  return out;
}

std::string ablation_table(const std::vector<AblationResult>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(26) << "configuration" << std::right << std::setw(8) << "acc"
     << std::setw(8) << "prec" << std::setw(8) << "rec" << std::setw(8) << "f1" << std::setw(8)
     << "auc" << "\n";
  os << std::string(66, '-') << "\n";
  os << std::fixed << std::setprecision(4);
  for (const auto& r : rows)
    os << std::left << std::setw(26) << r.name << std::right << std::setw(8) << r.test.acc
       << std::setw(8) << r.test.prec << std::setw(8) << r.test.rec << std::setw(8) << r.test.f1
       << std::setw(8) << r.test.auc << "\n";
  return os.str();
}

}  // namespace csf

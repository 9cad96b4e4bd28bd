#ifndef CSFNET_TRAIN_HPP
#define CSFNET_TRAIN_HPP

#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "csfnet/data.hpp"
#include "csfnet/metrics.hpp"
#include "csfnet/network.hpp"

namespace csf {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  int epochs = 30;
  int batch_size = 4;
  int lr_step = 20;       // halve the learning rate every lr_step epochs
  double lr_gamma = 0.5;
  uint64_t seed = 0;
  NetworkConfig network;

  void validate() const {
    if (lr <= 0) fail("TrainConfig: lr must be > 0");
    if (epochs < 1) fail("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) fail("TrainConfig: batch_size must be >= 1");
    if (lr_step < 1) fail("TrainConfig: lr_step must be >= 1");
    network.validate();
  }

  // Strict parsing: unknown keys are fatal.
  static TrainConfig from_json(const std::string& text);
  std::string to_json() const;
};

struct DivergenceError : std::runtime_error {
  int epoch;
  explicit DivergenceError(int ep)
      : std::runtime_error("training diverged (non-finite loss) at epoch " + std::to_string(ep)),
        epoch(ep) {}
};

struct TrainResult {
  std::unique_ptr<CsfNet<float>> model;  // best-val-AUC checkpoint
  std::vector<double> loss_curve;        // mean train loss per epoch
  std::vector<double> val_auc;           // per epoch (empty if no val split)
  int best_epoch = 0;
};

// Per-case malignancy scores (softmax probability of class 1).
std::vector<double> score_cases(const CsfNet<float>& model, const Dataset& data,
                                const std::vector<size_t>& idx, int batch_size = 8);

TrainResult train(const TrainConfig& cfg, const Dataset& data);

MetricsReport evaluate(const CsfNet<float>& model, const Dataset& data, Split split);

// Checkpoints: <dir>/checkpoint.json (config + parameter index) and
// <dir>/params.bin (flattened tensor records in index order).
void save_checkpoint(CsfNet<float>& model, const TrainConfig& cfg, const std::string& dir);
std::pair<std::unique_ptr<CsfNet<float>>, TrainConfig> load_checkpoint(const std::string& dir);

struct AblationRow {
  std::string name;
  AblationFlags flags;
};

// The seven ablation configurations, full model last.
std::vector<AblationRow> ablation_rows();

struct AblationResult {
  std::string name;
  MetricsReport test;
};

std::vector<AblationResult> run_ablation(const TrainConfig& base, const Dataset& data);

std::string ablation_table(const std::vector<AblationResult>& rows);

}  // namespace csf

#endif  // CSFNET_TRAIN_HPP

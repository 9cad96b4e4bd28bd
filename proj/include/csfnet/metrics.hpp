#ifndef CSFNET_METRICS_HPP
#define CSFNET_METRICS_HPP

#include <string>
#include <vector>

namespace csf {

struct MetricsReport {
  double acc = 0, prec = 0, rec = 0, f1 = 0, auc = 0;
  long tp = 0, fp = 0, tn = 0, fn = 0;
  bool prec_defined = true;  // false when no positive predictions
  bool auc_defined = true;   // false when only one class is present
  std::vector<double> scores;
  std::vector<int> labels;

  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
};

// Mann-Whitney concordance: (#concordant + 0.5 #ties) / (n_pos * n_neg).
// Returns 0.5 when all scores tie; sets *defined=false on a single-class
// input (value then reported as 0.5).
double auc_mann_whitney(const std::vector<double>& scores, const std::vector<int>& labels,
                        bool* defined = nullptr);

// Threshold-0.5 confusion metrics plus threshold-free AUC.
MetricsReport compute_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                              double threshold = 0.5);

}  // namespace csf

#endif  // CSFNET_METRICS_HPP

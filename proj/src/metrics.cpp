#include "csfnet/metrics.hpp"

#include "csfnet/tensor.hpp"
#include "json.hpp"

using json = nlohmann::json;

namespace csf {

double auc_mann_whitney(const std::vector<double>& scores, const std::vector<int>& labels,
                        bool* defined) {
  if (scores.size() != labels.size()) fail("auc: scores and labels differ in length");
  if (scores.empty()) fail("auc: empty input");
  long n_pos = 0, n_neg = 0;
  for (int l : labels) (l == 1 ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0) {
    if (defined) *defined = false;
    return 0.5;
  }
  if (defined) *defined = true;
  double num = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] == 1) continue;
      if (scores[i] > scores[j])
        num += 1.0;
      else if (scores[i] == scores[j])
        num += 0.5;
    }
  }
  return num / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

MetricsReport compute_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                              double threshold) {
  if (scores.size() != labels.size()) fail("compute_metrics: scores and labels differ in length");
  if (scores.empty()) fail("compute_metrics: empty input");
  MetricsReport r;
  r.scores = scores;
  r.labels = labels;
  for (size_t i = 0; i < scores.size(); ++i) {
    bool pred = scores[i] >= threshold;
    bool pos = labels[i] == 1;
    if (pred && pos)
      ++r.tp;
    else if (pred && !pos)
      ++r.fp;
    else if (!pred && !pos)
      ++r.tn;
    else
      ++r.fn;
  }
  long total = r.tp + r.fp + r.tn + r.fn;
  r.acc = static_cast<double>(r.tp + r.tn) / total;
  if (r.tp + r.fp > 0) {
    r.prec = static_cast<double>(r.tp) / (r.tp + r.fp);
  } else {
    r.prec = 0.0;
    r.prec_defined = false;
  }
  r.rec = r.tp + r.fn > 0 ? static_cast<double>(r.tp) / (r.tp + r.fn) : 0.0;
  r.f1 = (r.prec + r.rec) > 0 ? 2.0 * r.prec * r.rec / (r.prec + r.rec) : 0.0;
  r.auc = auc_mann_whitney(scores, labels, &r.auc_defined);
  return r;
}

std::string MetricsReport::to_json() const {
  json j;
  j["acc"] = acc;
  j["prec"] = prec;
  j["rec"] = rec;
  j["f1"] = f1;
  j["auc"] = auc;
  j["prec_defined"] = prec_defined;
  j["auc_defined"] = auc_defined;
  j["confusion"] = {{"tp", tp}, {"fp", fp}, {"tn", tn}, {"fn", fn}};
  j["scores"] = scores;
  j["labels"] = labels;
  return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  json j = json::parse(text);
  MetricsReport r;
  r.acc = j.at("acc").get<double>();
  r.prec = j.at("prec").get<double>();
  r.rec = j.at("rec").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.auc = j.at("auc").get<double>();
  r.prec_defined = j.at("prec_defined").get<bool>();
  r.auc_defined = j.at("auc_defined").get<bool>();
  r.tp = j.at("confusion").at("tp").get<long>();
  r.fp = j.at("confusion").at("fp").get<long>();
  r.tn = j.at("confusion").at("tn").get<long>();
  r.fn = j.at("confusion").at("fn").get<long>();
  r.scores = j.at("scores").get<std::vector<double>>();
  r.labels = j.at("labels").get<std::vector<int>>();
  return r;
}

}  // namespace csf

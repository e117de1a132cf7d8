#include "vfe/eval/metrics.hpp"

#include <string>

#include "vfe/errors.hpp"

namespace vfe::eval {

double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

MetricsReport evaluate_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                                   int num_classes, std::optional<int> positive_class) {
  if (truth.size() != predicted.size()) throw InvalidInput("metrics: length mismatch");
  if (truth.empty()) throw InvalidInput("metrics: no samples");
  if (num_classes < 1) throw InvalidInput("metrics: num_classes must be positive");
  auto check = [&](int c, const char* what) {
    if (c < 0 || c >= num_classes) {
      throw InvalidInput(std::string("metrics: unseen ") + what + " id " + std::to_string(c));
    }
  };
  if (positive_class) check(*positive_class, "positive class");

  MetricsReport r;
  r.count = static_cast<std::int64_t>(truth.size());
  r.confusion.assign(num_classes, std::vector<std::int64_t>(num_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    check(truth[i], "label");
    check(predicted[i], "prediction");
    ++r.confusion[truth[i]][predicted[i]];
  }

  std::int64_t correct = 0;
  double recall_sum = 0.0;
  int present = 0;
  r.per_class_f1.resize(num_classes);
  std::vector<double> precision(num_classes), recall(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    std::int64_t row = 0, col = 0;
    for (int k = 0; k < num_classes; ++k) {
      row += r.confusion[c][k];
      col += r.confusion[k][c];
    }
    const auto tp = r.confusion[c][c];
    correct += tp;
    precision[c] = col > 0 ? static_cast<double>(tp) / col : 0.0;
    recall[c] = row > 0 ? static_cast<double>(tp) / row : 0.0;
    if (row > 0) {
      recall_sum += recall[c];
      ++present;
    }
    r.per_class_f1[c] = f1_score(precision[c], recall[c]);
  }
  r.accuracy = static_cast<double>(correct) / r.count;
  r.balanced_accuracy = recall_sum / present;
  double f1_sum = 0.0;
  for (double f : r.per_class_f1) f1_sum += f;
  r.macro_f1 = f1_sum / num_classes;
  if (positive_class) {
    const int p = *positive_class;
    r.binary = BinaryMetrics{p, precision[p], recall[p], r.per_class_f1[p]};
  }
  return r;
}

MetricsReport evaluate_probe(const ProbeModel& model, const Eigen::MatrixXd& features,
                             const std::vector<int>& labels, std::optional<int> positive_class) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw InvalidInput("evaluate_probe: feature rows and labels differ in length");
  }
  for (int y : labels) {
    if (y < 0 || y >= model.num_classes()) {
      throw InvalidInput("evaluate_probe: unseen label id " + std::to_string(y));
    }
  }
  return evaluate_predictions(labels, probe_predict(model, features), model.num_classes(),
                              positive_class);
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["count"] = r.count;
  j["accuracy"] = r.accuracy;
  j["balanced_accuracy"] = r.balanced_accuracy;
  if (r.binary) {
    j["positive_class"] = r.binary->positive_class;
    j["precision"] = r.binary->precision;
    j["recall"] = r.binary->recall;
    j["f1"] = r.binary->f1;
  } else {
    j["positive_class"] = nullptr;
    j["precision"] = nullptr;
    j["recall"] = nullptr;
    j["f1"] = nullptr;
  }
  j["per_class_f1"] = r.per_class_f1;
  j["macro_f1"] = r.macro_f1;
  j["confusion"] = r.confusion;
  return j;
}

}  // namespace vfe::eval

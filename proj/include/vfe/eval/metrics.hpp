#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "vfe/eval/probe.hpp"

namespace vfe::eval {

struct BinaryMetrics {
  int positive_class = 1;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  std::int64_t count = 0;
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  std::optional<BinaryMetrics> binary;
  std::vector<double> per_class_f1;
  double macro_f1 = 0.0;
  std::vector<std::vector<std::int64_t>> confusion;  // [truth][predicted]
};

/// Harmonic mean of precision and recall; 0 when both are 0.
double f1_score(double precision, double recall);

/// Metrics from true and predicted class ids in [0, num_classes). Balanced accuracy averages the
/// recall of classes present in `truth`. Precision of a class never predicted is 0.
MetricsReport evaluate_predictions(const std::vector<int>& truth, const std::vector<int>& predicted,
                                   int num_classes, std::optional<int> positive_class = {});

/// Argmax predictions of the probe, scored with evaluate_predictions. Labels outside the
/// probe's classes throw InvalidInput.
MetricsReport evaluate_probe(const ProbeModel& model, const Eigen::MatrixXd& features,
                             const std::vector<int>& labels, std::optional<int> positive_class = {});

nlohmann::json to_json(const MetricsReport& report);

}  // namespace vfe::eval

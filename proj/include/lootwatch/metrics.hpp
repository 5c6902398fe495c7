#pragma once

#include <cstddef>
#include <optional>
#include <span>

namespace lootwatch {

/// Threshold metrics use the looted class (1) as positive; a score >= threshold
/// predicts looted.
struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::optional<double> auroc;  // absent when y_true has a single class
    bool precision_defined = true;  // false when nothing was predicted positive
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Normalized Mann-Whitney U with average ranks for tied scores.
std::optional<double> auroc_rank(std::span<const int> y_true, std::span<const double> scores);

Metrics compute_metrics(std::span<const int> y_true, std::span<const double> scores, double threshold = 0.5);

}  // namespace lootwatch

#include "lootwatch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "lootwatch/common.hpp"

namespace lootwatch {

std::optional<double> auroc_rank(std::span<const int> y, std::span<const double> scores) {
    if (y.size() != scores.size()) throw InvariantError("labels and scores differ in length");
    const std::size_t n = y.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double positive_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        // Ranks i+1..j share their average.
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t)
            if (y[order[t]] != 0) {
                positive_rank_sum += avg_rank;
                ++n_pos;
            }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;
    const double np = static_cast<double>(n_pos);
    const double u = positive_rank_sum - np * (np + 1.0) / 2.0;
    return u / (np * static_cast<double>(n_neg));
}

Metrics compute_metrics(std::span<const int> y, std::span<const double> scores, double threshold) {
    if (y.size() != scores.size()) throw InvariantError("labels and scores differ in length");
    if (y.empty()) throw DataError("metrics need at least one instance");
    Metrics m;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!std::isfinite(scores[i]) || scores[i] < 0.0 || scores[i] > 1.0)
            throw InvariantError("score outside [0, 1]");
        const bool pred = scores[i] >= threshold;
        const bool truth = y[i] != 0;
        if (pred && truth) ++m.tp;
        else if (pred && !truth) ++m.fp;
        else if (!pred && truth) ++m.fn;
        else ++m.tn;
    }
    const double n = static_cast<double>(y.size());
    m.accuracy = static_cast<double>(m.tp + m.tn) / n;
    m.precision_defined = (m.tp + m.fp) > 0;
    m.precision = m.precision_defined ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
    m.recall = (m.tp + m.fn) > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    m.auroc = auroc_rank(y, scores);
    return m;
}

}  // namespace lootwatch

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lootwatch/common.hpp"

namespace lootwatch {

struct MonthlySequence {
    std::string site_id;
    std::vector<YearMonth> months;            // strictly increasing
    std::vector<std::vector<double>> vectors;  // one per month, equal width

    std::size_t length() const { return vectors.size(); }
    std::size_t dim() const { return vectors.empty() ? 0 : vectors.front().size(); }
    void validate() const;
};

enum class Aggregation { mean, median, concat, pca, trend };

std::string_view aggregation_name(Aggregation a);
/// Throws ConfigError for unknown names.
Aggregation parse_aggregation(std::string_view name);

std::vector<double> agg_mean(const MonthlySequence& seq);
/// Lower median for even lengths.
std::vector<double> agg_median(const MonthlySequence& seq);
std::vector<double> agg_concat(const MonthlySequence& seq);
/// OLS slope per dimension against month index 0..T-1.
std::vector<double> agg_trend(const MonthlySequence& seq);

/// Per-site reduction; PCA input is the concatenated sequence, so `pca` returns agg_concat.
std::vector<double> aggregate(const MonthlySequence& seq, Aggregation a);

struct PcaModel {
    std::size_t input_width = 0;
    std::vector<double> mean;            // input_width
    Matrix components;                   // k × input_width, orthonormal rows
    std::vector<double> explained_ratio;  // k, non-increasing
    std::string fingerprint;             // digest of the training rows

    std::size_t k() const { return components.rows; }
};

inline constexpr std::size_t kPcaCap = 1024;
inline constexpr double kPcaVarianceTarget = 0.99;

std::string fingerprint_rows(const Matrix& rows);

/// Centered SVD. With D > n: k = min(cap, D, n-1). Otherwise k is the smallest
/// count reaching 99% cumulative explained variance, capped at min(D, n-1).
/// Each component's largest-magnitude entry is made positive.
PcaModel pca_fit(const Matrix& rows, std::size_t cap = kPcaCap);

std::vector<double> pca_transform(const PcaModel& model, std::span<const double> row);
Matrix pca_transform(const PcaModel& model, const Matrix& rows);
std::vector<double> pca_reconstruct(const PcaModel& model, std::span<const double> projection);

/// Binary blob (little-endian f64: mean, components, ratios) plus a JSON descriptor.
void save_pca(const PcaModel& model, const std::filesystem::path& blob, const std::filesystem::path& descriptor);
PcaModel load_pca(const std::filesystem::path& blob, const std::filesystem::path& descriptor);

}  // namespace lootwatch

#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lootwatch/common.hpp"
#include "lootwatch/raster.hpp"
#include "lootwatch/temporal.hpp"

namespace lootwatch {

/// Row key in a feature store. `period` is a YYYY_MM tag for monthly rows or a
/// window label for aggregated rows.
struct FeatureKey {
    std::string site_id;
    std::string period;
    auto operator<=>(const FeatureKey&) const = default;
};

/// Rows of equal width keyed by (site, period). Shared by handcrafted features,
/// ingested embeddings and aggregated vectors.
struct FeatureTable {
    std::size_t dim = 0;
    std::map<FeatureKey, std::vector<double>> rows;

    /// Throws DataError on duplicate keys, width mismatch or non-finite values.
    void insert(FeatureKey key, std::vector<double> values);
    const std::vector<double>* find(const FeatureKey& key) const;
};

/// `f00`, `f01`, ... zero-padded to at least two digits.
std::string feature_column_name(std::size_t index, std::size_t dim);

/// CSV `site_id,year_month,f00..f{dim-1}`, 17 significant digits.
std::string feature_store_csv(const FeatureTable& table);
void write_feature_store(const FeatureTable& table, const std::filesystem::path& path);
FeatureTable parse_feature_store(std::string_view csv_text, const std::string& source = "feature store");
FeatureTable read_feature_store(const std::filesystem::path& path);

enum class EmbeddingFamily { satclip_v, georsclip, dinov3, prithvi, satlas, satmae };

std::string_view family_name(EmbeddingFamily f);
/// Throws ConfigError for names outside the family table.
EmbeddingFamily parse_family(std::string_view name);
std::size_t family_dim(EmbeddingFamily f);

struct EmbeddingSeries {
    EmbeddingFamily family = EmbeddingFamily::satclip_v;
    std::size_t dim = 0;
    bool masked = false;
    FeatureTable table;
};

/// `emb.csv` -> `emb.json`
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

/// Requires the CSV and its one-line JSON sidecar {"family","dim","masked"}.
EmbeddingSeries load_embeddings(const std::filesystem::path& path, std::string_view family);
void save_embeddings(const EmbeddingSeries& series, const std::filesystem::path& path);

/// Per-site month sequences in site order. Every missing (site, month) is listed in
/// the error message.
std::vector<MonthlySequence> align_series(const FeatureTable& table, std::span<const std::string> site_ids,
                                          std::span<const YearMonth> months);
std::vector<MonthlySequence> align_series(const FeatureTable& table, const SiteManifest& manifest,
                                          std::span<const YearMonth> months);

}  // namespace lootwatch

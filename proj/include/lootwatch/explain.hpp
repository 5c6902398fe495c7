#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lootwatch/common.hpp"
#include "lootwatch/models.hpp"
#include "lootwatch/split.hpp"

namespace lootwatch {

/// Per-feature split-gain totals (weighted Gini decrease for forests), normalized to sum 1.
/// Throws ConfigError for logreg and DataError when the model never splits.
std::vector<double> tree_importance(const TrainedModel& model);

struct ImportanceRow {
    std::size_t feature = 0;  // index into the layout the table was built on
    std::string name;
    double importance = 0.0;
    std::size_t rank = 0;  // 1-based
};

/// Rows in rank order.
struct ImportanceTable {
    std::vector<ImportanceRow> rows;
};

/// Ranks `importance` descending, ties by feature index.
ImportanceTable rank_importance(std::span<const double> importance, std::span<const std::string> names);

/// Unweighted mean of the per-model normalized importances.
ImportanceTable ensemble_importance(std::span<const TrainedModel> models, std::span<const std::string> names);

/// Layout indices of the first k ranks.
std::vector<std::size_t> select_top_k(const ImportanceTable& table, std::size_t k = 10);

inline constexpr std::size_t kMaxShapleyFeatures = 12;

struct ShapleyValues {
    double phi0 = 0.0;          // v(empty): mean background margin
    std::vector<double> phi;  // one per feature
};

using MarginFn = std::function<double(std::span<const double>)>;

/// Interventional Shapley values by enumerating all 2^k coalitions of the k inputs.
ShapleyValues shapley_exact(const MarginFn& margin, std::span<const double> instance, const Matrix& background);

/// Same game for tree ensembles, evaluated tree by tree over each tree's own
/// features; falls back to the generic path for logreg.
ShapleyValues shapley_exact(const TrainedModel& model, std::span<const double> instance, const Matrix& background);

struct ExplainSettings {
    Hyperparams forest;  // n_trees / max_depth
    Hyperparams gbt;
    Hyperparams gbt2;
    std::size_t top_k = 10;
    std::size_t background_cap = 256;
    std::uint64_t seed = 0;

    ExplainSettings();
    void validate() const;
};

nlohmann::ordered_json explain_settings_to_json(const ExplainSettings& s);
ExplainSettings explain_settings_from_json(const nlohmann::json& j);

struct ShapInstance {
    std::size_t fold = 0;
    std::string site_id;
    int label = 0;
    double margin = 0.0;
    ShapleyValues values;
};

struct ShapTable {
    std::vector<std::size_t> features;  // layout indices of the explained features, selection order
    std::vector<std::string> names;
    std::vector<ShapInstance> instances;
    ImportanceTable summary;  // mean |phi| per feature, ranked
};

struct ExplainResult {
    std::vector<std::size_t> dropped_zero_variance;  // layout indices
    ImportanceTable stage1;  // ensemble importance over the kept features (indices into the full layout)
    std::vector<std::size_t> selected;
    ShapTable shap;
};

/// `data` holds one aggregated row per site; folds reference data.site_ids.
ExplainResult importance_pipeline(const Dataset& data, std::span<const std::string> names, const SplitPlan& plan,
                                  const ExplainSettings& settings);

std::string importance_csv(const ImportanceTable& table);  // feature,importance,rank
std::string shap_summary_csv(const ShapTable& table);      // feature,mean_abs_shap,rank
std::string shap_instances_csv(const ShapTable& table);    // fold,site_id,label,margin,phi0,<features>

}  // namespace lootwatch

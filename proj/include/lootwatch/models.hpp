#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lootwatch/common.hpp"

namespace lootwatch {

/// n × d features with labels 0 = preserved, 1 = looted.
struct Dataset {
    Matrix X;
    std::vector<int> y;
    std::vector<std::string> site_ids;

    std::size_t size() const { return y.size(); }
    std::size_t width() const { return X.cols; }
    /// Throws DataError on shape mismatch, non-finite values, or (when required) a single class.
    void validate(bool require_both_classes) const;
    Dataset subset(std::span<const std::size_t> rows) const;
};

enum class ModelKind { logreg, forest, gbt, gbt2 };

std::string_view model_kind_name(ModelKind k);
/// Throws ConfigError for unknown names.
ModelKind parse_model_kind(std::string_view name);
bool is_tree_model(ModelKind k);

/// Union of every kind's knobs; only the fields of the model's kind are read.
struct Hyperparams {
    double C = 1.0;                    // logreg
    int n_trees = 100;                 // forest
    std::optional<int> max_depth = 8;  // forest, gbt, gbt2; nullopt = unbounded
    double learning_rate = 0.1;        // gbt, gbt2
    int n_rounds = 100;                // gbt, gbt2
    double lambda = 0.0;               // gbt2 leaf L2

    bool operator==(const Hyperparams&) const = default;
};

/// Throws ConfigError for out-of-range values (e.g. zero trees).
void validate_hyperparams(ModelKind kind, const Hyperparams& hp);
nlohmann::ordered_json hyperparams_to_json(ModelKind kind, const Hyperparams& hp);
Hyperparams hyperparams_from_json(ModelKind kind, const nlohmann::json& j);

/// Default search spaces per kind.
std::vector<Hyperparams> default_grid(ModelKind kind);
/// Grid from a JSON object of value lists, e.g. {"C": [0.1, 1]}; missing keys take defaults.
std::vector<Hyperparams> grid_from_json(ModelKind kind, const nlohmann::json& j);

struct TreeNode {
    int feature = -1;  // -1 for leaves
    double threshold = 0.0;  // x[feature] <= threshold goes left
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf output
    double gain = 0.0;   // split gain (Gini decrease or boosting gain)
    double cover = 0.0;  // weighted sample mass (forest) or hessian sum (boosting)

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;

    int leaf_index(std::span<const double> x) const;
    double predict(std::span<const double> x) const { return nodes[static_cast<std::size_t>(leaf_index(x))].value; }
    /// Features used by at least one split, ascending.
    std::vector<std::size_t> used_features() const;
};

struct TrainedModel {
    ModelKind kind = ModelKind::logreg;
    std::size_t n_features = 0;
    std::array<double, 2> class_weights{1.0, 1.0};
    Hyperparams params;
    std::uint64_t seed = 0;

    // logreg: standardization lives in the model.
    std::vector<double> feature_mean;
    std::vector<double> feature_scale;
    std::vector<double> coef;
    double intercept = 0.0;
    int iterations = 0;
    double gradient_norm = 0.0;

    // Tree ensembles. Forest: mean of leaf fractions. Boosting:
    // base_score + learning_rate * Σ tree outputs, logistic link.
    std::vector<Tree> trees;
    double base_score = 0.0;

    /// Raw score: log-odds for logreg/gbt/gbt2, probability for forest.
    double margin(std::span<const double> x) const;
    double predict_proba(std::span<const double> x) const;
};

/// w_c = n / (2 n_c).
std::array<double, 2> class_weights(std::span<const int> y);

TrainedModel train_logreg(const Dataset& ds, double C, std::array<double, 2> weights);
TrainedModel train_forest(const Dataset& ds, int n_trees, std::optional<int> max_depth, std::uint64_t seed,
                          std::array<double, 2> weights);
TrainedModel train_gbt(const Dataset& ds, double learning_rate, int n_rounds, std::optional<int> max_depth,
                       double lambda, bool second_order, std::uint64_t seed, std::array<double, 2> weights);

/// Dispatch with inverse-frequency class weights computed from ds.y.
TrainedModel train_model(ModelKind kind, const Dataset& ds, const Hyperparams& hp, std::uint64_t seed);

std::vector<double> predict_proba(const TrainedModel& model, const Matrix& X);
std::vector<double> predict_margin(const TrainedModel& model, const Matrix& X);

/// Weighted logistic loss of a boosted or logistic model on ds (no penalty term).
double weighted_log_loss(const TrainedModel& model, const Dataset& ds);

struct GridSearchResult {
    std::size_t best_index = 0;
    Hyperparams best;
    std::vector<std::optional<double>> mean_f1;  // nullopt = skipped
    std::vector<std::string> skipped;            // reasons, one per skipped point
    TrainedModel model;                          // refit on the whole training split
};

/// Stratified k-fold CV on ds only; highest mean F1 wins, ties to the earlier point.
/// A singleton grid is refit directly without CV.
GridSearchResult grid_search(ModelKind kind, const Dataset& ds, std::span<const Hyperparams> grid, int k,
                             std::uint64_t seed, const LeakageGuard& guard = {});

nlohmann::ordered_json model_to_json(const TrainedModel& model, std::string_view feature_layout);
TrainedModel model_from_json(const nlohmann::json& j);

}  // namespace lootwatch

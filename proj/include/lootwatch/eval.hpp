#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lootwatch/common.hpp"
#include "lootwatch/metrics.hpp"
#include "lootwatch/models.hpp"
#include "lootwatch/split.hpp"
#include "lootwatch/temporal.hpp"

namespace lootwatch {

struct SiteData {
    std::string site_id;
    Label label = Label::preserved;
    MonthlySequence sequence;
    std::size_t mask_area = 0;  // footprint pixels, used by the dilation intervention
};

/// Re-extracts a test site with its mask grown to at least `target_area` pixels.
using DilationHook = std::function<MonthlySequence(const SiteData& site, std::size_t target_area)>;

struct ExperimentConfig {
    Aggregation aggregation = Aggregation::mean;
    ModelKind model = ModelKind::forest;
    std::vector<Hyperparams> grid;  // empty: default_grid(model)
    int k_folds = 5;
    int inner_folds = 3;
    SplitMode split_mode = SplitMode::kfold;
    SplitRatios ratios;
    std::uint64_t seed = 0;
    std::size_t pca_cap = kPcaCap;

    // Echoed into the report only.
    std::string feature_source = "handcrafted";
    bool masked = true;
    std::string mask_dilation = "off";

    void validate() const;
};

struct Prediction {
    std::string site_id;
    int label = 0;
    double score = 0.0;
};

struct FoldResult {
    std::size_t fold = 0;
    std::size_t n_train = 0, n_validation = 0, n_test = 0;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    Hyperparams winner;
    std::size_t winner_index = 0;
    std::vector<std::optional<double>> grid_mean_f1;
    std::vector<std::string> skipped;
    std::optional<std::size_t> pca_k;
    std::string pca_fingerprint;  // empty without PCA
    std::size_t dilation_target = 0;
    std::size_t dilated_test_sites = 0;
    Metrics metrics;
    std::vector<Prediction> predictions;
    TrainedModel model;
};

struct MetricSummary {
    double mean = 0.0;
    double stdev = 0.0;  // population std across folds
    std::size_t n = 0;  // folds contributing (AUROC may be absent on some)
};

struct EvalReport {
    ExperimentConfig config;
    std::size_t n_sites = 0;
    std::size_t feature_width = 0;  // per-month vector width
    std::vector<FoldResult> folds;
    MetricSummary accuracy, precision, recall, f1, auroc;
};

std::vector<LabeledSite> labeled_sites(std::span<const SiteData> sites);

/// Fold plan for the configured split mode: rotating k-fold or k independent re-splits.
SplitPlan make_split_plan(std::span<const SiteData> sites, const ExperimentConfig& config);

/// Aggregated rows for the given site indices. Not valid for Aggregation::pca.
Dataset aggregate_sites(std::span<const SiteData> sites, std::span<const std::size_t> indices, Aggregation a);

/// PCA fit that rejects any row belonging to a guarded site.
PcaModel fit_pca_guarded(const Matrix& rows, std::span<const std::string> site_ids, const LeakageGuard& guard,
                         std::size_t cap);

FoldResult run_fold(std::span<const SiteData> sites, const Fold& fold, std::size_t fold_index,
                    const ExperimentConfig& config, const DilationHook& dilate = {});

EvalReport run_experiment(std::span<const SiteData> sites, const ExperimentConfig& config,
                          const DilationHook& dilate = {});

MetricSummary summarize(std::span<const double> values);

nlohmann::ordered_json metrics_to_json(const Metrics& m);
nlohmann::ordered_json report_to_json(const EvalReport& report);
/// CSV header and one row per report: configuration keys then metric means and stds.
std::string summary_csv_header();
std::string summary_csv_row(const EvalReport& report);
/// Per-fold test predictions: fold,site_id,label,score.
std::string predictions_csv(const EvalReport& report);

}  // namespace lootwatch

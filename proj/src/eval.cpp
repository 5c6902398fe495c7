#include "lootwatch/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace lootwatch {

namespace {

std::map<std::string, std::size_t> index_by_id(std::span<const SiteData> sites) {
    std::map<std::string, std::size_t> out;
    for (std::size_t i = 0; i < sites.size(); ++i)
        if (!out.emplace(sites[i].site_id, i).second)
            throw DataError("duplicate site id '" + sites[i].site_id + "'");
    return out;
}

std::vector<std::size_t> lookup(const std::map<std::string, std::size_t>& index, std::span<const std::string> ids) {
    std::vector<std::size_t> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(index.at(id));
    return out;
}

Dataset rows_from(const std::vector<const SiteData*>& sites, Aggregation a) {
    Dataset ds;
    for (const SiteData* s : sites) {
        const auto row = aggregate(s->sequence, a);
        if (ds.X.rows == 0) ds.X = Matrix(0, row.size());
        if (row.size() != ds.X.cols) throw DataError("site '" + s->site_id + "' aggregates to a different width");
        ds.X.append_row(row);
        ds.y.push_back(static_cast<int>(s->label));
        ds.site_ids.push_back(s->site_id);
    }
    return ds;
}

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json summary_json(const MetricSummary& s) {
    return {{"mean", s.mean}, {"std", s.stdev}, {"n", s.n}};
}

}  // namespace

void ExperimentConfig::validate() const {
    if (k_folds < 2) throw ConfigError("k_folds must be >= 2");
    if (inner_folds < 2) throw ConfigError("inner_folds must be >= 2");
    ratios.validate();
    for (const auto& hp : grid) validate_hyperparams(model, hp);
    if (pca_cap < 1) throw ConfigError("pca_cap must be >= 1");
}

std::vector<LabeledSite> labeled_sites(std::span<const SiteData> sites) {
    std::vector<LabeledSite> out;
    out.reserve(sites.size());
    for (const auto& s : sites) out.push_back({s.site_id, s.label});
    return out;
}

SplitPlan make_split_plan(std::span<const SiteData> sites, const ExperimentConfig& config) {
    const auto labeled = labeled_sites(sites);
    if (config.split_mode == SplitMode::kfold) return stratified_kfold(labeled, config.k_folds, config.seed);
    return repeated_stratified_split(labeled, config.k_folds, config.ratios, config.seed);
}

Dataset aggregate_sites(std::span<const SiteData> sites, std::span<const std::size_t> indices, Aggregation a) {
    if (a == Aggregation::pca) throw InvariantError("PCA aggregation needs a fitted model");
    std::vector<const SiteData*> picked;
    for (auto i : indices) picked.push_back(&sites[i]);
    return rows_from(picked, a);
}

PcaModel fit_pca_guarded(const Matrix& rows, std::span<const std::string> site_ids, const LeakageGuard& guard,
                         std::size_t cap) {
    guard.check(site_ids, "pca_fit");
    return pca_fit(rows, cap);
}

FoldResult run_fold(std::span<const SiteData> sites, const Fold& fold, std::size_t fold_index,
                    const ExperimentConfig& config, const DilationHook& dilate) {
    const auto index = index_by_id(sites);
    FoldResult result;
    result.fold = fold_index;
    result.n_train = fold.train.size();
    result.n_validation = fold.validation.size();
    result.n_test = fold.test.size();
    result.train_ids = fold.train;
    result.test_ids = fold.test;

    // Validation sites are held out from every fit, as are test sites.
    std::set<std::string> forbidden(fold.test.begin(), fold.test.end());
    forbidden.insert(fold.validation.begin(), fold.validation.end());
    const LeakageGuard guard(std::move(forbidden));

    std::vector<const SiteData*> train;
    for (auto i : lookup(index, fold.train)) train.push_back(&sites[i]);

    std::vector<SiteData> dilated;
    std::vector<const SiteData*> test;
    dilated.reserve(fold.test.size());
    if (dilate) {
        std::vector<std::size_t> areas;
        for (const auto* s : train) areas.push_back(s->mask_area);
        std::sort(areas.begin(), areas.end());
        result.dilation_target = areas.empty() ? 0 : areas[(areas.size() - 1) / 2];
    }
    for (auto i : lookup(index, fold.test)) {
        const SiteData& s = sites[i];
        if (dilate && s.mask_area < result.dilation_target) {
            SiteData copy = s;
            copy.sequence = dilate(s, result.dilation_target);
            dilated.push_back(std::move(copy));
            test.push_back(&dilated.back());
            ++result.dilated_test_sites;
        } else {
            test.push_back(&s);
        }
    }

    Dataset train_ds, test_ds;
    if (config.aggregation == Aggregation::pca) {
        train_ds = rows_from(train, Aggregation::concat);
        test_ds = rows_from(test, Aggregation::concat);
        const PcaModel pca = fit_pca_guarded(train_ds.X, train_ds.site_ids, guard, config.pca_cap);
        result.pca_k = pca.k();
        result.pca_fingerprint = pca.fingerprint;
        train_ds.X = pca_transform(pca, train_ds.X);
        test_ds.X = pca_transform(pca, test_ds.X);
    } else {
        train_ds = rows_from(train, config.aggregation);
        test_ds = rows_from(test, config.aggregation);
    }

    const auto grid = config.grid.empty() ? default_grid(config.model) : config.grid;
    auto search = grid_search(config.model, train_ds, grid, config.inner_folds,
                              derive_seed(config.seed, 0xe7a1, fold_index), guard);
    result.winner = search.best;
    result.winner_index = search.best_index;
    result.grid_mean_f1 = std::move(search.mean_f1);
    result.skipped = std::move(search.skipped);
    result.model = std::move(search.model);

    const auto scores = predict_proba(result.model, test_ds.X);
    result.metrics = compute_metrics(test_ds.y, scores);
    for (std::size_t i = 0; i < test_ds.size(); ++i)
        result.predictions.push_back({test_ds.site_ids[i], test_ds.y[i], scores[i]});
    return result;
}

MetricSummary summarize(std::span<const double> values) {
    MetricSummary s;
    s.n = values.size();
    if (values.empty()) return s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stdev = std::sqrt(ss / static_cast<double>(values.size()));
    return s;
}

EvalReport run_experiment(std::span<const SiteData> sites, const ExperimentConfig& config, const DilationHook& dilate) {
    config.validate();
    if (sites.empty()) throw DataError("experiment has no sites");
    for (const auto& s : sites) s.sequence.validate();

    EvalReport report;
    report.config = config;
    report.n_sites = sites.size();
    report.feature_width = sites.front().sequence.dim();
    const SplitPlan plan = make_split_plan(sites, config);
    for (std::size_t f = 0; f < plan.folds.size(); ++f)
        report.folds.push_back(run_fold(sites, plan.folds[f], f, config, dilate));

    std::vector<double> acc, prec, rec, f1, auc;
    for (const auto& fr : report.folds) {
        acc.push_back(fr.metrics.accuracy);
        prec.push_back(fr.metrics.precision);
        rec.push_back(fr.metrics.recall);
        f1.push_back(fr.metrics.f1);
        if (fr.metrics.auroc) auc.push_back(*fr.metrics.auroc);
    }
    report.accuracy = summarize(acc);
    report.precision = summarize(prec);
    report.recall = summarize(rec);
    report.f1 = summarize(f1);
    report.auroc = summarize(auc);
    return report;
}

nlohmann::ordered_json metrics_to_json(const Metrics& m) {
    return {{"accuracy", m.accuracy},
            {"precision", m.precision},
            {"recall", m.recall},
            {"f1", m.f1},
            {"auroc", optional_json(m.auroc)},
            {"precision_defined", m.precision_defined},
            {"tp", m.tp},
            {"fp", m.fp},
            {"tn", m.tn},
            {"fn", m.fn}};
}

nlohmann::ordered_json report_to_json(const EvalReport& r) {
    const auto& c = r.config;
    nlohmann::ordered_json j;
    j["std_convention"] = "population std across folds";
    j["config"] = {{"feature_source", c.feature_source},
                   {"masked", c.masked},
                   {"mask_dilation", c.mask_dilation},
                   {"aggregation", aggregation_name(c.aggregation)},
                   {"model", model_kind_name(c.model)},
                   {"k_folds", c.k_folds},
                   {"inner_folds", c.inner_folds},
                   {"split_mode", split_mode_name(c.split_mode)},
                   {"seed", c.seed}};
    auto grid = nlohmann::ordered_json::array();
    for (const auto& hp : c.grid.empty() ? default_grid(c.model) : c.grid)
        grid.push_back(hyperparams_to_json(c.model, hp));
    j["config"]["grid"] = grid;
    j["n_sites"] = r.n_sites;
    j["feature_width"] = r.feature_width;

    auto folds = nlohmann::ordered_json::array();
    for (const auto& f : r.folds) {
        nlohmann::ordered_json fj;
        fj["fold"] = f.fold;
        fj["n_train"] = f.n_train;
        fj["n_validation"] = f.n_validation;
        fj["n_test"] = f.n_test;
        fj["grid_winner"] = hyperparams_to_json(c.model, f.winner);
        fj["grid_winner_index"] = f.winner_index;
        auto means = nlohmann::ordered_json::array();
        for (const auto& m : f.grid_mean_f1) means.push_back(optional_json(m));
        fj["grid_mean_f1"] = means;
        fj["grid_skipped"] = f.skipped;
        if (f.pca_k) fj["pca"] = {{"k", *f.pca_k}, {"fingerprint", f.pca_fingerprint}};
        else fj["pca"] = nullptr;
        fj["dilation_target"] = f.dilation_target;
        fj["dilated_test_sites"] = f.dilated_test_sites;
        fj["metrics"] = metrics_to_json(f.metrics);
        folds.push_back(std::move(fj));
    }
    j["folds"] = folds;
    j["summary"] = {{"accuracy", summary_json(r.accuracy)},
                    {"precision", summary_json(r.precision)},
                    {"recall", summary_json(r.recall)},
                    {"f1", summary_json(r.f1)},
                    {"auroc", summary_json(r.auroc)}};
    return j;
}

std::string summary_csv_header() {
    return "feature,aggregation,model,masking,mask_dilation,seed,folds,"
           "accuracy_mean,accuracy_std,precision_mean,precision_std,recall_mean,recall_std,"
           "f1_mean,f1_std,auroc_mean,auroc_std";
}

std::string summary_csv_row(const EvalReport& r) {
    const auto& c = r.config;
    std::ostringstream out;
    out << c.feature_source << ',' << aggregation_name(c.aggregation) << ',' << model_kind_name(c.model) << ','
        << (c.masked ? "masked" : "unmasked") << ',' << c.mask_dilation << ',' << c.seed << ',' << r.folds.size();
    for (const auto* s : {&r.accuracy, &r.precision, &r.recall, &r.f1, &r.auroc})
        out << ',' << format_double(s->mean) << ',' << format_double(s->stdev);
    return out.str();
}

std::string predictions_csv(const EvalReport& r) {
    std::ostringstream out;
    out << "fold,site_id,label,score\n";
    for (const auto& f : r.folds)
        for (const auto& p : f.predictions)
            out << f.fold << ',' << p.site_id << ',' << p.label << ',' << format_double(p.score) << '\n';
    return out.str();
}

}  // namespace lootwatch

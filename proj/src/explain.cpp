#include "lootwatch/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace lootwatch {

namespace {

/// s!(m-s-1)!/m! for s = 0..m-1.
std::vector<double> shapley_weights(std::size_t m) {
    std::vector<double> fact(m + 1, 1.0);
    for (std::size_t i = 1; i <= m; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
    std::vector<double> w(m, 0.0);
    for (std::size_t s = 0; s < m; ++s) w[s] = fact[s] * fact[m - s - 1] / fact[m];
    return w;
}

/// phi_i = Σ_{S ∌ i} w(|S|) (v(S ∪ {i}) - v(S)) over a table of 2^m coalition values.
std::vector<double> phi_from_values(std::span<const double> v, std::size_t m) {
    const auto w = shapley_weights(m);
    std::vector<double> phi(m, 0.0);
    const std::size_t n_masks = std::size_t{1} << m;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t bit = std::size_t{1} << i;
        double acc = 0.0;
        for (std::size_t s = 0; s < n_masks; ++s) {
            if (s & bit) continue;
            acc += w[static_cast<std::size_t>(std::popcount(s))] * (v[s | bit] - v[s]);
        }
        phi[i] = acc;
    }
    return phi;
}

void check_shapley_inputs(std::size_t k, std::span<const double> instance, const Matrix& background) {
    if (k > kMaxShapleyFeatures)
        throw ConfigError("exact Shapley enumeration supports at most " + std::to_string(kMaxShapleyFeatures) +
                          " features, got " + std::to_string(k));
    if (background.rows == 0) throw DataError("Shapley background is empty");
    if (instance.size() != k || background.cols != k)
        throw DataError("Shapley input width mismatch: instance " + std::to_string(instance.size()) +
                        ", background " + std::to_string(background.cols) + ", model " + std::to_string(k));
}

/// Coalition values of one tree's game over its own features, background grouped
/// by the direction taken at every internal node.
std::vector<double> tree_coalition_values(const Tree& tree, std::span<const std::size_t> used,
                                          std::span<const double> instance, const Matrix& background) {
    std::vector<int> local_bit(instance.size(), -1);
    for (std::size_t j = 0; j < used.size(); ++j) local_bit[used[j]] = static_cast<int>(j);
    const std::size_t n_nodes = tree.nodes.size();

    std::map<std::vector<std::uint8_t>, std::size_t> groups;
    std::vector<std::uint8_t> pattern(n_nodes, 0);
    for (std::size_t b = 0; b < background.rows; ++b) {
        const auto row = background.row(b);
        for (std::size_t n = 0; n < n_nodes; ++n) {
            const TreeNode& node = tree.nodes[n];
            pattern[n] = !node.is_leaf() && row[static_cast<std::size_t>(node.feature)] <= node.threshold;
        }
        ++groups[pattern];
    }
    std::vector<std::uint8_t> x_left(n_nodes, 0);
    for (std::size_t n = 0; n < n_nodes; ++n) {
        const TreeNode& node = tree.nodes[n];
        x_left[n] = !node.is_leaf() && instance[static_cast<std::size_t>(node.feature)] <= node.threshold;
    }

    const std::size_t n_masks = std::size_t{1} << used.size();
    std::vector<double> v(n_masks, 0.0);
    const double inv_b = 1.0 / static_cast<double>(background.rows);
    for (std::size_t s = 0; s < n_masks; ++s) {
        double acc = 0.0;
        for (const auto& [pat, count] : groups) {
            std::size_t n = 0;
            while (!tree.nodes[n].is_leaf()) {
                const TreeNode& node = tree.nodes[n];
                const int bit = local_bit[static_cast<std::size_t>(node.feature)];
                const bool left = (s >> bit) & 1u ? x_left[n] : pat[n];
                n = static_cast<std::size_t>(left ? node.left : node.right);
            }
            acc += static_cast<double>(count) * tree.nodes[n].value;
        }
        v[s] = acc * inv_b;
    }
    return v;
}

std::vector<std::size_t> zero_variance_columns(const Matrix& X) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < X.cols; ++j) {
        bool constant = true;
        for (std::size_t i = 1; i < X.rows && constant; ++i) constant = X(i, j) == X(0, j);
        if (constant) out.push_back(j);
    }
    return out;
}

Hyperparams hyperparams_or(const nlohmann::json& j, const char* key, ModelKind kind, const Hyperparams& fallback) {
    if (!j.contains(key)) return fallback;
    nlohmann::json merged = hyperparams_to_json(kind, fallback);
    for (auto it = j.at(key).begin(); it != j.at(key).end(); ++it) merged[it.key()] = it.value();
    return hyperparams_from_json(kind, merged);
}

}  // namespace

std::vector<double> tree_importance(const TrainedModel& model) {
    if (!is_tree_model(model.kind)) throw ConfigError("tree importance needs a tree-based model");
    std::vector<double> imp(model.n_features, 0.0);
    for (const auto& tree : model.trees)
        for (const auto& node : tree.nodes)
            if (!node.is_leaf()) imp[static_cast<std::size_t>(node.feature)] += node.gain;
    const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (!(total > 0.0)) throw DataError("model has no split with positive gain; importance is undefined");
    for (double& v : imp) v /= total;
    return imp;
}

ImportanceTable rank_importance(std::span<const double> importance, std::span<const std::string> names) {
    if (names.size() != importance.size()) throw InvariantError("importance and name lists differ in length");
    std::vector<std::size_t> order(importance.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return importance[a] > importance[b]; });
    ImportanceTable t;
    for (std::size_t r = 0; r < order.size(); ++r)
        t.rows.push_back({order[r], names[order[r]], importance[order[r]], r + 1});
    return t;
}

ImportanceTable ensemble_importance(std::span<const TrainedModel> models, std::span<const std::string> names) {
    if (models.empty()) throw ConfigError("ensemble importance needs at least one model");
    std::vector<double> mean(names.size(), 0.0);
    for (const auto& m : models) {
        if (m.n_features != names.size())
            throw DataError("model layout has " + std::to_string(m.n_features) + " features, expected " +
                            std::to_string(names.size()));
        const auto imp = tree_importance(m);
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += imp[j];
    }
    for (double& v : mean) v /= static_cast<double>(models.size());
    return rank_importance(mean, names);
}

std::vector<std::size_t> select_top_k(const ImportanceTable& table, std::size_t k) {
    if (k == 0 || k > table.rows.size())
        throw ConfigError("cannot select " + std::to_string(k) + " features from a table of " +
                          std::to_string(table.rows.size()));
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < k; ++r) out.push_back(table.rows[r].feature);
    return out;
}

ShapleyValues shapley_exact(const MarginFn& margin, std::span<const double> instance, const Matrix& background) {
    const std::size_t k = instance.size();
    check_shapley_inputs(k, instance, background);
    const std::size_t n_masks = std::size_t{1} << k;
    std::vector<double> v(n_masks, 0.0);
    std::vector<double> hybrid(k);
    for (std::size_t s = 0; s < n_masks; ++s) {
        double acc = 0.0;
        for (std::size_t b = 0; b < background.rows; ++b) {
            const auto row = background.row(b);
            for (std::size_t j = 0; j < k; ++j) hybrid[j] = (s >> j) & 1u ? instance[j] : row[j];
            acc += margin(hybrid);
        }
        v[s] = acc / static_cast<double>(background.rows);
    }
    ShapleyValues out;
    out.phi0 = v[0];
    out.phi = phi_from_values(v, k);
    return out;
}

ShapleyValues shapley_exact(const TrainedModel& model, std::span<const double> instance, const Matrix& background) {
    check_shapley_inputs(model.n_features, instance, background);
    if (!is_tree_model(model.kind))
        return shapley_exact([&](std::span<const double> x) { return model.margin(x); }, instance, background);

    // The margin is affine in the tree outputs, so the game splits per tree and
    // features a tree never tests are dummies of its sub-game.
    const bool forest = model.kind == ModelKind::forest;
    const double scale = forest ? 1.0 / static_cast<double>(model.trees.size()) : model.params.learning_rate;
    ShapleyValues out;
    out.phi0 = forest ? 0.0 : model.base_score;
    out.phi.assign(model.n_features, 0.0);
    for (const auto& tree : model.trees) {
        const auto used = tree.used_features();
        const auto v = tree_coalition_values(tree, used, instance, background);
        out.phi0 += scale * v[0];
        const auto phi = phi_from_values(v, used.size());
        for (std::size_t j = 0; j < used.size(); ++j) out.phi[used[j]] += scale * phi[j];
    }
    return out;
}

ExplainSettings::ExplainSettings() {
    forest.n_trees = 100;
    forest.max_depth = 8;
    gbt.learning_rate = 0.1;
    gbt.n_rounds = 100;
    gbt.max_depth = 3;
    gbt2 = gbt;
    gbt2.lambda = 1.0;
}

void ExplainSettings::validate() const {
    validate_hyperparams(ModelKind::forest, forest);
    validate_hyperparams(ModelKind::gbt, gbt);
    validate_hyperparams(ModelKind::gbt2, gbt2);
    if (top_k == 0 || top_k > kMaxShapleyFeatures)
        throw ConfigError("top_k must lie in [1, " + std::to_string(kMaxShapleyFeatures) + "]");
    if (background_cap == 0) throw ConfigError("background_cap must be positive");
}

nlohmann::ordered_json explain_settings_to_json(const ExplainSettings& s) {
    return {{"forest", hyperparams_to_json(ModelKind::forest, s.forest)},
            {"gbt", hyperparams_to_json(ModelKind::gbt, s.gbt)},
            {"gbt2", hyperparams_to_json(ModelKind::gbt2, s.gbt2)},
            {"top_k", s.top_k},
            {"background_cap", s.background_cap},
            {"seed", s.seed}};
}

ExplainSettings explain_settings_from_json(const nlohmann::json& j) {
    ExplainSettings s;
    if (!j.is_object()) throw ConfigError("explain settings must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key() != "forest" && it.key() != "gbt" && it.key() != "gbt2" && it.key() != "top_k" &&
            it.key() != "background_cap" && it.key() != "seed")
            throw ConfigError("unknown explain key '" + it.key() + "'");
    try {
        s.forest = hyperparams_or(j, "forest", ModelKind::forest, s.forest);
        s.gbt = hyperparams_or(j, "gbt", ModelKind::gbt, s.gbt);
        s.gbt2 = hyperparams_or(j, "gbt2", ModelKind::gbt2, s.gbt2);
        if (j.contains("top_k")) s.top_k = j.at("top_k").get<std::size_t>();
        if (j.contains("background_cap")) s.background_cap = j.at("background_cap").get<std::size_t>();
        if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed explain settings: ") + e.what());
    }
    s.validate();
    return s;
}

ExplainResult importance_pipeline(const Dataset& data, std::span<const std::string> names, const SplitPlan& plan,
                                  const ExplainSettings& settings) {
    settings.validate();
    data.validate(true);
    if (names.size() != data.width()) throw DataError("feature names do not match the dataset width");
    if (data.site_ids.size() != data.size()) throw DataError("explain needs a site id per row");

    std::map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < data.size(); ++i) row_of[data.site_ids[i]] = i;
    auto rows_for = [&](const std::vector<std::string>& ids) {
        std::vector<std::size_t> out;
        for (const auto& id : ids) {
            auto it = row_of.find(id);
            if (it == row_of.end()) throw DataError("fold references unknown site '" + id + "'");
            out.push_back(it->second);
        }
        return out;
    };

    ExplainResult result;
    result.dropped_zero_variance = zero_variance_columns(data.X);
    std::vector<std::size_t> kept;
    for (std::size_t j = 0; j < data.width(); ++j)
        if (!std::binary_search(result.dropped_zero_variance.begin(), result.dropped_zero_variance.end(), j))
            kept.push_back(j);
    if (kept.size() < settings.top_k)
        throw DataError("only " + std::to_string(kept.size()) + " features have non-zero variance");
    std::vector<std::string> kept_names;
    for (auto j : kept) kept_names.push_back(names[j]);
    Dataset reduced = data;
    reduced.X = data.X.select_cols(kept);

    // Stage 1: ensemble importance per fold, averaged over folds.
    const std::size_t n_folds = plan.folds.size();
    std::vector<std::vector<double>> fold_importance(n_folds);
    for (std::size_t f = 0; f < n_folds; ++f) {
        const Fold& fold = plan.folds[f];
        std::set<std::string> forbidden(fold.test.begin(), fold.test.end());
        forbidden.insert(fold.validation.begin(), fold.validation.end());
        const LeakageGuard guard(std::move(forbidden));
        const Dataset train = reduced.subset(rows_for(fold.train));
        guard.check(train.site_ids, "ensemble_importance");
        const std::uint64_t seed = derive_seed(settings.seed, 0x1e0, f);
        std::vector<TrainedModel> models{train_model(ModelKind::forest, train, settings.forest, seed),
                                         train_model(ModelKind::gbt, train, settings.gbt, seed),
                                         train_model(ModelKind::gbt2, train, settings.gbt2, seed)};
        const auto table = ensemble_importance(models, kept_names);
        fold_importance[f].assign(kept.size(), 0.0);
        for (const auto& row : table.rows) fold_importance[f][row.feature] = row.importance;
    }
    std::vector<double> stage1(kept.size(), 0.0);
    for (const auto& v : fold_importance)
        for (std::size_t j = 0; j < kept.size(); ++j) stage1[j] += v[j] / static_cast<double>(n_folds);
    result.stage1 = rank_importance(stage1, kept_names);
    for (auto& row : result.stage1.rows) row.feature = kept[row.feature];
    result.selected = select_top_k(result.stage1, settings.top_k);

    // Stages 2 and 3: retrain gbt2 on the selection, explain every test instance.
    ShapTable& shap = result.shap;
    shap.features = result.selected;
    for (auto j : result.selected) shap.names.push_back(names[j]);
    const Dataset projected = [&] {
        Dataset d = data;
        d.X = data.X.select_cols(result.selected);
        return d;
    }();
    for (std::size_t f = 0; f < n_folds; ++f) {
        const Fold& fold = plan.folds[f];
        std::set<std::string> forbidden(fold.test.begin(), fold.test.end());
        forbidden.insert(fold.validation.begin(), fold.validation.end());
        const LeakageGuard guard(std::move(forbidden));
        const auto train_rows = rows_for(fold.train);
        const Dataset train = projected.subset(train_rows);
        guard.check(train.site_ids, "explain_retrain");
        const TrainedModel model =
            train_model(ModelKind::gbt2, train, settings.gbt2, derive_seed(settings.seed, 0x2e0, f));

        std::vector<std::size_t> bg(train.size());
        std::iota(bg.begin(), bg.end(), std::size_t{0});
        if (bg.size() > settings.background_cap) {
            Rng rng(derive_seed(settings.seed, 0xb9, f));
            rng.shuffle(bg);
            bg.resize(settings.background_cap);
            std::sort(bg.begin(), bg.end());
        }
        const Matrix background = train.X.select_rows(bg);

        const Dataset test = projected.subset(rows_for(fold.test));
        std::vector<ShapInstance> explained(test.size());
        parallel_for(test.size(), [&](std::size_t i) {
            ShapInstance& inst = explained[i];
            inst.fold = f;
            inst.site_id = test.site_ids[i];
            inst.label = test.y[i];
            inst.margin = model.margin(test.X.row(i));
            inst.values = shapley_exact(model, test.X.row(i), background);
        });
        for (auto& inst : explained) {
            double total = inst.values.phi0;
            for (double p : inst.values.phi) total += p;
            if (std::abs(total - inst.margin) > 1e-9 * std::max(1.0, std::abs(inst.margin)))
                throw InvariantError("Shapley local accuracy violated for site '" + inst.site_id + "'");
            shap.instances.push_back(std::move(inst));
        }
    }

    std::vector<double> mean_abs(shap.features.size(), 0.0);
    for (const auto& inst : shap.instances)
        for (std::size_t j = 0; j < mean_abs.size(); ++j) mean_abs[j] += std::abs(inst.values.phi[j]);
    if (!shap.instances.empty())
        for (double& v : mean_abs) v /= static_cast<double>(shap.instances.size());
    shap.summary = rank_importance(mean_abs, shap.names);
    for (auto& row : shap.summary.rows) row.feature = shap.features[row.feature];
    return result;
}

std::string importance_csv(const ImportanceTable& table) {
    std::ostringstream out;
    out << "feature,importance,rank\n";
    for (const auto& r : table.rows) out << r.name << ',' << format_double(r.importance) << ',' << r.rank << '\n';
    return out.str();
}

std::string shap_summary_csv(const ShapTable& table) {
    std::ostringstream out;
    out << "feature,mean_abs_shap,rank\n";
    for (const auto& r : table.summary.rows)
        out << r.name << ',' << format_double(r.importance) << ',' << r.rank << '\n';
    return out.str();
}

std::string shap_instances_csv(const ShapTable& table) {
    std::ostringstream out;
    out << "fold,site_id,label,margin,phi0";
    for (const auto& n : table.names) out << ',' << n;
    out << '\n';
    for (const auto& inst : table.instances) {
        out << inst.fold << ',' << inst.site_id << ',' << inst.label << ',' << format_double(inst.margin) << ','
            << format_double(inst.values.phi0);
        for (double p : inst.values.phi) out << ',' << format_double(p);
        out << '\n';
    }
    return out.str();
}

}  // namespace lootwatch

#include "lootwatch/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "lootwatch/metrics.hpp"
#include "lootwatch/split.hpp"

namespace lootwatch {

namespace {

constexpr double kMinChildMass = 1e-12;
constexpr int kLogregMaxIterations = 200;
constexpr double kLogregTolerance = 1e-8;

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

std::vector<double> sample_weights(std::span<const int> y, std::array<double, 2> w) {
    std::vector<double> out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = w[y[i] != 0];
    return out;
}

// ---------------------------------------------------------------------------
// CART builder shared by the forest and both boosting modes.

enum class Criterion { gini, squared, newton };

struct TreeSpec {
    Criterion criterion = Criterion::gini;
    std::optional<int> max_depth;
    std::size_t features_per_node = 0;  // 0 = all
    double lambda = 0.0;
};

class TreeBuilder {
public:
    // u/v are per-sample split statistics; g/h are leaf statistics for Criterion::squared.
    TreeBuilder(const Matrix& X, const TreeSpec& spec, const std::vector<double>& u, const std::vector<double>& v,
                const std::vector<double>* g, const std::vector<double>* h, Rng* rng)
        : X_(X), spec_(spec), u_(u), v_(v), g_(g), h_(h), rng_(rng) {}

    Tree build(std::vector<std::uint32_t> samples) {
        samples_ = std::move(samples);
        tree_.nodes.clear();
        tree_.nodes.emplace_back();
        grow(0, 0, samples_.size(), 0);
        return std::move(tree_);
    }

private:
    struct Sums {
        double u = 0.0, v = 0.0;
    };

    double score(Sums s) const {
        switch (spec_.criterion) {
            case Criterion::gini: {
                const double w = s.u + s.v;
                return w > 0 ? (s.u * s.u + s.v * s.v) / w : 0.0;
            }
            case Criterion::squared: return s.u > 0 ? s.v * s.v / s.u : 0.0;
            case Criterion::newton: return s.u * s.u / (s.v + spec_.lambda);
        }
        return 0.0;
    }

    bool child_ok(Sums s) const {
        switch (spec_.criterion) {
            case Criterion::gini: return s.u + s.v > kMinChildMass;
            case Criterion::squared: return s.u > kMinChildMass;
            case Criterion::newton: return s.v + spec_.lambda > kMinChildMass;
        }
        return false;
    }

    double gain(Sums left, Sums right, Sums parent) const {
        const double g = score(left) + score(right) - score(parent);
        return spec_.criterion == Criterion::newton ? 0.5 * g : g;
    }

    void make_leaf(std::size_t node, std::size_t begin, std::size_t end, Sums total) {
        TreeNode& n = tree_.nodes[node];
        n.feature = -1;
        switch (spec_.criterion) {
            case Criterion::gini: {
                const double w = total.u + total.v;
                n.value = w > 0 ? total.v / w : 0.0;
                n.cover = w;
                break;
            }
            case Criterion::squared: {
                double G = 0.0, H = 0.0;
                for (std::size_t i = begin; i < end; ++i) {
                    G += (*g_)[samples_[i]];
                    H += (*h_)[samples_[i]];
                }
                n.value = H > kMinChildMass ? -G / H : 0.0;
                n.cover = H;
                break;
            }
            case Criterion::newton:
                n.value = -total.u / (total.v + spec_.lambda);
                n.cover = total.v;
                break;
        }
    }

    bool pure(Sums total) const {
        return spec_.criterion == Criterion::gini && (total.u <= 0.0 || total.v <= 0.0);
    }

    std::vector<std::size_t> candidate_features() {
        std::vector<std::size_t> all(X_.cols);
        std::iota(all.begin(), all.end(), std::size_t{0});
        const std::size_t m = spec_.features_per_node;
        if (m == 0 || m >= all.size()) return all;
        // Partial Fisher-Yates, then ascending order for deterministic tie-breaking.
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng_->below(all.size() - i));
            std::swap(all[i], all[j]);
        }
        all.resize(m);
        std::sort(all.begin(), all.end());
        return all;
    }

    void grow(std::size_t node, std::size_t begin, std::size_t end, int depth) {
        Sums total;
        for (std::size_t i = begin; i < end; ++i) {
            total.u += u_[samples_[i]];
            total.v += v_[samples_[i]];
        }
        const bool depth_exhausted = spec_.max_depth && depth >= *spec_.max_depth;
        if (depth_exhausted || end - begin < 2 || pure(total)) {
            make_leaf(node, begin, end, total);
            return;
        }

        int best_feature = -1;
        double best_threshold = 0.0;
        double best_gain = spec_.criterion == Criterion::gini ? -std::numeric_limits<double>::infinity() : 0.0;
        const auto features = candidate_features();
        for (std::size_t f : features) {
            order_.clear();
            for (std::size_t i = begin; i < end; ++i) order_.emplace_back(X_(samples_[i], f), samples_[i]);
            std::sort(order_.begin(), order_.end());
            Sums left;
            for (std::size_t i = 0; i + 1 < order_.size(); ++i) {
                left.u += u_[order_[i].second];
                left.v += v_[order_[i].second];
                const double x0 = order_[i].first;
                const double x1 = order_[i + 1].first;
                if (!(x0 < x1)) continue;
                const Sums right{total.u - left.u, total.v - left.v};
                if (!child_ok(left) || !child_ok(right)) continue;
                const double g = gain(left, right, total);
                if (g > best_gain) {
                    best_gain = g;
                    best_feature = static_cast<int>(f);
                    double t = x0 + (x1 - x0) / 2.0;
                    if (!(t < x1)) t = x0;
                    best_threshold = t;
                }
            }
        }
        if (best_feature < 0) {
            make_leaf(node, begin, end, total);
            return;
        }

        auto mid_it = std::stable_partition(samples_.begin() + static_cast<std::ptrdiff_t>(begin),
                                            samples_.begin() + static_cast<std::ptrdiff_t>(end),
                                            [&](std::uint32_t s) { return X_(s, best_feature) <= best_threshold; });
        const std::size_t mid = static_cast<std::size_t>(mid_it - samples_.begin());

        // Internal nodes keep the value and cover they would have had as leaves.
        make_leaf(node, begin, end, total);
        const int left_id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        const int right_id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        {
            TreeNode& n = tree_.nodes[node];
            n.feature = best_feature;
            n.threshold = best_threshold;
            n.left = left_id;
            n.right = right_id;
            n.gain = std::max(best_gain, 0.0);
        }
        grow(static_cast<std::size_t>(left_id), begin, mid, depth + 1);
        grow(static_cast<std::size_t>(right_id), mid, end, depth + 1);
    }

    const Matrix& X_;
    TreeSpec spec_;
    const std::vector<double>& u_;
    const std::vector<double>& v_;
    const std::vector<double>* g_;
    const std::vector<double>* h_;
    Rng* rng_;
    std::vector<std::uint32_t> samples_;
    std::vector<std::pair<double, std::uint32_t>> order_;
    Tree tree_;
};

void check_weights(std::array<double, 2> w) {
    if (!(w[0] > 0 && w[1] > 0 && std::isfinite(w[0]) && std::isfinite(w[1])))
        throw ConfigError("class weights must be positive and finite");
}

}  // namespace

// ---------------------------------------------------------------------------

void Dataset::validate(bool require_both_classes) const {
    if (X.rows != y.size()) throw DataError("dataset has " + std::to_string(X.rows) + " rows but " +
                                            std::to_string(y.size()) + " labels");
    if (!site_ids.empty() && site_ids.size() != y.size()) throw DataError("dataset site_ids do not match rows");
    for (double v : X.data)
        if (!std::isfinite(v)) throw DataError("dataset contains a non-finite feature value");
    std::size_t pos = 0;
    for (int label : y) {
        if (label != 0 && label != 1) throw DataError("labels must be 0 or 1");
        pos += static_cast<std::size_t>(label);
    }
    if (require_both_classes && (pos == 0 || pos == y.size()))
        throw DataError("training data needs both classes");
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.X = X.select_rows(rows);
    for (auto r : rows) {
        out.y.push_back(y[r]);
        if (!site_ids.empty()) out.site_ids.push_back(site_ids[r]);
    }
    return out;
}

std::string_view model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::logreg: return "logreg";
        case ModelKind::forest: return "forest";
        case ModelKind::gbt: return "gbt";
        case ModelKind::gbt2: return "gbt2";
    }
    return "logreg";
}

ModelKind parse_model_kind(std::string_view name) {
    for (auto k : {ModelKind::logreg, ModelKind::forest, ModelKind::gbt, ModelKind::gbt2})
        if (model_kind_name(k) == name) return k;
    throw ConfigError("unknown model kind '" + std::string(name) + "' (expected logreg|forest|gbt|gbt2)");
}

bool is_tree_model(ModelKind k) { return k != ModelKind::logreg; }

void validate_hyperparams(ModelKind kind, const Hyperparams& hp) {
    switch (kind) {
        case ModelKind::logreg:
            if (!(hp.C > 0.0) || !std::isfinite(hp.C)) throw ConfigError("logreg C must be positive");
            return;
        case ModelKind::forest:
            if (hp.n_trees < 1) throw ConfigError("forest needs at least one tree");
            if (hp.max_depth && *hp.max_depth < 1) throw ConfigError("max_depth must be >= 1");
            return;
        case ModelKind::gbt:
        case ModelKind::gbt2:
            if (!(hp.learning_rate > 0.0 && hp.learning_rate <= 1.0))
                throw ConfigError("learning_rate must lie in (0, 1]");
            if (hp.n_rounds < 1) throw ConfigError("boosting needs at least one round");
            if (hp.max_depth && *hp.max_depth < 1) throw ConfigError("max_depth must be >= 1");
            if (!(hp.lambda >= 0.0) || !std::isfinite(hp.lambda)) throw ConfigError("lambda must be >= 0");
            return;
    }
}

nlohmann::ordered_json hyperparams_to_json(ModelKind kind, const Hyperparams& hp) {
    nlohmann::ordered_json j;
    auto depth = [&] { return hp.max_depth ? nlohmann::ordered_json(*hp.max_depth) : nlohmann::ordered_json(nullptr); };
    switch (kind) {
        case ModelKind::logreg: j["C"] = hp.C; break;
        case ModelKind::forest:
            j["n_trees"] = hp.n_trees;
            j["max_depth"] = depth();
            break;
        case ModelKind::gbt:
        case ModelKind::gbt2:
            j["learning_rate"] = hp.learning_rate;
            j["n_rounds"] = hp.n_rounds;
            j["max_depth"] = depth();
            if (kind == ModelKind::gbt2) j["lambda"] = hp.lambda;
            break;
    }
    return j;
}

Hyperparams hyperparams_from_json(ModelKind kind, const nlohmann::json& j) {
    Hyperparams hp;
    try {
        if (j.contains("C")) hp.C = j.at("C").get<double>();
        if (j.contains("n_trees")) hp.n_trees = j.at("n_trees").get<int>();
        if (j.contains("max_depth")) {
            if (j.at("max_depth").is_null()) hp.max_depth.reset();
            else hp.max_depth = j.at("max_depth").get<int>();
        }
        if (j.contains("learning_rate")) hp.learning_rate = j.at("learning_rate").get<double>();
        if (j.contains("n_rounds")) hp.n_rounds = j.at("n_rounds").get<int>();
        if (j.contains("lambda")) hp.lambda = j.at("lambda").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed hyperparameters: ") + e.what());
    }
    validate_hyperparams(kind, hp);
    return hp;
}

std::vector<Hyperparams> default_grid(ModelKind kind) {
    std::vector<Hyperparams> grid;
    switch (kind) {
        case ModelKind::logreg:
            for (double c : {0.01, 0.1, 1.0, 10.0}) {
                Hyperparams hp;
                hp.C = c;
                grid.push_back(hp);
            }
            break;
        case ModelKind::forest:
            for (int trees : {100, 300})
                for (std::optional<int> depth : {std::optional<int>(8), std::optional<int>(16), std::optional<int>()}) {
                    Hyperparams hp;
                    hp.n_trees = trees;
                    hp.max_depth = depth;
                    grid.push_back(hp);
                }
            break;
        case ModelKind::gbt:
        case ModelKind::gbt2:
            for (double lr : {0.05, 0.1})
                for (int rounds : {100, 300})
                    for (int depth : {3, 5}) {
                        const std::vector<double> lambdas =
                            kind == ModelKind::gbt2 ? std::vector<double>{0.0, 1.0} : std::vector<double>{0.0};
                        for (double lambda : lambdas) {
                            Hyperparams hp;
                            hp.learning_rate = lr;
                            hp.n_rounds = rounds;
                            hp.max_depth = depth;
                            hp.lambda = lambda;
                            grid.push_back(hp);
                        }
                    }
            break;
    }
    return grid;
}

std::vector<Hyperparams> grid_from_json(ModelKind kind, const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("grid must be an object of value lists");
    static const std::vector<std::string> keys{"C", "n_trees", "max_depth", "learning_rate", "n_rounds", "lambda"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
            throw ConfigError("unknown grid key '" + it.key() + "'");
        if (!it.value().is_array() || it.value().empty())
            throw ConfigError("grid key '" + it.key() + "' must be a non-empty list");
    }
    std::vector<nlohmann::json> points{nlohmann::json::object()};
    for (const auto& key : keys) {
        if (!j.contains(key)) continue;
        std::vector<nlohmann::json> next;
        for (const auto& p : points)
            for (const auto& value : j.at(key)) {
                auto q = p;
                q[key] = value;
                next.push_back(q);
            }
        points = std::move(next);
    }
    std::vector<Hyperparams> grid;
    for (const auto& p : points) grid.push_back(hyperparams_from_json(kind, p));
    return grid;
}

int Tree::leaf_index(std::span<const double> x) const {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
        const TreeNode& n = nodes[static_cast<std::size_t>(i)];
        i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return i;
}

std::vector<std::size_t> Tree::used_features() const {
    std::vector<std::size_t> out;
    for (const auto& n : nodes)
        if (!n.is_leaf()) out.push_back(static_cast<std::size_t>(n.feature));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

double TrainedModel::margin(std::span<const double> x) const {
    if (x.size() != n_features)
        throw DataError("model expects " + std::to_string(n_features) + " features, got " + std::to_string(x.size()));
    switch (kind) {
        case ModelKind::logreg: {
            double z = intercept;
            for (std::size_t j = 0; j < coef.size(); ++j) z += coef[j] * (x[j] - feature_mean[j]) / feature_scale[j];
            return z;
        }
        case ModelKind::forest: {
            double s = 0.0;
            for (const auto& t : trees) s += t.predict(x);
            return s / static_cast<double>(trees.size());
        }
        case ModelKind::gbt:
        case ModelKind::gbt2: {
            double s = 0.0;
            for (const auto& t : trees) s += t.predict(x);
            return base_score + params.learning_rate * s;
        }
    }
    return 0.0;
}

double TrainedModel::predict_proba(std::span<const double> x) const {
    const double m = margin(x);
    return kind == ModelKind::forest ? m : sigmoid(m);
}

std::array<double, 2> class_weights(std::span<const int> y) {
    std::size_t pos = 0;
    for (int v : y) pos += v != 0;
    const std::size_t n = y.size();
    if (pos == 0 || pos == n) throw DataError("class weights need both classes present");
    const double dn = static_cast<double>(n);
    return {dn / (2.0 * static_cast<double>(n - pos)), dn / (2.0 * static_cast<double>(pos))};
}

// ---------------------------------------------------------------------------

TrainedModel train_logreg(const Dataset& ds, double C, std::array<double, 2> weights) {
    ds.validate(false);
    check_weights(weights);
    if (!(C > 0.0)) throw ConfigError("logreg C must be positive");
    const std::size_t n = ds.size();
    const std::size_t d = ds.width();
    if (n == 0) throw DataError("logreg needs at least one row");

    TrainedModel model;
    model.kind = ModelKind::logreg;
    model.n_features = d;
    model.class_weights = weights;
    model.params.C = C;
    model.feature_mean.assign(d, 0.0);
    model.feature_scale.assign(d, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += ds.X(i, j);
        m /= static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) ss += (ds.X(i, j) - m) * (ds.X(i, j) - m);
        const double sd = std::sqrt(ss / static_cast<double>(n));
        model.feature_mean[j] = m;
        model.feature_scale[j] = sd > 1e-12 ? sd : 1.0;
    }

    Eigen::MatrixXd Z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d + 1));
    for (std::size_t i = 0; i < n; ++i) {
        Z(static_cast<Eigen::Index>(i), 0) = 1.0;
        for (std::size_t j = 0; j < d; ++j)
            Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1)) =
                (ds.X(i, j) - model.feature_mean[j]) / model.feature_scale[j];
    }
    Eigen::VectorXd y(static_cast<Eigen::Index>(n)), w(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        y(static_cast<Eigen::Index>(i)) = ds.y[i];
        w(static_cast<Eigen::Index>(i)) = weights[ds.y[i] != 0];
    }
    const double penalty = 1.0 / C;
    const auto dim = static_cast<Eigen::Index>(d + 1);

    auto loss = [&](const Eigen::VectorXd& theta) {
        const Eigen::VectorXd z = Z * theta;
        double l = 0.0;
        for (Eigen::Index i = 0; i < z.size(); ++i) l += w(i) * (softplus(z(i)) - y(i) * z(i));
        return l + 0.5 * penalty * theta.tail(dim - 1).squaredNorm();
    };
    auto gradient = [&](const Eigen::VectorXd& theta, Eigen::VectorXd* p_out) {
        const Eigen::VectorXd z = Z * theta;
        Eigen::VectorXd p(z.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) p(i) = sigmoid(z(i));
        Eigen::VectorXd g = Z.transpose() * (w.cwiseProduct(p - y));
        g.tail(dim - 1) += penalty * theta.tail(dim - 1);
        if (p_out) *p_out = std::move(p);
        return g;
    };

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd p;
    Eigen::VectorXd g = gradient(theta, &p);
    double f = loss(theta);
    int it = 0;
    for (; it < kLogregMaxIterations && g.norm() > kLogregTolerance; ++it) {
        const Eigen::VectorXd s = w.cwiseProduct(p.cwiseProduct(Eigen::VectorXd::Ones(p.size()) - p));
        Eigen::MatrixXd H = Z.transpose() * s.asDiagonal() * Z;
        H.diagonal().tail(dim - 1).array() += penalty;
        Eigen::VectorXd step = H.ldlt().solve(-g);
        if (!step.allFinite()) step = -g;
        const double slope = g.dot(step);
        double t = 1.0;
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
            const Eigen::VectorXd cand = theta + t * step;
            const double fc = loss(cand);
            Eigen::VectorXd pc;
            const Eigen::VectorXd gc = gradient(cand, &pc);
            // Near the optimum the loss change drowns in rounding; a smaller gradient still counts as progress.
            if (fc <= f + 1e-4 * t * slope || gc.norm() < g.norm()) {
                theta = cand;
                f = fc;
                g = gc;
                p = std::move(pc);
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    model.iterations = it;
    model.gradient_norm = g.norm();
    if (model.gradient_norm > kLogregTolerance)
        throw DataError("logistic regression did not converge after " + std::to_string(it) +
                        " iterations (gradient norm " + format_double(model.gradient_norm) + ")");
    model.intercept = theta(0);
    model.coef.resize(d);
    for (std::size_t j = 0; j < d; ++j) model.coef[j] = theta(static_cast<Eigen::Index>(j + 1));
    return model;
}

TrainedModel train_forest(const Dataset& ds, int n_trees, std::optional<int> max_depth, std::uint64_t seed,
                          std::array<double, 2> weights) {
    ds.validate(false);
    check_weights(weights);
    Hyperparams hp;
    hp.n_trees = n_trees;
    hp.max_depth = max_depth;
    validate_hyperparams(ModelKind::forest, hp);
    const std::size_t n = ds.size();
    if (n == 0) throw DataError("forest needs at least one row");

    TrainedModel model;
    model.kind = ModelKind::forest;
    model.n_features = ds.width();
    model.class_weights = weights;
    model.params = hp;
    model.seed = seed;
    model.trees.resize(static_cast<std::size_t>(n_trees));

    TreeSpec spec;
    spec.criterion = Criterion::gini;
    spec.max_depth = max_depth;
    spec.features_per_node = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(ds.width()))));

    parallel_for(static_cast<std::size_t>(n_trees), [&](std::size_t t) {
        Rng rng(derive_seed(seed, 0xf0e57, t));
        std::vector<double> count(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) count[rng.below(n)] += 1.0;
        std::vector<double> u(n), v(n);
        std::vector<std::uint32_t> samples;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = count[i] * weights[ds.y[i] != 0];
            u[i] = ds.y[i] ? 0.0 : w;
            v[i] = ds.y[i] ? w : 0.0;
            if (count[i] > 0) samples.push_back(static_cast<std::uint32_t>(i));
        }
        TreeBuilder builder(ds.X, spec, u, v, nullptr, nullptr, &rng);
        model.trees[t] = builder.build(std::move(samples));
    });
    return model;
}

TrainedModel train_gbt(const Dataset& ds, double learning_rate, int n_rounds, std::optional<int> max_depth,
                       double lambda, bool second_order, std::uint64_t seed, std::array<double, 2> weights) {
    ds.validate(true);
    check_weights(weights);
    const ModelKind kind = second_order ? ModelKind::gbt2 : ModelKind::gbt;
    Hyperparams hp;
    hp.learning_rate = learning_rate;
    hp.n_rounds = n_rounds;
    hp.max_depth = max_depth;
    hp.lambda = second_order ? lambda : 0.0;
    validate_hyperparams(kind, hp);
    const std::size_t n = ds.size();

    TrainedModel model;
    model.kind = kind;
    model.n_features = ds.width();
    model.class_weights = weights;
    model.params = hp;
    model.seed = seed;

    const auto w = sample_weights(ds.y, weights);
    double w_pos = 0.0, w_neg = 0.0;
    for (std::size_t i = 0; i < n; ++i) (ds.y[i] ? w_pos : w_neg) += w[i];
    model.base_score = std::log(w_pos / w_neg);

    TreeSpec spec;
    spec.criterion = second_order ? Criterion::newton : Criterion::squared;
    spec.max_depth = max_depth;
    spec.lambda = hp.lambda;

    std::vector<double> raw(n, model.base_score);
    std::vector<double> g(n), h(n), u(n), v(n);
    std::vector<std::uint32_t> all(n);
    std::iota(all.begin(), all.end(), 0u);
    Rng rng(derive_seed(seed, 0xb005));
    for (int round = 0; round < n_rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(raw[i]);
            g[i] = w[i] * (p - ds.y[i]);
            h[i] = w[i] * p * (1.0 - p);
            if (second_order) {
                u[i] = g[i];
                v[i] = h[i];
            } else {
                u[i] = w[i];
                v[i] = w[i] * (ds.y[i] - p);
            }
        }
        TreeBuilder builder(ds.X, spec, u, v, &g, &h, &rng);
        Tree tree = builder.build(all);
        for (std::size_t i = 0; i < n; ++i) raw[i] += learning_rate * tree.predict(ds.X.row(i));
        model.trees.push_back(std::move(tree));
    }
    return model;
}

TrainedModel train_model(ModelKind kind, const Dataset& ds, const Hyperparams& hp, std::uint64_t seed) {
    validate_hyperparams(kind, hp);
    ds.validate(true);
    const auto w = class_weights(ds.y);
    switch (kind) {
        case ModelKind::logreg: {
            auto m = train_logreg(ds, hp.C, w);
            m.seed = seed;
            return m;
        }
        case ModelKind::forest: return train_forest(ds, hp.n_trees, hp.max_depth, seed, w);
        case ModelKind::gbt: return train_gbt(ds, hp.learning_rate, hp.n_rounds, hp.max_depth, 0.0, false, seed, w);
        case ModelKind::gbt2:
            return train_gbt(ds, hp.learning_rate, hp.n_rounds, hp.max_depth, hp.lambda, true, seed, w);
    }
    throw InvariantError("unreachable model kind");
}

std::vector<double> predict_proba(const TrainedModel& model, const Matrix& X) {
    if (X.cols != model.n_features)
        throw DataError("model expects " + std::to_string(model.n_features) + " features, got " + std::to_string(X.cols));
    std::vector<double> out(X.rows);
    for (std::size_t i = 0; i < X.rows; ++i) out[i] = model.predict_proba(X.row(i));
    return out;
}

std::vector<double> predict_margin(const TrainedModel& model, const Matrix& X) {
    if (X.cols != model.n_features)
        throw DataError("model expects " + std::to_string(model.n_features) + " features, got " + std::to_string(X.cols));
    std::vector<double> out(X.rows);
    for (std::size_t i = 0; i < X.rows; ++i) out[i] = model.margin(X.row(i));
    return out;
}

double weighted_log_loss(const TrainedModel& model, const Dataset& ds) {
    if (model.kind == ModelKind::forest) throw ConfigError("log loss is defined on logit models");
    double l = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double z = model.margin(ds.X.row(i));
        l += model.class_weights[ds.y[i] != 0] * (softplus(z) - ds.y[i] * z);
    }
    return l;
}

GridSearchResult grid_search(ModelKind kind, const Dataset& ds, std::span<const Hyperparams> grid, int k,
                             std::uint64_t seed, const LeakageGuard& guard) {
    if (grid.empty()) throw ConfigError("grid is empty");
    for (const auto& hp : grid) validate_hyperparams(kind, hp);
    guard.check(ds.site_ids, "grid_search");
    ds.validate(true);

    GridSearchResult result;
    result.mean_f1.assign(grid.size(), std::nullopt);
    if (grid.size() == 1) {
        result.best_index = 0;
        result.best = grid[0];
        result.model = train_model(kind, ds, grid[0], seed);
        return result;
    }

    const auto fold_of = stratified_fold_ids(ds.y, k, derive_seed(seed, 0x9c1d));
    std::vector<std::vector<std::size_t>> train_rows(static_cast<std::size_t>(k)), test_rows(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (int f = 0; f < k; ++f) (fold_of[i] == f ? test_rows : train_rows)[static_cast<std::size_t>(f)].push_back(i);

    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        double sum = 0.0;
        std::optional<std::string> skip;
        for (int f = 0; f < k && !skip; ++f) {
            const Dataset tr = ds.subset(train_rows[static_cast<std::size_t>(f)]);
            const Dataset te = ds.subset(test_rows[static_cast<std::size_t>(f)]);
            auto single_class = [](const Dataset& d) {
                return std::all_of(d.y.begin(), d.y.end(), [&](int v) { return v == d.y.front(); });
            };
            if (tr.size() == 0 || te.size() == 0 || single_class(tr) || single_class(te)) {
                skip = "grid point " + std::to_string(gi) + ": inner fold " + std::to_string(f) + " has a single class";
                break;
            }
            try {
                const auto m = train_model(kind, tr, grid[gi], seed);
                const auto scores = predict_proba(m, te.X);
                sum += compute_metrics(te.y, scores).f1;
            } catch (const DataError& e) {
                skip = "grid point " + std::to_string(gi) + ": " + e.what();
            }
        }
        if (skip) {
            result.skipped.push_back(*skip);
            continue;
        }
        result.mean_f1[gi] = sum / k;
    }

    std::optional<std::size_t> best;
    for (std::size_t gi = 0; gi < grid.size(); ++gi)
        if (result.mean_f1[gi] && (!best || *result.mean_f1[gi] > *result.mean_f1[*best])) best = gi;
    if (!best) throw DataError("every grid point was skipped during inner CV");
    result.best_index = *best;
    result.best = grid[*best];
    result.model = train_model(kind, ds, result.best, seed);
    return result;
}

// ---------------------------------------------------------------------------

nlohmann::ordered_json model_to_json(const TrainedModel& m, std::string_view feature_layout) {
    nlohmann::ordered_json j;
    j["kind"] = model_kind_name(m.kind);
    j["feature_layout"] = feature_layout;
    j["n_features"] = m.n_features;
    j["seed"] = m.seed;
    j["params"] = hyperparams_to_json(m.kind, m.params);
    j["class_weights"] = m.class_weights;
    if (m.kind == ModelKind::logreg) {
        j["intercept"] = m.intercept;
        j["coef"] = m.coef;
        j["feature_mean"] = m.feature_mean;
        j["feature_scale"] = m.feature_scale;
        j["iterations"] = m.iterations;
        j["gradient_norm"] = m.gradient_norm;
    } else {
        j["base_score"] = m.base_score;
        auto& trees = j["trees"] = nlohmann::ordered_json::array();
        for (const auto& t : m.trees) {
            auto nodes = nlohmann::ordered_json::array();
            for (const auto& n : t.nodes)
                nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value, n.gain, n.cover});
            trees.push_back(std::move(nodes));
        }
    }
    return j;
}

TrainedModel model_from_json(const nlohmann::json& j) {
    TrainedModel m;
    try {
        m.kind = parse_model_kind(j.at("kind").get<std::string>());
        m.n_features = j.at("n_features").get<std::size_t>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.params = hyperparams_from_json(m.kind, j.at("params"));
        m.class_weights = j.at("class_weights").get<std::array<double, 2>>();
        if (m.kind == ModelKind::logreg) {
            m.intercept = j.at("intercept").get<double>();
            m.coef = j.at("coef").get<std::vector<double>>();
            m.feature_mean = j.at("feature_mean").get<std::vector<double>>();
            m.feature_scale = j.at("feature_scale").get<std::vector<double>>();
            m.iterations = j.at("iterations").get<int>();
            m.gradient_norm = j.at("gradient_norm").get<double>();
        } else {
            m.base_score = j.at("base_score").get<double>();
            for (const auto& t : j.at("trees")) {
                Tree tree;
                for (const auto& n : t) {
                    TreeNode node;
                    node.feature = n.at(0).get<int>();
                    node.threshold = n.at(1).get<double>();
                    node.left = n.at(2).get<int>();
                    node.right = n.at(3).get<int>();
                    node.value = n.at(4).get<double>();
                    node.gain = n.at(5).get<double>();
                    node.cover = n.at(6).get<double>();
                    if (node.feature >= static_cast<int>(m.n_features))
                        throw DataError("tree feature index out of range");
                    tree.nodes.push_back(node);
                }
                m.trees.push_back(std::move(tree));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model file: ") + e.what());
    }
    return m;
}

}  // namespace lootwatch

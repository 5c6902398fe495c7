#include <doctest.h>

#include <cmath>

#include "lootwatch/models.hpp"

using namespace lootwatch;

namespace {

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

template <class F>
double golden_min(F f, double lo, double hi) {
    const double phi = (std::sqrt(5.0) - 1) / 2;
    double a = lo, b = hi;
    double c = b - phi * (b - a), d = a + phi * (b - a);
    double fc = f(c), fd = f(d);
    for (int i = 0; i < 200; ++i) {
        if (fc < fd) {
            b = d, d = c, fd = fc;
            c = b - phi * (b - a), fc = f(c);
        } else {
            a = c, c = d, fc = fd;
            d = a + phi * (b - a), fd = f(d);
        }
    }
    return (a + b) / 2;
}

Dataset blobs(std::size_t n, std::size_t d, double sep, Rng& rng, double pos_rate = 0.5) {
    Dataset ds;
    ds.X = Matrix(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const int y = rng.uniform() < pos_rate ? 1 : 0;
        ds.y.push_back(y);
        ds.site_ids.push_back("s" + std::to_string(i));
        for (std::size_t j = 0; j < d; ++j) ds.X(i, j) = rng.normal() + (j == 0 ? sep * y : 0.0);
    }
    return ds;
}

double auc_brute(const std::vector<int>& y, const std::vector<double>& s) {
    double good = 0, pairs = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t j = 0; j < y.size(); ++j)
            if (y[i] == 1 && y[j] == 0) {
                pairs += 1;
                good += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
            }
    return good / pairs;
}

struct Stump {
    std::size_t feature = 0;
    double threshold = 0;
    double left = 0, right = 0;
};

// Exhaustive depth-1 search over (feature, midpoint) with a caller-supplied split
// score and leaf rule. Strictly greater wins, so ties go to the first candidate.
template <class Score, class Leaf>
Stump best_stump(const Dataset& ds, Score score, Leaf leaf) {
    Stump best;
    double best_gain = -1e300;
    for (std::size_t j = 0; j < ds.width(); ++j) {
        std::vector<double> vals;
        for (std::size_t i = 0; i < ds.size(); ++i) vals.push_back(ds.X(i, j));
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
            const double t = (vals[k] + vals[k + 1]) / 2;
            std::vector<std::size_t> L, R;
            for (std::size_t i = 0; i < ds.size(); ++i) (ds.X(i, j) <= t ? L : R).push_back(i);
            const double g = score(L) + score(R);
            if (g > best_gain) {
                best_gain = g;
                best = {j, t, leaf(L), leaf(R)};
            }
        }
    }
    return best;
}

}  // namespace

TEST_CASE("model kinds and hyperparameters") {
    for (auto k : {ModelKind::logreg, ModelKind::forest, ModelKind::gbt, ModelKind::gbt2})
        CHECK(parse_model_kind(model_kind_name(k)) == k);
    CHECK_THROWS_AS(parse_model_kind("svm"), ConfigError);
    CHECK_FALSE(is_tree_model(ModelKind::logreg));
    CHECK(is_tree_model(ModelKind::gbt2));
    Hyperparams hp;
    hp.n_trees = 0;
    CHECK_THROWS_AS(validate_hyperparams(ModelKind::forest, hp), ConfigError);
    hp = {};
    hp.C = -1;
    CHECK_THROWS_AS(validate_hyperparams(ModelKind::logreg, hp), ConfigError);
    hp = {};
    hp.learning_rate = 0;
    CHECK_THROWS_AS(validate_hyperparams(ModelKind::gbt, hp), ConfigError);
    CHECK(default_grid(ModelKind::logreg).size() == 4);
    CHECK(default_grid(ModelKind::gbt2).size() == 2 * default_grid(ModelKind::gbt).size());
}

TEST_CASE("grid from JSON is a Cartesian product") {
    const auto g = grid_from_json(ModelKind::forest, nlohmann::json::parse(R"({"n_trees":[10,20],"max_depth":[2,null,4]})"));
    REQUIRE(g.size() == 6);
    CHECK(g[0].n_trees == 10);
    CHECK(g[0].max_depth == 2);
    CHECK_FALSE(g[1].max_depth.has_value());
    CHECK(g[5].n_trees == 20);
    CHECK_THROWS_AS(grid_from_json(ModelKind::logreg, nlohmann::json::parse(R"({"gamma":[1]})")), ConfigError);
    CHECK_THROWS_AS(grid_from_json(ModelKind::logreg, nlohmann::json::parse(R"({"C":[]})")), ConfigError);
    const auto hp = hyperparams_from_json(ModelKind::gbt2, hyperparams_to_json(ModelKind::gbt2, g[0]));
    CHECK(hp.max_depth == g[0].max_depth);
}

TEST_CASE("class weights are inverse frequency") {
    const std::vector<int> y{1, 0, 0, 0};
    const auto w = class_weights(y);
    CHECK(w[0] == doctest::Approx(4.0 / 6.0));
    CHECK(w[1] == doctest::Approx(2.0));
}

TEST_CASE("single-feature logreg matches a golden-section minimizer") {
    Rng rng(77);
    Dataset ds = blobs(80, 1, 1.2, rng, 0.3);
    const double C = 0.5;
    const auto w = class_weights(ds.y);
    const auto m = train_logreg(ds, C, w);

    double mean = 0, ss = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) mean += ds.X(i, 0);
    mean /= double(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) ss += (ds.X(i, 0) - mean) * (ds.X(i, 0) - mean);
    const double sd = std::sqrt(ss / double(ds.size()));
    auto objective = [&](double b, double a) {
        double l = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const double z = b + a * (ds.X(i, 0) - mean) / sd;
            l += w[ds.y[i]] * (softplus(z) - ds.y[i] * z);
        }
        return l + 0.5 * a * a / C;
    };
    auto best_bias = [&](double a) { return golden_min([&](double b) { return objective(b, a); }, -20, 20); };
    const double a = golden_min([&](double s) { return objective(best_bias(s), s); }, -20, 20);
    const double b = best_bias(a);
    for (double x : {-2.0, 0.0, 0.7, 3.0}) {
        const std::vector<double> row{x};
        CHECK(m.margin(row) == doctest::Approx(b + a * (x - mean) / sd).epsilon(1e-5));
    }
    CHECK(m.gradient_norm <= 1e-8);
}

TEST_CASE("logreg handles constant columns and separable data") {
    Rng rng(4);
    Dataset ds = blobs(60, 3, 3.0, rng);
    for (std::size_t i = 0; i < ds.size(); ++i) ds.X(i, 2) = 5.0;
    const auto m = train_model(ModelKind::logreg, ds, Hyperparams{}, 1);
    CHECK(m.feature_scale[2] == 1.0);
    CHECK(std::isfinite(m.intercept));
    Dataset sep = ds;
    for (std::size_t i = 0; i < sep.size(); ++i) sep.X(i, 0) = sep.y[i] ? 10.0 + rng.uniform() : -10.0 - rng.uniform();
    Hyperparams weak;
    weak.C = 1e4;
    const auto ms = train_model(ModelKind::logreg, sep, weak, 1);
    const auto p = predict_proba(ms, sep.X);
    CHECK(auc_brute(sep.y, p) == 1.0);
    for (double v : p) CHECK(std::isfinite(v));
}

TEST_CASE("first-round second-order tree equals the exhaustive stump") {
    Rng rng(13);
    const Dataset ds = blobs(50, 3, 1.0, rng, 0.4);
    const auto cw = class_weights(ds.y);
    const double lambda = 1.0, eta = 0.3;
    const auto model = train_gbt(ds, eta, 1, 1, lambda, true, 9, cw);

    double wp = 0, wn = 0;
    for (int y : ds.y) (y ? wp : wn) += cw[y];
    const double base = std::log(wp / wn);
    std::vector<double> g(ds.size()), h(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double p = sig(base);
        g[i] = cw[ds.y[i]] * (p - ds.y[i]);
        h[i] = cw[ds.y[i]] * p * (1 - p);
    }
    auto sums = [&](const std::vector<std::size_t>& idx) {
        double G = 0, H = 0;
        for (auto i : idx) G += g[i], H += h[i];
        return std::pair{G, H};
    };
    const Stump s = best_stump(
        ds, [&](const auto& idx) { auto [G, H] = sums(idx); return G * G / (H + lambda); },
        [&](const auto& idx) { auto [G, H] = sums(idx); return -G / (H + lambda); });

    CHECK(model.base_score == doctest::Approx(base));
    REQUIRE(model.trees.size() == 1);
    const auto& root = model.trees[0].nodes[0];
    CHECK(root.feature == int(s.feature));
    CHECK(root.threshold == doctest::Approx(s.threshold));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double expect = base + eta * (ds.X(i, s.feature) <= s.threshold ? s.left : s.right);
        CHECK(model.margin(ds.X.row(i)) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("first-round first-order tree equals the weighted least-squares stump") {
    Rng rng(14);
    const Dataset ds = blobs(40, 2, 1.5, rng, 0.5);
    const auto cw = class_weights(ds.y);
    const auto model = train_gbt(ds, 0.5, 1, 1, 0.0, false, 3, cw);
    double wp = 0, wn = 0;
    for (int y : ds.y) (y ? wp : wn) += cw[y];
    const double p = sig(std::log(wp / wn));
    auto score = [&](const auto& idx) {
        double W = 0, R = 0;
        for (auto i : idx) W += cw[ds.y[i]], R += cw[ds.y[i]] * (ds.y[i] - p);
        return R * R / W;
    };
    auto leaf = [&](const auto& idx) {
        double G = 0, H = 0;
        for (auto i : idx) G += cw[ds.y[i]] * (p - ds.y[i]), H += cw[ds.y[i]] * p * (1 - p);
        return -G / H;
    };
    const Stump s = best_stump(ds, score, leaf);
    const auto& root = model.trees[0].nodes[0];
    CHECK(root.feature == int(s.feature));
    CHECK(root.threshold == doctest::Approx(s.threshold));
    const auto& left = model.trees[0].nodes[std::size_t(root.left)];
    CHECK(left.value == doctest::Approx(s.left));
}

TEST_CASE("boosting lowers the weighted training loss round by round") {
    Rng rng(15);
    const Dataset ds = blobs(120, 4, 1.0, rng);
    const auto cw = class_weights(ds.y);
    double prev = 1e300;
    for (int rounds : {1, 5, 20, 60}) {
        const auto m = train_gbt(ds, 0.1, rounds, 3, 1.0, true, 2, cw);
        const double l = weighted_log_loss(m, ds);
        CHECK(l < prev);
        prev = l;
    }
}

TEST_CASE("forest learns XOR that no single linear boundary separates") {
    Dataset ds;
    ds.X = Matrix(0, 2);
    Rng rng(2);
    for (int copy = 0; copy < 25; ++copy)
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
                ds.X.append_row(std::vector<double>{a + 0.1 * rng.uniform(), b + 0.1 * rng.uniform()});
                ds.y.push_back(a ^ b);
            }
    Hyperparams hp;
    hp.n_trees = 50;
    hp.max_depth = 4;
    const auto forest = train_model(ModelKind::forest, ds, hp, 5);
    const auto p = predict_proba(forest, ds.X);
    for (std::size_t i = 0; i < ds.size(); ++i) CHECK((p[i] > 0.5) == (ds.y[i] == 1));
    const auto lin = train_model(ModelKind::logreg, ds, Hyperparams{}, 5);
    CHECK(auc_brute(ds.y, predict_proba(lin, ds.X)) < 0.75);
}

TEST_CASE("forest structure, determinism and probability range") {
    Rng rng(16);
    const Dataset ds = blobs(100, 6, 1.0, rng);
    Hyperparams hp;
    hp.n_trees = 20;
    hp.max_depth = 3;
    const auto a = train_model(ModelKind::forest, ds, hp, 42);
    const auto b = train_model(ModelKind::forest, ds, hp, 42);
    CHECK(predict_proba(a, ds.X) == predict_proba(b, ds.X));
    const auto c = train_model(ModelKind::forest, ds, hp, 43);
    CHECK(predict_proba(a, ds.X) != predict_proba(c, ds.X));
    for (const auto& t : a.trees) {
        // depth 3 bounds the node count
        CHECK(t.nodes.size() <= 15);
        for (const auto& n : t.nodes)
            if (n.is_leaf()) {
                CHECK(n.value >= 0.0);
                CHECK(n.value <= 1.0);
            }
    }
    for (double v : predict_proba(a, ds.X)) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("tree routing and used features") {
    Tree t;
    t.nodes.resize(3);
    t.nodes[0].feature = 2;
    t.nodes[0].threshold = 0.5;
    t.nodes[0].left = 1;
    t.nodes[0].right = 2;
    t.nodes[1].value = -1;
    t.nodes[2].value = 1;
    CHECK(t.predict(std::vector<double>{9, 9, 0.5}) == -1);
    CHECK(t.predict(std::vector<double>{9, 9, 0.6}) == 1);
    CHECK(t.used_features() == std::vector<std::size_t>{2});
}

TEST_CASE("training input validation") {
    Rng rng(1);
    Dataset ds = blobs(10, 2, 1.0, rng);
    Dataset one = ds;
    std::fill(one.y.begin(), one.y.end(), 1);
    CHECK_THROWS_AS(train_model(ModelKind::forest, one, Hyperparams{}, 1), DataError);
    Dataset bad = ds;
    bad.X(0, 0) = std::nan("");
    CHECK_THROWS_AS(train_model(ModelKind::gbt, bad, Hyperparams{}, 1), DataError);
    const auto m = train_model(ModelKind::logreg, ds, Hyperparams{}, 1);
    CHECK_THROWS_AS(predict_proba(m, Matrix(2, 3)), DataError);
}

TEST_CASE("grid search picks the best mean F1 and refits on all rows") {
    Rng rng(18);
    const Dataset ds = blobs(90, 3, 2.0, rng);
    std::vector<Hyperparams> grid(2);
    grid[0].C = 1e-6;  // shrinks to the intercept: predicts one class everywhere
    grid[1].C = 1.0;
    const auto r = grid_search(ModelKind::logreg, ds, grid, 3, 7);
    REQUIRE(r.mean_f1[1].has_value());
    CHECK(r.best_index == 1);
    CHECK(r.best == grid[1]);
    CHECK(r.model.params.C == 1.0);
    const auto direct = train_model(ModelKind::logreg, ds, grid[1], r.model.seed);
    CHECK(predict_proba(direct, ds.X) == predict_proba(r.model, ds.X));

    const std::vector<Hyperparams> one{grid[1]};
    const auto single = grid_search(ModelKind::logreg, ds, one, 3, 7);
    CHECK(single.best_index == 0);
    CHECK(single.mean_f1.size() == 1);

    LeakageGuard guard(std::set<std::string>{"s5"});
    CHECK_THROWS_AS(grid_search(ModelKind::logreg, ds, grid, 3, 7, guard), InvariantError);
}

TEST_CASE("model JSON round trip preserves predictions") {
    Rng rng(19);
    const Dataset ds = blobs(60, 4, 1.0, rng);
    Hyperparams hp;
    hp.n_trees = 5;
    hp.n_rounds = 5;
    for (auto k : {ModelKind::logreg, ModelKind::forest, ModelKind::gbt, ModelKind::gbt2}) {
        const auto m = train_model(k, ds, hp, 3);
        const auto j = model_to_json(m, "hf42-v1");
        const auto back = model_from_json(nlohmann::json::parse(j.dump()));
        CHECK(back.kind == k);
        CHECK(predict_margin(back, ds.X) == predict_margin(m, ds.X));
    }
    CHECK_THROWS(model_from_json(nlohmann::json::parse(R"({"kind":"forest"})")));
}

#include "lootwatch/split.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace lootwatch {

namespace {

constexpr double kCeilSlack = 1e-9;

std::size_t ceil_count(double x) { return static_cast<std::size_t>(std::ceil(x - kCeilSlack)); }

std::array<std::vector<std::string>, 2> by_class(std::span<const LabeledSite> sites) {
    std::array<std::vector<std::string>, 2> out;
    for (const auto& s : sites) out[static_cast<int>(s.label)].push_back(s.site_id);
    return out;
}

/// Takes the first `counts[c]` items of each class list into `dest`, removing them.
void take(std::array<std::vector<std::string>, 2>& pools, std::span<const std::size_t> counts,
          std::vector<std::string>& dest) {
    for (std::size_t c = 0; c < 2; ++c) {
        auto& pool = pools[c];
        const auto n = static_cast<std::ptrdiff_t>(counts[c]);
        dest.insert(dest.end(), pool.begin(), pool.begin() + n);
        pool.erase(pool.begin(), pool.begin() + n);
    }
}

std::array<std::size_t, 2> sizes(const std::array<std::vector<std::string>, 2>& pools) {
    return {pools[0].size(), pools[1].size()};
}

/// Splits the pools into `held` (allocated proportionally) and the rest.
void split_off(std::array<std::vector<std::string>, 2>& pools, std::size_t n_held, std::vector<std::string>& held) {
    auto s = sizes(pools);
    auto counts = allocate_proportional(s, n_held);
    take(pools, counts, held);
}

}  // namespace

void SplitRatios::validate() const {
    if (train <= 0.0 || validation < 0.0 || test <= 0.0) throw ConfigError("split ratios must be positive");
    if (std::abs(train + validation + test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
}

std::string_view split_mode_name(SplitMode m) { return m == SplitMode::kfold ? "kfold" : "resplit"; }

SplitMode parse_split_mode(std::string_view name) {
    if (name == "kfold") return SplitMode::kfold;
    if (name == "resplit") return SplitMode::resplit;
    throw ConfigError("unknown split mode '" + std::string(name) + "' (expected kfold|resplit)");
}

std::vector<std::size_t> allocate_proportional(std::span<const std::size_t> class_sizes, std::size_t total) {
    const std::size_t n = std::accumulate(class_sizes.begin(), class_sizes.end(), std::size_t{0});
    if (total > n) throw InvariantError("allocation exceeds population");
    std::vector<std::size_t> out(class_sizes.size(), 0);
    if (n == 0) return out;
    std::vector<std::size_t> remainder(class_sizes.size());
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < class_sizes.size(); ++c) {
        const std::size_t q = total * class_sizes[c];
        out[c] = q / n;
        remainder[c] = q % n;
        assigned += out[c];
    }
    std::vector<std::size_t> order(class_sizes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
        if (class_sizes[a] != class_sizes[b]) return class_sizes[a] > class_sizes[b];
        return a < b;
    });
    for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++out[order[i % order.size()]];
    return out;
}

Fold stratified_split(std::span<const LabeledSite> sites, SplitRatios ratios, std::uint64_t seed) {
    ratios.validate();
    auto pools = by_class(sites);
    constexpr std::size_t min_class = 5;
    for (std::size_t c = 0; c < 2; ++c)
        if (pools[c].size() < min_class)
            throw DataError("class '" + std::string(label_name(static_cast<Label>(c))) + "' has " +
                            std::to_string(pools[c].size()) + " sites; stratified split needs at least 5");
    for (std::size_t c = 0; c < 2; ++c) {
        Rng rng(derive_seed(seed, 0x5b117, c));
        rng.shuffle(pools[c]);
    }
    const std::size_t n = sites.size();
    Fold fold;
    const std::size_t n_test = ceil_count(ratios.test * static_cast<double>(n));
    split_off(pools, n_test, fold.test);
    const std::size_t rest = n - n_test;
    const std::size_t n_val =
        ceil_count(ratios.validation / (ratios.train + ratios.validation) * static_cast<double>(rest));
    split_off(pools, n_val, fold.validation);
    take(pools, sizes(pools), fold.train);
    validate_fold(fold, sites);
    return fold;
}

SplitPlan stratified_kfold(std::span<const LabeledSite> sites, int k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("k-fold needs k >= 2");
    auto pools = by_class(sites);
    for (std::size_t c = 0; c < 2; ++c)
        if (pools[c].size() < static_cast<std::size_t>(k))
            throw DataError("class '" + std::string(label_name(static_cast<Label>(c))) + "' has " +
                            std::to_string(pools[c].size()) + " sites, fewer than k = " + std::to_string(k));
    for (std::size_t c = 0; c < 2; ++c) {
        Rng rng(derive_seed(seed, 0xf01d, c));
        rng.shuffle(pools[c]);
    }
    SplitPlan plan;
    plan.mode = SplitMode::kfold;
    plan.seed = seed;
    plan.folds.resize(static_cast<std::size_t>(k));
    std::vector<std::array<std::vector<std::string>, 2>> rest(static_cast<std::size_t>(k));
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t j = 0; j < pools[c].size(); ++j) {
            const std::size_t f = j % static_cast<std::size_t>(k);
            plan.folds[f].test.push_back(pools[c][j]);
            for (std::size_t g = 0; g < plan.folds.size(); ++g)
                if (g != f) rest[g][c].push_back(pools[c][j]);
        }
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        auto& pool = rest[f];
        for (std::size_t c = 0; c < 2; ++c) {
            Rng rng(derive_seed(seed, 0x7a1 + f, c));
            rng.shuffle(pool[c]);
        }
        const std::size_t n_rest = pool[0].size() + pool[1].size();
        const std::size_t n_val = ceil_count(static_cast<double>(n_rest) / 8.0);
        split_off(pool, n_val, plan.folds[f].validation);
        take(pool, sizes(pool), plan.folds[f].train);
        validate_fold(plan.folds[f], sites);
    }
    return plan;
}

SplitPlan repeated_stratified_split(std::span<const LabeledSite> sites, int repeats, SplitRatios ratios,
                                    std::uint64_t seed) {
    if (repeats < 1) throw ConfigError("need at least one repeat");
    SplitPlan plan;
    plan.mode = SplitMode::resplit;
    plan.seed = seed;
    plan.ratios = ratios;
    for (int r = 0; r < repeats; ++r)
        plan.folds.push_back(stratified_split(sites, ratios, derive_seed(seed, 0x4e5, static_cast<std::uint64_t>(r))));
    return plan;
}

std::vector<int> stratified_fold_ids(std::span<const int> labels, int k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("inner CV needs k >= 2");
    std::array<std::vector<std::size_t>, 2> pools;
    for (std::size_t i = 0; i < labels.size(); ++i) pools[labels[i] != 0].push_back(i);
    std::vector<int> fold(labels.size(), 0);
    for (std::size_t c = 0; c < 2; ++c) {
        Rng rng(derive_seed(seed, 0xcf, c));
        rng.shuffle(pools[c]);
        for (std::size_t j = 0; j < pools[c].size(); ++j) fold[pools[c][j]] = static_cast<int>(j % static_cast<std::size_t>(k));
    }
    return fold;
}

void validate_fold(const Fold& fold, std::span<const LabeledSite> sites) {
    std::set<std::string> seen;
    for (const auto* part : {&fold.train, &fold.validation, &fold.test})
        for (const auto& id : *part)
            if (!seen.insert(id).second) throw InvariantError("site '" + id + "' appears in more than one split");
    if (seen.size() != sites.size()) throw InvariantError("split does not cover every site");
    for (const auto& s : sites)
        if (!seen.contains(s.site_id)) throw InvariantError("site '" + s.site_id + "' missing from split");
}

}  // namespace lootwatch

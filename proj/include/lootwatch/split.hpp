#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lootwatch/common.hpp"

namespace lootwatch {

struct LabeledSite {
    std::string site_id;
    Label label = Label::preserved;
};

struct SplitRatios {
    double train = 0.70;
    double validation = 0.10;
    double test = 0.20;

    void validate() const;
};

struct Fold {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;
};

enum class SplitMode { kfold, resplit };

std::string_view split_mode_name(SplitMode m);
SplitMode parse_split_mode(std::string_view name);

struct SplitPlan {
    SplitMode mode = SplitMode::kfold;
    std::uint64_t seed = 0;
    SplitRatios ratios;
    std::vector<Fold> folds;
};

/// Largest-remainder allocation of `total` picks across classes in proportion to
/// their sizes. Ties go to the larger class, then the lower class index.
std::vector<std::size_t> allocate_proportional(std::span<const std::size_t> class_sizes, std::size_t total);

/// Two-stage stratified split: the test share is drawn first as ceil(test·n), then
/// validation as ceil(validation/(train+validation) · remaining). Reproduces
/// 1,359/195/389 on 1,943 sites.
Fold stratified_split(std::span<const LabeledSite> sites, SplitRatios ratios, std::uint64_t seed);

/// Per-class seeded shuffle, round-robin fold assignment; each fold's non-test
/// sites are re-split 7:1 into train/validation.
SplitPlan stratified_kfold(std::span<const LabeledSite> sites, int k, std::uint64_t seed);

/// `repeats` independent stratified_split draws.
SplitPlan repeated_stratified_split(std::span<const LabeledSite> sites, int repeats, SplitRatios ratios,
                                    std::uint64_t seed);

/// Per-row fold index in [0, k) with per-class round-robin after a seeded shuffle.
std::vector<int> stratified_fold_ids(std::span<const int> labels, int k, std::uint64_t seed);

/// Disjointness and coverage checks for one fold; throws InvariantError.
void validate_fold(const Fold& fold, std::span<const LabeledSite> sites);

}  // namespace lootwatch

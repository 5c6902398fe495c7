#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "lootwatch/common.hpp"
#include "lootwatch/raster.hpp"

namespace lootwatch {

/// Generator knobs. Reflectance deltas are in raw digital numbers.
struct SceneParams {
    int patch_size = 186;
    int pit_count_min = 6;
    int pit_count_max = 14;
    double pit_radius_min = 1.5;
    double pit_radius_max = 3.5;
    double pit_amplitude = 450.0;  // depth of the dark pit floor, full strength on NIR
    double rim_brightness = 250.0;  // bright spoil ring around each pit
    double background_scale = 24.0;  // pixels per control point of the smooth surface
    double background_amplitude = 180.0;
    double noise_std = 30.0;
    double footprint_radius_min = 18.0;
    double footprint_radius_max = 40.0;
    double looted_footprint_scale = 1.3;
    bool enlarge_looted_footprints = true;
    double label_noise = 0.0;
    double clutter_rate = 0.5;
    double clutter_brightness = 600.0;
    double month_gain_jitter = 0.03;

    void validate() const;
};

nlohmann::ordered_json scene_params_to_json(const SceneParams& p);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
SceneParams scene_params_from_json(const nlohmann::json& j);

/// Stream tag for label-noise draws: site i flips iff
/// Rng(derive_seed(seed, kLabelNoiseStream, i)).uniform() < label_noise.
inline constexpr std::uint64_t kLabelNoiseStream = 0x1abe1;

struct Pit {
    double row = 0.0, col = 0.0, radius = 0.0;
};

struct Streak {
    double row = 0.0, col = 0.0;  // centre
    double angle = 0.0;
    double half_length = 0.0;
    double half_width = 0.0;
};

/// Month-invariant content of one site.
struct Scene {
    Label label = Label::preserved;
    int size = 0;
    std::array<Grid, kBandCount> base;  // background, pits and clutter before gain and noise
    Mask footprint;
    std::vector<Pit> pits;
    std::vector<Streak> clutter;
};

Scene build_scene(Label label, const SceneParams& params, std::uint64_t seed);
/// One monthly observation: background, pits and clutter under per-month gain jitter and fresh noise.
Patch render_month(const Scene& scene, const SceneParams& params, YearMonth ym, std::uint64_t seed);

struct SynthSite {
    Patch patch;
    Mask mask;
    Label true_label = Label::preserved;
};

SynthSite gen_site(Label label, const SceneParams& params, std::uint64_t seed, YearMonth ym = {2023, 1});

struct PlannedSite {
    std::string site_id;
    double lat = 0.0, lon = 0.0;
    Label true_label = Label::preserved;
    Label recorded_label = Label::preserved;
    std::uint64_t seed = 0;
};

/// round(n·fraction) looted sites at shuffled positions; recorded labels carry the label noise.
std::vector<PlannedSite> plan_sites(std::size_t n_sites, double looted_fraction, const SceneParams& params,
                                    std::uint64_t seed);

/// Writes masks/, patches/<site>/YYYY_MM.lsp, manifest.csv, truth.csv and params.json under out_dir.
SiteManifest gen_dataset(std::size_t n_sites, double looted_fraction, std::span<const YearMonth> months,
                         const SceneParams& params, std::uint64_t seed, const std::filesystem::path& out_dir);

}  // namespace lootwatch

#include "lootwatch/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace lootwatch {

namespace {

constexpr std::array<double, kBandCount> kBaseLevel{1200.0, 1100.0, 900.0, 2000.0};
constexpr std::array<double, kBandCount> kReliefGain{1.0, 0.9, 0.8, 1.4};
constexpr std::array<double, kBandCount> kPitGain{0.6, 0.5, 0.4, 1.0};
constexpr std::array<double, kBandCount> kClutterGain{1.0, 1.0, 1.0, 0.8};
constexpr double kToneStd = 60.0;
constexpr double kRimWidth = 1.5;

// Rough bounding box of the study region.
constexpr double kLatMin = 29.4, kLatMax = 38.5;
constexpr double kLonMin = 60.5, kLonMax = 74.9;

double footprint_limit(const SceneParams& p) {
    const double scale = p.enlarge_looted_footprints ? std::max(1.0, p.looted_footprint_scale) : 1.0;
    return p.footprint_radius_max * scale;
}

struct Ellipse {
    double row, col, a, b, angle;

    bool contains(double r, double c, double shrink = 1.0) const {
        const double dr = r - row, dc = c - col;
        const double u = dc * std::cos(angle) + dr * std::sin(angle);
        const double v = -dc * std::sin(angle) + dr * std::cos(angle);
        const double ea = a * shrink, eb = b * shrink;
        return (u * u) / (ea * ea) + (v * v) / (eb * eb) <= 1.0;
    }
};

Grid smooth_surface(int size, double scale, Rng& rng) {
    const int n = static_cast<int>(std::ceil(size / scale)) + 1;
    Grid coarse(n, n);
    for (double& v : coarse.values) v = rng.normal();
    return resize_band(coarse, size, size);
}

template <typename F>
void for_box(int size, double row, double col, double radius, F&& f) {
    const int r0 = std::max(0, static_cast<int>(std::floor(row - radius - 1)));
    const int r1 = std::min(size - 1, static_cast<int>(std::ceil(row + radius + 1)));
    const int c0 = std::max(0, static_cast<int>(std::floor(col - radius - 1)));
    const int c1 = std::min(size - 1, static_cast<int>(std::ceil(col + radius + 1)));
    for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c) f(r, c);
}

std::string site_name(std::size_t i) {
    std::ostringstream s;
    s << "site_" << std::string(i < 10 ? 3 : i < 100 ? 2 : i < 1000 ? 1 : 0, '0') << i;
    return s.str();
}

}  // namespace

void SceneParams::validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("scene params: " + what); };
    if (patch_size < 16) fail("patch_size must be >= 16");
    if (pit_count_min < 0 || pit_count_max < pit_count_min) fail("pit count range is empty");
    if (!(pit_radius_min > 0.0) || pit_radius_max < pit_radius_min) fail("pit radius range is empty");
    if (!(pit_amplitude >= 0.0)) fail("pit_amplitude must be >= 0");
    if (!(rim_brightness >= 0.0)) fail("rim_brightness must be >= 0");
    if (!(background_scale > 0.0)) fail("background_scale must be positive");
    if (!(background_amplitude >= 0.0)) fail("background_amplitude must be >= 0");
    if (!(noise_std >= 0.0)) fail("noise_std must be >= 0");
    if (!(footprint_radius_min > 0.0) || footprint_radius_max < footprint_radius_min)
        fail("footprint radius range is empty");
    if (!(looted_footprint_scale > 0.0)) fail("looted_footprint_scale must be positive");
    if (!(label_noise >= 0.0 && label_noise <= 1.0)) fail("label_noise must lie in [0, 1]");
    if (!(clutter_rate >= 0.0 && clutter_rate <= 1.0)) fail("clutter_rate must lie in [0, 1]");
    if (!(clutter_brightness >= 0.0)) fail("clutter_brightness must be >= 0");
    if (!(month_gain_jitter >= 0.0 && month_gain_jitter < 0.5)) fail("month_gain_jitter must lie in [0, 0.5)");
    if (footprint_limit(*this) > patch_size / 2.0 - 2.0)
        fail("footprint radius " + format_double(footprint_limit(*this)) + " exceeds the patch bounds");
}

nlohmann::ordered_json scene_params_to_json(const SceneParams& p) {
    return {{"patch_size", p.patch_size},
            {"pit_count_min", p.pit_count_min},
            {"pit_count_max", p.pit_count_max},
            {"pit_radius_min", p.pit_radius_min},
            {"pit_radius_max", p.pit_radius_max},
            {"pit_amplitude", p.pit_amplitude},
            {"rim_brightness", p.rim_brightness},
            {"background_scale", p.background_scale},
            {"background_amplitude", p.background_amplitude},
            {"noise_std", p.noise_std},
            {"footprint_radius_min", p.footprint_radius_min},
            {"footprint_radius_max", p.footprint_radius_max},
            {"looted_footprint_scale", p.looted_footprint_scale},
            {"enlarge_looted_footprints", p.enlarge_looted_footprints},
            {"label_noise", p.label_noise},
            {"clutter_rate", p.clutter_rate},
            {"clutter_brightness", p.clutter_brightness},
            {"month_gain_jitter", p.month_gain_jitter}};
}

SceneParams scene_params_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("scene params must be an object");
    nlohmann::json merged = scene_params_to_json(SceneParams{});
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!merged.contains(it.key())) throw ConfigError("unknown scene parameter '" + it.key() + "'");
        merged[it.key()] = it.value();
    }
    SceneParams p;
    try {
        p.patch_size = merged.at("patch_size").get<int>();
        p.pit_count_min = merged.at("pit_count_min").get<int>();
        p.pit_count_max = merged.at("pit_count_max").get<int>();
        p.pit_radius_min = merged.at("pit_radius_min").get<double>();
        p.pit_radius_max = merged.at("pit_radius_max").get<double>();
        p.pit_amplitude = merged.at("pit_amplitude").get<double>();
        p.rim_brightness = merged.at("rim_brightness").get<double>();
        p.background_scale = merged.at("background_scale").get<double>();
        p.background_amplitude = merged.at("background_amplitude").get<double>();
        p.noise_std = merged.at("noise_std").get<double>();
        p.footprint_radius_min = merged.at("footprint_radius_min").get<double>();
        p.footprint_radius_max = merged.at("footprint_radius_max").get<double>();
        p.looted_footprint_scale = merged.at("looted_footprint_scale").get<double>();
        p.enlarge_looted_footprints = merged.at("enlarge_looted_footprints").get<bool>();
        p.label_noise = merged.at("label_noise").get<double>();
        p.clutter_rate = merged.at("clutter_rate").get<double>();
        p.clutter_brightness = merged.at("clutter_brightness").get<double>();
        p.month_gain_jitter = merged.at("month_gain_jitter").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed scene params: ") + e.what());
    }
    p.validate();
    return p;
}

Scene build_scene(Label label, const SceneParams& params, std::uint64_t seed) {
    params.validate();
    const int size = params.patch_size;
    Scene scene;
    scene.label = label;
    scene.size = size;

    // Each component draws from its own stream so toggling one knob leaves the others untouched.
    Rng bg_rng(derive_seed(seed, 0xb6));
    const Grid relief = smooth_surface(size, params.background_scale, bg_rng);
    const double relief_amp = params.background_amplitude * bg_rng.uniform(0.5, 1.5);
    for (std::size_t b = 0; b < kBandCount; ++b) {
        const double tone = kBaseLevel[b] + kToneStd * bg_rng.normal();
        Grid g(size, size);
        for (std::size_t i = 0; i < g.values.size(); ++i)
            g.values[i] = tone + relief_amp * kReliefGain[b] * relief.values[i];
        scene.base[b] = std::move(g);
    }

    Rng fp_rng(derive_seed(seed, 0xf9));
    double a = fp_rng.uniform(params.footprint_radius_min, params.footprint_radius_max);
    double bb = fp_rng.uniform(params.footprint_radius_min, params.footprint_radius_max);
    if (label == Label::looted && params.enlarge_looted_footprints) {
        a *= params.looted_footprint_scale;
        bb *= params.looted_footprint_scale;
    }
    const double reach = std::max(a, bb) + 1.0;
    const Ellipse ellipse{fp_rng.uniform(reach, size - reach), fp_rng.uniform(reach, size - reach), a, bb,
                          fp_rng.uniform(0.0, std::numbers::pi)};
    scene.footprint = Mask(size, size);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) scene.footprint.set(r, c, ellipse.contains(r + 0.5, c + 0.5));

    if (label == Label::looted) {
        Rng pit_rng(derive_seed(seed, 0x917));
        const int n_pits = pit_rng.between(params.pit_count_min, params.pit_count_max);
        for (int k = 0; k < n_pits; ++k) {
            Pit pit;
            pit.radius = pit_rng.uniform(params.pit_radius_min, params.pit_radius_max);
            do {
                pit.row = pit_rng.uniform(ellipse.row - reach, ellipse.row + reach);
                pit.col = pit_rng.uniform(ellipse.col - reach, ellipse.col + reach);
            } while (!ellipse.contains(pit.row, pit.col, 0.75));
            scene.pits.push_back(pit);
        }
        // 1 = pit floor, 2 = rim; floors win where pits overlap.
        std::vector<std::uint8_t> kind(static_cast<std::size_t>(size) * size, 0);
        for (const auto& pit : scene.pits)
            for_box(size, pit.row, pit.col, pit.radius + kRimWidth, [&](int r, int c) {
                const double d = std::hypot(r + 0.5 - pit.row, c + 0.5 - pit.col);
                auto& k = kind[static_cast<std::size_t>(r) * size + c];
                if (d <= pit.radius) k = 1;
                else if (d <= pit.radius + kRimWidth && k == 0) k = 2;
            });
        for (std::size_t b = 0; b < kBandCount; ++b)
            for (std::size_t i = 0; i < kind.size(); ++i) {
                if (kind[i] == 1) scene.base[b].values[i] -= params.pit_amplitude * kPitGain[b];
                else if (kind[i] == 2) scene.base[b].values[i] += params.rim_brightness * kPitGain[b];
            }
    }

    Rng clutter_rng(derive_seed(seed, 0xc1));
    if (clutter_rng.uniform() < params.clutter_rate) {
        const int n_streaks = clutter_rng.between(1, 4);
        for (int k = 0; k < n_streaks; ++k)
            scene.clutter.push_back({clutter_rng.uniform(0.0, size), clutter_rng.uniform(0.0, size),
                                     clutter_rng.uniform(0.0, std::numbers::pi), clutter_rng.uniform(30.0, size / 2.0),
                                     clutter_rng.uniform(0.75, 1.75)});
        std::vector<std::uint8_t> lit(static_cast<std::size_t>(size) * size, 0);
        for (const auto& s : scene.clutter) {
            const double dr = std::sin(s.angle), dc = std::cos(s.angle);
            for (int r = 0; r < size; ++r)
                for (int c = 0; c < size; ++c) {
                    const double y = r + 0.5 - s.row, x = c + 0.5 - s.col;
                    const double along = x * dc + y * dr;
                    const double across = -x * dr + y * dc;
                    if (std::abs(along) <= s.half_length && std::abs(across) <= s.half_width)
                        lit[static_cast<std::size_t>(r) * size + c] = 1;
                }
        }
        for (std::size_t i = 0; i < lit.size(); ++i) {
            if (!lit[i] || scene.footprint.values[i]) continue;
            for (std::size_t b = 0; b < kBandCount; ++b)
                scene.base[b].values[i] += params.clutter_brightness * kClutterGain[b];
        }
    }
    return scene;
}

Patch render_month(const Scene& scene, const SceneParams& params, YearMonth ym, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x30, static_cast<std::uint64_t>(ym.serial())));
    Patch patch(scene.size, scene.size, SampleType::u16);
    patch.year_month = ym;
    for (std::size_t b = 0; b < kBandCount; ++b) {
        const double gain = 1.0 + params.month_gain_jitter * rng.normal();
        const Grid& src = scene.base[b];
        Grid& dst = patch.bands[b];
        for (std::size_t i = 0; i < src.values.size(); ++i) {
            const double v = src.values[i] * gain + params.noise_std * rng.normal();
            dst.values[i] = std::clamp(std::round(v), 0.0, 65535.0);
        }
    }
    return patch;
}

SynthSite gen_site(Label label, const SceneParams& params, std::uint64_t seed, YearMonth ym) {
    Scene scene = build_scene(label, params, seed);
    SynthSite out;
    out.patch = render_month(scene, params, ym, seed);
    out.mask = std::move(scene.footprint);
    out.true_label = label;
    return out;
}

std::vector<PlannedSite> plan_sites(std::size_t n_sites, double looted_fraction, const SceneParams& params,
                                    std::uint64_t seed) {
    params.validate();
    if (n_sites < 4) throw ConfigError("synthetic dataset needs at least 4 sites");
    if (!(looted_fraction >= 0.0 && looted_fraction <= 1.0)) throw ConfigError("looted_fraction must lie in [0, 1]");
    const auto n_looted = static_cast<std::size_t>(std::llround(static_cast<double>(n_sites) * looted_fraction));

    std::vector<std::size_t> order(n_sites);
    for (std::size_t i = 0; i < n_sites; ++i) order[i] = i;
    Rng label_rng(derive_seed(seed, 0x91a));
    label_rng.shuffle(order);
    std::vector<Label> truth(n_sites, Label::preserved);
    for (std::size_t k = 0; k < n_looted; ++k) truth[order[k]] = Label::looted;

    std::vector<PlannedSite> sites(n_sites);
    for (std::size_t i = 0; i < n_sites; ++i) {
        PlannedSite& s = sites[i];
        s.site_id = site_name(i);
        Rng geo(derive_seed(seed, 0x6e0, i));
        s.lat = geo.uniform(kLatMin, kLatMax);
        s.lon = geo.uniform(kLonMin, kLonMax);
        s.true_label = truth[i];
        Rng flip(derive_seed(seed, kLabelNoiseStream, i));
        const bool flipped = flip.uniform() < params.label_noise;
        s.recorded_label = flipped ? (truth[i] == Label::looted ? Label::preserved : Label::looted) : truth[i];
        s.seed = derive_seed(seed, 0x517e, i);
    }
    return sites;
}

SiteManifest gen_dataset(std::size_t n_sites, double looted_fraction, std::span<const YearMonth> months,
                         const SceneParams& params, std::uint64_t seed, const std::filesystem::path& out_dir) {
    if (months.empty()) throw ConfigError("synthetic dataset needs at least one month");
    for (const auto& ym : months)
        if (!is_usable_month(ym)) throw ConfigError("month " + ym.str() + " is outside 2017-01..2023-12");
    const auto sites = plan_sites(n_sites, looted_fraction, params, seed);

    std::error_code ec;
    std::filesystem::create_directories(out_dir / "masks", ec);
    if (!ec) std::filesystem::create_directories(out_dir / "patches", ec);
    if (ec) throw DataError("cannot create output directory " + out_dir.string() + ": " + ec.message());

    std::vector<YearMonth> sorted(months.begin(), months.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

    SiteManifest manifest;
    manifest.root = out_dir;
    manifest.entries.resize(sites.size());
    parallel_for(sites.size(), [&](std::size_t i) {
        const PlannedSite& s = sites[i];
        Scene scene = build_scene(s.true_label, params, s.seed);
        ManifestEntry& e = manifest.entries[i];
        e.site_id = s.site_id;
        e.lat = s.lat;
        e.lon = s.lon;
        e.label = s.recorded_label;
        e.mask_path = std::filesystem::path("masks") / (s.site_id + ".lsp");
        e.patch_dir = std::filesystem::path("patches") / s.site_id;
        e.months = sorted;
        scene.footprint.site_id = s.site_id;
        save_mask(scene.footprint, out_dir / e.mask_path);
        std::filesystem::create_directories(out_dir / e.patch_dir);
        for (const auto& ym : sorted) {
            Patch p = render_month(scene, params, ym, s.seed);
            p.site_id = s.site_id;
            save_patch(p, out_dir / e.patch_dir / (ym.str() + ".lsp"));
        }
    });
    save_manifest(manifest, out_dir / "manifest.csv");

    std::ostringstream truth;
    truth << "site_id,true_label,recorded_label\n";
    for (const auto& s : sites)
        truth << s.site_id << ',' << label_name(s.true_label) << ',' << label_name(s.recorded_label) << '\n';
    write_text_file(out_dir / "truth.csv", truth.str());

    nlohmann::ordered_json snapshot;
    snapshot["n_sites"] = n_sites;
    snapshot["looted_fraction"] = looted_fraction;
    snapshot["seed"] = seed;
    auto month_names = nlohmann::ordered_json::array();
    for (const auto& ym : sorted) month_names.push_back(ym.str());
    snapshot["months"] = month_names;
    snapshot["params"] = scene_params_to_json(params);
    write_text_file(out_dir / "params.json", snapshot.dump(2) + "\n");
    return manifest;
}

}  // namespace lootwatch

#include <doctest.h>

#include <cmath>
#include <map>

#include "lootwatch/features.hpp"
#include "lootwatch/synth.hpp"
#include "oracles.hpp"

using namespace lootwatch;

namespace {

Grid random_grid(int w, int h, Rng& rng, double lo, double hi) {
    Grid g(w, h);
    for (double& v : g.values) v = lo + (hi - lo) * rng.uniform();
    return g;
}

Mask random_blob(int w, int h, Rng& rng) {
    Mask m(w, h);
    const double cr = h / 2.0 + rng.uniform() - 0.5, cc = w / 2.0 + rng.uniform() - 0.5;
    const double rad = 0.25 * std::min(w, h) + 0.2 * std::min(w, h) * rng.uniform();
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const double d = std::hypot(r - cr, c - cc);
            m.set(r, c, d < rad || rng.uniform() < 0.05);
        }
    return m;
}

void check_stats_equal(const GlcmStats& a, const GlcmStats& b, double tol) {
    CHECK(a.contrast == doctest::Approx(b.contrast).epsilon(tol));
    CHECK(a.homogeneity == doctest::Approx(b.homogeneity).epsilon(tol));
    CHECK(a.energy == doctest::Approx(b.energy).epsilon(tol));
    CHECK(a.entropy == doctest::Approx(b.entropy).epsilon(tol));
}

// Naive LBP histogram statistics: neighbour order clockwise from east in image rows.
LbpStats lbp_oracle(const Grid& g, const Mask& m) {
    const int nb[8][2] = {{0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1}, {-1, 0}, {-1, 1}};
    std::map<int, double> hist;
    double n = 0;
    for (int r = 1; r + 1 < g.height; ++r)
        for (int c = 1; c + 1 < g.width; ++c) {
            bool inside = true;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) inside = inside && m.at(r + dr, c + dc);
            if (!inside) continue;
            int code = 0;
            for (int k = 0; k < 8; ++k)
                if (g.at(r + nb[k][0], c + nb[k][1]) >= g.at(r, c)) code |= 1 << k;
            hist[code] += 1;
            n += 1;
        }
    LbpStats s;
    for (auto& [code, count] : hist) {
        const double p = count / n;
        s.entropy -= p * std::log2(p);
        s.energy += p * p;
    }
    return s;
}

}  // namespace

TEST_CASE("GLCM matches the pair-enumeration oracle on random masked bands") {
    Rng rng(11);
    for (int trial = 0; trial < 25; ++trial) {
        const int w = 6 + static_cast<int>(rng.below(10)), h = 6 + static_cast<int>(rng.below(10));
        const Grid g = random_grid(w, h, rng, 0, trial % 3 == 0 ? 5 : 4000);
        const Mask m = random_blob(w, h, rng);
        const auto ref = oracle::glcm(g, m, kGlcmLevels);
        REQUIRE(ref.any);

        const auto q = quantize_masked(g, m, kGlcmLevels);
        std::size_t mi = 0;
        for (const auto& off : kGlcmOffsets) {
            const auto mat = glcm_matrix(q, w, h, kGlcmLevels, off);
            if (mat.empty()) continue;
            REQUIRE(mi < ref.matrices.size());
            REQUIRE(mat.size() == ref.matrices[mi].size());
            for (std::size_t i = 0; i < mat.size(); ++i) CHECK(std::abs(mat[i] - ref.matrices[mi][i]) <= 1e-12);
            ++mi;
        }
        CHECK(mi == ref.matrices.size());
        check_stats_equal(glcm_features(g, m), ref.stats, 1e-12);
    }
}

TEST_CASE("GLCM checkerboard") {
    Grid g(8, 8);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) g.at(r, c) = (r + c) % 2 ? 100.0 : 0.0;
    const std::array<PixelOffset, 1> east{{{0, 1}}};
    const auto s = glcm_features(g, Mask::full(8, 8), kGlcmLevels, east);
    // levels 0 and 15 alternate; every horizontal pair differs by 15
    CHECK(s.contrast == doctest::Approx(225.0));
    CHECK(s.energy == doctest::Approx(0.5));
    CHECK(s.entropy == doctest::Approx(1.0));
    CHECK(s.homogeneity == doctest::Approx(1.0 / 226.0));

    const auto two = glcm_features(g, Mask::full(8, 8), 2, east);
    CHECK(two.contrast == doctest::Approx(1.0));
    CHECK(two.energy == doctest::Approx(0.5));
    CHECK(two.entropy == doctest::Approx(1.0));
    CHECK(two.homogeneity == doctest::Approx(0.5));
}

TEST_CASE("GLCM of a constant region") {
    const Grid g(7, 7, 1234.0);
    const auto s = glcm_features(g, Mask::full(7, 7));
    CHECK(s.contrast == 0.0);
    CHECK(s.energy == doctest::Approx(1.0));
    CHECK(s.entropy == doctest::Approx(0.0));
    CHECK(s.homogeneity == doctest::Approx(1.0));
}

TEST_CASE("GLCM statistics stay in their ranges") {
    Rng rng(5);
    for (int t = 0; t < 20; ++t) {
        const Grid g = random_grid(12, 12, rng, 0, 1000);
        const Mask m = random_blob(12, 12, rng);
        const auto s = glcm_features(g, m);
        const double L = kGlcmLevels;
        CHECK(s.contrast >= 0.0);
        CHECK(s.contrast <= (L - 1) * (L - 1));
        CHECK(s.energy > 0.0);
        CHECK(s.energy <= 1.0 + 1e-12);
        CHECK(s.homogeneity > 0.0);
        CHECK(s.homogeneity <= 1.0 + 1e-12);
        CHECK(s.entropy >= 0.0);
        CHECK(s.entropy <= 2 * std::log2(L) + 1e-12);
    }
}

TEST_CASE("GLCM errors") {
    Mask isolated(5, 5);
    isolated.set(0, 0, true);
    isolated.set(4, 2, true);
    CHECK_THROWS_AS(glcm_features(Grid(5, 5, 1.0), isolated), DataError);
    CHECK_THROWS_AS(glcm_features(Grid(5, 5, 1.0), Mask(5, 5)), DataError);
    CHECK_THROWS_AS(glcm_features(Grid(5, 5, 1.0), Mask::full(4, 5)), DataError);
}

TEST_CASE("quantization covers the range and ignores unmasked pixels") {
    Grid g(4, 1);
    g.values = {10, 20, 30, 1e9};
    Mask m = Mask::full(4, 1);
    m.set(0, 3, false);
    const auto q = quantize_masked(g, m, 4);
    CHECK(q == std::vector<int>{0, 2, 3, -1});
}

TEST_CASE("spectral features on a worked example") {
    Patch p(2, 2);
    const double red[4] = {1, 2, 3, 2};
    for (int i = 0; i < 4; ++i) {
        p.band(kRed).values[i] = red[i];
        p.band(kGreen).values[i] = 4;
        p.band(kBlue).values[i] = 0;
        p.band(kNir).values[i] = 6;
    }
    Mask m = Mask::full(2, 2);
    m.set(1, 1, false);
    const auto f = spectral_features(p, m);
    CHECK(f[layout::kMean + kRed] == doctest::Approx(2.0));
    CHECK(f[layout::kStd + kRed] == doctest::Approx(std::sqrt(2.0 / 3.0)));
    CHECK(f[layout::kStd + kGreen] == doctest::Approx(0.0));
    CHECK(f[layout::kMeanAll] == doctest::Approx((6.0 + 12 + 0 + 18) / 12));
    double ndvi = 0;
    for (double r : {1.0, 2.0, 3.0}) ndvi += (6 - r) / (6 + r + kIndexEpsilon);
    CHECK(f[layout::kNdvi] == doctest::Approx(ndvi / 3));
    CHECK(f[layout::kNdwi] == doctest::Approx((4.0 - 6) / (10 + kIndexEpsilon)));
    Mask one(2, 2);
    one.set(0, 0, true);
    CHECK_THROWS_AS(spectral_features(p, one), DataError);
}

TEST_CASE("features see only masked pixels") {
    Rng rng(21);
    const SynthSite site = gen_site(Label::looted, SceneParams{}, 77);
    Patch altered = site.patch;
    for (std::size_t b = 0; b < kBandCount; ++b)
        for (std::size_t i = 0; i < altered.band(b).values.size(); ++i)
            if (!site.mask.values[i]) altered.band(b).values[i] = 65535 * rng.uniform();
    const auto a = extract_handcrafted(site.patch, site.mask);
    const auto b = extract_handcrafted(altered, site.mask);
    for (std::size_t i = 0; i < kHandcraftedDim; ++i) CHECK(a.values[i] == b.values[i]);
}

TEST_CASE("texture is invariant to positive affine intensity changes") {
    const SynthSite site = gen_site(Label::looted, SceneParams{}, 5);
    Patch scaled = site.patch;
    for (auto& band : scaled.bands)
        for (double& v : band.values) v = 4.0 * v + 512.0;
    const auto a = extract_handcrafted(site.patch, site.mask);
    const auto b = extract_handcrafted(scaled, site.mask);
    for (std::size_t i = layout::kGlcm; i < layout::kSobelMean; ++i) CHECK(b.values[i] == doctest::Approx(a.values[i]).epsilon(1e-9));
    for (std::size_t i = layout::kLbp; i < kHandcraftedDim; ++i) CHECK(b.values[i] == doctest::Approx(a.values[i]));
    for (std::size_t band = 0; band < kBandCount; ++band)
        CHECK(b.values[layout::kSobelMean + band] == doctest::Approx(4.0 * a.values[layout::kSobelMean + band]));
    CHECK(b.values[layout::kSobelDensityRed] == doctest::Approx(a.values[layout::kSobelDensityRed]));
}

TEST_CASE("LBP") {
    const Grid flat(5, 5, 3.0);
    for (int r = 1; r < 4; ++r)
        for (int c = 1; c < 4; ++c) CHECK(lbp_code(flat, r, c) == 255);
    const auto s = lbp_features(flat, Mask::full(5, 5));
    CHECK(s.entropy == doctest::Approx(0.0));
    CHECK(s.energy == doctest::Approx(1.0));

    Grid spot(3, 3, 1.0);
    spot.at(1, 1) = 9.0;
    CHECK(lbp_code(spot, 1, 1) == 0);
    spot.at(1, 2) = 10.0;  // east neighbour only
    CHECK(lbp_code(spot, 1, 1) == 1);
    spot.at(1, 2) = 1.0;
    spot.at(2, 2) = 10.0;  // south-east is next clockwise
    CHECK(lbp_code(spot, 1, 1) == 2);

    Rng rng(8);
    for (int t = 0; t < 10; ++t) {
        const Grid g = random_grid(14, 14, rng, 0, 50);
        const Mask m = random_blob(14, 14, rng);
        const auto got = lbp_features(g, m);
        const auto ref = lbp_oracle(g, m);
        CHECK(got.entropy == doctest::Approx(ref.entropy).epsilon(1e-12));
        CHECK(got.energy == doctest::Approx(ref.energy).epsilon(1e-12));
    }
    Mask thin(5, 5);
    for (int c = 0; c < 5; ++c) thin.set(2, c, true);
    CHECK_THROWS_AS(lbp_features(flat, thin), DataError);
}

TEST_CASE("Sobel on a step and a ramp") {
    Grid step(6, 6);
    const double delta = 7.0;
    for (int r = 0; r < 6; ++r)
        for (int c = 3; c < 6; ++c) step.at(r, c) = delta;
    CHECK(sobel_magnitude(step, 2, 2) == doctest::Approx(4 * delta));
    CHECK(sobel_magnitude(step, 2, 3) == doctest::Approx(4 * delta));
    CHECK(sobel_magnitude(step, 2, 1) == doctest::Approx(0.0));
    const auto s = sobel_edge_features(step, Mask::full(6, 6));
    // interior columns 1..4: two of the four respond
    CHECK(s.mean_magnitude == doctest::Approx(2 * delta));
    CHECK(s.edge_density == doctest::Approx(0.5));

    Grid ramp(6, 6);
    const double slope = 2.5;
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c) ramp.at(r, c) = slope * r;
    CHECK(sobel_magnitude(ramp, 3, 3) == doctest::Approx(8 * slope));
    const auto rs = sobel_edge_features(ramp, Mask::full(6, 6));
    CHECK(rs.mean_magnitude == doctest::Approx(8 * slope));
    CHECK(rs.edge_density == doctest::Approx(0.0));
}

TEST_CASE("42-vector layout and names") {
    const auto& names = handcrafted_feature_names();
    REQUIRE(names.size() == kHandcraftedDim);
    CHECK(std::set<std::string>(names.begin(), names.end()).size() == kHandcraftedDim);
    const SynthSite site = gen_site(Label::preserved, SceneParams{}, 3);
    const auto v = extract_handcrafted(site.patch, site.mask);
    const auto spec = spectral_features(site.patch, site.mask);
    for (std::size_t i = 0; i < kSpectralDim; ++i) CHECK(v.values[i] == spec[i]);
    for (std::size_t b = 0; b < kBandCount; ++b) {
        const auto gl = glcm_features(site.patch.band(b), site.mask);
        CHECK(v.values[layout::glcm(b, 0)] == gl.contrast);
        CHECK(v.values[layout::glcm(b, 3)] == gl.entropy);
        CHECK(v.values[layout::kLbp + 2 * b] == lbp_features(site.patch.band(b), site.mask).entropy);
    }
    CHECK(v.values[layout::kSobelDensityNir] == sobel_edge_features(site.patch.band(kNir), site.mask).edge_density);
    for (double x : v.values) CHECK(std::isfinite(x));
}

TEST_CASE("looted scenes are rougher than preserved ones inside the footprint") {
    SceneParams p;
    p.clutter_rate = 0.0;
    p.enlarge_looted_footprints = false;
    double looted = 0, preserved = 0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        looted += extract_handcrafted(gen_site(Label::looted, p, 100 + s).patch, gen_site(Label::looted, p, 100 + s).mask)
                      .values[layout::kSobelMean + kNir];
        const auto site = gen_site(Label::preserved, p, 200 + s);
        preserved += extract_handcrafted(site.patch, site.mask).values[layout::kSobelMean + kNir];
    }
    CHECK(looted > 1.5 * preserved);
}

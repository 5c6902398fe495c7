#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <filesystem>
#include <fstream>

#include "lootwatch/raster.hpp"
#include "lootwatch/synth.hpp"

using namespace lootwatch;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("lootwatch_test_raster_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

Patch random_patch(int w, int h, std::uint64_t seed, SampleType t = SampleType::u16) {
    Patch p(w, h, t);
    Rng r(seed);
    for (auto& band : p.bands)
        for (double& v : band.values) v = t == SampleType::f32 ? static_cast<float>(r.uniform(0, 1000)) : double(r.below(4000));
    return p;
}

// Independent even-odd point-in-polygon by ray casting.
bool inside(const SitePolygon& poly, double y, double x) {
    bool in = false;
    const auto& v = poly.vertices;
    for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
        if ((v[i].row > y) != (v[j].row > y)) {
            const double xc = v[j].col + (y - v[j].row) * (v[i].col - v[j].col) / (v[i].row - v[j].row);
            if (x < xc) in = !in;
        }
    }
    return in;
}

}  // namespace

TEST_CASE("LSP1 zero patch decodes to zeros") {
    Patch p(186, 186, SampleType::u16, 0.0);
    auto bytes = encode_patch(p);
    auto q = decode_patch(bytes);
    CHECK(q.width == 186);
    CHECK(q.height == 186);
    for (const auto& b : q.bands)
        for (double v : b.values) CHECK(v == 0.0);
}

TEST_CASE("LSP1 header and payload size must agree") {
    const std::string header = R"({"magic":"LSP1","width":186,"height":186,"bands":["R","G","B","NIR"],"dtype":"u16"})";
    std::vector<std::uint8_t> bytes(header.begin(), header.end());
    bytes.push_back('\n');
    bytes.resize(bytes.size() + 185 * 186 * 4 * 2, 0);
    CHECK_THROWS_AS(decode_patch(bytes), DataError);
}

TEST_CASE("LSP1 rejects bad magic and non-finite floats") {
    Patch p = random_patch(4, 4, 1, SampleType::f32);
    auto bytes = encode_patch(p);
    auto bad = bytes;
    bad[10] = 'X';
    CHECK_THROWS_AS(decode_patch(bad), DataError);
    // Overwrite the first sample with a NaN.
    const auto nl = std::find(bytes.begin(), bytes.end(), '\n') - bytes.begin();
    const float nan = std::nanf("");
    std::memcpy(bytes.data() + nl + 1, &nan, 4);
    CHECK_THROWS_AS(decode_patch(bytes), DataError);
}

TEST_CASE("save/load round trip is byte exact") {
    const auto dir = scratch("roundtrip");
    for (auto t : {SampleType::u16, SampleType::f32, SampleType::u8}) {
        Patch p = random_patch(9, 7, 11, t);
        if (t == SampleType::u8)
            for (auto& b : p.bands)
                for (double& v : b.values) v = std::fmod(v, 256.0);
        save_patch(p, dir / "2023_04.lsp");
        const auto first = read_binary_file(dir / "2023_04.lsp");
        Patch q = load_patch(dir / "2023_04.lsp");
        CHECK(q.bands == p.bands);
        REQUIRE(q.year_month);
        CHECK(*q.year_month == YearMonth{2023, 4});
        save_patch(q, dir / "again.lsp");
        CHECK(read_binary_file(dir / "again.lsp") == first);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("generator patch survives a disk round trip bit-exactly") {
    const auto dir = scratch("synth");
    SceneParams params;
    params.patch_size = 64;
    params.footprint_radius_max = 20;
    const auto site = gen_site(Label::looted, params, 7);
    save_patch(site.patch, dir / "2023_01.lsp");
    const Patch back = load_patch(dir / "2023_01.lsp");
    CHECK(back.bands == site.patch.bands);
    CHECK(encode_patch(back) == encode_patch(site.patch));
    std::filesystem::remove_all(dir);
}

TEST_CASE("mask container") {
    Mask m(5, 4);
    m.set(1, 2, true);
    m.set(3, 4, true);
    auto back = decode_mask(encode_mask(m));
    CHECK(back == m);
    CHECK(back.area() == 2);
    auto bytes = encode_mask(m);
    bytes.back() = 2;
    CHECK_THROWS_AS(decode_mask(bytes), DataError);
}

TEST_CASE("patch validation") {
    CHECK_THROWS_AS(Patch(2, 5).validate(), DataError);
    Patch p(4, 4);
    p.bands[1].values[3] = -1.0;
    CHECK_THROWS_AS(p.validate(), DataError);
}

TEST_CASE("rasterize square covering centres rows 2..5") {
    SitePolygon sq{{{2.0, 2.0}, {2.0, 6.0}, {6.0, 6.0}, {6.0, 2.0}}};
    const Mask m = rasterize_polygon(sq, 10, 10);
    CHECK(m.area() == 16);
    for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 10; ++c) CHECK(m.at(r, c) == (r >= 2 && r <= 5 && c >= 2 && c <= 5));
}

TEST_CASE("rasterize rejects degenerate and self-intersecting rings") {
    CHECK_THROWS_AS(rasterize_polygon(SitePolygon{{{0, 0}, {5, 5}}}, 10, 10), DataError);
    SitePolygon bowtie{{{0, 0}, {8, 8}, {0, 8}, {8, 0}}};
    CHECK_THROWS_AS(rasterize_polygon(bowtie, 10, 10), DataError);
}

TEST_CASE("ring enclosing the grid fills everything") {
    SitePolygon big{{{-1, -1}, {-1, 20}, {20, 20}, {20, -1}}};
    CHECK(rasterize_polygon(big, 12, 9).area() == 12 * 9);
}

TEST_CASE("rasterization agrees with a ray-casting oracle and ignores ring rotation") {
    Rng rng(99);
    for (int trial = 0; trial < 40; ++trial) {
        // Star-shaped polygon: random radii at sorted angles is always simple.
        const int n = rng.between(3, 9);
        SitePolygon poly;
        for (int k = 0; k < n; ++k) {
            const double a = 2 * std::numbers::pi * (k + rng.uniform(0.1, 0.9)) / n;
            const double rad = rng.uniform(2.0, 9.0);
            poly.vertices.push_back({10.0 + rad * std::sin(a), 10.0 + rad * std::cos(a)});
        }
        const Mask m = rasterize_polygon(poly, 20, 20);
        for (int r = 0; r < 20; ++r)
            for (int c = 0; c < 20; ++c) CHECK(m.at(r, c) == inside(poly, r + 0.5, c + 0.5));
        SitePolygon rotated = poly;
        std::rotate(rotated.vertices.begin(), rotated.vertices.begin() + 1, rotated.vertices.end());
        CHECK(rasterize_polygon(rotated, 20, 20) == m);
    }
}

TEST_CASE("polygon JSON") {
    const auto p = parse_polygon("[[1,1],[1,4],[4,4],[4,1],[1,1]]");
    CHECK(p.vertices.size() == 4);
    CHECK_THROWS_AS(parse_polygon("{\"a\":1}"), DataError);
}

TEST_CASE("apply_mask identity, annihilator, summation, idempotence") {
    Patch p = random_patch(6, 5, 3);
    CHECK(apply_mask(p, Mask::full(6, 5)).bands == p.bands);
    const Patch z = apply_mask(p, Mask(6, 5));
    for (const auto& b : z.bands)
        for (double v : b.values) CHECK(v == 0.0);

    Patch c(6, 5, SampleType::u16, 5.0);
    Mask m(6, 5);
    for (int i = 0; i < 10; ++i) m.values[static_cast<std::size_t>(i * 3)] = 1;
    const Patch cm = apply_mask(c, m);
    double sum = 0;
    for (double v : cm.bands[0].values) sum += v;
    CHECK(sum == 50.0);

    CHECK(apply_mask(apply_mask(p, m), m).bands == apply_mask(p, m).bands);
    CHECK_THROWS_AS(apply_mask(p, Mask(5, 5)), DataError);
}

TEST_CASE("dilate_to_min_area") {
    Mask big(40, 40);
    for (int r = 0; r < 25; ++r)
        for (int c = 0; c < 20; ++c) big.set(r, c, true);
    CHECK(big.area() == 500);
    CHECK(dilate_to_min_area(big, 400) == big);

    Mask dot(9, 9);
    dot.set(4, 4, true);
    const Mask cross = dilate_to_min_area(dot, 5);
    CHECK(cross.area() == 5);
    CHECK(cross.at(3, 4));
    CHECK(cross.at(5, 4));
    CHECK(cross.at(4, 3));
    CHECK(cross.at(4, 5));
    CHECK_FALSE(cross.at(3, 3));

    CHECK_THROWS_AS(dilate_to_min_area(Mask(9, 9), 1), DataError);
    CHECK_THROWS_AS(dilate_to_min_area(dot, 82), DataError);
}

TEST_CASE("dilation is a superset and monotone in the target") {
    Mask m(30, 30);
    m.set(10, 12, true);
    m.set(11, 12, true);
    m.set(20, 5, true);
    Mask prev = m;
    for (std::size_t target : {3u, 10u, 40u, 100u, 300u, 900u}) {
        const Mask d = dilate_to_min_area(m, target);
        CHECK(d.area() >= target);
        for (std::size_t i = 0; i < m.values.size(); ++i) {
            if (m.values[i]) CHECK(d.values[i]);
            if (prev.values[i]) CHECK(d.values[i]);
        }
        prev = d;
    }
}

TEST_CASE("resize") {
    Grid g(2, 2);
    g.values = {0, 2, 2, 4};
    const Grid r = resize_band(g, 3, 3);
    CHECK(r.at(1, 1) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(r.at(0, 1) == doctest::Approx(1.0));
    CHECK(r.at(2, 2) == 4.0);

    Patch c(7, 5, SampleType::u16, 13.0);
    const Patch up = resize_patch(c, 224);
    CHECK(up.width == 224);
    for (const auto& b : up.bands)
        for (double v : b.values) CHECK(v == 13.0);

    Patch p = random_patch(8, 8, 5);
    CHECK(resize_patch(p, 8).bands == p.bands);
    CHECK_THROWS(resize_patch(p, 2));
}

TEST_CASE("manifest load, month scan and validation") {
    const auto dir = scratch("manifest");
    std::filesystem::create_directories(dir / "p" / "a");
    std::filesystem::create_directories(dir / "p" / "b");
    Patch p(4, 4);
    for (auto ym : {"2016_05", "2023_01", "2023_02"}) save_patch(p, dir / "p" / "a" / (std::string(ym) + ".lsp"));
    save_patch(p, dir / "p" / "b" / "2023_01.lsp");
    write_text_file(dir / "m.csv",
                    "site_id,lat,lon,label,mask_path,patch_dir\n"
                    "a,34.5,69.25,looted,masks/a.lsp,p/a\n"
                    "b,35,70,preserved,masks/b.lsp,p/b\n");
    const auto m = load_manifest(dir / "m.csv");
    REQUIRE(m.entries.size() == 2);
    CHECK(m.entries[0].months == std::vector<YearMonth>{{2023, 1}, {2023, 2}});
    CHECK(m.entries[0].label == Label::looted);
    CHECK(m.patch_file(m.entries[1], {2023, 1}) == dir / "p" / "b" / "2023_01.lsp");
    CHECK(manifest_csv(m) == read_text_file(dir / "m.csv"));

    save_patch(p, dir / "p" / "b" / "2024_01.lsp");
    CHECK_THROWS_AS(load_manifest(dir / "m.csv"), DataError);

    write_text_file(dir / "dup.csv",
                    "site_id,lat,lon,label,mask_path,patch_dir\n"
                    "a,34.5,69.25,looted,masks/a.lsp,p/a\n"
                    "a,35.0,70.0,preserved,masks/b.lsp,p/a\n");
    CHECK_THROWS_AS(validate_manifest(load_manifest(dir / "dup.csv")), DataError);
    write_text_file(dir / "bad.csv", "site,lat\n");
    CHECK_THROWS_AS(load_manifest(dir / "bad.csv"), DataError);
    std::filesystem::remove_all(dir);
}

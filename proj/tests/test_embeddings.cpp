#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "lootwatch/embeddings.hpp"

using namespace lootwatch;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("lootwatch_emb_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

FeatureTable random_table(std::size_t dim, std::size_t sites, const std::vector<YearMonth>& months, Rng& rng) {
    FeatureTable t;
    t.dim = dim;
    for (std::size_t s = 0; s < sites; ++s)
        for (auto ym : months) {
            std::vector<double> v(dim);
            for (double& x : v) x = rng.normal() * std::pow(10.0, rng.between(-5, 5));
            t.insert({"site_" + std::to_string(s), ym.str()}, v);
        }
    return t;
}

}  // namespace

TEST_CASE("family table") {
    CHECK(family_dim(parse_family("satclip_v")) == 768);
    CHECK(family_dim(parse_family("georsclip")) == 512);
    CHECK(family_dim(parse_family("dinov3")) == 1024);
    CHECK(family_dim(parse_family("prithvi")) == 1024);
    CHECK(family_dim(parse_family("satlas")) == 2048);
    CHECK(family_dim(parse_family("satmae")) == 768);
    CHECK(family_name(EmbeddingFamily::satlas) == "satlas");
    CHECK_THROWS_AS(parse_family("clip"), ConfigError);
}

TEST_CASE("column names pad to two digits or more") {
    CHECK(feature_column_name(0, 42) == "f00");
    CHECK(feature_column_name(41, 42) == "f41");
    CHECK(feature_column_name(7, 768) == "f007");
    CHECK(feature_column_name(1023, 2048) == "f1023");
}

TEST_CASE("feature table insertion rules") {
    FeatureTable t;
    t.dim = 2;
    t.insert({"a", "2023_01"}, {1.0, 2.0});
    CHECK_THROWS_AS(t.insert({"a", "2023_01"}, {1.0, 2.0}), DataError);
    CHECK_THROWS_AS(t.insert({"b", "2023_01"}, {1.0}), DataError);
    CHECK_THROWS_AS(t.insert({"c", "2023_01"}, {1.0, std::nan("")}), DataError);
    REQUIRE(t.find({"a", "2023_01"}));
    CHECK((*t.find({"a", "2023_01"}))[1] == 2.0);
    CHECK(t.find({"a", "2023_02"}) == nullptr);
}

TEST_CASE("feature store CSV round trip is exact") {
    Rng rng(4);
    const std::vector<YearMonth> months{{2022, 12}, {2023, 1}};
    const auto t = random_table(5, 3, months, rng);
    const auto back = parse_feature_store(feature_store_csv(t));
    CHECK(back.dim == 5);
    CHECK(back.rows == t.rows);
    CHECK(feature_store_csv(back) == feature_store_csv(t));
}

TEST_CASE("feature store parse errors") {
    CHECK_THROWS_AS(parse_feature_store(""), DataError);
    CHECK_THROWS_AS(parse_feature_store("site,ym,f00\n"), DataError);
    CHECK_THROWS_AS(parse_feature_store("site_id,year_month,f01\n"), DataError);
    CHECK_THROWS_AS(parse_feature_store("site_id,year_month,f00,f01\na,2023_01,1\n"), DataError);
    CHECK_THROWS_AS(parse_feature_store("site_id,year_month,f00\na,2023_01,x\n"), DataError);
    CHECK_THROWS_AS(parse_feature_store("site_id,year_month,f00\na,2023_01,1\na,2023_01,2\n"), DataError);
}

TEST_CASE("embedding series with sidecar") {
    const auto dir = scratch("sidecar");
    Rng rng(9);
    EmbeddingSeries s;
    s.family = EmbeddingFamily::georsclip;
    s.dim = 512;
    s.masked = true;
    s.table = random_table(512, 2, {{2023, 3}}, rng);
    save_embeddings(s, dir / "geo.csv");
    CHECK(fs::exists(dir / "geo.json"));
    const auto back = load_embeddings(dir / "geo.csv", "georsclip");
    CHECK(back.masked);
    CHECK(back.dim == 512);
    CHECK(back.table.rows == s.table.rows);

    CHECK_THROWS_AS(load_embeddings(dir / "geo.csv", "satmae"), DataError);
    CHECK_THROWS_AS(load_embeddings(dir / "geo.csv", "nonsense"), ConfigError);
    write_text_file(dir / "geo.json", "{\"family\":\"georsclip\",\"dim\":512}\n");
    CHECK_THROWS_AS(load_embeddings(dir / "geo.csv", "georsclip"), DataError);
    write_text_file(dir / "geo.json", "{not json");
    CHECK_THROWS_AS(load_embeddings(dir / "geo.csv", "georsclip"), DataError);
    fs::remove(dir / "geo.json");
    CHECK_THROWS_AS(load_embeddings(dir / "geo.csv", "georsclip"), DataError);

    // declared family width must match the CSV width
    EmbeddingSeries narrow = s;
    narrow.table = random_table(8, 1, {{2023, 3}}, rng);
    CHECK_THROWS_AS(save_embeddings(narrow, dir / "bad.csv"), DataError);
    write_feature_store(narrow.table, dir / "bad.csv");
    write_text_file(dir / "bad.json", "{\"family\":\"georsclip\",\"dim\":512,\"masked\":false}\n");
    CHECK_THROWS_AS(load_embeddings(dir / "bad.csv", "georsclip"), DataError);
    fs::remove_all(dir);
}

TEST_CASE("alignment orders months and reports every gap") {
    Rng rng(2);
    const std::vector<YearMonth> months{{2023, 1}, {2023, 2}, {2023, 3}};
    auto t = random_table(3, 2, months, rng);
    const std::vector<std::string> ids{"site_1", "site_0"};
    const std::vector<YearMonth> shuffled{{2023, 3}, {2023, 1}, {2023, 2}};
    const auto seqs = align_series(t, ids, shuffled);
    REQUIRE(seqs.size() == 2);
    CHECK(seqs[0].site_id == "site_1");
    CHECK(seqs[0].months == months);
    CHECK(seqs[0].vectors[2] == *t.find({"site_1", "2023_03"}));

    t.rows.erase({"site_0", "2023_02"});
    t.rows.erase({"site_1", "2023_03"});
    try {
        align_series(t, ids, months);
        FAIL("expected a DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("(site_0, 2023_02)") != std::string::npos);
        CHECK(msg.find("(site_1, 2023_03)") != std::string::npos);
    }
    CHECK_THROWS_AS(align_series(t, ids, std::vector<YearMonth>{}), ConfigError);
    const std::vector<YearMonth> dup{{2023, 1}, {2023, 1}};
    CHECK_THROWS_AS(align_series(t, ids, dup), ConfigError);
}

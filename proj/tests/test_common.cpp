#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <set>

#include "lootwatch/common.hpp"

using namespace lootwatch;

TEST_CASE("year_month parse and format") {
    CHECK(YearMonth::parse("2023_07") == YearMonth{2023, 7});
    CHECK(YearMonth::parse("2019-12") == YearMonth{2019, 12});
    CHECK(YearMonth{2017, 1}.str() == "2017_01");
    CHECK_THROWS_AS(YearMonth::parse("2023_13"), DataError);
    CHECK_THROWS_AS(YearMonth::parse("23_01"), DataError);
    const YearMonth ym{2020, 2};
    CHECK(YearMonth::from_serial(ym.serial()) == ym);
}

TEST_CASE("month range and usable window") {
    const auto r = month_range({2022, 11}, {2023, 2});
    REQUIRE(r.size() == 4);
    CHECK(r.front() == YearMonth{2022, 11});
    CHECK(r.back() == YearMonth{2023, 2});
    CHECK_FALSE(is_usable_month({2016, 12}));
    CHECK(is_usable_month({2017, 1}));
    CHECK(is_usable_month({2023, 12}));
    CHECK_FALSE(is_usable_month({2024, 1}));
}

TEST_CASE("labels") {
    CHECK(parse_label("looted") == Label::looted);
    CHECK(parse_label("preserved") == Label::preserved);
    CHECK_THROWS_AS(parse_label("maybe"), DataError);
}

TEST_CASE("rng streams are reproducible and distinct") {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        differs |= x != c.next_u64();
    }
    CHECK(differs);
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
}

TEST_CASE("rng distributions stay in range") {
    Rng r(7);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const auto k = r.below(5);
        CHECK(k < 5);
        const int m = r.between(-2, 2);
        CHECK(m >= -2);
        CHECK(m <= 2);
        const double z = r.normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.05);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("shuffle is a permutation") {
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[i] = i;
    Rng r(3);
    r.shuffle(v);
    std::set<int> s(v.begin(), v.end());
    CHECK(s.size() == 50);
    CHECK(*s.begin() == 0);
    CHECK(*s.rbegin() == 49);
}

TEST_CASE("fnv1a matches published vectors") {
    CHECK(Fnv1a().value() == 0xcbf29ce484222325ULL);
    CHECK(Fnv1a().update("a").value() == 0xaf63dc4c8601ec8cULL);
    CHECK(Fnv1a().update("foobar").value() == 0x85944171f73967e8ULL);
    CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("matrix row and column selection") {
    Matrix m(0, 3);
    m.append_row(std::vector<double>{1, 2, 3});
    m.append_row(std::vector<double>{4, 5, 6});
    CHECK(m.rows == 2);
    CHECK(m(1, 2) == 6);
    const std::vector<std::size_t> rows{1};
    CHECK(m.select_rows(rows)(0, 0) == 4);
    const std::vector<std::size_t> cols{2, 0};
    const auto s = m.select_cols(cols);
    CHECK(s.cols == 2);
    CHECK(s(0, 0) == 3);
    CHECK(s(1, 1) == 4);
    CHECK_THROWS(m.append_row(std::vector<double>{1, 2}));
}

TEST_CASE("parallel_for covers every index once for any job count") {
    for (int jobs : {1, 2, 7}) {
        std::vector<std::atomic<int>> hits(100);
        parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; }, jobs);
        for (auto& h : hits) CHECK(h.load() == 1);
    }
}

TEST_CASE("parallel_for propagates exceptions") {
    CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                        if (i == 5) throw DataError("boom");
                    }, 3),
                    DataError);
}

TEST_CASE("leakage guard trips on forbidden ids") {
    LeakageGuard guard(std::set<std::string>{"s1", "s9"});
    const std::vector<std::string> ok{"s2", "s3"};
    const std::vector<std::string> bad{"s2", "s9"};
    CHECK_NOTHROW(guard.check(ok, "fit"));
    CHECK_THROWS_AS(guard.check(bad, "fit"), InvariantError);
}

TEST_CASE("double formatting round-trips") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 12345678.901234567}) CHECK(parse_double(format_double(v)) == v);
    CHECK_THROWS_AS(parse_double("abc"), DataError);
    CHECK(split("a,,b", ',').size() == 3);
    CHECK(trim("  x \n") == "x");
}

TEST_CASE("file helpers and digests") {
    const auto dir = std::filesystem::temp_directory_path() / "lootwatch_test_common";
    std::filesystem::create_directories(dir);
    write_text_file(dir / "a.txt", "hello");
    CHECK(read_text_file(dir / "a.txt") == "hello");
    CHECK(digest_file(dir / "a.txt") == Fnv1a().update("hello").hex());
    CHECK_THROWS_AS(read_text_file(dir / "missing.txt"), DataError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("error kinds") {
    CHECK(error_kind_name(ErrorKind::config) == "config");
    CHECK(error_kind_name(ErrorKind::data) == "data");
    CHECK(error_kind_name(ErrorKind::invariant) == "invariant");
}

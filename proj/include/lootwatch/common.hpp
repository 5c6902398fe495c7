#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lootwatch {

// ---------------------------------------------------------------------------
// Errors. The CLI maps each kind to its own exit status.

enum class ErrorKind { config, data, invariant };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class InvariantError : public Error {
public:
    explicit InvariantError(const std::string& what) : Error(ErrorKind::invariant, what) {}
};

std::string_view error_kind_name(ErrorKind kind);

// ---------------------------------------------------------------------------
// Labels and calendar months.

enum class Label : int { preserved = 0, looted = 1 };

std::string_view label_name(Label label);
Label parse_label(std::string_view text);

struct YearMonth {
    int year = 0;
    int month = 0;

    auto operator<=>(const YearMonth&) const = default;

    /// Months since year 0; used for ordering and distance.
    int serial() const { return year * 12 + (month - 1); }
    static YearMonth from_serial(int serial) { return {serial / 12, serial % 12 + 1}; }

    /// "YYYY_MM"
    std::string str() const;
    /// Accepts "YYYY_MM" and "YYYY-MM".
    static YearMonth parse(std::string_view text);
};

/// Inclusive month range [first, last].
std::vector<YearMonth> month_range(YearMonth first, YearMonth last);

/// Months usable in experiments; 2016 imagery is excluded.
inline constexpr YearMonth kFirstUsableMonth{2017, 1};
inline constexpr YearMonth kLastUsableMonth{2023, 12};
bool is_usable_month(YearMonth ym);

// ---------------------------------------------------------------------------
// Dense row-major matrix of doubles.

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    void append_row(std::span<const double> values);
    Matrix select_rows(std::span<const std::size_t> indices) const;
    Matrix select_cols(std::span<const std::size_t> indices) const;

    bool operator==(const Matrix&) const = default;
};

// ---------------------------------------------------------------------------
// Deterministic random streams. Distribution code is hand-rolled so that
// sequences are identical across standard library implementations.

std::uint64_t splitmix64(std::uint64_t& state);

/// Mixes a seed with stream coordinates into an independent stream seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer on [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);
    /// Uniform integer on [lo, hi].
    int between(int lo, int hi);
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::array<std::uint64_t, 4> s_{};
    std::optional<double> spare_normal_;
};

// ---------------------------------------------------------------------------
// FNV-1a 64-bit digest, used for fit fingerprints, config hashes and output
// digests. Not cryptographic.

class Fnv1a {
public:
    Fnv1a& update(const void* bytes, std::size_t n);
    Fnv1a& update(std::string_view text) { return update(text.data(), text.size()); }
    Fnv1a& update(double value);
    Fnv1a& update(std::uint64_t value);
    std::uint64_t value() const { return h_; }
    std::string hex() const;

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

std::string digest_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t value);

// ---------------------------------------------------------------------------
// Parallel loops. Results must be written to per-index slots so that output
// does not depend on the worker count.

void set_default_jobs(int jobs);
int default_jobs();
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, int jobs = 0);

// ---------------------------------------------------------------------------
// Leakage guard: fit routines reject any row whose site id is forbidden.

class LeakageGuard {
public:
    LeakageGuard() = default;
    explicit LeakageGuard(std::set<std::string> forbidden) : forbidden_(std::move(forbidden)) {}

    void check(std::span<const std::string> site_ids, std::string_view routine) const;
    bool empty() const { return forbidden_.empty(); }

private:
    std::set<std::string> forbidden_;
};

// ---------------------------------------------------------------------------
// Text helpers.

/// 17 significant digits; round-trips every finite double.
std::string format_double(double value);
double parse_double(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);
std::string trim(std::string_view text);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace lootwatch

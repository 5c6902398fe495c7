#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lootwatch/common.hpp"

namespace lootwatch {

enum class SampleType { u8, u16, f32 };

std::string_view sample_type_name(SampleType t);
SampleType parse_sample_type(std::string_view name);

/// Single-band 2-D raster, row-major.
struct Grid {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    Grid() = default;
    Grid(int w, int h, double fill = 0.0)
        : width(w), height(h), values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
    bool contains(int r, int c) const { return r >= 0 && c >= 0 && r < height && c < width; }

    bool operator==(const Grid&) const = default;
};

enum BandIndex : std::size_t { kRed = 0, kGreen = 1, kBlue = 2, kNir = 3 };
inline constexpr std::size_t kBandCount = 4;
inline constexpr std::array<std::string_view, kBandCount> kBandNames{"R", "G", "B", "NIR"};

/// One site, one month: R, G, B, NIR samples on a common grid. Values are raw
/// digital numbers; nothing is normalized at load time.
struct Patch {
    int width = 0;
    int height = 0;
    SampleType dtype = SampleType::u16;
    std::array<Grid, kBandCount> bands;
    std::string site_id;
    std::optional<YearMonth> year_month;

    Patch() = default;
    Patch(int w, int h, SampleType t = SampleType::u16, double fill = 0.0);

    const Grid& band(std::size_t b) const { return bands[b]; }
    Grid& band(std::size_t b) { return bands[b]; }

    /// Throws DataError on size < 3, inconsistent bands, or non-finite/negative samples.
    void validate() const;
};

/// Binary site footprint.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> values;
    std::string site_id;

    Mask() = default;
    Mask(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

    static Mask full(int w, int h) { return Mask(w, h, 1); }

    bool at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c] != 0; }
    void set(int r, int c, bool on) { values[static_cast<std::size_t>(r) * width + c] = on ? 1 : 0; }
    bool contains(int r, int c) const { return r >= 0 && c >= 0 && r < height && c < width; }
    std::size_t area() const;

    bool operator==(const Mask& o) const { return width == o.width && height == o.height && values == o.values; }
};

struct PolygonVertex {
    double row = 0.0;
    double col = 0.0;
};

/// Closed ring in fractional pixel coordinates; the closing edge is implicit.
struct SitePolygon {
    std::vector<PolygonVertex> vertices;
};

// LSP1 container: one JSON header line, then little-endian band-sequential samples.
std::vector<std::uint8_t> encode_patch(const Patch& patch);
Patch decode_patch(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_mask(const Mask& mask);
Mask decode_mask(std::span<const std::uint8_t> bytes);

/// The month tag is taken from a `YYYY_MM.lsp` file name when present.
Patch load_patch(const std::filesystem::path& path);
void save_patch(const Patch& patch, const std::filesystem::path& path);
Mask load_mask(const std::filesystem::path& path);
void save_mask(const Mask& mask, const std::filesystem::path& path);

/// JSON list of [row, col] pairs. A trailing vertex equal to the first is dropped.
SitePolygon load_polygon(const std::filesystem::path& path);
SitePolygon parse_polygon(std::string_view json_text);

/// Throws DataError for fewer than 3 distinct vertices or a self-intersecting ring.
void validate_ring(const SitePolygon& poly);

/// Pixel (r, c) is on iff its center (r + 0.5, c + 0.5) is inside the ring under
/// the even-odd rule. Parts of the ring outside the grid are clipped.
Mask rasterize_polygon(const SitePolygon& poly, int width, int height);

/// I ⊙ M, band by band.
Patch apply_mask(const Patch& patch, const Mask& mask);

/// One dilation step with the 3×3 cross.
Mask dilate_cross(const Mask& mask);

/// Dilates with the 3×3 cross until area >= target_area. Returned unchanged if
/// the target is already met.
Mask dilate_to_min_area(const Mask& mask, std::size_t target_area);

/// Bilinear, corner-aligned resampling.
Grid resize_band(const Grid& band, int out_width, int out_height);
Patch resize_patch(const Patch& patch, int size);

struct ManifestEntry {
    std::string site_id;
    double lat = 0.0;
    double lon = 0.0;
    Label label = Label::preserved;
    std::filesystem::path mask_path;  // as written in the CSV
    std::filesystem::path patch_dir;  // as written in the CSV
    std::vector<YearMonth> months;    // discovered on load, ascending

    std::filesystem::path patch_path(const std::filesystem::path& root, YearMonth ym) const;
};

struct SiteManifest {
    std::filesystem::path root;  // directory holding the manifest; relative paths resolve here
    std::vector<ManifestEntry> entries;

    const ManifestEntry& find(std::string_view site_id) const;
    std::filesystem::path mask_file(const ManifestEntry& e) const;
    std::filesystem::path patch_file(const ManifestEntry& e, YearMonth ym) const;
};

/// Parses `site_id,lat,lon,label,mask_path,patch_dir`. Month files are listed from
/// each patch_dir; 2016 files are skipped, anything else outside 2017-01..2023-12
/// is an error. With scan_months == false no directories are read.
SiteManifest load_manifest(const std::filesystem::path& csv_path, bool scan_months = true);
std::string manifest_csv(const SiteManifest& manifest);
void save_manifest(const SiteManifest& manifest, const std::filesystem::path& csv_path);
void validate_manifest(const SiteManifest& manifest);

}  // namespace lootwatch

#include "lootwatch/raster.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <set>

#include <json.hpp>

namespace lootwatch {

namespace {

constexpr std::string_view kMagic = "LSP1";

std::size_t sample_bytes(SampleType t) {
    switch (t) {
        case SampleType::u8: return 1;
        case SampleType::u16: return 2;
        case SampleType::f32: return 4;
    }
    return 0;
}

struct Header {
    int width = 0;
    int height = 0;
    std::vector<std::string> bands;
    SampleType dtype = SampleType::u16;
    std::size_t payload_offset = 0;
};

std::string header_line(int width, int height, const std::vector<std::string>& bands, SampleType dtype) {
    nlohmann::ordered_json h;
    h["magic"] = kMagic;
    h["width"] = width;
    h["height"] = height;
    h["bands"] = bands;
    h["dtype"] = sample_type_name(dtype);
    return h.dump() + "\n";
}

Header parse_header(std::span<const std::uint8_t> bytes) {
    auto newline = std::find(bytes.begin(), bytes.end(), std::uint8_t{'\n'});
    if (newline == bytes.end()) throw DataError("malformed LSP1 header: no terminating newline");
    std::string text(bytes.begin(), newline);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed LSP1 header: ") + e.what());
    }
    Header h;
    try {
        if (!j.is_object() || j.value("magic", "") != kMagic) throw DataError("malformed LSP1 header: bad magic");
        h.width = j.at("width").get<int>();
        h.height = j.at("height").get<int>();
        h.bands = j.at("bands").get<std::vector<std::string>>();
        h.dtype = parse_sample_type(j.at("dtype").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed LSP1 header: ") + e.what());
    }
    if (h.width <= 0 || h.height <= 0) throw DataError("malformed LSP1 header: non-positive dimensions");
    h.payload_offset = static_cast<std::size_t>(newline - bytes.begin()) + 1;
    const std::size_t expected = static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height) *
                                 h.bands.size() * sample_bytes(h.dtype);
    const std::size_t actual = bytes.size() - h.payload_offset;
    if (actual != expected)
        throw DataError("LSP1 size mismatch: header declares " + std::to_string(expected) + " payload bytes, found " +
                        std::to_string(actual));
    return h;
}

double read_sample(const std::uint8_t* p, SampleType t) {
    switch (t) {
        case SampleType::u8: return p[0];
        case SampleType::u16: return static_cast<double>(static_cast<std::uint16_t>(p[0] | (p[1] << 8)));
        case SampleType::f32: {
            std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                                 (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
            return static_cast<double>(std::bit_cast<float>(bits));
        }
    }
    return 0.0;
}

void write_sample(std::vector<std::uint8_t>& out, double v, SampleType t) {
    switch (t) {
        case SampleType::u8: {
            if (!(v >= 0.0 && v <= 255.0) || v != std::floor(v)) throw DataError("sample not representable as u8");
            out.push_back(static_cast<std::uint8_t>(v));
            return;
        }
        case SampleType::u16: {
            if (!(v >= 0.0 && v <= 65535.0) || v != std::floor(v)) throw DataError("sample not representable as u16");
            auto u = static_cast<std::uint16_t>(v);
            out.push_back(static_cast<std::uint8_t>(u & 0xff));
            out.push_back(static_cast<std::uint8_t>(u >> 8));
            return;
        }
        case SampleType::f32: {
            auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
            for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
            return;
        }
    }
}

std::vector<std::string> patch_band_names() { return {kBandNames.begin(), kBandNames.end()}; }

double cross(PolygonVertex o, PolygonVertex a, PolygonVertex b) {
    return (a.col - o.col) * (b.row - o.row) - (a.row - o.row) * (b.col - o.col);
}

bool on_segment(PolygonVertex p, PolygonVertex a, PolygonVertex b) {
    return std::min(a.col, b.col) <= p.col && p.col <= std::max(a.col, b.col) && std::min(a.row, b.row) <= p.row &&
           p.row <= std::max(a.row, b.row);
}

int sign(double v) { return (v > 0) - (v < 0); }

bool segments_touch(PolygonVertex a, PolygonVertex b, PolygonVertex c, PolygonVertex d) {
    const int d1 = sign(cross(c, d, a));
    const int d2 = sign(cross(c, d, b));
    const int d3 = sign(cross(a, b, c));
    const int d4 = sign(cross(a, b, d));
    if (d1 * d2 < 0 && d3 * d4 < 0) return true;
    if (d1 == 0 && on_segment(a, c, d)) return true;
    if (d2 == 0 && on_segment(b, c, d)) return true;
    if (d3 == 0 && on_segment(c, a, b)) return true;
    if (d4 == 0 && on_segment(d, a, b)) return true;
    return false;
}

}  // namespace

std::string_view sample_type_name(SampleType t) {
    switch (t) {
        case SampleType::u8: return "u8";
        case SampleType::u16: return "u16";
        case SampleType::f32: return "f32";
    }
    return "u16";
}

SampleType parse_sample_type(std::string_view name) {
    if (name == "u8") return SampleType::u8;
    if (name == "u16") return SampleType::u16;
    if (name == "f32") return SampleType::f32;
    throw DataError("unknown dtype '" + std::string(name) + "'");
}

Patch::Patch(int w, int h, SampleType t, double fill) : width(w), height(h), dtype(t) {
    for (auto& b : bands) b = Grid(w, h, fill);
}

void Patch::validate() const {
    if (width < 3 || height < 3) throw DataError("patch must be at least 3x3");
    for (std::size_t b = 0; b < kBandCount; ++b) {
        const Grid& g = bands[b];
        if (g.width != width || g.height != height ||
            g.values.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
            throw DataError("band " + std::string(kBandNames[b]) + " does not match patch dimensions");
        for (double v : g.values)
            if (!std::isfinite(v) || v < 0.0)
                throw DataError("patch band " + std::string(kBandNames[b]) + " has a non-finite or negative sample");
    }
}

std::size_t Mask::area() const {
    return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](auto v) { return v != 0; }));
}

std::vector<std::uint8_t> encode_patch(const Patch& patch) {
    patch.validate();
    std::string header = header_line(patch.width, patch.height, patch_band_names(), patch.dtype);
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + patch.bands[0].values.size() * kBandCount * sample_bytes(patch.dtype));
    for (const Grid& g : patch.bands)
        for (double v : g.values) write_sample(out, v, patch.dtype);
    return out;
}

Patch decode_patch(std::span<const std::uint8_t> bytes) {
    Header h = parse_header(bytes);
    if (h.bands != patch_band_names()) throw DataError("malformed LSP1 header: patch bands must be [R,G,B,NIR]");
    Patch p(h.width, h.height, h.dtype);
    const std::uint8_t* cursor = bytes.data() + h.payload_offset;
    const std::size_t step = sample_bytes(h.dtype);
    for (Grid& g : p.bands)
        for (double& v : g.values) {
            v = read_sample(cursor, h.dtype);
            cursor += step;
        }
    p.validate();
    return p;
}

std::vector<std::uint8_t> encode_mask(const Mask& mask) {
    std::string header = header_line(mask.width, mask.height, {"M"}, SampleType::u8);
    std::vector<std::uint8_t> out(header.begin(), header.end());
    for (auto v : mask.values) {
        if (v > 1) throw DataError("mask values must be 0 or 1");
        out.push_back(v);
    }
    return out;
}

Mask decode_mask(std::span<const std::uint8_t> bytes) {
    Header h = parse_header(bytes);
    if (h.bands != std::vector<std::string>{"M"} || h.dtype != SampleType::u8)
        throw DataError("malformed LSP1 header: masks use bands [M] and dtype u8");
    Mask m(h.width, h.height);
    std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset), bytes.end(), m.values.begin());
    for (auto v : m.values)
        if (v > 1) throw DataError("mask values must be 0 or 1");
    return m;
}

Patch load_patch(const std::filesystem::path& path) {
    auto bytes = read_binary_file(path);
    Patch p;
    try {
        p = decode_patch(bytes);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    try {
        p.year_month = YearMonth::parse(path.stem().string());
    } catch (const DataError&) {
        p.year_month.reset();
    }
    return p;
}

void save_patch(const Patch& patch, const std::filesystem::path& path) { write_binary_file(path, encode_patch(patch)); }

Mask load_mask(const std::filesystem::path& path) {
    auto bytes = read_binary_file(path);
    try {
        return decode_mask(bytes);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void save_mask(const Mask& mask, const std::filesystem::path& path) { write_binary_file(path, encode_mask(mask)); }

SitePolygon parse_polygon(std::string_view json_text) {
    SitePolygon poly;
    try {
        auto j = nlohmann::json::parse(json_text);
        for (const auto& v : j) {
            if (!v.is_array() || v.size() != 2) throw DataError("polygon vertices must be [row, col] pairs");
            poly.vertices.push_back({v[0].get<double>(), v[1].get<double>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed polygon: ") + e.what());
    }
    if (poly.vertices.size() > 1) {
        const auto& f = poly.vertices.front();
        const auto& l = poly.vertices.back();
        if (f.row == l.row && f.col == l.col) poly.vertices.pop_back();
    }
    return poly;
}

SitePolygon load_polygon(const std::filesystem::path& path) { return parse_polygon(read_text_file(path)); }

void validate_ring(const SitePolygon& poly) {
    const auto& v = poly.vertices;
    const std::size_t n = v.size();
    if (n < 3) throw DataError("polygon needs at least 3 vertices, got " + std::to_string(n));
    for (const auto& p : v)
        if (!std::isfinite(p.row) || !std::isfinite(p.col)) throw DataError("polygon has a non-finite vertex");
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = v[i];
        const auto& b = v[(i + 1) % n];
        if (a.row == b.row && a.col == b.col) throw DataError("polygon has a zero-length edge at vertex " + std::to_string(i));
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = v[i], b = v[(i + 1) % n];
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto c = v[j], d = v[(j + 1) % n];
            const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
            if (adjacent) {
                // Shared vertex is fine; folding back along the same line is not.
                const auto shared = (j == i + 1) ? b : a;
                const auto pa = (j == i + 1) ? a : b;
                const auto pd = (j == i + 1) ? d : c;
                if (cross(shared, pa, pd) == 0.0) {
                    const double dot = (pa.col - shared.col) * (pd.col - shared.col) +
                                       (pa.row - shared.row) * (pd.row - shared.row);
                    if (dot > 0.0) throw DataError("polygon ring is self-intersecting (overlapping edges)");
                }
                continue;
            }
            if (segments_touch(a, b, c, d)) throw DataError("polygon ring is self-intersecting");
        }
    }
}

Mask rasterize_polygon(const SitePolygon& poly, int width, int height) {
    if (width <= 0 || height <= 0) throw DataError("raster dimensions must be positive");
    validate_ring(poly);
    Mask mask(width, height);
    const auto& v = poly.vertices;
    const std::size_t n = v.size();
    std::vector<double> xs;
    for (int r = 0; r < height; ++r) {
        const double y = r + 0.5;
        xs.clear();
        for (std::size_t i = 0; i < n; ++i) {
            PolygonVertex a = v[i], b = v[(i + 1) % n];
            if (a.row > b.row || (a.row == b.row && a.col > b.col)) std::swap(a, b);
            if ((a.row <= y) == (b.row <= y)) continue;
            xs.push_back(a.col + (y - a.row) * (b.col - a.col) / (b.row - a.row));
        }
        std::sort(xs.begin(), xs.end());
        for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
            // Centers x = c + 0.5 with xs[k] <= x < xs[k+1] have an odd crossing count to their right.
            const double lo = std::ceil(xs[k] - 0.5);
            const double hi = std::ceil(xs[k + 1] - 0.5) - 1.0;
            const int c0 = static_cast<int>(std::max(lo, 0.0));
            const int c1 = static_cast<int>(std::min(hi, static_cast<double>(width - 1)));
            for (int c = c0; c <= c1; ++c) mask.set(r, c, true);
        }
    }
    return mask;
}

Patch apply_mask(const Patch& patch, const Mask& mask) {
    if (patch.width != mask.width || patch.height != mask.height)
        throw DataError("mask " + std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                        " does not match patch " + std::to_string(patch.width) + "x" + std::to_string(patch.height));
    Patch out = patch;
    for (Grid& g : out.bands)
        for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] *= mask.values[i];
    return out;
}

Mask dilate_cross(const Mask& mask) {
    Mask out = mask;
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c) {
            if (mask.at(r, c)) continue;
            const bool hit = (r > 0 && mask.at(r - 1, c)) || (r + 1 < mask.height && mask.at(r + 1, c)) ||
                             (c > 0 && mask.at(r, c - 1)) || (c + 1 < mask.width && mask.at(r, c + 1));
            if (hit) out.set(r, c, true);
        }
    return out;
}

Mask dilate_to_min_area(const Mask& mask, std::size_t target_area) {
    std::size_t area = mask.area();
    if (area == 0) throw DataError("cannot dilate an all-zero mask");
    const std::size_t cells = static_cast<std::size_t>(mask.width) * static_cast<std::size_t>(mask.height);
    if (target_area > cells)
        throw DataError("dilation target " + std::to_string(target_area) + " exceeds grid size " + std::to_string(cells));
    Mask out = mask;
    while (area < target_area) {
        out = dilate_cross(out);
        area = out.area();
    }
    return out;
}

Grid resize_band(const Grid& band, int out_width, int out_height) {
    if (out_width < 1 || out_height < 1) throw DataError("resize target must be positive");
    if (band.width < 1 || band.height < 1) throw DataError("cannot resize an empty band");
    Grid out(out_width, out_height);
    auto source_coord = [](int i, int in, int n) {
        if (n == 1 || in == 1) return 0.0;
        return static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(n - 1);
    };
    for (int r = 0; r < out_height; ++r) {
        const double sy = source_coord(r, band.height, out_height);
        const int y0 = std::min(static_cast<int>(std::floor(sy)), band.height - 1);
        const int y1 = std::min(y0 + 1, band.height - 1);
        const double fy = sy - y0;
        for (int c = 0; c < out_width; ++c) {
            const double sx = source_coord(c, band.width, out_width);
            const int x0 = std::min(static_cast<int>(std::floor(sx)), band.width - 1);
            const int x1 = std::min(x0 + 1, band.width - 1);
            const double fx = sx - x0;
            const double top = band.at(y0, x0) * (1.0 - fx) + band.at(y0, x1) * fx;
            const double bottom = band.at(y1, x0) * (1.0 - fx) + band.at(y1, x1) * fx;
            out.at(r, c) = top * (1.0 - fy) + bottom * fy;
        }
    }
    return out;
}

Patch resize_patch(const Patch& patch, int size) {
    if (size < 3) throw DataError("resize size must be at least 3");
    if (patch.width == size && patch.height == size) return patch;
    Patch out(size, size, SampleType::f32);
    out.site_id = patch.site_id;
    out.year_month = patch.year_month;
    for (std::size_t b = 0; b < kBandCount; ++b) {
        out.bands[b] = resize_band(patch.bands[b], size, size);
        // f32 storage; round now so the in-memory patch matches its serialized form.
        for (double& v : out.bands[b].values) v = static_cast<double>(static_cast<float>(v));
    }
    return out;
}

std::filesystem::path ManifestEntry::patch_path(const std::filesystem::path& root, YearMonth ym) const {
    return root / patch_dir / (ym.str() + ".lsp");
}

const ManifestEntry& SiteManifest::find(std::string_view site_id) const {
    for (const auto& e : entries)
        if (e.site_id == site_id) return e;
    throw DataError("site '" + std::string(site_id) + "' not in manifest");
}

std::filesystem::path SiteManifest::mask_file(const ManifestEntry& e) const { return root / e.mask_path; }

std::filesystem::path SiteManifest::patch_file(const ManifestEntry& e, YearMonth ym) const {
    return e.patch_path(root, ym);
}

void validate_manifest(const SiteManifest& manifest) {
    std::set<std::string> seen;
    for (const auto& e : manifest.entries) {
        if (e.site_id.empty()) throw DataError("manifest has an empty site_id");
        if (!seen.insert(e.site_id).second) throw DataError("duplicate site_id '" + e.site_id + "' in manifest");
        for (auto ym : e.months)
            if (!is_usable_month(ym))
                throw DataError("site '" + e.site_id + "' references month " + ym.str() + " outside 2017_01..2023_12");
    }
}

SiteManifest load_manifest(const std::filesystem::path& csv_path, bool scan_months) {
    const std::string text = read_text_file(csv_path);
    SiteManifest manifest;
    manifest.root = csv_path.parent_path();
    auto lines = split(text, '\n');
    if (lines.empty() || trim(lines[0]) != "site_id,lat,lon,label,mask_path,patch_dir")
        throw DataError(csv_path.string() + ": manifest header must be site_id,lat,lon,label,mask_path,patch_dir");
    for (std::size_t i = 1; i < lines.size(); ++i) {
        std::string line = trim(lines[i]);
        if (line.empty()) continue;
        auto cells = split(line, ',');
        if (cells.size() != 6)
            throw DataError(csv_path.string() + ": line " + std::to_string(i + 1) + " has " +
                            std::to_string(cells.size()) + " fields, expected 6");
        ManifestEntry e;
        e.site_id = cells[0];
        e.lat = parse_double(cells[1]);
        e.lon = parse_double(cells[2]);
        e.label = parse_label(cells[3]);
        e.mask_path = cells[4];
        e.patch_dir = cells[5];
        if (scan_months) {
            const auto dir = manifest.root / e.patch_dir;
            if (!std::filesystem::is_directory(dir))
                throw DataError("patch_dir '" + dir.string() + "' for site '" + e.site_id + "' does not exist");
            for (const auto& f : std::filesystem::directory_iterator(dir)) {
                if (f.path().extension() != ".lsp") continue;
                YearMonth ym = YearMonth::parse(f.path().stem().string());
                if (ym.year == 2016) continue;
                e.months.push_back(ym);
            }
            std::sort(e.months.begin(), e.months.end());
        }
        manifest.entries.push_back(std::move(e));
    }
    validate_manifest(manifest);
    return manifest;
}

std::string manifest_csv(const SiteManifest& manifest) {
    std::string out = "site_id,lat,lon,label,mask_path,patch_dir\n";
    for (const auto& e : manifest.entries) {
        out += e.site_id + "," + format_double(e.lat) + "," + format_double(e.lon) + "," +
               std::string(label_name(e.label)) + "," + e.mask_path.generic_string() + "," +
               e.patch_dir.generic_string() + "\n";
    }
    return out;
}

void save_manifest(const SiteManifest& manifest, const std::filesystem::path& csv_path) {
    validate_manifest(manifest);
    write_text_file(csv_path, manifest_csv(manifest));
}

}  // namespace lootwatch

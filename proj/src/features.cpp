#include "lootwatch/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lootwatch {

namespace {

// Clockwise from east in (row, col), rows growing downward.
constexpr std::array<PixelOffset, 8> kLbpNeighbors{{{0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1}, {-1, 0}, {-1, 1}}};

void check_mask(const Grid& band, const Mask& mask) {
    if (band.width != mask.width || band.height != mask.height)
        throw DataError("mask dimensions do not match band dimensions");
}

double entropy_bits(std::span<const double> p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log2(v);
    return h;
}

double energy(std::span<const double> p) {
    double e = 0.0;
    for (double v : p) e += v * v;
    return e;
}

GlcmStats glcm_from_levels(std::span<const int> q, int width, int height, int levels,
                           std::span<const PixelOffset> offsets) {
    GlcmStats acc;
    int used = 0;
    for (const auto& off : offsets) {
        auto m = glcm_matrix(q, width, height, levels, off);
        if (m.empty()) continue;
        GlcmStats s = glcm_stats(m, levels);
        acc.contrast += s.contrast;
        acc.homogeneity += s.homogeneity;
        acc.energy += s.energy;
        acc.entropy += s.entropy;
        ++used;
    }
    if (used == 0) throw DataError("no co-occurring masked pixel pair; mask too fragmented for GLCM");
    acc.contrast /= used;
    acc.homogeneity /= used;
    acc.energy /= used;
    acc.entropy /= used;
    return acc;
}

LbpStats lbp_from_interior(const Grid& band, std::span<const std::size_t> interior) {
    if (interior.empty()) throw DataError("no masked pixel with a fully masked 8-neighborhood (LBP)");
    std::array<double, 256> hist{};
    for (std::size_t idx : interior) {
        const int r = static_cast<int>(idx / band.width);
        const int c = static_cast<int>(idx % band.width);
        hist[lbp_code(band, r, c)] += 1.0;
    }
    const double n = static_cast<double>(interior.size());
    for (double& h : hist) h /= n;
    return {entropy_bits(hist), energy(hist)};
}

SobelStats sobel_from_interior(const Grid& band, std::span<const std::size_t> interior) {
    if (interior.empty()) throw DataError("no masked pixel with a fully masked 8-neighborhood (Sobel)");
    std::vector<double> mags;
    mags.reserve(interior.size());
    double sum = 0.0;
    for (std::size_t idx : interior) {
        const int r = static_cast<int>(idx / band.width);
        const int c = static_cast<int>(idx % band.width);
        const double m = sobel_magnitude(band, r, c);
        mags.push_back(m);
        sum += m;
    }
    const double mean = sum / static_cast<double>(mags.size());
    const auto above = std::count_if(mags.begin(), mags.end(), [mean](double m) { return m > mean; });
    return {mean, static_cast<double>(above) / static_cast<double>(mags.size())};
}

}  // namespace

const std::vector<std::string>& handcrafted_feature_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (auto b : kBandNames) n.push_back("mean_" + std::string(b));
        for (auto b : kBandNames) n.push_back("std_" + std::string(b));
        n.push_back("mean_all");
        n.push_back("std_all");
        n.push_back("ndvi_mean");
        n.push_back("ndwi_mean");
        for (auto b : kBandNames)
            for (const char* s : {"contrast", "homogeneity", "energy", "entropy"})
                n.push_back("glcm_" + std::string(b) + "_" + s);
        for (auto b : kBandNames) n.push_back("sobel_" + std::string(b) + "_mean");
        n.push_back("sobel_R_density");
        n.push_back("sobel_NIR_density");
        for (auto b : kBandNames) {
            n.push_back("lbp_" + std::string(b) + "_entropy");
            n.push_back("lbp_" + std::string(b) + "_energy");
        }
        return n;
    }();
    return names;
}

std::array<double, kSpectralDim> spectral_features(const Patch& patch, const Mask& mask) {
    if (patch.width != mask.width || patch.height != mask.height)
        throw DataError("mask dimensions do not match patch dimensions");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < mask.values.size(); ++i)
        if (mask.values[i]) idx.push_back(i);
    if (idx.size() < 2) throw DataError("spectral features need at least 2 masked pixels, got " + std::to_string(idx.size()));

    std::array<double, kSpectralDim> out{};
    const double n = static_cast<double>(idx.size());
    double total = 0.0;
    for (std::size_t b = 0; b < kBandCount; ++b) {
        double s = 0.0;
        for (auto i : idx) s += patch.bands[b].values[i];
        out[layout::kMean + b] = s / n;
        total += s;
    }
    const double mean_all = total / (4.0 * n);
    double ss_all = 0.0;
    for (std::size_t b = 0; b < kBandCount; ++b) {
        const double m = out[layout::kMean + b];
        double ss = 0.0;
        for (auto i : idx) {
            const double v = patch.bands[b].values[i];
            ss += (v - m) * (v - m);
            ss_all += (v - mean_all) * (v - mean_all);
        }
        out[layout::kStd + b] = std::sqrt(ss / n);
    }
    out[layout::kMeanAll] = mean_all;
    out[layout::kStdAll] = std::sqrt(ss_all / (4.0 * n));

    double ndvi = 0.0, ndwi = 0.0;
    for (auto i : idx) {
        const double r = patch.bands[kRed].values[i];
        const double g = patch.bands[kGreen].values[i];
        const double nir = patch.bands[kNir].values[i];
        ndvi += (nir - r) / (nir + r + kIndexEpsilon);
        ndwi += (g - nir) / (g + nir + kIndexEpsilon);
    }
    out[layout::kNdvi] = ndvi / n;
    out[layout::kNdwi] = ndwi / n;
    return out;
}

std::vector<int> quantize_masked(const Grid& band, const Mask& mask, int levels) {
    check_mask(band, mask);
    if (levels < 2) throw DataError("GLCM needs at least 2 quantization levels");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < band.values.size(); ++i) {
        if (!mask.values[i]) continue;
        lo = std::min(lo, band.values[i]);
        hi = std::max(hi, band.values[i]);
    }
    std::vector<int> q(band.values.size(), -1);
    if (lo > hi) return q;
    const double span = hi - lo;
    for (std::size_t i = 0; i < band.values.size(); ++i) {
        if (!mask.values[i]) continue;
        if (span <= 0.0) {
            q[i] = 0;
            continue;
        }
        const int level = static_cast<int>(std::floor((band.values[i] - lo) / span * levels));
        q[i] = std::clamp(level, 0, levels - 1);
    }
    return q;
}

std::vector<double> glcm_matrix(std::span<const int> q, int width, int height, int levels, PixelOffset off) {
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(levels) * levels, 0);
    std::uint64_t total = 0;
    const int r0 = std::max(0, -off.dr), r1 = std::min(height, height - off.dr);
    const int c0 = std::max(0, -off.dc), c1 = std::min(width, width - off.dc);
    for (int r = r0; r < r1; ++r) {
        const int* row = q.data() + static_cast<std::size_t>(r) * width;
        const int* nrow = q.data() + static_cast<std::size_t>(r + off.dr) * width + off.dc;
        for (int c = c0; c < c1; ++c) {
            const int a = row[c];
            const int b = nrow[c];
            if (a < 0 || b < 0) continue;
            ++counts[static_cast<std::size_t>(a) * levels + b];
            ++counts[static_cast<std::size_t>(b) * levels + a];
            total += 2;
        }
    }
    if (total == 0) return {};
    std::vector<double> p(counts.size());
    const double denom = static_cast<double>(total);
    for (std::size_t i = 0; i < counts.size(); ++i) p[i] = static_cast<double>(counts[i]) / denom;
    return p;
}

GlcmStats glcm_stats(std::span<const double> m, int levels) {
    GlcmStats s;
    for (int i = 0; i < levels; ++i)
        for (int j = 0; j < levels; ++j) {
            const double p = m[static_cast<std::size_t>(i) * levels + j];
            if (p == 0.0) continue;
            const double d = static_cast<double>(i - j);
            s.contrast += p * d * d;
            s.homogeneity += p / (1.0 + d * d);
            s.energy += p * p;
            s.entropy -= p * std::log2(p);
        }
    return s;
}

GlcmStats glcm_features(const Grid& band, const Mask& mask, int levels, std::span<const PixelOffset> offsets) {
    if (mask.area() == 0) throw DataError("GLCM on an empty mask");
    auto q = quantize_masked(band, mask, levels);
    return glcm_from_levels(q, band.width, band.height, levels, offsets);
}

std::vector<std::size_t> interior_pixels(const Mask& mask) {
    std::vector<std::size_t> out;
    for (int r = 1; r + 1 < mask.height; ++r)
        for (int c = 1; c + 1 < mask.width; ++c) {
            bool ok = true;
            for (int dr = -1; dr <= 1 && ok; ++dr)
                for (int dc = -1; dc <= 1 && ok; ++dc) ok = mask.at(r + dr, c + dc);
            if (ok) out.push_back(static_cast<std::size_t>(r) * mask.width + c);
        }
    return out;
}

std::uint8_t lbp_code(const Grid& band, int r, int c) {
    const double center = band.at(r, c);
    unsigned code = 0;
    for (std::size_t k = 0; k < kLbpNeighbors.size(); ++k)
        if (band.at(r + kLbpNeighbors[k].dr, c + kLbpNeighbors[k].dc) >= center) code |= 1u << k;
    return static_cast<std::uint8_t>(code);
}

LbpStats lbp_features(const Grid& band, const Mask& mask) {
    check_mask(band, mask);
    auto interior = interior_pixels(mask);
    return lbp_from_interior(band, interior);
}

double sobel_magnitude(const Grid& band, int r, int c) {
    auto p = [&](int dr, int dc) { return band.at(r + dr, c + dc); };
    const double gx = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
    const double gy = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
    return std::sqrt(gx * gx + gy * gy);
}

SobelStats sobel_edge_features(const Grid& band, const Mask& mask) {
    check_mask(band, mask);
    auto interior = interior_pixels(mask);
    return sobel_from_interior(band, interior);
}

HandcraftedVector extract_handcrafted(const Patch& patch, const Mask& mask) {
    if (patch.width != mask.width || patch.height != mask.height)
        throw DataError("mask dimensions do not match patch dimensions");
    HandcraftedVector out;
    out.site_id = patch.site_id;
    out.year_month = patch.year_month;

    auto spectral = spectral_features(patch, mask);
    std::copy(spectral.begin(), spectral.end(), out.values.begin());

    const auto interior = interior_pixels(mask);
    for (std::size_t b = 0; b < kBandCount; ++b) {
        const Grid& band = patch.bands[b];
        auto q = quantize_masked(band, mask, kGlcmLevels);
        GlcmStats g = glcm_from_levels(q, band.width, band.height, kGlcmLevels, kGlcmOffsets);
        out.values[layout::glcm(b, 0)] = g.contrast;
        out.values[layout::glcm(b, 1)] = g.homogeneity;
        out.values[layout::glcm(b, 2)] = g.energy;
        out.values[layout::glcm(b, 3)] = g.entropy;

        SobelStats s = sobel_from_interior(band, interior);
        out.values[layout::kSobelMean + b] = s.mean_magnitude;
        if (b == kRed) out.values[layout::kSobelDensityRed] = s.edge_density;
        if (b == kNir) out.values[layout::kSobelDensityNir] = s.edge_density;

        LbpStats l = lbp_from_interior(band, interior);
        out.values[layout::kLbp + 2 * b] = l.entropy;
        out.values[layout::kLbp + 2 * b + 1] = l.energy;
    }
    for (double v : out.values)
        if (!std::isfinite(v)) throw InvariantError("handcrafted feature is not finite");
    return out;
}

}  // namespace lootwatch

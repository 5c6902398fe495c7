#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lootwatch/raster.hpp"

namespace lootwatch {

inline constexpr std::size_t kSpectralDim = 12;
inline constexpr std::size_t kTextureDim = 30;
inline constexpr std::size_t kHandcraftedDim = kSpectralDim + kTextureDim;
inline constexpr int kGlcmLevels = 16;
inline constexpr double kIndexEpsilon = 1e-6;
inline constexpr std::string_view kHandcraftedLayoutVersion = "hf42-v1";

// Layout of the 42-vector:
//   [0..3]   mean R, G, B, NIR          [4..7]   population std R, G, B, NIR
//   [8]      mean over all bands        [9]      std over all bands
//   [10]     NDVI mean                  [11]     NDWI mean
//   [12..27] GLCM {contrast, homogeneity, energy, entropy} for R, G, B, NIR
//   [28..31] Sobel mean magnitude R, G, B, NIR
//   [32..33] Sobel edge density R, NIR
//   [34..41] LBP {entropy, energy} for R, G, B, NIR
namespace layout {
inline constexpr std::size_t kMean = 0;
inline constexpr std::size_t kStd = 4;
inline constexpr std::size_t kMeanAll = 8;
inline constexpr std::size_t kStdAll = 9;
inline constexpr std::size_t kNdvi = 10;
inline constexpr std::size_t kNdwi = 11;
inline constexpr std::size_t kGlcm = 12;  // + 4 * band + stat
inline constexpr std::size_t kSobelMean = 28;
inline constexpr std::size_t kSobelDensityRed = 32;
inline constexpr std::size_t kSobelDensityNir = 33;
inline constexpr std::size_t kLbp = 34;  // + 2 * band + {0 entropy, 1 energy}

constexpr std::size_t glcm(std::size_t band, std::size_t stat) { return kGlcm + 4 * band + stat; }
constexpr std::size_t glcm_contrast(std::size_t band) { return glcm(band, 0); }
}  // namespace layout

const std::vector<std::string>& handcrafted_feature_names();

struct GlcmStats {
    double contrast = 0.0;
    double homogeneity = 0.0;
    double energy = 0.0;
    double entropy = 0.0;  // bits
};

struct PixelOffset {
    int dr = 0;
    int dc = 0;
};

/// Distance 1 at 0°, 45°, 90°, 135°.
inline constexpr std::array<PixelOffset, 4> kGlcmOffsets{{{0, 1}, {-1, 1}, {-1, 0}, {-1, -1}}};

std::array<double, kSpectralDim> spectral_features(const Patch& patch, const Mask& mask);

/// Min–max quantization of the masked pixels into [0, levels). Unmasked pixels get -1.
/// A constant region maps to level 0.
std::vector<int> quantize_masked(const Grid& band, const Mask& mask, int levels);

/// Symmetric co-occurrence counts over pairs where both pixels are masked, normalized to
/// sum 1; levels*levels entries, row-major. Empty when the offset yields no pair.
std::vector<double> glcm_matrix(std::span<const int> levels_map, int width, int height, int levels,
                                PixelOffset offset);

GlcmStats glcm_stats(std::span<const double> matrix, int levels);

/// Stats averaged over the offsets that yield at least one masked pair.
GlcmStats glcm_features(const Grid& band, const Mask& mask, int levels = kGlcmLevels,
                        std::span<const PixelOffset> offsets = kGlcmOffsets);

/// Masked pixels whose whole 8-neighborhood lies inside the grid and the mask.
std::vector<std::size_t> interior_pixels(const Mask& mask);

/// 8-bit code, bit k set when neighbor k >= center; neighbors clockwise from east.
std::uint8_t lbp_code(const Grid& band, int r, int c);

struct LbpStats {
    double entropy = 0.0;
    double energy = 0.0;
};
LbpStats lbp_features(const Grid& band, const Mask& mask);

struct SobelStats {
    double mean_magnitude = 0.0;
    double edge_density = 0.0;
};
/// Gradient magnitude sqrt(gx² + gy²) at interior pixels; gx responds to changes along columns.
double sobel_magnitude(const Grid& band, int r, int c);
SobelStats sobel_edge_features(const Grid& band, const Mask& mask);

struct HandcraftedVector {
    std::array<double, kHandcraftedDim> values{};
    std::string site_id;
    std::optional<YearMonth> year_month;
};

HandcraftedVector extract_handcrafted(const Patch& patch, const Mask& mask);

}  // namespace lootwatch

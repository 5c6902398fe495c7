#pragma once

// Deliberately naive reference implementations used to cross-check the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "lootwatch/common.hpp"
#include "lootwatch/features.hpp"
#include "lootwatch/raster.hpp"

namespace oracle {

struct GlcmResult {
    std::vector<std::vector<double>> matrices;  // one normalized L×L matrix per offset with pairs (row-major)
    lootwatch::GlcmStats stats;
    bool any = false;
};

/// Min–max quantization within the mask, then every ordered pixel pair is tested
/// against the offset in both directions.
inline GlcmResult glcm(const lootwatch::Grid& band, const lootwatch::Mask& mask, int L) {
    const int w = band.width, h = band.height;
    double lo = 1e300, hi = -1e300;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (mask.at(r, c)) {
                lo = std::min(lo, band.at(r, c));
                hi = std::max(hi, band.at(r, c));
            }
    auto level = [&](int r, int c) {
        if (hi == lo) return 0;
        int q = static_cast<int>(std::floor((band.at(r, c) - lo) / (hi - lo) * L));
        return std::min(std::max(q, 0), L - 1);
    };
    GlcmResult out;
    int used = 0;
    for (const auto& off : lootwatch::kGlcmOffsets) {
        std::vector<double> counts(static_cast<std::size_t>(L * L), 0.0);
        double total = 0;
        for (int r1 = 0; r1 < h; ++r1)
            for (int c1 = 0; c1 < w; ++c1)
                for (int r2 = 0; r2 < h; ++r2)
                    for (int c2 = 0; c2 < w; ++c2) {
                        if (!mask.at(r1, c1) || !mask.at(r2, c2)) continue;
                        const bool fwd = r2 - r1 == off.dr && c2 - c1 == off.dc;
                        const bool back = r1 - r2 == off.dr && c1 - c2 == off.dc;
                        if (!fwd && !back) continue;
                        counts[static_cast<std::size_t>(level(r1, c1) * L + level(r2, c2))] += 1;
                        total += 1;
                    }
        if (total == 0) continue;
        for (double& v : counts) v /= total;
        lootwatch::GlcmStats s;
        for (int i = 0; i < L; ++i)
            for (int j = 0; j < L; ++j) {
                const double p = counts[static_cast<std::size_t>(i * L + j)];
                const double d2 = double(i - j) * double(i - j);
                s.contrast += p * d2;
                s.homogeneity += p / (1 + d2);
                s.energy += p * p;
                if (p > 0) s.entropy -= p * std::log2(p);
            }
        out.stats.contrast += s.contrast;
        out.stats.homogeneity += s.homogeneity;
        out.stats.energy += s.energy;
        out.stats.entropy += s.entropy;
        out.matrices.push_back(std::move(counts));
        ++used;
    }
    out.any = used > 0;
    if (used) {
        out.stats.contrast /= used;
        out.stats.homogeneity /= used;
        out.stats.energy /= used;
        out.stats.entropy /= used;
    }
    return out;
}

/// Fraction of positive–negative pairs ranked correctly, ties counting one half.
inline double auroc_pairs(std::span<const int> y, std::span<const double> s) {
    double good = 0, pairs = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (!(y[i] == 1 && y[j] == 0)) continue;
            pairs += 1;
            if (s[i] > s[j]) good += 1;
            else if (s[i] == s[j]) good += 0.5;
        }
    return good / pairs;
}

/// Shapley values from the permutation definition: the average marginal
/// contribution over all k! orderings, with v(S) the background-mean margin.
inline std::vector<double> shapley_permutations(const std::function<double(std::span<const double>)>& f,
                                                std::span<const double> x, const lootwatch::Matrix& background,
                                                double* phi0 = nullptr) {
    const std::size_t k = x.size();
    auto value = [&](const std::vector<bool>& in) {
        double acc = 0;
        std::vector<double> z(k);
        for (std::size_t b = 0; b < background.rows; ++b) {
            for (std::size_t j = 0; j < k; ++j) z[j] = in[j] ? x[j] : background(b, j);
            acc += f(z);
        }
        return acc / static_cast<double>(background.rows);
    };
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> phi(k, 0.0);
    double count = 0;
    do {
        std::vector<bool> in(k, false);
        double prev = value(in);
        for (std::size_t idx : order) {
            in[idx] = true;
            const double cur = value(in);
            phi[idx] += cur - prev;
            prev = cur;
        }
        count += 1;
    } while (std::next_permutation(order.begin(), order.end()));
    for (double& p : phi) p /= count;
    if (phi0) *phi0 = value(std::vector<bool>(k, false));
    return phi;
}

}  // namespace oracle

#pragma once

// Test-side reference implementations, written independently of the library
// code they check. Deliberately the dumbest correct versions.

#include <cmath>
#include <cstddef>
#include <vector>

#include "countlab/image.hpp"
#include "countlab/scene.hpp"

namespace oracle {

inline bool is_background(const countlab::Image& img, int x, int y) {
    for (int c = 0; c < img.channels; ++c)
        if (img.at(x, y, c) != 255) return false;
    return true;
}

// 4-connected components of non-background pixels.
inline int count_components(const countlab::Image& img) {
    std::vector<char> seen(static_cast<std::size_t>(img.width * img.height), 0);
    auto idx = [&](int x, int y) {
        return static_cast<std::size_t>(y * img.width + x);
    };
    int components = 0;
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (seen[idx(x, y)] || is_background(img, x, y)) continue;
            ++components;
            stack.push_back({x, y});
            seen[idx(x, y)] = 1;
            while (!stack.empty()) {
                auto [cx, cy] = stack.back();
                stack.pop_back();
                const int dx[4] = {1, -1, 0, 0};
                const int dy[4] = {0, 0, 1, -1};
                for (int d = 0; d < 4; ++d) {
                    int nx = cx + dx[d], ny = cy + dy[d];
                    if (nx < 0 || ny < 0 || nx >= img.width || ny >= img.height)
                        continue;
                    if (seen[idx(nx, ny)] || is_background(img, nx, ny)) continue;
                    seen[idx(nx, ny)] = 1;
                    stack.push_back({nx, ny});
                }
            }
        }
    }
    return components;
}

// Vertex count of a single filled regular polygon. The boundary-radius
// profile around the centroid is periodic with the side count, so the
// candidate whose Fourier harmonic carries the most energy wins; a k-gon has
// no energy at harmonics that are not multiples of k, and decreasing energy
// along k, 2k, ..., so the argmax lands on k itself.
inline int polygon_sides_from_image(const countlab::Image& img, int lo = 3,
                                    int hi = 8) {
    double cx = 0, cy = 0;
    long n = 0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (!is_background(img, x, y)) {
                cx += x;
                cy += y;
                ++n;
            }
    if (n == 0) return 0;
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);

    const int bins = 360;
    std::vector<double> profile(bins, -1.0);  // -1 marks an unpopulated bin
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (is_background(img, x, y)) continue;
            double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            double r = std::sqrt(dx * dx + dy * dy);
            double a = std::atan2(dy, dx);
            int b = static_cast<int>(std::floor((a + M_PI) / (2 * M_PI) * bins));
            b = std::min(std::max(b, 0), bins - 1);
            profile[static_cast<std::size_t>(b)] =
                std::max(profile[static_cast<std::size_t>(b)], r);
        }
    }
    // bins no pixel center fell into borrow the nearest populated radius
    for (int b = 0; b < bins; ++b) {
        if (profile[static_cast<std::size_t>(b)] >= 0) continue;
        for (int d = 1; d < bins; ++d) {
            int right = (b + d) % bins, left = (b - d + bins) % bins;
            if (profile[static_cast<std::size_t>(right)] >= 0) {
                profile[static_cast<std::size_t>(b)] =
                    profile[static_cast<std::size_t>(right)];
                break;
            }
            if (profile[static_cast<std::size_t>(left)] >= 0) {
                profile[static_cast<std::size_t>(b)] =
                    profile[static_cast<std::size_t>(left)];
                break;
            }
        }
    }
    double mean = 0;
    for (double v : profile) mean += v;
    mean /= bins;

    int best = lo;
    double best_energy = -1.0;
    for (int k = lo; k <= hi; ++k) {
        double re = 0, im = 0;
        for (int b = 0; b < bins; ++b) {
            double a = 2 * M_PI * k * b / bins;
            re += (profile[static_cast<std::size_t>(b)] - mean) * std::cos(a);
            im += (profile[static_cast<std::size_t>(b)] - mean) * std::sin(a);
        }
        double energy = re * re + im * im;
        if (energy > best_energy) {
            best_energy = energy;
            best = k;
        }
    }
    return best;
}

// The four counting metrics, as plainly as possible.
struct Metrics {
    double acc = 0, mae = 0, rmse = 0, obo = 0;
};

inline Metrics metrics(const std::vector<int>& preds, const std::vector<int>& gts) {
    Metrics m;
    double n = static_cast<double>(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        double d = preds[i] - gts[i];
        if (d == 0) m.acc += 1;
        if (std::fabs(d) <= 1) m.obo += 1;
        m.mae += std::fabs(d);
        m.rmse += d * d;
    }
    m.acc /= n;
    m.obo /= n;
    m.mae /= n;
    m.rmse = std::sqrt(m.rmse / n);
    return m;
}

// Pixels of the mask falling inside a patch, counted straight off the image.
inline int mask_pixels_in_patch(const countlab::Image& mask, int patch_px,
                                int patch_index) {
    int grid = mask.width / patch_px;
    int px = (patch_index % grid) * patch_px;
    int py = (patch_index / grid) * patch_px;
    int count = 0;
    for (int y = py; y < py + patch_px; ++y)
        for (int x = px; x < px + patch_px; ++x) count += mask.at(x, y, 0) != 0;
    return count;
}

}  // namespace oracle

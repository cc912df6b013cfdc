#include "reflect/image_ops.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace reflect {

Gradient spatial_gradient(const Frame& frame, int c) {
    const int w = frame.width, h = frame.height;
    Gradient g{Grid<double>(w, h), Grid<double>(w, h)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (w > 1) {
                if (x == 0)
                    g.gx(x, y) = frame.at(1, y, c) - frame.at(0, y, c);
                else if (x == w - 1)
                    g.gx(x, y) = frame.at(w - 1, y, c) - frame.at(w - 2, y, c);
                else
                    g.gx(x, y) = 0.5 * (frame.at(x + 1, y, c) - frame.at(x - 1, y, c));
            }
            if (h > 1) {
                if (y == 0)
                    g.gy(x, y) = frame.at(x, 1, c) - frame.at(x, 0, c);
                else if (y == h - 1)
                    g.gy(x, y) = frame.at(x, h - 1, c) - frame.at(x, h - 2, c);
                else
                    g.gy(x, y) = 0.5 * (frame.at(x, y + 1, c) - frame.at(x, y - 1, c));
            }
        }
    }
    return g;
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = int(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

}  // namespace

Frame gaussian_blur(const Frame& frame, double sigma) {
    const std::vector<double> k = gaussian_kernel(sigma);
    const int r = int(k.size() / 2);
    const int w = frame.width, h = frame.height, ch = frame.channels;
    Frame tmp(w, h, ch), out(w, h, ch);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int i = -r; i <= r; ++i) acc += k[i + r] * frame.at(std::clamp(x + i, 0, w - 1), y, c);
                tmp.at(x, y, c) = acc;
            }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp.at(x, std::clamp(y + i, 0, h - 1), c);
                out.at(x, y, c) = acc;
            }
    return out;
}

EdgeMap canny(const Frame& frame, double low, double high) {
    if (!(low >= 0.0 && low <= high && high <= 1.0))
        fail("invalid-thresholds", "canny thresholds must satisfy 0 <= low <= high <= 1");
    const int w = frame.width, h = frame.height;
    EdgeMap edges(w, h, 0);
    if (w < 3 || h < 3) return edges;

    // Removing the minimum first makes the result independent of a DC offset.
    Frame shifted = frame.channels == 1 ? frame : frame.channel(0);
    const double lo = *std::min_element(shifted.data.begin(), shifted.data.end());
    for (double& v : shifted.data) v -= lo;
    const Frame s = gaussian_blur(shifted, 1.4);

    auto px = [&](int x, int y) { return s.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1)); };
    Grid<double> mag(w, h), gxs(w, h), gys(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double gx = (px(x + 1, y - 1) + 2 * px(x + 1, y) + px(x + 1, y + 1)) -
                              (px(x - 1, y - 1) + 2 * px(x - 1, y) + px(x - 1, y + 1));
            const double gy = (px(x - 1, y + 1) + 2 * px(x, y + 1) + px(x + 1, y + 1)) -
                              (px(x - 1, y - 1) + 2 * px(x, y - 1) + px(x + 1, y - 1));
            gxs(x, y) = gx;
            gys(x, y) = gy;
            mag(x, y) = std::hypot(gx, gy);
        }

    auto m = [&](int x, int y) { return (x < 0 || y < 0 || x >= w || y >= h) ? 0.0 : mag(x, y); };
    constexpr double kTan22 = 0.41421356237309503;
    Grid<std::uint8_t> state(w, h, 0);  // 0 none, 1 weak, 2 strong
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double v = mag(x, y);
            if (v < low || v == 0.0) continue;
            const double ax = std::abs(gxs(x, y)), ay = std::abs(gys(x, y));
            double before, after;
            if (ay <= kTan22 * ax) {
                before = m(x - 1, y);
                after = m(x + 1, y);
            } else if (ax <= kTan22 * ay) {
                before = m(x, y - 1);
                after = m(x, y + 1);
            } else if ((gxs(x, y) > 0) == (gys(x, y) > 0)) {
                before = m(x - 1, y - 1);
                after = m(x + 1, y + 1);
            } else {
                before = m(x + 1, y - 1);
                after = m(x - 1, y + 1);
            }
            if (v > before && v >= after) state(x, y) = v >= high ? 2 : 1;
        }

    std::deque<std::pair<int, int>> queue;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (state(x, y) == 2) {
                edges(x, y) = 1;
                queue.emplace_back(x, y);
            }
    while (!queue.empty()) {
        auto [x, y] = queue.front();
        queue.pop_front();
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int nx = x + dx, ny = y + dy;
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                if (state(nx, ny) == 1 && !edges(nx, ny)) {
                    edges(nx, ny) = 1;
                    queue.emplace_back(nx, ny);
                }
            }
    }
    return edges;
}

double sample_bilinear(const Frame& frame, double x, double y, int c) {
    const int w = frame.width, h = frame.height;
    x = std::clamp(x, 0.0, double(w - 1));
    y = std::clamp(y, 0.0, double(h - 1));
    const int x0 = int(std::floor(x)), y0 = int(std::floor(y));
    const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0, fy = y - y0;
    return (1 - fx) * (1 - fy) * frame.at(x0, y0, c) + fx * (1 - fy) * frame.at(x1, y0, c) +
           (1 - fx) * fy * frame.at(x0, y1, c) + fx * fy * frame.at(x1, y1, c);
}

namespace {

double snap(double v) {
    const double r = std::round(v);
    return std::abs(v - r) < 1e-9 ? r : v;
}

}  // namespace

WarpResult warp_homography(const Frame& frame, const Homography& h) {
    if (std::abs(h.matrix().determinant()) <= 1e-12) fail("singular-homography", "warp matrix is singular");
    const Homography inv = h.inverse();
    const int w = frame.width, ht = frame.height;
    WarpResult out{Frame(w, ht, frame.channels), ValidityMask(w, ht, 0)};
    for (int y = 0; y < ht; ++y)
        for (int x = 0; x < w; ++x) {
            Point2 q = inv.apply({double(x), double(y)});
            q = {snap(q.x), snap(q.y)};
            if (!(q.x >= 0.0 && q.y >= 0.0 && q.x <= w - 1 && q.y <= ht - 1)) continue;
            out.valid(x, y) = 1;
            for (int c = 0; c < frame.channels; ++c) out.frame.at(x, y, c) = sample_bilinear(frame, q.x, q.y, c);
        }
    return out;
}

std::vector<Frame> gaussian_pyramid(const Frame& frame, int levels) {
    if (levels < 1 || std::min(frame.width, frame.height) / std::pow(2.0, levels - 1) < 8.0)
        fail("too-many-levels", "pyramid levels exceed image size (coarsest level must be >= 8 px)");
    std::vector<Frame> out{frame};
    for (int l = 1; l < levels; ++l) {
        const Frame blurred = gaussian_blur(out.back(), 1.0);
        Frame half((blurred.width + 1) / 2, (blurred.height + 1) / 2, blurred.channels);
        for (int y = 0; y < half.height; ++y)
            for (int x = 0; x < half.width; ++x)
                for (int c = 0; c < half.channels; ++c) half.at(x, y, c) = blurred.at(2 * x, 2 * y, c);
        out.push_back(std::move(half));
    }
    return out;
}

}  // namespace reflect

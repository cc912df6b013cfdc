#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "reflect/hints.hpp"
#include "reflect/image_ops.hpp"
#include "reflect/synth.hpp"
#include "reflect/tracker.hpp"

namespace fixtures {

using namespace reflect;

/// Code of the reflect::Error thrown by fn, or "" if it returns normally.
inline std::string error_code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("reflect-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline Frame random_frame(int w, int h, int c, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Frame f(w, h, c);
    for (double& v : f.data) v = u(rng);
    return f;
}

/// Blurred noise stretched to [0.05, 0.95]: corners everywhere, smooth enough for LK.
inline Frame textured_frame(int w, int h, std::uint32_t seed, double sigma = 1.5) {
    Frame f = gaussian_blur(random_frame(w, h, 1, seed), sigma);
    const auto [lo, hi] = std::minmax_element(f.data.begin(), f.data.end());
    const double a = *lo, b = *hi;
    for (double& v : f.data) v = 0.05 + 0.9 * (v - a) / (b - a);
    return f;
}

/// Luma sequence of a textured base whose content moves by v px/frame.
inline FrameSequence translating_sequence(int n, int w, int h, Point2 v, std::uint32_t seed) {
    const int bw = w + int(std::ceil((n - 1) * std::abs(v.x))) + 2;
    const int bh = h + int(std::ceil((n - 1) * std::abs(v.y))) + 2;
    return make_translating_sequence(textured_frame(bw, bh, seed), v, n, w, h);
}

inline FrameSequence constant_sequence(int n, int w, int h, double value, int channels = 1) {
    return FrameSequence(std::vector<Frame>(std::size_t(n), Frame(w, h, channels, value)));
}

/// Tracks on a lattice at frame 0; class A ((i + j) even) moves by va, class B by vb.
/// Same-class lattice neighbours are diagonal, so every spatial neighbourhood mixes both classes.
struct TwoClusterFixture {
    TrackSet tracks;
    std::vector<Label> truth;  // by track index
    FrameSequence seq;
};

inline TwoClusterFixture two_cluster_fixture(int frames = 6, Point2 va = {3, 0}, Point2 vb = {-3, 0},
                                             double color_a = 0.5, double color_b = 0.5) {
    TwoClusterFixture fx;
    const int grid = 6, spacing = 10, margin = 25;
    const int w = margin * 2 + spacing * (grid - 1), h = w;
    fx.tracks.frame_count = frames;
    std::vector<Frame> imgs(std::size_t(frames), Frame(w, h, 1, 0.5));
    int id = 0;
    for (int j = 0; j < grid; ++j)
        for (int i = 0; i < grid; ++i) {
            const bool a = (i + j) % 2 == 0;
            const Point2 v = a ? va : vb;
            Track t;
            t.id = id++;
            for (int f = 0; f < frames; ++f) {
                const Point2 p{double(margin + i * spacing) + f * v.x, double(margin + j * spacing) + f * v.y};
                t.positions.push_back(p);
                for (int dy = -2; dy <= 2; ++dy)
                    for (int dx = -2; dx <= 2; ++dx)
                        imgs[std::size_t(f)].at(int(std::lround(p.x)) + dx, int(std::lround(p.y)) + dy) =
                            a ? color_a : color_b;
            }
            fx.tracks.tracks.push_back(t);
            fx.truth.push_back(a ? Label::Background : Label::Reflection);
        }
    fx.seq = FrameSequence(std::move(imgs));
    return fx;
}

inline double label_accuracy(const TrackSet& ts, const std::vector<Label>& truth) {
    int ok = 0;
    for (std::size_t i = 0; i < ts.tracks.size(); ++i) ok += ts.tracks[i].label == truth[i];
    return double(ok) / double(ts.tracks.size());
}

/// Two track populations whose velocity ranges overlap heavily but whose
/// patch colours differ (background dark, reflection bright). Classes form a
/// checkerboard so each one is connected through diagonal neighbours.
inline TwoClusterFixture overlapping_velocity_fixture() {
    TwoClusterFixture fx;
    const int frames = 5, cols = 10, rows = 8, spacing = 12, margin = 20;
    const int w = margin * 2 + spacing * (cols - 1), h = margin * 2 + spacing * (rows - 1);
    fx.tracks.frame_count = frames;
    std::vector<Frame> imgs(std::size_t(frames), Frame(w, h, 1, 0.5));
    std::mt19937 rng(11);
    int id = 0;
    for (int j = 0; j < rows; ++j)
        for (int i = 0; i < cols; ++i) {
            const bool background = (i + j) % 2 == 0;
            std::uniform_real_distribution<double> vel(background ? -1.0 : -2.0, background ? 2.0 : 1.0);
            const double vx = vel(rng);
            Track t;
            t.id = id++;
            for (int f = 0; f < frames; ++f) {
                const Point2 p{double(margin + i * spacing) + f * vx, double(margin + j * spacing)};
                t.positions.push_back(p);
                for (int dy = -2; dy <= 2; ++dy)
                    for (int dx = -2; dx <= 2; ++dx)
                        imgs[std::size_t(f)].at(int(std::lround(p.x)) + dx, int(std::lround(p.y)) + dy) =
                            background ? 0.2 : 0.8;
            }
            fx.tracks.tracks.push_back(t);
            fx.truth.push_back(background ? Label::Background : Label::Reflection);
        }
    fx.seq = FrameSequence(std::move(imgs));
    return fx;
}

/// A single disc stroke on the frame-0 position of one track of each class.
inline ScribbleSet one_seed_per_label(const TwoClusterFixture& fx) {
    ScribbleSet s;
    s.frame_index = 0;
    bool have_b = false, have_r = false;
    for (std::size_t i = 0; i < fx.tracks.tracks.size(); ++i) {
        const Label l = fx.truth[i];
        if ((l == Label::Background && have_b) || (l == Label::Reflection && have_r)) continue;
        s.strokes.push_back({l, {fx.tracks.tracks[i].positions[0]}, 1.0});
        (l == Label::Background ? have_b : have_r) = true;
    }
    return s;
}

// Textured static scene covered from the left by a flat dark block whose right
// edge advances `speed` px/frame, starting at x = start.
inline FrameSequence occluded_sequence(int n, int w, int h, int start, int speed) {
    const Frame scene = fixtures::textured_frame(w, h, 77);
    std::vector<Frame> frames;
    for (int t = 0; t < n; ++t) {
        Frame f = scene;
        const int edge = start + speed * t;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < std::min(edge, w); ++x) f.at(x, y) = 0.0;
        frames.push_back(f);
    }
    return FrameSequence(frames);
}

}  // namespace fixtures

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "reflect/error.hpp"

namespace reflect {

/// Row-major 2-D grid of scalars.
template <class T>
struct Grid {
    int width = 0;
    int height = 0;
    std::vector<T> data;

    Grid() = default;
    Grid(int w, int h, T fill = T{}) : width(w), height(h), data(std::size_t(w) * h, fill) {}

    T& operator()(int x, int y) { return data[std::size_t(y) * width + x]; }
    const T& operator()(int x, int y) const { return data[std::size_t(y) * width + x]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(int w, int h) const { return w == width && h == height; }

    friend bool operator==(const Grid&, const Grid&) = default;
};

/// Binary per-pixel grid (0/1). Used for edge maps, validity masks and layer maps.
using Mask = Grid<std::uint8_t>;

/// Multi-channel raster with interleaved channels and intensities in [0, 1].
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c = 1, double fill = 0.0)
        : width(w), height(h), channels(c), data(std::size_t(w) * h * c, fill) {}

    double& at(int x, int y, int c = 0) { return data[(std::size_t(y) * width + x) * channels + c]; }
    double at(int x, int y, int c = 0) const {
        return data[(std::size_t(y) * width + x) * channels + c];
    }

    std::size_t pixel_count() const { return std::size_t(width) * height; }
    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }

    /// Copy of one channel as a single-channel image.
    Image channel(int c) const {
        Image out(width, height, 1);
        for (std::size_t i = 0; i < pixel_count(); ++i) out.data[i] = data[i * channels + c];
        return out;
    }

    void set_channel(int c, const Image& plane) {
        for (std::size_t i = 0; i < pixel_count(); ++i) data[i * channels + c] = plane.data[i];
    }

    friend bool operator==(const Image&, const Image&) = default;
};

using Frame = Image;

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

/// Ordered, shape-homogeneous list of frames. Frame index is the position in `frames`.
class FrameSequence {
public:
    FrameSequence() = default;
    explicit FrameSequence(std::vector<Frame> frames) : frames_(std::move(frames)) { validate(); }

    int width() const { return frames_.empty() ? 0 : frames_.front().width; }
    int height() const { return frames_.empty() ? 0 : frames_.front().height; }
    int channels() const { return frames_.empty() ? 0 : frames_.front().channels; }
    int size() const { return int(frames_.size()); }
    bool empty() const { return frames_.empty(); }

    const Frame& operator[](int t) const { return frames_[std::size_t(t)]; }
    const std::vector<Frame>& frames() const { return frames_; }

    friend bool operator==(const FrameSequence&, const FrameSequence&) = default;

private:
    void validate() const {
        require(!frames_.empty(), "empty-sequence", "frame sequence must contain at least one frame");
        const Frame& first = frames_.front();
        for (const Frame& f : frames_) {
            require(f.same_shape(first), "dimension-mismatch", "frames differ in width, height or channels");
            require(f.size() == first.pixel_count() * std::size_t(first.channels), "dimension-mismatch",
                    "frame pixel count does not match its dimensions");
            for (double v : f.data)
                require(v >= 0.0 && v <= 1.0, "intensity-out-of-range", "intensity outside [0, 1]");
        }
    }

    std::vector<Frame> frames_;
};

}  // namespace reflect

#include "reflect/layer_init.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "reflect/frame_store.hpp"
#include "reflect/parallel.hpp"

namespace reflect {

void LayerDecomposition::validate() const {
    require(background.size() == reflection.size() && layer_map.size() == std::size_t(background.size()), "dimension-mismatch",
            "layer sequences differ in length");
    require(background.frames()[0].same_shape(reflection.frames()[0]), "dimension-mismatch",
            "background and reflection differ in shape");
    for (const Mask& m : layer_map) {
        require(m.same_shape(background.width(), background.height()), "dimension-mismatch",
                "layer map differs in shape");
        for (std::uint8_t v : m.data) require(v <= 1, "invalid-layer-map", "layer map must be binary");
    }
}

void LayerInitConfig::validate() const {
    window.validate();
    require(edge_threshold >= 0, "invalid-config", "edge_threshold must be >= 0");
    require(canny_low >= 0 && canny_low <= canny_high && canny_high <= 1, "invalid-thresholds",
            "canny thresholds must satisfy 0 <= low <= high <= 1");
}

std::vector<WarpedFrame> stabilize_about(const FrameSequence& seq, const WarpSet& warps, int reference, int first,
                                         int count) {
    require(first >= 0 && count >= 1 && first + count <= int(seq.size()) && reference >= first &&
                reference < first + count,
            "invalid-window", "window outside the sequence");
    std::vector<WarpedFrame> out;
    out.reserve(count);
    out.push_back({seq[reference], Mask(seq.width(), seq.height(), 1)});
    for (int i = first; i < first + count; ++i) {
        if (i == reference) continue;
        WarpResult w = warp_homography(seq[i], warps.between(reference, i, Label::Background));
        out.push_back({std::move(w.frame), std::move(w.valid)});
    }
    return out;
}

std::vector<WarpedFrame> stabilize_window(const FrameSequence& seq, const WarpSet& warps, int r,
                                          const WindowConfig& cfg) {
    require(r >= 0 && r + cfg.length <= int(seq.size()), "invalid-window",
            "window start " + std::to_string(r) + " leaves no full window");
    return stabilize_about(seq, warps, r, r, cfg.length);
}

int window_first_frame(int r, int frame_count, int length) {
    if (r + length <= frame_count) return r;
    return std::max(0, r - length + 1);
}

Frame min_filter_background(const std::vector<WarpedFrame>& warped) {
    require(!warped.empty(), "invalid-window", "no frames to filter");
    Frame out = warped[0].frame;
    const int ch = out.channels;
    for (std::size_t k = 1; k < warped.size(); ++k) {
        const WarpedFrame& w = warped[k];
        require(w.frame.same_shape(out), "dimension-mismatch", "warped frames differ in shape");
        for (std::size_t p = 0; p < out.pixel_count(); ++p) {
            if (!w.valid.data[p]) continue;
            for (int c = 0; c < ch; ++c) {
                const std::size_t i = p * ch + c;
                out.data[i] = std::min(out.data[i], w.frame.data[i]);
            }
        }
    }
    return out;
}

Frame residual_reflection(const Frame& input, const Frame& background) {
    require(input.same_shape(background), "dimension-mismatch", "input and background differ in shape");
    Frame out(input.width, input.height, input.channels);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = std::clamp(input.data[i] - background.data[i], 0.0, 1.0);
    return out;
}

Mask layer_map_from_stabilized(const std::vector<WarpedFrame>& warped, const EdgeMap& edges, double edge_threshold) {
    const int w = warped[0].frame.width, h = warped[0].frame.height;
    require(edges.same_shape(w, h), "dimension-mismatch", "edge map differs in shape");
    std::vector<Gradient> grads;
    grads.reserve(warped.size());
    for (const WarpedFrame& f : warped) grads.push_back(spatial_gradient(to_luma(f.frame)));

    Mask m(w, h, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!edges(x, y)) continue;
            double sum = 0, sum2 = 0;
            int n = 0;
            for (std::size_t k = 0; k < warped.size(); ++k) {
                const Mask& v = warped[k].valid;
                if (!v(x, y) || (x > 0 && !v(x - 1, y)) || (x + 1 < w && !v(x + 1, y)) || (y > 0 && !v(x, y - 1)) ||
                    (y + 1 < h && !v(x, y + 1)))
                    continue;
                const double g = grads[k].magnitude(x, y);
                sum += g;
                sum2 += g * g;
                ++n;
            }
            const double mean = sum / n;
            const double sd = std::sqrt(std::max(0.0, sum2 / n - mean * mean));
            m(x, y) = sd < edge_threshold ? 0 : 1;
        }
    return m;
}

Mask compute_layer_map(const FrameSequence& seq, const WarpSet& warps, int r, const LayerInitConfig& cfg) {
    const int first = window_first_frame(r, int(seq.size()), cfg.window.length);
    const auto warped = stabilize_about(seq, warps, r, first, cfg.window.length);
    return layer_map_from_stabilized(warped, canny(to_luma(seq[r]), cfg.canny_low, cfg.canny_high),
                                     cfg.edge_threshold);
}

LayerDecomposition initialize_layers(const FrameSequence& seq, const WarpSet& warps, const LayerInitConfig& cfg,
                                     const ProgressFn& progress) {
    cfg.validate();
    const int n = int(seq.size()), len = cfg.window.length;
    require(n >= len, "invalid-config", "sequence shorter than the window length");
    require(warps.frame_count() == n && warps.window_length() == len, "missing-warp",
            "warps do not cover this sequence");

    std::vector<Frame> bg(n), refl(n);
    std::vector<Mask> maps(n);
    std::atomic<int> done{0};
    parallel_for(std::size_t(n), [&](std::size_t i) {
        const int r = int(i);
        const auto warped = stabilize_about(seq, warps, r, window_first_frame(r, n, len), len);
        const Frame b = min_filter_background(warped);
        refl[r] = residual_reflection(seq[r], b);
        // B = I - R makes B + R reproduce I exactly in floating point.
        Frame exact(b.width, b.height, b.channels);
        for (std::size_t k = 0; k < exact.size(); ++k) exact.data[k] = seq[r].data[k] - refl[r].data[k];
        bg[r] = std::move(exact);
        maps[r] = layer_map_from_stabilized(warped, canny(to_luma(seq[r]), cfg.canny_low, cfg.canny_high),
                                            cfg.edge_threshold);
        const int d = ++done;
        if (progress) progress(d, n);
    });
    return {FrameSequence(std::move(bg)), FrameSequence(std::move(refl)), std::move(maps)};
}

}  // namespace reflect

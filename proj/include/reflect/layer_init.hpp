#pragma once

#include <functional>
#include <vector>

#include "reflect/image_ops.hpp"
#include "reflect/motion.hpp"
#include "reflect/parallel.hpp"

namespace reflect {

struct LayerDecomposition {
    FrameSequence background;
    FrameSequence reflection;
    std::vector<Mask> layer_map;  // 1 = edge claimed by the reflection, 0 = background edge

    void validate() const;
};

struct LayerInitConfig {
    WindowConfig window;
    double edge_threshold = 0.02;
    double canny_low = 0.1;
    double canny_high = 0.2;

    void validate() const;
};

struct WarpedFrame {
    Frame frame;
    ValidityMask valid;
};

/// Frames [first, first + count) warped onto `reference` with background warps.
/// Element 0 is always the reference frame itself with an all-true mask.
std::vector<WarpedFrame> stabilize_about(const FrameSequence& seq, const WarpSet& warps, int reference, int first,
                                         int count);

/// Frames r .. r + length - 1 aligned onto frame r.
std::vector<WarpedFrame> stabilize_window(const FrameSequence& seq, const WarpSet& warps, int r,
                                          const WindowConfig& cfg);

/// The window used for frame r: forward window for r <= N - length, otherwise the
/// length-frame window ending at r (clamped to the sequence start).
int window_first_frame(int r, int frame_count, int length);

Frame min_filter_background(const std::vector<WarpedFrame>& warped);
Frame residual_reflection(const Frame& input, const Frame& background);

/// Edge-stability layer map from already stabilized frames (element 0 is the reference).
Mask layer_map_from_stabilized(const std::vector<WarpedFrame>& warped, const EdgeMap& edges, double edge_threshold);

Mask compute_layer_map(const FrameSequence& seq, const WarpSet& warps, int r, const LayerInitConfig& cfg);

LayerDecomposition initialize_layers(const FrameSequence& seq, const WarpSet& warps, const LayerInitConfig& cfg,
                                     const ProgressFn& progress = {});

}  // namespace reflect

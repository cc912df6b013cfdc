#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "reflect/hints.hpp"
#include "reflect/layer_init.hpp"

namespace reflect {

struct BlendConfig {
    double alpha = 0.8;
    Point2 v_background{3.0, 0.0};
    Point2 v_reflection{-3.0, 0.0};
    int frame_count = 30;
    int width = 128;
    int height = 128;
    std::uint32_t seed = 7;

    void validate() const;
};

nlohmann::json to_json(const BlendConfig& c);
BlendConfig blend_config_from_json(const nlohmann::json& j);

/// Per-pixel edge ownership: 0 none, 1 background, 2 reflection.
using OwnershipMask = Grid<std::uint8_t>;

struct GroundTruthBundle {
    FrameSequence mixed;
    FrameSequence gt_background;
    FrameSequence gt_reflection;
    std::vector<OwnershipMask> gt_labels;
    BlendConfig config;
};

/// Frame t is the (width x height) crop of `base` whose content moves by t * v.
/// Integral velocities copy pixels exactly; fractional ones sample bilinearly.
FrameSequence make_translating_sequence(const Frame& base, Point2 v, int n, int width, int height);

FrameSequence blend(const FrameSequence& v1, const FrameSequence& v2, double alpha);

/// Gaussian-windowed SSIM (11x11, sigma 1.5, K1 0.01, K2 0.03, L 1), averaged
/// over all full window positions and over channels.
double ssim(const Frame& a, const Frame& b);

struct FrameScore {
    int frame = 0;
    double ssim_b = 0, ssim_r = 0, ssim_input_baseline = 0;
    double ssim_b_unscaled = 0, ssim_r_unscaled = 0, ssim_input_unscaled = 0;
};

struct EvalSummary {
    std::vector<FrameScore> frames;
    double mean_b = 0, mean_r = 0, mean_baseline = 0;
    int background_wins = 0;  // frames where ssim_b > ssim_input_baseline
};

EvalSummary evaluate(const LayerDecomposition& dec, const GroundTruthBundle& gt);
EvalSummary evaluate(const FrameSequence& background, const FrameSequence& reflection, const GroundTruthBundle& gt);

std::string ssim_csv(const EvalSummary& s);
std::string ssim_unscaled_csv(const EvalSummary& s);

/// Textured background base (random-intensity checker bands around a smooth
/// middle band) and a dark reflection base holding one bright checker patch.
Frame desk_background_base(int width, int height, std::uint32_t seed);
Frame desk_reflection_base(int width, int height, int patch_x, int patch_y, int patch_w, int patch_h,
                           std::uint32_t seed);

OwnershipMask ownership_mask(const Frame& background_contribution, const Frame& reflection_contribution,
                             double min_gradient = 0.02);

GroundTruthBundle make_blend_bundle(const Frame& background_base, const Frame& reflection_base,
                                    const BlendConfig& cfg);
GroundTruthBundle make_desk_bundle(const BlendConfig& cfg = {});

/// One stroke per layer on frame `frame`, drawn inside the region that layer dominates.
ScribbleSet auto_seed_scribbles(const GroundTruthBundle& gt, int frame = 0, double radius = 6.0);

void save_bundle(const GroundTruthBundle& b, const std::filesystem::path& dir);
GroundTruthBundle load_bundle(const std::filesystem::path& dir);

}  // namespace reflect

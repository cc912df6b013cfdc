#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "reflect/energy.hpp"
#include "reflect/hints.hpp"
#include "reflect/motion.hpp"
#include "reflect/synth.hpp"
#include "reflect/tracker.hpp"

namespace reflect {

struct PipelineConfig {
    WindowConfig window;
    TrackerConfig tracker;
    AffinityConfig affinity;
    IrlsConfig irls;
    bool allow_warp_fallback = true;
    EnergyWeights weights;
    OptimizerConfig optimizer;
    double canny_low = 0.1;
    double canny_high = 0.2;
    double edge_threshold = 0.02;
    BlendConfig synth;
    int auto_seed_frame = 0;
    double auto_seed_radius = 6.0;

    /// Checks every module's preconditions; throws "invalid-config".
    void validate() const;
    LayerInitConfig layer_init() const;
};

nlohmann::json to_json(const PipelineConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
void write_config(const PipelineConfig& c, const std::filesystem::path& dir);

TrackSet run_track(const FrameSequence& seq, const PipelineConfig& cfg);

/// Scribble seeds, random walk at the annotated frame, then propagation to
/// tracks born later.
TrackSet run_label(const TrackSet& ts, const FrameSequence& seq, const ScribbleSet& scribbles,
                   const PipelineConfig& cfg);

struct SeparationProgress {
    std::function<void(const std::string& stage, int done, int total)> report;
};

struct SeparationResult {
    LayerDecomposition initial;
    OptimizeResult optimized;
    WarpSet warps;
};

SeparationResult run_separate(const FrameSequence& seq, const TrackSet& labeled, const PipelineConfig& cfg,
                              const SeparationProgress& progress = {});

/// background/, reflection/, layer_map/, energy_trace.csv, warps.json, report.json, config.json.
void write_separation(const SeparationResult& r, const PipelineConfig& cfg, const std::filesystem::path& dir);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace reflect

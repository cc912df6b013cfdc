#include "reflect/pipeline.hpp"

#include <fstream>
#include <set>

#include "reflect/frame_store.hpp"

namespace reflect {

using nlohmann::json;
namespace fs = std::filesystem;

void PipelineConfig::validate() const {
    window.validate();
    require(tracker.max_features >= 1 && tracker.min_distance >= 0 && tracker.quality > 0 && tracker.quality <= 1,
            "invalid-config", "tracker: max_features >= 1, min_distance >= 0, 0 < quality <= 1");
    require(tracker.levels >= 1 && tracker.window >= 3 && tracker.window % 2 == 1, "invalid-config",
            "tracker: levels >= 1 and an odd window >= 3");
    require(tracker.max_iterations >= 1 && tracker.epsilon > 0 && tracker.fb_threshold > 0 &&
                tracker.max_residual > 0 && tracker.min_eigen >= 0,
            "invalid-config", "tracker: iteration and rejection thresholds must be positive");
    require(tracker.reseed_interval >= 1 && tracker.cell_size >= 1 && tracker.min_length >= 1, "invalid-config",
            "tracker: reseed_interval, cell_size and min_length must be >= 1");
    require(affinity.k_neighbors >= 1 && affinity.sigma_motion > 0 && affinity.sigma_color > 0 &&
                affinity.patch_size >= 1 && affinity.min_weight >= 0,
            "invalid-config", "affinity: k_neighbors >= 1, positive sigmas and patch size");
    require(irls.max_iterations >= 1 && irls.delta > 0 && irls.tolerance > 0, "invalid-config",
            "irls: max_iterations >= 1, delta > 0, tolerance > 0");
    weights.validate();
    optimizer.validate();
    layer_init().validate();
    synth.validate();
    require(auto_seed_frame >= 0 && auto_seed_radius > 0, "invalid-config",
            "auto_seed: frame >= 0 and radius > 0");
}

LayerInitConfig PipelineConfig::layer_init() const { return {window, edge_threshold, canny_low, canny_high}; }

json to_json(const PipelineConfig& c) {
    const TrackerConfig& t = c.tracker;
    return {
        {"window",
         {{"length", c.window.length},
          {"stride", c.window.stride},
          {"min_homography_pairs", c.window.min_homography_pairs}}},
        {"tracker",
         {{"max_features", t.max_features},
          {"min_distance", t.min_distance},
          {"quality", t.quality},
          {"levels", t.levels},
          {"window", t.window},
          {"max_iterations", t.max_iterations},
          {"epsilon", t.epsilon},
          {"fb_threshold", t.fb_threshold},
          {"max_residual", t.max_residual},
          {"min_eigen", t.min_eigen},
          {"reseed_interval", t.reseed_interval},
          {"cell_size", t.cell_size},
          {"min_length", t.min_length}}},
        {"affinity",
         {{"k_neighbors", c.affinity.k_neighbors},
          {"sigma_motion", c.affinity.sigma_motion},
          {"sigma_color", c.affinity.sigma_color},
          {"patch_size", c.affinity.patch_size},
          {"min_weight", c.affinity.min_weight}}},
        {"irls",
         {{"max_iterations", c.irls.max_iterations},
          {"delta", c.irls.delta},
          {"tolerance", c.irls.tolerance},
          {"allow_fallback", c.allow_warp_fallback}}},
        {"energy",
         {{"lambda_d", c.weights.lambda_d}, {"lambda_l", c.weights.lambda_l}, {"lambda_s", c.weights.lambda_s}}},
        {"optimizer",
         {{"max_iters", c.optimizer.max_iters},
          {"step_size", c.optimizer.step_size},
          {"huber_eps", c.optimizer.huber_eps},
          {"pair_radius", c.optimizer.pair_radius},
          {"enforce_composition", c.optimizer.enforce_composition},
          {"tolerance", c.optimizer.tolerance}}},
        {"canny", {{"low", c.canny_low}, {"high", c.canny_high}}},
        {"layer_map", {{"edge_threshold", c.edge_threshold}}},
        {"synth", to_json(c.synth)},
        {"auto_seed", {{"frame", c.auto_seed_frame}, {"radius", c.auto_seed_radius}}},
    };
}

namespace {

// Reads the keys present in `j[section]` into the matching fields; rejects unknown keys.
class SectionReader {
public:
    SectionReader(const json& root, const std::string& section) : name_(section) {
        if (!root.contains(section)) return;
        node_ = &root.at(section);
        if (!node_->is_object()) fail("schema-violation", "config." + section + " must be an object");
        for (auto it = node_->begin(); it != node_->end(); ++it) unseen_.insert(it.key());
    }

    template <class T>
    SectionReader& get(const std::string& key, T& out) {
        if (!node_ || !node_->contains(key)) return *this;
        unseen_.erase(key);
        try {
            out = node_->at(key).get<T>();
        } catch (const json::exception&) {
            fail("schema-violation", "config." + name_ + "." + key + " has the wrong type");
        }
        return *this;
    }

    void finish() const {
        if (!unseen_.empty()) fail("schema-violation", "unknown key config." + name_ + "." + *unseen_.begin());
    }

private:
    std::string name_;
    const json* node_ = nullptr;
    std::set<std::string> unseen_;
};

}  // namespace

PipelineConfig pipeline_config_from_json(const json& j) {
    require(j.is_object(), "schema-violation", "config must be a JSON object");
    static const std::set<std::string> sections = {"window", "tracker",   "affinity", "irls",  "energy",
                                                   "optimizer", "canny", "layer_map", "synth", "auto_seed"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!sections.count(it.key())) fail("schema-violation", "unknown config section " + it.key());

    PipelineConfig c;
    SectionReader(j, "window")
        .get("length", c.window.length)
        .get("stride", c.window.stride)
        .get("min_homography_pairs", c.window.min_homography_pairs)
        .finish();
    TrackerConfig& t = c.tracker;
    SectionReader(j, "tracker")
        .get("max_features", t.max_features)
        .get("min_distance", t.min_distance)
        .get("quality", t.quality)
        .get("levels", t.levels)
        .get("window", t.window)
        .get("max_iterations", t.max_iterations)
        .get("epsilon", t.epsilon)
        .get("fb_threshold", t.fb_threshold)
        .get("max_residual", t.max_residual)
        .get("min_eigen", t.min_eigen)
        .get("reseed_interval", t.reseed_interval)
        .get("cell_size", t.cell_size)
        .get("min_length", t.min_length)
        .finish();
    SectionReader(j, "affinity")
        .get("k_neighbors", c.affinity.k_neighbors)
        .get("sigma_motion", c.affinity.sigma_motion)
        .get("sigma_color", c.affinity.sigma_color)
        .get("patch_size", c.affinity.patch_size)
        .get("min_weight", c.affinity.min_weight)
        .finish();
    SectionReader(j, "irls")
        .get("max_iterations", c.irls.max_iterations)
        .get("delta", c.irls.delta)
        .get("tolerance", c.irls.tolerance)
        .get("allow_fallback", c.allow_warp_fallback)
        .finish();
    SectionReader(j, "energy")
        .get("lambda_d", c.weights.lambda_d)
        .get("lambda_l", c.weights.lambda_l)
        .get("lambda_s", c.weights.lambda_s)
        .finish();
    SectionReader(j, "optimizer")
        .get("max_iters", c.optimizer.max_iters)
        .get("step_size", c.optimizer.step_size)
        .get("huber_eps", c.optimizer.huber_eps)
        .get("pair_radius", c.optimizer.pair_radius)
        .get("enforce_composition", c.optimizer.enforce_composition)
        .get("tolerance", c.optimizer.tolerance)
        .finish();
    SectionReader(j, "canny").get("low", c.canny_low).get("high", c.canny_high).finish();
    SectionReader(j, "layer_map").get("edge_threshold", c.edge_threshold).finish();
    SectionReader(j, "auto_seed").get("frame", c.auto_seed_frame).get("radius", c.auto_seed_radius).finish();
    if (j.contains("synth")) c.synth = blend_config_from_json(j["synth"]);
    c.validate();
    return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    std::ifstream in(path);
    require(bool(in), "io-failure", "cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail("schema-violation", "config " + path.string() + ": " + e.what());
    }
    return pipeline_config_from_json(j);
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    require(bool(out), "io-failure", "cannot write " + path.string());
}

void write_config(const PipelineConfig& c, const fs::path& dir) {
    write_text(dir / "config.json", to_json(c).dump(2) + "\n");
}

TrackSet run_track(const FrameSequence& seq, const PipelineConfig& cfg) {
    return track_sequence(to_luma(seq), cfg.tracker);
}

TrackSet run_label(const TrackSet& ts, const FrameSequence& seq, const ScribbleSet& scribbles,
                   const PipelineConfig& cfg) {
    require(ts.frame_count == int(seq.size()), "dimension-mismatch", "tracks and frames differ in length");
    const std::map<int, Label> seeds = apply_scribbles(ts, scribbles);
    if (seeds.empty()) fail("missing-label-seeds", "no track lies under any scribble");
    const AffinityGraph g = build_affinity_graph(ts, seq, scribbles.frame_index, cfg.affinity);
    return propagate_labels(ts, seq, scribbles.frame_index, random_walk_labels(g, seeds), cfg.affinity);
}

SeparationResult run_separate(const FrameSequence& seq, const TrackSet& labeled, const PipelineConfig& cfg,
                              const SeparationProgress& progress) {
    cfg.validate();
    require(labeled.frame_count == int(seq.size()), "dimension-mismatch", "tracks and frames differ in length");
    auto stage = [&](const char* name) -> ProgressFn {
        if (!progress.report) return {};
        return [&progress, name](int done, int total) { progress.report(name, done, total); };
    };
    WarpBuildOptions wopt{cfg.irls, cfg.allow_warp_fallback, stage("motion")};
    WarpSet warps = build_warpsets(labeled, cfg.window, int(seq.size()), wopt);
    LayerDecomposition init = initialize_layers(seq, warps, cfg.layer_init(), stage("layer-init"));
    const auto edges = edge_maps(seq, cfg.canny_low, cfg.canny_high);
    OptimizeResult opt = optimize(init, warps, edges, cfg.weights, cfg.optimizer, stage("optimize"));
    return {std::move(init), std::move(opt), std::move(warps)};
}

void write_separation(const SeparationResult& r, const PipelineConfig& cfg, const fs::path& dir) {
    const LayerDecomposition& out = r.optimized.layers;
    save_sequence(out.background, dir / "background");
    save_sequence(out.reflection, dir / "reflection");
    fs::create_directories(dir / "layer_map");
    for (std::size_t t = 0; t < out.layer_map.size(); ++t) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%04zu.png", t);
        write_mask_png(out.layer_map[t], dir / "layer_map" / name);
    }
    write_text(dir / "energy_trace.csv", trace_csv(r.optimized.trace));
    write_text(dir / "warps.json", to_json(r.warps).dump() + "\n");
    json fallbacks = json::array();
    for (const WarpSet::Fallback& f : r.warps.fallbacks)
        fallbacks.push_back({{"window", f.window}, {"frame", f.frame}, {"layer", to_string(f.layer)}, {"reason", f.reason}});
    const TraceRow& first = r.optimized.trace.front();
    const TraceRow& last = r.optimized.trace.back();
    write_text(dir / "report.json", json{{"frames", out.background.size()},
                                         {"iterations", last.iter},
                                         {"initial_energy", first.terms.total},
                                         {"final_energy", last.terms.total},
                                         {"warp_fallbacks", fallbacks}}
                                            .dump(2) + "\n");
    write_config(cfg, dir);
}

}  // namespace reflect

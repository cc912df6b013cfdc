#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "reflect/image.hpp"
#include "reflect/tracker.hpp"

namespace reflect {

struct Stroke {
    Label label = Label::Background;
    std::vector<Point2> points;  // polyline; a single point is a disc
    double radius = 1.0;
};

/// User scribbles drawn on one frame.
struct ScribbleSet {
    int frame_index = 0;
    std::vector<Stroke> strokes;

    /// Throws "schema-violation" when a stroke is unlabeled, has no points,
    /// a non-positive radius, or points outside a width x height frame.
    void validate(int width, int height) const;
};

nlohmann::json to_json(const ScribbleSet& s);
ScribbleSet scribbles_from_json(const nlohmann::json& j);
ScribbleSet load_scribbles(const std::string& path);

/// Label mask (0 none, 1 background, 2 reflection) to one radius-0.5 stroke per labeled pixel.
ScribbleSet scribbles_from_mask(const Grid<std::uint8_t>& mask, int frame_index);

struct AffinityConfig {
    int k_neighbors = 8;
    double sigma_motion = 1.0;  // px/frame
    double sigma_color = 0.1;
    int patch_size = 5;
    double min_weight = 1e-12;  // weaker edges are dropped from the graph
};

/// Symmetric kNN graph over the tracks alive at `frame`. Edge endpoints index `nodes`.
struct AffinityGraph {
    struct Edge {
        int a = 0;
        int b = 0;
        double weight = 0.0;
    };

    int frame = 0;
    std::vector<int> nodes;  // track ids
    std::vector<Edge> edges;

    int index_of(int track_id) const;
    double weight(int track_a, int track_b) const;  // 0 when no edge
};

/// Mean per-frame velocity difference over the steps where both tracks are
/// alive. Without a shared step, the difference of mean velocities; 0 when a
/// track has a single position.
double motion_distance(const Track& a, const Track& b);

/// Mean colour of a patch centred on `p` in frame `t` (one value per channel).
std::vector<double> patch_color(const FrameSequence& seq, int t, Point2 p, int patch_size);

/// exp(-dm^2/sm^2) * exp(-dc^2/sc^2) for two tracks at `frame`.
double affinity(const Track& a, const Track& b, const FrameSequence& seq, int frame, const AffinityConfig& cfg);

AffinityGraph build_affinity_graph(const TrackSet& ts, const FrameSequence& seq, int frame,
                                   const AffinityConfig& cfg = {});

struct RandomWalkResult {
    std::map<int, Label> labels;
    std::map<int, double> background_probability;
    std::map<int, double> reflection_probability;
};

/// Seeded random walker: solves L_u x = -B x_s for each label and assigns the
/// label with the larger absorption probability (ties go to Background).
RandomWalkResult random_walk(const AffinityGraph& g, const std::map<int, Label>& seeds);
std::map<int, Label> random_walk_labels(const AffinityGraph& g, const std::map<int, Label>& seeds);

/// Seeds from scribbles: tracks alive at the scribble frame within `radius` of a stroke.
std::map<int, Label> apply_scribbles(const TrackSet& ts, const ScribbleSet& s);

/// Adds a user track at (frame, point) tracked forward and pre-labeled with `label`.
TrackSet add_user_track(const TrackSet& ts, const FrameSequence& luma, int frame, Point2 point, Label label,
                        const TrackerConfig& cfg = {});

/// Writes every track's label once. Tracks alive at `annotated_frame` take
/// `labels_at_frame` (or keep a pre-existing label); the rest are labeled at
/// their birth frame by a random walk seeded with already-labeled co-alive tracks.
TrackSet propagate_labels(const TrackSet& ts, const FrameSequence& seq, int annotated_frame,
                          const std::map<int, Label>& labels_at_frame, const AffinityConfig& cfg = {});

struct KMeansLabeling {
    TrackSet tracks;
    std::vector<std::string> warnings;
};

/// Unassisted two-cluster labeling on mean track velocity; the larger cluster is Background.
KMeansLabeling kmeans_fallback(const TrackSet& ts);

}  // namespace reflect

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reflect/geometry.hpp"
#include "reflect/image.hpp"
#include "reflect/image_ops.hpp"

namespace reflect {

/// Layer ownership of a track. Numeric codes follow the 1 = background, 2 = reflection convention.
enum class Label : int { Unlabeled = 0, Background = 1, Reflection = 2 };

std::string to_string(Label l);
Label label_from_string(const std::string& s);

struct Track {
    int id = 0;
    int start_frame = 0;
    std::vector<Point2> positions;  // positions[k] is the location at frame start_frame + k
    Label label = Label::Unlabeled;

    int end_frame() const { return start_frame + int(positions.size()) - 1; }
    bool alive_at(int t) const { return t >= start_frame && t <= end_frame(); }
    Point2 at(int t) const { return positions[std::size_t(t - start_frame)]; }
};

struct TrackSet {
    std::vector<Track> tracks;
    int frame_count = 0;

    const Track* find(int id) const;
    int next_id() const;
    std::vector<int> alive_ids(int t) const;

    /// Throws "invalid-trackset" on duplicate ids, empty tracks or out-of-range frames.
    void validate() const;
};

struct TrackerConfig {
    int max_features = 400;
    double min_distance = 5.0;
    double quality = 0.01;
    int levels = 3;
    int window = 15;
    int max_iterations = 30;
    double epsilon = 0.01;
    double fb_threshold = 0.5;
    double max_residual = 0.08;   // mean |I - J| over the window after alignment
    double min_eigen = 1e-7;      // per-pixel structure-tensor eigenvalue below which LK takes no step
    int reseed_interval = 5;
    int cell_size = 16;
    int min_length = 2;  // shorter tracks carry no motion and are dropped
};

/// Corners as local maxima of the structure-tensor minimum eigenvalue
/// (3x3 window, central-difference gradients). Points are thinned greedily,
/// strongest first, so that their Chebyshev distance is >= min_distance.
std::vector<Point2> detect_features(const Frame& frame, int max_count, double min_distance, double quality);

/// Minimum eigenvalue of the 3x3-summed structure tensor at every pixel.
Grid<double> min_eigenvalue_map(const Frame& frame);

/// Image pyramid with per-level gradients, reused across LK calls.
struct TrackingPyramid {
    std::vector<Frame> levels;
    std::vector<Gradient> gradients;
};

TrackingPyramid build_tracking_pyramid(const Frame& luma, int levels);

struct LkResult {
    Point2 position;
    double residual = 0.0;
};

/// One pyramidal Lucas-Kanade step of point `p` from `prev` to `next`.
LkResult lk_track(const TrackingPyramid& prev, const TrackingPyramid& next, Point2 p, const TrackerConfig& cfg);

/// Forward step plus forward-backward validation. Empty if the point is lost.
std::optional<Point2> lk_step_checked(const TrackingPyramid& prev, const TrackingPyramid& next, Point2 p,
                                      const TrackerConfig& cfg);

/// Tracks features through a single-channel sequence. All tracks come back Unlabeled.
TrackSet track_sequence(const FrameSequence& luma, const TrackerConfig& cfg = {});

/// Continues a single point forward from `start_frame` until it is lost or the sequence ends.
Track track_point_forward(const FrameSequence& luma, int start_frame, Point2 start, const TrackerConfig& cfg);

/// Correspondences (position at i -> position at j) of tracks with `label` alive at both frames.
std::vector<PointPair> tracks_alive_at(const TrackSet& ts, int i, int j, Label label);

nlohmann::json to_json(const TrackSet& ts);
TrackSet trackset_from_json(const nlohmann::json& j);
void save_tracks(const TrackSet& ts, const std::string& path);
TrackSet load_tracks(const std::string& path);

}  // namespace reflect

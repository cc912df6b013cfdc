#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "reflect/geometry.hpp"
#include "reflect/parallel.hpp"
#include "reflect/tracker.hpp"

namespace reflect {

struct WindowConfig {
    int length = 10;
    int stride = 1;
    int min_homography_pairs = 8;  // fewer shared tracks (but at least 4) fit a translation instead

    void validate() const {
        require(length >= 2, "invalid-config", "window length must be >= 2");
        require(stride == 1, "invalid-config", "only stride 1 is supported");
        require(min_homography_pairs >= 4, "invalid-config", "min_homography_pairs must be >= 4");
    }
};

struct HomographyFit {
    Homography h;
    double rms = 0.0;  // reprojection RMS in pixels
};

/// Normalized DLT. `weights`, when given, scale each correspondence's pair of rows.
HomographyFit estimate_homography_dlt(std::span<const PointPair> pairs, std::span<const double> weights = {});

struct IrlsConfig {
    int max_iterations = 50;
    double delta = 1.0;        // px
    double tolerance = 1e-6;   // max weight change for convergence
};

struct IrlsResult {
    Homography h;
    double rms = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> weights;
    /// Weighted squared reprojection cost before/after each re-weighted solve, under that iteration's weights.
    std::vector<double> cost_before;
    std::vector<double> cost_after;
    std::vector<std::string> warnings;
};

/// Iteratively re-weighted DLT with weights w = min(1, delta / residual).
IrlsResult estimate_homography_irls(std::span<const PointPair> pairs, const IrlsConfig& cfg = {});

/// Per-window, per-layer homographies. Window r holds, for every frame
/// r + k (k < length), the matrix mapping frame r + k coordinates into frame r.
class WarpSet {
public:
    struct Fallback {
        int window = 0;
        int frame = 0;
        Label layer = Label::Background;
        std::string reason;
    };

    WarpSet() = default;
    WarpSet(int frame_count, int window_length);

    int frame_count() const { return frame_count_; }
    int window_length() const { return length_; }
    int window_count() const { return frame_count_ - length_ + 1; }

    const Homography& to_reference(int window, int frame, Label layer) const;
    void set(int window, int frame, Label layer, const Homography& h, bool fallback = false);
    bool is_fallback(int window, int frame, Label layer) const;

    /// Matrix mapping frame `rho` coordinates into frame `t`, composed through
    /// stored windows (chained when |t - rho| exceeds one window).
    Homography between(int t, int rho, Label layer) const;

    std::vector<Fallback> fallbacks;

private:
    std::size_t slot(int window, int frame, Label layer) const;

    int frame_count_ = 0;
    int length_ = 0;
    std::vector<Homography> matrices_;
    std::vector<char> fallback_flags_;
};

struct WarpBuildOptions {
    IrlsConfig irls;
    bool allow_fallback = true;  // false: throw "insufficient-correspondences"
    ProgressFn progress;         // counts finished windows
};

/// Median displacement of the pairs as a pure translation.
Homography estimate_translation(std::span<const PointPair> pairs);

WarpSet build_warpsets(const TrackSet& ts, const WindowConfig& cfg, int frame_count, const WarpBuildOptions& opt = {});

nlohmann::json to_json(const WarpSet& w);
WarpSet warpset_from_json(const nlohmann::json& j);

}  // namespace reflect

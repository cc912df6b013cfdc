#include "reflect/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <tuple>

#include "reflect/parallel.hpp"

namespace reflect {

using nlohmann::json;

std::string to_string(Label l) {
    switch (l) {
        case Label::Background: return "background";
        case Label::Reflection: return "reflection";
        default: return "unlabeled";
    }
}

Label label_from_string(const std::string& s) {
    if (s == "background" || s == "1") return Label::Background;
    if (s == "reflection" || s == "2") return Label::Reflection;
    if (s == "unlabeled" || s == "0") return Label::Unlabeled;
    fail("schema-violation", "unknown label '" + s + "'");
}

const Track* TrackSet::find(int id) const {
    for (const Track& t : tracks)
        if (t.id == id) return &t;
    return nullptr;
}

int TrackSet::next_id() const {
    int id = 0;
    for (const Track& t : tracks) id = std::max(id, t.id + 1);
    return id;
}

std::vector<int> TrackSet::alive_ids(int t) const {
    std::vector<int> ids;
    for (const Track& tr : tracks)
        if (tr.alive_at(t)) ids.push_back(tr.id);
    return ids;
}

void TrackSet::validate() const {
    std::set<int> ids;
    for (const Track& t : tracks) {
        require(ids.insert(t.id).second, "invalid-trackset", "duplicate track id " + std::to_string(t.id));
        require(!t.positions.empty(), "invalid-trackset", "track " + std::to_string(t.id) + " has no positions");
        require(t.start_frame >= 0 && t.end_frame() < frame_count, "invalid-trackset",
                "track " + std::to_string(t.id) + " extends outside the sequence");
    }
}

Grid<double> min_eigenvalue_map(const Frame& frame) {
    const int w = frame.width, h = frame.height;
    const Gradient g = spatial_gradient(frame);
    Grid<double> lambda(w, h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double a = 0, b = 0, c = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int u = x + dx, v = y + dy;
                    if (u < 0 || v < 0 || u >= w || v >= h) continue;
                    const double ix = g.gx(u, v), iy = g.gy(u, v);
                    a += ix * ix;
                    b += ix * iy;
                    c += iy * iy;
                }
            const double half_trace = 0.5 * (a + c);
            const double disc = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
            lambda(x, y) = std::max(0.0, half_trace - disc);
        }
    return lambda;
}

std::vector<Point2> detect_features(const Frame& frame, int max_count, double min_distance, double quality) {
    require(frame.channels == 1, "invalid-argument", "detect_features expects a single-channel frame");
    require(quality > 0.0 && quality < 1.0, "invalid-argument", "quality must lie in (0, 1)");
    const int w = frame.width, h = frame.height;
    const Grid<double> lambda = min_eigenvalue_map(frame);
    const double peak = *std::max_element(lambda.data.begin(), lambda.data.end());
    if (peak <= 1e-12) return {};
    const double threshold = quality * peak;

    struct Candidate {
        double strength;
        int x, y;
    };
    std::vector<Candidate> candidates;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double v = lambda(x, y);
            if (v < threshold) continue;
            bool is_max = true;
            for (int dy = -1; dy <= 1 && is_max; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int u = x + dx, q = y + dy;
                    if ((dx || dy) && u >= 0 && q >= 0 && u < w && q < h && lambda(u, q) > v) {
                        is_max = false;
                        break;
                    }
                }
            if (is_max) candidates.push_back({v, x, y});
        }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        return std::tie(b.strength, a.y, a.x) < std::tie(a.strength, b.y, b.x);
    });

    std::vector<Point2> out;
    for (const Candidate& c : candidates) {
        if (int(out.size()) >= max_count) break;
        const bool far_enough = std::all_of(out.begin(), out.end(), [&](const Point2& p) {
            return std::max(std::abs(p.x - c.x), std::abs(p.y - c.y)) >= min_distance;
        });
        if (far_enough) out.push_back({double(c.x), double(c.y)});
    }
    return out;
}

TrackingPyramid build_tracking_pyramid(const Frame& luma, int levels) {
    TrackingPyramid p;
    p.levels = gaussian_pyramid(luma, levels);
    for (const Frame& f : p.levels) p.gradients.push_back(spatial_gradient(f));
    return p;
}

namespace {

double sample_grid(const Grid<double>& g, double x, double y) {
    x = std::clamp(x, 0.0, double(g.width - 1));
    y = std::clamp(y, 0.0, double(g.height - 1));
    const int x0 = int(std::floor(x)), y0 = int(std::floor(y));
    const int x1 = std::min(x0 + 1, g.width - 1), y1 = std::min(y0 + 1, g.height - 1);
    const double fx = x - x0, fy = y - y0;
    return (1 - fx) * (1 - fy) * g(x0, y0) + fx * (1 - fy) * g(x1, y0) + (1 - fx) * fy * g(x0, y1) +
           fx * fy * g(x1, y1);
}

int usable_levels(int width, int height, int wanted) {
    int levels = 1;
    while (levels < wanted && std::min(width, height) / std::pow(2.0, levels) >= 8.0) ++levels;
    return levels;
}

bool in_bounds(Point2 p, int w, int h, double margin = 0.0) {
    return p.x >= margin && p.y >= margin && p.x <= w - 1 - margin && p.y <= h - 1 - margin;
}

}  // namespace

LkResult lk_track(const TrackingPyramid& prev, const TrackingPyramid& next, Point2 p, const TrackerConfig& cfg) {
    const int half = cfg.window / 2;
    const int top = int(std::min(prev.levels.size(), next.levels.size())) - 1;
    const int area = (2 * half + 1) * (2 * half + 1);
    std::vector<double> tmpl(area), ix(area), iy(area);
    Point2 guess{0.0, 0.0};
    Point2 flow{0.0, 0.0};
    for (int level = top; level >= 0; --level) {
        const double scale = std::ldexp(1.0, -level);
        const Point2 pl = scale * p;
        const Frame& I = prev.levels[level];
        const Frame& J = next.levels[level];
        const Gradient& g = prev.gradients[level];
        double gxx = 0, gxy = 0, gyy = 0;
        int k = 0;
        for (int dy = -half; dy <= half; ++dy)
            for (int dx = -half; dx <= half; ++dx, ++k) {
                const double sx = pl.x + dx, sy = pl.y + dy;
                tmpl[k] = sample_bilinear(I, sx, sy);
                ix[k] = sample_grid(g.gx, sx, sy);
                iy[k] = sample_grid(g.gy, sx, sy);
                gxx += ix[k] * ix[k];
                gxy += ix[k] * iy[k];
                gyy += iy[k] * iy[k];
            }
        const double det = gxx * gyy - gxy * gxy;
        const double min_eig = 0.5 * (gxx + gyy) - std::sqrt(0.25 * (gxx - gyy) * (gxx - gyy) + gxy * gxy);
        Point2 v{0.0, 0.0};
        // Coarse levels only help when the whole window lies inside them.
        const bool fits = level == 0 || (pl.x - half >= 0 && pl.y - half >= 0 && pl.x + half <= I.width - 1 &&
                                         pl.y + half <= I.height - 1);
        if (fits && min_eig / area >= cfg.min_eigen && det > 0.0) {
            for (int it = 0; it < cfg.max_iterations; ++it) {
                double bx = 0, by = 0;
                k = 0;
                for (int dy = -half; dy <= half; ++dy)
                    for (int dx = -half; dx <= half; ++dx, ++k) {
                        const double diff =
                            tmpl[k] - sample_bilinear(J, pl.x + guess.x + v.x + dx, pl.y + guess.y + v.y + dy);
                        bx += diff * ix[k];
                        by += diff * iy[k];
                    }
                const Point2 eta{(gyy * bx - gxy * by) / det, (gxx * by - gxy * bx) / det};
                v = v + eta;
                if (norm(eta) < cfg.epsilon) break;
            }
            // A level whose update runs off the window (clamped border samples) keeps the coarser guess.
            if (!std::isfinite(v.x) || !std::isfinite(v.y) || norm(v) > half) v = {0.0, 0.0};
        }
        if (level > 0)
            guess = 2.0 * (guess + v);
        else
            flow = guess + v;
    }

    LkResult out{p + flow, 0.0};
    const Frame& I = prev.levels[0];
    const Frame& J = next.levels[0];
    double residual = 0.0;
    for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx)
            residual += std::abs(sample_bilinear(I, p.x + dx, p.y + dy) -
                                 sample_bilinear(J, out.position.x + dx, out.position.y + dy));
    out.residual = residual / area;
    return out;
}

std::optional<Point2> lk_step_checked(const TrackingPyramid& prev, const TrackingPyramid& next, Point2 p,
                                      const TrackerConfig& cfg) {
    const int w = prev.levels[0].width, h = prev.levels[0].height;
    const LkResult fwd = lk_track(prev, next, p, cfg);
    if (!std::isfinite(fwd.position.x) || !std::isfinite(fwd.position.y)) return std::nullopt;
    // Windows reaching past the border see clamped samples, not the feature.
    const double margin = cfg.window / 2;
    if (!in_bounds(fwd.position, w, h, margin) || !in_bounds(p, w, h, margin)) return std::nullopt;
    if (fwd.residual > cfg.max_residual) return std::nullopt;
    const LkResult back = lk_track(next, prev, fwd.position, cfg);
    if (norm(back.position - p) > cfg.fb_threshold) return std::nullopt;
    return fwd.position;
}

TrackSet track_sequence(const FrameSequence& luma, const TrackerConfig& cfg) {
    require(luma.channels() == 1, "invalid-argument", "track_sequence expects a single-channel sequence");
    const int n = luma.size(), w = luma.width(), h = luma.height();
    const int levels = usable_levels(w, h, cfg.levels);

    TrackSet ts;
    ts.frame_count = n;
    int next_id = 0;
    for (const Point2& p : detect_features(luma[0], cfg.max_features, cfg.min_distance, cfg.quality))
        ts.tracks.push_back({next_id++, 0, {p}, Label::Unlabeled});

    TrackingPyramid cur = build_tracking_pyramid(luma[0], levels);
    for (int t = 0; t + 1 < n; ++t) {
        TrackingPyramid nxt = build_tracking_pyramid(luma[t + 1], levels);
        std::vector<std::size_t> live;
        for (std::size_t i = 0; i < ts.tracks.size(); ++i)
            if (ts.tracks[i].end_frame() == t) live.push_back(i);
        std::vector<std::optional<Point2>> moved(live.size());
        parallel_for(live.size(), [&](std::size_t k) {
            moved[k] = lk_step_checked(cur, nxt, ts.tracks[live[k]].positions.back(), cfg);
        });
        for (std::size_t k = 0; k < live.size(); ++k)
            if (moved[k]) ts.tracks[live[k]].positions.push_back(*moved[k]);

        if (cfg.reseed_interval > 0 && (t + 1) % cfg.reseed_interval == 0) {
            const int cells_x = (w + cfg.cell_size - 1) / cfg.cell_size;
            const int cells_y = (h + cfg.cell_size - 1) / cfg.cell_size;
            std::vector<char> covered(std::size_t(cells_x) * cells_y, 0);
            std::vector<Point2> alive;
            for (const Track& tr : ts.tracks)
                if (tr.end_frame() == t + 1) {
                    const Point2 q = tr.positions.back();
                    covered[std::size_t(int(q.y) / cfg.cell_size) * cells_x + int(q.x) / cfg.cell_size] = 1;
                    alive.push_back(q);
                }
            for (const Point2& p : detect_features(luma[t + 1], cfg.max_features, cfg.min_distance, cfg.quality)) {
                if (covered[std::size_t(int(p.y) / cfg.cell_size) * cells_x + int(p.x) / cfg.cell_size]) continue;
                const bool far_enough = std::all_of(alive.begin(), alive.end(), [&](const Point2& q) {
                    return std::max(std::abs(p.x - q.x), std::abs(p.y - q.y)) >= cfg.min_distance;
                });
                if (!far_enough) continue;
                ts.tracks.push_back({next_id++, t + 1, {p}, Label::Unlabeled});
            }
        }
        cur = std::move(nxt);
    }
    std::erase_if(ts.tracks, [&](const Track& tr) { return int(tr.positions.size()) < cfg.min_length; });
    return ts;
}

Track track_point_forward(const FrameSequence& luma, int start_frame, Point2 start, const TrackerConfig& cfg) {
    const int levels = usable_levels(luma.width(), luma.height(), cfg.levels);
    Track track{0, start_frame, {start}, Label::Unlabeled};
    if (start_frame + 1 >= luma.size()) return track;
    TrackingPyramid cur = build_tracking_pyramid(luma[start_frame], levels);
    for (int t = start_frame; t + 1 < luma.size(); ++t) {
        TrackingPyramid nxt = build_tracking_pyramid(luma[t + 1], levels);
        auto moved = lk_step_checked(cur, nxt, track.positions.back(), cfg);
        if (!moved) break;
        track.positions.push_back(*moved);
        cur = std::move(nxt);
    }
    return track;
}

std::vector<PointPair> tracks_alive_at(const TrackSet& ts, int i, int j, Label label) {
    std::vector<PointPair> out;
    for (const Track& t : ts.tracks)
        if (t.label == label && t.alive_at(i) && t.alive_at(j)) out.push_back({t.at(i), t.at(j)});
    return out;
}

json to_json(const TrackSet& ts) {
    json tracks = json::array();
    for (const Track& t : ts.tracks) {
        json pos = json::array();
        for (const Point2& p : t.positions) pos.push_back({p.x, p.y});
        tracks.push_back({{"id", t.id}, {"start_frame", t.start_frame}, {"label", to_string(t.label)}, {"positions", pos}});
    }
    return {{"frame_count", ts.frame_count}, {"tracks", tracks}};
}

TrackSet trackset_from_json(const json& j) {
    auto field = [](const json& obj, const char* name) -> const json& {
        if (!obj.is_object() || !obj.contains(name)) fail("schema-violation", std::string("missing field '") + name + "'");
        return obj.at(name);
    };
    TrackSet ts;
    try {
        ts.frame_count = field(j, "frame_count").get<int>();
        for (const json& jt : field(j, "tracks")) {
            Track t;
            t.id = field(jt, "id").get<int>();
            t.start_frame = field(jt, "start_frame").get<int>();
            const json& label = field(jt, "label");
            t.label = label.is_number() ? label_from_string(std::to_string(label.get<int>()))
                                        : label_from_string(label.get<std::string>());
            for (const json& p : field(jt, "positions")) {
                if (!p.is_array() || p.size() != 2) fail("schema-violation", "positions entries must be [x, y]");
                t.positions.push_back({p[0].get<double>(), p[1].get<double>()});
            }
            ts.tracks.push_back(std::move(t));
        }
    } catch (const json::exception& e) {
        fail("schema-violation", std::string("track document: ") + e.what());
    }
    ts.validate();
    return ts;
}

void save_tracks(const TrackSet& ts, const std::string& path) {
    const std::filesystem::path parent = std::filesystem::path(path).parent_path();
    std::error_code ec;
    if (!parent.empty()) std::filesystem::create_directories(parent, ec);
    std::ofstream out(path);
    if (!out) fail("io-failure", "cannot write " + path);
    out << to_json(ts).dump(1) << '\n';
}

TrackSet load_tracks(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("io-failure", "cannot read " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail("schema-violation", path + ": " + e.what());
    }
    return trackset_from_json(j);
}

}  // namespace reflect

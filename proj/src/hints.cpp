#include "reflect/hints.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace reflect {

using nlohmann::json;

namespace {

struct DisjointSets {
    std::vector<int> parent;
    explicit DisjointSets(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

double point_segment_distance(Point2 p, Point2 a, Point2 b) {
    const Point2 ab = b - a, ap = p - a;
    const double len2 = ab.x * ab.x + ab.y * ab.y;
    if (len2 == 0.0) return norm(ap);
    const double t = std::clamp((ap.x * ab.x + ap.y * ab.y) / len2, 0.0, 1.0);
    return norm(p - (a + t * ab));
}

double polyline_distance(Point2 p, const std::vector<Point2>& line) {
    if (line.size() == 1) return norm(p - line.front());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < line.size(); ++i) best = std::min(best, point_segment_distance(p, line[i], line[i + 1]));
    return best;
}

std::string id_list(const std::vector<int>& ids) {
    std::string s;
    for (int id : ids) s += (s.empty() ? "" : ",") + std::to_string(id);
    return s;
}

}  // namespace

void ScribbleSet::validate(int width, int height) const {
    for (const Stroke& s : strokes) {
        require(s.label != Label::Unlabeled, "schema-violation", "strokes.label must be background or reflection");
        require(!s.points.empty(), "schema-violation", "strokes.points must not be empty");
        require(s.radius > 0.0, "schema-violation", "strokes.radius must be positive");
        for (const Point2& p : s.points)
            require(p.x >= 0 && p.y >= 0 && p.x <= width - 1 && p.y <= height - 1, "schema-violation",
                    "strokes.points outside the frame");
    }
}

json to_json(const ScribbleSet& s) {
    json strokes = json::array();
    for (const Stroke& st : s.strokes) {
        json pts = json::array();
        for (const Point2& p : st.points) pts.push_back({p.x, p.y});
        strokes.push_back({{"label", to_string(st.label)}, {"radius", st.radius}, {"points", pts}});
    }
    return {{"frame_index", s.frame_index}, {"strokes", strokes}};
}

ScribbleSet scribbles_from_json(const json& j) {
    ScribbleSet s;
    auto field = [](const json& obj, const char* name) -> const json& {
        if (!obj.is_object() || !obj.contains(name)) fail("schema-violation", std::string("missing field '") + name + "'");
        return obj.at(name);
    };
    try {
        s.frame_index = field(j, "frame_index").get<int>();
        for (const json& js : field(j, "strokes")) {
            Stroke st;
            const std::string label = field(js, "label").get<std::string>();
            if (label != "background" && label != "reflection")
                fail("schema-violation", "strokes.label must be \"background\" or \"reflection\"");
            st.label = label_from_string(label);
            st.radius = field(js, "radius").get<double>();
            for (const json& p : field(js, "points")) {
                if (!p.is_array() || p.size() != 2) fail("schema-violation", "strokes.points entries must be [x, y]");
                st.points.push_back({p[0].get<double>(), p[1].get<double>()});
            }
            s.strokes.push_back(std::move(st));
        }
    } catch (const json::exception& e) {
        fail("schema-violation", std::string("scribble document: ") + e.what());
    }
    return s;
}

ScribbleSet load_scribbles(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("io-failure", "cannot read " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail("schema-violation", path + ": " + e.what());
    }
    return scribbles_from_json(j);
}

ScribbleSet scribbles_from_mask(const Grid<std::uint8_t>& mask, int frame_index) {
    ScribbleSet s;
    s.frame_index = frame_index;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            const std::uint8_t v = mask(x, y);
            if (v == 1 || v == 2)
                s.strokes.push_back({v == 1 ? Label::Background : Label::Reflection, {{double(x), double(y)}}, 0.5});
        }
    return s;
}

int AffinityGraph::index_of(int track_id) const {
    auto it = std::find(nodes.begin(), nodes.end(), track_id);
    return it == nodes.end() ? -1 : int(it - nodes.begin());
}

double AffinityGraph::weight(int track_a, int track_b) const {
    const int a = index_of(track_a), b = index_of(track_b);
    for (const Edge& e : edges)
        if ((e.a == a && e.b == b) || (e.a == b && e.b == a)) return e.weight;
    return 0.0;
}

double motion_distance(const Track& a, const Track& b) {
    const int first = std::max(a.start_frame, b.start_frame);
    const int last = std::min(a.end_frame(), b.end_frame());
    double sum = 0.0;
    int steps = 0;
    for (int t = first; t + 1 <= last; ++t) {
        const Point2 va = a.at(t + 1) - a.at(t), vb = b.at(t + 1) - b.at(t);
        sum += norm(va - vb);
        ++steps;
    }
    if (steps) return sum / steps;
    // No shared step: compare mean velocities over each track's own span.
    if (a.positions.size() < 2 || b.positions.size() < 2) return 0.0;
    auto mean_velocity = [](const Track& t) {
        return (1.0 / double(t.positions.size() - 1)) * (t.positions.back() - t.positions.front());
    };
    return norm(mean_velocity(a) - mean_velocity(b));
}

std::vector<double> patch_color(const FrameSequence& seq, int t, Point2 p, int patch_size) {
    const Frame& f = seq[t];
    const int cx = int(std::lround(p.x)), cy = int(std::lround(p.y)), half = patch_size / 2;
    std::vector<double> mean(f.channels, 0.0);
    int count = 0;
    for (int y = cy - half; y <= cy + half; ++y)
        for (int x = cx - half; x <= cx + half; ++x) {
            if (x < 0 || y < 0 || x >= f.width || y >= f.height) continue;
            for (int c = 0; c < f.channels; ++c) mean[c] += f.at(x, y, c);
            ++count;
        }
    for (double& m : mean) m /= std::max(count, 1);
    return mean;
}

namespace {

double color_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
    return std::sqrt(s);
}

// -log of the affinity; finite even where the affinity underflows.
double affinity_cost(const Track& a, const Track& b, const std::vector<double>& ca, const std::vector<double>& cb,
                     const AffinityConfig& cfg) {
    const double dm = motion_distance(a, b), dc = color_distance(ca, cb);
    return dm * dm / (cfg.sigma_motion * cfg.sigma_motion) + dc * dc / (cfg.sigma_color * cfg.sigma_color);
}

}  // namespace

double affinity(const Track& a, const Track& b, const FrameSequence& seq, int frame, const AffinityConfig& cfg) {
    return std::exp(-affinity_cost(a, b, patch_color(seq, frame, a.at(frame), cfg.patch_size),
                                   patch_color(seq, frame, b.at(frame), cfg.patch_size), cfg));
}

AffinityGraph build_affinity_graph(const TrackSet& ts, const FrameSequence& seq, int frame, const AffinityConfig& cfg) {
    AffinityGraph g;
    g.frame = frame;
    std::vector<const Track*> alive;
    for (const Track& t : ts.tracks)
        if (t.alive_at(frame)) {
            alive.push_back(&t);
            g.nodes.push_back(t.id);
        }
    if (alive.size() < 2)
        fail("insufficient-tracks", "affinity graph needs >= 2 tracks alive at frame " + std::to_string(frame));

    const int n = int(alive.size());
    std::vector<std::vector<double>> colors(n);
    for (int i = 0; i < n; ++i) colors[i] = patch_color(seq, frame, alive[i]->at(frame), cfg.patch_size);

    std::set<std::pair<int, int>> pairs;
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) {
        std::iota(order.begin(), order.end(), 0);
        const Point2 pi = alive[i]->at(frame);
        std::vector<double> dist(n);
        for (int j = 0; j < n; ++j) dist[j] = norm(alive[j]->at(frame) - pi);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dist[a] < dist[b]; });
        int taken = 0;
        for (int j : order) {
            if (taken >= cfg.k_neighbors) break;
            if (j == i) continue;
            pairs.insert({std::min(i, j), std::max(i, j)});
            ++taken;
        }
    }
    for (auto [a, b] : pairs) {
        const double w = std::exp(-affinity_cost(*alive[a], *alive[b], colors[a], colors[b], cfg));
        if (w > cfg.min_weight) g.edges.push_back({a, b, w});
    }
    return g;
}

namespace {

struct DirichletSolution {
    std::vector<double> p_background;
    std::vector<double> p_reflection;
    std::vector<int> unseeded_orphans;  // node indices in components without any seed
};

// Solves the combinatorial Dirichlet problem for both labels. Nodes in
// components without a seed are reported instead of solved.
DirichletSolution solve_dirichlet(const AffinityGraph& g, const std::vector<Label>& seed_of) {
    const int n = int(g.nodes.size());
    DisjointSets sets(n);
    for (const auto& e : g.edges) sets.unite(e.a, e.b);
    std::vector<char> seeded_root(n, 0);
    for (int i = 0; i < n; ++i)
        if (seed_of[i] != Label::Unlabeled) seeded_root[sets.find(i)] = 1;

    DirichletSolution sol;
    sol.p_background.assign(n, 0.0);
    sol.p_reflection.assign(n, 0.0);
    std::vector<int> unknown_index(n, -1);
    int unknowns = 0;
    for (int i = 0; i < n; ++i) {
        if (seed_of[i] == Label::Background) sol.p_background[i] = 1.0;
        if (seed_of[i] == Label::Reflection) sol.p_reflection[i] = 1.0;
        if (seed_of[i] != Label::Unlabeled) continue;
        if (!seeded_root[sets.find(i)])
            sol.unseeded_orphans.push_back(i);
        else
            unknown_index[i] = unknowns++;
    }
    if (unknowns == 0) return sol;

    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(unknowns, 2);
    std::vector<double> degree(unknowns, 0.0);
    for (const auto& e : g.edges) {
        const int ua = unknown_index[e.a], ub = unknown_index[e.b];
        if (ua >= 0) degree[ua] += e.weight;
        if (ub >= 0) degree[ub] += e.weight;
        if (ua >= 0 && ub >= 0) {
            triplets.emplace_back(ua, ub, -e.weight);
            triplets.emplace_back(ub, ua, -e.weight);
        } else if (ua >= 0 || ub >= 0) {
            const int u = ua >= 0 ? ua : ub;
            const int s = ua >= 0 ? e.b : e.a;
            if (seed_of[s] == Label::Background) rhs(u, 0) += e.weight;
            if (seed_of[s] == Label::Reflection) rhs(u, 1) += e.weight;
        }
    }
    for (int u = 0; u < unknowns; ++u) triplets.emplace_back(u, u, degree[u]);
    Eigen::SparseMatrix<double> lu(unknowns, unknowns);
    lu.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(lu);
    if (solver.info() != Eigen::Success) fail("solver-failure", "random-walk Laplacian factorization failed");
    const Eigen::MatrixXd x = solver.solve(rhs);
    for (int i = 0; i < n; ++i) {
        if (unknown_index[i] < 0) continue;
        sol.p_background[i] = x(unknown_index[i], 0);
        sol.p_reflection[i] = x(unknown_index[i], 1);
    }
    return sol;
}

std::vector<Label> seed_vector(const AffinityGraph& g, const std::map<int, Label>& seeds) {
    std::vector<Label> seed_of(g.nodes.size(), Label::Unlabeled);
    for (const auto& [id, label] : seeds) {
        const int idx = g.index_of(id);
        require(idx >= 0, "invalid-seed", "seed track " + std::to_string(id) + " is not a graph node");
        require(label != Label::Unlabeled, "invalid-seed", "seed track " + std::to_string(id) + " has no label");
        seed_of[idx] = label;
    }
    return seed_of;
}

}  // namespace

RandomWalkResult random_walk(const AffinityGraph& g, const std::map<int, Label>& seeds) {
    const bool has_b = std::any_of(seeds.begin(), seeds.end(), [](auto& s) { return s.second == Label::Background; });
    const bool has_r = std::any_of(seeds.begin(), seeds.end(), [](auto& s) { return s.second == Label::Reflection; });
    if (!has_b || !has_r) fail("missing-label-seeds", "random walk needs at least one seed of each label");
    const std::vector<Label> seed_of = seed_vector(g, seeds);
    const DirichletSolution sol = solve_dirichlet(g, seed_of);
    if (!sol.unseeded_orphans.empty()) {
        std::vector<int> ids;
        for (int i : sol.unseeded_orphans) ids.push_back(g.nodes[i]);
        fail("disconnected-unseeded-component", "tracks without a path to any seed: " + id_list(ids));
    }
    RandomWalkResult out;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const int id = g.nodes[i];
        out.background_probability[id] = sol.p_background[i];
        out.reflection_probability[id] = sol.p_reflection[i];
        out.labels[id] = seed_of[i] != Label::Unlabeled ? seed_of[i]
                         : sol.p_background[i] >= sol.p_reflection[i] ? Label::Background
                                                                       : Label::Reflection;
    }
    return out;
}

std::map<int, Label> random_walk_labels(const AffinityGraph& g, const std::map<int, Label>& seeds) {
    return random_walk(g, seeds).labels;
}

std::map<int, Label> apply_scribbles(const TrackSet& ts, const ScribbleSet& s) {
    require(s.frame_index >= 0 && s.frame_index < ts.frame_count, "invalid-scribbles",
            "scribble frame " + std::to_string(s.frame_index) + " outside the sequence");
    std::map<int, Label> seeds;
    for (const Track& t : ts.tracks) {
        if (!t.alive_at(s.frame_index)) continue;
        const Point2 p = t.at(s.frame_index);
        bool bg = false, refl = false;
        for (const Stroke& st : s.strokes) {
            if (polyline_distance(p, st.points) > st.radius) continue;
            (st.label == Label::Background ? bg : refl) = true;
        }
        if (bg && refl)
            fail("conflicting-scribbles", "track " + std::to_string(t.id) + " is covered by both labels");
        if (bg || refl) seeds[t.id] = bg ? Label::Background : Label::Reflection;
    }
    return seeds;
}

TrackSet add_user_track(const TrackSet& ts, const FrameSequence& luma, int frame, Point2 point, Label label,
                        const TrackerConfig& cfg) {
    require(frame >= 0 && frame < luma.size() && point.x >= 0 && point.y >= 0 && point.x <= luma.width() - 1 &&
                point.y <= luma.height() - 1,
            "out-of-bounds", "user track start lies outside the sequence");
    Track t = track_point_forward(luma, frame, point, cfg);
    if (frame + 1 < luma.size() && t.positions.size() < 2)
        fail("track-immediately-lost", "user track at frame " + std::to_string(frame) + " lost on the first step");
    t.id = ts.next_id();
    t.label = label;
    TrackSet out = ts;
    out.tracks.push_back(std::move(t));
    return out;
}

namespace {

void write_label(Track& t, Label l) {
    if (t.label != Label::Unlabeled)
        fail("label-rewrite", "track " + std::to_string(t.id) + " already carries a label");
    t.label = l;
}

}  // namespace

TrackSet propagate_labels(const TrackSet& ts, const FrameSequence& seq, int annotated_frame,
                          const std::map<int, Label>& labels_at_frame, const AffinityConfig& cfg) {
    TrackSet out = ts;
    std::vector<int> missing;
    for (Track& t : out.tracks) {
        if (t.label != Label::Unlabeled) continue;
        auto it = labels_at_frame.find(t.id);
        if (it != labels_at_frame.end() && it->second != Label::Unlabeled)
            write_label(t, it->second);
        else if (t.alive_at(annotated_frame))
            missing.push_back(t.id);
    }
    if (!missing.empty())
        fail("incomplete-labels", "tracks alive at the annotated frame without a label: " + id_list(missing));

    std::set<int> birth_frames;
    for (const Track& t : out.tracks)
        if (t.label == Label::Unlabeled) birth_frames.insert(t.start_frame);

    for (int f : birth_frames) {
        std::vector<std::size_t> alive, pending;
        std::map<int, Label> seeds;
        for (std::size_t i = 0; i < out.tracks.size(); ++i) {
            const Track& t = out.tracks[i];
            if (!t.alive_at(f)) continue;
            alive.push_back(i);
            if (t.label != Label::Unlabeled)
                seeds[t.id] = t.label;
            else
                pending.push_back(i);
        }
        if (pending.empty()) continue;
        if (seeds.empty()) {
            std::vector<int> ids;
            for (std::size_t i : pending) ids.push_back(out.tracks[i].id);
            fail("unlabelable-track", "no labeled track is co-alive with tracks " + id_list(ids));
        }
        // Build the graph over all co-alive tracks; a lone pending track with no
        // co-alive neighbours falls through to the affinity vote below.
        std::map<int, Label> resolved;
        std::vector<int> orphans;
        if (alive.size() >= 2) {
            const AffinityGraph g = build_affinity_graph(out, seq, f, cfg);
            const std::vector<Label> seed_of = seed_vector(g, seeds);
            const DirichletSolution sol = solve_dirichlet(g, seed_of);
            for (std::size_t i = 0; i < g.nodes.size(); ++i) {
                if (seed_of[i] != Label::Unlabeled) continue;
                if (std::find(sol.unseeded_orphans.begin(), sol.unseeded_orphans.end(), int(i)) !=
                    sol.unseeded_orphans.end()) {
                    orphans.push_back(g.nodes[i]);
                    continue;
                }
                resolved[g.nodes[i]] =
                    sol.p_background[i] >= sol.p_reflection[i] ? Label::Background : Label::Reflection;
            }
        }
        // Components with no labeled member take the label of the most similar
        // labeled co-alive track (motion and colour, no spatial restriction).
        for (int id : orphans) {
            const Track& t = *out.find(id);
            const auto ct = patch_color(seq, f, t.at(f), cfg.patch_size);
            double best = std::numeric_limits<double>::infinity();
            Label best_label = Label::Background;
            for (const auto& [sid, label] : seeds) {
                const Track& s = *out.find(sid);
                const double cost = affinity_cost(t, s, ct, patch_color(seq, f, s.at(f), cfg.patch_size), cfg);
                if (cost < best) {
                    best = cost;
                    best_label = label;
                }
            }
            resolved[id] = best_label;
        }
        for (std::size_t i : pending) {
            Track& t = out.tracks[i];
            auto it = resolved.find(t.id);
            if (it != resolved.end()) write_label(t, it->second);
        }
    }
    for (const Track& t : out.tracks)
        if (t.label == Label::Unlabeled)
            fail("unlabelable-track", "track " + std::to_string(t.id) + " could not be labeled");
    return out;
}

KMeansLabeling kmeans_fallback(const TrackSet& ts) {
    std::vector<std::size_t> usable;
    std::vector<Point2> feature;
    for (std::size_t i = 0; i < ts.tracks.size(); ++i) {
        const Track& t = ts.tracks[i];
        if (t.positions.size() < 2) continue;
        usable.push_back(i);
        feature.push_back((1.0 / double(t.positions.size() - 1)) * (t.positions.back() - t.positions.front()));
    }
    if (usable.size() < 2) fail("insufficient-tracks", "k-means needs >= 2 tracks spanning >= 2 frames");

    KMeansLabeling out{ts, {}};
    // Deterministic seeding: the two most distant velocity vectors (first pair in index order).
    std::size_t sa = 0, sb = 1;
    double far = -1.0;
    for (std::size_t i = 0; i < feature.size(); ++i)
        for (std::size_t j = i + 1; j < feature.size(); ++j)
            if (const double d = norm(feature[i] - feature[j]); d > far) {
                far = d;
                sa = i;
                sb = j;
            }

    std::vector<int> assign(feature.size(), 0);
    if (far <= 1e-12) {
        out.warnings.push_back("all tracks share one velocity; k-means collapsed to a single cluster");
    } else {
        Point2 centre[2] = {feature[sa], feature[sb]};
        auto nearest = [&](Point2 f) { return norm(f - centre[1]) < norm(f - centre[0]) ? 1 : 0; };
        for (std::size_t i = 0; i < feature.size(); ++i) assign[i] = nearest(feature[i]);
        for (int iter = 0; iter < 100; ++iter) {
            Point2 sum[2] = {{0, 0}, {0, 0}};
            int count[2] = {0, 0};
            for (std::size_t i = 0; i < feature.size(); ++i) {
                sum[assign[i]] = sum[assign[i]] + feature[i];
                ++count[assign[i]];
            }
            for (int c = 0; c < 2; ++c)
                if (count[c]) centre[c] = (1.0 / count[c]) * sum[c];
            bool changed = false;
            for (std::size_t i = 0; i < feature.size(); ++i) {
                const int c = nearest(feature[i]);
                changed |= c != assign[i];
                assign[i] = c;
            }
            if (!changed) break;
        }
    }
    const long ones = std::count(assign.begin(), assign.end(), 1);
    const int background_cluster = ones > long(assign.size()) - ones ? 1 : 0;
    if (ones == 0 || ones == long(assign.size())) {
        if (far > 1e-12) out.warnings.push_back("k-means produced an empty cluster");
    }
    for (Track& t : out.tracks.tracks) t.label = Label::Background;  // single-frame tracks default to the dominant layer
    for (std::size_t k = 0; k < usable.size(); ++k)
        out.tracks.tracks[usable[k]].label = assign[k] == background_cluster ? Label::Background : Label::Reflection;
    return out;
}

}  // namespace reflect

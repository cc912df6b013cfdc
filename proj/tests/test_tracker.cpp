#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"
#include "reflect/tracker.hpp"

using namespace reflect;
using fixtures::error_code_of;

TEST(DetectFeatures, ConstantFrameIsEmpty) {
    EXPECT_TRUE(detect_features(Frame(32, 32, 1, 0.5), 100, 3, 0.01).empty());
}

TEST(DetectFeatures, EigenvalueMapMatchesDirectSolve) {
    const Frame f = fixtures::random_frame(12, 10, 1, 5);
    const Grid<double> lambda = min_eigenvalue_map(f);
    const Gradient g = spatial_gradient(f);
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) {
            Eigen::Matrix2d s = Eigen::Matrix2d::Zero();
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int u = x + dx, v = y + dy;
                    if (u < 0 || v < 0 || u >= f.width || v >= f.height) continue;
                    Eigen::Vector2d d(g.gx(u, v), g.gy(u, v));
                    s += d * d.transpose();
                }
            const double expect = std::max(0.0, Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(s).eigenvalues()(0));
            EXPECT_NEAR(lambda(x, y), expect, 1e-12);
        }
}

TEST(DetectFeatures, SquareCornersRankAboveEdgeInteriors) {
    // A 3 px square is a blob under a 3x3 tensor window; 8 px leaves real edge interiors.
    Frame f(24, 24, 1, 0.0);
    for (int y = 8; y <= 15; ++y)
        for (int x = 8; x <= 15; ++x) f.at(x, y) = 1.0;
    // Oracle: per-pixel eigen-solve of the structure tensor.
    const Gradient g = spatial_gradient(f);
    auto oracle = [&](int x, int y) {
        Eigen::Matrix2d s = Eigen::Matrix2d::Zero();
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                Eigen::Vector2d d(g.gx(x + dx, y + dy), g.gy(x + dx, y + dy));
                s += d * d.transpose();
            }
        return Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(s).eigenvalues()(0);
    };
    const int corners[4][2] = {{8, 8}, {15, 8}, {8, 15}, {15, 15}};
    // Edge interiors: points on and beside each side, at least 3 px from a corner.
    double edge_max = 0;
    for (int s = 11; s <= 12; ++s)
        for (int off : {7, 8, 9, 14, 15, 16}) {
            edge_max = std::max(edge_max, oracle(s, off));
            edge_max = std::max(edge_max, oracle(off, s));
        }
    auto corner_peak = [&](const int* c) {
        double best = 0;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) best = std::max(best, oracle(c[0] + dx, c[1] + dy));
        return best;
    };
    for (auto& c : corners) EXPECT_GT(corner_peak(c), edge_max);

    const auto pts = detect_features(f, 4, 2, 0.01);
    ASSERT_EQ(pts.size(), 4u);
    std::set<int> hit;
    for (const Point2& p : pts) {
        for (int k = 0; k < 4; ++k)
            if (std::abs(p.x - corners[k][0]) <= 1 && std::abs(p.y - corners[k][1]) <= 1) hit.insert(k);
        EXPECT_GT(oracle(int(p.x), int(p.y)), edge_max);
    }
    EXPECT_EQ(hit.size(), 4u);
}

TEST(DetectFeatures, MinDistanceOfFrameWidthKeepsOnePoint) {
    const Frame f = fixtures::textured_frame(40, 40, 3);
    EXPECT_LE(detect_features(f, 100, 40, 0.01).size(), 1u);
}

TEST(DetectFeatures, ThinningAndCount) {
    const Frame f = fixtures::textured_frame(64, 64, 4);
    const auto pts = detect_features(f, 30, 6, 0.01);
    EXPECT_LE(pts.size(), 30u);
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j)
            EXPECT_GE(std::max(std::abs(pts[i].x - pts[j].x), std::abs(pts[i].y - pts[j].y)), 6.0);
}

TEST(TrackSequence, StaticSequenceKeepsPositions) {
    const Frame f = fixtures::textured_frame(48, 48, 6);
    const TrackSet ts = track_sequence(FrameSequence(std::vector<Frame>(5, f)));
    ASSERT_FALSE(ts.tracks.empty());
    for (const Track& t : ts.tracks) {
        EXPECT_EQ(t.label, Label::Unlabeled);
        for (const Point2& p : t.positions) EXPECT_LE(norm(p - t.positions[0]), 0.1);
    }
}

TEST(TrackSequence, TranslationAccuracy) {
    const FrameSequence seq = fixtures::translating_sequence(10, 64, 64, {3, 0}, 21);
    const TrackSet ts = track_sequence(seq);
    ASSERT_GE(ts.tracks.size(), 20u);
    int good = 0;
    for (const Track& t : ts.tracks) {
        bool ok = true;
        for (std::size_t k = 1; k < t.positions.size(); ++k)
            ok &= norm(t.positions[k] - t.positions[k - 1] - Point2{3, 0}) <= 0.5;
        good += ok;
    }
    EXPECT_GE(double(good) / ts.tracks.size(), 0.9);
}

TEST(TrackSequence, PositionsStayInBounds) {
    const FrameSequence seq = fixtures::translating_sequence(10, 64, 48, {2.5, -1.0}, 22);
    const TrackSet ts = track_sequence(seq);
    ts.validate();
    for (const Track& t : ts.tracks)
        for (const Point2& p : t.positions) {
            EXPECT_GE(p.x, 0.0);
            EXPECT_GE(p.y, 0.0);
            EXPECT_LE(p.x, 63.0);
            EXPECT_LE(p.y, 47.0);
        }
}

TEST(TrackSequence, ForwardBackwardHoldsOnEveryStep) {
    const FrameSequence seq = fixtures::translating_sequence(6, 48, 48, {1.5, 0.5}, 23);
    const TrackerConfig cfg;
    const TrackSet ts = track_sequence(seq, cfg);
    std::vector<TrackingPyramid> pyr;
    for (int t = 0; t < seq.size(); ++t) pyr.push_back(build_tracking_pyramid(seq[t], 3));
    for (const Track& t : ts.tracks)
        for (int f = t.start_frame; f < t.end_frame(); ++f) {
            const LkResult back = lk_track(pyr[std::size_t(f + 1)], pyr[std::size_t(f)], t.at(f + 1), cfg);
            EXPECT_LE(norm(back.position - t.at(f)), cfg.fb_threshold);
        }
}

TEST(TrackSequence, OccludedFeatureDies) {
    const int n = 12, w = 64, h = 48, start = -20, speed = 5;
    const FrameSequence seq = fixtures::occluded_sequence(n, w, h, start, speed);
    const TrackSet ts = track_sequence(seq);
    int checked = 0;
    for (const Track& t : ts.tracks) {
        if (t.start_frame != 0) continue;
        const Point2 p = t.positions[0];
        // First frame whose block covers the feature's location.
        int k = -1;
        for (int f = 0; f < n && k < 0; ++f)
            if (p.x < start + speed * f) k = f;
        if (k < 1) continue;
        ++checked;
        EXPECT_LT(t.end_frame(), k + 2) << "track " << t.id << " covered at frame " << k;
    }
    EXPECT_GE(checked, 10);
}

TEST(TrackSequence, Deterministic) {
    const FrameSequence seq = fixtures::translating_sequence(8, 48, 48, {3, 0}, 24);
    const TrackSet a = track_sequence(seq);
    const TrackSet b = track_sequence(seq);
    EXPECT_EQ(to_json(a), to_json(b));
}

TEST(TracksAliveAt, SameFrameGivesIdenticalEndpoints) {
    TrackSet ts;
    ts.frame_count = 4;
    ts.tracks.push_back({0, 0, {{1, 1}, {2, 1}, {3, 1}}, Label::Background});
    ts.tracks.push_back({1, 1, {{5, 5}, {6, 5}}, Label::Background});
    ts.tracks.push_back({2, 0, {{9, 9}}, Label::Reflection});
    const auto pairs = tracks_alive_at(ts, 1, 1, Label::Background);
    ASSERT_EQ(pairs.size(), 2u);
    for (const auto& p : pairs) EXPECT_EQ(p.from, p.to);
}

TEST(TracksAliveAt, LabelWithoutTracksIsEmpty) {
    TrackSet ts;
    ts.frame_count = 2;
    ts.tracks.push_back({0, 0, {{1, 1}, {2, 1}}, Label::Background});
    EXPECT_TRUE(tracks_alive_at(ts, 0, 1, Label::Reflection).empty());
}

TEST(TracksAliveAt, SevenSpanningTracks) {
    TrackSet ts;
    ts.frame_count = 10;
    int id = 0;
    for (int i = 0; i < 7; ++i) {
        Track t{id++, 0, {}, Label::Background};
        for (int f = 0; f < 10; ++f) t.positions.push_back({double(i), double(f)});
        ts.tracks.push_back(t);
    }
    // Distractors: background tracks that end early or start late, and reflection tracks.
    ts.tracks.push_back({id++, 0, std::vector<Point2>(9, {1, 1}), Label::Background});
    ts.tracks.push_back({id++, 1, std::vector<Point2>(9, {1, 1}), Label::Background});
    ts.tracks.push_back({id++, 0, std::vector<Point2>(10, {1, 1}), Label::Reflection});
    const auto pairs = tracks_alive_at(ts, 0, 9, Label::Background);
    ASSERT_EQ(pairs.size(), 7u);
    for (int i = 0; i < 7; ++i) {
        EXPECT_EQ(pairs[std::size_t(i)].from, (Point2{double(i), 0}));
        EXPECT_EQ(pairs[std::size_t(i)].to, (Point2{double(i), 9}));
    }
}

TEST(TrackJson, RoundTrip) {
    fixtures::TempDir dir("trk");
    TrackSet ts;
    ts.frame_count = 5;
    ts.tracks.push_back({3, 1, {{1.25, 2.5}, {2.125, 2.75}}, Label::Reflection});
    ts.tracks.push_back({7, 0, {{0, 0}}, Label::Background});
    save_tracks(ts, (dir / "nested" / "t.json").string());
    const TrackSet back = load_tracks((dir / "nested" / "t.json").string());
    EXPECT_EQ(to_json(back), to_json(ts));
    EXPECT_EQ(back.tracks[0].label, Label::Reflection);
    EXPECT_EQ(back.tracks[0].positions[1], (Point2{2.125, 2.75}));
}

TEST(TrackJson, SchemaViolation) {
    EXPECT_EQ(error_code_of([] { trackset_from_json(nlohmann::json{{"tracks", nlohmann::json::array()}}); }),
              "schema-violation");
    EXPECT_EQ(error_code_of([] {
                  trackset_from_json(nlohmann::json::parse(
                      R"({"frame_count":2,"tracks":[{"id":0,"start_frame":0,"label":"sky","positions":[[1,1]]}]})"));
              }),
              "schema-violation");
}

TEST(TrackSetValidate, RejectsDuplicatesAndOverruns) {
    TrackSet ts;
    ts.frame_count = 2;
    ts.tracks.push_back({0, 0, {{1, 1}}, Label::Background});
    ts.tracks.push_back({0, 0, {{1, 1}}, Label::Background});
    EXPECT_EQ(error_code_of([&] { ts.validate(); }), "invalid-trackset");
    ts.tracks.pop_back();
    ts.tracks.push_back({1, 1, {{1, 1}, {1, 1}}, Label::Background});
    EXPECT_EQ(error_code_of([&] { ts.validate(); }), "invalid-trackset");
}

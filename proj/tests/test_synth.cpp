#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "reflect/frame_store.hpp"
#include "reflect/synth.hpp"

using namespace reflect;
using fixtures::error_code_of;

namespace {

// Direct SSIM: 11x11 Gaussian window (sigma 1.5), every full window position.
double ssim_oracle(const Frame& a, const Frame& b) {
    double g[11][11], gs = 0;
    for (int j = 0; j < 11; ++j)
        for (int i = 0; i < 11; ++i) {
            g[j][i] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
            gs += g[j][i];
        }
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0;
    for (int c = 0; c < a.channels; ++c) {
        double sum = 0;
        int count = 0;
        for (int y0 = 0; y0 + 11 <= a.height; ++y0)
            for (int x0 = 0; x0 + 11 <= a.width; ++x0) {
                double mx = 0, my = 0;
                for (int j = 0; j < 11; ++j)
                    for (int i = 0; i < 11; ++i) {
                        mx += g[j][i] / gs * a.at(x0 + i, y0 + j, c);
                        my += g[j][i] / gs * b.at(x0 + i, y0 + j, c);
                    }
                double vx = 0, vy = 0, cov = 0;
                for (int j = 0; j < 11; ++j)
                    for (int i = 0; i < 11; ++i) {
                        const double w = g[j][i] / gs;
                        const double dx = a.at(x0 + i, y0 + j, c) - mx, dy = b.at(x0 + i, y0 + j, c) - my;
                        vx += w * dx * dx;
                        vy += w * dy * dy;
                        cov += w * dx * dy;
                    }
                sum += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
        total += sum / count;
    }
    return total / a.channels;
}

Frame flipped(const Frame& f) {
    Frame out(f.width, f.height, f.channels);
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x)
            for (int c = 0; c < f.channels; ++c) out.at(x, y, c) = f.at(f.width - 1 - x, y, c);
    return out;
}

FrameSequence scaled_seq(const FrameSequence& s, double a) {
    std::vector<Frame> out = s.frames();
    for (Frame& f : out)
        for (double& v : f.data) v *= a;
    return FrameSequence(out);
}

}  // namespace

TEST(Ssim, IdenticalFramesScoreOne) {
    const Frame f = fixtures::random_frame(24, 20, 3, 1);
    EXPECT_NEAR(ssim(f, f), 1.0, 1e-12);
}

TEST(Ssim, UniformFramesClosedForm) {
    const double expected = (2 * 0.4 * 0.6 + 1e-4) / (0.4 * 0.4 + 0.6 * 0.6 + 1e-4);
    EXPECT_NEAR(ssim(Frame(16, 16, 1, 0.4), Frame(16, 16, 1, 0.6)), expected, 1e-8);
    EXPECT_NEAR(expected, 0.9231, 1e-4);
}

TEST(Ssim, Symmetric) {
    const Frame a = fixtures::random_frame(20, 18, 1, 2), b = fixtures::textured_frame(20, 18, 3);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
}

TEST(Ssim, MatchesDirectComputation) {
    for (std::uint32_t seed = 0; seed < 3; ++seed) {
        const Frame a = fixtures::textured_frame(19, 23, seed);
        Frame b = a;
        std::mt19937 rng(seed + 100);
        std::uniform_real_distribution<double> u(-0.1, 0.1);
        for (double& v : b.data) v = std::clamp(v + u(rng), 0.0, 1.0);
        EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b), 1e-10);
    }
    const Frame c1 = fixtures::random_frame(15, 14, 3, 7), c2 = fixtures::random_frame(15, 14, 3, 8);
    EXPECT_NEAR(ssim(c1, c2), ssim_oracle(c1, c2), 1e-10);
}

TEST(Ssim, DegradesWithNoise) {
    const Frame a = fixtures::textured_frame(32, 32, 4);
    Frame small = a, large = a;
    std::mt19937 rng(5);
    std::normal_distribution<double> n(0, 1);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double z = n(rng);
        small.data[i] = std::clamp(a.data[i] + 0.02 * z, 0.0, 1.0);
        large.data[i] = std::clamp(a.data[i] + 0.2 * z, 0.0, 1.0);
    }
    EXPECT_GT(ssim(a, small), ssim(a, large));
}

TEST(Blend, AlphaOneIsFirstInput) {
    const FrameSequence v1 = fixtures::translating_sequence(3, 12, 10, {1, 0}, 1);
    const FrameSequence v2 = fixtures::translating_sequence(3, 12, 10, {-1, 0}, 2);
    EXPECT_EQ(blend(v1, v2, 1.0), v1);
}

TEST(Blend, PixelExample) {
    const FrameSequence m =
        blend(FrameSequence({Frame(2, 2, 1, 0.5)}), FrameSequence({Frame(2, 2, 1, 1.0)}), 0.8);
    for (double v : m[0].data) EXPECT_NEAR(v, 0.6, 1e-15);
}

TEST(Blend, EqualInputsAreUnchanged) {
    const FrameSequence v = fixtures::translating_sequence(2, 10, 10, {0, 0}, 3);
    const FrameSequence m = blend(v, v, 0.5);
    for (int t = 0; t < 2; ++t)
        for (std::size_t i = 0; i < v[t].size(); ++i) EXPECT_NEAR(m[t].data[i], v[t].data[i], 1e-15);
}

TEST(Blend, InvertibleGivenSecondInput) {
    const FrameSequence v1 = fixtures::translating_sequence(4, 16, 12, {2, 0}, 4);
    const FrameSequence v2 = fixtures::translating_sequence(4, 16, 12, {-1, 1}, 5);
    const double a = 0.8;
    const FrameSequence m = blend(v1, v2, a);
    for (int t = 0; t < 4; ++t)
        for (std::size_t i = 0; i < m[t].size(); ++i)
            EXPECT_NEAR((m[t].data[i] - (1 - a) * v2[t].data[i]) / a, v1[t].data[i], 1e-15);
}

TEST(Blend, RejectsBadAlphaAndShapes) {
    const FrameSequence v = FrameSequence({Frame(4, 4, 1, 0.5)});
    EXPECT_EQ(error_code_of([&] { blend(v, v, 1.5); }), "invalid-config");
    EXPECT_EQ(error_code_of([&] { blend(v, FrameSequence({Frame(5, 4, 1, 0.5)}), 0.5); }), "dimension-mismatch");
}

TEST(TranslatingSequence, ZeroVelocityRepeatsTheCrop) {
    const Frame base = fixtures::textured_frame(20, 16, 6);
    const FrameSequence s = make_translating_sequence(base, {0, 0}, 5, 20, 16);
    for (int t = 0; t < 5; ++t) EXPECT_EQ(s[t], base);
}

TEST(TranslatingSequence, IntegralVelocityShiftsExactly) {
    const Frame base = fixtures::textured_frame(40, 30, 7);
    const int v = 2, w = 24, h = 18;
    const FrameSequence s = make_translating_sequence(base, {double(v), 1}, 6, w, h);
    for (int t = 0; t + 1 < 6; ++t)
        for (int y = 0; y + 1 < h; ++y)
            for (int x = 0; x + v < w; ++x) ASSERT_EQ(s[t + 1].at(x + v, y + 1), s[t].at(x, y));
}

TEST(TranslatingSequence, MirrorSymmetry) {
    const Frame base = fixtures::textured_frame(40, 20, 8);
    for (double v : {3.0, 1.5}) {
        const FrameSequence fwd = make_translating_sequence(base, {v, 0}, 6, 24, 20);
        const FrameSequence back = make_translating_sequence(flipped(base), {-v, 0}, 6, 24, 20);
        for (int t = 0; t < 6; ++t) {
            const Frame f = flipped(back[t]);
            for (std::size_t i = 0; i < f.size(); ++i) ASSERT_NEAR(f.data[i], fwd[t].data[i], 1e-12);
        }
    }
}

TEST(TranslatingSequence, FractionalVelocityInterpolates) {
    Frame base(12, 1, 1);
    for (int x = 0; x < 12; ++x) base.at(x, 0) = x / 20.0;
    const FrameSequence s = make_translating_sequence(base, {0.5, 0}, 3, 8, 1);
    // Content moves right by half a pixel per frame over a linear ramp.
    for (int x = 0; x < 8; ++x) {
        EXPECT_NEAR(s[0].at(x, 0) - s[1].at(x, 0), 0.5 / 20.0, 1e-12);
        EXPECT_NEAR(s[1].at(x, 0) - s[2].at(x, 0), 0.5 / 20.0, 1e-12);
    }
}

TEST(TranslatingSequence, BaseTooSmall) {
    const Frame base(30, 30, 1, 0.5);
    EXPECT_EQ(error_code_of([&] { make_translating_sequence(base, {3, 0}, 5, 20, 20); }), "base-too-small");
    EXPECT_NO_THROW(make_translating_sequence(base, {2.5, 0}, 5, 20, 20));
}

TEST(Evaluate, ScaledGroundTruthScoresOne) {
    const GroundTruthBundle gt = make_desk_bundle(BlendConfig{0.8, {3, 0}, {-3, 0}, 4, 40, 32, 1});
    const EvalSummary s = evaluate(scaled_seq(gt.gt_background, 0.8), scaled_seq(gt.gt_reflection, 0.2), gt);
    ASSERT_EQ(s.frames.size(), 4u);
    for (const FrameScore& f : s.frames) {
        EXPECT_NEAR(f.ssim_b, 1.0, 1e-12);
        EXPECT_NEAR(f.ssim_r, 1.0, 1e-12);
    }
    EXPECT_NEAR(s.mean_b, 1.0, 1e-12);
    EXPECT_EQ(s.background_wins, 4);
}

TEST(Evaluate, InputAsBackgroundEqualsBaseline) {
    const GroundTruthBundle gt = make_desk_bundle(BlendConfig{0.8, {3, 0}, {-3, 0}, 3, 40, 32, 2});
    std::vector<Frame> zeros(3, Frame(40, 32, 1, 0.0));
    const EvalSummary s = evaluate(gt.mixed, FrameSequence(zeros), gt);
    for (const FrameScore& f : s.frames) {
        EXPECT_EQ(f.ssim_b, f.ssim_input_baseline);
        EXPECT_LT(f.ssim_input_baseline, 1.0);
    }
    EXPECT_EQ(s.background_wins, 0);
}

TEST(Evaluate, CsvLayouts) {
    EvalSummary s;
    s.frames.push_back({0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4});
    EXPECT_EQ(ssim_csv(s), "frame,ssim_b,ssim_r,ssim_input_baseline\n0,0.9,0.8,0.7\n");
    EXPECT_EQ(ssim_unscaled_csv(s), "frame,ssim_b,ssim_r,ssim_input_baseline\n0,0.6,0.5,0.4\n");
}

TEST(DeskBundle, DeterministicForSeed) {
    const BlendConfig cfg{0.8, {3, 0}, {-3, 0}, 5, 48, 40, 9};
    const GroundTruthBundle a = make_desk_bundle(cfg), b = make_desk_bundle(cfg);
    EXPECT_EQ(a.mixed, b.mixed);
    EXPECT_EQ(a.gt_labels, b.gt_labels);
    BlendConfig other = cfg;
    other.seed = 10;
    EXPECT_NE(make_desk_bundle(other).mixed, a.mixed);
}

TEST(DeskBundle, MixedIsTheBlend) {
    const GroundTruthBundle gt = make_desk_bundle(BlendConfig{0.7, {2, 0}, {-1, 1}, 4, 40, 36, 3});
    for (int t = 0; t < 4; ++t)
        for (std::size_t i = 0; i < gt.mixed[t].size(); ++i)
            ASSERT_NEAR(gt.mixed[t].data[i], 0.7 * gt.gt_background[t].data[i] + 0.3 * gt.gt_reflection[t].data[i],
                        1e-15);
}

TEST(DeskBundle, LayersMoveWithTheirVelocities) {
    const GroundTruthBundle gt = make_desk_bundle(BlendConfig{0.8, {3, 0}, {-2, 0}, 4, 40, 32, 4});
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x + 3 < 40; ++x) ASSERT_EQ(gt.gt_background[1].at(x + 3, y), gt.gt_background[0].at(x, y));
    for (int y = 0; y < 32; ++y)
        for (int x = 2; x < 40; ++x) ASSERT_EQ(gt.gt_reflection[1].at(x - 2, y), gt.gt_reflection[0].at(x, y));
}

TEST(DeskBundle, OwnershipHasBothLayers) {
    const GroundTruthBundle gt = make_desk_bundle(BlendConfig{0.8, {3, 0}, {-3, 0}, 2, 64, 64, 5});
    int bg = 0, rf = 0;
    for (auto v : gt.gt_labels[0].data) {
        bg += v == 1;
        rf += v == 2;
    }
    EXPECT_GT(bg, 0);
    EXPECT_GT(rf, 0);
}

TEST(BlendConfig, Validation) {
    EXPECT_EQ(error_code_of([] { BlendConfig{1.2}.validate(); }), "invalid-config");
    EXPECT_EQ(error_code_of([] { BlendConfig{0.8, {3, 0}, {-3, 0}, 0}.validate(); }), "invalid-config");
    const BlendConfig c{0.6, {1, 2}, {-1, 0.5}, 9, 50, 60, 11};
    const BlendConfig back = blend_config_from_json(to_json(c));
    EXPECT_EQ(back.alpha, c.alpha);
    EXPECT_EQ(back.v_reflection.y, 0.5);
    EXPECT_EQ(back.frame_count, 9);
    EXPECT_EQ(back.seed, 11u);
}

TEST(Bundle, SaveLoadRoundTrip) {
    fixtures::TempDir dir("bundle");
    const GroundTruthBundle gt = make_desk_bundle(BlendConfig{0.8, {3, 0}, {-3, 0}, 3, 32, 24, 6});
    save_bundle(gt, dir.path());
    const GroundTruthBundle back = load_bundle(dir.path());
    ASSERT_EQ(back.mixed.size(), 3);
    EXPECT_EQ(back.gt_labels, gt.gt_labels);
    EXPECT_EQ(back.config.seed, gt.config.seed);
    for (int t = 0; t < 3; ++t)
        for (std::size_t i = 0; i < gt.mixed[t].size(); ++i) {
            ASSERT_LE(std::abs(back.mixed[t].data[i] - gt.mixed[t].data[i]), 0.5 / 255 + 1e-12);
            ASSERT_LE(std::abs(back.gt_background[t].data[i] - gt.gt_background[t].data[i]), 0.5 / 255 + 1e-12);
        }
}

TEST(Bundle, LoadMissingDirectory) {
    fixtures::TempDir dir("bundle-missing");
    EXPECT_EQ(error_code_of([&] { load_bundle(dir / "nothing"); }), "io-failure");
}

TEST(AutoSeed, OneStrokePerLayerInsideTheFrame) {
    const GroundTruthBundle gt = make_desk_bundle(BlendConfig{0.8, {3, 0}, {-3, 0}, 3, 64, 64, 7});
    const ScribbleSet s = auto_seed_scribbles(gt, 1, 6.0);
    EXPECT_EQ(s.frame_index, 1);
    ASSERT_EQ(s.strokes.size(), 2u);
    std::set<Label> labels;
    for (const Stroke& st : s.strokes) {
        labels.insert(st.label);
        for (const Point2& p : st.points) {
            EXPECT_GE(p.x - st.radius, 0.0);
            EXPECT_LE(p.x + st.radius, 63.0);
            EXPECT_GE(p.y - st.radius, 0.0);
            EXPECT_LE(p.y + st.radius, 63.0);
        }
    }
    EXPECT_EQ(labels, (std::set<Label>{Label::Background, Label::Reflection}));
    EXPECT_NO_THROW(s.validate(64, 64));
}

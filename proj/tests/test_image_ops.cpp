#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "reflect/image_ops.hpp"

using namespace reflect;
using fixtures::error_code_of;

TEST(Gradient, ConstantFrameIsZero) {
    const Gradient g = spatial_gradient(Frame(9, 7, 1, 0.4));
    for (double v : g.gx.data) EXPECT_EQ(v, 0.0);
    for (double v : g.gy.data) EXPECT_EQ(v, 0.0);
}

TEST(Gradient, HorizontalRamp) {
    const int w = 11, h = 5;
    Frame f(w, h, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) f.at(x, y) = double(x) / (w - 1);
    const Gradient g = spatial_gradient(f);
    for (int y = 0; y < h; ++y)
        for (int x = 1; x < w - 1; ++x) {
            EXPECT_NEAR(g.gx(x, y), 1.0 / (w - 1), 1e-15);
            EXPECT_EQ(g.gy(x, y), 0.0);
        }
}

TEST(Gradient, MatchesDirectLoopOracle) {
    const Frame f = fixtures::random_frame(5, 5, 1, 42);
    const Gradient g = spatial_gradient(f);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) {
            double gx, gy;
            if (x == 0) gx = f.at(1, y) - f.at(0, y);
            else if (x == 4) gx = f.at(4, y) - f.at(3, y);
            else gx = (f.at(x + 1, y) - f.at(x - 1, y)) / 2.0;
            if (y == 0) gy = f.at(x, 1) - f.at(x, 0);
            else if (y == 4) gy = f.at(x, 4) - f.at(x, 3);
            else gy = (f.at(x, y + 1) - f.at(x, y - 1)) / 2.0;
            EXPECT_EQ(g.gx(x, y), gx) << x << "," << y;
            EXPECT_EQ(g.gy(x, y), gy) << x << "," << y;
        }
}

TEST(Canny, ConstantFrameHasNoEdges) {
    const EdgeMap e = canny(Frame(20, 20, 1, 0.7));
    for (auto v : e.data) EXPECT_EQ(v, 0);
}

TEST(Canny, VerticalStepEdgeNearGradientArgmax) {
    const int w = 32, h = 24, c = 15;
    Frame f(w, h, 1, 0.2);
    for (int y = 0; y < h; ++y)
        for (int x = c; x < w; ++x) f.at(x, y) = 0.8;
    const EdgeMap e = canny(f);
    int rows_with_edges = 0;
    for (int y = 0; y < h; ++y) {
        // Oracle: the column of largest central-difference magnitude in this row.
        int arg = 1;
        double best = -1;
        for (int x = 1; x < w - 1; ++x)
            if (const double d = std::abs(f.at(x + 1, y) - f.at(x - 1, y)); d > best) {
                best = d;
                arg = x;
            }
        bool any = false;
        for (int x = 0; x < w; ++x)
            if (e(x, y)) {
                any = true;
                EXPECT_GE(x, c - 1);
                EXPECT_LE(x, c + 1);
                EXPECT_LE(std::abs(x - arg), 1);
            }
        rows_with_edges += any;
    }
    EXPECT_GE(rows_with_edges, h - 4);
}

TEST(Canny, InvalidThresholds) {
    EXPECT_EQ(error_code_of([] { canny(Frame(8, 8, 1), 0.3, 0.2); }), "invalid-thresholds");
    EXPECT_EQ(error_code_of([] { canny(Frame(8, 8, 1), -0.1, 0.2); }), "invalid-thresholds");
}

TEST(Canny, InvariantUnderConstantOffset) {
    Frame f = fixtures::textured_frame(40, 40, 5);
    for (double& v : f.data) v *= 0.5;
    Frame g = f;
    for (double& v : g.data) v += 0.3;
    EXPECT_EQ(canny(f, 0.05, 0.1), canny(g, 0.05, 0.1));
}

TEST(Warp, IdentityIsBitwise) {
    const Frame f = fixtures::random_frame(13, 9, 3, 8);
    const WarpResult r = warp_homography(f, Homography::identity());
    EXPECT_EQ(r.frame, f);
    for (auto v : r.valid.data) EXPECT_EQ(v, 1);
}

TEST(Warp, IntegralTranslationMovesPixel) {
    Frame f(32, 32, 1, 0.0);
    f.at(10, 10) = 1.0;
    const WarpResult r = warp_homography(f, Homography::translation(3, 0));
    EXPECT_EQ(r.frame.at(13, 10), 1.0);
    EXPECT_EQ(r.frame.at(10, 10), 0.0);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) EXPECT_EQ(r.valid(x, y), x >= 3 ? 1 : 0) << x << "," << y;
}

TEST(Warp, IntegralTranslationEqualsShiftOnValidPixels) {
    const Frame f = fixtures::random_frame(20, 16, 1, 9);
    const WarpResult r = warp_homography(f, Homography::translation(-2, 3));
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 20; ++x)
            if (r.valid(x, y)) { EXPECT_EQ(r.frame.at(x, y), f.at(x + 2, y - 3)); }
}

TEST(Warp, ForwardThenInverseIsAccurateOnSmoothImage) {
    const int w = 64, h = 64;
    Frame f(w, h, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) f.at(x, y) = 0.5 + 0.2 * std::sin(x * 0.15) * std::cos(y * 0.11);
    Eigen::Matrix3d m;
    m << 1.02, 0.03, 1.7, -0.02, 0.99, -1.3, 1e-4, -5e-5, 1.0;
    const Homography hm(m);
    const WarpResult a = warp_homography(f, hm);
    const WarpResult b = warp_homography(a.frame, hm.inverse());
    double se = 0;
    int n = 0;
    for (int y = 8; y < h - 8; ++y)
        for (int x = 8; x < w - 8; ++x) {
            if (!b.valid(x, y)) continue;
            se += std::pow(b.frame.at(x, y) - f.at(x, y), 2);
            ++n;
        }
    ASSERT_GT(n, 1000);
    const double psnr = 10 * std::log10(1.0 / (se / n));
    EXPECT_GE(psnr, 40.0);
}

TEST(Warp, SingularHomography) {
    EXPECT_EQ(error_code_of([] {
                  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
                  m(2, 2) = 1;
                  Homography h(m);
              }),
              "singular-homography");
}

TEST(Pyramid, SingleLevelIsInput) {
    const Frame f = fixtures::random_frame(16, 16, 1, 1);
    const auto p = gaussian_pyramid(f, 1);
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p[0], f);
}

TEST(Pyramid, HalvesEachLevel) {
    const auto p = gaussian_pyramid(fixtures::random_frame(64, 64, 1, 2), 3);
    ASSERT_EQ(p.size(), 3u);
    EXPECT_EQ(p[0].width, 64);
    EXPECT_EQ(p[1].width, 32);
    EXPECT_EQ(p[2].width, 16);
    EXPECT_EQ(p[2].height, 16);
}

TEST(Pyramid, ConstantFrameStaysConstant) {
    for (const Frame& level : gaussian_pyramid(Frame(64, 48, 1, 0.37), 3))
        for (double v : level.data) EXPECT_NEAR(v, 0.37, 1e-12);
}

TEST(Pyramid, TooManyLevels) {
    EXPECT_EQ(error_code_of([] { gaussian_pyramid(Frame(32, 32, 1), 4); }), "too-many-levels");
}

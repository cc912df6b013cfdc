#include "reflect/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>

#include "reflect/frame_store.hpp"
#include "reflect/parallel.hpp"

namespace reflect {

using nlohmann::json;
namespace fs = std::filesystem;

void BlendConfig::validate() const {
    require(alpha >= 0 && alpha <= 1, "invalid-config", "alpha must lie in [0, 1]");
    require(frame_count >= 1, "invalid-config", "frame_count must be >= 1");
    require(width >= 11 && height >= 11, "invalid-config", "frames must be at least 11x11");
}

json to_json(const BlendConfig& c) {
    return {{"alpha", c.alpha},
            {"v_background", {c.v_background.x, c.v_background.y}},
            {"v_reflection", {c.v_reflection.x, c.v_reflection.y}},
            {"frame_count", c.frame_count},
            {"width", c.width},
            {"height", c.height},
            {"seed", c.seed}};
}

BlendConfig blend_config_from_json(const json& j) {
    BlendConfig c;
    try {
        c.alpha = j.value("alpha", c.alpha);
        if (j.contains("v_background")) c.v_background = {j["v_background"].at(0), j["v_background"].at(1)};
        if (j.contains("v_reflection")) c.v_reflection = {j["v_reflection"].at(0), j["v_reflection"].at(1)};
        c.frame_count = j.value("frame_count", c.frame_count);
        c.width = j.value("width", c.width);
        c.height = j.value("height", c.height);
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        fail("schema-violation", std::string("synthetic config: ") + e.what());
    }
    c.validate();
    return c;
}

FrameSequence make_translating_sequence(const Frame& base, Point2 v, int n, int width, int height) {
    require(n >= 1 && width >= 1 && height >= 1, "invalid-config", "sequence size must be positive");
    const double span_x = (n - 1) * std::abs(v.x), span_y = (n - 1) * std::abs(v.y);
    require(base.width - width >= span_x - 1e-9 && base.height - height >= span_y - 1e-9, "base-too-small",
            "base image cannot hold the moving crop");
    const double ox = v.x >= 0 ? span_x : base.width - width - span_x;
    const double oy = v.y >= 0 ? span_y : base.height - height - span_y;
    std::vector<Frame> frames(n);
    for (int t = 0; t < n; ++t) {
        const double sx = ox - t * v.x, sy = oy - t * v.y;
        Frame f(width, height, base.channels);
        const bool integral = sx == std::floor(sx) && sy == std::floor(sy);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                for (int c = 0; c < base.channels; ++c)
                    f.at(x, y, c) = integral ? base.at(x + int(sx), y + int(sy), c)
                                             : sample_bilinear(base, x + sx, y + sy, c);
        frames[t] = std::move(f);
    }
    return FrameSequence(std::move(frames));
}

FrameSequence blend(const FrameSequence& v1, const FrameSequence& v2, double alpha) {
    require(alpha >= 0 && alpha <= 1, "invalid-config", "alpha must lie in [0, 1]");
    require(v1.size() == v2.size() && v1[0].same_shape(v2[0]), "dimension-mismatch", "blend inputs differ in shape");
    std::vector<Frame> out(v1.size());
    for (int t = 0; t < v1.size(); ++t) {
        Frame f(v1.width(), v1.height(), v1.channels());
        for (std::size_t i = 0; i < f.size(); ++i)
            f.data[i] = alpha == 1.0 ? v1[t].data[i] : alpha * v1[t].data[i] + (1 - alpha) * v2[t].data[i];
        out[t] = std::move(f);
    }
    return FrameSequence(std::move(out));
}

namespace {

constexpr int kWin = 11;

std::array<double, kWin> ssim_kernel() {
    std::array<double, kWin> k;
    double s = 0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - kWin / 2;
        k[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
        s += k[i];
    }
    for (double& v : k) v /= s;
    return k;
}

// Valid-mode separable filtering of a w x h map.
std::vector<double> filter_valid(const std::vector<double>& in, int w, int h) {
    static const auto k = ssim_kernel();
    const int ow = w - kWin + 1, oh = h - kWin + 1;
    std::vector<double> tmp(std::size_t(ow) * h), out(std::size_t(ow) * oh);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int i = 0; i < kWin; ++i) s += k[i] * in[std::size_t(y) * w + x + i];
            tmp[std::size_t(y) * ow + x] = s;
        }
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int i = 0; i < kWin; ++i) s += k[i] * tmp[std::size_t(y + i) * ow + x];
            out[std::size_t(y) * ow + x] = s;
        }
    return out;
}

double ssim_channel(const Frame& a, const Frame& b, int c) {
    const int w = a.width, h = a.height;
    const std::size_t n = a.pixel_count();
    std::vector<double> xa(n), xb(n), aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
        xa[i] = a.data[i * a.channels + c];
        xb[i] = b.data[i * b.channels + c];
        aa[i] = xa[i] * xa[i];
        bb[i] = xb[i] * xb[i];
        ab[i] = xa[i] * xb[i];
    }
    const auto ma = filter_valid(xa, w, h), mb = filter_valid(xb, w, h);
    const auto saa = filter_valid(aa, w, h), sbb = filter_valid(bb, w, h), sab = filter_valid(ab, w, h);
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0;
    for (std::size_t i = 0; i < ma.size(); ++i) {
        const double va = saa[i] - ma[i] * ma[i];
        const double vb = sbb[i] - mb[i] * mb[i];
        const double cov = sab[i] - ma[i] * mb[i];
        total += (2 * ma[i] * mb[i] + c1) * (2 * cov + c2) / ((ma[i] * ma[i] + mb[i] * mb[i] + c1) * (va + vb + c2));
    }
    return total / double(ma.size());
}

}  // namespace

double ssim(const Frame& a, const Frame& b) {
    require(a.same_shape(b), "dimension-mismatch", "ssim inputs differ in shape");
    require(a.width >= kWin && a.height >= kWin, "frame-smaller-than-window", "ssim needs frames of at least 11x11");
    double s = 0;
    for (int c = 0; c < a.channels; ++c) s += ssim_channel(a, b, c);
    return s / a.channels;
}

namespace {

Frame scaled(const Frame& f, double k) {
    Frame out = f;
    for (double& v : out.data) v *= k;
    return out;
}

}  // namespace

EvalSummary evaluate(const FrameSequence& background, const FrameSequence& reflection, const GroundTruthBundle& gt) {
    const int n = gt.mixed.size();
    require(background.size() == n && reflection.size() == n && background[0].same_shape(gt.mixed[0]) &&
                reflection[0].same_shape(gt.mixed[0]),
            "dimension-mismatch", "decomposition and ground truth differ in shape");
    const double a = gt.config.alpha;
    EvalSummary s;
    s.frames.resize(n);
    parallel_for(n, [&](std::size_t t) {
        const Frame gb = scaled(gt.gt_background[t], a), gr = scaled(gt.gt_reflection[t], 1 - a);
        FrameScore& f = s.frames[t];
        f.frame = int(t);
        f.ssim_b = ssim(background[t], gb);
        f.ssim_r = ssim(reflection[t], gr);
        f.ssim_input_baseline = ssim(gt.mixed[t], gb);
        f.ssim_b_unscaled = ssim(background[t], gt.gt_background[t]);
        f.ssim_r_unscaled = ssim(reflection[t], gt.gt_reflection[t]);
        f.ssim_input_unscaled = ssim(gt.mixed[t], gt.gt_background[t]);
    });
    for (const FrameScore& f : s.frames) {
        s.mean_b += f.ssim_b;
        s.mean_r += f.ssim_r;
        s.mean_baseline += f.ssim_input_baseline;
        if (f.ssim_b > f.ssim_input_baseline) ++s.background_wins;
    }
    s.mean_b /= double(n);
    s.mean_r /= double(n);
    s.mean_baseline /= double(n);
    return s;
}

EvalSummary evaluate(const LayerDecomposition& dec, const GroundTruthBundle& gt) {
    return evaluate(dec.background, dec.reflection, gt);
}

std::string ssim_csv(const EvalSummary& s) {
    std::ostringstream os;
    os.precision(10);
    os << "frame,ssim_b,ssim_r,ssim_input_baseline\n";
    for (const FrameScore& f : s.frames)
        os << f.frame << ',' << f.ssim_b << ',' << f.ssim_r << ',' << f.ssim_input_baseline << '\n';
    return os.str();
}

std::string ssim_unscaled_csv(const EvalSummary& s) {
    std::ostringstream os;
    os.precision(10);
    os << "frame,ssim_b,ssim_r,ssim_input_baseline\n";
    for (const FrameScore& f : s.frames)
        os << f.frame << ',' << f.ssim_b_unscaled << ',' << f.ssim_r_unscaled << ',' << f.ssim_input_unscaled << '\n';
    return os.str();
}

namespace {

// Uniform in [lo, hi) from raw mt19937 output, identical on every platform.
double uniform(std::mt19937& rng, double lo, double hi) { return lo + (hi - lo) * (double(rng()) / 4294967296.0); }

}  // namespace

Frame desk_background_base(int width, int height, std::uint32_t seed) {
    std::mt19937 rng(seed);
    const int cell = 12;
    const int cols = (width + cell - 1) / cell, rows = (height + cell - 1) / cell;
    std::vector<double> tone(std::size_t(cols) * rows);
    for (double& v : tone) v = uniform(rng, 0.1, 0.9);
    const int band_top = height * 5 / 16, band_bottom = height * 11 / 16;
    Frame f(width, height, 1);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            if (y < band_top || y >= band_bottom)
                f.at(x, y) = tone[std::size_t(y / cell) * cols + x / cell];
            else
                f.at(x, y) = 0.45 + 0.12 * std::sin(2 * M_PI * x / 97.0) * std::cos(2 * M_PI * y / 71.0);
        }
    return f;
}

Frame desk_reflection_base(int width, int height, int patch_x, int patch_y, int patch_w, int patch_h,
                           std::uint32_t seed) {
    std::mt19937 rng(seed + 1);
    const int cell = 8;
    Frame f(width, height, 1);
    const int cols = (patch_w + cell - 1) / cell, rows = (patch_h + cell - 1) / cell;
    std::vector<double> tone(std::size_t(cols) * rows);
    for (double& v : tone) v = uniform(rng, 0.5, 1.0);
    for (int y = std::max(0, patch_y); y < std::min(height, patch_y + patch_h); ++y)
        for (int x = std::max(0, patch_x); x < std::min(width, patch_x + patch_w); ++x) {
            const int cx = (x - patch_x) / cell, cy = (y - patch_y) / cell;
            f.at(x, y) = (cx + cy) % 2 == 0 ? tone[std::size_t(cy) * cols + cx] : 0.0;
        }
    return f;
}

OwnershipMask ownership_mask(const Frame& bg, const Frame& refl, double min_gradient) {
    require(bg.same_shape(refl), "dimension-mismatch", "layer contributions differ in shape");
    const Gradient gb = spatial_gradient(to_luma(bg)), gr = spatial_gradient(to_luma(refl));
    OwnershipMask m(bg.width, bg.height, 0);
    for (int y = 0; y < bg.height; ++y)
        for (int x = 0; x < bg.width; ++x) {
            const double b = gb.magnitude(x, y), r = gr.magnitude(x, y);
            if (std::max(b, r) <= min_gradient) continue;
            m(x, y) = b >= r ? 1 : 2;
        }
    return m;
}

GroundTruthBundle make_blend_bundle(const Frame& background_base, const Frame& reflection_base,
                                    const BlendConfig& cfg) {
    cfg.validate();
    FrameSequence bg =
        make_translating_sequence(background_base, cfg.v_background, cfg.frame_count, cfg.width, cfg.height);
    FrameSequence rf =
        make_translating_sequence(reflection_base, cfg.v_reflection, cfg.frame_count, cfg.width, cfg.height);
    FrameSequence mixed = blend(bg, rf, cfg.alpha);
    GroundTruthBundle b{std::move(mixed), std::move(bg), std::move(rf), {}, cfg};
    b.gt_labels.resize(cfg.frame_count);
    for (int t = 0; t < cfg.frame_count; ++t)
        b.gt_labels[t] =
            ownership_mask(scaled(b.gt_background[t], cfg.alpha), scaled(b.gt_reflection[t], 1 - cfg.alpha));
    return b;
}

GroundTruthBundle make_desk_bundle(const BlendConfig& cfg) {
    cfg.validate();
    const int n = cfg.frame_count;
    auto extent = [&](double v) { return int(std::ceil((n - 1) * std::abs(v))); };
    // Crop offset of frame 0 inside a base sized for the motion.
    auto origin = [&](double v, int extra) { return v >= 0 ? extent(v) : extra - extent(v); };
    const int bw = cfg.width + extent(cfg.v_background.x), bh = cfg.height + extent(cfg.v_background.y);
    const int rw = cfg.width + extent(cfg.v_reflection.x), rh = cfg.height + extent(cfg.v_reflection.y);

    // Reflection patch: it enters from the side the layer moves away from, so
    // some of it stays in view for the whole clip.
    const int pw = std::max(16, int(std::lround(cfg.width * 0.375)));
    const int py = cfg.height * 5 / 16, ph = cfg.height * 11 / 16 - py;
    const double vx = cfg.v_reflection.x;
    const int px = vx < 0 ? int(std::lround(cfg.width * 0.78))
                   : vx > 0 ? int(std::lround(cfg.width * 0.22)) - pw
                            : (cfg.width - pw) / 2;
    const Frame refl = desk_reflection_base(rw, rh, px + origin(vx, rw - cfg.width),
                                            py + origin(cfg.v_reflection.y, rh - cfg.height), pw, ph, cfg.seed);
    return make_blend_bundle(desk_background_base(bw, bh, cfg.seed), refl, cfg);
}

namespace {

// Pixels where the other layer has no local texture and this one has at least as much.
Mask dominance_region(const Frame& mine, const Frame& other) {
    auto energy = [](const Frame& f) {
        const Gradient g = spatial_gradient(to_luma(f));
        Frame e(f.width, f.height, 1);
        for (int y = 0; y < f.height; ++y)
            for (int x = 0; x < f.width; ++x) e.at(x, y) = g.magnitude(x, y);
        return gaussian_blur(e, 3.0);
    };
    const Frame em = energy(mine), eo = energy(other);
    Mask m(mine.width, mine.height, 0);
    for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = eo.data[i] < 0.01 && em.data[i] > eo.data[i];
    return m;
}

Mask erode(const Mask& m, int r) {
    Mask out(m.width, m.height, 0);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            bool all = true;
            for (int dy = -r; dy <= r && all; ++dy)
                for (int dx = -r; dx <= r && all; ++dx) {
                    const int xx = x + dx, yy = y + dy;
                    all = xx >= 0 && yy >= 0 && xx < m.width && yy < m.height && m(xx, yy);
                }
            out(x, y) = all;
        }
    return out;
}

// Longest horizontal or vertical run of set pixels, as its two endpoints.
// Among equally long runs the middle one (in scan order) is taken.
std::optional<std::pair<Point2, Point2>> longest_run(const Mask& m) {
    int best = 0;
    std::vector<std::pair<Point2, Point2>> runs;
    auto consider = [&](int len, Point2 a, Point2 b) {
        if (len == 0 || len < best) return;
        if (len > best) runs.clear();
        best = len;
        runs.push_back({a, b});
    };
    for (int y = 0; y < m.height; ++y)
        for (int x = 0, run = 0; x <= m.width; ++x) {
            if (x < m.width && m(x, y)) {
                ++run;
                continue;
            }
            consider(run, {double(x - run), double(y)}, {double(x - 1), double(y)});
            run = 0;
        }
    for (int x = 0; x < m.width; ++x)
        for (int y = 0, run = 0; y <= m.height; ++y) {
            if (y < m.height && m(x, y)) {
                ++run;
                continue;
            }
            consider(run, {double(x), double(y - run)}, {double(x), double(y - 1)});
            run = 0;
        }
    if (runs.empty()) return std::nullopt;
    return runs[runs.size() / 2];
}

}  // namespace

ScribbleSet auto_seed_scribbles(const GroundTruthBundle& gt, int frame, double radius) {
    require(frame >= 0 && frame < int(gt.mixed.size()), "invalid-scribbles", "auto-seed frame out of range");
    const Frame b = scaled(gt.gt_background[frame], gt.config.alpha);
    const Frame r = scaled(gt.gt_reflection[frame], 1 - gt.config.alpha);
    ScribbleSet s;
    s.frame_index = frame;
    const int shrink = int(std::ceil(radius));
    for (Label layer : {Label::Background, Label::Reflection}) {
        const Mask region = layer == Label::Background ? dominance_region(b, r) : dominance_region(r, b);
        Mask eroded = erode(region, shrink);
        auto run = longest_run(eroded);
        if (!run) run = longest_run(region);
        if (!run) fail("missing-label-seeds", "no region dominated by the " + to_string(layer) + " layer");
        s.strokes.push_back({layer, {run->first, run->second}, radius});
    }
    return s;
}

void save_bundle(const GroundTruthBundle& b, const fs::path& dir) {
    save_sequence(b.mixed, dir / "mixed");
    save_sequence(b.gt_background, dir / "gt_background");
    save_sequence(b.gt_reflection, dir / "gt_reflection");
    fs::create_directories(dir / "ownership");
    for (std::size_t t = 0; t < b.gt_labels.size(); ++t) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%04zu.png", t);
        write_label_png(b.gt_labels[t], dir / "ownership" / name);
    }
    std::ofstream(dir / "config.json") << to_json(b.config).dump(2) << '\n';
}

GroundTruthBundle load_bundle(const fs::path& dir) {
    std::ifstream in(dir / "config.json");
    require(bool(in), "io-failure", "missing " + (dir / "config.json").string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail("schema-violation", std::string("bundle config: ") + e.what());
    }
    BlendConfig cfg = blend_config_from_json(j.contains("synth") ? j["synth"] : j);
    GroundTruthBundle b{load_sequence((dir / "mixed").string()), load_sequence((dir / "gt_background").string()),
                        load_sequence((dir / "gt_reflection").string()), {}, cfg};
    require(b.mixed.size() == b.gt_background.size() && b.mixed.size() == b.gt_reflection.size(),
            "dimension-mismatch", "bundle sequences differ in length");
    if (fs::is_directory(dir / "ownership"))
        for (int t = 0; t < b.mixed.size(); ++t) {
            char name[32];
            std::snprintf(name, sizeof name, "frame_%04d.png", t);
            if (fs::exists(dir / "ownership" / name)) b.gt_labels.push_back(read_png_indices(dir / "ownership" / name));
        }
    return b;
}

}  // namespace reflect

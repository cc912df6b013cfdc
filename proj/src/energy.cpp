#include "reflect/energy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "reflect/frame_store.hpp"
#include "reflect/parallel.hpp"

namespace reflect {

namespace {

double huber(double d, double eps) {
    const double a = std::abs(d);
    return a <= eps ? d * d / (2 * eps) : a - eps / 2;
}

double huber_slope(double d, double eps) { return std::clamp(d / eps, -1.0, 1.0); }

// Bilinear stencil of the point H * (x, y) in a w x h frame.
struct Stencil {
    int idx[4];
    double wt[4];
};

// Integer part and fraction of v, with fractions within 1e-9 of an integer snapped to it.
inline void split(double v, int& i, double& f) {
    const double fl = std::floor(v);
    i = int(fl);
    f = v - fl;
    if (f < 1e-9) {
        f = 0;
    } else if (f > 1 - 1e-9) {
        ++i;
        f = 0;
    }
}

inline bool make_stencil(const Eigen::Matrix3d& h, int x, int y, int w, int hgt, Stencil& s) {
    const double den = h(2, 0) * x + h(2, 1) * y + h(2, 2);
    const double qx = (h(0, 0) * x + h(0, 1) * y + h(0, 2)) / den;
    const double qy = (h(1, 0) * x + h(1, 1) * y + h(1, 2)) / den;
    if (!(qx > -1e-9 && qy > -1e-9 && qx < w - 1 + 1e-9 && qy < hgt - 1 + 1e-9)) return false;
    int x0, y0;
    double fx, fy;
    split(qx, x0, fx);
    split(qy, y0, fy);
    if (x0 < 0) x0 = 0;
    if (y0 < 0) y0 = 0;
    if (x0 >= w - 1) {
        x0 = std::max(0, w - 2);
        fx = w > 1 ? 1.0 : 0.0;
    }
    if (y0 >= hgt - 1) {
        y0 = std::max(0, hgt - 2);
        fy = hgt > 1 ? 1.0 : 0.0;
    }
    const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, hgt - 1);
    s.idx[0] = y0 * w + x0;
    s.idx[1] = y0 * w + x1;
    s.idx[2] = y1 * w + x0;
    s.idx[3] = y1 * w + x1;
    s.wt[0] = (1 - fx) * (1 - fy);
    s.wt[1] = fx * (1 - fy);
    s.wt[2] = (1 - fx) * fy;
    s.wt[3] = fx * fy;
    return true;
}

// Huber-smoothed magnitude of a 2-vector and its gradient.
double huber_norm(double gx, double gy, double eps, double& dx, double& dy) {
    const double n = std::hypot(gx, gy);
    if (n <= eps) {
        dx = gx / eps;
        dy = gy / eps;
        return n * n / (2 * eps);
    }
    dx = gx / n;
    dy = gy / n;
    return n - eps / 2;
}

// Sum over pixels of weight(p) * huber(forward-difference gradient); scatters
// scale * d/dX into `grad` when given.
double gradient_penalty(const Frame& x, int c, double eps, const std::function<bool(std::size_t)>& active,
                        Frame* grad, double scale) {
    const int w = x.width, h = x.height, ch = x.channels;
    double sum = 0;
    for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx) {
            const std::size_t p = std::size_t(yy) * w + xx;
            if (!active(p)) continue;
            const double v = x.data[p * ch + c];
            const double gx = xx + 1 < w ? x.data[(p + 1) * ch + c] - v : 0.0;
            const double gy = yy + 1 < h ? x.data[(p + w) * ch + c] - v : 0.0;
            double dx, dy;
            sum += huber_norm(gx, gy, eps, dx, dy);
            if (grad) {
                if (xx + 1 < w) grad->data[(p + 1) * ch + c] += scale * dx;
                if (yy + 1 < h) grad->data[(p + w) * ch + c] += scale * dy;
                grad->data[p * ch + c] -= scale * ((xx + 1 < w ? dx : 0.0) + (yy + 1 < h ? dy : 0.0));
            }
        }
    return sum;
}

}  // namespace

EnergyModel::EnergyModel(const WarpSet& warps, std::vector<EdgeMap> edges, std::vector<Mask> layer_map, int width,
                         int height, int channels, const OptimizerConfig& cfg)
    : n_(int(layer_map.size())),
      width_(width),
      height_(height),
      channels_(channels),
      eps_(cfg.huber_eps),
      edges_(std::move(edges)),
      layer_map_(std::move(layer_map)) {
    cfg.validate();
    require(int(edges_.size()) == n_, "dimension-mismatch", "edge maps and layer maps must cover every frame");
    // A single frame has no pairs, so its warps are never consulted.
    require(n_ == 1 || warps.frame_count() == n_, "dimension-mismatch", "warps and layers differ in frame count");
    from_frame_.resize(n_);
    into_frame_.resize(n_);
    for (int t = 0; t < n_; ++t)
        for (int rho = std::max(0, t - cfg.pair_radius); rho <= std::min(n_ - 1, t + cfg.pair_radius); ++rho) {
            if (rho == t) continue;
            PairWarp pw;
            pw.t = t;
            pw.rho = rho;
            pw.to_rho[0] = warps.between(t, rho, Label::Background).inverse().matrix();
            pw.to_rho[1] = warps.between(t, rho, Label::Reflection).inverse().matrix();
            from_frame_[t].push_back(pw);
            into_frame_[rho].push_back(pw);
        }
    std::vector<double> cb(n_, 0), cr(n_, 0);
    parallel_for(std::size_t(n_), [&](std::size_t t) {
        Stencil s;
        for (const PairWarp& pw : from_frame_[t])
            for (int y = 0; y < height_; ++y)
                for (int x = 0; x < width_; ++x) {
                    if (make_stencil(pw.to_rho[0], x, y, width_, height_, s)) cb[t] += channels_;
                    if (make_stencil(pw.to_rho[1], x, y, width_, height_, s)) cr[t] += channels_;
                }
    });
    for (int t = 0; t < n_; ++t) {
        count_b_ += cb[t];
        count_r_ += cr[t];
    }
    pixel_norm_ = double(n_) * width_ * height_ * channels_;
}

double EnergyModel::frame_terms(const LayerPair& x, int f, bool data, bool prior, bool smooth, double* out_ed_b,
                                double* out_ed_r, double* out_el, double* out_es, LayerPair* grad,
                                const EnergyWeights* w) const {
    const int ch = channels_;
    const std::size_t np = std::size_t(width_) * height_;
    Stencil s;
    if (data) {
        for (int layer = 0; layer < 2; ++layer) {
            const std::vector<Frame>& xs = layer == 0 ? x.b : x.r;
            const double count = layer == 0 ? count_b_ : count_r_;
            const double scale = grad && count > 0 ? w->lambda_d / count : 0.0;
            Frame* g = grad ? &(layer == 0 ? grad->b : grad->r)[f] : nullptr;
            double sum = 0;
            for (const PairWarp& pw : from_frame_[f]) {
                const Frame& src = xs[pw.rho];
                const Frame& dst = xs[f];
                for (std::size_t p = 0; p < np; ++p) {
                    if (!make_stencil(pw.to_rho[layer], int(p % width_), int(p / width_), width_, height_, s)) continue;
                    for (int c = 0; c < ch; ++c) {
                        double warped = 0;
                        for (int k = 0; k < 4; ++k) warped += s.wt[k] * src.data[std::size_t(s.idx[k]) * ch + c];
                        const double d = dst.data[p * ch + c] - warped;
                        sum += huber(d, eps_);
                        if (g) g->data[p * ch + c] += scale * huber_slope(d, eps_);
                    }
                }
            }
            if (g && scale != 0)
                for (const PairWarp& pw : into_frame_[f]) {
                    const Frame& src = xs[f];
                    const Frame& dst = xs[pw.t];
                    for (std::size_t p = 0; p < np; ++p) {
                        if (!make_stencil(pw.to_rho[layer], int(p % width_), int(p / width_), width_, height_, s))
                            continue;
                        for (int c = 0; c < ch; ++c) {
                            double warped = 0;
                            for (int k = 0; k < 4; ++k) warped += s.wt[k] * src.data[std::size_t(s.idx[k]) * ch + c];
                            const double slope = huber_slope(dst.data[p * ch + c] - warped, eps_);
                            for (int k = 0; k < 4; ++k)
                                g->data[std::size_t(s.idx[k]) * ch + c] -= scale * s.wt[k] * slope;
                        }
                    }
                }
            (layer == 0 ? *out_ed_b : *out_ed_r) = sum;
        }
    }
    if (prior) {
        const EdgeMap& e = edges_[f];
        const Mask& m = layer_map_[f];
        const double scale = grad ? w->lambda_l / pixel_norm_ : 0.0;
        double sum = 0;
        for (int c = 0; c < ch; ++c) {
            sum += gradient_penalty(
                x.b[f], c, eps_, [&](std::size_t p) { return e.data[p] && m.data[p]; }, grad ? &grad->b[f] : nullptr,
                scale);
            sum += gradient_penalty(
                x.r[f], c, eps_, [&](std::size_t p) { return e.data[p] && !m.data[p]; },
                grad ? &grad->r[f] : nullptr, scale);
        }
        *out_el = sum;
    }
    if (smooth) {
        const double scale = grad ? w->lambda_s / pixel_norm_ : 0.0;
        double sum = 0;
        auto all = [](std::size_t) { return true; };
        for (int c = 0; c < ch; ++c) {
            sum += gradient_penalty(x.b[f], c, eps_, all, grad ? &grad->b[f] : nullptr, scale);
            sum += gradient_penalty(x.r[f], c, eps_, all, grad ? &grad->r[f] : nullptr, scale);
        }
        *out_es = sum;
    }
    return 0.0;
}

EnergyTerms EnergyModel::evaluate(const LayerPair& x, const EnergyWeights& w, LayerPair* grad) const {
    require(int(x.b.size()) == n_ && int(x.r.size()) == n_, "dimension-mismatch", "layer count differs from warps");
    for (int f = 0; f < n_; ++f)
        require(x.b[f].width == width_ && x.b[f].height == height_ && x.b[f].channels == channels_ &&
                    x.b[f].same_shape(x.r[f]),
                "dimension-mismatch", "layer frame shape differs from the model");
    if (grad) {
        grad->b.assign(n_, Frame(width_, height_, channels_));
        grad->r.assign(n_, Frame(width_, height_, channels_));
    }
    std::vector<double> edb(n_, 0), edr(n_, 0), el(n_, 0), es(n_, 0);
    const bool gd = w.lambda_d != 0, gl = w.lambda_l != 0, gs = w.lambda_s != 0;
    parallel_for(std::size_t(n_), [&](std::size_t f) {
        if (grad) {
            // Gradient pass only for weighted terms, energies for all.
            LayerPair* g = grad;
            frame_terms(x, int(f), gd, gl, gs, &edb[f], &edr[f], &el[f], &es[f], g, &w);
            frame_terms(x, int(f), !gd, !gl, !gs, &edb[f], &edr[f], &el[f], &es[f], nullptr, &w);
        } else {
            frame_terms(x, int(f), true, true, true, &edb[f], &edr[f], &el[f], &es[f], nullptr, &w);
        }
    });
    EnergyTerms out;
    double sb = 0, sr = 0;
    for (int f = 0; f < n_; ++f) {
        sb += edb[f];
        sr += edr[f];
        out.el += el[f];
        out.es += es[f];
    }
    out.ed = (count_b_ > 0 ? sb / count_b_ : 0.0) + (count_r_ > 0 ? sr / count_r_ : 0.0);
    out.el /= pixel_norm_;
    out.es /= pixel_norm_;
    out.total = w.lambda_d * out.ed + w.lambda_l * out.el + w.lambda_s * out.es;
    return out;
}

double EnergyModel::data_term(const LayerPair& x) const { return evaluate(x, {1, 0, 0}).ed; }
double EnergyModel::layer_prior_term(const LayerPair& x) const { return evaluate(x, {0, 1, 0}).el; }
double EnergyModel::smoothness_term(const LayerPair& x) const { return evaluate(x, {0, 0, 1}).es; }

namespace {

LayerPair layers_of(const LayerDecomposition& dec) { return {dec.background.frames(), dec.reflection.frames()}; }

EnergyModel model_for(const LayerDecomposition& dec, const WarpSet& warps, std::vector<EdgeMap> edges,
                      const OptimizerConfig& cfg) {
    const int n = int(dec.background.size());
    if (edges.empty()) edges.assign(n, EdgeMap(dec.background.width(), dec.background.height(), 0));
    return EnergyModel(warps, std::move(edges), dec.layer_map, dec.background.width(), dec.background.height(),
                       dec.background.channels(), cfg);
}

WarpSet identity_warps(const LayerDecomposition& dec) {
    const int n = int(dec.background.size());
    return n < 2 ? WarpSet() : WarpSet(n, n);
}

}  // namespace

double data_term(const LayerDecomposition& dec, const WarpSet& warps, const OptimizerConfig& cfg) {
    return model_for(dec, warps, {}, cfg).data_term(layers_of(dec));
}

double layer_prior_term(const LayerDecomposition& dec, const std::vector<EdgeMap>& edges, const OptimizerConfig& cfg) {
    OptimizerConfig c = cfg;
    c.pair_radius = 1;
    return model_for(dec, identity_warps(dec), edges, c).layer_prior_term(layers_of(dec));
}

double smoothness_term(const LayerDecomposition& dec, const OptimizerConfig& cfg) {
    OptimizerConfig c = cfg;
    c.pair_radius = 1;
    return model_for(dec, identity_warps(dec), {}, c).smoothness_term(layers_of(dec));
}

EnergyTerms total_energy(const LayerDecomposition& dec, const WarpSet& warps, const std::vector<EdgeMap>& edges,
                         const EnergyWeights& w, const OptimizerConfig& cfg) {
    w.validate();
    return model_for(dec, warps, edges, cfg).evaluate(layers_of(dec), w);
}

std::vector<EdgeMap> edge_maps(const FrameSequence& seq, double low, double high) {
    std::vector<EdgeMap> out(seq.size());
    parallel_for(seq.size(), [&](std::size_t t) { out[t] = canny(to_luma(seq[t]), low, high); });
    return out;
}

OptimizeResult optimize(const LayerDecomposition& init, const WarpSet& warps, const std::vector<EdgeMap>& edges,
                        const EnergyWeights& w, const OptimizerConfig& cfg, const ProgressFn& progress) {
    w.validate();
    cfg.validate();
    init.validate();
    const int n = int(init.background.size());
    require(int(edges.size()) == n, "dimension-mismatch", "one edge map per frame is required");
    const EnergyModel model = model_for(init, warps, edges, cfg);

    std::vector<Frame> target(n);
    for (int t = 0; t < n; ++t) {
        target[t] = init.background[t];
        for (std::size_t i = 0; i < target[t].size(); ++i) target[t].data[i] += init.reflection[t].data[i];
    }

    LayerPair x = layers_of(init);
    LayerPair g;
    EnergyTerms e = model.evaluate(x, w, &g);
    OptimizeResult out;
    out.trace.push_back({0, e});

    auto project = [&](const LayerPair& from, const LayerPair& dir, double s) {
        LayerPair c = from;
        parallel_for(std::size_t(n), [&](std::size_t t) {
            Frame& b = c.b[t];
            Frame& r = c.r[t];
            for (std::size_t i = 0; i < b.size(); ++i) {
                if (cfg.enforce_composition) {
                    const double in = target[t].data[i];
                    const double bb = std::clamp(from.b[t].data[i] + s * dir.b[t].data[i], std::max(0.0, in - 1.0), in);
                    r.data[i] = in - bb;
                    b.data[i] = in - r.data[i];
                } else {
                    b.data[i] = std::clamp(from.b[t].data[i] + s * dir.b[t].data[i], 0.0, 1.0);
                    r.data[i] = std::clamp(from.r[t].data[i] + s * dir.r[t].data[i], 0.0, 1.0);
                }
            }
        });
        return c;
    };

    double step = -1;
    int increases = 0;
    for (int it = 1; it <= cfg.max_iters; ++it) {
        LayerPair dir = g;
        double maxd = 0;
        for (int t = 0; t < n; ++t)
            for (std::size_t i = 0; i < dir.b[t].size(); ++i) {
                double& db = dir.b[t].data[i];
                double& dr = dir.r[t].data[i];
                if (cfg.enforce_composition) {
                    db = -(g.b[t].data[i] - g.r[t].data[i]) / 2;
                    dr = -db;
                } else {
                    db = -db;
                    dr = -dr;
                }
                maxd = std::max({maxd, std::abs(db), std::abs(dr)});
            }
        if (maxd == 0) break;
        if (step < 0) step = cfg.step_size / maxd;

        bool accepted = false;
        LayerPair cand;
        EnergyTerms ce;
        for (int tries = 0; tries < 40; ++tries) {
            cand = project(x, dir, step);
            double slope = 0;
            for (int t = 0; t < n; ++t)
                for (std::size_t i = 0; i < cand.b[t].size(); ++i)
                    slope += g.b[t].data[i] * (cand.b[t].data[i] - x.b[t].data[i]) +
                             g.r[t].data[i] * (cand.r[t].data[i] - x.r[t].data[i]);
            if (slope >= 0) break;  // projection leaves no descent
            ce = model.evaluate(cand, w);
            if (ce.total <= e.total + 1e-4 * slope) {
                accepted = true;
                break;
            }
            step /= 2;
        }
        if (!accepted) break;
        const double rel = (e.total - ce.total) / std::max(std::abs(e.total), 1e-300);
        increases = ce.total > e.total ? increases + 1 : 0;
        if (increases >= 5) fail("diverged", "energy increased for 5 consecutive steps");
        x = std::move(cand);
        e = model.evaluate(x, w, &g);
        out.trace.push_back({it, e});
        if (progress) progress(it, cfg.max_iters);
        step *= 2;
        if (std::abs(rel) < cfg.tolerance) break;
    }
    out.layers = {FrameSequence(std::move(x.b)), FrameSequence(std::move(x.r)), init.layer_map};
    return out;
}

std::string trace_csv(const std::vector<TraceRow>& trace) {
    std::ostringstream os;
    os.precision(17);
    os << "iter,E,Ed,El,Es\n";
    for (const TraceRow& r : trace)
        os << r.iter << ',' << r.terms.total << ',' << r.terms.ed << ',' << r.terms.el << ',' << r.terms.es << '\n';
    return os.str();
}

}  // namespace reflect

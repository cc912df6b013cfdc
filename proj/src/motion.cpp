#include "reflect/motion.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "reflect/parallel.hpp"

namespace reflect {

using nlohmann::json;

namespace {

Eigen::Matrix3d normalizing_transform(std::span<const Point2> pts) {
    double cx = 0, cy = 0;
    for (const Point2& p : pts) {
        cx += p.x;
        cy += p.y;
    }
    cx /= double(pts.size());
    cy /= double(pts.size());
    double mean_dist = 0;
    for (const Point2& p : pts) mean_dist += std::hypot(p.x - cx, p.y - cy);
    mean_dist /= double(pts.size());
    if (mean_dist <= 1e-12) fail("degenerate-configuration", "correspondences collapse to a single point");
    const double s = std::sqrt(2.0) / mean_dist;
    Eigen::Matrix3d t;
    t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
    return t;
}

Point2 transform(const Eigen::Matrix3d& m, Point2 p) {
    const Eigen::Vector3d v = m * Eigen::Vector3d(p.x, p.y, 1.0);
    return {v.x() / v.z(), v.y() / v.z()};
}

bool collinear(Point2 a, Point2 b, Point2 c, double scale) {
    const double cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    return std::abs(cross) <= 1e-9 * scale * scale;
}

void check_minimal_set(std::span<const PointPair> pairs) {
    if (pairs.size() < 4) fail("degenerate-configuration", "homography needs >= 4 correspondences");
    if (pairs.size() != 4) return;
    for (int side = 0; side < 2; ++side) {
        Point2 p[4];
        double scale = 1.0;
        for (int i = 0; i < 4; ++i) {
            p[i] = side == 0 ? pairs[i].from : pairs[i].to;
            scale = std::max({scale, std::abs(p[i].x), std::abs(p[i].y)});
        }
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j)
                for (int k = j + 1; k < 4; ++k)
                    if (collinear(p[i], p[j], p[k], scale))
                        fail("degenerate-configuration", "three of four correspondences are collinear");
    }
}

double weighted_cost(const Eigen::Matrix3d& h, std::span<const PointPair> pairs, std::span<const double> w) {
    double cost = 0;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const Point2 q = transform(h, pairs[k].from) - pairs[k].to;
        const double wk = w.empty() ? 1.0 : w[k];
        cost += wk * wk * (q.x * q.x + q.y * q.y);
    }
    return cost;
}

// Levenberg-Marquardt on the weighted geometric cost; only accepts decreasing steps.
Eigen::Matrix3d refine(const Eigen::Matrix3d& start, std::span<const PointPair> pairs, std::span<const double> w) {
    Eigen::Matrix<double, 8, 1> h;
    const Eigen::Matrix3d s = start / start(2, 2);
    h << s(0, 0), s(0, 1), s(0, 2), s(1, 0), s(1, 1), s(1, 2), s(2, 0), s(2, 1);
    auto to_matrix = [](const Eigen::Matrix<double, 8, 1>& v) {
        Eigen::Matrix3d m;
        m << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), 1.0;
        return m;
    };
    double cost = weighted_cost(s, pairs, w);
    double mu = 1e-3;
    for (int it = 0; it < 20 && cost > 1e-24; ++it) {
        Eigen::Matrix<double, 8, 8> jtj = Eigen::Matrix<double, 8, 8>::Zero();
        Eigen::Matrix<double, 8, 1> jtr = Eigen::Matrix<double, 8, 1>::Zero();
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            const double x = pairs[k].from.x, y = pairs[k].from.y;
            const double den = h(6) * x + h(7) * y + 1.0;
            const double X = (h(0) * x + h(1) * y + h(2)) / den, Y = (h(3) * x + h(4) * y + h(5)) / den;
            const double wk = w.empty() ? 1.0 : w[k], w2 = wk * wk;
            Eigen::Matrix<double, 8, 1> jx, jy;
            jx << x / den, y / den, 1 / den, 0, 0, 0, -X * x / den, -X * y / den;
            jy << 0, 0, 0, x / den, y / den, 1 / den, -Y * x / den, -Y * y / den;
            jtj += w2 * (jx * jx.transpose() + jy * jy.transpose());
            jtr += w2 * (jx * (X - pairs[k].to.x) + jy * (Y - pairs[k].to.y));
        }
        bool improved = false;
        for (int tries = 0; tries < 10 && !improved; ++tries) {
            Eigen::Matrix<double, 8, 8> a = jtj;
            a.diagonal() += mu * jtj.diagonal().cwiseMax(1e-12);
            const Eigen::Matrix<double, 8, 1> step = a.ldlt().solve(-jtr);
            const Eigen::Matrix<double, 8, 1> cand = h + step;
            const Eigen::Matrix3d m = to_matrix(cand);
            const double c = std::abs(m.determinant()) > 1e-12 ? weighted_cost(m, pairs, w) : INFINITY;
            if (std::isfinite(c) && c < cost) {
                const bool tiny = cost - c <= 1e-15 * cost;
                h = cand;
                cost = c;
                mu = std::max(mu / 10, 1e-12);
                improved = true;
                if (tiny) it = 1000;
            } else {
                mu *= 10;
            }
        }
        if (!improved) break;
    }
    return to_matrix(h);
}

double rms_error(const Homography& h, std::span<const PointPair> pairs) {
    double s = 0;
    for (const PointPair& p : pairs) {
        const Point2 d = h.apply(p.from) - p.to;
        s += d.x * d.x + d.y * d.y;
    }
    return std::sqrt(s / double(pairs.size()));
}

Homography checked(const Eigen::Matrix3d& m) {
    if (!m.allFinite() || std::abs(m(2, 2)) < 1e-12)
        fail("degenerate-configuration", "homography estimate is degenerate");
    const Eigen::Matrix3d n = m / m(2, 2);
    if (std::abs(n.determinant()) <= 1e-12) fail("degenerate-configuration", "homography estimate is singular");
    return Homography(n);
}

}  // namespace

HomographyFit estimate_homography_dlt(std::span<const PointPair> pairs, std::span<const double> weights) {
    check_minimal_set(pairs);
    std::vector<Point2> src, dst;
    for (const PointPair& p : pairs) {
        src.push_back(p.from);
        dst.push_back(p.to);
    }
    const Eigen::Matrix3d ts = normalizing_transform(src), td = normalizing_transform(dst);
    const std::size_t n = pairs.size();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(std::max<std::size_t>(2 * n, 9), 9);
    for (std::size_t k = 0; k < n; ++k) {
        const Point2 s = transform(ts, src[k]), d = transform(td, dst[k]);
        const double w = weights.empty() ? 1.0 : weights[k];
        a.row(2 * k) << 0, 0, 0, -s.x, -s.y, -1, d.y * s.x, d.y * s.y, d.y;
        a.row(2 * k + 1) << s.x, s.y, 1, 0, 0, 0, -d.x * s.x, -d.x * s.y, -d.x;
        a.row(2 * k) *= w;
        a.row(2 * k + 1) *= w;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    if (sv(0) <= 0.0 || sv(7) / sv(0) < 1e-9)
        fail("degenerate-configuration", "correspondences do not determine a unique homography");
    const Eigen::VectorXd v = svd.matrixV().col(8);
    Eigen::Matrix3d hn;
    hn << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8);
    const Homography h = checked(td.inverse() * hn * ts);
    return {h, rms_error(h, pairs)};
}

IrlsResult estimate_homography_irls(std::span<const PointPair> pairs, const IrlsConfig& cfg) {
    IrlsResult out;
    out.weights.assign(pairs.size(), 1.0);
    Eigen::Matrix3d h = refine(estimate_homography_dlt(pairs).h.matrix(), pairs, out.weights);
    for (int it = 0; it < cfg.max_iterations; ++it) {
        std::vector<double> next(pairs.size());
        double change = 0;
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            const double r = norm(transform(h, pairs[k].from) - pairs[k].to);
            next[k] = r > cfg.delta ? cfg.delta / r : 1.0;
            change = std::max(change, std::abs(next[k] - out.weights[k]));
        }
        if (change < cfg.tolerance) {
            out.converged = true;
            break;
        }
        out.weights = std::move(next);
        out.iterations = it + 1;
        const double before = weighted_cost(h, pairs, out.weights);
        Eigen::Matrix3d start = h;
        try {
            const Eigen::Matrix3d dlt = estimate_homography_dlt(pairs, out.weights).h.matrix();
            if (weighted_cost(dlt, pairs, out.weights) < before) start = dlt;
        } catch (const Error&) {
            // keep the previous iterate as the starting point
        }
        h = refine(start, pairs, out.weights);
        out.cost_before.push_back(before);
        out.cost_after.push_back(weighted_cost(h, pairs, out.weights));
    }
    if (!out.converged) out.warnings.push_back("no-convergence");
    out.h = checked(h);
    out.rms = rms_error(out.h, pairs);
    return out;
}

WarpSet::WarpSet(int frame_count, int window_length) : frame_count_(frame_count), length_(window_length) {
    require(window_length >= 2 && frame_count >= window_length, "invalid-config",
            "sequence must be at least one window long");
    const std::size_t n = std::size_t(window_count()) * length_ * 2;
    matrices_.assign(n, Homography::identity());
    fallback_flags_.assign(n, 0);
}

std::size_t WarpSet::slot(int window, int frame, Label layer) const {
    const int k = frame - window;
    require(window >= 0 && window < window_count() && k >= 0 && k < length_, "missing-warp",
            "no warp for frame " + std::to_string(frame) + " in window " + std::to_string(window));
    require(layer != Label::Unlabeled, "missing-warp", "warps exist only for background and reflection");
    return (std::size_t(window) * length_ + k) * 2 + (layer == Label::Reflection ? 1 : 0);
}

const Homography& WarpSet::to_reference(int window, int frame, Label layer) const {
    return matrices_[slot(window, frame, layer)];
}

void WarpSet::set(int window, int frame, Label layer, const Homography& h, bool fallback) {
    const std::size_t s = slot(window, frame, layer);
    matrices_[s] = h;
    fallback_flags_[s] = fallback ? 1 : 0;
}

bool WarpSet::is_fallback(int window, int frame, Label layer) const {
    return fallback_flags_[slot(window, frame, layer)] != 0;
}

Homography WarpSet::between(int t, int rho, Label layer) const {
    require(t >= 0 && rho >= 0 && t < frame_count_ && rho < frame_count_, "missing-warp", "frame outside sequence");
    if (t == rho) return Homography::identity();
    const int span = length_ - 1;
    if (std::abs(t - rho) > span) {
        const int mid = rho + (t > rho ? span : -span);
        return between(t, mid, layer) * between(mid, rho, layer);
    }
    const int r = std::min(std::min(t, rho), frame_count_ - length_);
    return to_reference(r, t, layer).inverse() * to_reference(r, rho, layer);
}

Homography estimate_translation(std::span<const PointPair> pairs) {
    require(!pairs.empty(), "insufficient-correspondences", "no correspondences");
    std::vector<double> dx, dy;
    for (const PointPair& p : pairs) {
        dx.push_back(p.to.x - p.from.x);
        dy.push_back(p.to.y - p.from.y);
    }
    auto median = [](std::vector<double>& v) {
        std::sort(v.begin(), v.end());
        const std::size_t m = v.size() / 2;
        return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
    };
    return Homography::translation(median(dx), median(dy));
}

WarpSet build_warpsets(const TrackSet& ts, const WindowConfig& cfg, int frame_count, const WarpBuildOptions& opt) {
    cfg.validate();
    require(frame_count >= cfg.length, "invalid-config", "sequence shorter than the window length");
    for (const Track& t : ts.tracks)
        if (t.label == Label::Unlabeled)
            fail("unlabeled-tracks", "track " + std::to_string(t.id) + " has no layer label");

    // Few correspondences cannot pin down eight parameters; keep the two that matter most.
    auto fit_pairs = [&](const std::vector<PointPair>& pairs) {
        if (pairs.size() < 4) fail("insufficient-correspondences", "fewer than 4 shared tracks");
        if (int(pairs.size()) < cfg.min_homography_pairs) return estimate_translation(pairs);
        return estimate_homography_irls(pairs, opt.irls).h;
    };

    WarpSet ws(frame_count, cfg.length);
    const Label layers[2] = {Label::Background, Label::Reflection};
    struct Missing {
        int window, frame;
        Label layer;
        std::string reason;
    };
    std::vector<std::vector<Missing>> missing(ws.window_count());
    std::atomic<int> done{0};
    parallel_for(std::size_t(ws.window_count()), [&](std::size_t wi) {
        const int r = int(wi);
        for (Label layer : layers)
            for (int i = r + 1; i < r + cfg.length; ++i) {
                const std::vector<PointPair> pairs = tracks_alive_at(ts, i, r, layer);
                try {
                    ws.set(r, i, layer, fit_pairs(pairs));
                } catch (const Error& e) {
                    missing[wi].push_back({r, i, layer, e.code()});
                }
            }
        const int d = ++done;
        if (opt.progress) opt.progress(d, ws.window_count());
    });

    for (const auto& per_window : missing)
        for (const Missing& m : per_window) {
            if (!opt.allow_fallback)
                fail("insufficient-correspondences", "window " + std::to_string(m.window) + ", frame " +
                                                         std::to_string(m.frame) + ", layer " + to_string(m.layer) +
                                                         ": " + m.reason);
            ws.set(m.window, m.frame, m.layer, Homography::identity(), true);
        }

    // First try chaining inside the window: frame i -> an earlier frame j that
    // already has a warp, from the tracks the two frames share. Entries are
    // stored in increasing frame order, so chained frames can serve later ones.
    std::vector<std::vector<std::string>> source(missing.size());
    parallel_for(missing.size(), [&](std::size_t wi) {
        source[wi].assign(missing[wi].size(), "");
        for (Label layer : layers) {
            std::vector<char> known(std::size_t(cfg.length), 1);
            for (const Missing& m : missing[wi])
                if (m.layer == layer) known[std::size_t(m.frame - m.window)] = 0;
            for (std::size_t k = 0; k < missing[wi].size(); ++k) {
                const Missing& m = missing[wi][k];
                if (m.layer != layer) continue;
                for (int j = m.frame - 1; j >= m.window; --j) {
                    if (!known[std::size_t(j - m.window)]) continue;
                    const std::vector<PointPair> pairs = tracks_alive_at(ts, m.frame, j, layer);
                    try {
                        const Homography step = fit_pairs(pairs);
                        ws.set(m.window, m.frame, layer, ws.to_reference(m.window, j, layer) * step, true);
                    } catch (const Error&) {
                        continue;
                    }
                    known[std::size_t(m.frame - m.window)] = 1;
                    source[wi][k] = "chained via frame " + std::to_string(j);
                    break;
                }
            }
        }
    });

    // Otherwise reuse the nearest preceding window with a direct estimate for
    // the same frame offset, else the nearest following one, else identity.
    for (std::size_t wi = 0; wi < missing.size(); ++wi)
        for (std::size_t mi = 0; mi < missing[wi].size(); ++mi) {
            const Missing& m = missing[wi][mi];
            if (!source[wi][mi].empty()) {
                ws.fallbacks.push_back({m.window, m.frame, m.layer, m.reason + "; " + source[wi][mi]});
                continue;
            }
            const int k = m.frame - m.window;
            Homography h = Homography::identity();
            std::string from = "identity";
            bool found = false;
            for (int d = 1; !found && d < ws.window_count(); ++d)
                for (int cand : {m.window - d, m.window + d}) {
                    if (cand < 0 || cand >= ws.window_count() || ws.is_fallback(cand, cand + k, m.layer)) continue;
                    h = ws.to_reference(cand, cand + k, m.layer);
                    from = "window " + std::to_string(cand);
                    found = true;
                    break;
                }
            ws.set(m.window, m.frame, m.layer, h, true);
            ws.fallbacks.push_back({m.window, m.frame, m.layer, m.reason + "; reused " + from});
        }
    return ws;
}

json to_json(const WarpSet& w) {
    json windows = json::array();
    for (int r = 0; r < w.window_count(); ++r)
        for (Label layer : {Label::Background, Label::Reflection}) {
            json mats = json::array();
            json flags = json::array();
            for (int i = r; i < r + w.window_length(); ++i) {
                mats.push_back(w.to_reference(r, i, layer).to_array());
                flags.push_back(w.is_fallback(r, i, layer));
            }
            windows.push_back({{"start", r}, {"layer", to_string(layer)}, {"matrices", mats}, {"fallback", flags}});
        }
    return {{"frame_count", w.frame_count()}, {"window_length", w.window_length()}, {"windows", windows}};
}

WarpSet warpset_from_json(const json& j) {
    try {
        WarpSet w(j.at("frame_count").get<int>(), j.at("window_length").get<int>());
        for (const json& jw : j.at("windows")) {
            const int r = jw.at("start").get<int>();
            const Label layer = label_from_string(jw.at("layer").get<std::string>());
            const json& mats = jw.at("matrices");
            for (std::size_t k = 0; k < mats.size(); ++k) {
                const bool fb = jw.contains("fallback") && jw["fallback"][k].get<bool>();
                w.set(r, r + int(k), layer, Homography::from_array(mats[k].get<std::array<double, 9>>()), fb);
            }
        }
        return w;
    } catch (const json::exception& e) {
        fail("schema-violation", std::string("warp document: ") + e.what());
    }
}

}  // namespace reflect

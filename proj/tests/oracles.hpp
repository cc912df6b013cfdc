#pragma once

// Reference computations shared by the unit tests and the acceptance runner.

#include <Eigen/Dense>

#include <map>
#include <random>
#include <tuple>
#include <vector>

#include "reflect/hints.hpp"
#include "reflect/layer_init.hpp"

namespace oracles {

using namespace reflect;

// Exact warps of layers translating by vb / vr px/frame: frame i into frame r undoes (i - r) v.
inline WarpSet translation_warps(int n, int len, Point2 vb, Point2 vr) {
    WarpSet ws(n, len);
    for (int r = 0; r < ws.window_count(); ++r)
        for (int i = r; i < r + len; ++i) {
            const double k = i - r;
            ws.set(r, i, Label::Background, Homography::translation(-k * vb.x, -k * vb.y));
            ws.set(r, i, Label::Reflection, Homography::translation(-k * vr.x, -k * vr.y));
        }
    return ws;
}

inline Frame naive_min(const std::vector<WarpedFrame>& warped) {
    const Frame& f0 = warped[0].frame;
    Frame out(f0.width, f0.height, f0.channels);
    for (int y = 0; y < f0.height; ++y)
        for (int x = 0; x < f0.width; ++x)
            for (int c = 0; c < f0.channels; ++c) {
                double m = f0.at(x, y, c);
                for (std::size_t k = 1; k < warped.size(); ++k)
                    if (warped[k].valid(x, y) && warped[k].frame.at(x, y, c) < m) m = warped[k].frame.at(x, y, c);
                out.at(x, y, c) = m;
            }
    return out;
}

inline AffinityGraph graph_from(int n, const std::vector<std::tuple<int, int, double>>& edges) {
    AffinityGraph g;
    for (int i = 0; i < n; ++i) g.nodes.push_back(100 + i);
    for (auto [a, b, w] : edges) g.edges.push_back({a, b, w});
    return g;
}

// Connected graph on n nodes (ids 100..) with merged duplicate edges.
inline AffinityGraph random_connected_graph(std::mt19937& rng, int n) {
    std::uniform_real_distribution<double> weight(0.01, 1.0);
    std::map<std::pair<int, int>, double> merged;
    for (int i = 1; i < n; ++i) merged[{int(rng() % i), i}] += weight(rng);  // spanning tree
    for (int extra = 0; extra < n; ++extra) {
        const int a = int(rng() % n), b = int(rng() % n);
        if (a != b) merged[{std::min(a, b), std::max(a, b)}] += weight(rng);
    }
    std::vector<std::tuple<int, int, double>> edges;
    for (auto& [k, w] : merged) edges.emplace_back(k.first, k.second, w);
    return graph_from(n, edges);
}

// Absorption probabilities of an absorbing random walk: transient-to-transient
// block Q and transient-to-absorbing block R give B = (I - Q)^-1 R.
inline std::map<int, double> absorbing_chain_background(const AffinityGraph& g, const std::map<int, Label>& seeds) {
    const int n = int(g.nodes.size());
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (const auto& e : g.edges) {
        w(e.a, e.b) += e.weight;
        w(e.b, e.a) += e.weight;
    }
    std::vector<int> transient, absorbing;
    for (int i = 0; i < n; ++i) (seeds.count(g.nodes[std::size_t(i)]) ? absorbing : transient).push_back(i);
    const int t = int(transient.size()), a = int(absorbing.size());
    Eigen::MatrixXd q(t, t), r(t, a);
    for (int i = 0; i < t; ++i) {
        const double deg = w.row(transient[std::size_t(i)]).sum();
        for (int j = 0; j < t; ++j) q(i, j) = w(transient[std::size_t(i)], transient[std::size_t(j)]) / deg;
        for (int j = 0; j < a; ++j) r(i, j) = w(transient[std::size_t(i)], absorbing[std::size_t(j)]) / deg;
    }
    const Eigen::MatrixXd fundamental = (Eigen::MatrixXd::Identity(t, t) - q).inverse();
    const Eigen::MatrixXd b = fundamental * r;
    std::map<int, double> out;
    for (int i = 0; i < t; ++i) {
        double p = 0;
        for (int j = 0; j < a; ++j)
            if (seeds.at(g.nodes[std::size_t(absorbing[std::size_t(j)])]) == Label::Background) p += b(i, j);
        out[g.nodes[std::size_t(transient[std::size_t(i)])]] = p;
    }
    return out;
}

// Seeds used by the random-graph comparisons: both ends, plus a middle node on larger graphs.
inline std::map<int, Label> graph_seeds(int n, int trial) {
    std::map<int, Label> seeds{{100, Label::Background}, {100 + n - 1, Label::Reflection}};
    if (n > 6) seeds[100 + n / 2] = trial % 2 ? Label::Background : Label::Reflection;
    return seeds;
}

}  // namespace oracles

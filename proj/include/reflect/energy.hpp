#pragma once

#include <string>
#include <vector>

#include "reflect/layer_init.hpp"

namespace reflect {

struct EnergyWeights {
    double lambda_d = 2.0;
    double lambda_l = 2.0;
    double lambda_s = 1.0;

    void validate() const {
        require(lambda_d >= 0 && lambda_l >= 0 && lambda_s >= 0, "invalid-config", "energy weights must be >= 0");
    }
};

struct OptimizerConfig {
    int max_iters = 40;
    double step_size = 0.02;  // largest per-pixel change of the first trial step
    double huber_eps = 1e-3;
    int pair_radius = 9;
    bool enforce_composition = true;
    double tolerance = 1e-6;  // relative energy change

    void validate() const {
        require(max_iters >= 0, "invalid-config", "max_iters must be >= 0");
        require(step_size > 0, "invalid-config", "step_size must be > 0");
        require(huber_eps > 0, "invalid-config", "huber_eps must be > 0");
        require(pair_radius >= 1, "invalid-config", "pair_radius must be >= 1");
        require(tolerance >= 0, "invalid-config", "tolerance must be >= 0");
    }
};

/// Unweighted term values and the weighted total.
struct EnergyTerms {
    double ed = 0.0;
    double el = 0.0;
    double es = 0.0;
    double total = 0.0;
};

/// Layers being optimized. Frames may hold any real values while evaluating.
struct LayerPair {
    std::vector<Frame> b;
    std::vector<Frame> r;
};

/// Precomputed pair warps and normalizers for one sequence shape.
class EnergyModel {
public:
    EnergyModel(const WarpSet& warps, std::vector<EdgeMap> edges, std::vector<Mask> layer_map, int width, int height,
                int channels, const OptimizerConfig& cfg);

    /// Weighted energy; fills `grad` (same shape as `x`) when non-null.
    EnergyTerms evaluate(const LayerPair& x, const EnergyWeights& w, LayerPair* grad = nullptr) const;

    double data_term(const LayerPair& x) const;
    double layer_prior_term(const LayerPair& x) const;
    double smoothness_term(const LayerPair& x) const;

private:
    struct PairWarp {
        int t = 0, rho = 0;
        Eigen::Matrix3d to_rho[2];  // frame t pixel -> frame rho pixel, per layer
    };

    double frame_terms(const LayerPair& x, int f, bool data, bool prior, bool smooth, double* out_ed_b,
                       double* out_ed_r, double* out_el, double* out_es, LayerPair* grad, const EnergyWeights* w) const;

    int n_ = 0, width_ = 0, height_ = 0, channels_ = 1;
    double eps_ = 1e-3;
    std::vector<std::vector<PairWarp>> from_frame_;  // pairs with t == f
    std::vector<std::vector<PairWarp>> into_frame_;  // pairs with rho == f
    std::vector<EdgeMap> edges_;
    std::vector<Mask> layer_map_;
    double count_b_ = 0, count_r_ = 0, pixel_norm_ = 1;
};

double data_term(const LayerDecomposition& dec, const WarpSet& warps, const OptimizerConfig& cfg);
double layer_prior_term(const LayerDecomposition& dec, const std::vector<EdgeMap>& edges, const OptimizerConfig& cfg);
double smoothness_term(const LayerDecomposition& dec, const OptimizerConfig& cfg);
EnergyTerms total_energy(const LayerDecomposition& dec, const WarpSet& warps, const std::vector<EdgeMap>& edges,
                         const EnergyWeights& w, const OptimizerConfig& cfg);

/// Canny edge maps of each frame's luma.
std::vector<EdgeMap> edge_maps(const FrameSequence& seq, double low = 0.1, double high = 0.2);

struct TraceRow {
    int iter = 0;
    EnergyTerms terms;
};

struct OptimizeResult {
    LayerDecomposition layers;
    std::vector<TraceRow> trace;
};

/// Projected gradient descent with backtracking from `init`. The composition
/// target I is taken as init.background + init.reflection.
OptimizeResult optimize(const LayerDecomposition& init, const WarpSet& warps, const std::vector<EdgeMap>& edges,
                        const EnergyWeights& w, const OptimizerConfig& cfg, const ProgressFn& progress = {});

std::string trace_csv(const std::vector<TraceRow>& trace);

}  // namespace reflect

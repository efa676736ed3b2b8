#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "fedpt/layer_scoring.hpp"
#include "fedpt/prompt_model.hpp"

namespace fedpt {

// Gradient of a scalar objective with respect to a flat parameter vector.
using GradFn = std::function<Vec(const Vec&)>;

// Per-device byproducts of the layer-selection pass, kept for diagnostics.
struct SelectionDiagnostics {
    Vec hessian_eigs;      // ascending, one per prompt parameter
    double lipschitz = 0;  // curvature-change estimate
    std::size_t gap_index = 0;  // k: first index with eigs[k] - eigs[k-1] > 4L, 0 when none
    double ratio = 1.0;         // (K - k) / K
};

struct SelectionResult {
    std::vector<std::size_t> selected_layers;  // descending global-score order
    double global_ratio = 1.0;
    double selected_param_fraction = 0.0;
};

struct SelectionConfig {
    ScoringConfig scoring;
    double fd_step = 1e-4;
    int lipschitz_trials = 64;
    double radius_floor = 1e-3;  // used when the warmup drift is ~0
    std::uint64_t seed = 0;
};

// Central differences of the supplied gradient, symmetrized to (H + H^T)/2.
SymMatrix finite_diff_hessian(const GradFn& grad, std::size_t dim, double step);

// Hessian of the batch loss with respect to all prompt coordinates.
SymMatrix finite_diff_hessian(const Backbone& b, const PromptState& p,
                              std::span<const Example> batch, double step);

// Max over sampled pairs inside the radius ball of
//   ||B(d_a) - B(d_b)|| / ||d_a - d_b||   with   B(d) = H d - grad(w + d),
// i.e. the observed Lipschitz constant of the linearization residual.
double lipschitz_estimate(const GradFn& grad, const SymMatrix& hessian, const Vec& w,
                          int trials, double radius, std::uint64_t seed);

double lipschitz_estimate(const Backbone& b, const PromptState& p, const SymMatrix& hessian,
                          std::span<const Example> batch, int trials, double radius,
                          std::uint64_t seed);

// Eigen-gap rule: k is the first index whose gap exceeds 4 * lipschitz; when
// no gap qualifies everything is retained (ratio 1).
SelectionDiagnostics retention_ratio(Vec hessian_eigs, double lipschitz);

// Greedy prefix in descending score order (ties to the lower layer index)
// until the cumulative parameter fraction reaches the ratio.
SelectionResult select_layers(std::span<const double> global_scores, double global_ratio,
                              std::span<const std::size_t> per_layer_param_counts);

// One participating device as seen by the selection pass.
struct SelectionDeviceView {
    const Backbone* backbone = nullptr;
    PromptState prompts;                // current prompt parameters on the device
    std::span<const Example> data;      // local training shard
};

struct DeviceSelectionRecord {
    std::size_t device_id = 0;
    SelectionDiagnostics diagnostics;
    LayerScores scores;
};

struct SelectionOutcome {
    SelectionResult result;
    std::vector<DeviceSelectionRecord> per_device;
};

// Full selection pass: per-device diagnostics and scores on a fixed seeded
// scoring batch, sample-count-weighted aggregation of ratios and scores, then
// the greedy layer prefix.
SelectionOutcome run_selection(std::span<const SelectionDeviceView> devices,
                               const PromptState& initial_prompts, const SelectionConfig& cfg);

}  // namespace fedpt

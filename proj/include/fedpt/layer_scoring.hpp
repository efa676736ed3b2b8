#pragma once

#include <cstddef>
#include <span>

#include "fedpt/prompt_model.hpp"

namespace fedpt {

struct ScoringConfig {
    double epsilon = 1e-5;             // stabilizer added to every eigenvalue
    std::size_t score_batch_size = 32; // samples per device per scoring event
};

// Per-layer scores plus the sample count used as the aggregation weight.
struct LayerScores {
    Vec scores;
    std::size_t sample_count = 0;
};

// L x L matrix of cosine similarities between a sample's per-layer hidden
// states. Diagonal is exactly 1; a zero-norm state contributes 0 off-diagonal.
SymMatrix kernel_matrix(const HiddenStates& h);

// Assigns one kernel eigenvalue to each layer. Eigenpairs are taken in
// descending eigenvalue order and each claims the free layer with the largest
// absolute eigenvector component, ties to the lowest free index. The result
// is a bijection between layers and eigenvalues.
Vec sample_layer_eigenvalues(const SymMatrix& k);

// Mean over samples of log(lambda + eps) + 1/(lambda + eps) per layer, with
// eigenvalues clamped to >= 0 first (a cosine Gram matrix can go slightly
// negative numerically).
LayerScores local_layer_scores(const Backbone& b, const PromptState& p,
                               std::span<const Example> data, const ScoringConfig& cfg);

// sample_count-weighted average of per-device scores.
Vec aggregate_scores(const std::vector<LayerScores>& locals);

}  // namespace fedpt

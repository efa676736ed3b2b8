#include "fedpt/layer_scoring.hpp"

#include <algorithm>
#include <cmath>

namespace fedpt {

SymMatrix kernel_matrix(const HiddenStates& h) {
    const std::size_t L = h.layers.size();
    if (L < 1) throw EmptyInput("kernel_matrix: no layers");
    const std::size_t width = h.layers.front().size();
    for (const auto& l : h.layers)
        if (l.size() != width) throw DimensionMismatch("kernel_matrix: unequal layer widths");

    SymMatrix k(L);
    for (std::size_t a = 0; a < L; ++a) {
        k.at(a, a) = 1.0;
        for (std::size_t b = a + 1; b < L; ++b) {
            double c;
            try {
                c = cosine(h.layers[a], h.layers[b]);
            } catch (const ZeroVector&) {
                c = 0.0;
            }
            k.at(a, b) = k.at(b, a) = c;
        }
    }
    return k;
}

Vec sample_layer_eigenvalues(const SymMatrix& k) {
    const std::size_t L = k.dim;
    const Spectrum sp = sym_eigen(k, true);
    const Matrix& v = *sp.vectors;

    Vec assigned(L, 0.0);
    std::vector<bool> taken(L, false);
    for (std::size_t e = L; e-- > 0;) {  // descending eigenvalue order
        std::size_t best = L;
        double best_mag = -1.0;
        for (std::size_t layer = 0; layer < L; ++layer) {
            if (taken[layer]) continue;
            const double mag = std::abs(v.at(layer, e));
            if (mag > best_mag) {
                best_mag = mag;
                best = layer;
            }
        }
        taken[best] = true;
        assigned[best] = sp.values[e];
    }
    return assigned;
}

LayerScores local_layer_scores(const Backbone& b, const PromptState& p,
                               std::span<const Example> data, const ScoringConfig& cfg) {
    if (data.empty()) throw EmptyBatch("local_layer_scores: empty data");
    if (cfg.epsilon <= 0.0) throw InvalidParams("local_layer_scores: epsilon must be positive");

    const std::size_t L = b.num_layers;
    LayerScores out;
    out.scores.assign(L, 0.0);
    out.sample_count = data.size();

    for (const Example& ex : data) {
        const ForwardResult fr = forward(b, p, ex);
        const Vec lambdas = sample_layer_eigenvalues(kernel_matrix(fr.hidden));
        for (std::size_t l = 0; l < L; ++l) {
            const double lam = std::max(lambdas[l], 0.0) + cfg.epsilon;
            out.scores[l] += std::log(lam) + 1.0 / lam;
        }
    }
    const double inv = 1.0 / static_cast<double>(data.size());
    for (auto& s : out.scores) s *= inv;
    return out;
}

Vec aggregate_scores(const std::vector<LayerScores>& locals) {
    if (locals.empty()) throw EmptyInput("aggregate_scores: no devices");
    std::vector<Vec> items;
    Vec weights;
    items.reserve(locals.size());
    weights.reserve(locals.size());
    std::size_t total = 0;
    for (const auto& ls : locals) {
        items.push_back(ls.scores);
        weights.push_back(static_cast<double>(ls.sample_count));
        total += ls.sample_count;
    }
    if (total == 0) throw ZeroTotalSamples("aggregate_scores: all sample counts are zero");
    return weighted_average(items, weights);
}

}  // namespace fedpt

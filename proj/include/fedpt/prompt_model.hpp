#pragma once

#include <cstdint>
#include <vector>

#include "fedpt/linalg.hpp"

namespace fedpt {

// One labeled sample.
struct Example {
    Vec features;
    int label = 0;
};

// Per-layer trainable prompt vectors; the only trainable parameters.
struct PromptState {
    std::vector<Vec> layers;

    std::size_t num_layers() const { return layers.size(); }
    std::size_t total_params() const;
    Vec flatten() const;
    static PromptState unflatten(std::span<const double> flat, std::size_t num_layers,
                                 std::size_t prompt_dim);
};

// Per-layer activations for one sample; equal widths so the layer-similarity
// kernel is well formed.
struct HiddenStates {
    std::vector<Vec> layers;
};

// Frozen layered network standing in for a large backbone model:
//
//   h_0 = x,  h_l = tanh(W_l h_{l-1} + U_l p_l),  logits = V h_L.
//
// Weights are fixed at construction; only PromptState is ever trained.
struct Backbone {
    std::size_t num_layers = 0;   // L
    std::size_t hidden_dim = 0;   // d_h
    std::size_t input_dim = 0;    // d_x
    std::size_t prompt_dim = 0;   // d_p
    std::size_t num_classes = 0;  // C
    std::uint64_t init_seed = 0;

    std::vector<Matrix> layer_weights;  // W_l: first is d_h x d_x, rest d_h x d_h
    std::vector<Matrix> prompt_maps;    // U_l: d_h x d_p
    Matrix head;                        // V: C x d_h

    PromptState zero_prompts() const;
};

// Seeded construction; identical seed gives a bit-identical backbone. Weights
// are iid uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Backbone make_backbone(std::size_t num_layers, std::size_t input_dim, std::size_t hidden_dim,
                       std::size_t prompt_dim, std::size_t num_classes, std::uint64_t init_seed);

// Explicit-weight construction; shapes are validated.
Backbone make_backbone_from_weights(std::vector<Matrix> layer_weights,
                                    std::vector<Matrix> prompt_maps, Matrix head,
                                    std::size_t input_dim);

struct ForwardResult {
    Vec logits;
    HiddenStates hidden;
};

ForwardResult forward(const Backbone& b, const PromptState& p, const Example& x);

// Softmax cross-entropy, stabilized by max subtraction. Always >= 0.
double loss(std::span<const double> logits, int label);

// Mean analytic gradient of the batch loss with respect to every prompt
// coordinate; shape mirrors PromptState.
PromptState prompt_gradient(const Backbone& b, const PromptState& p,
                            std::span<const Example> batch);

struct EvalResult {
    double accuracy = 0.0;  // argmax ties break toward lowest class index
    double mean_loss = 0.0;
};

EvalResult evaluate(const Backbone& b, const PromptState& p, std::span<const Example> data);

}  // namespace fedpt

#include "fedpt/prompt_model.hpp"

#include <algorithm>
#include <cmath>

#include "fedpt/rng.hpp"

namespace fedpt {

std::size_t PromptState::total_params() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.size();
    return n;
}

Vec PromptState::flatten() const {
    Vec out;
    out.reserve(total_params());
    for (const auto& l : layers) out.insert(out.end(), l.begin(), l.end());
    return out;
}

PromptState PromptState::unflatten(std::span<const double> flat, std::size_t num_layers,
                                   std::size_t prompt_dim) {
    if (flat.size() != num_layers * prompt_dim)
        throw DimensionMismatch("PromptState::unflatten: size mismatch");
    PromptState p;
    p.layers.resize(num_layers);
    for (std::size_t l = 0; l < num_layers; ++l)
        p.layers[l].assign(flat.begin() + static_cast<std::ptrdiff_t>(l * prompt_dim),
                           flat.begin() + static_cast<std::ptrdiff_t>((l + 1) * prompt_dim));
    return p;
}

PromptState Backbone::zero_prompts() const {
    PromptState p;
    p.layers.assign(num_layers, Vec(prompt_dim, 0.0));
    return p;
}

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    // fan-based uniform init keeps tanh activations away from saturation
    const double a = std::sqrt(6.0 / static_cast<double>(cols + rows));
    Matrix m(rows, cols);
    for (auto& x : m.data) x = rng.uniform(-a, a);
    return m;
}

}  // namespace

Backbone make_backbone(std::size_t num_layers, std::size_t input_dim, std::size_t hidden_dim,
                       std::size_t prompt_dim, std::size_t num_classes, std::uint64_t init_seed) {
    if (num_layers < 1 || input_dim < 1 || hidden_dim < 1 || prompt_dim < 1 || num_classes < 1)
        throw InvalidParams("make_backbone: all dimensions must be positive");
    Backbone b;
    b.num_layers = num_layers;
    b.hidden_dim = hidden_dim;
    b.input_dim = input_dim;
    b.prompt_dim = prompt_dim;
    b.num_classes = num_classes;
    b.init_seed = init_seed;

    Rng rng(mix_seed(init_seed, 0xBAC4B0));
    b.layer_weights.reserve(num_layers);
    b.layer_weights.push_back(random_matrix(hidden_dim, input_dim, rng));
    for (std::size_t l = 1; l < num_layers; ++l)
        b.layer_weights.push_back(random_matrix(hidden_dim, hidden_dim, rng));
    b.prompt_maps.reserve(num_layers);
    for (std::size_t l = 0; l < num_layers; ++l)
        b.prompt_maps.push_back(random_matrix(hidden_dim, prompt_dim, rng));
    b.head = random_matrix(num_classes, hidden_dim, rng);
    return b;
}

Backbone make_backbone_from_weights(std::vector<Matrix> layer_weights,
                                    std::vector<Matrix> prompt_maps, Matrix head,
                                    std::size_t input_dim) {
    if (layer_weights.empty() || layer_weights.size() != prompt_maps.size())
        throw ShapeMismatch("make_backbone_from_weights: need one W and one U per layer");
    Backbone b;
    b.num_layers = layer_weights.size();
    b.hidden_dim = layer_weights.front().rows;
    b.input_dim = input_dim;
    b.prompt_dim = prompt_maps.front().cols;
    b.num_classes = head.rows;
    b.init_seed = 0;

    if (layer_weights.front().cols != input_dim)
        throw ShapeMismatch("make_backbone_from_weights: W_1 must map input_dim");
    for (std::size_t l = 0; l < b.num_layers; ++l) {
        if (layer_weights[l].rows != b.hidden_dim ||
            (l > 0 && layer_weights[l].cols != b.hidden_dim))
            throw ShapeMismatch("make_backbone_from_weights: inconsistent W shapes");
        if (prompt_maps[l].rows != b.hidden_dim || prompt_maps[l].cols != b.prompt_dim)
            throw ShapeMismatch("make_backbone_from_weights: inconsistent U shapes");
    }
    if (head.cols != b.hidden_dim)
        throw ShapeMismatch("make_backbone_from_weights: head must map hidden_dim");

    b.layer_weights = std::move(layer_weights);
    b.prompt_maps = std::move(prompt_maps);
    b.head = std::move(head);
    return b;
}

ForwardResult forward(const Backbone& b, const PromptState& p, const Example& x) {
    if (p.num_layers() != b.num_layers)
        throw ShapeMismatch("forward: prompt layer count mismatch");
    if (x.features.size() != b.input_dim) throw ShapeMismatch("forward: input width mismatch");

    ForwardResult out;
    out.hidden.layers.reserve(b.num_layers);
    const Vec* prev = &x.features;
    for (std::size_t l = 0; l < b.num_layers; ++l) {
        if (p.layers[l].size() != b.prompt_dim)
            throw ShapeMismatch("forward: prompt width mismatch");
        Vec z = b.layer_weights[l].apply(*prev);
        const Vec inj = b.prompt_maps[l].apply(p.layers[l]);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = std::tanh(z[i] + inj[i]);
        out.hidden.layers.push_back(std::move(z));
        prev = &out.hidden.layers.back();
    }
    out.logits = b.head.apply(*prev);
    return out;
}

namespace {

Vec softmax(std::span<const double> logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    Vec s(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        s[i] = std::exp(logits[i] - m);
        z += s[i];
    }
    for (auto& x : s) x /= z;
    return s;
}

}  // namespace

double loss(std::span<const double> logits, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
        throw InvalidParams("loss: label out of range");
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - m);
    return std::log(z) - (logits[static_cast<std::size_t>(label)] - m);
}

PromptState prompt_gradient(const Backbone& b, const PromptState& p,
                            std::span<const Example> batch) {
    if (batch.empty()) throw EmptyBatch("prompt_gradient: empty batch");

    PromptState grad = b.zero_prompts();
    const std::size_t L = b.num_layers;

    for (const Example& ex : batch) {
        const ForwardResult fr = forward(b, p, ex);

        Vec dlogits = softmax(fr.logits);
        dlogits[static_cast<std::size_t>(ex.label)] -= 1.0;

        // dL/dh_L = V^T dlogits
        Vec dh(b.hidden_dim, 0.0);
        for (std::size_t c = 0; c < b.num_classes; ++c)
            for (std::size_t i = 0; i < b.hidden_dim; ++i)
                dh[i] += b.head.at(c, i) * dlogits[c];

        for (std::size_t li = L; li-- > 0;) {
            const Vec& h = fr.hidden.layers[li];
            Vec dz(b.hidden_dim);
            for (std::size_t i = 0; i < b.hidden_dim; ++i) dz[i] = dh[i] * (1.0 - h[i] * h[i]);

            // dL/dp_l = U_l^T dz
            for (std::size_t i = 0; i < b.hidden_dim; ++i)
                for (std::size_t j = 0; j < b.prompt_dim; ++j)
                    grad.layers[li][j] += b.prompt_maps[li].at(i, j) * dz[i];

            if (li > 0) {
                Vec dprev(b.hidden_dim, 0.0);
                for (std::size_t i = 0; i < b.hidden_dim; ++i)
                    for (std::size_t j = 0; j < b.hidden_dim; ++j)
                        dprev[j] += b.layer_weights[li].at(i, j) * dz[i];
                dh = std::move(dprev);
            }
        }
    }

    const double inv = 1.0 / static_cast<double>(batch.size());
    for (auto& l : grad.layers)
        for (auto& g : l) g *= inv;
    return grad;
}

EvalResult evaluate(const Backbone& b, const PromptState& p, std::span<const Example> data) {
    if (data.empty()) throw EmptyBatch("evaluate: empty data");
    std::size_t correct = 0;
    double loss_sum = 0.0;
    for (const Example& ex : data) {
        const ForwardResult fr = forward(b, p, ex);
        std::size_t arg = 0;
        for (std::size_t c = 1; c < fr.logits.size(); ++c)
            if (fr.logits[c] > fr.logits[arg]) arg = c;
        if (static_cast<int>(arg) == ex.label) ++correct;
        loss_sum += loss(fr.logits, ex.label);
    }
    EvalResult r;
    r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    r.mean_loss = loss_sum / static_cast<double>(data.size());
    return r;
}

}  // namespace fedpt

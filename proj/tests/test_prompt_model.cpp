#include <cmath>

#include "doctest.h"
#include "fedpt/adaptive_optim.hpp"
#include "fedpt/prompt_model.hpp"
#include "fedpt/rng.hpp"

using namespace fedpt;

namespace {

Matrix scalar_matrix(double v) {
    Matrix m(1, 1);
    m.at(0, 0) = v;
    return m;
}

// L=1, d_x=d_h=d_p=1 chain with a two-class head (v1, v2).
Backbone scalar_chain(double w, double u, double v1, double v2) {
    Matrix head(2, 1);
    head.at(0, 0) = v1;
    head.at(1, 0) = v2;
    return make_backbone_from_weights({scalar_matrix(w)}, {scalar_matrix(u)}, head, 1);
}

std::vector<Example> random_batch(std::size_t n, std::size_t d_x, std::size_t classes, Rng& rng) {
    std::vector<Example> batch(n);
    for (auto& ex : batch) {
        ex.features.resize(d_x);
        for (auto& x : ex.features) x = rng.normal();
        ex.label = static_cast<int>(rng.below(classes));
    }
    return batch;
}

}  // namespace

TEST_CASE("forward: zero prompts and zero input stay zero") {
    const Backbone b = make_backbone(3, 4, 5, 2, 3, 1);
    const PromptState p = b.zero_prompts();
    Example x;
    x.features.assign(4, 0.0);
    const ForwardResult fr = forward(b, p, x);
    for (const auto& h : fr.hidden.layers)
        for (double v : h) CHECK(v == 0.0);
    for (double v : fr.logits) CHECK(v == 0.0);
}

TEST_CASE("forward: scalar chain hand evaluation") {
    Matrix head(1, 1);
    head.at(0, 0) = 1.0;
    const Backbone b =
        make_backbone_from_weights({scalar_matrix(1.0)}, {scalar_matrix(1.0)}, head, 1);
    PromptState p;
    p.layers = {{0.5}};
    Example x;
    x.features = {0.0};
    const ForwardResult fr = forward(b, p, x);
    CHECK(fr.hidden.layers[0][0] == doctest::Approx(std::tanh(0.5)).epsilon(1e-15));
    CHECK(fr.logits[0] == doctest::Approx(std::tanh(0.5)).epsilon(1e-15));
}

TEST_CASE("forward: deterministic and bounded") {
    const Backbone b = make_backbone(4, 6, 8, 3, 4, 123);
    const Backbone b2 = make_backbone(4, 6, 8, 3, 4, 123);
    CHECK(b.head.data == b2.head.data);
    for (std::size_t l = 0; l < 4; ++l) {
        CHECK(b.layer_weights[l].data == b2.layer_weights[l].data);
        CHECK(b.prompt_maps[l].data == b2.prompt_maps[l].data);
    }

    Rng rng(5);
    PromptState p = b.zero_prompts();
    for (auto& layer : p.layers)
        for (auto& v : layer) v = rng.uniform(-1.0, 1.0);
    Example x;
    x.features.resize(6);
    for (auto& v : x.features) v = rng.normal();

    const ForwardResult r1 = forward(b, p, x);
    const ForwardResult r2 = forward(b, p, x);
    CHECK(r1.logits == r2.logits);
    for (const auto& h : r1.hidden.layers)
        for (double v : h) CHECK(std::abs(v) < 1.0);
}

TEST_CASE("forward: shape mismatch") {
    const Backbone b = make_backbone(2, 3, 4, 2, 2, 1);
    Example x;
    x.features.assign(2, 0.0);  // wrong width
    CHECK_THROWS_AS(forward(b, b.zero_prompts(), x), ShapeMismatch);
}

TEST_CASE("loss: uniform logits, extreme logits, shift invariance") {
    CHECK(loss(Vec{0.3, 0.3, 0.3, 0.3}, 2) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
    // -log(1 / (1 + e^-20)) = log1p(e^-20)
    CHECK(loss(Vec{10.0, -10.0}, 0) ==
          doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-9));

    Rng rng(6);
    Vec logits(5);
    for (auto& v : logits) v = rng.normal();
    const double base = loss(logits, 3);
    Vec shifted = logits;
    for (auto& v : shifted) v += 7.25;
    CHECK(std::abs(loss(shifted, 3) - base) <= 1e-12);
}

TEST_CASE("prompt_gradient: disconnected deeper layers have exactly zero gradient") {
    // W_l = 0 for l > 1 and U_L = 0: nothing upstream of the last layer can
    // reach the logits, so every earlier prompt block gets gradient 0.
    const std::size_t L = 3, d = 2;
    std::vector<Matrix> ws, us;
    Rng rng(8);
    for (std::size_t l = 0; l < L; ++l) {
        Matrix w(d, d), u(d, d);
        if (l == 0)
            for (auto& x : w.data) x = rng.uniform(-1.0, 1.0);
        if (l < L - 1)
            for (auto& x : u.data) x = rng.uniform(-1.0, 1.0);
        ws.push_back(w);
        us.push_back(u);
    }
    Matrix head(2, d);
    for (auto& x : head.data) x = rng.uniform(-1.0, 1.0);
    const Backbone b = make_backbone_from_weights(ws, us, head, d);

    PromptState p = b.zero_prompts();
    for (auto& layer : p.layers)
        for (auto& v : layer) v = rng.uniform(-0.5, 0.5);
    const auto batch = random_batch(4, d, 2, rng);
    const PromptState g = prompt_gradient(b, p, batch);
    for (std::size_t l = 0; l + 1 < L; ++l)
        for (double v : g.layers[l]) CHECK(v == 0.0);
}

TEST_CASE("prompt_gradient: scalar chain-rule oracle") {
    const double w = 0.8, u = 1.1, v1 = 0.9, v2 = -0.4, pv = 0.3, xv = 0.25;
    const Backbone b = scalar_chain(w, u, v1, v2);
    PromptState p;
    p.layers = {{pv}};
    Example x;
    x.features = {xv};
    x.label = 0;

    // h = tanh(w x + u p); logits = (v1 h, v2 h); label 0.
    // dloss/dh = (s0 - 1) v1 + s1 v2 with s = softmax(logits).
    const double h = std::tanh(w * xv + u * pv);
    const double e0 = std::exp(v1 * h), e1 = std::exp(v2 * h);
    const double s0 = e0 / (e0 + e1), s1 = e1 / (e0 + e1);
    const double dh = (s0 - 1.0) * v1 + s1 * v2;
    const double expected = dh * (1.0 - h * h) * u;

    const std::vector<Example> single{x};
    const PromptState g = prompt_gradient(b, p, single);
    CHECK(g.layers[0][0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("prompt_gradient: duplicated batch equals original") {
    const Backbone b = make_backbone(3, 4, 5, 2, 3, 17);
    Rng rng(18);
    PromptState p = b.zero_prompts();
    for (auto& layer : p.layers)
        for (auto& v : layer) v = rng.uniform(-0.5, 0.5);
    auto batch = random_batch(5, 4, 3, rng);
    auto doubled = batch;
    doubled.insert(doubled.end(), batch.begin(), batch.end());

    const Vec g1 = prompt_gradient(b, p, batch).flatten();
    const Vec g2 = prompt_gradient(b, p, doubled).flatten();
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(std::abs(g1[i] - g2[i]) <= 1e-15);

    CHECK_THROWS_AS(prompt_gradient(b, p, {}), EmptyBatch);
}

TEST_CASE("prompt_gradient matches central finite differences") {
    const Backbone b = make_backbone(4, 5, 6, 3, 3, 2024);
    Rng rng(19);
    PromptState p = b.zero_prompts();
    for (auto& layer : p.layers)
        for (auto& v : layer) v = rng.uniform(-0.5, 0.5);
    const auto batch = random_batch(8, 5, 3, rng);

    const Vec g = prompt_gradient(b, p, batch).flatten();
    const Vec flat = p.flatten();
    const double step = 1e-5;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        Vec plus = flat, minus = flat;
        plus[i] += step;
        minus[i] -= step;
        double lp = 0.0, lm = 0.0;
        const PromptState pp = PromptState::unflatten(plus, b.num_layers, b.prompt_dim);
        const PromptState pm = PromptState::unflatten(minus, b.num_layers, b.prompt_dim);
        for (const auto& ex : batch) {
            lp += loss(forward(b, pp, ex).logits, ex.label);
            lm += loss(forward(b, pm, ex).logits, ex.label);
        }
        const double fd = (lp - lm) / (2.0 * step * static_cast<double>(batch.size()));
        const double err = std::abs(fd - g[i]);
        CHECK(err <= std::max(1e-8, 1e-5 * std::abs(fd)));
    }
}

TEST_CASE("frozen backbone: local updates leave the weights bit-identical") {
    const Backbone b = make_backbone(3, 4, 5, 2, 3, 55);
    const auto snapshot = [&]() {
        Vec all;
        for (const auto& m : b.layer_weights) all.insert(all.end(), m.data.begin(), m.data.end());
        for (const auto& m : b.prompt_maps) all.insert(all.end(), m.data.begin(), m.data.end());
        all.insert(all.end(), b.head.data.begin(), b.head.data.end());
        return all;
    };
    const Vec before = snapshot();

    Rng rng(56);
    auto shard = random_batch(12, 4, 3, rng);
    PromptState prompts = b.zero_prompts();
    std::vector<std::size_t> sync{0, 1, 2};
    local_update(b, prompts, sync, shard, 20, 4, DeviceRule::Adam, {}, 99, 0);

    CHECK(snapshot() == before);
}

TEST_CASE("evaluate: basics, tie-break and recount oracle") {
    const Backbone b = scalar_chain(1.0, 1.0, 1.0, -1.0);
    PromptState p;
    p.layers = {{0.5}};
    Example pos;
    pos.features = {1.0};
    pos.label = 0;  // h > 0 so logit0 > logit1
    const std::vector<Example> only_pos{pos};
    CHECK(evaluate(b, p, only_pos).accuracy == doctest::Approx(1.0));

    // All-equal logits predict class 0 by tie-break.
    Matrix head(3, 1);  // all-zero head makes every logit 0
    const Backbone tie =
        make_backbone_from_weights({scalar_matrix(1.0)}, {scalar_matrix(1.0)}, head, 1);
    PromptState tp;
    tp.layers = {{0.3}};
    Example e0, e1;
    e0.features = {0.2};
    e0.label = 0;
    e1.features = {0.2};
    e1.label = 1;
    const std::vector<Example> v0{e0}, v1{e1};
    CHECK(evaluate(tie, tp, v0).accuracy == doctest::Approx(1.0));
    CHECK(evaluate(tie, tp, v1).accuracy == doctest::Approx(0.0));

    // Independent recount on a seeded model and data.
    const Backbone rb = make_backbone(3, 4, 6, 2, 4, 321);
    Rng rng(322);
    PromptState rp = rb.zero_prompts();
    for (auto& layer : rp.layers)
        for (auto& v : layer) v = rng.uniform(-1.0, 1.0);
    const auto data = random_batch(64, 4, 4, rng);

    std::size_t correct = 0;
    for (const auto& ex : data) {
        const Vec logits = forward(rb, rp, ex).logits;
        int arg = 0;
        for (int c = 1; c < 4; ++c)
            if (logits[static_cast<std::size_t>(c)] > logits[static_cast<std::size_t>(arg)])
                arg = c;
        if (arg == ex.label) ++correct;
    }
    CHECK(evaluate(rb, rp, data).accuracy ==
          doctest::Approx(static_cast<double>(correct) / 64.0).epsilon(1e-15));

    CHECK_THROWS_AS(evaluate(rb, rp, {}), EmptyBatch);
}

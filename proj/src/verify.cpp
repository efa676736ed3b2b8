#include "fedpt/verify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>

#include "fedpt/adaptive_optim.hpp"
#include "fedpt/datasets.hpp"
#include "fedpt/linalg.hpp"
#include "fedpt/prompt_model.hpp"
#include "fedpt/rng.hpp"

namespace fedpt {

namespace {

// Closed-form eigenvalues of a symmetric 3x3 via its characteristic
// polynomial (trigonometric form), kept independent of the Jacobi solver.
std::array<double, 3> char_poly_eigs_3x3(const SymMatrix& a) {
    const double p1 = a.at(0, 1) * a.at(0, 1) + a.at(0, 2) * a.at(0, 2) + a.at(1, 2) * a.at(1, 2);
    const double q = (a.at(0, 0) + a.at(1, 1) + a.at(2, 2)) / 3.0;
    const double p2 = (a.at(0, 0) - q) * (a.at(0, 0) - q) + (a.at(1, 1) - q) * (a.at(1, 1) - q) +
                      (a.at(2, 2) - q) * (a.at(2, 2) - q) + 2.0 * p1;
    if (p2 <= 0.0) return {q, q, q};
    const double p = std::sqrt(p2 / 6.0);

    SymMatrix b(3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) b.at(i, j) = (a.at(i, j) - (i == j ? q : 0.0)) / p;
    const double detb = b.at(0, 0) * (b.at(1, 1) * b.at(2, 2) - b.at(1, 2) * b.at(2, 1)) -
                        b.at(0, 1) * (b.at(1, 0) * b.at(2, 2) - b.at(1, 2) * b.at(2, 0)) +
                        b.at(0, 2) * (b.at(1, 0) * b.at(2, 1) - b.at(1, 1) * b.at(2, 0));
    const double r = std::clamp(detb / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    const double two_pi_3 = 2.0943951023931953;
    std::array<double, 3> eig = {q + 2.0 * p * std::cos(phi + two_pi_3),
                                 0.0,
                                 q + 2.0 * p * std::cos(phi)};
    eig[1] = 3.0 * q - eig[0] - eig[2];
    return eig;
}

bool check_adam_trace(std::ostream& out, double eps_perturbation) {
    Rng rng(42);
    const std::size_t dim = 5;
    AdamHyper hyper;
    hyper.eps += eps_perturbation;
    Vec w(dim), ref_w(dim);
    for (std::size_t i = 0; i < dim; ++i) w[i] = ref_w[i] = rng.uniform(-1.0, 1.0);
    AdamState st(dim, hyper);

    // Straight-line reference with its own state, no shared code path.
    Vec ref_m(dim, 0.0), ref_v(dim, 0.0);
    const double alpha = 1e-2, b1 = 0.9, b2 = 0.999, eps = 1e-8;

    double worst = 0.0;
    for (int t = 1; t <= 100; ++t) {
        Vec g(dim);
        for (auto& x : g) x = rng.normal();
        adam_step(w, st, g);
        for (std::size_t i = 0; i < dim; ++i) {
            ref_m[i] = b1 * ref_m[i] + (1.0 - b1) * g[i];
            ref_v[i] = b2 * ref_v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = ref_m[i] / (1.0 - std::pow(b1, t));
            const double vhat = ref_v[i] / (1.0 - std::pow(b2, t));
            ref_w[i] -= alpha * mhat / (std::sqrt(vhat) + eps);
            worst = std::max(worst, std::abs(ref_w[i] - w[i]));
        }
    }
    const bool ok = worst <= 1e-12;
    out << (ok ? "PASS" : "FAIL") << " adam-trace (max deviation " << worst << ")\n";
    return ok;
}

bool check_eigensolver(std::ostream& out) {
    Rng rng(7);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        SymMatrix m(3);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = i; j < 3; ++j) m.at(i, j) = m.at(j, i) = rng.uniform(-2.0, 2.0);
        const Spectrum sp = sym_eigen(m, false);
        auto expect = char_poly_eigs_3x3(m);
        std::sort(expect.begin(), expect.end());
        for (std::size_t k = 0; k < 3; ++k)
            worst = std::max(worst, std::abs(sp.values[k] - expect[k]));

        const double trace = m.at(0, 0) + m.at(1, 1) + m.at(2, 2);
        worst = std::max(worst, std::abs(sp.values[0] + sp.values[1] + sp.values[2] - trace));
    }
    const bool ok = worst <= 1e-8;
    out << (ok ? "PASS" : "FAIL") << " eigensolver-charpoly (max deviation " << worst << ")\n";
    return ok;
}

bool check_gradient(std::ostream& out) {
    const Backbone b = make_backbone(4, 5, 6, 3, 3, 99);
    Rng rng(13);
    PromptState p = b.zero_prompts();
    for (auto& l : p.layers)
        for (auto& x : l) x = rng.uniform(-0.5, 0.5);
    std::vector<Example> batch(8);
    for (auto& ex : batch) {
        ex.features.resize(5);
        for (auto& x : ex.features) x = rng.normal();
        ex.label = static_cast<int>(rng.below(3));
    }

    const Vec g = prompt_gradient(b, p, batch).flatten();
    const Vec flat = p.flatten();
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        Vec plus = flat, minus = flat;
        plus[i] += h;
        minus[i] -= h;
        const PromptState pp = PromptState::unflatten(plus, b.num_layers, b.prompt_dim);
        const PromptState pm = PromptState::unflatten(minus, b.num_layers, b.prompt_dim);
        double lp = 0.0, lm = 0.0;
        for (const auto& ex : batch) {
            lp += loss(forward(b, pp, ex).logits, ex.label);
            lm += loss(forward(b, pm, ex).logits, ex.label);
        }
        lp /= static_cast<double>(batch.size());
        lm /= static_cast<double>(batch.size());
        const double fd = (lp - lm) / (2.0 * h);
        const double rel = std::abs(fd - g[i]) / std::max(1e-8, std::abs(fd));
        worst = std::max(worst, rel);
    }
    const bool ok = worst <= 1e-5;
    out << (ok ? "PASS" : "FAIL") << " gradient-finite-diff (max rel error " << worst << ")\n";
    return ok;
}

bool check_control_variates(std::ostream& out) {
    Rng rng(21);
    const std::size_t M = 6, dim = 8;
    const OptimizerConfig opt = make_optimizer("fedpeptao");
    ServerHyper hyper;
    hyper.alpha = 1e-2;
    ServerOptState st(dim, hyper);
    Vec w(dim, 0.0);
    std::vector<std::size_t> all(M);
    std::vector<std::size_t> n(M);
    for (std::size_t i = 0; i < M; ++i) {
        all[i] = i;
        n[i] = 1 + rng.below(20);
    }

    double worst = 0.0;
    for (int round = 0; round < 10; ++round) {
        std::vector<DeviceUpdate> ups(M);
        for (std::size_t i = 0; i < M; ++i) {
            ups[i].device_id = i;
            ups[i].steps_taken = 5;
            ups[i].sample_count = n[i];
            ups[i].delta.resize(dim);
            for (auto& x : ups[i].delta) x = 0.1 * rng.normal();
        }
        server_round(st, ups, all, M, w, opt);

        double total = 0.0;
        Vec avg(dim, 0.0);
        for (std::size_t i = 0; i < M; ++i) {
            total += static_cast<double>(n[i]);
            const Vec& ci = st.variate(i);
            for (std::size_t k = 0; k < dim; ++k) avg[k] += static_cast<double>(n[i]) * ci[k];
        }
        for (std::size_t k = 0; k < dim; ++k)
            worst = std::max(worst, std::abs(avg[k] / total - st.c_global[k]));
    }
    const bool ok = worst <= 1e-12;
    out << (ok ? "PASS" : "FAIL") << " control-variate-bookkeeping (max deviation " << worst
        << ")\n";
    return ok;
}

bool check_partition(std::ostream& out) {
    const Dataset d = synth_task(3, 4, 8, 400, 3.0);
    bool ok = true;
    for (const double alpha : {0.3, 1.0, 5.0}) {
        PartitionSpec spec;
        spec.num_devices = 10;
        spec.label_alpha = alpha;
        spec.size_alpha = 5.0;
        spec.seed = 17;
        const auto shards = dirichlet_partition(d, spec);

        std::vector<std::pair<Vec, int>> got, want;
        for (const auto& s : shards) {
            for (const auto& ex : s.train) got.emplace_back(ex.features, ex.label);
            for (const auto& ex : s.holdout) got.emplace_back(ex.features, ex.label);
            if (s.train.size() + s.holdout.size() < 4) ok = false;
        }
        for (const auto& ex : d.examples) want.emplace_back(ex.features, ex.label);
        std::sort(got.begin(), got.end());
        std::sort(want.begin(), want.end());
        ok = ok && got == want;
    }
    out << (ok ? "PASS" : "FAIL") << " partition-conservation\n";
    return ok;
}

}  // namespace

bool run_verify(std::ostream& out, const VerifyOptions& opt) {
    bool ok = true;
    ok &= check_adam_trace(out, opt.adam_eps_perturbation);
    ok &= check_eigensolver(out);
    ok &= check_gradient(out);
    ok &= check_control_variates(out);
    ok &= check_partition(out);
    out << (ok ? "verify: all checks passed\n" : "verify: FAILURES detected\n");
    return ok;
}

}  // namespace fedpt

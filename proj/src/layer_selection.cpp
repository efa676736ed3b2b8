#include "fedpt/layer_selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedpt/rng.hpp"

namespace fedpt {

namespace {

GradFn model_grad_fn(const Backbone& b, std::span<const Example> batch) {
    return [&b, batch](const Vec& flat) {
        const PromptState p = PromptState::unflatten(flat, b.num_layers, b.prompt_dim);
        return prompt_gradient(b, p, batch).flatten();
    };
}

Vec sample_in_ball(Rng& rng, std::size_t dim, double radius) {
    Vec z(dim);
    for (auto& x : z) x = rng.normal();
    const double n = norm2(z);
    const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(dim));
    const double scale = n > 0.0 ? r / n : 0.0;
    for (auto& x : z) x *= scale;
    return z;
}

}  // namespace

SymMatrix finite_diff_hessian(const GradFn& grad, std::size_t dim, double step) {
    if (dim > 512) throw DimensionTooLarge("finite_diff_hessian: more than 512 parameters");
    if (step <= 0.0) throw InvalidParams("finite_diff_hessian: step must be positive");

    Vec base(dim, 0.0);
    SymMatrix h(dim);
    for (std::size_t col = 0; col < dim; ++col) {
        Vec plus = base, minus = base;
        plus[col] += step;
        minus[col] -= step;
        const Vec gp = grad(plus);
        const Vec gm = grad(minus);
        if (gp.size() != dim || gm.size() != dim)
            throw DimensionMismatch("finite_diff_hessian: gradient size mismatch");
        for (std::size_t row = 0; row < dim; ++row)
            h.at(row, col) = (gp[row] - gm[row]) / (2.0 * step);
    }
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = i + 1; j < dim; ++j) {
            const double v = 0.5 * (h.at(i, j) + h.at(j, i));
            h.at(i, j) = h.at(j, i) = v;
        }
    return h;
}

SymMatrix finite_diff_hessian(const Backbone& b, const PromptState& p,
                              std::span<const Example> batch, double step) {
    if (batch.empty()) throw EmptyBatch("finite_diff_hessian: empty batch");
    const Vec center = p.flatten();
    const GradFn g = model_grad_fn(b, batch);
    const GradFn shifted = [&](const Vec& x) {
        Vec at(center);
        for (std::size_t i = 0; i < at.size(); ++i) at[i] += x[i];
        return g(at);
    };
    return finite_diff_hessian(shifted, center.size(), step);
}

double lipschitz_estimate(const GradFn& grad, const SymMatrix& hessian, const Vec& w, int trials,
                          double radius, std::uint64_t seed) {
    if (trials < 2) throw InvalidParams("lipschitz_estimate: need at least 2 trials");
    const std::size_t dim = w.size();
    if (hessian.dim != dim) throw DimensionMismatch("lipschitz_estimate: hessian size mismatch");

    const auto residual = [&](const Vec& delta) {
        Vec out = hessian.apply(delta);
        Vec shifted(w);
        for (std::size_t i = 0; i < dim; ++i) shifted[i] += delta[i];
        const Vec g = grad(shifted);
        for (std::size_t i = 0; i < dim; ++i) out[i] -= g[i];
        return out;
    };

    Rng rng(mix_seed(seed, 0x11B5));
    double best = 0.0;
    int attempts = 0;
    const int max_attempts = trials * 10;
    for (int t = 0; t < trials; ++t) {
        Vec da, db, diff(dim);
        double dist = 0.0;
        do {
            if (++attempts > max_attempts)
                throw DegeneratePair("lipschitz_estimate: sampled pairs keep coinciding");
            da = sample_in_ball(rng, dim, radius);
            db = sample_in_ball(rng, dim, radius);
            for (std::size_t i = 0; i < dim; ++i) diff[i] = da[i] - db[i];
            dist = norm2(diff);
        } while (dist < 1e-300);

        const Vec ra = residual(da);
        const Vec rb = residual(db);
        Vec rdiff(dim);
        for (std::size_t i = 0; i < dim; ++i) rdiff[i] = ra[i] - rb[i];
        best = std::max(best, norm2(rdiff) / dist);
    }
    return best;
}

double lipschitz_estimate(const Backbone& b, const PromptState& p, const SymMatrix& hessian,
                          std::span<const Example> batch, int trials, double radius,
                          std::uint64_t seed) {
    if (batch.empty()) throw EmptyBatch("lipschitz_estimate: empty batch");
    return lipschitz_estimate(model_grad_fn(b, batch), hessian, p.flatten(), trials, radius, seed);
}

SelectionDiagnostics retention_ratio(Vec hessian_eigs, double lipschitz) {
    if (hessian_eigs.empty()) throw EmptyInput("retention_ratio: no eigenvalues");
    if (!std::is_sorted(hessian_eigs.begin(), hessian_eigs.end()))
        throw InvalidParams("retention_ratio: eigenvalues must be ascending");

    SelectionDiagnostics d;
    d.lipschitz = lipschitz;
    const std::size_t K = hessian_eigs.size();
    d.gap_index = 0;
    for (std::size_t k = 1; k < K; ++k) {
        if (hessian_eigs[k] - hessian_eigs[k - 1] > 4.0 * lipschitz) {
            d.gap_index = k;
            break;
        }
    }
    d.ratio = static_cast<double>(K - d.gap_index) / static_cast<double>(K);
    d.hessian_eigs = std::move(hessian_eigs);
    return d;
}

SelectionResult select_layers(std::span<const double> global_scores, double global_ratio,
                              std::span<const std::size_t> per_layer_param_counts) {
    const std::size_t L = global_scores.size();
    if (per_layer_param_counts.size() != L)
        throw DimensionMismatch("select_layers: one parameter count per layer required");
    if (global_ratio < 0.0 || global_ratio > 1.0)
        throw InvalidParams("select_layers: ratio must lie in [0, 1]");
    std::size_t total = 0;
    for (std::size_t c : per_layer_param_counts) {
        if (c == 0) throw InvalidParams("select_layers: parameter counts must be positive");
        total += c;
    }

    std::vector<std::size_t> order(L);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (global_scores[a] != global_scores[b]) return global_scores[a] > global_scores[b];
        return a < b;
    });

    SelectionResult r;
    r.global_ratio = global_ratio;
    std::size_t covered = 0;
    for (std::size_t l : order) {
        if (static_cast<double>(covered) / static_cast<double>(total) >= global_ratio) break;
        r.selected_layers.push_back(l);
        covered += per_layer_param_counts[l];
    }
    r.selected_param_fraction = static_cast<double>(covered) / static_cast<double>(total);
    return r;
}

SelectionOutcome run_selection(std::span<const SelectionDeviceView> devices,
                               const PromptState& initial_prompts, const SelectionConfig& cfg) {
    if (devices.empty()) throw EmptyInput("run_selection: no devices");

    SelectionOutcome out;
    std::vector<LayerScores> score_rows;
    std::vector<Vec> ratio_rows;
    Vec weights;

    for (std::size_t d = 0; d < devices.size(); ++d) {
        const SelectionDeviceView& dev = devices[d];
        if (dev.data.empty()) throw EmptyShard("run_selection: device shard is empty");

        // Fixed seeded scoring batch, shared by the Hessian and the scores.
        // The stream restarts identically per device so that devices with
        // identical shards produce identical diagnostics.
        const std::size_t take = std::min(cfg.scoring.score_batch_size, dev.data.size());
        Rng batch_rng(mix_seed(cfg.seed, 0x5C0BE));
        std::vector<Example> batch;
        batch.reserve(take);
        for (const int idx :
             batch_rng.sample_without_replacement(static_cast<int>(dev.data.size()),
                                                  static_cast<int>(take)))
            batch.push_back(dev.data[static_cast<std::size_t>(idx)]);

        const Vec current = dev.prompts.flatten();
        const Vec initial = initial_prompts.flatten();
        if (current.size() != initial.size())
            throw DimensionMismatch("run_selection: prompt dimension mismatch");
        Vec drift(current.size());
        for (std::size_t i = 0; i < drift.size(); ++i) drift[i] = initial[i] - current[i];
        const double radius = std::max(norm2(drift), cfg.radius_floor);

        const SymMatrix hess = finite_diff_hessian(*dev.backbone, dev.prompts, batch, cfg.fd_step);
        const Spectrum sp = sym_eigen(hess, false);
        const double lip = lipschitz_estimate(*dev.backbone, dev.prompts, hess, batch,
                                              cfg.lipschitz_trials, radius,
                                              mix_seed(cfg.seed, 0x11F5));

        DeviceSelectionRecord rec;
        rec.device_id = d;
        rec.diagnostics = retention_ratio(sp.values, lip);
        rec.scores = local_layer_scores(*dev.backbone, dev.prompts, batch, cfg.scoring);
        rec.scores.sample_count = dev.data.size();  // Eq. 4 weight is the shard size

        ratio_rows.push_back(Vec{rec.diagnostics.ratio});
        score_rows.push_back(rec.scores);
        weights.push_back(static_cast<double>(dev.data.size()));
        out.per_device.push_back(std::move(rec));
    }

    const double global_ratio = weighted_average(ratio_rows, weights)[0];
    const Vec global_scores = aggregate_scores(score_rows);
    const std::size_t d_p = devices.front().prompts.layers.front().size();
    const std::vector<std::size_t> counts(global_scores.size(), d_p);
    out.result = select_layers(global_scores, global_ratio, counts);
    return out;
}

}  // namespace fedpt

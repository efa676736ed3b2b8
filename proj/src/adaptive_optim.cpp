#include "fedpt/adaptive_optim.hpp"

#include <algorithm>
#include <cmath>

#include "fedpt/rng.hpp"

namespace fedpt {

void adam_step(Vec& w, AdamState& s, std::span<const double> g) {
    const std::size_t n = w.size();
    if (g.size() != n || s.m.size() != n || s.v.size() != n)
        throw DimensionMismatch("adam_step: dimension mismatch");

    s.t += 1;
    const double b1 = s.hyper.beta1;
    const double b2 = s.hyper.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < n; ++i) {
        s.m[i] = b1 * s.m[i] + (1.0 - b1) * g[i];
        s.v[i] = b2 * s.v[i] + (1.0 - b2) * g[i] * g[i];
        const double mhat = s.m[i] / bc1;
        const double vhat = s.v[i] / bc2;
        w[i] -= s.hyper.alpha * mhat / (std::sqrt(vhat) + s.hyper.eps);
    }
}

OptimizerConfig make_optimizer(const std::string& config_name) {
    OptimizerConfig c;
    c.name = config_name;
    if (config_name == "fedavg") {
        c.device_rule = DeviceRule::Sgd;
        c.server_rule = ServerRule::Average;
        c.control_variates = false;
    } else if (config_name == "momd") {
        c.device_rule = DeviceRule::SgdMomentum;
        c.server_rule = ServerRule::Average;
        c.control_variates = false;
    } else if (config_name == "moms") {
        c.device_rule = DeviceRule::Sgd;
        c.server_rule = ServerRule::Momentum;
        c.control_variates = false;
    } else if (config_name == "moms_con") {
        c.device_rule = DeviceRule::Sgd;
        c.server_rule = ServerRule::Momentum;
        c.control_variates = true;
    } else if (config_name == "adamd") {
        c.device_rule = DeviceRule::Adam;
        c.server_rule = ServerRule::Average;
        c.control_variates = false;
    } else if (config_name == "moms_adamd") {
        c.device_rule = DeviceRule::Adam;
        c.server_rule = ServerRule::Momentum;
        c.control_variates = false;
    } else if (config_name == "fedpeptao") {
        c.device_rule = DeviceRule::Adam;
        c.server_rule = ServerRule::Momentum;
        c.control_variates = true;
    } else {
        throw UnknownConfig("make_optimizer: unknown config '" + config_name + "'");
    }
    return c;
}

DeviceUpdate local_update(const Backbone& b, PromptState& prompts,
                          std::span<const std::size_t> sync_layers,
                          std::span<const Example> shard, long steps, std::size_t batch_size,
                          DeviceRule rule, const AdamHyper& hyper, std::uint64_t batch_seed,
                          std::size_t device_id) {
    if (shard.empty()) throw EmptyShard("local_update: device shard is empty");
    if (steps < 1) throw InvalidParams("local_update: need at least one step");
    if (batch_size < 1) throw InvalidParams("local_update: batch size must be positive");

    Vec w = prompts.flatten();
    const Vec start = w;

    AdamState adam(w.size(), hyper);
    Vec momentum(w.size(), 0.0);  // SgdMomentum buffer, reset every round

    Rng rng(batch_seed);
    std::vector<Example> batch;
    for (long t = 0; t < steps; ++t) {
        batch.clear();
        for (std::size_t i = 0; i < batch_size; ++i)
            batch.push_back(shard[static_cast<std::size_t>(rng.below(shard.size()))]);

        const PromptState cur = PromptState::unflatten(w, b.num_layers, b.prompt_dim);
        const Vec g = prompt_gradient(b, cur, batch).flatten();

        switch (rule) {
            case DeviceRule::Sgd:
                for (std::size_t i = 0; i < w.size(); ++i) w[i] -= hyper.alpha * g[i];
                break;
            case DeviceRule::SgdMomentum:
                for (std::size_t i = 0; i < w.size(); ++i) {
                    momentum[i] = hyper.beta1 * momentum[i] + g[i];
                    w[i] -= hyper.alpha * momentum[i];
                }
                break;
            case DeviceRule::Adam:
                adam_step(w, adam, g);
                break;
        }
    }

    prompts = PromptState::unflatten(w, b.num_layers, b.prompt_dim);

    DeviceUpdate up;
    up.device_id = device_id;
    up.steps_taken = steps;
    up.sample_count = shard.size();
    up.delta.reserve(sync_layers.size() * b.prompt_dim);
    for (const std::size_t l : sync_layers)
        for (std::size_t j = 0; j < b.prompt_dim; ++j) {
            const std::size_t idx = l * b.prompt_dim + j;
            up.delta.push_back(w[idx] - start[idx]);
        }
    return up;
}

const Vec& ServerOptState::variate(std::size_t device_id) const {
    static const Vec empty;
    const auto it = c_per_device.find(device_id);
    if (it != c_per_device.end()) return it->second;
    return empty;
}

void ServerOptState::project(std::span<const std::size_t> keep) {
    const auto shrink = [&](Vec& v) {
        Vec out;
        out.reserve(keep.size());
        for (const std::size_t i : keep) out.push_back(v[i]);
        v = std::move(out);
    };
    shrink(c_global);
    shrink(momentum);
    shrink(prev_delta);
    for (auto& [id, c] : c_per_device) shrink(c);
}

namespace {

Vec aggregate(std::span<const DeviceUpdate> updates, const std::vector<const Vec*>& vecs) {
    double total = 0.0;
    for (const auto& u : updates) total += static_cast<double>(u.sample_count);
    if (total <= 0.0) throw ZeroTotalSamples("server_round: zero total sample count");
    Vec out(vecs.front()->size(), 0.0);
    for (std::size_t i = 0; i < updates.size(); ++i) {
        const double w = static_cast<double>(updates[i].sample_count) / total;
        const Vec& v = *vecs[i];
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += w * v[k];
    }
    return out;
}

}  // namespace

void server_round(ServerOptState& st, std::span<const DeviceUpdate> updates,
                  std::span<const std::size_t> sampled, std::size_t total_devices, Vec& global_w,
                  const OptimizerConfig& opt) {
    const std::size_t dim = st.dim();
    if (global_w.size() != dim) throw DimensionMismatch("server_round: global_w size mismatch");
    if (updates.size() != sampled.size())
        throw MissingUpdate("server_round: updates must exactly cover the sampled set");
    for (std::size_t i = 0; i < updates.size(); ++i) {
        if (updates[i].device_id != sampled[i])
            throw MissingUpdate("server_round: update/sample id mismatch");
        if (updates[i].delta.size() != dim)
            throw DimensionMismatch("server_round: update dimension mismatch");
    }
    if (updates.empty()) throw EmptyInput("server_round: no updates");

    std::vector<const Vec*> deltas;
    deltas.reserve(updates.size());
    for (const auto& u : updates) deltas.push_back(&u.delta);
    const Vec agg_delta = aggregate(updates, deltas);

    if (opt.control_variates) {
        // c_i^r = c_i^{r-1} - c_g^{r-1} - (1 / (T_i * alpha)) * dw_i^r
        std::vector<Vec> new_c(updates.size());
        std::vector<Vec> dc(updates.size());
        for (std::size_t i = 0; i < updates.size(); ++i) {
            const Vec& prev_c = st.variate(updates[i].device_id);
            const double scale =
                1.0 / (static_cast<double>(updates[i].steps_taken) * st.hyper.alpha);
            Vec ci(dim, 0.0);
            for (std::size_t k = 0; k < dim; ++k) {
                const double prev = prev_c.empty() ? 0.0 : prev_c[k];
                ci[k] = prev - st.c_global[k] - scale * updates[i].delta[k];
            }
            dc[i].resize(dim);
            for (std::size_t k = 0; k < dim; ++k)
                dc[i][k] = ci[k] - (prev_c.empty() ? 0.0 : prev_c[k]);
            new_c[i] = std::move(ci);
        }
        std::vector<const Vec*> dc_ptrs;
        for (const auto& v : dc) dc_ptrs.push_back(&v);
        const Vec agg_dc = aggregate(updates, dc_ptrs);
        const double part = static_cast<double>(sampled.size()) / static_cast<double>(total_devices);
        for (std::size_t k = 0; k < dim; ++k) st.c_global[k] += agg_dc[k] * part;
        for (std::size_t i = 0; i < updates.size(); ++i)
            st.c_per_device[updates[i].device_id] = std::move(new_c[i]);
    }

    if (opt.server_rule == ServerRule::Average) {
        for (std::size_t k = 0; k < dim; ++k) global_w[k] += agg_delta[k];
    } else {
        Vec pseudo_grad(dim);
        if (st.hyper.pseudo_grad_mode == PseudoGradMode::Paper) {
            for (std::size_t k = 0; k < dim; ++k) pseudo_grad[k] = st.prev_delta[k] - agg_delta[k];
        } else {
            for (std::size_t k = 0; k < dim; ++k) pseudo_grad[k] = -agg_delta[k];
        }

        std::vector<Vec> per_device_w(updates.size());
        std::vector<Vec> per_device_m(updates.size());
        for (std::size_t i = 0; i < updates.size(); ++i) {
            const Vec* ci = opt.control_variates ? &st.variate(updates[i].device_id) : nullptr;
            per_device_m[i].resize(dim);
            per_device_w[i].resize(dim);
            for (std::size_t k = 0; k < dim; ++k) {
                const double variate_term =
                    ci ? st.c_global[k] - (ci->empty() ? 0.0 : (*ci)[k]) : 0.0;
                per_device_m[i][k] = st.hyper.beta * st.momentum[k] +
                                     (1.0 - st.hyper.beta) * pseudo_grad[k] + variate_term;
                per_device_w[i][k] = global_w[k] - st.hyper.eta * per_device_m[i][k];
            }
        }
        std::vector<const Vec*> wp, mp;
        for (const auto& v : per_device_w) wp.push_back(&v);
        for (const auto& v : per_device_m) mp.push_back(&v);
        global_w = aggregate(updates, wp);
        st.momentum = aggregate(updates, mp);
    }

    st.prev_delta = agg_delta;
    st.round += 1;
}

}  // namespace fedpt

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "fedpt/prompt_model.hpp"

namespace fedpt {

struct AdamHyper {
    double alpha = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment buffers; reset to zero at the start of every local
// round so no optimizer state ever travels between device and server.
struct AdamState {
    Vec m;
    Vec v;
    long t = 0;
    AdamHyper hyper;

    explicit AdamState(std::size_t dim = 0, AdamHyper h = {})
        : m(dim, 0.0), v(dim, 0.0), hyper(h) {}
};

// One bias-corrected Adam step:
//   m <- b1 m + (1-b1) g        mhat = m / (1 - b1^t)
//   v <- b2 v + (1-b2) g^2      vhat = v / (1 - b2^t)
//   w <- w - alpha * mhat / (sqrt(vhat) + eps)
void adam_step(Vec& w, AdamState& s, std::span<const double> g);

enum class DeviceRule { Sgd, SgdMomentum, Adam };
enum class ServerRule { Average, Momentum };

struct OptimizerConfig {
    std::string name;
    DeviceRule device_rule = DeviceRule::Adam;
    ServerRule server_rule = ServerRule::Momentum;
    bool control_variates = false;
};

// Named optimizer setups: fedavg, momd, moms, moms_con, adamd, moms_adamd,
// fedpeptao. Throws UnknownConfig otherwise.
OptimizerConfig make_optimizer(const std::string& config_name);

// What a device uploads after its local round: the displacement of the
// synchronized coordinates plus the bookkeeping the server needs.
struct DeviceUpdate {
    std::size_t device_id = 0;
    Vec delta;                 // w^{T} - w^{0} on synchronized coordinates
    long steps_taken = 0;      // T_i
    std::size_t sample_count = 0;  // n_i
};

// Runs `steps` local optimizer steps over seeded minibatches on the full
// prompt set. The synchronized layers' displacement is reported; every other
// coordinate is mutated in place and stays on the device.
DeviceUpdate local_update(const Backbone& b, PromptState& prompts,
                          std::span<const std::size_t> sync_layers,
                          std::span<const Example> shard, long steps, std::size_t batch_size,
                          DeviceRule rule, const AdamHyper& hyper, std::uint64_t batch_seed,
                          std::size_t device_id);

// Whether the server pseudo-gradient is the round-over-round delta difference
// or the negated aggregated delta (the two readings of that update rule).
enum class PseudoGradMode { Paper, NegDelta };

struct ServerHyper {
    double beta = 0.9;    // server momentum
    double eta = 1e-3;    // server learning rate (constant schedule)
    double alpha = 1e-2;  // device step size, reused by the variate update
    PseudoGradMode pseudo_grad_mode = PseudoGradMode::Paper;
};

// Server-held optimizer state over the synchronized coordinates.
struct ServerOptState {
    std::map<std::size_t, Vec> c_per_device;
    Vec c_global;
    Vec momentum;
    Vec prev_delta;
    long round = 0;
    ServerHyper hyper;

    explicit ServerOptState(std::size_t dim = 0, ServerHyper h = {})
        : c_global(dim, 0.0), momentum(dim, 0.0), prev_delta(dim, 0.0), hyper(h) {}

    const Vec& variate(std::size_t device_id) const;
    std::size_t dim() const { return c_global.size(); }

    // Keeps only the given coordinates, in order; applied when the
    // synchronized parameter set shrinks to the selected layers.
    void project(std::span<const std::size_t> keep);
};

// One server aggregation step. Updates global_w in place and advances the
// state. `sampled` must exactly match the updates' device ids. Aggregations
// over the sampled set use n_i / sum n_j weights.
void server_round(ServerOptState& st, std::span<const DeviceUpdate> updates,
                  std::span<const std::size_t> sampled, std::size_t total_devices, Vec& global_w,
                  const OptimizerConfig& opt);

}  // namespace fedpt

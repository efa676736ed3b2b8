#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "fedpt/adaptive_optim.hpp"
#include "fedpt/datasets.hpp"
#include "fedpt/layer_selection.hpp"
#include "fedpt/rng.hpp"

namespace fedpt {

struct ModelDims {
    std::size_t layers = 6;
    std::size_t hidden_dim = 16;
    std::size_t prompt_dim = 4;
    std::uint64_t init_seed = 11;
};

struct FederationConfig {
    std::size_t num_devices = 100;
    std::size_t sample_size = 10;
    std::size_t rounds = 0;
    std::size_t warmup_rounds = 5;  // t: selection fires at the end of round t
    long local_steps = 10;
    std::size_t local_batch_size = 16;
    std::uint64_t seed = 0;
    std::string optimizer = "fedpeptao";
    AdamHyper device_hyper;
    ServerHyper server_hyper;
    ScoringConfig scoring;
    double fd_step = 1e-4;
    int lipschitz_trials = 64;
    double radius_floor = 1e-3;
    ModelDims model;

    void validate() const;
};

enum class Phase { Warmup, Selected };

// Exact parameter counts moved per round, one entry per direction.
struct CommLedger {
    std::vector<std::uint64_t> uplink_per_round;
    std::vector<std::uint64_t> downlink_per_round;
    std::uint64_t total_uplink = 0;
    std::uint64_t total_downlink = 0;
};

struct RoundMetrics {
    std::size_t round = 0;  // 1-based
    Phase phase = Phase::Warmup;
    double weighted_accuracy = 0.0;  // composite models on holdout shards
    double weighted_loss = 0.0;
    double global_accuracy = 0.0;  // synchronized slice only, zeros elsewhere
    double global_loss = 0.0;
    std::uint64_t uplink_params = 0;
    std::uint64_t downlink_params = 0;
    std::vector<std::size_t> sampled;
};

struct ExperimentResult {
    std::vector<RoundMetrics> rounds;
    std::optional<SelectionOutcome> selection;
    bool selection_applied = false;  // false when the run never left warmup
    CommLedger ledger;
};

// Uniform sample of k distinct device ids, sorted; deterministic under the
// rng state.
std::vector<std::size_t> sample_devices(Rng& rng, std::size_t num_devices, std::size_t k);

// Owns every piece of mutable round state: device prompts, server optimizer
// state over the synchronized slice, ledger and metrics. Rounds are strictly
// sequential.
class Federation {
public:
    Federation(FederationConfig cfg, std::vector<DeviceShard> shards);

    RoundMetrics run_round(std::size_t round_index);  // 1-based, called in order
    ExperimentResult run_all();

    const FederationConfig& config() const { return cfg_; }
    const Backbone& backbone() const { return backbone_; }
    const std::vector<std::size_t>& sync_layers() const { return sync_layers_; }
    const PromptState& device_prompts(std::size_t id) const { return device_prompts_[id]; }
    const Vec& global_sync() const { return global_sync_; }
    const ServerOptState& server_state() const { return server_state_; }
    const std::optional<SelectionOutcome>& selection() const { return selection_; }

    // Composite model a device evaluates with: global values on synchronized
    // layers, its private prompts elsewhere.
    PromptState composite_prompts(std::size_t device_id) const;

private:
    void apply_selection(const SelectionResult& result);
    Vec sync_coords() const;

    FederationConfig cfg_;
    Backbone backbone_;
    std::vector<DeviceShard> shards_;
    std::vector<PromptState> device_prompts_;
    std::vector<std::size_t> sync_layers_;  // all layers during warmup, SL afterwards
    Vec global_sync_;                       // global prompts on the synchronized slice
    ServerOptState server_state_;
    OptimizerConfig opt_;
    std::optional<SelectionOutcome> selection_;
    bool selection_applied_ = false;
    CommLedger ledger_;
    std::size_t next_round_ = 1;
};

ExperimentResult run_experiment(const FederationConfig& cfg, std::vector<DeviceShard> shards);

}  // namespace fedpt

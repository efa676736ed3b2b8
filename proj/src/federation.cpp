#include "fedpt/federation.hpp"

#include <algorithm>

#include "fedpt/rng.hpp"

namespace fedpt {

namespace {

constexpr std::uint64_t kSampleTag = 0x5A3D;
constexpr std::uint64_t kBatchTag = 0xBA7C;
constexpr std::uint64_t kSelectTag = 0x5E1E;

}  // namespace

void FederationConfig::validate() const {
    if (num_devices < 1) throw InvalidParams("config: need at least one device");
    if (sample_size < 1 || sample_size > num_devices)
        throw InvalidParams("config: need 1 <= sample_size <= num_devices");
    if (rounds < 1) throw InvalidParams("config: need at least one round");
    if (warmup_rounds < 1 || warmup_rounds > rounds)
        throw InvalidParams("config: need 1 <= warmup_rounds <= rounds");
    if (local_steps < 1) throw InvalidParams("config: need at least one local step");
    if (local_batch_size < 1) throw InvalidParams("config: batch size must be positive");
    if (model.layers < 1 || model.hidden_dim < 1 || model.prompt_dim < 1)
        throw InvalidParams("config: model dimensions must be positive");
    make_optimizer(optimizer);  // throws UnknownConfig
}

std::vector<std::size_t> sample_devices(Rng& rng, std::size_t num_devices, std::size_t k) {
    if (k < 1 || k > num_devices) throw InvalidK("sample_devices: need 1 <= k <= num_devices");
    std::vector<std::size_t> out;
    out.reserve(k);
    for (const int id :
         rng.sample_without_replacement(static_cast<int>(num_devices), static_cast<int>(k)))
        out.push_back(static_cast<std::size_t>(id));
    return out;
}

Federation::Federation(FederationConfig cfg, std::vector<DeviceShard> shards)
    : cfg_(std::move(cfg)), shards_(std::move(shards)) {
    cfg_.validate();
    if (shards_.size() != cfg_.num_devices)
        throw DimensionMismatch("Federation: one shard per device required");

    std::size_t input_dim = 0;
    int max_label = -1;
    for (const auto& s : shards_) {
        if (s.train.empty()) throw EmptyShard("Federation: empty train shard");
        for (const auto& ex : s.train) max_label = std::max(max_label, ex.label);
        for (const auto& ex : s.holdout) max_label = std::max(max_label, ex.label);
        input_dim = s.train.front().features.size();
    }

    backbone_ = make_backbone(cfg_.model.layers, input_dim, cfg_.model.hidden_dim,
                              cfg_.model.prompt_dim, static_cast<std::size_t>(max_label) + 1,
                              cfg_.model.init_seed);

    device_prompts_.assign(cfg_.num_devices, backbone_.zero_prompts());
    sync_layers_.resize(cfg_.model.layers);
    for (std::size_t l = 0; l < cfg_.model.layers; ++l) sync_layers_[l] = l;
    global_sync_.assign(cfg_.model.layers * cfg_.model.prompt_dim, 0.0);

    ServerHyper sh = cfg_.server_hyper;
    sh.alpha = cfg_.device_hyper.alpha;  // line-14 normalization uses the device step size
    server_state_ = ServerOptState(global_sync_.size(), sh);
    opt_ = make_optimizer(cfg_.optimizer);
}

PromptState Federation::composite_prompts(std::size_t device_id) const {
    PromptState p = device_prompts_[device_id];
    std::size_t pos = 0;
    for (const std::size_t l : sync_layers_)
        for (std::size_t j = 0; j < backbone_.prompt_dim; ++j) p.layers[l][j] = global_sync_[pos++];
    return p;
}

void Federation::apply_selection(const SelectionResult& result) {
    // Map each surviving layer to its coordinate block in the warmup layout.
    std::vector<std::size_t> keep;
    keep.reserve(result.selected_layers.size() * backbone_.prompt_dim);
    for (const std::size_t l : result.selected_layers)
        for (std::size_t j = 0; j < backbone_.prompt_dim; ++j)
            keep.push_back(l * backbone_.prompt_dim + j);

    Vec new_global;
    new_global.reserve(keep.size());
    for (const std::size_t i : keep) new_global.push_back(global_sync_[i]);
    global_sync_ = std::move(new_global);
    server_state_.project(keep);
    sync_layers_ = result.selected_layers;
    selection_applied_ = true;
}

RoundMetrics Federation::run_round(std::size_t round_index) {
    if (round_index != next_round_ || round_index > cfg_.rounds)
        throw InvalidParams("run_round: rounds must be executed sequentially from 1");
    next_round_ += 1;

    RoundMetrics m;
    m.round = round_index;
    m.phase = round_index <= cfg_.warmup_rounds ? Phase::Warmup : Phase::Selected;

    Rng sample_rng(mix_seed(cfg_.seed, kSampleTag, round_index));
    m.sampled = sample_devices(sample_rng, cfg_.num_devices, cfg_.sample_size);

    const std::size_t sync_count = global_sync_.size();

    // distribute -> local update -> upload
    std::vector<DeviceUpdate> updates;
    updates.reserve(m.sampled.size());
    for (const std::size_t id : m.sampled) {
        PromptState& prompts = device_prompts_[id];
        std::size_t pos = 0;
        for (const std::size_t l : sync_layers_)
            for (std::size_t j = 0; j < backbone_.prompt_dim; ++j)
                prompts.layers[l][j] = global_sync_[pos++];
        m.downlink_params += sync_count;

        updates.push_back(local_update(
            backbone_, prompts, sync_layers_, shards_[id].train, cfg_.local_steps,
            cfg_.local_batch_size, opt_.device_rule, cfg_.device_hyper,
            mix_seed(mix_seed(cfg_.seed, kBatchTag, round_index), id), id));
        m.uplink_params += sync_count;
    }

    server_round(server_state_, updates, m.sampled, cfg_.num_devices, global_sync_, opt_);

    // The selection pass fires exactly once, at the end of warmup, on the
    // aggregated round-t model; in any later round the synchronized slice is
    // the selected layers.
    if (round_index == cfg_.warmup_rounds) {
        const PromptState global_full =
            PromptState::unflatten(global_sync_, backbone_.num_layers, backbone_.prompt_dim);
        std::vector<SelectionDeviceView> views(cfg_.num_devices);
        for (std::size_t d = 0; d < cfg_.num_devices; ++d) {
            views[d].backbone = &backbone_;
            views[d].prompts = global_full;
            views[d].data = shards_[d].train;
        }
        SelectionConfig sel;
        sel.scoring = cfg_.scoring;
        sel.fd_step = cfg_.fd_step;
        sel.lipschitz_trials = cfg_.lipschitz_trials;
        sel.radius_floor = cfg_.radius_floor;
        sel.seed = mix_seed(cfg_.seed, kSelectTag);
        selection_ = run_selection(views, backbone_.zero_prompts(), sel);
        if (round_index < cfg_.rounds) apply_selection(selection_->result);
    }

    // Weighted evaluation of the per-device composite models, plus the
    // global-only view (synchronized slice with zero private prompts).
    PromptState global_only = backbone_.zero_prompts();
    {
        std::size_t pos = 0;
        for (const std::size_t l : sync_layers_)
            for (std::size_t j = 0; j < backbone_.prompt_dim; ++j)
                global_only.layers[l][j] = global_sync_[pos++];
    }
    double wsum = 0.0, acc = 0.0, lo = 0.0, gacc = 0.0, glo = 0.0;
    for (std::size_t d = 0; d < cfg_.num_devices; ++d) {
        if (shards_[d].holdout.empty()) continue;
        const double w = static_cast<double>(shards_[d].holdout.size());
        const EvalResult er = evaluate(backbone_, composite_prompts(d), shards_[d].holdout);
        const EvalResult gr = evaluate(backbone_, global_only, shards_[d].holdout);
        wsum += w;
        acc += w * er.accuracy;
        lo += w * er.mean_loss;
        gacc += w * gr.accuracy;
        glo += w * gr.mean_loss;
    }
    if (wsum > 0.0) {
        m.weighted_accuracy = acc / wsum;
        m.weighted_loss = lo / wsum;
        m.global_accuracy = gacc / wsum;
        m.global_loss = glo / wsum;
    }

    ledger_.uplink_per_round.push_back(m.uplink_params);
    ledger_.downlink_per_round.push_back(m.downlink_params);
    ledger_.total_uplink += m.uplink_params;
    ledger_.total_downlink += m.downlink_params;
    return m;
}

ExperimentResult Federation::run_all() {
    ExperimentResult res;
    res.rounds.reserve(cfg_.rounds);
    for (std::size_t r = 1; r <= cfg_.rounds; ++r) res.rounds.push_back(run_round(r));
    res.selection = selection_;
    res.selection_applied = selection_applied_;
    res.ledger = ledger_;
    return res;
}

ExperimentResult run_experiment(const FederationConfig& cfg, std::vector<DeviceShard> shards) {
    Federation fed(cfg, std::move(shards));
    return fed.run_all();
}

}  // namespace fedpt

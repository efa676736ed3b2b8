#include <cmath>
#include <map>

#include "doctest.h"
#include "fedpt/federation.hpp"
#include "fedpt/rng.hpp"

using namespace fedpt;

namespace {

FederationConfig small_config(const std::string& optimizer, std::size_t rounds = 8,
                              std::size_t warmup = 3) {
    FederationConfig cfg;
    cfg.num_devices = 6;
    cfg.sample_size = 3;
    cfg.rounds = rounds;
    cfg.warmup_rounds = warmup;
    cfg.local_steps = 4;
    cfg.local_batch_size = 8;
    cfg.seed = 77;
    cfg.optimizer = optimizer;
    cfg.scoring.score_batch_size = 8;
    cfg.lipschitz_trials = 8;
    cfg.model.layers = 4;
    cfg.model.hidden_dim = 8;
    cfg.model.prompt_dim = 3;
    return cfg;
}

std::vector<DeviceShard> small_shards(std::size_t devices, std::uint64_t seed = 12) {
    const Dataset d = synth_task(seed, 3, 5, 40 * devices, 2.0);
    PartitionSpec spec;
    spec.num_devices = devices;
    spec.seed = seed + 1;
    return dirichlet_partition(d, spec);
}

}  // namespace

TEST_CASE("sample_devices: full draw, determinism, uniformity") {
    Rng a(5), b(5);
    const auto all = sample_devices(a, 7, 7);
    CHECK(all == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6});

    Rng c(5);
    CHECK(sample_devices(b, 20, 6) == sample_devices(c, 20, 6));

    // k = 1 frequencies over 10,000 draws stay within 3 sigma of uniform.
    const std::size_t M = 8;
    std::vector<int> hits(M, 0);
    Rng r(99);
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) hits[sample_devices(r, M, 1)[0]] += 1;
    const double p = 1.0 / static_cast<double>(M);
    const double sigma = std::sqrt(draws * p * (1.0 - p));
    for (int h : hits) CHECK(std::abs(h - draws * p) <= 3.0 * sigma);

    Rng z(1);
    CHECK_THROWS_AS(sample_devices(z, 5, 6), InvalidK);
    CHECK_THROWS_AS(sample_devices(z, 5, 0), InvalidK);
}

TEST_CASE("run_round: fedavg round 1 equals manual weighted averaging") {
    const FederationConfig cfg = small_config("fedavg");
    auto shards = small_shards(cfg.num_devices);
    Federation fed(cfg, shards);

    // Replay the device updates against a parallel federation to capture the
    // deltas, then fold them by shard size.
    Federation probe(cfg, shards);
    const RoundMetrics m = fed.run_round(1);

    std::vector<Vec> deltas;
    Vec weights;
    for (const std::size_t id : m.sampled) {
        PromptState prompts = probe.backbone().zero_prompts();
        const DeviceUpdate up = local_update(
            probe.backbone(), prompts, probe.sync_layers(), shards[id].train, cfg.local_steps,
            cfg.local_batch_size, DeviceRule::Sgd, cfg.device_hyper,
            mix_seed(mix_seed(cfg.seed, 0xBA7C, 1), id), id);
        deltas.push_back(up.delta);
        weights.push_back(static_cast<double>(shards[id].train.size()));
    }
    const Vec expect = weighted_average(deltas, weights);
    for (std::size_t k = 0; k < expect.size(); ++k)
        CHECK(fed.global_sync()[k] == doctest::Approx(expect[k]).epsilon(1e-12));
}

TEST_CASE("run_experiment: determinism and phase bookkeeping") {
    const FederationConfig cfg = small_config("fedpeptao");
    auto shards = small_shards(cfg.num_devices);

    const ExperimentResult a = run_experiment(cfg, shards);
    const ExperimentResult b = run_experiment(cfg, shards);
    REQUIRE(a.rounds.size() == cfg.rounds);
    for (std::size_t r = 0; r < cfg.rounds; ++r) {
        CHECK(a.rounds[r].weighted_accuracy == b.rounds[r].weighted_accuracy);
        CHECK(a.rounds[r].weighted_loss == b.rounds[r].weighted_loss);
        CHECK(a.rounds[r].sampled == b.rounds[r].sampled);
        CHECK(a.rounds[r].phase ==
              (r + 1 <= cfg.warmup_rounds ? Phase::Warmup : Phase::Selected));
    }
    REQUIRE(a.selection.has_value());
    CHECK(a.selection_applied);
    CHECK(a.selection->per_device.size() == cfg.num_devices);
}

TEST_CASE("run_experiment: warmup-only run never applies selection") {
    FederationConfig cfg = small_config("fedavg", 3, 3);
    auto shards = small_shards(cfg.num_devices);
    const ExperimentResult res = run_experiment(cfg, shards);
    CHECK(res.selection.has_value());
    CHECK_FALSE(res.selection_applied);
    for (const auto& m : res.rounds) CHECK(m.phase == Phase::Warmup);
    // Full prompt payload every round.
    const std::uint64_t full = cfg.model.layers * cfg.model.prompt_dim * cfg.sample_size;
    for (const auto& m : res.rounds) {
        CHECK(m.uplink_params == full);
        CHECK(m.downlink_params == full);
    }
}

TEST_CASE("ledger: payload counts follow the synchronized slice exactly") {
    const FederationConfig cfg = small_config("fedpeptao", 8, 3);
    auto shards = small_shards(cfg.num_devices);
    Federation fed(cfg, shards);
    std::vector<RoundMetrics> metrics;
    for (std::size_t r = 1; r <= cfg.rounds; ++r) metrics.push_back(fed.run_round(r));

    const std::uint64_t d_p = cfg.model.prompt_dim;
    const std::uint64_t full = cfg.model.layers * d_p * cfg.sample_size;
    REQUIRE(fed.selection().has_value());
    const std::size_t picked = fed.selection()->result.selected_layers.size();
    const std::uint64_t after = picked * d_p * cfg.sample_size;

    for (const auto& m : metrics) {
        const bool warm = m.round <= cfg.warmup_rounds;
        CHECK(m.uplink_params == (warm ? full : after));
        CHECK(m.downlink_params == (warm ? full : after));
    }
    // Degenerate selection (all layers) keeps the warmup payload; any proper
    // subset shrinks it by exactly the unselected layers' parameters.
    if (picked < cfg.model.layers) {
        CHECK(after < full);
        CHECK(after * cfg.model.layers == full * picked);
    } else {
        CHECK(after == full);
    }
}

TEST_CASE("unsampled devices and their server variates stay untouched") {
    const FederationConfig cfg = small_config("fedpeptao", 4, 2);
    auto shards = small_shards(cfg.num_devices);
    Federation fed(cfg, shards);

    const RoundMetrics m1 = fed.run_round(1);
    // Snapshot everything after round 1.
    std::map<std::size_t, Vec> prompts_before;
    for (std::size_t d = 0; d < cfg.num_devices; ++d)
        prompts_before[d] = fed.device_prompts(d).flatten();
    std::map<std::size_t, Vec> c_before;
    for (std::size_t d = 0; d < cfg.num_devices; ++d) c_before[d] = fed.server_state().variate(d);

    const RoundMetrics m2 = fed.run_round(2);
    for (std::size_t d = 0; d < cfg.num_devices; ++d) {
        const bool sampled =
            std::find(m2.sampled.begin(), m2.sampled.end(), d) != m2.sampled.end();
        if (sampled) continue;
        CHECK(fed.device_prompts(d).flatten() == prompts_before[d]);
        CHECK(fed.server_state().variate(d) == c_before[d]);
    }
    CHECK(m1.round == 1);
    CHECK(m2.round == 2);
}

TEST_CASE("weighted accuracy equals an independent recount") {
    const FederationConfig cfg = small_config("moms_adamd", 5, 2);
    auto shards = small_shards(cfg.num_devices);
    Federation fed(cfg, shards);
    RoundMetrics last;
    for (std::size_t r = 1; r <= cfg.rounds; ++r) last = fed.run_round(r);

    double total = 0.0, correct = 0.0, loss_sum = 0.0;
    for (std::size_t d = 0; d < cfg.num_devices; ++d) {
        const PromptState composite = fed.composite_prompts(d);
        for (const auto& ex : shards[d].holdout) {
            const Vec logits = forward(fed.backbone(), composite, ex).logits;
            std::size_t arg = 0;
            for (std::size_t c = 1; c < logits.size(); ++c)
                if (logits[c] > logits[arg]) arg = c;
            if (static_cast<int>(arg) == ex.label) correct += 1.0;
            loss_sum += loss(logits, ex.label);
            total += 1.0;
        }
    }
    CHECK(last.weighted_accuracy == doctest::Approx(correct / total).epsilon(1e-12));
    CHECK(last.weighted_loss == doctest::Approx(loss_sum / total).epsilon(1e-12));
}

TEST_CASE("private non-selected prompts never leave the device") {
    // After selection, the uplink counts match |SL| * d_p exactly, so any
    // non-selected coordinate movement stays local; additionally the device
    // keeps updating those coordinates when sampled.
    FederationConfig cfg = small_config("fedpeptao", 10, 2);
    cfg.server_hyper.eta = 0.5;
    auto shards = small_shards(cfg.num_devices);
    Federation fed(cfg, shards);
    std::vector<RoundMetrics> ms;
    for (std::size_t r = 1; r <= cfg.rounds; ++r) ms.push_back(fed.run_round(r));

    REQUIRE(fed.selection().has_value());
    const auto& picked = fed.selection()->result.selected_layers;
    if (picked.size() < cfg.model.layers) {
        const std::uint64_t expect = picked.size() * cfg.model.prompt_dim * cfg.sample_size;
        CHECK(ms.back().uplink_params == expect);

        // Some device that was sampled after selection must have moved a
        // private coordinate away from its warmup value.
        bool any_private_motion = false;
        for (std::size_t d = 0; d < cfg.num_devices && !any_private_motion; ++d) {
            for (std::size_t l = 0; l < cfg.model.layers; ++l) {
                if (std::find(picked.begin(), picked.end(), l) != picked.end()) continue;
                for (double v : fed.device_prompts(d).layers[l])
                    if (v != 0.0) any_private_motion = true;
            }
        }
        CHECK(any_private_motion);
    }
}

TEST_CASE("config validation") {
    FederationConfig cfg = small_config("fedavg");
    cfg.sample_size = 9;  // > num_devices
    CHECK_THROWS_AS(cfg.validate(), InvalidParams);
    cfg = small_config("fedavg");
    cfg.warmup_rounds = cfg.rounds + 1;
    CHECK_THROWS_AS(cfg.validate(), InvalidParams);
    cfg = small_config("nope");
    CHECK_THROWS_AS(cfg.validate(), UnknownConfig);
}

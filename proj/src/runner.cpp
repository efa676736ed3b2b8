#include "fedpt/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "fedpt/rng.hpp"
#include "json.hpp"

namespace fedpt {

namespace {

constexpr std::uint64_t kPartitionTag = 0x9A27;

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

const char* phase_name(Phase p) { return p == Phase::Warmup ? "warmup" : "selected"; }

}  // namespace

SweepResult run_sweep(const RunConfig& cfg) {
    const Dataset dataset = build_dataset(cfg.dataset);

    SweepResult out;
    double best_anywhere = 0.0;
    for (const std::string& opt : cfg.sweep) {
        for (const std::uint64_t seed : cfg.seeds) {
            FederationConfig fed = cfg.fed;
            fed.optimizer = opt;
            fed.seed = seed;

            PartitionSpec ps;
            ps.num_devices = fed.num_devices;
            ps.label_alpha = cfg.label_alpha;
            ps.size_alpha = cfg.size_alpha;
            ps.holdout_fraction = cfg.holdout_fraction;
            ps.seed = mix_seed(seed, kPartitionTag);

            RunRecord rec;
            rec.run_id = opt + "-s" + std::to_string(seed);
            rec.optimizer = opt;
            rec.seed = seed;
            rec.result = run_experiment(fed, dirichlet_partition(dataset, ps));

            for (const RoundMetrics& m : rec.result.rounds) {
                MetricsRow row;
                row.run_id = rec.run_id;
                row.optimizer = opt;
                row.seed = seed;
                row.round = m.round;
                row.phase = m.phase;
                row.accuracy = m.weighted_accuracy;
                row.loss = m.weighted_loss;
                row.uplink_params = m.uplink_params;
                row.downlink_params = m.downlink_params;
                best_anywhere = std::max(best_anywhere, m.weighted_accuracy);
                out.rows.push_back(std::move(row));
            }
            out.runs.push_back(std::move(rec));
        }
    }
    out.target_accuracy = cfg.target_fraction * best_anywhere;
    return out;
}

std::optional<std::size_t> rounds_to_target(const std::vector<MetricsRow>& rows,
                                            const std::string& run_id, double target) {
    for (const MetricsRow& r : rows)
        if (r.run_id == run_id && r.accuracy >= target) return r.round;
    return std::nullopt;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::string out = "run_id,optimizer,seed,round,phase,accuracy,loss,uplink_params,downlink_params\n";
    for (const MetricsRow& r : rows) {
        out += r.run_id;
        out += ',';
        out += r.optimizer;
        out += ',';
        out += std::to_string(r.seed);
        out += ',';
        out += std::to_string(r.round);
        out += ',';
        out += phase_name(r.phase);
        out += ',';
        out += fmt_double(r.accuracy);
        out += ',';
        out += fmt_double(r.loss);
        out += ',';
        out += std::to_string(r.uplink_params);
        out += ',';
        out += std::to_string(r.downlink_params);
        out += '\n';
    }
    return out;
}

std::string selection_json(const SweepResult& sweep) {
    nlohmann::json root;
    for (const RunRecord& rec : sweep.runs) {
        nlohmann::json entry;
        entry["applied"] = rec.result.selection_applied;
        entry["final_phase"] = rec.result.selection_applied ? "selected" : "warmup";
        if (rec.result.selection) {
            const SelectionOutcome& sel = *rec.result.selection;
            entry["result"] = {{"selected_layers", sel.result.selected_layers},
                               {"global_ratio", sel.result.global_ratio},
                               {"selected_param_fraction", sel.result.selected_param_fraction}};
            nlohmann::json devs = nlohmann::json::array();
            for (const DeviceSelectionRecord& d : sel.per_device) {
                devs.push_back({{"device", d.device_id},
                                {"ratio", d.diagnostics.ratio},
                                {"gap_index", d.diagnostics.gap_index},
                                {"param_count", d.diagnostics.hessian_eigs.size()},
                                {"lipschitz", d.diagnostics.lipschitz},
                                {"scores", d.scores.scores},
                                {"sample_count", d.scores.sample_count}});
            }
            entry["devices"] = std::move(devs);
        }
        root[rec.run_id] = std::move(entry);
    }
    return root.dump(2);
}

std::string summary_json(const RunConfig& cfg, const SweepResult& sweep) {
    nlohmann::json runs = nlohmann::json::array();
    std::map<std::string, std::vector<double>> finals, bests, rtts;
    const double unreached = static_cast<double>(cfg.fed.rounds + 1);

    for (const RunRecord& rec : sweep.runs) {
        double final_acc = 0.0, best_acc = 0.0, final_global = 0.0;
        if (!rec.result.rounds.empty()) {
            final_acc = rec.result.rounds.back().weighted_accuracy;
            final_global = rec.result.rounds.back().global_accuracy;
            for (const RoundMetrics& m : rec.result.rounds)
                best_acc = std::max(best_acc, m.weighted_accuracy);
        }
        const auto rtt = rounds_to_target(sweep.rows, rec.run_id, sweep.target_accuracy);

        nlohmann::json entry = {{"run_id", rec.run_id},
                                {"optimizer", rec.optimizer},
                                {"seed", rec.seed},
                                {"final_accuracy", final_acc},
                                {"best_accuracy", best_acc},
                                {"final_global_accuracy", final_global},
                                {"total_uplink_params", rec.result.ledger.total_uplink},
                                {"total_downlink_params", rec.result.ledger.total_downlink}};
        if (rtt)
            entry["rounds_to_target"] = *rtt;
        else
            entry["rounds_to_target"] = nullptr;
        runs.push_back(std::move(entry));

        finals[rec.optimizer].push_back(final_acc);
        bests[rec.optimizer].push_back(best_acc);
        rtts[rec.optimizer].push_back(rtt ? static_cast<double>(*rtt) : unreached);
    }

    const auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };

    nlohmann::json opts = nlohmann::json::array();
    for (const std::string& name : cfg.sweep) {
        opts.push_back({{"optimizer", name},
                        {"mean_final_accuracy", mean(finals[name])},
                        {"mean_best_accuracy", mean(bests[name])},
                        {"mean_rounds_to_target", mean(rtts[name])}});
    }

    nlohmann::json root = {{"target_accuracy", sweep.target_accuracy},
                           {"target_fraction", cfg.target_fraction},
                           {"unreached_counted_as", cfg.fed.rounds + 1},
                           {"runs", std::move(runs)},
                           {"optimizers", std::move(opts)}};
    return root.dump(2);
}

int cmd_run(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    std::vector<fs::path> written;
    try {
        fs::create_directories(cfg.out_dir);
        const SweepResult sweep = run_sweep(cfg);

        const auto write_file = [&](const char* name, const std::string& body) {
            const fs::path p = fs::path(cfg.out_dir) / name;
            std::ofstream out(p, std::ios::binary);
            if (!out) throw Error("cannot write " + p.string());
            out << body;
            written.push_back(p);
        };
        write_file("metrics.csv", metrics_csv(sweep.rows));
        write_file("selection.json", selection_json(sweep));
        write_file("summary.json", summary_json(cfg, sweep));
        return 0;
    } catch (const std::exception& e) {
        for (const fs::path& p : written) {
            std::error_code ec;
            fs::remove(p, ec);
        }
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace fedpt

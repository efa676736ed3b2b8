#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedpt/config.hpp"

namespace fedpt {

// One metrics.csv row.
struct MetricsRow {
    std::string run_id;
    std::string optimizer;
    std::uint64_t seed = 0;
    std::size_t round = 0;
    Phase phase = Phase::Warmup;
    double accuracy = 0.0;
    double loss = 0.0;
    std::uint64_t uplink_params = 0;
    std::uint64_t downlink_params = 0;
};

struct RunRecord {
    std::string run_id;
    std::string optimizer;
    std::uint64_t seed = 0;
    ExperimentResult result;
};

struct SweepResult {
    std::vector<MetricsRow> rows;
    std::vector<RunRecord> runs;
    double target_accuracy = 0.0;
};

// Executes every (sweep entry, seed) pair. Deterministic: same config gives
// identical rows.
SweepResult run_sweep(const RunConfig& cfg);

// First round whose accuracy reaches the target; nullopt when never reached.
std::optional<std::size_t> rounds_to_target(const std::vector<MetricsRow>& rows,
                                            const std::string& run_id, double target);

std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::string selection_json(const SweepResult& sweep);
std::string summary_json(const RunConfig& cfg, const SweepResult& sweep);

// `run` subcommand: executes the sweep and writes metrics.csv, selection.json
// and summary.json into the output directory. Partial files are removed on
// failure. Returns the process exit code.
int cmd_run(const RunConfig& cfg);

}  // namespace fedpt

#pragma once

#include <string>
#include <vector>

#include "fedpt/federation.hpp"

namespace fedpt {

// Where the task data comes from: a seeded generator or a table on disk.
struct DatasetSpec {
    enum class Kind { Synthetic, Csv, Jsonl };
    Kind kind = Kind::Synthetic;

    std::uint64_t seed = 7;
    std::size_t classes = 4;
    std::size_t input_dim = 16;
    std::size_t examples = 4000;
    double margin = 3.0;

    std::string path;  // csv / jsonl only
};

// Full experiment description as read from a config file. The federation
// block's seed and optimizer are placeholders: the runner instantiates one
// federation per (sweep entry, repeat seed).
struct RunConfig {
    DatasetSpec dataset;
    double label_alpha = 1.0;
    double size_alpha = 5.0;
    double holdout_fraction = 0.2;
    FederationConfig fed;
    std::vector<std::string> sweep{"fedpeptao"};
    std::vector<std::uint64_t> seeds{1};
    std::string out_dir = "runs";
    double target_fraction = 0.9;  // rounds-to-target aims at this share of the best accuracy
};

// Strict parse: unknown keys are rejected with their path, missing optional
// keys take the defaults above. Throws ConfigError.
RunConfig parse_config(const std::string& text);

std::string serialize_config(const RunConfig& cfg);

Dataset build_dataset(const DatasetSpec& spec);

}  // namespace fedpt

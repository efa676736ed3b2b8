#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedpt/prompt_model.hpp"

namespace fedpt {

struct Dataset {
    std::vector<Example> examples;
    std::size_t num_classes = 0;
    std::size_t input_dim = 0;
    std::string provenance;
};

struct PartitionSpec {
    std::size_t num_devices = 100;
    double label_alpha = 1.0;  // Dirichlet over per-device class proportions
    double size_alpha = 5.0;   // Dirichlet over device sizes
    std::uint64_t seed = 0;
    double holdout_fraction = 0.2;
};

struct DeviceShard {
    std::vector<Example> train;
    std::vector<Example> holdout;
};

// Stratified Gaussian blobs around seeded unit-norm class anchors. The noise
// standard deviation is 1/margin, so margin = inf reproduces the anchors
// exactly. Class counts differ by at most one.
Dataset synth_task(std::uint64_t seed, std::size_t num_classes, std::size_t input_dim,
                   std::size_t num_examples, double margin);

// Two-level Dirichlet non-IID split: per-device label mixtures and device
// sizes, minimum 4 examples per device (refilled from the largest shard), and
// a per-device stratified holdout. The union of all shards is exactly the
// input dataset.
std::vector<DeviceShard> dirichlet_partition(const Dataset& d, const PartitionSpec& spec);

enum class TableFormat { Csv, Jsonl };

// CSV: header "f0,...,f{d-1},label", one row per example. JSONL: one object
// per line with "features" and "label". Row order is preserved.
Dataset load_table(const std::string& path, TableFormat format);

}  // namespace fedpt

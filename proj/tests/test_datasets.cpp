#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

#include "doctest.h"
#include "fedpt/datasets.hpp"
#include "fedpt/rng.hpp"
#include "oracles.hpp"

using namespace fedpt;

namespace {

std::vector<std::pair<Vec, int>> multiset_of(const Dataset& d) {
    std::vector<std::pair<Vec, int>> out;
    for (const auto& ex : d.examples) out.emplace_back(ex.features, ex.label);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::pair<Vec, int>> multiset_of(const std::vector<DeviceShard>& shards) {
    std::vector<std::pair<Vec, int>> out;
    for (const auto& s : shards) {
        for (const auto& ex : s.train) out.emplace_back(ex.features, ex.label);
        for (const auto& ex : s.holdout) out.emplace_back(ex.features, ex.label);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<double> label_histogram(const DeviceShard& s, std::size_t classes) {
    std::vector<double> h(classes, 0.0);
    double total = 0.0;
    for (const auto* part : {&s.train, &s.holdout})
        for (const auto& ex : *part) {
            h[static_cast<std::size_t>(ex.label)] += 1.0;
            total += 1.0;
        }
    for (auto& v : h) v /= total;
    return h;
}

}  // namespace

TEST_CASE("synth_task: noiseless limit reproduces the class anchors") {
    const Dataset d = synth_task(5, 4, 8, 80, std::numeric_limits<double>::infinity());
    // Every same-class example is exactly the anchor.
    std::map<int, Vec> anchor;
    for (const auto& ex : d.examples) {
        const auto it = anchor.find(ex.label);
        if (it == anchor.end())
            anchor[ex.label] = ex.features;
        else
            CHECK(it->second == ex.features);
    }
    CHECK(anchor.size() == 4);

    // Nearest-anchor classification is perfect.
    for (const auto& ex : d.examples) {
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (const auto& [label, a] : anchor) {
            double dist = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i)
                dist += (ex.features[i] - a[i]) * (ex.features[i] - a[i]);
            if (dist < best_d) {
                best_d = dist;
                best = label;
            }
        }
        CHECK(best == ex.label);
    }
}

TEST_CASE("synth_task: stratified counts and determinism") {
    const Dataset d = synth_task(9, 4, 16, 400, 3.0);
    std::map<int, int> counts;
    for (const auto& ex : d.examples) counts[ex.label] += 1;
    for (const auto& [label, c] : counts) CHECK(c == 100);

    const Dataset d2 = synth_task(9, 4, 16, 400, 3.0);
    REQUIRE(d.examples.size() == d2.examples.size());
    for (std::size_t i = 0; i < d.examples.size(); ++i) {
        CHECK(d.examples[i].features == d2.examples[i].features);
        CHECK(d.examples[i].label == d2.examples[i].label);
    }

    CHECK_THROWS_AS(synth_task(1, 4, 16, 39, 3.0), InvalidParams);
}

TEST_CASE("dirichlet_partition: conservation, minimum size, single device") {
    const Dataset d = synth_task(2, 4, 6, 240, 2.0);
    Rng rng(55);
    for (int trial = 0; trial < 25; ++trial) {
        PartitionSpec spec;
        spec.num_devices = 1 + rng.below(20);
        spec.label_alpha = std::exp(rng.uniform(-2.0, 4.0));
        spec.size_alpha = std::exp(rng.uniform(-1.0, 3.0));
        spec.seed = rng.u64();
        const auto shards = dirichlet_partition(d, spec);
        REQUIRE(shards.size() == spec.num_devices);
        CHECK(multiset_of(shards) == multiset_of(d));
        for (const auto& s : shards) {
            CHECK(s.train.size() + s.holdout.size() >= 4);
            CHECK(!s.train.empty());
            CHECK(!s.holdout.empty());
        }
    }

    PartitionSpec one;
    one.num_devices = 1;
    const auto single = dirichlet_partition(d, one);
    CHECK(single[0].train.size() + single[0].holdout.size() == d.examples.size());

    PartitionSpec toomany;
    toomany.num_devices = 100;
    CHECK_THROWS_AS(dirichlet_partition(d, toomany), TooManyDevices);
}

TEST_CASE("dirichlet_partition: huge label alpha approaches the global mixture") {
    const Dataset d = synth_task(4, 4, 6, 2000, 2.0);
    PartitionSpec spec;
    spec.num_devices = 10;
    spec.label_alpha = 1e6;
    spec.seed = 3;
    const auto shards = dirichlet_partition(d, spec);
    const std::vector<double> global(4, 0.25);
    for (const auto& s : shards)
        CHECK(oracle::total_variation(label_histogram(s, 4), global) <= 0.05);
}

TEST_CASE("dirichlet_partition: smaller alpha means more heterogeneity") {
    const Dataset d = synth_task(6, 4, 6, 1200, 2.0);
    const std::vector<double> global(4, 0.25);
    std::vector<double> mean_tv;
    for (const double alpha : {0.1, 1.0, 10.0, 100.0}) {
        double acc = 0.0;
        int count = 0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            PartitionSpec spec;
            spec.num_devices = 12;
            spec.label_alpha = alpha;
            spec.seed = seed;
            for (const auto& s : dirichlet_partition(d, spec)) {
                acc += oracle::total_variation(label_histogram(s, 4), global);
                count += 1;
            }
        }
        mean_tv.push_back(acc / count);
    }
    CHECK(mean_tv[0] > mean_tv[1]);
    CHECK(mean_tv[1] > mean_tv[2]);
    CHECK(mean_tv[2] > mean_tv[3]);
}

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& body)
        : path("/tmp/fedpt_test_" + name) {
        std::ofstream out(path);
        out << body;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("load_table: csv fixture, errors, jsonl equivalence") {
    const TempFile csv("fixture.csv",
                       "f0,f1,f2,label\n"
                       "1.5,-2.25,0.125,0\n"
                       "0,3.5,-1,2\n"
                       "7,8,9,1\n");
    const Dataset d = load_table(csv.path, TableFormat::Csv);
    REQUIRE(d.examples.size() == 3);
    CHECK(d.input_dim == 3);
    CHECK(d.num_classes == 3);
    CHECK(d.examples[0].features == Vec{1.5, -2.25, 0.125});
    CHECK(d.examples[0].label == 0);
    CHECK(d.examples[1].features == Vec{0.0, 3.5, -1.0});
    CHECK(d.examples[2].label == 1);

    const TempFile bad("bad.csv",
                       "f0,f1,f2,label\n"
                       "1,2,3,0\n"
                       "1,2,oops,1\n");
    try {
        load_table(bad.path, TableFormat::Csv);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }

    const TempFile neg("neg.csv",
                       "f0,label\n"
                       "1,-2\n");
    CHECK_THROWS_AS(load_table(neg.path, TableFormat::Csv), LabelOutOfRange);

    const TempFile jsonl("fixture.jsonl",
                         "{\"features\": [1.5, -2.25, 0.125], \"label\": 0}\n"
                         "{\"features\": [0, 3.5, -1], \"label\": 2}\n"
                         "{\"features\": [7, 8, 9], \"label\": 1}\n");
    const Dataset j = load_table(jsonl.path, TableFormat::Jsonl);
    REQUIRE(j.examples.size() == d.examples.size());
    CHECK(j.input_dim == d.input_dim);
    CHECK(j.num_classes == d.num_classes);
    for (std::size_t i = 0; i < j.examples.size(); ++i) {
        CHECK(j.examples[i].features == d.examples[i].features);
        CHECK(j.examples[i].label == d.examples[i].label);
    }
}

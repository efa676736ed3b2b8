#include "fedpt/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fedpt/rng.hpp"
#include "json.hpp"

namespace fedpt {

Dataset synth_task(std::uint64_t seed, std::size_t num_classes, std::size_t input_dim,
                   std::size_t num_examples, double margin) {
    if (num_classes < 2 || input_dim < 1) throw InvalidParams("synth_task: degenerate dimensions");
    if (num_examples < num_classes * 10)
        throw InvalidParams("synth_task: need at least 10 examples per class");
    if (!(margin > 0.0)) throw InvalidParams("synth_task: margin must be positive");

    Rng rng(mix_seed(seed, 0xDA7A));
    std::vector<Vec> anchors(num_classes);
    for (auto& a : anchors) {
        a.resize(input_dim);
        double n;
        do {
            for (auto& x : a) x = rng.normal();
            n = norm2(a);
        } while (n < 1e-12);
        for (auto& x : a) x /= n;
    }

    const double noise_std = 1.0 / margin;  // margin = inf -> exact anchors
    Dataset d;
    d.num_classes = num_classes;
    d.input_dim = input_dim;
    d.provenance = "synthetic";
    d.examples.reserve(num_examples);
    for (std::size_t i = 0; i < num_examples; ++i) {
        Example ex;
        ex.label = static_cast<int>(i % num_classes);  // stratified by construction
        ex.features = anchors[static_cast<std::size_t>(ex.label)];
        for (auto& x : ex.features) x += noise_std * rng.normal();
        d.examples.push_back(std::move(ex));
    }
    return d;
}

namespace {

// Largest-remainder apportionment of `total` units proportional to `shares`.
std::vector<std::size_t> apportion(const Vec& shares, std::size_t total) {
    const double sum = std::accumulate(shares.begin(), shares.end(), 0.0);
    std::vector<std::size_t> counts(shares.size(), 0);
    std::vector<std::pair<double, std::size_t>> rema;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < shares.size(); ++i) {
        const double exact =
            sum > 0.0 ? shares[i] / sum * static_cast<double>(total)
                      : static_cast<double>(total) / static_cast<double>(shares.size());
        counts[i] = static_cast<std::size_t>(exact);
        assigned += counts[i];
        rema.emplace_back(exact - std::floor(exact), i);
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; assigned < total; ++i, ++assigned) counts[rema[i % rema.size()].second] += 1;
    return counts;
}

}  // namespace

std::vector<DeviceShard> dirichlet_partition(const Dataset& d, const PartitionSpec& spec) {
    const std::size_t n = d.examples.size();
    const std::size_t M = spec.num_devices;
    const std::size_t C = d.num_classes;
    if (M < 1) throw InvalidParams("dirichlet_partition: need at least one device");
    if (M > n / 4) throw TooManyDevices("dirichlet_partition: fewer than 4 examples per device");
    if (!(spec.label_alpha > 0.0) || !(spec.size_alpha > 0.0))
        throw InvalidParams("dirichlet_partition: alphas must be positive");
    if (!(spec.holdout_fraction > 0.0) || spec.holdout_fraction > 0.5)
        throw InvalidParams("dirichlet_partition: holdout fraction must lie in (0, 0.5]");

    Rng rng(mix_seed(spec.seed, 0xD117));

    // Device size targets, at least 4 each.
    Vec size_shares(rng.dirichlet(spec.size_alpha, M));
    std::vector<std::size_t> sizes = apportion(size_shares, n);
    for (;;) {
        const auto small = std::min_element(sizes.begin(), sizes.end());
        if (*small >= 4) break;
        const auto big = std::max_element(sizes.begin(), sizes.end());
        *big -= 1;
        *small += 1;
    }

    // Per-device label mixtures, then a per-class apportionment of the actual
    // class supplies so the partition is exact.
    std::vector<Vec> mixtures(M);
    for (auto& m : mixtures) m = rng.dirichlet(spec.label_alpha, C);

    std::vector<std::size_t> supply(C, 0);
    for (const auto& ex : d.examples) supply[static_cast<std::size_t>(ex.label)] += 1;

    std::vector<std::vector<std::size_t>> counts(M, std::vector<std::size_t>(C, 0));
    for (std::size_t c = 0; c < C; ++c) {
        Vec demand(M);
        for (std::size_t i = 0; i < M; ++i)
            demand[i] = mixtures[i][c] * static_cast<double>(sizes[i]);
        const auto alloc = apportion(demand, supply[c]);
        for (std::size_t i = 0; i < M; ++i) counts[i][c] = alloc[i];
    }

    // Min-size repair: move one example at a time from the largest shard.
    const auto shard_size = [&](std::size_t i) {
        return std::accumulate(counts[i].begin(), counts[i].end(), std::size_t{0});
    };
    for (;;) {
        std::size_t small = 0, big = 0;
        for (std::size_t i = 1; i < M; ++i) {
            if (shard_size(i) < shard_size(small)) small = i;
            if (shard_size(i) > shard_size(big)) big = i;
        }
        if (shard_size(small) >= 4) break;
        std::size_t cls = 0;
        for (std::size_t c = 1; c < C; ++c)
            if (counts[big][c] > counts[big][cls]) cls = c;
        counts[big][cls] -= 1;
        counts[small][cls] += 1;
    }

    // Deal shuffled per-class index lists device by device.
    std::vector<std::vector<std::size_t>> by_class(C);
    for (std::size_t i = 0; i < n; ++i)
        by_class[static_cast<std::size_t>(d.examples[i].label)].push_back(i);
    for (auto& idxs : by_class) {
        for (std::size_t i = idxs.size(); i > 1; --i)
            std::swap(idxs[i - 1], idxs[static_cast<std::size_t>(rng.below(i))]);
    }

    std::vector<DeviceShard> shards(M);
    std::vector<std::size_t> cursor(C, 0);
    for (std::size_t i = 0; i < M; ++i) {
        std::vector<std::vector<std::size_t>> mine(C);
        std::size_t total = 0;
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t k = 0; k < counts[i][c]; ++k)
                mine[c].push_back(by_class[c][cursor[c]++]);
            total += counts[i][c];
        }

        // Stratified holdout: proportional per class, at least one example
        // held out and at least one kept for training.
        std::size_t want = static_cast<std::size_t>(
            std::floor(static_cast<double>(total) * spec.holdout_fraction + 0.5));
        want = std::clamp<std::size_t>(want, 1, total - 1);
        Vec class_sizes(C);
        for (std::size_t c = 0; c < C; ++c) class_sizes[c] = static_cast<double>(mine[c].size());
        auto hold_counts = apportion(class_sizes, want);
        for (std::size_t c = 0; c < C; ++c)
            hold_counts[c] = std::min(hold_counts[c], mine[c].size());

        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t keep = mine[c].size() - hold_counts[c];
            for (std::size_t k = 0; k < mine[c].size(); ++k) {
                const Example& ex = d.examples[mine[c][k]];
                (k < keep ? shards[i].train : shards[i].holdout).push_back(ex);
            }
        }
    }
    return shards;
}

namespace {

double parse_number(const std::string& tok, std::size_t line_no, const char* what) {
    std::size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(tok, &pos);
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" + tok + "'");
    }
    if (pos != tok.size())
        throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" + tok + "'");
    return v;
}

int parse_label(const std::string& tok, std::size_t line_no) {
    const double v = parse_number(tok, line_no, "label");
    const double r = std::round(v);
    if (v != r) throw ParseError("line " + std::to_string(line_no) + ": label must be an integer");
    if (r < 0) throw LabelOutOfRange("line " + std::to_string(line_no) + ": negative label");
    return static_cast<int>(r);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

Dataset load_table(const std::string& path, TableFormat format) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");

    Dataset d;
    d.provenance = path;
    std::string line;
    std::size_t line_no = 0;
    int max_label = -1;

    if (format == TableFormat::Csv) {
        if (!std::getline(in, line)) throw ParseError("empty file '" + path + "'");
        ++line_no;
        const auto header = split_csv(line);
        if (header.size() < 2 || header.back() != "label")
            throw ParseError("line 1: header must be f0,...,f{d-1},label");
        for (std::size_t i = 0; i + 1 < header.size(); ++i)
            if (header[i] != "f" + std::to_string(i))
                throw ParseError("line 1: expected column f" + std::to_string(i));
        d.input_dim = header.size() - 1;

        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            const auto toks = split_csv(line);
            if (toks.size() != d.input_dim + 1)
                throw ParseError("line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(d.input_dim + 1) + " fields, got " +
                                 std::to_string(toks.size()));
            Example ex;
            ex.features.reserve(d.input_dim);
            for (std::size_t i = 0; i < d.input_dim; ++i)
                ex.features.push_back(parse_number(toks[i], line_no, "feature"));
            ex.label = parse_label(toks.back(), line_no);
            max_label = std::max(max_label, ex.label);
            d.examples.push_back(std::move(ex));
        }
    } else {
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            nlohmann::json row;
            try {
                row = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
            }
            if (!row.is_object() || !row.contains("features") || !row.contains("label"))
                throw ParseError("line " + std::to_string(line_no) +
                                 ": need object with 'features' and 'label'");
            Example ex;
            if (!row["features"].is_array())
                throw ParseError("line " + std::to_string(line_no) + ": 'features' must be array");
            for (const auto& f : row["features"]) {
                if (!f.is_number())
                    throw ParseError("line " + std::to_string(line_no) + ": non-numeric feature");
                ex.features.push_back(f.get<double>());
            }
            if (!row["label"].is_number_integer())
                throw ParseError("line " + std::to_string(line_no) + ": 'label' must be integer");
            ex.label = row["label"].get<int>();
            if (ex.label < 0)
                throw LabelOutOfRange("line " + std::to_string(line_no) + ": negative label");
            if (d.examples.empty()) {
                d.input_dim = ex.features.size();
            } else if (ex.features.size() != d.input_dim) {
                throw ParseError("line " + std::to_string(line_no) + ": feature width " +
                                 std::to_string(ex.features.size()) + " != " +
                                 std::to_string(d.input_dim));
            }
            max_label = std::max(max_label, ex.label);
            d.examples.push_back(std::move(ex));
        }
    }

    if (d.examples.empty()) throw ParseError("no data rows in '" + path + "'");
    d.num_classes = static_cast<std::size_t>(max_label) + 1;
    return d;
}

}  // namespace fedpt

#include "fedpt/config.hpp"

#include <set>
#include <type_traits>

#include "json.hpp"

namespace fedpt {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError("config: " + path + ": " + what);
}

void reject_unknown(const json& obj, const std::string& path,
                    const std::set<std::string>& allowed) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (!allowed.count(key)) fail(path.empty() ? key : path + "." + key, "unknown key");
    }
}

template <typename T>
void read_number(const json& obj, const std::string& path, const char* key, T& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) fail(path + "." + key, "expected an integer");
        if (std::is_unsigned_v<T> && v.get<long long>() < 0)
            fail(path + "." + key, "must be nonnegative");
    } else {
        if (!v.is_number()) fail(path + "." + key, "expected a number");
    }
    out = v.get<T>();
}

void read_string(const json& obj, const std::string& path, const char* key, std::string& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_string()) fail(path + "." + key, "expected a string");
    out = v.get<std::string>();
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config: top level must be an object");
    reject_unknown(root, "",
                   {"dataset", "partition", "federation", "model", "optimizer", "scoring",
                    "selection", "run"});

    RunConfig cfg;

    if (!root.contains("dataset")) throw ConfigError("config: dataset: required section missing");
    {
        const json& ds = root.at("dataset");
        const std::string path = "dataset";
        if (!ds.is_object()) fail(path, "expected an object");
        std::string type = "synthetic";
        read_string(ds, path, "type", type);
        if (type == "synthetic") {
            cfg.dataset.kind = DatasetSpec::Kind::Synthetic;
            reject_unknown(ds, path, {"type", "seed", "classes", "input_dim", "examples", "margin"});
            read_number(ds, path, "seed", cfg.dataset.seed);
            read_number(ds, path, "classes", cfg.dataset.classes);
            read_number(ds, path, "input_dim", cfg.dataset.input_dim);
            read_number(ds, path, "examples", cfg.dataset.examples);
            read_number(ds, path, "margin", cfg.dataset.margin);
        } else if (type == "csv" || type == "jsonl") {
            cfg.dataset.kind =
                type == "csv" ? DatasetSpec::Kind::Csv : DatasetSpec::Kind::Jsonl;
            reject_unknown(ds, path, {"type", "path"});
            read_string(ds, path, "path", cfg.dataset.path);
            if (cfg.dataset.path.empty()) fail(path + ".path", "required for file datasets");
        } else {
            fail(path + ".type", "must be synthetic, csv or jsonl");
        }
    }

    if (root.contains("partition")) {
        const json& p = root.at("partition");
        const std::string path = "partition";
        if (!p.is_object()) fail(path, "expected an object");
        reject_unknown(p, path, {"label_alpha", "size_alpha", "holdout_fraction"});
        read_number(p, path, "label_alpha", cfg.label_alpha);
        read_number(p, path, "size_alpha", cfg.size_alpha);
        read_number(p, path, "holdout_fraction", cfg.holdout_fraction);
    }

    if (!root.contains("federation"))
        throw ConfigError("config: federation: required section missing");
    {
        const json& f = root.at("federation");
        const std::string path = "federation";
        if (!f.is_object()) fail(path, "expected an object");
        reject_unknown(f, path,
                       {"devices", "sample_size", "rounds", "warmup_rounds", "local_steps",
                        "local_batch_size"});
        if (!f.contains("rounds")) fail(path + ".rounds", "required");
        read_number(f, path, "devices", cfg.fed.num_devices);
        read_number(f, path, "sample_size", cfg.fed.sample_size);
        read_number(f, path, "rounds", cfg.fed.rounds);
        read_number(f, path, "warmup_rounds", cfg.fed.warmup_rounds);
        read_number(f, path, "local_steps", cfg.fed.local_steps);
        read_number(f, path, "local_batch_size", cfg.fed.local_batch_size);
    }

    if (root.contains("model")) {
        const json& m = root.at("model");
        const std::string path = "model";
        if (!m.is_object()) fail(path, "expected an object");
        reject_unknown(m, path, {"layers", "hidden_dim", "prompt_dim", "init_seed"});
        read_number(m, path, "layers", cfg.fed.model.layers);
        read_number(m, path, "hidden_dim", cfg.fed.model.hidden_dim);
        read_number(m, path, "prompt_dim", cfg.fed.model.prompt_dim);
        read_number(m, path, "init_seed", cfg.fed.model.init_seed);
    }

    if (root.contains("optimizer")) {
        const json& o = root.at("optimizer");
        const std::string path = "optimizer";
        if (!o.is_object()) fail(path, "expected an object");
        reject_unknown(o, path,
                       {"sweep", "device_alpha", "beta1", "beta2", "adam_eps", "server_beta",
                        "server_lr", "pseudo_grad_mode"});
        if (o.contains("sweep")) {
            if (!o.at("sweep").is_array() || o.at("sweep").empty())
                fail(path + ".sweep", "expected a nonempty array of optimizer names");
            cfg.sweep.clear();
            for (const auto& name : o.at("sweep")) {
                if (!name.is_string()) fail(path + ".sweep", "entries must be strings");
                make_optimizer(name.get<std::string>());  // validate early
                cfg.sweep.push_back(name.get<std::string>());
            }
        }
        read_number(o, path, "device_alpha", cfg.fed.device_hyper.alpha);
        read_number(o, path, "beta1", cfg.fed.device_hyper.beta1);
        read_number(o, path, "beta2", cfg.fed.device_hyper.beta2);
        read_number(o, path, "adam_eps", cfg.fed.device_hyper.eps);
        read_number(o, path, "server_beta", cfg.fed.server_hyper.beta);
        read_number(o, path, "server_lr", cfg.fed.server_hyper.eta);
        std::string mode;
        read_string(o, path, "pseudo_grad_mode", mode);
        if (!mode.empty()) {
            if (mode == "paper")
                cfg.fed.server_hyper.pseudo_grad_mode = PseudoGradMode::Paper;
            else if (mode == "neg_delta")
                cfg.fed.server_hyper.pseudo_grad_mode = PseudoGradMode::NegDelta;
            else
                fail(path + ".pseudo_grad_mode", "must be paper or neg_delta");
        }
    }

    if (root.contains("scoring")) {
        const json& s = root.at("scoring");
        const std::string path = "scoring";
        if (!s.is_object()) fail(path, "expected an object");
        reject_unknown(s, path, {"epsilon", "batch_size"});
        read_number(s, path, "epsilon", cfg.fed.scoring.epsilon);
        read_number(s, path, "batch_size", cfg.fed.scoring.score_batch_size);
    }

    if (root.contains("selection")) {
        const json& s = root.at("selection");
        const std::string path = "selection";
        if (!s.is_object()) fail(path, "expected an object");
        reject_unknown(s, path, {"fd_step", "lipschitz_trials", "radius_floor"});
        read_number(s, path, "fd_step", cfg.fed.fd_step);
        read_number(s, path, "lipschitz_trials", cfg.fed.lipschitz_trials);
        read_number(s, path, "radius_floor", cfg.fed.radius_floor);
    }

    if (root.contains("run")) {
        const json& r = root.at("run");
        const std::string path = "run";
        if (!r.is_object()) fail(path, "expected an object");
        reject_unknown(r, path, {"seeds", "out_dir", "target_fraction"});
        if (r.contains("seeds")) {
            if (!r.at("seeds").is_array() || r.at("seeds").empty())
                fail(path + ".seeds", "expected a nonempty array of integers");
            cfg.seeds.clear();
            for (const auto& s : r.at("seeds")) {
                if (!s.is_number_integer()) fail(path + ".seeds", "entries must be integers");
                cfg.seeds.push_back(s.get<std::uint64_t>());
            }
        }
        read_string(r, path, "out_dir", cfg.out_dir);
        read_number(r, path, "target_fraction", cfg.target_fraction);
    }

    if (cfg.target_fraction <= 0.0 || cfg.target_fraction > 1.0)
        throw ConfigError("config: run.target_fraction: must lie in (0, 1]");
    cfg.fed.validate();
    return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
    json root;
    json ds;
    switch (cfg.dataset.kind) {
        case DatasetSpec::Kind::Synthetic:
            ds["type"] = "synthetic";
            ds["seed"] = cfg.dataset.seed;
            ds["classes"] = cfg.dataset.classes;
            ds["input_dim"] = cfg.dataset.input_dim;
            ds["examples"] = cfg.dataset.examples;
            ds["margin"] = cfg.dataset.margin;
            break;
        case DatasetSpec::Kind::Csv:
            ds["type"] = "csv";
            ds["path"] = cfg.dataset.path;
            break;
        case DatasetSpec::Kind::Jsonl:
            ds["type"] = "jsonl";
            ds["path"] = cfg.dataset.path;
            break;
    }
    root["dataset"] = ds;
    root["partition"] = {{"label_alpha", cfg.label_alpha},
                         {"size_alpha", cfg.size_alpha},
                         {"holdout_fraction", cfg.holdout_fraction}};
    root["federation"] = {{"devices", cfg.fed.num_devices},
                          {"sample_size", cfg.fed.sample_size},
                          {"rounds", cfg.fed.rounds},
                          {"warmup_rounds", cfg.fed.warmup_rounds},
                          {"local_steps", cfg.fed.local_steps},
                          {"local_batch_size", cfg.fed.local_batch_size}};
    root["model"] = {{"layers", cfg.fed.model.layers},
                     {"hidden_dim", cfg.fed.model.hidden_dim},
                     {"prompt_dim", cfg.fed.model.prompt_dim},
                     {"init_seed", cfg.fed.model.init_seed}};
    root["optimizer"] = {
        {"sweep", cfg.sweep},
        {"device_alpha", cfg.fed.device_hyper.alpha},
        {"beta1", cfg.fed.device_hyper.beta1},
        {"beta2", cfg.fed.device_hyper.beta2},
        {"adam_eps", cfg.fed.device_hyper.eps},
        {"server_beta", cfg.fed.server_hyper.beta},
        {"server_lr", cfg.fed.server_hyper.eta},
        {"pseudo_grad_mode",
         cfg.fed.server_hyper.pseudo_grad_mode == PseudoGradMode::Paper ? "paper" : "neg_delta"}};
    root["scoring"] = {{"epsilon", cfg.fed.scoring.epsilon},
                       {"batch_size", cfg.fed.scoring.score_batch_size}};
    root["selection"] = {{"fd_step", cfg.fed.fd_step},
                         {"lipschitz_trials", cfg.fed.lipschitz_trials},
                         {"radius_floor", cfg.fed.radius_floor}};
    root["run"] = {{"seeds", cfg.seeds},
                   {"out_dir", cfg.out_dir},
                   {"target_fraction", cfg.target_fraction}};
    return root.dump(2);
}

Dataset build_dataset(const DatasetSpec& spec) {
    switch (spec.kind) {
        case DatasetSpec::Kind::Synthetic:
            return synth_task(spec.seed, spec.classes, spec.input_dim, spec.examples, spec.margin);
        case DatasetSpec::Kind::Csv:
            return load_table(spec.path, TableFormat::Csv);
        case DatasetSpec::Kind::Jsonl:
            return load_table(spec.path, TableFormat::Jsonl);
    }
    throw InvalidParams("build_dataset: unreachable");
}

}  // namespace fedpt

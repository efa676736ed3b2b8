#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "fedpt/config.hpp"
#include "fedpt/layer_scoring.hpp"
#include "fedpt/layer_selection.hpp"
#include "fedpt/runner.hpp"
#include "fedpt/verify.hpp"
#include "json.hpp"

namespace py = pybind11;
using namespace fedpt;

namespace {

SymMatrix to_sym(const std::vector<std::vector<double>>& rows) {
    const std::size_t n = rows.size();
    SymMatrix m(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].size() != n) throw DimensionMismatch("matrix must be square");
        for (std::size_t j = 0; j < n; ++j) m.at(i, j) = rows[i][j];
    }
    return m;
}

py::dict run_from_json(const std::string& config_text) {
    const RunConfig cfg = parse_config(config_text);
    const SweepResult sweep = run_sweep(cfg);

    py::list rows;
    for (const MetricsRow& r : sweep.rows) {
        py::dict row;
        row["run_id"] = r.run_id;
        row["optimizer"] = r.optimizer;
        row["seed"] = r.seed;
        row["round"] = r.round;
        row["phase"] = r.phase == Phase::Warmup ? "warmup" : "selected";
        row["accuracy"] = r.accuracy;
        row["loss"] = r.loss;
        row["uplink_params"] = r.uplink_params;
        row["downlink_params"] = r.downlink_params;
        rows.append(std::move(row));
    }

    py::dict selections;
    for (const RunRecord& rec : sweep.runs) {
        py::dict s;
        s["applied"] = rec.result.selection_applied;
        if (rec.result.selection) {
            s["selected_layers"] = rec.result.selection->result.selected_layers;
            s["global_ratio"] = rec.result.selection->result.global_ratio;
            s["selected_param_fraction"] = rec.result.selection->result.selected_param_fraction;
        }
        selections[py::str(rec.run_id)] = std::move(s);
    }

    py::dict out;
    out["metrics"] = std::move(rows);
    out["selection"] = std::move(selections);
    out["target_accuracy"] = sweep.target_accuracy;
    return out;
}

}  // namespace

PYBIND11_MODULE(fedpt, m) {
    m.doc() = "federated prompt-tuning simulator core";

    py::register_exception<Error>(m, "FedptError");

    m.def(
        "sym_eigen",
        [](const std::vector<std::vector<double>>& rows, bool want_vectors) {
            const Spectrum sp = sym_eigen(to_sym(rows), want_vectors);
            py::dict out;
            out["values"] = sp.values;
            if (sp.vectors) {
                std::vector<std::vector<double>> cols(sp.vectors->cols);
                for (std::size_t k = 0; k < sp.vectors->cols; ++k) {
                    cols[k].resize(sp.vectors->rows);
                    for (std::size_t i = 0; i < sp.vectors->rows; ++i)
                        cols[k][i] = sp.vectors->at(i, k);
                }
                out["vectors"] = cols;
            }
            return out;
        },
        py::arg("matrix"), py::arg("want_vectors") = false,
        "eigenvalues (ascending) of a symmetric matrix, optional eigenvectors");

    m.def(
        "cosine", [](const Vec& u, const Vec& v) { return cosine(u, v); }, py::arg("u"),
        py::arg("v"));

    m.def(
        "weighted_average",
        [](const std::vector<Vec>& items, const Vec& weights) {
            return weighted_average(items, weights);
        },
        py::arg("items"), py::arg("weights"));

    m.def(
        "kernel_matrix",
        [](const std::vector<Vec>& hidden) {
            HiddenStates h{hidden};
            const SymMatrix k = kernel_matrix(h);
            std::vector<Vec> rows(k.dim, Vec(k.dim));
            for (std::size_t i = 0; i < k.dim; ++i)
                for (std::size_t j = 0; j < k.dim; ++j) rows[i][j] = k.at(i, j);
            return rows;
        },
        py::arg("hidden_states"), "layer-by-layer cosine similarity matrix for one sample");

    m.def(
        "sample_layer_eigenvalues",
        [](const std::vector<std::vector<double>>& rows) {
            return sample_layer_eigenvalues(to_sym(rows));
        },
        py::arg("kernel"));

    m.def(
        "retention_ratio",
        [](const Vec& eigs, double lipschitz) {
            const SelectionDiagnostics d = retention_ratio(eigs, lipschitz);
            py::dict out;
            out["gap_index"] = d.gap_index;
            out["ratio"] = d.ratio;
            return out;
        },
        py::arg("hessian_eigenvalues"), py::arg("lipschitz"));

    m.def(
        "select_layers",
        [](const Vec& scores, double ratio, const std::vector<std::size_t>& counts) {
            const SelectionResult r = select_layers(scores, ratio, counts);
            py::dict out;
            out["selected_layers"] = r.selected_layers;
            out["global_ratio"] = r.global_ratio;
            out["selected_param_fraction"] = r.selected_param_fraction;
            return out;
        },
        py::arg("global_scores"), py::arg("ratio"), py::arg("param_counts"));

    m.def(
        "adam_trajectory",
        [](Vec w, const std::vector<Vec>& grads, double alpha, double beta1, double beta2,
           double eps) {
            AdamHyper hyper{alpha, beta1, beta2, eps};
            AdamState st(w.size(), hyper);
            std::vector<Vec> trace;
            for (const Vec& g : grads) {
                adam_step(w, st, g);
                trace.push_back(w);
            }
            return trace;
        },
        py::arg("w0"), py::arg("gradients"), py::arg("alpha") = 1e-2, py::arg("beta1") = 0.9,
        py::arg("beta2") = 0.999, py::arg("eps") = 1e-8,
        "iterates of the device-side Adam update, one entry per step");

    m.def("run_experiment", &run_from_json, py::arg("config_json"),
          "run a full sweep from a JSON config string; returns metrics and selection info");

    m.def(
        "verify",
        []() {
            std::ostringstream out;
            const bool ok = run_verify(out);
            return py::make_tuple(ok, out.str());
        },
        "run the built-in oracle suite; returns (ok, report)");
}

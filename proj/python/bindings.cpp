#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "emr/error.hpp"
#include "emr/feedback.hpp"
#include "emr/harness.hpp"
#include "emr/json_io.hpp"
#include "emr/service.hpp"
#include "emr/synthetic.hpp"

namespace py = pybind11;
using namespace emr;

// JSON crosses the boundary as text; the Python package decodes it.

namespace {

class PyEngine {
public:
    PyEngine(const Corpus& corpus, const std::string& seed_json, double tau, double c,
             std::optional<std::string> data_dir)
        : corpus_(corpus) {
        EngineConfig cfg;
        cfg.hyper.tau = tau;
        cfg.hyper.c = c;
        std::optional<std::filesystem::path> dir;
        if (data_dir) dir = *data_dir;
        engine_ = std::make_unique<Engine>(corpus, parse_labels(seed_json, &corpus_), cfg, dir);
        api_ = std::make_unique<Api>(*engine_);
    }

    std::pair<int, std::string> request(const std::string& method, const std::string& path,
                                        const std::map<std::string, std::string>& params, const std::string& body) {
        ApiRequest req{method, path, {}, body};
        for (const auto& [k, v] : params) req.params.emplace(k, v);
        ApiResponse res;
        {
            py::gil_scoped_release release;
            res = api_->handle(req);
        }
        return {res.status, res.body.dump()};
    }

    std::string retrain() {
        DiffReport diff;
        {
            py::gil_scoped_release release;
            diff = engine_->retrain();
        }
        return to_json(diff).dump();
    }

    std::string evaluate(const std::string& holdout_json) {
        const auto report = engine_->evaluate(parse_labels(holdout_json, &corpus_));
        json per = json::object();
        for (std::size_t v = 0; v < report.variables.size(); ++v) per[report.variables[v]] = to_json(report.per_variable[v]);
        return json{{"variables", per}, {"overall", to_json(report.overall)}}.dump();
    }

    std::size_t round() const { return engine_->snapshot()->round; }

private:
    Corpus corpus_;
    std::unique_ptr<Engine> engine_;
    std::unique_ptr<Api> api_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Interactive review of clinical notes: corpus, learner, word tree, feedback, harness";

    // EmrError(code, message); the package adds a `code` property.
    static py::exception<Error> error(m, "EmrError", PyExc_RuntimeError);
    static PyObject* error_type = error.ptr();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object inst = py::reinterpret_borrow<py::object>(error_type)(py::str(e.code()), py::str(e.what()));
            PyErr_SetObject(error_type, inst.ptr());
        }
    });

    py::class_<Corpus>(m, "Corpus")
        .def("__len__", &Corpus::size)
        .def_property_readonly("variables", &Corpus::variables)
        .def_property_readonly("doc_ids",
                               [](const Corpus& c) {
                                   std::vector<std::string> ids;
                                   for (const auto& d : c.documents()) ids.push_back(d.doc_id);
                                   return ids;
                               })
        .def("text", [](const Corpus& c, const std::string& doc_id) {
            const Document* d = c.find(doc_id);
            if (!d) throw Error("UnknownDocument", "unknown document '" + doc_id + "'");
            return d->text;
        })
        .def("to_json", &corpus_to_json);

    m.def("parse_corpus", [](const std::string& text) { return parse_corpus(text); }, py::arg("text"));
    m.def("load_corpus", [](const std::string& path) { return load_corpus(path); }, py::arg("path"));

    m.def(
        "synthetic_corpus",
        [](std::size_t documents, std::uint64_t seed, std::size_t variables) {
            auto data = generate_synthetic_corpus(default_synthetic_spec(documents, seed, variables));
            return std::make_pair(std::move(data.corpus), labels_to_json(data.gold));
        },
        py::arg("documents") = 280, py::arg("seed") = 7, py::arg("variables") = 14);

    m.def(
        "split_gold",
        [](const Corpus& corpus, const std::string& gold_json, std::size_t seed_docs, std::size_t holdout_docs,
           std::uint64_t rng_seed) {
            const auto split = split_gold(corpus, parse_labels(gold_json, &corpus), seed_docs, holdout_docs, rng_seed);
            return std::make_pair(labels_to_json(split.seed), labels_to_json(split.holdout));
        },
        py::arg("corpus"), py::arg("gold"), py::arg("seed_docs"), py::arg("holdout_docs"), py::arg("rng_seed") = 1);

    m.def(
        "word_tree",
        [](const Corpus& corpus, const std::string& query, std::size_t max_depth) {
            WordTreeOptions opts;
            opts.max_depth = max_depth;
            const WordTree tree = build_tree(corpus, query, opts);
            const std::vector<Prediction> none(corpus.size());
            json out = tree_payload(tree, corpus, none);
            out["documents"] = document_filter_ids(tree, corpus);
            return out.dump();
        },
        py::arg("corpus"), py::arg("query"), py::arg("max_depth") = WordTreeOptions{}.max_depth);

    m.def(
        "snap_span",
        [](const Corpus& corpus, const std::string& doc_id, const std::string& report_id, std::size_t start,
           std::size_t end) {
            const Document* d = corpus.find(doc_id);
            if (!d) throw Error("UnknownDocument", "unknown document '" + doc_id + "'");
            const Selection s = snap_span(*d, {report_id, start, end});
            return std::make_pair(s.start, s.end);
        },
        py::arg("corpus"), py::arg("doc_id"), py::arg("report_id"), py::arg("start"), py::arg("end"));

    py::class_<PyEngine>(m, "Engine")
        .def(py::init<const Corpus&, const std::string&, double, double, std::optional<std::string>>(),
             py::arg("corpus"), py::arg("seed"), py::arg("tau") = 0.1, py::arg("c") = 1.0,
             py::arg("data_dir") = py::none())
        .def("request", &PyEngine::request, py::arg("method"), py::arg("path"),
             py::arg("params") = std::map<std::string, std::string>{}, py::arg("body") = "")
        .def("retrain", &PyEngine::retrain)
        .def("evaluate", &PyEngine::evaluate, py::arg("holdout"))
        .def_property_readonly("round", &PyEngine::round);

    m.def(
        "replay",
        [](const Corpus& corpus, const std::string& seed_json, const std::string& script,
           const std::string& holdout_json) {
            const auto seed = parse_labels(seed_json, &corpus);
            const auto holdout = parse_labels(holdout_json, &corpus);
            py::gil_scoped_release release;
            return report_csv(replay(corpus, seed, parse_script(script, &corpus), holdout));
        },
        py::arg("corpus"), py::arg("seed"), py::arg("script"), py::arg("holdout"));

    m.def(
        "policy_run",
        [](const Corpus& corpus, const std::string& seed_json, const std::string& gold_json,
           const std::string& phrases_json, const std::string& holdout_json, const std::string& policy,
           std::size_t budget, std::size_t retrain_every) {
            PolicyOptions opts;
            opts.policy = parse_policy(policy);
            opts.budget = budget;
            opts.retrain_every = retrain_every;
            const auto seed = parse_labels(seed_json, &corpus);
            const auto gold = parse_labels(gold_json, &corpus);
            const auto holdout = parse_labels(holdout_json, &corpus);
            const auto phrases = parse_trigger_phrases(phrases_json);
            py::gil_scoped_release release;
            return report_csv(policy_run(corpus, seed, gold, phrases, holdout, opts));
        },
        py::arg("corpus"), py::arg("seed"), py::arg("gold"), py::arg("phrases"), py::arg("holdout"),
        py::arg("policy"), py::arg("budget"), py::arg("retrain_every") = 10);

    m.def("default_trigger_phrases", [] { return trigger_phrases_to_json(trigger_phrases(default_variable_rules())); });
}

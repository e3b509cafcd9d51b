#include "emr/json_io.hpp"

#include "emr/error.hpp"

namespace emr {

json to_json(const FeedbackItem& item) {
    json j{{"id", item.id},
           {"kind", std::string(to_string(item.kind))},
           {"variable", item.variable},
           {"class", std::string(to_string(item.target))},
           {"created_at", item.created_at_ms},
           {"status", std::string(to_string(item.status))},
           {"override_confirmed", item.override_confirmed}};
    if (item.doc_id) j["doc_id"] = *item.doc_id;
    if (item.span) j["span"] = {{"report_id", item.span->report_id}, {"start", item.span->start}, {"end", item.span->end}};
    if (!item.phrase.empty()) j["phrase"] = item.phrase;
    if (item.kind == FeedbackKind::PhraseLabel) j["documents"] = item.documents;
    if (!item.suppressed.empty()) j["suppressed"] = item.suppressed;
    return j;
}

FeedbackItem feedback_item_from_json(const json& j) {
    try {
        FeedbackItem item;
        item.id = j.at("id").get<std::uint64_t>();
        item.kind = parse_feedback_kind(j.at("kind").get<std::string>());
        item.variable = j.at("variable").get<std::string>();
        item.target = parse_target(j.at("class").get<std::string>());
        item.created_at_ms = j.value("created_at", std::int64_t{0});
        item.status = parse_feedback_status(j.value("status", std::string("pending")));
        item.override_confirmed = j.value("override_confirmed", false);
        if (j.contains("doc_id")) item.doc_id = j["doc_id"].get<std::string>();
        if (j.contains("span")) {
            const json& s = j["span"];
            item.span = Selection{s.at("report_id").get<std::string>(), s.at("start").get<std::size_t>(),
                                  s.at("end").get<std::size_t>()};
        }
        if (j.contains("phrase")) item.phrase = j["phrase"].get<std::vector<std::string>>();
        if (j.contains("documents")) item.documents = j["documents"].get<std::vector<std::string>>();
        if (j.contains("suppressed")) item.suppressed = j["suppressed"].get<std::vector<std::string>>();
        return item;
    } catch (const json::exception& e) {
        throw Error("MalformedLedger", std::string("bad feedback item: ") + e.what());
    }
}

json to_json(const Conflict& c) {
    return {{"kind", std::string(to_string(c.kind))},
            {"items", c.items},
            {"variable", c.variable},
            {"doc_id", c.doc_id},
            {"explanation", c.explanation}};
}

json to_json(const std::vector<Conflict>& conflicts) {
    json arr = json::array();
    for (const auto& c : conflicts) arr.push_back(to_json(c));
    return arr;
}

json to_json(const DiffEntry& e) {
    return {{"doc_id", e.doc_id},
            {"variable", e.variable},
            {"old_class", std::string(to_string(e.old_class))},
            {"new_class", std::string(to_string(e.new_class))},
            {"old_probability", e.old_probability},
            {"new_probability", e.new_probability}};
}

json to_json(const DiffReport& r) {
    json changes = json::array();
    for (const auto& e : r.changes) changes.push_back(to_json(e));
    return {{"changes", std::move(changes)}, {"timestamp", r.timestamp_ms}, {"feedback_consumed", r.feedback_consumed}};
}

json to_json(const Metrics& m) {
    const Confusion& c = m.confusion;
    return {{"accuracy", m.accuracy},
            {"precision", m.precision},
            {"recall", m.recall},
            {"f1", m.f1},
            {"unknown", c.unknown()},
            {"confusion",
             {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}, {"unknown_true", c.unknown_true},
              {"unknown_false", c.unknown_false}}}};
}

json to_json(const Histogram& h) {
    return {{"true", h.n_true}, {"false", h.n_false}, {"unknown", h.n_unknown}};
}

json to_json(const TermWeight& t) {
    return {{"term", t.term}, {"weight", t.weight}, {"polarity", t.positive() ? "true" : "false"}};
}

json to_json(const VariableModel& m) {
    return {{"variable", m.variable},
            {"vocabulary", m.vocabulary.terms()},
            {"weights", m.weights},
            {"bias", m.bias},
            {"calibration", {{"a", m.calibration.a}, {"b", m.calibration.b}}},
            {"trained_counts", {{"true", m.n_true}, {"false", m.n_false}}}};
}

VariableModel variable_model_from_json(const json& j) {
    try {
        VariableModel m;
        m.variable = j.at("variable").get<std::string>();
        auto terms = j.at("vocabulary").get<std::vector<std::string>>();
        m.vocabulary = Vocabulary(terms);
        if (m.vocabulary.terms() != terms) throw Error("MalformedSnapshot", "vocabulary must be sorted and unique");
        m.weights = j.at("weights").get<std::vector<double>>();
        if (m.weights.size() != m.vocabulary.size())
            throw Error("MalformedSnapshot", "weight count does not match vocabulary for '" + m.variable + "'");
        m.bias = j.at("bias").get<double>();
        m.calibration = {j.at("calibration").at("a").get<double>(), j.at("calibration").at("b").get<double>()};
        m.n_true = j.at("trained_counts").at("true").get<std::size_t>();
        m.n_false = j.at("trained_counts").at("false").get<std::size_t>();
        return m;
    } catch (const json::exception& e) {
        throw Error("MalformedSnapshot", std::string("bad model entry: ") + e.what());
    }
}

namespace {

json node_payload(const TreeNode& node, const WordTree& tree, std::span<const Prediction> predictions) {
    const NodeGradient g = node_gradient(node, predictions);
    json children = json::array();
    for (const auto& c : node.children) children.push_back(node_payload(c, tree, predictions));
    return {{"token", node.token},
            {"weight", node.weight()},
            {"scale", font_scale(node, tree)},
            {"gradient", {{"t", g.frac_true}, {"f", g.frac_false}, {"u", g.frac_unknown}}},
            {"children", std::move(children)}};
}

}  // namespace

json tree_payload(const WordTree& tree, const Corpus& corpus, std::span<const Prediction> predictions) {
    const Coverage cov = coverage(tree, corpus);
    return {{"root", tree.root_phrase()},
            {"coverage", {{"docs", cov.documents}, {"percent", cov.percent}}},
            {"forward", node_payload(tree.forward(), tree, predictions)},
            {"backward", node_payload(tree.backward(), tree, predictions)}};
}

}  // namespace emr

#include "emr/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "emr/error.hpp"
#include "emr/service.hpp"

namespace emr {

namespace {

std::string read_file(const std::filesystem::path& path, const char* code) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(code, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void check_reference(const json& body, const Corpus& corpus, std::size_t index) {
    if (body.contains("doc_id")) {
        if (!body["doc_id"].is_string() || !corpus.find(body["doc_id"].get<std::string>()))
            throw ScriptError(index, "UnknownDocument", "unknown document " + body["doc_id"].dump());
    }
    if (body.contains("variable")) {
        if (!body["variable"].is_string() || !corpus.has_variable(body["variable"].get<std::string>()))
            throw ScriptError(index, "UnknownVariable", "unknown variable " + body["variable"].dump());
    }
}

}  // namespace

FeedbackScript parse_script(std::string_view jsonl, const Corpus* corpus) {
    FeedbackScript script;
    std::optional<std::uint64_t> last_round;
    std::size_t pos = 0;
    while (pos <= jsonl.size()) {
        const std::size_t nl = jsonl.find('\n', pos);
        const std::string_view line = jsonl.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? jsonl.size() + 1 : nl + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

        const std::size_t index = script.actions.size();
        json body = json::parse(line, nullptr, false);
        if (body.is_discarded() || !body.is_object()) throw ScriptError(index, "MalformedScript", "not a JSON object");

        ScriptAction action;
        if (body.contains("round")) {
            if (!body["round"].is_number_unsigned()) throw ScriptError(index, "MalformedScript", "round must be a non-negative integer");
            action.round = body["round"].get<std::uint64_t>();
            if (last_round && *action.round < *last_round)
                throw ScriptError(index, "MalformedScript", "rounds must be nondecreasing");
            last_round = action.round;
            body.erase("round");
        }
        if (body.contains("action")) {
            const std::string name = body["action"].is_string() ? body["action"].get<std::string>() : "";
            if (name == "retrain") {
                action.type = ScriptAction::Type::Retrain;
            } else if (name == "resolve") {
                action.type = ScriptAction::Type::Resolve;
                if (!body.contains("id") || !body["id"].is_number_unsigned())
                    throw ScriptError(index, "MalformedScript", "resolve needs a numeric id");
                if (!body.contains("resolution") || !body["resolution"].is_string())
                    throw ScriptError(index, "MalformedScript", "resolve needs a resolution");
            } else {
                throw ScriptError(index, "MalformedScript", "unknown action " + body["action"].dump());
            }
        } else if (!body.contains("kind")) {
            throw ScriptError(index, "MalformedScript", "line has neither 'kind' nor 'action'");
        }
        if (corpus) check_reference(body, *corpus, index);
        action.body = std::move(body);
        script.actions.push_back(std::move(action));
    }
    return script;
}

FeedbackScript load_script(const std::filesystem::path& path, const Corpus* corpus) {
    return parse_script(read_file(path, "MalformedScript"), corpus);
}

std::string script_to_jsonl(const FeedbackScript& script) {
    std::string out;
    for (const auto& a : script.actions) {
        json j = a.body;
        if (a.round) j["round"] = *a.round;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::string report_csv(const ConvergenceReport& report) {
    std::string out = "round,train_size,accuracy,precision,recall,f1,unknown,diff_size\n";
    char buf[256];
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.6f,%.6f,%.6f,%.6f,%zu,%zu\n", r.round, r.train_size,
                      r.metrics.accuracy, r.metrics.precision, r.metrics.recall, r.metrics.f1,
                      r.metrics.confusion.unknown(), r.diff_size);
        out += buf;
    }
    return out;
}

void write_report_csv(const std::filesystem::path& path, const ConvergenceReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("IoError", "cannot write " + path.string());
    out << report_csv(report);
}

// ---------------------------------------------------------------------------

namespace {

Corpus reviewed_corpus(const Corpus& full, const std::vector<Label>& seed, const std::vector<Label>& holdout) {
    std::set<std::string> held;
    for (const auto& l : holdout) {
        if (!full.find(l.doc_id)) throw Error("UnknownDocument", "held-out document '" + l.doc_id + "' is not in the corpus");
        held.insert(l.doc_id);
    }
    for (const auto& l : seed)
        if (held.count(l.doc_id)) throw Error("OverlapError", "document '" + l.doc_id + "' is both seed and held out");
    return full.subset([&](const Document& d) { return held.count(d.doc_id) == 0; });
}

}  // namespace

HarnessSession::HarnessSession(const Corpus& corpus, std::vector<Label> seed, std::vector<Label> holdout,
                               HarnessOptions options)
    : full_(corpus), holdout_(std::move(holdout)) {
    const std::int64_t ms = options.clock_ms;
    engine_ = std::make_unique<Engine>(reviewed_corpus(corpus, seed, holdout_), std::move(seed), options.engine,
                                       std::nullopt, [ms] { return ms; });
    api_ = std::make_unique<Api>(*engine_);
    report_.rows.push_back(measure(0));
}

HarnessSession::~HarnessSession() = default;

ConvergenceRow HarnessSession::measure(std::size_t diff_size) const {
    const auto snap = engine_->snapshot();
    ConvergenceRow row;
    row.round = snap->round;
    row.actions = feedback_actions_;
    row.train_size = snap->train_size;
    row.metrics = evaluate_models(*snap, full_, holdout_, engine_->config().hyper.tau).overall;
    row.diff_size = diff_size;
    return row;
}

bool HarnessSession::run(const ScriptAction& action, std::size_t index) {
    ApiRequest req;
    req.method = "POST";
    switch (action.type) {
    case ScriptAction::Type::Feedback:
        req.path = "/api/feedback";
        req.body = action.body.dump();
        break;
    case ScriptAction::Type::Resolve: {
        req.path = "/api/feedback/" + std::to_string(action.body.at("id").get<std::uint64_t>()) + "/resolve";
        json body{{"action", action.body.at("resolution")}};
        if (action.body.contains("class")) body["class"] = action.body["class"];
        req.body = body.dump();
        break;
    }
    case ScriptAction::Type::Retrain:
        req.path = "/api/retrain";
        break;
    }
    const ApiResponse res = api_->handle(req);
    if (res.status >= 400)
        throw ScriptError(index, res.body.value("code", "Error"), res.body.value("message", ""));

    if (action.type == ScriptAction::Type::Feedback) ++feedback_actions_;
    if (action.type != ScriptAction::Type::Retrain) return false;
    report_.rows.push_back(measure(res.body.at("diff").at("changes").size()));
    return true;
}

ConvergenceReport replay(const Corpus& corpus, const std::vector<Label>& seed, const FeedbackScript& script,
                         const std::vector<Label>& holdout, const HarnessOptions& options) {
    HarnessSession session(corpus, seed, holdout, options);
    for (std::size_t i = 0; i < script.actions.size(); ++i) {
        if (script.actions[i].type == ScriptAction::Type::Feedback) check_reference(script.actions[i].body, corpus, i);
        session.run(script.actions[i], i);
    }
    return session.report();
}

// ---------------------------------------------------------------------------

std::string_view to_string(Policy policy) { return policy == Policy::DocByDoc ? "doc" : "phrase"; }

Policy parse_policy(std::string_view name) {
    if (name == "doc") return Policy::DocByDoc;
    if (name == "phrase") return Policy::PhraseFirst;
    throw Error("InvalidPolicy", "policy must be 'doc' or 'phrase'");
}

std::vector<TriggerPhrase> parse_trigger_phrases(std::string_view json_text) {
    const json root = json::parse(json_text, nullptr, false);
    if (root.is_discarded() || !root.is_array()) throw Error("MalformedPhrases", "expected a JSON array");
    std::vector<TriggerPhrase> out;
    for (std::size_t i = 0; i < root.size(); ++i) {
        const json& e = root[i];
        if (!e.is_object() || !e.contains("phrase") || !e["phrase"].is_string() || !e.contains("variable") ||
            !e["variable"].is_string())
            throw Error("MalformedPhrases", "/" + std::to_string(i) + ": expected {\"phrase\", \"variable\"}");
        out.push_back({e["phrase"].get<std::string>(), e["variable"].get<std::string>()});
    }
    return out;
}

std::vector<TriggerPhrase> load_trigger_phrases(const std::filesystem::path& path) {
    return parse_trigger_phrases(read_file(path, "MalformedPhrases"));
}

std::vector<TriggerPhrase> trigger_phrases(const std::vector<VariableRule>& rules) {
    std::vector<TriggerPhrase> out;
    for (const auto& r : rules)
        for (const auto& t : r.triggers) out.push_back({t, r.name});
    return out;
}

std::string trigger_phrases_to_json(const std::vector<TriggerPhrase>& phrases) {
    json out = json::array();
    for (const auto& p : phrases) out.push_back({{"phrase", p.phrase}, {"variable", p.variable}});
    return out.dump(2) + "\n";
}

namespace {

// Policy actions as groups of script lines, one group per action.
std::vector<std::vector<json>> policy_actions(const Corpus& reviewed, const std::vector<Label>& seed,
                                              const std::vector<Label>& gold,
                                              const std::vector<TriggerPhrase>& phrases, const PolicyOptions& opts) {
    std::vector<std::vector<json>> actions;
    if (opts.policy == Policy::DocByDoc) {
        std::set<std::string> seeded;
        for (const auto& l : seed) seeded.insert(l.doc_id);
        std::map<std::string, std::vector<const Label*>> by_doc;
        for (const auto& l : gold) by_doc[l.doc_id].push_back(&l);
        for (const auto& doc : reviewed.documents()) {
            if (actions.size() == opts.budget) break;
            if (seeded.count(doc.doc_id)) continue;
            auto it = by_doc.find(doc.doc_id);
            if (it == by_doc.end()) continue;
            std::vector<json> group;
            for (const Label* l : it->second)
                group.push_back({{"kind", "document"}, {"doc_id", l->doc_id}, {"variable", l->variable},
                                 {"class", l->value ? "true" : "false"}});
            actions.push_back(std::move(group));
        }
    } else {
        struct Ranked {
            std::size_t coverage;
            std::size_t order;
        };
        std::vector<Ranked> ranked;
        std::set<std::pair<std::string, std::string>> seen;
        for (std::size_t i = 0; i < phrases.size(); ++i) {
            const auto tokens = normalize_phrase(phrases[i].phrase);
            if (tokens.empty() || !reviewed.has_variable(phrases[i].variable)) continue;
            if (!seen.insert({join_phrase(tokens), phrases[i].variable}).second) continue;
            const std::size_t docs = coverage(build_tree(reviewed, tokens), reviewed).documents;
            if (docs > 0) ranked.push_back({docs, i});
        }
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const Ranked& a, const Ranked& b) { return a.coverage > b.coverage; });
        for (const auto& r : ranked) {
            if (actions.size() == opts.budget) break;
            actions.push_back({json{{"kind", "phrase"}, {"variable", phrases[r.order].variable},
                                    {"phrase", phrases[r.order].phrase}, {"class", "true"}}});
        }
    }
    return actions;
}

void check_policy(const PolicyOptions& opts) {
    if (opts.budget == 0) throw Error("InvalidPolicy", "budget must be at least 1");
    if (opts.retrain_every == 0) throw Error("InvalidPolicy", "retrain interval must be at least 1");
}

FeedbackScript build_policy_script(const Corpus& corpus, const std::vector<Label>& seed,
                                   const std::vector<Label>& gold, const std::vector<TriggerPhrase>& phrases,
                                   const std::vector<Label>& holdout, const PolicyOptions& options,
                                   std::vector<std::size_t>& counts) {
    check_policy(options);
    const Corpus reviewed = reviewed_corpus(corpus, seed, holdout);
    const auto actions = policy_actions(reviewed, seed, gold, phrases, options);
    FeedbackScript script;
    std::uint64_t round = 0;
    for (std::size_t a = 0; a < actions.size(); ++a) {
        for (const auto& line : actions[a]) script.actions.push_back({ScriptAction::Type::Feedback, round, line});
        if ((a + 1) % options.retrain_every == 0 || a + 1 == actions.size()) {
            script.actions.push_back({ScriptAction::Type::Retrain, round++, json{{"action", "retrain"}}});
            counts.push_back(a + 1);
        }
    }
    return script;
}

}  // namespace

FeedbackScript policy_script(const Corpus& corpus, const std::vector<Label>& seed, const std::vector<Label>& gold,
                             const std::vector<TriggerPhrase>& phrases, const std::vector<Label>& holdout,
                             const PolicyOptions& options) {
    std::vector<std::size_t> counts;
    return build_policy_script(corpus, seed, gold, phrases, holdout, options, counts);
}

ConvergenceReport policy_run(const Corpus& corpus, const std::vector<Label>& seed, const std::vector<Label>& gold,
                             const std::vector<TriggerPhrase>& phrases, const std::vector<Label>& holdout,
                             const PolicyOptions& options) {
    std::vector<std::size_t> counts;
    const FeedbackScript script = build_policy_script(corpus, seed, gold, phrases, holdout, options, counts);
    ConvergenceReport report = replay(corpus, seed, script, holdout, options.harness);
    // Rows count policy actions, not script lines.
    for (std::size_t r = 1; r < report.rows.size() && r - 1 < counts.size(); ++r) report.rows[r].actions = counts[r - 1];
    return report;
}

}  // namespace emr

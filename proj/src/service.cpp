#include "emr/service.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <httplib.h>

#include "emr/error.hpp"

namespace emr {

std::string_view to_string(SortOrder order) {
    switch (order) {
    case SortOrder::CorpusOrder: return "corpus";
    case SortOrder::ProbabilityAscending: return "asc";
    case SortOrder::ProbabilityDescending: return "desc";
    case SortOrder::Uncertainty: return "uncertain";
    }
    return "corpus";
}

SortOrder parse_sort_order(std::string_view name) {
    if (name == "corpus") return SortOrder::CorpusOrder;
    if (name == "asc") return SortOrder::ProbabilityAscending;
    if (name == "desc") return SortOrder::ProbabilityDescending;
    if (name == "uncertain") return SortOrder::Uncertainty;
    throw Error("InvalidParameter", "unknown sort order '" + std::string(name) + "'");
}

std::optional<std::string> ApiRequest::param(const std::string& key) const {
    auto it = params.find(key);
    if (it == params.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> ApiRequest::params_of(const std::string& key) const {
    std::vector<std::string> out;
    auto [a, b] = params.equal_range(key);
    for (auto it = a; it != b; ++it) out.push_back(it->second);
    return out;
}

namespace {

ApiResponse error_response(int status, const std::string& code, const std::string& message) {
    return {status, json{{"code", code}, {"message", message}}};
}

int status_for(const std::string& code) {
    if (code == "UnresolvedConflicts") return 409;
    if (code == "Busy") return 429;
    if (code == "NotFound" || code == "AllVisited") return 404;
    return 400;
}

json prediction_json(const Prediction& p) {
    json j{{"class", std::string(to_string(p.cls))}};
    j["probability"] = p.cls == Class::Unknown ? json(nullptr) : json(p.probability);
    return j;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t begin = 0;
    while (true) {
        const std::size_t end = s.find(sep, begin);
        out.push_back(s.substr(begin, end == std::string::npos ? std::string::npos : end - begin));
        if (end == std::string::npos) break;
        begin = end + 1;
    }
    return out;
}

const json& field(const json& body, const char* key) {
    if (!body.is_object() || !body.contains(key)) throw Error("InvalidRequest", std::string("missing field '") + key + "'");
    return body.at(key);
}

std::string string_field(const json& body, const char* key) {
    const json& v = field(body, key);
    if (!v.is_string()) throw Error("InvalidRequest", std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

bool label_class(const json& body) {
    const Target t = parse_target(string_field(body, "class"));
    if (t == Target::Neither) throw Error("InvalidClass", "use kind 'neither' for non-indicative phrases");
    return t == Target::True;
}

Direction parse_direction(const std::string& s) {
    if (s == "f" || s == "forward") return Direction::Forward;
    if (s == "b" || s == "backward") return Direction::Backward;
    throw Error("InvalidParameter", "drill direction must be 'f' or 'b'");
}

WordTree apply_drills(WordTree tree, const Corpus& corpus, const std::vector<std::string>& drills) {
    for (const auto& d : drills) {
        const auto colon = d.find(':');
        if (colon == std::string::npos) throw Error("InvalidParameter", "drill must look like 'b:token' or 'f:token'");
        tree = drill_down(tree, corpus, d.substr(colon + 1), parse_direction(d.substr(0, colon)));
    }
    return tree;
}

}  // namespace

Api::Api(Engine& engine) : engine_(engine) {}

SessionState Api::session() const {
    std::lock_guard lock(session_mutex_);
    return session_;
}

ApiResponse Api::handle(const ApiRequest& request) {
    try {
        return dispatch(request);
    } catch (const Error& e) {
        ApiResponse r = error_response(status_for(e.code()), e.code(), e.what());
        if (e.code() == "UnresolvedConflicts") r.body["conflicts"] = to_json(engine_.conflicts());
        return r;
    } catch (const json::exception& e) {
        return error_response(400, "InvalidRequest", e.what());
    } catch (const std::exception& e) {
        return error_response(500, "InternalError", e.what());
    }
}

ApiResponse Api::dispatch(const ApiRequest& req) {
    const std::string& p = req.path;
    const std::string prefix = "/api/";
    if (p.rfind(prefix, 0) != 0) return error_response(404, "NotFound", "no such endpoint " + p);
    const auto parts = split(p.substr(prefix.size()), '/');
    const std::string& head = parts[0];
    const bool get = req.method == "GET", post = req.method == "POST", del = req.method == "DELETE";

    if (parts.size() == 1) {
        if (get && head == "health") return get_health();
        if (get && head == "grid") return get_grid(req);
        if (get && head == "stats") return get_stats(req);
        if (get && head == "wordtree") return get_wordtree(req);
        if (get && head == "feedback") return get_feedback();
        if (post && head == "feedback") return post_feedback(req);
        if (post && head == "retrain") return post_retrain();
        if (post && head == "visit") return post_visit(req);
        if (get && head == "next") return get_next(req);
        if (get && head == "evaluate") return get_evaluate(req);
        if (get && head == "session") return get_session();
        if (del && head == "filter") return delete_filter();
    }
    if (parts.size() == 2 && get && head == "document" && !parts[1].empty()) return get_document(req, parts[1]);
    if (parts.size() == 3 && post && head == "feedback" && parts[2] == "resolve") {
        std::uint64_t id = 0;
        try {
            id = std::stoull(parts[1]);
        } catch (const std::exception&) {
            throw Error("InvalidParameter", "feedback id must be a number");
        }
        return post_resolve(req, id);
    }
    return error_response(404, "NotFound", "no such endpoint " + req.method + " " + p);
}

std::size_t Api::variable_param(const ApiRequest& req, const char* key) const {
    if (auto v = req.param(key)) {
        auto idx = engine_.corpus().variable_index(*v);
        if (!idx) throw Error("UnknownVariable", "unknown variable '" + *v + "'");
        return *idx;
    }
    std::lock_guard lock(session_mutex_);
    if (session_.active) return session_.active->second;
    return session_.sort_variable;
}

std::optional<std::vector<std::size_t>> Api::filter_param(const ApiRequest& req) const {
    const auto f = req.param("filter");
    if (f && *f == "all") return std::nullopt;
    if (f && *f != "tree") throw Error("InvalidParameter", "filter must be 'all' or 'tree'");
    std::lock_guard lock(session_mutex_);
    if (!session_.tree) return std::nullopt;
    return document_filter(*session_.tree);
}

std::vector<std::size_t> Api::row_order(const Snapshot& snap, std::size_t variable, SortOrder order,
                                        const std::optional<std::vector<std::size_t>>& filter) const {
    std::vector<std::size_t> rows;
    if (filter) {
        rows = *filter;
    } else {
        rows.resize(engine_.corpus().size());
        std::iota(rows.begin(), rows.end(), 0);
    }
    const auto& col = snap.models.predictions.cells[variable];
    const auto unknown = [&](std::size_t d) { return col[d].cls == Class::Unknown; };
    switch (order) {
    case SortOrder::CorpusOrder: break;
    case SortOrder::ProbabilityAscending:
    case SortOrder::ProbabilityDescending: {
        const bool asc = order == SortOrder::ProbabilityAscending;
        std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
            if (unknown(a) != unknown(b)) return !unknown(a);
            if (unknown(a)) return false;
            return asc ? col[a].probability < col[b].probability : col[a].probability > col[b].probability;
        });
        break;
    }
    case SortOrder::Uncertainty:
        std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
            return std::fabs(col[a].probability - 0.5) < std::fabs(col[b].probability - 0.5);
        });
        break;
    }
    return rows;
}

ApiResponse Api::get_health() {
    const auto snap = engine_.snapshot();
    return {200, json{{"status", "ok"},
                      {"documents", engine_.corpus().size()},
                      {"variables", engine_.corpus().variables()},
                      {"round", snap->round}}};
}

ApiResponse Api::get_grid(const ApiRequest& req) {
    const auto snap = engine_.snapshot();
    const Corpus& corpus = engine_.corpus();

    std::size_t sort_var;
    SortOrder order;
    {
        std::lock_guard lock(session_mutex_);
        sort_var = session_.sort_variable;
        order = session_.sort;
    }
    if (auto vs = req.param("variable_sort")) {
        const auto colon = vs->rfind(':');
        const std::string name = colon == std::string::npos ? *vs : vs->substr(0, colon);
        auto idx = corpus.variable_index(name);
        if (!idx) throw Error("InvalidParameter", "unknown sort variable '" + name + "'");
        sort_var = *idx;
        order = colon == std::string::npos ? SortOrder::ProbabilityAscending : parse_sort_order(vs->substr(colon + 1));
    }
    const auto filter = filter_param(req);
    const auto rows = row_order(*snap, sort_var, order, filter);

    SessionState session;
    {
        std::lock_guard lock(session_mutex_);
        session_.sort_variable = sort_var;
        session_.sort = order;
        session = session_;
    }

    const auto& vars = corpus.variables();
    json skew = json::object();
    for (std::size_t v = 0; v < vars.size(); ++v)
        skew[vars[v]] = to_json(variable_distribution(snap->models.predictions.cells[v], rows));

    json out_rows = json::array();
    for (std::size_t d : rows) {
        const std::string& doc_id = corpus.documents()[d].doc_id;
        json cells = json::array();
        for (std::size_t v = 0; v < vars.size(); ++v) {
            json cell = prediction_json(snap->models.predictions.at(v, d));
            cell["visited"] = session.visited.count({d, v}) > 0;
            cell["changed"] = snap->changed(doc_id, vars[v]);
            cells.push_back(std::move(cell));
        }
        out_rows.push_back({{"doc_id", doc_id}, {"cells", std::move(cells)}});
    }

    json filter_json{{"active", filter.has_value()}, {"docs", rows.size()}};
    if (filter && session.tree) filter_json["query"] = join_phrase(session.tree->root_phrase());
    return {200, json{{"variables", vars},
                      {"skew", std::move(skew)},
                      {"rows", std::move(out_rows)},
                      {"sort", {{"variable", vars[sort_var]}, {"order", std::string(to_string(order))}}},
                      {"filter", std::move(filter_json)},
                      {"round", snap->round},
                      {"pending", engine_.pending_count()}}};
}

ApiResponse Api::get_document(const ApiRequest& req, const std::string& doc_id) {
    const Corpus& corpus = engine_.corpus();
    const auto d = corpus.index_of(doc_id);
    if (!d) return error_response(404, "UnknownDocument", "unknown document '" + doc_id + "'");
    const Document& doc = corpus.documents()[*d];
    const std::size_t v = variable_param(req, "variable");
    const auto snap = engine_.snapshot();
    const VariableModel& model = snap->models.models[v];

    json reports = json::array();
    for (std::size_t r = 0; r < doc.reports.size(); ++r)
        reports.push_back({{"id", doc.reports[r].id},
                           {"kind", std::string(to_string(doc.reports[r].kind))},
                           {"start", doc.report_spans[r].start},
                           {"end", doc.report_spans[r].end}});
    json boilerplate = json::array();
    for (const auto& s : doc.boilerplate) boilerplate.push_back({s.start, s.end});

    const auto indicators = document_indicators(model, doc);
    json ind = json::array();
    for (const auto& i : indicators) {
        json spans = json::array();
        for (const auto& s : i.spans) spans.push_back({s.start, s.end});
        json j = to_json(i.term);
        j["spans"] = std::move(spans);
        ind.push_back(std::move(j));
    }

    // Top terms of the variable, flagged by presence so absent ones can be
    // animated instead of scrolled to.
    json keywords = json::array();
    if (!model.is_null()) {
        const TopTerms top = top_terms(model, 10);
        for (const auto* list : {&top.for_true, &top.for_false}) {
            for (const auto& t : *list) {
                json j = to_json(t);
                auto it = std::find_if(indicators.begin(), indicators.end(),
                                       [&](const Indicator& i) { return i.term.term == t.term; });
                j["present"] = it != indicators.end();
                j["first_offset"] = it != indicators.end() ? json(it->spans.front().start) : json(nullptr);
                keywords.push_back(std::move(j));
            }
        }
    }

    return {200, json{{"doc_id", doc.doc_id},
                      {"text", doc.text},
                      {"reports", std::move(reports)},
                      {"boilerplate", std::move(boilerplate)},
                      {"variable", corpus.variables()[v]},
                      {"prediction", prediction_json(snap->models.predictions.at(v, *d))},
                      {"indicators", std::move(ind)},
                      {"keywords", std::move(keywords)}}};
}

ApiResponse Api::get_stats(const ApiRequest& req) {
    const std::size_t v = variable_param(req, "variable");
    const auto snap = engine_.snapshot();
    const auto filter = filter_param(req);
    const auto& col = snap->models.predictions.cells[v];
    const Histogram h = filter ? variable_distribution(col, *filter) : variable_distribution(col);

    std::size_t k = 10;
    if (auto ks = req.param("k")) {
        try {
            k = std::stoul(*ks);
        } catch (const std::exception&) {
            throw Error("InvalidParameter", "k must be a number");
        }
    }
    json top{{"true", json::array()}, {"false", json::array()}};
    const VariableModel& model = snap->models.models[v];
    if (!model.is_null()) {
        const TopTerms t = top_terms(model, k);
        for (const auto& tw : t.for_true) top["true"].push_back(to_json(tw));
        for (const auto& tw : t.for_false) top["false"].push_back(to_json(tw));
    }
    return {200, json{{"variable", engine_.corpus().variables()[v]},
                      {"filter_size", filter ? filter->size() : engine_.corpus().size()},
                      {"histogram", to_json(h)},
                      {"top_terms", std::move(top)}}};
}

ApiResponse Api::get_wordtree(const ApiRequest& req) {
    const auto q = req.param("q");
    if (!q || normalize_phrase(*q).empty()) throw Error("EmptyQuery", "query contains no searchable tokens");
    const std::size_t v = variable_param(req, "variable");
    WordTree tree = apply_drills(engine_.build_tree(*q), engine_.corpus(), req.params_of("drill"));
    const auto snap = engine_.snapshot();

    json out = tree_payload(tree, engine_.corpus(), snap->models.predictions.cells[v]);
    out["documents"] = document_filter_ids(tree, engine_.corpus());
    out["variable"] = engine_.corpus().variables()[v];
    {
        std::lock_guard lock(session_mutex_);
        session_.tree = std::move(tree);
    }
    return {200, std::move(out)};
}

ApiResponse Api::delete_filter() {
    std::lock_guard lock(session_mutex_);
    session_.tree.reset();
    return {200, json{{"filter", nullptr}}};
}

json Api::ledger_state() const {
    json items = json::array();
    for (const auto& item : engine_.ledger_items()) items.push_back(to_json(item));
    return {{"items", std::move(items)}, {"conflicts", to_json(engine_.conflicts())}, {"pending", engine_.pending_count()}};
}

ApiResponse Api::get_feedback() { return {200, ledger_state()}; }

ApiResponse Api::post_feedback(const ApiRequest& req) {
    const json body = json::parse(req.body);
    const FeedbackKind kind = parse_feedback_kind(string_field(body, "kind"));
    const std::string variable = string_field(body, "variable");
    FeedbackItem item;
    switch (kind) {
    case FeedbackKind::DocumentLabel:
        item = engine_.add_document_label(string_field(body, "doc_id"), variable, label_class(body));
        break;
    case FeedbackKind::SpanHighlight: {
        Selection raw{string_field(body, "report_id"), field(body, "start").get<std::size_t>(),
                      field(body, "end").get<std::size_t>()};
        item = engine_.add_span_feedback(string_field(body, "doc_id"), variable, raw, label_class(body));
        break;
    }
    case FeedbackKind::PhraseLabel: {
        const bool value = label_class(body);
        std::optional<WordTree> tree;
        if (body.contains("phrase")) {
            std::vector<std::string> drills;
            if (body.contains("drill")) drills = body["drill"].get<std::vector<std::string>>();
            tree = apply_drills(engine_.build_tree(string_field(body, "phrase")), engine_.corpus(), drills);
        } else {
            std::lock_guard lock(session_mutex_);
            tree = session_.tree;
        }
        if (!tree) throw Error("EmptyTree", "no phrase given and no word tree is active");
        item = engine_.add_phrase_feedback(*tree, variable, value);
        break;
    }
    case FeedbackKind::NeitherTerm:
        item = engine_.add_neither_feedback(string_field(body, "phrase"), variable);
        break;
    }
    json out = ledger_state();
    out.erase("items");
    out["item"] = to_json(item);
    return {201, std::move(out)};
}

ApiResponse Api::post_resolve(const ApiRequest& req, std::uint64_t id) {
    const json body = json::parse(req.body);
    const std::string action = string_field(body, "action");
    FeedbackItem item;
    if (action == "delete") item = engine_.resolve(id, Resolution::Delete);
    else if (action == "edit") item = engine_.resolve(id, Resolution::Edit, parse_target(string_field(body, "class")));
    else if (action == "confirm_override") item = engine_.resolve(id, Resolution::ConfirmOverride);
    else throw Error("InvalidRequest", "action must be delete, edit or confirm_override");
    json out = ledger_state();
    out.erase("items");
    out["item"] = to_json(item);
    return {200, std::move(out)};
}

ApiResponse Api::post_retrain() {
    const DiffReport diff = engine_.retrain();
    const auto snap = engine_.snapshot();
    return {200, json{{"diff", to_json(diff)},
                      {"round", snap->round},
                      {"train_size", snap->train_size},
                      {"pending", engine_.pending_count()}}};
}

ApiResponse Api::post_visit(const ApiRequest& req) {
    const json body = json::parse(req.body);
    const std::string doc_id = string_field(body, "doc_id");
    const std::string variable = string_field(body, "variable");
    const auto d = engine_.corpus().index_of(doc_id);
    if (!d) throw Error("UnknownDocument", "unknown document '" + doc_id + "'");
    const auto v = engine_.corpus().variable_index(variable);
    if (!v) throw Error("UnknownVariable", "unknown variable '" + variable + "'");
    std::lock_guard lock(session_mutex_);
    session_.active = {*d, *v};
    session_.visited.insert({*d, *v});
    return {200, json{{"active", {{"doc_id", doc_id}, {"variable", variable}}}, {"visited", session_.visited.size()}}};
}

ApiResponse Api::get_next(const ApiRequest& req) {
    const std::size_t v = variable_param(req, "variable");
    const auto snap = engine_.snapshot();
    SortOrder order;
    {
        std::lock_guard lock(session_mutex_);
        order = session_.sort;
    }
    if (auto o = req.param("order")) order = parse_sort_order(*o);
    const auto filter = filter_param(req);
    const auto rows = row_order(*snap, v, order, filter);
    const SessionState session = this->session();
    for (std::size_t d : rows) {
        if (session.visited.count({d, v})) continue;
        return {200, json{{"doc_id", engine_.corpus().documents()[d].doc_id},
                          {"variable", engine_.corpus().variables()[v]},
                          {"prediction", prediction_json(snap->models.predictions.at(v, d))}}};
    }
    throw Error("AllVisited", "every document has been visited for '" + engine_.corpus().variables()[v] + "'");
}

ApiResponse Api::get_evaluate(const ApiRequest& req) {
    const auto path = req.param("holdout");
    if (!path) throw Error("InvalidParameter", "holdout file path is required");
    const auto labels = load_labels(*path, &engine_.corpus());
    const EvaluationReport report = engine_.evaluate(labels);
    json per = json::object();
    for (std::size_t v = 0; v < report.variables.size(); ++v) per[report.variables[v]] = to_json(report.per_variable[v]);
    return {200, json{{"variables", std::move(per)}, {"overall", to_json(report.overall)}, {"labels", labels.size()}}};
}

ApiResponse Api::get_session() {
    const SessionState s = session();
    const Corpus& corpus = engine_.corpus();
    json out;
    out["active"] = s.active ? json{{"doc_id", corpus.documents()[s.active->first].doc_id},
                                    {"variable", corpus.variables()[s.active->second]}}
                             : json(nullptr);
    json visited = json::array();
    for (const auto& [d, v] : s.visited) visited.push_back({corpus.documents()[d].doc_id, corpus.variables()[v]});
    out["visited"] = std::move(visited);
    out["sort"] = {{"variable", corpus.variables()[s.sort_variable]}, {"order", std::string(to_string(s.sort))}};
    out["filter"] = s.tree ? json{{"query", join_phrase(s.tree->root_phrase())},
                                  {"documents", document_filter_ids(*s.tree, corpus)}}
                           : json(nullptr);
    return {200, std::move(out)};
}

// ---------------------------------------------------------------------------

namespace {

std::unique_ptr<Engine> open_engine(const ServiceConfig& config) {
    const BoilerplateConfig boilerplate =
        config.boilerplate ? load_boilerplate_config(*config.boilerplate) : BoilerplateConfig::defaults();
    Corpus corpus = load_corpus(config.corpus, boilerplate);
    if (corpus.size() == 0) throw Error("MalformedCorpus", config.corpus.string() + ": corpus has no documents");
    auto seed = load_labels(config.seed_labels, &corpus);
    EngineConfig ec;
    ec.hyper.tau = config.tau;
    ec.hyper.c = config.c;
    return std::make_unique<Engine>(std::move(corpus), std::move(seed), ec, config.data_dir);
}

constexpr const char* kIndexPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>emr-review</title></head>
<body><h1>emr-review</h1><p>The review API is served under <code>/api/</code>.
Start with <a href="/api/health">/api/health</a> or <a href="/api/grid">/api/grid</a>.</p></body></html>
)";

}  // namespace

Service::Service(const ServiceConfig& config)
    : config_(config), engine_(open_engine(config)), api_(std::make_unique<Api>(*engine_)),
      server_(std::make_unique<httplib::Server>()) {
    install_routes();
}

Service::~Service() { stop(); }

void Service::install_routes() {
    const auto forward = [this](const char* method) {
        return [this, method](const httplib::Request& req, httplib::Response& res) {
            ApiRequest r{method, req.path, {}, req.body};
            for (const auto& [k, v] : req.params) r.params.emplace(k, v);
            const ApiResponse out = api_->handle(r);
            res.status = out.status;
            res.set_content(out.body.dump(), "application/json");
        };
    };
    server_->Get(R"(/api/.*)", forward("GET"));
    server_->Post(R"(/api/.*)", forward("POST"));
    server_->Delete(R"(/api/.*)", forward("DELETE"));
    server_->set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
        res.status = 500;
        res.set_content(json{{"code", "InternalError"}, {"message", "unhandled server error"}}.dump(), "application/json");
    });
    if (config_.static_dir) {
        server_->set_mount_point("/", config_.static_dir->string());
    } else {
        server_->Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_content(kIndexPage, "text/html"); });
    }
}

int Service::start() {
    int port = config_.port;
    if (port == 0) {
        port = server_->bind_to_any_port(config_.host);
    } else if (!server_->bind_to_port(config_.host, port)) {
        port = -1;
    }
    if (port < 0) throw Error("BindError", "cannot listen on " + config_.host + ":" + std::to_string(config_.port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port;
}

void Service::run() {
    if (!server_->listen(config_.host, config_.port))
        throw Error("BindError", "cannot listen on " + config_.host + ":" + std::to_string(config_.port));
}

bool Service::running() const { return server_ && server_->is_running(); }

void Service::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace emr

#include "emr/engine.hpp"

#include <algorithm>
#include <chrono>
#include <sstream>

#include "emr/error.hpp"
#include "emr/json_io.hpp"

namespace emr {

namespace fs = std::filesystem;

namespace {

constexpr const char* kModelsFile = "models.json";
constexpr const char* kLedgerFile = "ledger.jsonl";

std::int64_t now_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

struct BusyGuard {
    explicit BusyGuard(std::atomic<bool>& flag) : flag_(flag) {
        bool expected = false;
        if (!flag_.compare_exchange_strong(expected, true)) throw Error("Busy", "a retrain is already in progress");
    }
    ~BusyGuard() { flag_ = false; }
    std::atomic<bool>& flag_;
};

std::set<LabelKey> changed_cells_of(const DiffReport& diff) {
    std::set<LabelKey> out;
    for (const auto& e : diff.changes) out.insert({e.doc_id, e.variable});
    return out;
}

}  // namespace

EvaluationReport evaluate_models(const Snapshot& snapshot, const Corpus& documents, const std::vector<Label>& heldout,
                                 double tau) {
    const auto& models = snapshot.models.models;
    EvaluationReport report;
    for (const auto& m : models) report.variables.push_back(m.variable);

    std::vector<std::vector<HeldOutExample>> by_var(models.size());
    for (const auto& l : heldout) {
        const Document* doc = documents.find(l.doc_id);
        if (!doc) throw Error("UnknownDocument", "held-out document '" + l.doc_id + "' is not in the corpus");
        auto it = std::find(report.variables.begin(), report.variables.end(), l.variable);
        if (it == report.variables.end()) throw Error("UnknownVariable", "unknown variable '" + l.variable + "'");
        by_var[static_cast<std::size_t>(it - report.variables.begin())].push_back({doc, l.value});
    }
    Confusion total;
    for (std::size_t v = 0; v < models.size(); ++v) {
        static const std::set<std::string> kNone;
        const auto& trained = v < snapshot.trained_docs.size() ? snapshot.trained_docs[v] : kNone;
        report.per_variable.push_back(evaluate(models[v], by_var[v], trained, tau));
        total += report.per_variable.back().confusion;
    }
    report.overall = metrics_from(total);
    return report;
}

Engine::Engine(Corpus corpus, std::vector<Label> seed, EngineConfig config, std::optional<fs::path> data_dir,
               Ledger::Clock clock)
    : corpus_(std::move(corpus)),
      seed_(std::move(seed)),
      config_(config),
      data_dir_(std::move(data_dir)),
      ledger_(clock) {
    for (const auto& l : seed_) {
        if (!corpus_.find(l.doc_id)) throw Error("MalformedLabels", "seed label for unknown document '" + l.doc_id + "'");
        if (!corpus_.has_variable(l.variable))
            throw Error("MalformedLabels", "seed label for unknown variable '" + l.variable + "'");
    }

    if (data_dir_) {
        fs::create_directories(*data_dir_);
        const fs::path ledger_path = *data_dir_ / kLedgerFile;
        if (fs::exists(ledger_path)) {
            std::ifstream in(ledger_path);
            std::vector<std::string> lines;
            for (std::string line; std::getline(in, line);) lines.push_back(line);
            ledger_ = Ledger::replay(lines, clock);
        }
        ledger_file_ = std::make_unique<std::ofstream>(ledger_path, std::ios::app);
        if (!*ledger_file_) throw Error("IoError", "cannot open " + ledger_path.string());
        ledger_.set_event_sink([this](const std::string& line) {
            *ledger_file_ << line << '\n';
            ledger_file_->flush();
        });
    }

    if (restore()) return;

    // Initial models come from the seed labels alone.
    auto [models, diff] = retrain_models(corpus_, null_models(corpus_), seed_plans(), config_.hyper);
    auto snap = std::make_shared<Snapshot>();
    snap->models = std::move(models);
    snap->train_size = seed_.size();
    snap->trained_docs.resize(corpus_.variables().size());
    for (const auto& l : seed_) snap->trained_docs[*corpus_.variable_index(l.variable)].insert(l.doc_id);
    if (data_dir_) persist(*snap, ledger_.applied_through());
    install(std::move(snap));
}

Engine::~Engine() = default;

std::shared_ptr<const Snapshot> Engine::snapshot() const {
    std::lock_guard lock(snapshot_mutex_);
    return snapshot_;
}

void Engine::install(std::shared_ptr<const Snapshot> snap) {
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = std::move(snap);
}

std::vector<VariablePlan> Engine::seed_plans() const {
    CompiledFeedback compiled;
    for (const auto& l : seed_) compiled.labels[{l.doc_id, l.variable}] = l.value;
    return plans_from(compiled);
}

std::vector<VariablePlan> Engine::plans_from(const CompiledFeedback& compiled) const {
    std::vector<VariablePlan> plans(corpus_.variables().size());
    for (const auto& [key, value] : compiled.labels) {
        const auto v = corpus_.variable_index(key.second);
        const auto d = corpus_.index_of(key.first);
        if (!v || !d) continue;
        TrainingLabel tl{*d, value, {}};
        if (config_.span_emphasis) {
            auto it = compiled.emphasis.find(key);
            if (it != compiled.emphasis.end()) tl.emphasis = it->second;
        }
        plans[*v].labels.push_back(std::move(tl));
    }
    for (auto& p : plans)
        std::sort(p.labels.begin(), p.labels.end(),
                  [](const TrainingLabel& a, const TrainingLabel& b) { return a.document < b.document; });
    for (const auto& [variable, terms] : compiled.excluded_terms)
        if (auto v = corpus_.variable_index(variable)) plans[*v].excluded_terms = terms;
    return plans;
}

FeedbackItem Engine::add_document_label(std::string_view doc_id, std::string_view variable, bool value) {
    std::lock_guard lock(ledger_mutex_);
    return ledger_.add_document_label(corpus_, doc_id, variable, value);
}

FeedbackItem Engine::add_span_feedback(std::string_view doc_id, std::string_view variable, const Selection& raw,
                                       bool value) {
    std::lock_guard lock(ledger_mutex_);
    return ledger_.add_span_feedback(corpus_, doc_id, variable, raw, value);
}

FeedbackItem Engine::add_phrase_feedback(const WordTree& tree, std::string_view variable, bool value) {
    std::lock_guard lock(ledger_mutex_);
    return ledger_.add_phrase_feedback(corpus_, tree, variable, value);
}

FeedbackItem Engine::add_neither_feedback(std::string_view phrase, std::string_view variable) {
    std::lock_guard lock(ledger_mutex_);
    return ledger_.add_neither_feedback(corpus_, phrase, variable);
}

FeedbackItem Engine::resolve(std::uint64_t id, Resolution action, std::optional<Target> new_target) {
    std::lock_guard lock(ledger_mutex_);
    return ledger_.resolve(id, action, new_target);
}

std::vector<FeedbackItem> Engine::ledger_items() const {
    std::lock_guard lock(ledger_mutex_);
    return ledger_.items();
}

std::vector<Conflict> Engine::conflicts() const {
    std::lock_guard lock(ledger_mutex_);
    return ledger_.detect_conflicts();
}

std::size_t Engine::pending_count() const {
    std::lock_guard lock(ledger_mutex_);
    return ledger_.pending_count();
}

WordTree Engine::build_tree(std::string_view query) const { return emr::build_tree(corpus_, query, config_.tree); }

DiffReport Engine::retrain() {
    BusyGuard busy(retraining_);
    std::lock_guard lock(ledger_mutex_);

    const CompiledFeedback compiled = ledger_.compile(seed_);
    const auto previous = snapshot();
    auto [models, changes] = retrain_models(corpus_, previous->models, plans_from(compiled), config_.hyper);

    auto snap = std::make_shared<Snapshot>();
    snap->models = std::move(models);
    snap->round = previous->round + 1;
    snap->last_diff.changes = std::move(changes);
    snap->last_diff.timestamp_ms = now_ms();
    snap->last_diff.feedback_consumed = ledger_.pending_count();
    snap->changed_cells = changed_cells_of(snap->last_diff);
    snap->train_size = compiled.labels.size();
    snap->trained_docs.resize(corpus_.variables().size());
    for (const auto& [key, value] : compiled.labels)
        if (auto v = corpus_.variable_index(key.second)) snap->trained_docs[*v].insert(key.first);

    const std::uint64_t through = ledger_.last_id();
    if (data_dir_) persist(*snap, through);
    ledger_.mark_applied(through);
    install(snap);
    return snap->last_diff;
}

EvaluationReport Engine::evaluate(const std::vector<Label>& heldout) const {
    return evaluate_models(*snapshot(), corpus_, heldout, config_.hyper.tau);
}

// ---------------------------------------------------------------------------
// Persistence

void Engine::persist(const Snapshot& snap, std::uint64_t applied_through) const {
    json models = json::array();
    for (const auto& m : snap.models.models) models.push_back(to_json(m));
    json trained = json::array();
    for (const auto& docs : snap.trained_docs) trained.push_back(docs);
    const json root{{"schema", kModelSchema},
                    {"round", snap.round},
                    {"applied_through", applied_through},
                    {"train_size", snap.train_size},
                    {"models", std::move(models)},
                    {"fingerprints", snap.models.fingerprints},
                    {"trained_docs", std::move(trained)},
                    {"last_diff", to_json(snap.last_diff)}};

    const fs::path target = *data_dir_ / kModelsFile;
    const fs::path tmp = *data_dir_ / (std::string(kModelsFile) + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("IoError", "cannot write " + tmp.string());
        out << root.dump() << '\n';
        if (!out.flush()) throw Error("IoError", "cannot write " + tmp.string());
    }
    fs::rename(tmp, target);
}

bool Engine::restore() {
    if (!data_dir_) return false;
    const fs::path path = *data_dir_ / kModelsFile;
    if (!fs::exists(path)) return false;

    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    json root;
    try {
        root = json::parse(buf.str());
    } catch (const json::parse_error& e) {
        throw Error("MalformedSnapshot", path.string() + ": " + e.what());
    }
    if (root.value("schema", 0) != kModelSchema)
        throw Error("MalformedSnapshot", path.string() + ": unsupported schema version");

    auto snap = std::make_shared<Snapshot>();
    try {
        for (const auto& m : root.at("models")) snap->models.models.push_back(variable_model_from_json(m));
        snap->models.fingerprints = root.at("fingerprints").get<std::vector<std::string>>();
        for (const auto& docs : root.at("trained_docs"))
            snap->trained_docs.emplace_back(docs.get<std::set<std::string>>());
        snap->round = root.at("round").get<std::uint64_t>();
        snap->train_size = root.at("train_size").get<std::size_t>();
        const json& diff = root.at("last_diff");
        snap->last_diff.timestamp_ms = diff.at("timestamp").get<std::int64_t>();
        snap->last_diff.feedback_consumed = diff.at("feedback_consumed").get<std::size_t>();
        for (const auto& e : diff.at("changes"))
            snap->last_diff.changes.push_back({e.at("doc_id").get<std::string>(), e.at("variable").get<std::string>(),
                                               parse_class(e.at("old_class").get<std::string>()),
                                               parse_class(e.at("new_class").get<std::string>()),
                                               e.at("old_probability").get<double>(),
                                               e.at("new_probability").get<double>()});
    } catch (const json::exception& e) {
        throw Error("MalformedSnapshot", path.string() + ": " + e.what());
    }

    const auto& vars = corpus_.variables();
    if (snap->models.models.size() != vars.size() || snap->models.fingerprints.size() != vars.size())
        throw Error("MalformedSnapshot", path.string() + ": model count does not match the corpus variables");
    for (std::size_t v = 0; v < vars.size(); ++v)
        if (snap->models.models[v].variable != vars[v])
            throw Error("MalformedSnapshot", path.string() + ": model order does not match the corpus variables");
    snap->trained_docs.resize(vars.size());
    snap->changed_cells = changed_cells_of(snap->last_diff);
    snap->models.predictions = predict_corpus(corpus_, snap->models.models, config_.hyper.tau);

    // A crash between writing the models and logging the ledger transition
    // leaves the ledger behind; catch it up.
    const auto through = root.value("applied_through", std::uint64_t{0});
    if (ledger_.applied_through() < through) ledger_.mark_applied(through);

    install(std::move(snap));
    return true;
}

}  // namespace emr

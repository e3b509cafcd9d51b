#include "emr/feedback.hpp"

#include <algorithm>
#include <chrono>

#include "emr/error.hpp"
#include "emr/json_io.hpp"

namespace emr {

std::string_view to_string(FeedbackKind kind) {
    switch (kind) {
    case FeedbackKind::DocumentLabel: return "document";
    case FeedbackKind::SpanHighlight: return "span";
    case FeedbackKind::PhraseLabel: return "phrase";
    case FeedbackKind::NeitherTerm: return "neither";
    }
    return "document";
}

std::string_view to_string(Target target) {
    switch (target) {
    case Target::True: return "true";
    case Target::False: return "false";
    case Target::Neither: return "neither";
    }
    return "neither";
}

std::string_view to_string(FeedbackStatus status) {
    switch (status) {
    case FeedbackStatus::Pending: return "pending";
    case FeedbackStatus::Applied: return "applied";
    case FeedbackStatus::Deleted: return "deleted";
    case FeedbackStatus::Overridden: return "overridden";
    }
    return "pending";
}

std::string_view to_string(ConflictKind kind) {
    return kind == ConflictKind::Contradiction ? "contradiction" : "override";
}

FeedbackKind parse_feedback_kind(std::string_view name) {
    if (name == "document") return FeedbackKind::DocumentLabel;
    if (name == "span") return FeedbackKind::SpanHighlight;
    if (name == "phrase") return FeedbackKind::PhraseLabel;
    if (name == "neither") return FeedbackKind::NeitherTerm;
    throw Error("InvalidFeedback", "unknown feedback kind '" + std::string(name) + "'");
}

Target parse_target(std::string_view name) {
    if (name == "true") return Target::True;
    if (name == "false") return Target::False;
    if (name == "neither") return Target::Neither;
    throw Error("InvalidClass", "unknown class '" + std::string(name) + "'");
}

FeedbackStatus parse_feedback_status(std::string_view name) {
    if (name == "pending") return FeedbackStatus::Pending;
    if (name == "applied") return FeedbackStatus::Applied;
    if (name == "deleted") return FeedbackStatus::Deleted;
    if (name == "overridden") return FeedbackStatus::Overridden;
    throw Error("MalformedLedger", "unknown feedback status '" + std::string(name) + "'");
}

Selection snap_span(const Document& document, const Selection& raw) {
    const auto report = document.report_index(raw.report_id);
    if (!report) throw Error("UnknownReport", "document '" + document.doc_id + "' has no report '" + raw.report_id + "'");
    const Token* first = nullptr;
    const Token* last = nullptr;
    for (const auto& s : document.sentences) {
        if (s.report != *report) continue;
        for (const auto& t : s.tokens) {
            if (t.span.start < raw.end && raw.start < t.span.end) {
                if (!first) first = &t;
                last = &t;
            }
        }
    }
    if (!first) throw Error("NoTokenInSpan", "selection does not cover any word");
    return {raw.report_id, first->span.start, last->span.end};
}

std::vector<std::string> FeedbackItem::labeled_documents() const {
    switch (kind) {
    case FeedbackKind::DocumentLabel:
    case FeedbackKind::SpanHighlight: return {*doc_id};
    case FeedbackKind::PhraseLabel: return documents;
    case FeedbackKind::NeitherTerm: return {};
    }
    return {};
}

// ---------------------------------------------------------------------------

namespace {

std::int64_t wall_clock_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

void require_variable(const Corpus& corpus, std::string_view variable) {
    if (!corpus.has_variable(variable)) throw Error("UnknownVariable", "unknown variable '" + std::string(variable) + "'");
}

const Document& require_document(const Corpus& corpus, std::string_view doc_id) {
    const Document* doc = corpus.find(doc_id);
    if (!doc) throw Error("UnknownDocument", "unknown document '" + std::string(doc_id) + "'");
    return *doc;
}

Target to_target(bool value) { return value ? Target::True : Target::False; }

bool is_suppressed(const FeedbackItem& item, const std::string& doc) {
    return std::find(item.suppressed.begin(), item.suppressed.end(), doc) != item.suppressed.end();
}

}  // namespace

Ledger::Ledger() : clock_(wall_clock_ms) {}

Ledger::Ledger(Clock clock) : clock_(clock ? std::move(clock) : Clock(wall_clock_ms)) {}

const FeedbackItem* Ledger::find(std::uint64_t id) const {
    if (id == 0 || id > items_.size()) return nullptr;
    return &items_[id - 1];
}

std::size_t Ledger::pending_count() const {
    return static_cast<std::size_t>(std::count_if(items_.begin(), items_.end(), [](const FeedbackItem& i) {
        return i.status == FeedbackStatus::Pending;
    }));
}

void Ledger::emit(const std::string& line) const {
    if (sink_) sink_(line);
}

const FeedbackItem& Ledger::append(FeedbackItem item) {
    item.id = next_id_++;
    item.created_at_ms = clock_();
    item.status = FeedbackStatus::Pending;
    items_.push_back(std::move(item));
    emit(json{{"event", "add"}, {"item", to_json(items_.back())}}.dump());
    return items_.back();
}

const FeedbackItem& Ledger::add_document_label(const Corpus& corpus, std::string_view doc_id,
                                               std::string_view variable, bool value) {
    require_document(corpus, doc_id);
    require_variable(corpus, variable);
    FeedbackItem item;
    item.kind = FeedbackKind::DocumentLabel;
    item.variable = std::string(variable);
    item.target = to_target(value);
    item.doc_id = std::string(doc_id);
    return append(std::move(item));
}

const FeedbackItem& Ledger::add_span_feedback(const Corpus& corpus, std::string_view doc_id, std::string_view variable,
                                              const Selection& raw, bool value) {
    const Document& doc = require_document(corpus, doc_id);
    require_variable(corpus, variable);
    FeedbackItem item;
    item.kind = FeedbackKind::SpanHighlight;
    item.variable = std::string(variable);
    item.target = to_target(value);
    item.doc_id = std::string(doc_id);
    item.span = snap_span(doc, raw);
    item.phrase = normalize_phrase(doc.slice({item.span->start, item.span->end}));
    return append(std::move(item));
}

const FeedbackItem& Ledger::add_phrase_feedback(const Corpus& corpus, const WordTree& tree, std::string_view variable,
                                                bool value) {
    require_variable(corpus, variable);
    if (tree.empty()) throw Error("EmptyTree", "phrase '" + join_phrase(tree.root_phrase()) + "' matches no document");
    FeedbackItem item;
    item.kind = FeedbackKind::PhraseLabel;
    item.variable = std::string(variable);
    item.target = to_target(value);
    item.phrase = tree.root_phrase();
    item.documents = document_filter_ids(tree, corpus);
    return append(std::move(item));
}

const FeedbackItem& Ledger::add_neither_feedback(const Corpus& corpus, std::string_view phrase,
                                                 std::string_view variable) {
    require_variable(corpus, variable);
    auto tokens = normalize_phrase(phrase);
    if (tokens.empty()) throw Error("EmptyPhrase", "phrase contains no words");
    FeedbackItem item;
    item.kind = FeedbackKind::NeitherTerm;
    item.variable = std::string(variable);
    item.target = Target::Neither;
    item.phrase = std::move(tokens);
    return append(std::move(item));
}

const FeedbackItem& Ledger::resolve(std::uint64_t id, Resolution action, std::optional<Target> new_target) {
    if (!find(id)) throw Error("UnknownFeedback", "no feedback item #" + std::to_string(id));
    FeedbackItem& item = items_[id - 1];
    if (item.status != FeedbackStatus::Pending)
        throw Error("NotPending", "feedback item #" + std::to_string(id) + " is " + std::string(to_string(item.status)));

    switch (action) {
    case Resolution::Delete:
        item.status = FeedbackStatus::Deleted;
        emit(json{{"event", "delete"}, {"id", id}}.dump());
        break;
    case Resolution::Edit: {
        if (!new_target) throw Error("InvalidClass", "edit requires a new class");
        const bool neither_kind = item.kind == FeedbackKind::NeitherTerm;
        if (neither_kind != (*new_target == Target::Neither))
            throw Error("InvalidClass", "class '" + std::string(to_string(*new_target)) + "' does not fit " +
                                            std::string(to_string(item.kind)) + " feedback");
        item.target = *new_target;
        item.override_confirmed = false;
        emit(json{{"event", "edit"}, {"id", id}, {"class", std::string(to_string(*new_target))}}.dump());
        break;
    }
    case Resolution::ConfirmOverride:
        item.override_confirmed = true;
        emit(json{{"event", "confirm_override"}, {"id", id}}.dump());
        break;
    }
    return item;
}

std::map<LabelKey, std::pair<bool, std::uint64_t>> Ledger::applied_labels() const {
    std::map<LabelKey, std::pair<bool, std::uint64_t>> out;
    for (const auto& item : items_) {
        if (item.status != FeedbackStatus::Applied || item.kind == FeedbackKind::NeitherTerm) continue;
        for (const auto& doc : item.labeled_documents()) {
            if (is_suppressed(item, doc)) continue;
            out[{doc, item.variable}] = {item.target == Target::True, item.id};
        }
    }
    return out;
}

std::vector<Conflict> Ledger::detect_conflicts() const {
    std::vector<Conflict> out;

    // Contradictions: pending assertions of both classes on one pair.
    std::map<LabelKey, std::pair<std::vector<std::uint64_t>, std::vector<std::uint64_t>>> pending;
    for (const auto& item : items_) {
        if (item.status != FeedbackStatus::Pending || item.kind == FeedbackKind::NeitherTerm) continue;
        for (const auto& doc : item.labeled_documents()) {
            auto& slot = pending[{doc, item.variable}];
            (item.target == Target::True ? slot.first : slot.second).push_back(item.id);
        }
    }
    for (const auto& [key, ids] : pending) {
        if (ids.first.empty() || ids.second.empty()) continue;
        Conflict c;
        c.kind = ConflictKind::Contradiction;
        c.doc_id = key.first;
        c.variable = key.second;
        c.items = ids.first;
        c.items.insert(c.items.end(), ids.second.begin(), ids.second.end());
        std::sort(c.items.begin(), c.items.end());
        const auto list = [](const std::vector<std::uint64_t>& v) {
            std::string s;
            for (auto id : v) s += (s.empty() ? "#" : ", #") + std::to_string(id);
            return s;
        };
        c.explanation = "Document " + key.first + " is labeled true by feedback " + list(ids.first) +
                        " and false by feedback " + list(ids.second) + " for variable " + key.second;
        out.push_back(std::move(c));
    }

    // Overrides: pending assertions reversing the current applied label.
    const auto applied = applied_labels();
    for (const auto& item : items_) {
        if (item.status != FeedbackStatus::Pending || item.kind == FeedbackKind::NeitherTerm ||
            item.override_confirmed)
            continue;
        const bool value = item.target == Target::True;
        for (const auto& doc : item.labeled_documents()) {
            auto it = applied.find({doc, item.variable});
            if (it == applied.end() || it->second.first == value) continue;
            Conflict c;
            c.kind = ConflictKind::Override;
            c.doc_id = doc;
            c.variable = item.variable;
            c.items = {it->second.second, item.id};
            c.explanation = "Feedback #" + std::to_string(item.id) + " sets " + doc + " / " + item.variable + " to " +
                            (value ? "true" : "false") + ", reversing applied feedback #" +
                            std::to_string(it->second.second) + "; confirm to override";
            out.push_back(std::move(c));
        }
    }
    return out;
}

bool Ledger::has_contradiction() const {
    const auto conflicts = detect_conflicts();
    return std::any_of(conflicts.begin(), conflicts.end(),
                       [](const Conflict& c) { return c.kind == ConflictKind::Contradiction; });
}

CompiledFeedback Ledger::compile(const std::vector<Label>& seed) const {
    std::vector<Conflict> contradictions;
    for (auto& c : detect_conflicts())
        if (c.kind == ConflictKind::Contradiction) contradictions.push_back(std::move(c));
    if (!contradictions.empty()) {
        std::string msg = std::to_string(contradictions.size()) + " unresolved contradiction(s)";
        for (const auto& c : contradictions) msg += "; " + c.explanation;
        throw Error("UnresolvedConflicts", msg);
    }

    CompiledFeedback out;
    for (const auto& l : seed) out.labels[{l.doc_id, l.variable}] = l.value;

    const auto applied = applied_labels();
    for (const auto& item : items_) {
        if (!item.live()) continue;
        if (item.kind == FeedbackKind::NeitherTerm) {
            out.excluded_terms[item.variable].insert(item.phrase.begin(), item.phrase.end());
            continue;
        }
        const bool value = item.target == Target::True;
        for (const auto& doc : item.labeled_documents()) {
            const LabelKey key{doc, item.variable};
            if (item.status == FeedbackStatus::Applied && is_suppressed(item, doc)) continue;
            if (item.status == FeedbackStatus::Pending && !item.override_confirmed) {
                auto it = applied.find(key);
                if (it != applied.end() && it->second.first != value) continue;
            }
            auto prev = out.labels.find(key);
            if (prev != out.labels.end() && prev->second != value) out.emphasis.erase(key);
            out.labels[key] = value;
            if (item.kind == FeedbackKind::SpanHighlight) out.emphasis[key].push_back(item.phrase);
        }
    }
    for (const auto& [key, value] : out.labels) out.labeled_documents.insert(key.first);
    return out;
}

void Ledger::mark_applied(std::uint64_t through) {
    const auto applied = applied_labels();
    for (auto& item : items_) {
        if (item.id > through || item.status != FeedbackStatus::Pending) continue;
        item.suppressed.clear();
        if (item.kind != FeedbackKind::NeitherTerm && !item.override_confirmed) {
            const bool value = item.target == Target::True;
            for (const auto& doc : item.labeled_documents()) {
                auto it = applied.find({doc, item.variable});
                if (it != applied.end() && it->second.first != value) item.suppressed.push_back(doc);
            }
        }
        const bool all_lost = !item.suppressed.empty() && item.suppressed.size() == item.labeled_documents().size();
        item.status = all_lost ? FeedbackStatus::Overridden : FeedbackStatus::Applied;
    }
    applied_through_ = std::max(applied_through_, through);
    emit(json{{"event", "applied"}, {"through", through}}.dump());
}

void Ledger::apply_event(const std::string& line) {
    json ev;
    try {
        ev = json::parse(line);
    } catch (const json::parse_error& e) {
        throw Error("MalformedLedger", std::string("bad ledger line: ") + e.what());
    }
    const std::string kind = ev.value("event", "");
    if (kind == "add") {
        FeedbackItem item = feedback_item_from_json(ev.at("item"));
        if (item.id != next_id_) throw Error("MalformedLedger", "ledger ids are not consecutive");
        item.status = FeedbackStatus::Pending;
        item.suppressed.clear();
        items_.push_back(std::move(item));
        ++next_id_;
    } else if (kind == "delete") {
        resolve(ev.at("id").get<std::uint64_t>(), Resolution::Delete);
    } else if (kind == "edit") {
        resolve(ev.at("id").get<std::uint64_t>(), Resolution::Edit, parse_target(ev.at("class").get<std::string>()));
    } else if (kind == "confirm_override") {
        resolve(ev.at("id").get<std::uint64_t>(), Resolution::ConfirmOverride);
    } else if (kind == "applied") {
        mark_applied(ev.at("through").get<std::uint64_t>());
    } else {
        throw Error("MalformedLedger", "unknown ledger event '" + kind + "'");
    }
}

Ledger Ledger::replay(const std::vector<std::string>& lines, Clock clock) {
    Ledger ledger(std::move(clock));
    for (const auto& line : lines) {
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        ledger.apply_event(line);
    }
    return ledger;
}

}  // namespace emr

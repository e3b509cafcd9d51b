#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "emr/corpus.hpp"
#include "emr/labels.hpp"
#include "emr/wordtree.hpp"

namespace emr {

enum class FeedbackKind { DocumentLabel, SpanHighlight, PhraseLabel, NeitherTerm };
enum class Target { True, False, Neither };
enum class FeedbackStatus { Pending, Applied, Deleted, Overridden };

std::string_view to_string(FeedbackKind kind);
std::string_view to_string(Target target);
std::string_view to_string(FeedbackStatus status);
FeedbackKind parse_feedback_kind(std::string_view name);
Target parse_target(std::string_view name);
FeedbackStatus parse_feedback_status(std::string_view name);

// Offsets index Document::text; the span must lie inside the named report.
struct Selection {
    std::string report_id;
    std::size_t start = 0;
    std::size_t end = 0;
    friend bool operator==(const Selection&, const Selection&) = default;
};

// Widens a selection to whole tokens: start moves to the first intersected
// token, end to the last. Throws NoTokenInSpan when nothing is intersected.
Selection snap_span(const Document& document, const Selection& raw);

struct FeedbackItem {
    std::uint64_t id = 0;
    FeedbackKind kind = FeedbackKind::DocumentLabel;
    std::string variable;
    Target target = Target::True;
    std::optional<std::string> doc_id;    // DocumentLabel, SpanHighlight
    std::optional<Selection> span;        // SpanHighlight
    std::vector<std::string> phrase;      // SpanHighlight, PhraseLabel, NeitherTerm
    std::vector<std::string> documents;   // PhraseLabel: matching documents at creation
    std::int64_t created_at_ms = 0;
    FeedbackStatus status = FeedbackStatus::Pending;
    bool override_confirmed = false;
    std::vector<std::string> suppressed;  // documents where an earlier applied label kept precedence

    // Documents this item asserts a label for (none for NeitherTerm).
    std::vector<std::string> labeled_documents() const;
    bool live() const { return status == FeedbackStatus::Pending || status == FeedbackStatus::Applied; }
};

enum class ConflictKind { Contradiction, Override };
std::string_view to_string(ConflictKind kind);

struct Conflict {
    ConflictKind kind = ConflictKind::Contradiction;
    std::vector<std::uint64_t> items;  // ascending
    std::string variable;
    std::string doc_id;
    std::string explanation;
};

enum class Resolution { Delete, Edit, ConfirmOverride };

using LabelKey = std::pair<std::string, std::string>;  // (doc_id, variable)

struct CompiledFeedback {
    std::map<LabelKey, bool> labels;
    std::map<std::string, std::set<std::string>> excluded_terms;           // by variable
    std::map<LabelKey, std::vector<std::vector<std::string>>> emphasis;    // winning span phrases
    std::set<std::string> labeled_documents;                               // any doc carrying a label
};

// Ordered record of expert feedback. Mutations are validated against the
// corpus and reported to the event sink as JSON lines so the ledger can be
// rebuilt by replay.
class Ledger {
public:
    using Clock = std::function<std::int64_t()>;
    using EventSink = std::function<void(const std::string&)>;

    Ledger();
    explicit Ledger(Clock clock);

    void set_event_sink(EventSink sink) { sink_ = std::move(sink); }

    const FeedbackItem& add_document_label(const Corpus& corpus, std::string_view doc_id,
                                           std::string_view variable, bool value);
    const FeedbackItem& add_span_feedback(const Corpus& corpus, std::string_view doc_id, std::string_view variable,
                                          const Selection& raw, bool value);
    const FeedbackItem& add_phrase_feedback(const Corpus& corpus, const WordTree& tree, std::string_view variable,
                                            bool value);
    const FeedbackItem& add_neither_feedback(const Corpus& corpus, std::string_view phrase,
                                             std::string_view variable);

    const FeedbackItem& resolve(std::uint64_t id, Resolution action, std::optional<Target> new_target = {});

    std::vector<Conflict> detect_conflicts() const;
    bool has_contradiction() const;

    // Seed labels overlaid by live feedback in id order. Unconfirmed
    // overrides leave the earlier applied label in place. Throws
    // UnresolvedConflicts while any contradiction exists.
    CompiledFeedback compile(const std::vector<Label>& seed) const;

    // Pending items with id <= through become Applied, or Overridden when
    // every label they assert lost to an earlier applied label.
    void mark_applied(std::uint64_t through);

    const std::vector<FeedbackItem>& items() const { return items_; }
    const FeedbackItem* find(std::uint64_t id) const;
    std::size_t pending_count() const;
    std::uint64_t last_id() const { return next_id_ - 1; }
    std::uint64_t applied_through() const { return applied_through_; }

    // Rebuilds a ledger from the lines written to an event sink.
    static Ledger replay(const std::vector<std::string>& lines, Clock clock = {});

private:
    const FeedbackItem& append(FeedbackItem item);
    void emit(const std::string& line) const;
    void apply_event(const std::string& line);

    // Final applied label per pair and the item that set it.
    std::map<LabelKey, std::pair<bool, std::uint64_t>> applied_labels() const;

    Clock clock_;
    EventSink sink_;
    std::vector<FeedbackItem> items_;
    std::uint64_t next_id_ = 1;
    std::uint64_t applied_through_ = 0;
};

}  // namespace emr

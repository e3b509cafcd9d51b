#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "emr/corpus.hpp"
#include "emr/feedback.hpp"
#include "emr/labels.hpp"
#include "emr/learner.hpp"
#include "emr/wordtree.hpp"

namespace emr {

struct EngineConfig {
    Hyperparams hyper;
    bool span_emphasis = false;  // add +1 term counts for highlighted phrases
    WordTreeOptions tree;
};

// Immutable view of the models and predictions after a (re)training round.
struct Snapshot {
    ModelSet models;
    DiffReport last_diff;
    std::uint64_t round = 0;
    std::size_t train_size = 0;                          // labeled (document, variable) pairs
    std::vector<std::set<std::string>> trained_docs;     // per variable

    std::set<LabelKey> changed_cells;                    // cells in last_diff

    bool changed(const std::string& doc_id, const std::string& variable) const {
        return changed_cells.count({doc_id, variable}) > 0;
    }
};

struct EvaluationReport {
    std::vector<std::string> variables;
    std::vector<Metrics> per_variable;
    Metrics overall;  // micro-averaged over variables
};

// Metrics of `models` on labeled documents of `documents`. Throws
// OverlapError when a held-out pair was used to train its variable.
EvaluationReport evaluate_models(const Snapshot& snapshot, const Corpus& documents, const std::vector<Label>& heldout,
                                 double tau);

// The review -> feedback -> retrain loop over one corpus. Feedback writes are
// serialized; readers take a snapshot and never observe a partial retrain.
// With a data directory, the ledger is appended to `ledger.jsonl` as it
// changes and the models are written to `models.json` after every retrain.
class Engine {
public:
    Engine(Corpus corpus, std::vector<Label> seed, EngineConfig config,
           std::optional<std::filesystem::path> data_dir = std::nullopt, Ledger::Clock clock = {});
    ~Engine();

    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    const Corpus& corpus() const { return corpus_; }
    const std::vector<Label>& seed_labels() const { return seed_; }
    const EngineConfig& config() const { return config_; }
    std::shared_ptr<const Snapshot> snapshot() const;

    FeedbackItem add_document_label(std::string_view doc_id, std::string_view variable, bool value);
    FeedbackItem add_span_feedback(std::string_view doc_id, std::string_view variable, const Selection& raw,
                                   bool value);
    FeedbackItem add_phrase_feedback(const WordTree& tree, std::string_view variable, bool value);
    FeedbackItem add_neither_feedback(std::string_view phrase, std::string_view variable);
    FeedbackItem resolve(std::uint64_t id, Resolution action, std::optional<Target> new_target = {});

    std::vector<FeedbackItem> ledger_items() const;
    std::vector<Conflict> conflicts() const;
    std::size_t pending_count() const;

    WordTree build_tree(std::string_view query) const;

    // Throws UnresolvedConflicts while a contradiction is pending and Busy
    // when another retrain is in flight.
    DiffReport retrain();

    EvaluationReport evaluate(const std::vector<Label>& heldout) const;

private:
    std::vector<VariablePlan> plans_from(const CompiledFeedback& compiled) const;
    std::vector<VariablePlan> seed_plans() const;
    void install(std::shared_ptr<const Snapshot> snap);
    void persist(const Snapshot& snap, std::uint64_t applied_through) const;
    bool restore();

    Corpus corpus_;
    std::vector<Label> seed_;
    EngineConfig config_;
    std::optional<std::filesystem::path> data_dir_;

    mutable std::mutex ledger_mutex_;
    Ledger ledger_;
    std::unique_ptr<std::ofstream> ledger_file_;

    mutable std::mutex snapshot_mutex_;
    std::shared_ptr<const Snapshot> snapshot_;

    std::atomic<bool> retraining_{false};
};

}  // namespace emr

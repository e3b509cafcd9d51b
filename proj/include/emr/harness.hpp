#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "emr/corpus.hpp"
#include "emr/engine.hpp"
#include "emr/error.hpp"
#include "emr/json_io.hpp"
#include "emr/labels.hpp"
#include "emr/synthetic.hpp"

namespace emr {

class Api;

// One line of a feedback script. Feedback lines carry the same body as
// POST /api/feedback; control lines are {"action": "retrain"} and
// {"action": "resolve", "id": n, "resolution": "delete|edit|confirm_override"}.
struct ScriptAction {
    enum class Type { Feedback, Retrain, Resolve };

    Type type = Type::Feedback;
    std::optional<std::uint64_t> round;
    json body;
};

struct FeedbackScript {
    std::vector<ScriptAction> actions;
};

// Parses JSON lines. Blank lines are skipped; action indices count the
// remaining lines from 0. With a corpus, doc_ids and variables are checked.
FeedbackScript parse_script(std::string_view jsonl, const Corpus* corpus = nullptr);
FeedbackScript load_script(const std::filesystem::path& path, const Corpus* corpus = nullptr);
std::string script_to_jsonl(const FeedbackScript& script);

struct ConvergenceRow {
    std::size_t round = 0;
    std::size_t actions = 0;      // feedback actions issued before this row
    std::size_t train_size = 0;
    Metrics metrics;
    std::size_t diff_size = 0;
};

struct ConvergenceReport {
    std::vector<ConvergenceRow> rows;
};

std::string report_csv(const ConvergenceReport& report);
void write_report_csv(const std::filesystem::path& path, const ConvergenceReport& report);

struct HarnessOptions {
    EngineConfig engine;
    int64_t clock_ms = 0;  // fixed ledger timestamps
};

// Thrown for a failing script action; `index` is its position in the script.
class ScriptError : public Error {
public:
    ScriptError(std::size_t index, const std::string& code, const std::string& message)
        : Error("ScriptError", "action " + std::to_string(index) + ": " + code + ": " + message),
          index_(index), cause_(code) {}

    std::size_t index() const { return index_; }
    const std::string& cause() const { return cause_; }

private:
    std::size_t index_;
    std::string cause_;
};

// A review session with held-out documents removed from the reviewed corpus.
// Actions go through the same Api request handling as the HTTP service.
class HarnessSession {
public:
    HarnessSession(const Corpus& corpus, std::vector<Label> seed, std::vector<Label> holdout,
                   HarnessOptions options = {});
    ~HarnessSession();

    Engine& engine() { return *engine_; }
    const Corpus& corpus() const { return engine_->corpus(); }

    // Runs one action; throws ScriptError tagged with `index` on failure.
    // Returns true when the action was a retrain (and a row was appended).
    bool run(const ScriptAction& action, std::size_t index);

    ConvergenceRow measure(std::size_t diff_size) const;
    const ConvergenceReport& report() const { return report_; }
    std::size_t feedback_actions() const { return feedback_actions_; }

private:
    const Corpus& full_;
    std::vector<Label> holdout_;
    std::unique_ptr<Engine> engine_;
    std::unique_ptr<Api> api_;
    ConvergenceReport report_;
    std::size_t feedback_actions_ = 0;
};

// Row 0 holds the seed-model metrics; one more row per retrain action.
ConvergenceReport replay(const Corpus& corpus, const std::vector<Label>& seed, const FeedbackScript& script,
                         const std::vector<Label>& holdout, const HarnessOptions& options = {});

enum class Policy { DocByDoc, PhraseFirst };

std::string_view to_string(Policy policy);
Policy parse_policy(std::string_view name);  // "doc" | "phrase"

struct TriggerPhrase {
    std::string phrase;
    std::string variable;
};

std::vector<TriggerPhrase> parse_trigger_phrases(std::string_view json_text);
std::vector<TriggerPhrase> load_trigger_phrases(const std::filesystem::path& path);
std::vector<TriggerPhrase> trigger_phrases(const std::vector<VariableRule>& rules);
std::string trigger_phrases_to_json(const std::vector<TriggerPhrase>& phrases);

struct PolicyOptions {
    Policy policy = Policy::DocByDoc;
    std::size_t budget = 0;
    std::size_t retrain_every = 10;
    HarnessOptions harness;
};

// Simulated expert. DocByDoc labels the next unlabeled document (corpus
// order) with its gold value for every variable; PhraseFirst marks the
// highest-coverage unused trigger phrase True for its variable. A retrain
// follows every `retrain_every` actions and after the last one.
ConvergenceReport policy_run(const Corpus& corpus, const std::vector<Label>& seed, const std::vector<Label>& gold,
                             const std::vector<TriggerPhrase>& phrases, const std::vector<Label>& holdout,
                             const PolicyOptions& options);

// Builds the scripted actions policy_run would issue, without running them.
FeedbackScript policy_script(const Corpus& corpus, const std::vector<Label>& seed, const std::vector<Label>& gold,
                             const std::vector<TriggerPhrase>& phrases, const std::vector<Label>& holdout,
                             const PolicyOptions& options);

}  // namespace emr

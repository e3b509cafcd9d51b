#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "emr/corpus.hpp"

namespace emr {

enum class Class { True, False, Unknown };

std::string_view to_string(Class c);
Class parse_class(std::string_view name);  // "true" | "false" | "unknown"

// Sorted term list with a dense index; indices are 0..size()-1.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> terms);  // sorted and deduplicated

    // Every non-boilerplate term of the corpus except `excluded`.
    static Vocabulary from_corpus(const Corpus& corpus, const std::set<std::string>& excluded = {});

    std::size_t size() const { return terms_.size(); }
    const std::vector<std::string>& terms() const { return terms_; }
    const std::string& term(std::size_t i) const { return terms_[i]; }
    std::optional<std::uint32_t> find(std::string_view term) const;

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.terms_ == b.terms_; }

private:
    std::vector<std::string> terms_;
    std::unordered_map<std::string, std::uint32_t> index_;
};

struct FeatureVector {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> counts;  // (index, count), index ascending

    bool empty() const { return counts.empty(); }
    std::uint32_t count(std::uint32_t index) const;
    void add(std::uint32_t index, std::uint32_t n = 1);
    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

// Non-boilerplate token counts of a document, keyed by normalized term.
std::map<std::string, std::uint32_t> term_counts(const Document& document);

FeatureVector extract_features(const Document& document, const Vocabulary& vocabulary);
FeatureVector to_features(const std::map<std::string, std::uint32_t>& counts, const Vocabulary& vocabulary);

struct Hyperparams {
    double c = 1.0;
    double tolerance = 1e-6;
    std::size_t max_iterations = 2000;
    std::uint64_t seed = 1;
    double tau = 0.1;
    std::size_t min_calibration_examples = 10;
};

struct Example {
    FeatureVector features;
    bool label = false;
};

struct Calibration {
    double a = 1.0;
    double b = 0.0;
    friend bool operator==(const Calibration&, const Calibration&) = default;
};

struct VariableModel {
    std::string variable;
    Vocabulary vocabulary;
    std::vector<double> weights;  // one per vocabulary term
    double bias = 0.0;
    Calibration calibration;
    std::size_t n_true = 0;
    std::size_t n_false = 0;

    bool is_null() const { return n_true + n_false == 0; }
    // Trained on one class only; predictions stay Unknown until both are seen.
    bool single_class() const { return !is_null() && (n_true == 0 || n_false == 0); }
    double margin(const FeatureVector& fv) const;

    friend bool operator==(const VariableModel&, const VariableModel&) = default;
};

// Fits an L2-regularized hinge-loss linear model by dual coordinate descent
// (bias as an extra regularized unit feature), then a logistic calibration
// over the training margins.
VariableModel train(std::span<const Example> examples, std::string variable, Vocabulary vocabulary,
                    const Hyperparams& params);

// Platt scaling: maximizes the likelihood of smoothed targets under
// p = logistic(a * margin + b).
Calibration fit_calibration(std::span<const double> margins, const std::vector<bool>& labels);

struct Prediction {
    Class cls = Class::Unknown;
    double probability = 0.5;  // p(True)

    friend bool operator==(const Prediction&, const Prediction&) = default;
};

Prediction predict(const VariableModel& model, const FeatureVector& fv, double tau);

struct TermWeight {
    std::string term;
    double weight = 0.0;
    bool positive() const { return weight > 0.0; }
    friend bool operator==(const TermWeight&, const TermWeight&) = default;
};

struct TopTerms {
    std::vector<TermWeight> for_true;
    std::vector<TermWeight> for_false;
};

TopTerms top_terms(const VariableModel& model, std::size_t k);

struct Indicator {
    TermWeight term;
    std::vector<Span> spans;
};

// Nonzero-weight terms present outside boilerplate, strongest first.
std::vector<Indicator> document_indicators(const VariableModel& model, const Document& document);

// predictions[variable][document], aligned with Corpus order.
struct PredictionTable {
    std::vector<std::string> variables;
    std::vector<std::vector<Prediction>> cells;

    const Prediction& at(std::size_t variable, std::size_t document) const { return cells[variable][document]; }
    friend bool operator==(const PredictionTable&, const PredictionTable&) = default;
};

struct Histogram {
    std::size_t n_true = 0;
    std::size_t n_false = 0;
    std::size_t n_unknown = 0;
    std::size_t total() const { return n_true + n_false + n_unknown; }
    friend bool operator==(const Histogram&, const Histogram&) = default;
};

Histogram variable_distribution(std::span<const Prediction> predictions, std::span<const std::size_t> filter);
Histogram variable_distribution(std::span<const Prediction> predictions);

struct DiffEntry {
    std::string doc_id;
    std::string variable;
    Class old_class = Class::Unknown;
    Class new_class = Class::Unknown;
    double old_probability = 0.5;
    double new_probability = 0.5;
    friend bool operator==(const DiffEntry&, const DiffEntry&) = default;
};

struct DiffReport {
    std::vector<DiffEntry> changes;  // corpus order, then variable order
    std::int64_t timestamp_ms = 0;
    std::size_t feedback_consumed = 0;
};

// Cells whose class differs between the two tables.
std::vector<DiffEntry> diff_tables(const Corpus& corpus, const PredictionTable& before, const PredictionTable& after);

struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::size_t unknown_true = 0, unknown_false = 0;

    std::size_t total() const { return tp + fp + tn + fn + unknown_true + unknown_false; }
    std::size_t unknown() const { return unknown_true + unknown_false; }
    Confusion& operator+=(const Confusion& o);
};

struct Metrics {
    Confusion confusion;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Unknown predictions count as errors: they never score as correct, a gold
// True predicted Unknown is a miss for recall.
Metrics metrics_from(const Confusion& confusion);

struct HeldOutExample {
    const Document* document = nullptr;
    bool label = false;
};

Metrics evaluate(const VariableModel& model, std::span<const HeldOutExample> heldout,
                 const std::set<std::string>& trained_doc_ids, double tau);

// ---------------------------------------------------------------------------
// Retraining a full model set

struct TrainingLabel {
    std::size_t document = 0;  // corpus index
    bool value = false;
    std::vector<std::vector<std::string>> emphasis;  // phrases whose term counts get +1
};

struct VariablePlan {
    std::vector<TrainingLabel> labels;  // document ascending, one per document
    std::set<std::string> excluded_terms;
};

struct ModelSet {
    std::vector<VariableModel> models;        // one per corpus variable
    std::vector<std::string> fingerprints;    // training-input digest per variable
    PredictionTable predictions;
};

// Null models and all-Unknown predictions for every variable.
ModelSet null_models(const Corpus& corpus);

// Retrains every variable whose plan changed since `previous` was built and
// re-predicts the corpus. The diff lists exactly the cells whose class moved.
std::pair<ModelSet, std::vector<DiffEntry>> retrain_models(const Corpus& corpus, const ModelSet& previous,
                                                           std::span<const VariablePlan> plans,
                                                           const Hyperparams& params);

PredictionTable predict_corpus(const Corpus& corpus, std::span<const VariableModel> models, double tau);

std::string plan_fingerprint(const VariablePlan& plan);

}  // namespace emr

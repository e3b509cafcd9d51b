#include "emr/learner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "emr/error.hpp"
#include "emr/rng.hpp"

namespace emr {

std::string_view to_string(Class c) {
    switch (c) {
    case Class::True: return "true";
    case Class::False: return "false";
    case Class::Unknown: return "unknown";
    }
    return "unknown";
}

Class parse_class(std::string_view name) {
    if (name == "true") return Class::True;
    if (name == "false") return Class::False;
    if (name == "unknown") return Class::Unknown;
    throw Error("InvalidClass", "unknown class '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Vocabulary and features

Vocabulary::Vocabulary(std::vector<std::string> terms) : terms_(std::move(terms)) {
    std::sort(terms_.begin(), terms_.end());
    terms_.erase(std::unique(terms_.begin(), terms_.end()), terms_.end());
    index_.reserve(terms_.size());
    for (std::size_t i = 0; i < terms_.size(); ++i) index_.emplace(terms_[i], static_cast<std::uint32_t>(i));
}

Vocabulary Vocabulary::from_corpus(const Corpus& corpus, const std::set<std::string>& excluded) {
    std::set<std::string> terms;
    for (const auto& doc : corpus.documents())
        for (auto& [term, n] : term_counts(doc))
            if (!excluded.count(term)) terms.insert(term);
    return Vocabulary(std::vector<std::string>(terms.begin(), terms.end()));
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view term) const {
    auto it = index_.find(std::string(term));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::uint32_t FeatureVector::count(std::uint32_t index) const {
    auto it = std::lower_bound(counts.begin(), counts.end(), index,
                               [](const auto& e, std::uint32_t i) { return e.first < i; });
    return it != counts.end() && it->first == index ? it->second : 0;
}

void FeatureVector::add(std::uint32_t index, std::uint32_t n) {
    auto it = std::lower_bound(counts.begin(), counts.end(), index,
                               [](const auto& e, std::uint32_t i) { return e.first < i; });
    if (it != counts.end() && it->first == index) it->second += n;
    else counts.insert(it, {index, n});
}

std::map<std::string, std::uint32_t> term_counts(const Document& document) {
    std::map<std::string, std::uint32_t> counts;
    for (const auto& s : document.sentences)
        for (const auto& t : s.tokens)
            if (!document.in_boilerplate(t.span)) ++counts[t.norm];
    return counts;
}

FeatureVector to_features(const std::map<std::string, std::uint32_t>& counts, const Vocabulary& vocabulary) {
    FeatureVector fv;
    for (const auto& [term, n] : counts)
        if (auto idx = vocabulary.find(term)) fv.counts.emplace_back(*idx, n);
    std::sort(fv.counts.begin(), fv.counts.end());
    return fv;
}

FeatureVector extract_features(const Document& document, const Vocabulary& vocabulary) {
    return to_features(term_counts(document), vocabulary);
}

// ---------------------------------------------------------------------------
// Training

double VariableModel::margin(const FeatureVector& fv) const {
    double m = bias;
    for (const auto& [idx, n] : fv.counts)
        if (idx < weights.size()) m += weights[idx] * static_cast<double>(n);
    return m;
}

Calibration fit_calibration(std::span<const double> margins, const std::vector<bool>& labels) {
    // Newton's method with backtracking on the regularized Platt objective.
    const std::size_t n = margins.size();
    double prior1 = 0, prior0 = 0;
    for (bool y : labels) (y ? prior1 : prior0) += 1.0;
    const double hi = (prior1 + 1.0) / (prior1 + 2.0);
    const double lo = 1.0 / (prior0 + 2.0);
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = labels[i] ? hi : lo;

    // Platt's parameterization: p = 1 / (1 + exp(A f + B)).
    double A = 0.0;
    double B = std::log((prior0 + 1.0) / (prior1 + 1.0));
    const auto objective = [&](double a, double b) {
        double f = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double fApB = margins[i] * a + b;
            f += fApB >= 0 ? t[i] * fApB + std::log1p(std::exp(-fApB))
                           : (t[i] - 1.0) * fApB + std::log1p(std::exp(fApB));
        }
        return f;
    };
    double fval = objective(A, B);
    constexpr double kSigma = 1e-12, kMinStep = 1e-10, kEps = 1e-5;
    for (int iter = 0; iter < 100; ++iter) {
        double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double fApB = margins[i] * A + B;
            double p, q;
            if (fApB >= 0) {
                p = std::exp(-fApB) / (1.0 + std::exp(-fApB));
                q = 1.0 / (1.0 + std::exp(-fApB));
            } else {
                p = 1.0 / (1.0 + std::exp(fApB));
                q = std::exp(fApB) / (1.0 + std::exp(fApB));
            }
            const double d2 = p * q;
            h11 += margins[i] * margins[i] * d2;
            h22 += d2;
            h21 += margins[i] * d2;
            const double d1 = t[i] - p;
            g1 += margins[i] * d1;
            g2 += d1;
        }
        if (std::fabs(g1) < kEps && std::fabs(g2) < kEps) break;
        const double det = h11 * h22 - h21 * h21;
        const double dA = -(h22 * g1 - h21 * g2) / det;
        const double dB = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * dA + g2 * dB;
        double step = 1.0;
        while (step >= kMinStep) {
            const double nA = A + step * dA, nB = B + step * dB;
            const double nf = objective(nA, nB);
            if (nf < fval + 1e-4 * step * gd) {
                A = nA;
                B = nB;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if (step < kMinStep) break;
    }
    Calibration cal{-A, -B};
    if (!std::isfinite(cal.a) || !std::isfinite(cal.b) || cal.a <= 0.0) return Calibration{};
    return cal;
}

VariableModel train(std::span<const Example> examples, std::string variable, Vocabulary vocabulary,
                    const Hyperparams& params) {
    VariableModel model;
    model.variable = std::move(variable);
    model.weights.assign(vocabulary.size(), 0.0);
    model.vocabulary = std::move(vocabulary);
    for (const auto& e : examples) (e.label ? model.n_true : model.n_false) += 1;
    if (examples.empty()) return model;

    const std::size_t n = examples.size();
    const double C = params.c;
    std::vector<double> alpha(n, 0.0), qii(n, 1.0);  // 1.0: the bias feature
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = examples[i].label ? 1.0 : -1.0;
        for (const auto& [idx, c] : examples[i].features.counts) qii[i] += static_cast<double>(c) * c;
    }
    auto& w = model.weights;
    double bias = 0.0;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(params.seed);
    for (std::size_t iter = 0; iter < params.max_iterations; ++iter) {
        rng.shuffle(order);
        double pg_max = -INFINITY, pg_min = INFINITY;
        for (std::size_t i : order) {
            const auto& fv = examples[i].features.counts;
            double wx = bias;
            for (const auto& [idx, c] : fv) wx += w[idx] * c;
            const double g = y[i] * wx - 1.0;
            double pg = g;
            if (alpha[i] == 0.0) pg = std::min(g, 0.0);
            else if (alpha[i] == C) pg = std::max(g, 0.0);
            pg_max = std::max(pg_max, pg);
            pg_min = std::min(pg_min, pg);
            if (std::fabs(pg) <= 1e-12) continue;
            const double old = alpha[i];
            alpha[i] = std::clamp(old - g / qii[i], 0.0, C);
            const double delta = (alpha[i] - old) * y[i];
            for (const auto& [idx, c] : fv) w[idx] += delta * c;
            bias += delta;
        }
        if (pg_max - pg_min <= params.tolerance) break;
    }
    model.bias = bias;

    if (n >= params.min_calibration_examples && model.n_true > 0 && model.n_false > 0) {
        std::vector<double> margins(n);
        std::vector<bool> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            margins[i] = model.margin(examples[i].features);
            labels[i] = examples[i].label;
        }
        model.calibration = fit_calibration(margins, labels);
    }
    return model;
}

Prediction predict(const VariableModel& model, const FeatureVector& fv, double tau) {
    if (model.is_null()) return {Class::Unknown, 0.5};
    const double z = model.calibration.a * model.margin(fv) + model.calibration.b;
    double p = 1.0 / (1.0 + std::exp(-z));
    p = std::clamp(p, 1e-9, 1.0 - 1e-9);
    Prediction out{Class::Unknown, p};
    if (model.single_class() || std::fabs(p - 0.5) < tau) return out;
    out.cls = p >= 0.5 ? Class::True : Class::False;
    return out;
}

// ---------------------------------------------------------------------------
// Reporting

namespace {

bool stronger(const TermWeight& a, const TermWeight& b) {
    const double x = std::fabs(a.weight), y = std::fabs(b.weight);
    if (x != y) return x > y;
    return a.term < b.term;
}

}  // namespace

TopTerms top_terms(const VariableModel& model, std::size_t k) {
    if (model.is_null()) throw Error("EmptyModel", "variable '" + model.variable + "' has no trained model");
    TopTerms out;
    for (std::size_t i = 0; i < model.weights.size(); ++i) {
        const double w = model.weights[i];
        if (w > 0.0) out.for_true.push_back({model.vocabulary.term(i), w});
        else if (w < 0.0) out.for_false.push_back({model.vocabulary.term(i), w});
    }
    for (auto* list : {&out.for_true, &out.for_false}) {
        std::sort(list->begin(), list->end(), stronger);
        if (list->size() > k) list->resize(k);
    }
    return out;
}

std::vector<Indicator> document_indicators(const VariableModel& model, const Document& document) {
    std::map<std::string, Indicator> found;
    if (model.is_null()) return {};
    for (const auto& s : document.sentences) {
        for (const auto& t : s.tokens) {
            if (document.in_boilerplate(t.span)) continue;
            auto idx = model.vocabulary.find(t.norm);
            if (!idx || model.weights[*idx] == 0.0) continue;
            auto& ind = found[t.norm];
            ind.term = {t.norm, model.weights[*idx]};
            ind.spans.push_back(t.span);
        }
    }
    std::vector<Indicator> out;
    for (auto& [term, ind] : found) out.push_back(std::move(ind));
    std::sort(out.begin(), out.end(), [](const Indicator& a, const Indicator& b) { return stronger(a.term, b.term); });
    return out;
}

Histogram variable_distribution(std::span<const Prediction> predictions, std::span<const std::size_t> filter) {
    Histogram h;
    for (std::size_t d : filter) {
        switch (predictions[d].cls) {
        case Class::True: ++h.n_true; break;
        case Class::False: ++h.n_false; break;
        case Class::Unknown: ++h.n_unknown; break;
        }
    }
    return h;
}

Histogram variable_distribution(std::span<const Prediction> predictions) {
    std::vector<std::size_t> all(predictions.size());
    std::iota(all.begin(), all.end(), 0);
    return variable_distribution(predictions, all);
}

std::vector<DiffEntry> diff_tables(const Corpus& corpus, const PredictionTable& before, const PredictionTable& after) {
    std::vector<DiffEntry> out;
    for (std::size_t d = 0; d < corpus.size(); ++d) {
        for (std::size_t v = 0; v < after.variables.size(); ++v) {
            const Prediction& o = before.at(v, d);
            const Prediction& n = after.at(v, d);
            if (o.cls == n.cls) continue;
            out.push_back({corpus.documents()[d].doc_id, after.variables[v], o.cls, n.cls, o.probability,
                           n.probability});
        }
    }
    return out;
}

Confusion& Confusion::operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    unknown_true += o.unknown_true;
    unknown_false += o.unknown_false;
    return *this;
}

Metrics metrics_from(const Confusion& c) {
    const auto ratio = [](double num, double den) { return den > 0 ? num / den : 0.0; };
    Metrics m;
    m.confusion = c;
    m.accuracy = ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total()));
    m.precision = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
    m.recall = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn + c.unknown_true));
    m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
    return m;
}

Metrics evaluate(const VariableModel& model, std::span<const HeldOutExample> heldout,
                 const std::set<std::string>& trained_doc_ids, double tau) {
    for (const auto& ex : heldout)
        if (trained_doc_ids.count(ex.document->doc_id))
            throw Error("OverlapError", "held-out document '" + ex.document->doc_id + "' was used for training");
    Confusion c;
    for (const auto& ex : heldout) {
        const Prediction p = predict(model, extract_features(*ex.document, model.vocabulary), tau);
        switch (p.cls) {
        case Class::Unknown: (ex.label ? c.unknown_true : c.unknown_false) += 1; break;
        case Class::True: (ex.label ? c.tp : c.fp) += 1; break;
        case Class::False: (ex.label ? c.fn : c.tn) += 1; break;
        }
    }
    return metrics_from(c);
}

// ---------------------------------------------------------------------------
// Model sets

ModelSet null_models(const Corpus& corpus) {
    ModelSet set;
    set.predictions.variables = corpus.variables();
    for (const auto& v : corpus.variables()) {
        VariableModel m;
        m.variable = v;
        set.models.push_back(std::move(m));
        set.fingerprints.emplace_back();
        set.predictions.cells.emplace_back(corpus.size(), Prediction{});
    }
    return set;
}

std::string plan_fingerprint(const VariablePlan& plan) {
    std::string fp;
    for (const auto& l : plan.labels) {
        fp += std::to_string(l.document);
        fp += l.value ? 'T' : 'F';
        for (const auto& phrase : l.emphasis) fp += '[' + join_phrase(phrase) + ']';
        fp += ';';
    }
    fp += '|';
    for (const auto& t : plan.excluded_terms) fp += t + ',';
    return fp;
}

PredictionTable predict_corpus(const Corpus& corpus, std::span<const VariableModel> models, double tau) {
    std::vector<std::map<std::string, std::uint32_t>> counts;
    counts.reserve(corpus.size());
    for (const auto& doc : corpus.documents()) counts.push_back(term_counts(doc));
    PredictionTable table;
    table.variables = corpus.variables();
    for (const auto& model : models) {
        auto& col = table.cells.emplace_back();
        col.reserve(corpus.size());
        for (const auto& c : counts) col.push_back(predict(model, to_features(c, model.vocabulary), tau));
    }
    return table;
}

std::pair<ModelSet, std::vector<DiffEntry>> retrain_models(const Corpus& corpus, const ModelSet& previous,
                                                           std::span<const VariablePlan> plans,
                                                           const Hyperparams& params) {
    if (plans.size() != corpus.variables().size())
        throw Error("InvalidPlan", "one training plan per variable is required");

    std::vector<std::map<std::string, std::uint32_t>> counts;
    counts.reserve(corpus.size());
    for (const auto& doc : corpus.documents()) counts.push_back(term_counts(doc));

    ModelSet next = previous;
    for (std::size_t v = 0; v < plans.size(); ++v) {
        const std::string fp = plan_fingerprint(plans[v]);
        if (fp == previous.fingerprints[v]) continue;

        // Vocabulary from the whole corpus so unseen-but-present terms keep a slot.
        std::set<std::string> all_terms;
        for (const auto& c : counts)
            for (const auto& [term, n] : c)
                if (!plans[v].excluded_terms.count(term)) all_terms.insert(term);
        Vocabulary vocab(std::vector<std::string>(all_terms.begin(), all_terms.end()));

        std::vector<Example> examples;
        examples.reserve(plans[v].labels.size());
        for (const auto& l : plans[v].labels) {
            Example ex{to_features(counts[l.document], vocab), l.value};
            for (const auto& phrase : l.emphasis)
                for (const auto& term : phrase)
                    if (auto idx = vocab.find(term)) ex.features.add(*idx);
            examples.push_back(std::move(ex));
        }
        next.models[v] = train(examples, corpus.variables()[v], std::move(vocab), params);
        next.fingerprints[v] = fp;
        auto& col = next.predictions.cells[v];
        for (std::size_t d = 0; d < corpus.size(); ++d)
            col[d] = predict(next.models[v], to_features(counts[d], next.models[v].vocabulary), params.tau);
    }
    auto diff = diff_tables(corpus, previous.predictions, next.predictions);
    return {std::move(next), std::move(diff)};
}

}  // namespace emr

#pragma once

// Brute-force reference implementations used by the unit and acceptance
// tests. They share no code with the library beyond its data types.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "emr/corpus.hpp"
#include "emr/feedback.hpp"
#include "emr/learner.hpp"
#include "emr/synthetic.hpp"
#include "emr/wordtree.hpp"

namespace oracle {

inline std::vector<std::string> words(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c >= 0x80) {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

struct Site {
    std::size_t doc, sentence, offset;
    auto operator<=>(const Site&) const = default;
};

// Every occurrence of `phrase` in every sentence, found by re-tokenizing the
// sentence text and comparing at each position.
inline std::vector<Site> phrase_sites(const emr::Corpus& corpus, const std::vector<std::string>& phrase) {
    std::vector<Site> out;
    for (std::size_t d = 0; d < corpus.size(); ++d) {
        const auto& doc = corpus.documents()[d];
        for (std::size_t s = 0; s < doc.sentences.size(); ++s) {
            const auto w = words(doc.slice(doc.sentences[s].span));
            for (std::size_t i = 0; i + phrase.size() <= w.size(); ++i) {
                bool ok = true;
                for (std::size_t k = 0; k < phrase.size() && ok; ++k) ok = w[i + k] == phrase[k];
                if (ok) out.push_back({d, s, i});
            }
        }
    }
    return out;
}

inline std::set<std::size_t> site_docs(const std::vector<Site>& sites) {
    std::set<std::size_t> out;
    for (const auto& s : sites) out.insert(s.doc);
    return out;
}

// Context sequence of a match: up to `depth` tokens on one side, nearest
// first, ending in "." when the sentence boundary is reached within depth.
inline std::vector<std::string> context(const emr::Corpus& corpus, const Site& site, std::size_t phrase_len,
                                        bool forward, std::size_t depth) {
    const auto& doc = corpus.documents()[site.doc];
    const auto w = words(doc.slice(doc.sentences[site.sentence].span));
    std::vector<std::string> out;
    if (forward) {
        for (std::size_t i = site.offset + phrase_len; i < w.size() && out.size() < depth; ++i) out.push_back(w[i]);
    } else {
        for (std::size_t i = site.offset; i > 0 && out.size() < depth; --i) out.push_back(w[i - 1]);
    }
    if (out.size() < depth) out.push_back(".");
    return out;
}

struct Gradient {
    double t = 0, f = 0, u = 1;
};

inline Gradient gradient(const std::set<std::size_t>& docs, const std::vector<emr::Prediction>& column) {
    if (docs.empty()) return {};
    double t = 0, f = 0, u = 0;
    for (std::size_t d : docs) {
        switch (column[d].cls) {
        case emr::Class::True: t += 1; break;
        case emr::Class::False: f += 1; break;
        case emr::Class::Unknown: u += 1; break;
        }
    }
    const double n = static_cast<double>(docs.size());
    return {t / n, f / n, u / n};
}

// ---------------------------------------------------------------------------
// Feedback

inline std::vector<std::string> implied_docs(const emr::FeedbackItem& item) {
    using K = emr::FeedbackKind;
    if (item.kind == K::DocumentLabel || item.kind == K::SpanHighlight) return {*item.doc_id};
    if (item.kind == K::PhraseLabel) return item.documents;
    return {};
}

inline bool suppressed(const emr::FeedbackItem& item, const std::string& doc) {
    return std::find(item.suppressed.begin(), item.suppressed.end(), doc) != item.suppressed.end();
}

// (kind, doc, variable, implicated ids) for every conflict, by checking all
// pairs of items.
using ConflictKey = std::tuple<int, std::string, std::string, std::set<std::uint64_t>>;

inline std::set<ConflictKey> conflicts(const std::vector<emr::FeedbackItem>& items) {
    using S = emr::FeedbackStatus;
    std::map<std::tuple<std::string, std::string>, std::set<std::uint64_t>> contra;
    std::set<ConflictKey> out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        for (std::size_t j = 0; j < items.size(); ++j) {
            const auto& a = items[i];
            const auto& b = items[j];
            if (i == j || a.variable != b.variable) continue;
            if (a.kind == emr::FeedbackKind::NeitherTerm || b.kind == emr::FeedbackKind::NeitherTerm) continue;
            if (a.target == b.target) continue;
            for (const auto& doc : implied_docs(a)) {
                const auto bd = implied_docs(b);
                if (std::find(bd.begin(), bd.end(), doc) == bd.end()) continue;
                if (a.status == S::Pending && b.status == S::Pending) {
                    auto& ids = contra[{doc, a.variable}];
                    ids.insert(a.id);
                    ids.insert(b.id);
                }
                // b applied and still in force for this doc, a pending and unconfirmed.
                if (b.status == S::Applied && a.status == S::Pending && !a.override_confirmed &&
                    !suppressed(b, doc)) {
                    bool latest = true;
                    for (const auto& c : items) {
                        if (c.id <= b.id || c.status != S::Applied || c.variable != b.variable) continue;
                        if (c.kind == emr::FeedbackKind::NeitherTerm || suppressed(c, doc)) continue;
                        const auto cd = implied_docs(c);
                        if (std::find(cd.begin(), cd.end(), doc) != cd.end()) latest = false;
                    }
                    if (latest) out.insert({1, doc, a.variable, {b.id, a.id}});
                }
            }
        }
    }
    for (const auto& [key, ids] : contra) out.insert({0, std::get<0>(key), std::get<1>(key), ids});
    return out;
}

inline std::set<ConflictKey> conflict_keys(const std::vector<emr::Conflict>& cs) {
    std::set<ConflictKey> out;
    for (const auto& c : cs)
        out.insert({c.kind == emr::ConflictKind::Contradiction ? 0 : 1, c.doc_id, c.variable,
                    std::set<std::uint64_t>(c.items.begin(), c.items.end())});
    return out;
}

// ---------------------------------------------------------------------------
// Learner

// Cells whose class differs, found by scanning both full tables.
inline std::set<std::tuple<std::string, std::string, emr::Class, emr::Class>> table_diff(
    const emr::Corpus& corpus, const emr::PredictionTable& before, const emr::PredictionTable& after) {
    std::set<std::tuple<std::string, std::string, emr::Class, emr::Class>> out;
    for (std::size_t v = 0; v < corpus.variables().size(); ++v)
        for (std::size_t d = 0; d < corpus.size(); ++d)
            if (before.cells[v][d].cls != after.cells[v][d].cls)
                out.insert({corpus.documents()[d].doc_id, corpus.variables()[v], before.cells[v][d].cls,
                            after.cells[v][d].cls});
    return out;
}

inline std::set<std::tuple<std::string, std::string, emr::Class, emr::Class>> diff_keys(
    const std::vector<emr::DiffEntry>& entries) {
    std::set<std::tuple<std::string, std::string, emr::Class, emr::Class>> out;
    for (const auto& e : entries) out.insert({e.doc_id, e.variable, e.old_class, e.new_class});
    return out;
}

}  // namespace oracle

namespace fixture {

inline emr::Corpus small_corpus(const std::vector<std::string>& texts, std::vector<std::string> variables) {
    std::vector<emr::PatientRecord> records;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "d%02zu", i + 1);
        records.push_back({id, {{std::string(id) + "-r", emr::ReportKind::Endoscopy, texts[i]}}});
    }
    return emr::build_corpus(std::move(records), std::move(variables));
}

inline emr::SyntheticCorpus synthetic(std::size_t docs, std::uint64_t seed, std::size_t vars) {
    return emr::generate_synthetic_corpus(emr::default_synthetic_spec(docs, seed, vars));
}

}  // namespace fixture

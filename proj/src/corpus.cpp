#include "emr/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "emr/error.hpp"
#include "text_util.hpp"

namespace emr {

using json = nlohmann::json;

std::string_view to_string(ReportKind kind) {
    switch (kind) {
    case ReportKind::Endoscopy: return "endoscopy";
    case ReportKind::Pathology: return "pathology";
    case ReportKind::Other: return "other";
    }
    return "other";
}

ReportKind parse_report_kind(std::string_view name) {
    if (name == "endoscopy") return ReportKind::Endoscopy;
    if (name == "pathology") return ReportKind::Pathology;
    if (name == "other") return ReportKind::Other;
    throw Error("MalformedCorpus", "unknown report kind '" + std::string(name) + "'");
}

std::optional<std::size_t> Document::report_index(std::string_view report_id) const {
    for (std::size_t i = 0; i < reports.size(); ++i)
        if (reports[i].id == report_id) return i;
    return std::nullopt;
}

bool Document::in_boilerplate(Span span) const {
    // boilerplate is sorted and disjoint
    auto it = std::upper_bound(boilerplate.begin(), boilerplate.end(), span.start,
                               [](std::size_t pos, const Span& s) { return pos < s.start; });
    if (it == boilerplate.begin()) return false;
    return std::prev(it)->contains(span);
}

Corpus::Corpus(std::vector<Document> documents, std::vector<std::string> variables)
    : documents_(std::move(documents)), variables_(std::move(variables)) {
    if (variables_.empty()) throw Error("MalformedCorpus", "variable list is empty");
    std::unordered_set<std::string> seen;
    for (const auto& v : variables_) {
        if (v.empty()) throw Error("MalformedCorpus", "empty variable name");
        if (!seen.insert(v).second) throw Error("MalformedCorpus", "duplicate variable '" + v + "'");
    }
    for (std::size_t i = 0; i < documents_.size(); ++i) {
        if (!doc_index_.emplace(documents_[i].doc_id, i).second)
            throw Error("MalformedCorpus", "duplicate doc_id '" + documents_[i].doc_id + "'");
    }
}

const Document* Corpus::find(std::string_view doc_id) const {
    auto idx = index_of(doc_id);
    return idx ? &documents_[*idx] : nullptr;
}

std::optional<std::size_t> Corpus::index_of(std::string_view doc_id) const {
    auto it = doc_index_.find(std::string(doc_id));
    if (it == doc_index_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::size_t> Corpus::variable_index(std::string_view variable) const {
    for (std::size_t i = 0; i < variables_.size(); ++i)
        if (variables_[i] == variable) return i;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Segmentation and tokenization

SentenceSegmenter::SentenceSegmenter()
    : abbreviations_{"dr", "mr", "mrs", "ms", "prof", "sr", "jr", "st", "vs", "e.g", "i.e",
                     "approx", "dept", "fig", "pt"} {}

SentenceSegmenter::SentenceSegmenter(std::set<std::string> abbreviations)
    : abbreviations_(std::move(abbreviations)) {}

bool SentenceSegmenter::ends_with_abbreviation(std::string_view text, std::size_t start,
                                               std::size_t period) const {
    std::size_t b = period;
    while (b > start && (detail::is_word_byte(text[b - 1]) || text[b - 1] == '.')) --b;
    if (b == period) return false;
    std::string word = detail::ascii_lower(text.substr(b, period - b));
    return abbreviations_.count(word) > 0;
}

std::vector<Span> SentenceSegmenter::segment(std::string_view text) const {
    std::vector<Span> out;
    const std::size_t n = text.size();
    std::size_t start = n;  // n = no open sentence
    std::size_t last_ink = 0;

    auto close = [&](std::size_t end) {
        if (start < end) out.push_back({start, end});
        start = n;
    };

    for (std::size_t i = 0; i < n; ++i) {
        const char c = text[i];
        if (start == n) {
            if (detail::is_space(c)) continue;
            start = i;
        }
        if (c == '\n') {
            std::size_t j = i + 1;
            while (j < n && (text[j] == ' ' || text[j] == '\t' || text[j] == '\r')) ++j;
            if (j < n && text[j] == '\n') {
                close(last_ink);
                i = j;
            }
            continue;
        }
        if (!detail::is_space(c)) last_ink = i + 1;
        if (c != '.' && c != '!' && c != '?') continue;

        std::size_t k = i;
        while (k + 1 < n && (text[k + 1] == '.' || text[k + 1] == '!' || text[k + 1] == '?')) ++k;
        std::size_t m = k;
        while (m + 1 < n && (text[m + 1] == ')' || text[m + 1] == '"' || text[m + 1] == '\'' ||
                             text[m + 1] == ']'))
            ++m;
        const bool boundary = m + 1 == n || detail::is_space(text[m + 1]);
        if (!boundary) {
            last_ink = m + 1;
            i = m;
            continue;
        }
        if (c == '.' && k == i && ends_with_abbreviation(text, start, i)) {
            last_ink = m + 1;
            i = m;
            continue;
        }
        last_ink = m + 1;
        close(m + 1);
        i = m;
    }
    if (start != n) close(last_ink);
    return out;
}

std::vector<Span> segment_sentences(std::string_view text) {
    static const SentenceSegmenter segmenter;
    return segmenter.segment(text);
}

std::vector<Token> tokenize(std::string_view text, std::size_t base) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (!detail::is_word_byte(text[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && detail::is_word_byte(text[j])) ++j;
        Token t;
        t.surface = std::string(text.substr(i, j - i));
        t.norm = detail::ascii_lower(t.surface);
        t.span = {base + i, base + j};
        out.push_back(std::move(t));
        i = j;
    }
    return out;
}

std::vector<std::string> normalize_phrase(std::string_view text) {
    std::vector<std::string> out;
    for (auto& t : tokenize(text)) out.push_back(std::move(t.norm));
    return out;
}

std::string join_phrase(const std::vector<std::string>& tokens) {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

std::vector<std::size_t> find_phrase(const Sentence& sentence, const std::vector<std::string>& phrase) {
    std::vector<std::size_t> hits;
    const auto& toks = sentence.tokens;
    if (phrase.empty() || phrase.size() > toks.size()) return hits;
    for (std::size_t i = 0; i + phrase.size() <= toks.size(); ++i) {
        bool match = true;
        for (std::size_t j = 0; j < phrase.size() && match; ++j) match = toks[i + j].norm == phrase[j];
        if (match) hits.push_back(i);
    }
    return hits;
}

// ---------------------------------------------------------------------------
// Linking

namespace {

Document make_document(PatientRecord record) {
    if (record.reports.empty())
        throw Error("EmptyRecord", "patient record '" + record.patient_id + "' has no reports");

    const auto has = [&](ReportKind k) {
        return std::any_of(record.reports.begin(), record.reports.end(),
                           [k](const Report& r) { return r.kind == k; });
    };
    if (has(ReportKind::Endoscopy) && has(ReportKind::Pathology)) {
        const auto rank = [](ReportKind k) {
            return k == ReportKind::Endoscopy ? 0 : k == ReportKind::Pathology ? 1 : 2;
        };
        std::stable_sort(record.reports.begin(), record.reports.end(),
                         [&](const Report& a, const Report& b) { return rank(a.kind) < rank(b.kind); });
    }

    Document doc;
    doc.doc_id = std::move(record.patient_id);
    doc.reports = std::move(record.reports);
    for (std::size_t r = 0; r < doc.reports.size(); ++r) {
        if (r > 0) doc.text += kReportSeparator;
        const std::size_t begin = doc.text.size();
        doc.text += doc.reports[r].text;
        doc.report_spans.push_back({begin, doc.text.size()});
    }
    return doc;
}

void segment_document(Document& doc) {
    doc.sentences.clear();
    for (std::size_t r = 0; r < doc.reports.size(); ++r) {
        const Span extent = doc.report_spans[r];
        const std::string_view body = doc.slice(extent);
        for (const Span& s : segment_sentences(body)) {
            Sentence sentence;
            sentence.report = r;
            sentence.span = {extent.start + s.start, extent.start + s.end};
            sentence.tokens = tokenize(doc.slice(sentence.span), sentence.span.start);
            doc.sentences.push_back(std::move(sentence));
        }
    }
}

}  // namespace

std::vector<Document> link_reports(std::vector<PatientRecord> records) {
    std::vector<Document> docs;
    docs.reserve(records.size());
    for (auto& record : records) docs.push_back(make_document(std::move(record)));
    return docs;
}

// ---------------------------------------------------------------------------
// Boilerplate

BoilerplateConfig BoilerplateConfig::defaults() {
    BoilerplateConfig cfg;
    cfg.patterns = {
        R"(de-?identified)",
        R"(^\s*page\s+\d+\s+of\s+\d+\s*$)",
        R"(^\s*(electronically\s+)?signed\s+(by|out)\b)",
    };
    return cfg;
}

BoilerplateConfig load_boilerplate_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("MalformedConfig", "cannot read boilerplate pattern file " + path.string());
    BoilerplateConfig cfg = BoilerplateConfig::defaults();
    std::string line;
    while (std::getline(in, line)) {
        const std::string_view trimmed = detail::trim(line);
        if (trimmed.empty() || trimmed.front() == '#') continue;
        try {
            std::regex probe{std::string(trimmed)};
        } catch (const std::regex_error& e) {
            throw Error("MalformedConfig", "bad boilerplate pattern '" + std::string(trimmed) + "': " + e.what());
        }
        cfg.patterns.emplace_back(trimmed);
    }
    return cfg;
}

namespace {

struct Line {
    Span span;  // trimmed extent, empty when the line is blank
    std::string key;
};

std::vector<Line> split_lines(const Document& doc) {
    std::vector<Line> lines;
    std::size_t begin = 0;
    const std::string_view text = doc.text;
    while (begin <= text.size()) {
        std::size_t end = text.find('\n', begin);
        if (end == std::string_view::npos) end = text.size();
        std::size_t a = begin, b = end;
        while (a < b && detail::is_space(text[a])) ++a;
        while (b > a && detail::is_space(text[b - 1])) --b;
        if (a < b) lines.push_back({{a, b}, detail::collapse_lower(text.substr(a, b - a))});
        if (end == text.size()) break;
        begin = end + 1;
    }
    return lines;
}

bool is_rule_line(std::string_view line) {
    std::size_t ink = 0;
    for (char c : line) {
        if (c == '-' || c == '*' || c == '=' || c == '_') ++ink;
        else if (!detail::is_space(c)) return false;
    }
    return ink >= 3;
}

}  // namespace

BoilerplateDetector::BoilerplateDetector(const std::vector<Document>& corpus, BoilerplateConfig config)
    : config_(std::move(config)), corpus_size_(corpus.size()) {
    for (const auto& doc : corpus) {
        std::unordered_set<std::string> keys;
        for (auto& line : split_lines(doc)) keys.insert(std::move(line.key));
        for (const auto& k : keys) ++line_doc_counts_[k];
    }
}

std::vector<Span> BoilerplateDetector::detect(const Document& document) const {
    std::vector<std::regex> patterns;
    patterns.reserve(config_.patterns.size());
    for (const auto& p : config_.patterns)
        patterns.emplace_back(p, std::regex::ECMAScript | std::regex::icase);

    std::vector<Span> out;
    for (const auto& line : split_lines(document)) {
        const std::string_view raw = document.slice(line.span);
        bool hit = is_rule_line(raw);
        if (!hit) {
            const std::string s(raw);
            hit = std::any_of(patterns.begin(), patterns.end(),
                              [&](const std::regex& re) { return std::regex_search(s, re); });
        }
        // Repetition needs the line in at least two documents.
        if (!hit && corpus_size_ >= 2) {
            auto it = line_doc_counts_.find(line.key);
            if (it != line_doc_counts_.end() && it->second >= 2 &&
                static_cast<double>(it->second) >= config_.repeat_threshold * static_cast<double>(corpus_size_))
                hit = true;
        }
        if (hit) out.push_back(line.span);
    }
    return out;
}

Corpus build_corpus(std::vector<PatientRecord> records, std::vector<std::string> variables,
                    const BoilerplateConfig& boilerplate) {
    std::vector<Document> docs = link_reports(std::move(records));
    for (auto& doc : docs) segment_document(doc);
    const BoilerplateDetector detector(docs, boilerplate);
    for (auto& doc : docs) doc.boilerplate = detector.detect(doc);
    return Corpus(std::move(docs), std::move(variables));
}

// ---------------------------------------------------------------------------
// JSON

namespace {

[[noreturn]] void malformed(const std::string& where, const std::string& what) {
    throw Error("MalformedCorpus", where + ": " + what);
}

const json& require(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object()) malformed(where, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) malformed(where, std::string("missing field '") + key + "'");
    return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
    const json& v = require(obj, key, where);
    if (!v.is_string()) malformed(where + "/" + key, "expected a string");
    return v.get<std::string>();
}

}  // namespace

Corpus parse_corpus(std::string_view json_text, const BoilerplateConfig& boilerplate) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error("MalformedCorpus", std::string("invalid JSON: ") + e.what());
    }

    const json& vars = require(root, "variables", "");
    if (!vars.is_array()) malformed("/variables", "expected an array");
    if (vars.empty()) malformed("/variables", "variable list is empty");
    std::vector<std::string> variables;
    std::unordered_set<std::string> seen_vars;
    for (std::size_t i = 0; i < vars.size(); ++i) {
        const std::string where = "/variables/" + std::to_string(i);
        if (!vars[i].is_string() || vars[i].get<std::string>().empty()) malformed(where, "expected a nonempty string");
        if (!seen_vars.insert(vars[i].get<std::string>()).second) malformed(where, "duplicate variable");
        variables.push_back(vars[i].get<std::string>());
    }

    const json& recs = require(root, "records", "");
    if (!recs.is_array()) malformed("/records", "expected an array");
    std::vector<PatientRecord> records;
    std::unordered_set<std::string> seen_docs;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const std::string where = "/records/" + std::to_string(i);
        PatientRecord rec;
        rec.patient_id = require_string(recs[i], "patient_id", where);
        if (rec.patient_id.empty()) malformed(where + "/patient_id", "empty doc_id");
        if (!seen_docs.insert(rec.patient_id).second)
            malformed(where + "/patient_id", "duplicate doc_id '" + rec.patient_id + "'");
        const json& reps = require(recs[i], "reports", where);
        if (!reps.is_array()) malformed(where + "/reports", "expected an array");
        if (reps.empty()) malformed(where + "/reports", "record has no reports");
        std::unordered_set<std::string> seen_reports;
        for (std::size_t j = 0; j < reps.size(); ++j) {
            const std::string rw = where + "/reports/" + std::to_string(j);
            Report rep;
            rep.id = require_string(reps[j], "id", rw);
            if (rep.id.empty()) malformed(rw + "/id", "empty report id");
            if (!seen_reports.insert(rep.id).second) malformed(rw + "/id", "duplicate report id '" + rep.id + "'");
            try {
                rep.kind = parse_report_kind(require_string(reps[j], "kind", rw));
            } catch (const Error& e) {
                malformed(rw + "/kind", e.what());
            }
            rep.text = require_string(reps[j], "text", rw);
            if (rep.text.empty() && rep.kind != ReportKind::Other)
                malformed(rw + "/text", "empty text is only allowed for kind 'other'");
            rec.reports.push_back(std::move(rep));
        }
        records.push_back(std::move(rec));
    }
    return build_corpus(std::move(records), std::move(variables), boilerplate);
}

Corpus load_corpus(const std::filesystem::path& path, const BoilerplateConfig& boilerplate) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("MalformedCorpus", "cannot read corpus file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_corpus(buf.str(), boilerplate);
}

std::string corpus_to_json(const Corpus& corpus) {
    json root;
    root["variables"] = corpus.variables();
    json recs = json::array();
    for (const auto& doc : corpus.documents()) {
        json reps = json::array();
        for (const auto& r : doc.reports)
            reps.push_back({{"id", r.id}, {"kind", std::string(to_string(r.kind))}, {"text", r.text}});
        recs.push_back({{"patient_id", doc.doc_id}, {"reports", std::move(reps)}});
    }
    root["records"] = std::move(recs);
    return root.dump(1);
}

}  // namespace emr

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace emr {

enum class ReportKind { Endoscopy, Pathology, Other };

std::string_view to_string(ReportKind kind);
ReportKind parse_report_kind(std::string_view name);

struct Report {
    std::string id;
    ReportKind kind = ReportKind::Other;
    std::string text;
};

// Half-open byte range [start, end).
struct Span {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - start; }
    bool contains(const Span& other) const { return start <= other.start && other.end <= end; }
    bool overlaps(const Span& other) const { return start < other.end && other.start < end; }
    friend bool operator==(const Span&, const Span&) = default;
    friend auto operator<=>(const Span&, const Span&) = default;
};

struct Token {
    std::string surface;
    std::string norm;
    Span span;
};

struct Sentence {
    std::size_t report = 0;  // index into Document::reports
    Span span;
    std::vector<Token> tokens;
};

// One patient record: its reports concatenated into a single text. All spans
// held by a document (sentences, tokens, boilerplate) are byte offsets into
// `text`.
struct Document {
    std::string doc_id;
    std::vector<Report> reports;
    std::string text;
    std::vector<Span> report_spans;
    std::vector<Sentence> sentences;
    std::vector<Span> boilerplate;

    std::string_view slice(Span span) const { return std::string_view(text).substr(span.start, span.size()); }
    std::optional<std::size_t> report_index(std::string_view report_id) const;
    bool in_boilerplate(Span span) const;
};

// Separator placed between consecutive reports of a document. A blank line, so
// no sentence can straddle two reports.
inline constexpr std::string_view kReportSeparator = "\n\n";

struct PatientRecord {
    std::string patient_id;
    std::vector<Report> reports;
};

class Corpus {
public:
    Corpus() = default;
    Corpus(std::vector<Document> documents, std::vector<std::string> variables);

    const std::vector<Document>& documents() const { return documents_; }
    const std::vector<std::string>& variables() const { return variables_; }
    std::size_t size() const { return documents_.size(); }

    const Document* find(std::string_view doc_id) const;
    std::optional<std::size_t> index_of(std::string_view doc_id) const;
    std::optional<std::size_t> variable_index(std::string_view variable) const;
    bool has_variable(std::string_view variable) const { return variable_index(variable).has_value(); }

    // A corpus holding only the documents accepted by `keep`, in corpus order.
    template <typename Pred>
    Corpus subset(Pred keep) const {
        std::vector<Document> docs;
        for (const auto& d : documents_)
            if (keep(d)) docs.push_back(d);
        return Corpus(std::move(docs), variables_);
    }

private:
    std::vector<Document> documents_;
    std::vector<std::string> variables_;
    std::unordered_map<std::string, std::size_t> doc_index_;
};

// Rule-based splitter: terminal punctuation followed by whitespace, and blank
// lines. A period that closes a listed abbreviation does not end a sentence.
class SentenceSegmenter {
public:
    SentenceSegmenter();
    explicit SentenceSegmenter(std::set<std::string> abbreviations);

    std::vector<Span> segment(std::string_view text) const;
    const std::set<std::string>& abbreviations() const { return abbreviations_; }

private:
    bool ends_with_abbreviation(std::string_view text, std::size_t start, std::size_t period) const;

    std::set<std::string> abbreviations_;
};

std::vector<Span> segment_sentences(std::string_view text);

// Tokens are maximal runs of ASCII letters/digits (bytes >= 0x80 are kept
// inside words so UTF-8 sequences stay whole). Offsets are shifted by `base`.
std::vector<Token> tokenize(std::string_view text, std::size_t base = 0);

// Normalized token sequence of free text, e.g. "Hot Biopsy," -> {hot, biopsy}.
std::vector<std::string> normalize_phrase(std::string_view text);

std::string join_phrase(const std::vector<std::string>& tokens);

// Token indices at which `phrase` starts within the sentence (all, overlapping).
std::vector<std::size_t> find_phrase(const Sentence& sentence, const std::vector<std::string>& phrase);

// One Document per record. Endoscopy reports precede pathology reports when
// a record has both; otherwise the input order is kept.
std::vector<Document> link_reports(std::vector<PatientRecord> records);

struct BoilerplateConfig {
    std::vector<std::string> patterns;  // ECMAScript, matched case-insensitively per line
    double repeat_threshold = 0.5;      // fraction of documents a line must appear in

    static BoilerplateConfig defaults();
};

// Appends the patterns in `path` (one regex per line, '#' comments) to the
// defaults.
BoilerplateConfig load_boilerplate_config(const std::filesystem::path& path);

class BoilerplateDetector {
public:
    BoilerplateDetector(const std::vector<Document>& corpus, BoilerplateConfig config);

    std::vector<Span> detect(const Document& document) const;

private:
    BoilerplateConfig config_;
    std::size_t corpus_size_ = 0;
    std::unordered_map<std::string, std::size_t> line_doc_counts_;
};

// Segments, tokenizes and tags boilerplate in every document.
Corpus build_corpus(std::vector<PatientRecord> records, std::vector<std::string> variables,
                    const BoilerplateConfig& boilerplate = BoilerplateConfig::defaults());

Corpus parse_corpus(std::string_view json_text,
                    const BoilerplateConfig& boilerplate = BoilerplateConfig::defaults());
Corpus load_corpus(const std::filesystem::path& path,
                   const BoilerplateConfig& boilerplate = BoilerplateConfig::defaults());

std::string corpus_to_json(const Corpus& corpus);

}  // namespace emr

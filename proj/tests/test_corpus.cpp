#include <doctest.h>

#include <fstream>
#include <functional>
#include <sstream>

#include "emr/corpus.hpp"
#include "emr/error.hpp"
#include "emr/json_io.hpp"
#include "oracles.hpp"

using namespace emr;

namespace {

std::string read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> sentence_texts(std::string_view text) {
    std::vector<std::string> out;
    for (const auto& s : segment_sentences(text)) out.emplace_back(text.substr(s.start, s.size()));
    return out;
}

std::string error_code(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

}  // namespace

TEST_CASE("segmentation matches the hand-segmented fixture") {
    const std::string text = read(EMR_FIXTURE_DIR "/segmentation.txt");
    std::vector<std::string> expected;
    std::istringstream lines(read(EMR_FIXTURE_DIR "/segmentation.expected"));
    for (std::string line; std::getline(lines, line);) expected.push_back(line);
    REQUIRE(expected.size() == 20);
    CHECK(sentence_texts(text) == expected);
}

TEST_CASE("segmentation basics") {
    CHECK(sentence_texts("Polyp found. Biopsy taken.") == std::vector<std::string>{"Polyp found.", "Biopsy taken."});
    CHECK(segment_sentences("").empty());
    CHECK(segment_sentences("   \n\n  ").empty());
    CHECK(sentence_texts("Dr. Smith removed it.") == std::vector<std::string>{"Dr. Smith removed it."});
    CHECK(sentence_texts("No text ends here") == std::vector<std::string>{"No text ends here"});
    CHECK(sentence_texts("Size 2.5 cm. Next.") == std::vector<std::string>{"Size 2.5 cm.", "Next."});

    SentenceSegmenter custom({"cm"});
    CHECK(custom.segment("Size 2 cm. Next.").size() == 1);
}

TEST_CASE("tokenizer") {
    auto norms = [](std::string_view s) {
        std::vector<std::string> out;
        for (const auto& t : tokenize(s)) out.push_back(t.norm);
        return out;
    };
    CHECK(norms("Hot biopsy, forceps.") == std::vector<std::string>{"hot", "biopsy", "forceps"});
    CHECK(norms("A1c=7.2") == std::vector<std::string>{"a1c", "7", "2"});
    CHECK(norms("").empty());

    SUBCASE("surfaces and gaps reproduce the input") {
        const std::string text = "  The POLYP (5mm) was removed; caf\xc3\xa9 -- ok!  ";
        const auto toks = tokenize(text, 100);
        std::string rebuilt;
        std::size_t pos = 100;
        for (const auto& t : toks) {
            rebuilt += text.substr(pos - 100, t.span.start - pos);
            CHECK(text.substr(t.span.start - 100, t.span.size()) == t.surface);
            rebuilt += t.surface;
            pos = t.span.end;
        }
        rebuilt += text.substr(pos - 100);
        CHECK(rebuilt == text);
        CHECK(toks[5].norm == "caf\xc3\xa9");
    }

    CHECK(normalize_phrase("  Hot   BIOPSY, ") == std::vector<std::string>{"hot", "biopsy"});
    CHECK(join_phrase({"hot", "biopsy"}) == "hot biopsy");
}

TEST_CASE("find_phrase returns overlapping starts") {
    Sentence s;
    s.tokens = tokenize("polyp polyp polyp biopsy");
    CHECK(find_phrase(s, {"polyp", "polyp"}) == std::vector<std::size_t>{0, 1});
    CHECK(find_phrase(s, {"biopsy"}) == std::vector<std::size_t>{3});
    CHECK(find_phrase(s, {"cecum"}).empty());
    CHECK(find_phrase(s, {}).empty());
}

TEST_CASE("report linking") {
    PatientRecord both{"p1", {{"p1-path", ReportKind::Pathology, "Tubular adenoma."},
                              {"p1-endo", ReportKind::Endoscopy, "Polyp removed."}}};
    PatientRecord one{"p2", {{"p2-endo", ReportKind::Endoscopy, "Normal exam."}}};
    PatientRecord other_first{"p3", {{"p3-note", ReportKind::Other, "Call back."},
                                     {"p3-endo", ReportKind::Endoscopy, "Normal."}}};
    const auto docs = link_reports({both, one, other_first});
    REQUIRE(docs.size() == 3);
    CHECK(docs[0].reports.size() == 2);
    CHECK(docs[0].reports[0].id == "p1-endo");
    CHECK(docs[0].reports[1].id == "p1-path");
    CHECK(docs[0].text == "Polyp removed.\n\nTubular adenoma.");
    CHECK(docs[0].report_spans[1] == Span{16, 32});
    CHECK(docs[1].reports.size() == 1);
    CHECK(docs[2].reports[0].id == "p3-note");  // no pathology: input order kept

    CHECK(error_code([] { link_reports({PatientRecord{"empty", {}}}); }) == "EmptyRecord");
}

TEST_CASE("document sentences carry report index and global offsets") {
    PatientRecord rec{"p1", {{"e", ReportKind::Endoscopy, "Polyp found. Hot biopsy done."},
                             {"p", ReportKind::Pathology, "Adenoma."}}};
    const Corpus corpus = build_corpus({rec}, {"biopsy"});
    const Document& d = corpus.documents()[0];
    REQUIRE(d.sentences.size() == 3);
    CHECK(d.sentences[2].report == 1);
    CHECK(d.slice(d.sentences[2].span) == "Adenoma.");
    CHECK(d.slice(d.sentences[1].tokens[0].span) == "Hot");
    CHECK(d.report_index("p") == 1u);
    CHECK_FALSE(d.report_index("x").has_value());
}

TEST_CASE("boilerplate detection") {
    std::vector<std::string> texts;
    for (int i = 0; i < 10; ++i) {
        std::string t = "*** DE-IDENTIFIED ***\nENDOSCOPY REPORT\nFinding number " + std::to_string(i) + ".\n";
        if (i < 2) t += "Shared rare line.\n";
        if (i < 5) t += "Half line.\n";
        t += "----------\n";
        texts.push_back(t);
    }
    const Corpus corpus = fixture::small_corpus(texts, {"v"});

    // Brute-force line frequency over the fixture.
    std::map<std::string, int> freq;
    for (const auto& t : texts) {
        std::set<std::string> lines;
        std::istringstream in(t);
        for (std::string l; std::getline(in, l);) lines.insert(l);
        for (const auto& l : lines) ++freq[l];
    }
    CHECK(freq["Shared rare line."] == 2);

    const Document& d0 = corpus.documents()[0];
    auto covered = [&](std::string_view needle) {
        const auto pos = d0.text.find(needle);
        REQUIRE(pos != std::string::npos);
        return d0.in_boilerplate({pos, pos + needle.size()});
    };
    CHECK(covered("*** DE-IDENTIFIED ***"));
    CHECK(covered("ENDOSCOPY REPORT"));
    CHECK(covered("----------"));
    CHECK(covered("Half line."));  // 5 of 10 documents
    CHECK_FALSE(covered("Shared rare line."));
    CHECK_FALSE(covered("Finding number 0."));

    SUBCASE("single document: patterns only") {
        const Corpus one = fixture::small_corpus({"*** DE-IDENTIFIED ***\nPolyp found.\nPage 1 of 2\n"}, {"v"});
        const Document& d = one.documents()[0];
        CHECK(d.boilerplate.size() == 2);
        const auto pos = d.text.find("Polyp");
        CHECK_FALSE(d.in_boilerplate({pos, pos + 5}));
    }

    SUBCASE("boilerplate tokens are excluded from features") {
        const auto counts = term_counts(d0);
        CHECK(counts.count("identified") == 0);
        CHECK(counts.count("endoscopy") == 0);
        CHECK(counts.at("finding") == 1);
    }
}

TEST_CASE("boilerplate pattern file extends the defaults") {
    const auto path = std::filesystem::temp_directory_path() / "emr_bp_test.txt";
    {
        std::ofstream out(path);
        out << "# clinic footer\n^\\s*clinic\\s+\\w+\\s*$\n\n";
    }
    const auto cfg = load_boilerplate_config(path);
    CHECK(cfg.patterns.size() == BoilerplateConfig::defaults().patterns.size() + 1);
    const Corpus c = build_corpus({{"a", {{"r", ReportKind::Other, "Clinic North\nPolyp found."}}}}, {"v"}, cfg);
    CHECK(c.documents()[0].boilerplate.size() == 1);

    {
        std::ofstream out(path);
        out << "([unclosed\n";
    }
    CHECK(error_code([&] { load_boilerplate_config(path); }) == "MalformedConfig");
    std::filesystem::remove(path);
}

TEST_CASE("corpus parsing") {
    const std::string minimal =
        R"({"variables":["biopsy"],"records":[{"patient_id":"a","reports":[{"id":"a1","kind":"endoscopy","text":"Polyp found."}]}]})";
    const Corpus c = parse_corpus(minimal);
    CHECK(c.size() == 1);
    CHECK(c.variables() == std::vector<std::string>{"biopsy"});
    CHECK(c.documents()[0].sentences.size() == 1);

    auto fails = [](const std::string& text, const std::string& where) {
        try {
            parse_corpus(text);
        } catch (const Error& e) {
            CHECK(e.code() == "MalformedCorpus");
            CHECK(std::string(e.what()).find(where) != std::string::npos);
            return;
        }
        FAIL("expected MalformedCorpus for " << text);
    };
    fails(R"({"variables":[],"records":[]})", "/variables");
    fails(R"({"records":[]})", "missing field 'variables'");
    fails(R"({"variables":["v"],"records":[{"patient_id":"a","reports":[{"id":"x","kind":"other","text":""}]},)"
          R"({"patient_id":"a","reports":[{"id":"y","kind":"other","text":""}]}]})",
          "/records/1/patient_id");
    fails(R"({"variables":["v"],"records":[{"patient_id":"a","reports":[{"id":"x","kind":"xray","text":"t"}]}]})",
          "/records/0/reports/0/kind");
    fails(R"({"variables":["v"],"records":[{"patient_id":"a","reports":[]}]})", "/records/0/reports");
    fails("{not json", "invalid JSON");

    SUBCASE("round trip") {
        const auto data = fixture::synthetic(12, 3, 4);
        const Corpus again = parse_corpus(corpus_to_json(data.corpus));
        CHECK(corpus_to_json(again) == corpus_to_json(data.corpus));
        CHECK(again.size() == 12);
        CHECK(again.documents()[5].text == data.corpus.documents()[5].text);
    }
}

TEST_CASE("corpus lookups") {
    const Corpus c = fixture::small_corpus({"One.", "Two."}, {"a", "b"});
    CHECK(c.index_of("d02") == 1u);
    CHECK(c.find("nope") == nullptr);
    CHECK(c.variable_index("b") == 1u);
    CHECK_FALSE(c.has_variable("c"));
    CHECK(error_code([] { Corpus({}, {}); }) == "MalformedCorpus");
    const Corpus sub = c.subset([](const Document& d) { return d.doc_id == "d02"; });
    CHECK(sub.size() == 1);
    CHECK(sub.index_of("d02") == 0u);
}

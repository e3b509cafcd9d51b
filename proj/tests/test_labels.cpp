#include <doctest.h>

#include "emr/error.hpp"
#include "emr/labels.hpp"
#include "oracles.hpp"

using namespace emr;

TEST_CASE("label files") {
    const Corpus c = fixture::small_corpus({"One.", "Two."}, {"biopsy", "cecum"});
    const std::vector<Label> labels{{"d01", "biopsy", true}, {"d02", "cecum", false}};
    const auto parsed = parse_labels(labels_to_json(labels), &c);
    REQUIRE(parsed.size() == 2);
    CHECK(parsed[0].doc_id == "d01");
    CHECK(parsed[0].value);
    CHECK_FALSE(parsed[1].value);

    const auto path = std::filesystem::temp_directory_path() / "emr_labels_test.json";
    save_labels(path, labels);
    CHECK(load_labels(path, &c).size() == 2);
    std::filesystem::remove(path);

    auto code = [&](const std::string& text) {
        try {
            parse_labels(text, &c);
        } catch (const Error& e) {
            return e.code() + " " + e.what();
        }
        return std::string("ok");
    };
    CHECK(code(R"({"labels":[{"doc_id":"zz","variable":"biopsy","value":true}]})").find("/labels/0") != std::string::npos);
    CHECK(code(R"({"labels":[{"doc_id":"d01","variable":"nope","value":true}]})").rfind("MalformedLabels", 0) == 0);
    CHECK(code(R"({"labels":[{"doc_id":"d01","variable":"biopsy","value":"yes"}]})").rfind("MalformedLabels", 0) == 0);
    CHECK(code("[]").rfind("MalformedLabels", 0) == 0);
    CHECK(parse_labels(R"({"labels":[{"doc_id":"zz","variable":"x","value":true}]})").size() == 1);
    CHECK_THROWS_AS(load_labels("/nonexistent/labels.json"), Error);
}

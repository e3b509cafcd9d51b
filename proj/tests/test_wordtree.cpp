#include <doctest.h>

#include <functional>
#include <random>

#include "emr/error.hpp"
#include "emr/json_io.hpp"
#include "emr/wordtree.hpp"
#include "oracles.hpp"
#include "tree_check.hpp"

using namespace emr;

namespace {

Corpus biopsy_corpus() {
    return fixture::small_corpus({"A hot biopsy was taken. Cold biopsy done.",
                                  "Hot biopsy forceps used. No biopsy.",
                                  "The polyp was removed.",
                                  "Biopsy."},
                                 {"biopsy"});
}

}  // namespace

TEST_CASE("tree structure on a small corpus") {
    const Corpus c = biopsy_corpus();
    const WordTree t = build_tree(c, "Biopsy");
    CHECK(t.root_phrase() == std::vector<std::string>{"biopsy"});
    CHECK(t.matches().size() == 5);
    CHECK(document_filter(t) == std::vector<std::size_t>{0, 1, 3});
    CHECK(document_filter_ids(t, c) == std::vector<std::string>{"d01", "d02", "d04"});

    // Backward: hot(2), cold, no, "." (sentence start).
    const auto& back = t.backward().children;
    REQUIRE(back.size() == 4);
    CHECK(back[0].token == "hot");
    CHECK(back[0].weight() == 2);
    CHECK(t.backward().child(".")->end);

    const Coverage cov = coverage(t, c);
    CHECK(cov.documents == 3);
    CHECK(cov.percent == 75.0);

    CHECK(font_scale(t.forward(), t) == 1.0);
    CHECK(font_scale(back[0], t) == doctest::Approx(std::sqrt(2.0 / 5.0)));
}

TEST_CASE("drill down and revert") {
    const Corpus c = biopsy_corpus();
    const WordTree t = build_tree(c, "biopsy");
    const WordTree hot = drill_down(t, c, "hot", Direction::Backward);
    CHECK(join_phrase(hot.root_phrase()) == "hot biopsy");
    CHECK(hot.matches().size() == 2);
    CHECK(document_filter(hot) == std::vector<std::size_t>{0, 1});
    CHECK_FALSE(hot == build_tree(c, "hot biopsy"));  // history differs
    CHECK(hot.matches() == build_tree(c, "hot biopsy").matches());

    const WordTree forceps = drill_down(hot, c, "forceps", Direction::Forward);
    CHECK(join_phrase(forceps.root_phrase()) == "hot biopsy forceps");
    CHECK(document_filter(forceps) == std::vector<std::size_t>{1});
    CHECK(forceps.history().size() == 2);

    const WordTree back1 = revert(forceps, c);
    CHECK(back1 == hot);
    const WordTree back2 = revert(back1, c);
    CHECK(back2 == t);
    CHECK_THROWS_AS(revert(back2, c), Error);

    CHECK_THROWS_AS(drill_down(t, c, "polyp", Direction::Forward), Error);
    CHECK_THROWS_AS(drill_down(t, c, ".", Direction::Forward), Error);
}

TEST_CASE("empty queries and empty trees") {
    const Corpus c = biopsy_corpus();
    CHECK_THROWS_AS(build_tree(c, " ,. "), Error);
    const WordTree none = build_tree(c, "cecum");
    CHECK(none.empty());
    CHECK(coverage(none, c).documents == 0);
    CHECK(coverage(none, c).percent == 0.0);
    const std::vector<Prediction> col(c.size());
    const NodeGradient g = node_gradient(none.forward(), col);
    CHECK(g.frac_unknown == 1.0);
    CHECK(font_scale(none.forward(), none) == 1.0);
}

TEST_CASE("node gradient fractions") {
    const Corpus c = fixture::small_corpus({"hot biopsy.", "hot biopsy.", "hot biopsy.", "x."}, {"biopsy"});
    const WordTree t = build_tree(c, "hot");
    std::vector<Prediction> col{{Class::True, .9}, {Class::True, .8}, {Class::False, .2}, {Class::Unknown, .5}};
    const NodeGradient g = node_gradient(*t.forward().child("biopsy"), col);
    CHECK(g.frac_true == doctest::Approx(2.0 / 3.0));
    CHECK(g.frac_false == doctest::Approx(1.0 / 3.0));
    CHECK(g.frac_unknown == 0.0);
}

TEST_CASE("depth cap") {
    std::string long_sentence = "start";
    for (int i = 0; i < 30; ++i) long_sentence += " w" + std::to_string(i);
    const Corpus c = fixture::small_corpus({long_sentence + "."}, {"v"});
    WordTreeOptions opts;
    opts.max_depth = 5;
    const WordTree t = build_tree(c, std::vector<std::string>{"start"}, opts);
    std::size_t depth = 0;
    const TreeNode* n = &t.forward();
    while (!n->children.empty()) {
        n = &n->children[0];
        ++depth;
    }
    CHECK(depth == 5);
    CHECK(n->token == "w4");
}

TEST_CASE("random trees match the brute-force scan") {
    const auto data = fixture::synthetic(40, 21, 6);
    std::mt19937_64 gen(5);
    std::vector<Prediction> col(data.corpus.size());
    const Class classes[] = {Class::True, Class::False, Class::Unknown};
    for (auto& p : col) p = {classes[gen() % 3], 0.5};
    for (int i = 0; i < 25; ++i) {
        const auto phrase = tree_check::random_phrase(data.corpus, gen);
        const WordTree t = build_tree(data.corpus, phrase);
        const std::string failure = tree_check::compare(data.corpus, t, col);
        CHECK_MESSAGE(failure.empty(), join_phrase(phrase) << ": " << failure);
    }
}

TEST_CASE("tree payload") {
    const Corpus c = biopsy_corpus();
    const WordTree t = build_tree(c, "biopsy");
    const std::vector<Prediction> col(c.size());
    const json j = tree_payload(t, c, col);
    CHECK(j["root"] == json::array({"biopsy"}));
    CHECK(j["coverage"]["docs"] == 3);
    CHECK(j["backward"]["children"][0]["token"] == "hot");
    CHECK(j["backward"]["children"][0]["weight"] == 2);
    CHECK(j["forward"]["gradient"]["u"] == 1.0);
}

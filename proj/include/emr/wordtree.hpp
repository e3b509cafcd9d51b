#pragma once

#include <compare>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emr/corpus.hpp"
#include "emr/learner.hpp"

namespace emr {

// One occurrence of the root phrase: token offset `offset` of a sentence.
struct MatchSite {
    std::size_t document = 0;
    std::size_t sentence = 0;
    std::size_t offset = 0;

    friend bool operator==(const MatchSite&, const MatchSite&) = default;
    friend auto operator<=>(const MatchSite&, const MatchSite&) = default;
};

inline constexpr std::string_view kEndToken = ".";

struct TreeNode {
    std::string token;  // kEndToken for the sentence boundary
    bool end = false;
    std::vector<MatchSite> sites;
    std::vector<TreeNode> children;  // weight descending, then token

    std::size_t weight() const { return sites.size(); }
    const TreeNode* child(std::string_view token) const;
};

enum class Direction { Forward, Backward };

struct WordTreeOptions {
    std::size_t max_depth = 20;  // tokens per side
};

struct TreeState {
    std::vector<std::string> phrase;
    std::vector<MatchSite> sites;
    friend bool operator==(const TreeState&, const TreeState&) = default;
};

// Bidirectional keyword-in-context tree. `forward` grows from the tokens that
// follow each match, `backward` from the tokens that precede it (nearest
// first). Both roots carry every match site.
class WordTree {
public:
    const std::vector<std::string>& root_phrase() const { return current_.phrase; }
    const std::vector<MatchSite>& matches() const { return current_.sites; }
    const TreeNode& forward() const { return forward_; }
    const TreeNode& backward() const { return backward_; }
    const std::vector<TreeState>& history() const { return history_; }
    const WordTreeOptions& options() const { return options_; }
    bool empty() const { return current_.sites.empty(); }

    friend bool operator==(const WordTree& a, const WordTree& b) {
        return a.current_ == b.current_ && a.history_ == b.history_;
    }

private:
    friend WordTree build_tree(const Corpus&, std::vector<std::string>, WordTreeOptions);
    friend WordTree drill_down(const WordTree&, const Corpus&, std::string_view, Direction);
    friend WordTree revert(const WordTree&, const Corpus&);
    static WordTree from_state(const Corpus& corpus, TreeState state, std::vector<TreeState> history,
                               WordTreeOptions options);

    TreeState current_;
    TreeNode forward_;
    TreeNode backward_;
    std::vector<TreeState> history_;
    WordTreeOptions options_;
};

WordTree build_tree(const Corpus& corpus, std::vector<std::string> phrase, WordTreeOptions options = {});
WordTree build_tree(const Corpus& corpus, std::string_view query, WordTreeOptions options = {});

// Extends the root by an immediate child of the forward (appended) or
// backward (prepended) root. The sentence-boundary node cannot be drilled.
WordTree drill_down(const WordTree& tree, const Corpus& corpus, std::string_view token, Direction direction);
WordTree revert(const WordTree& tree, const Corpus& corpus);

struct Coverage {
    std::size_t documents = 0;
    double percent = 0.0;  // one decimal place
};

Coverage coverage(const WordTree& tree, const Corpus& corpus);

struct NodeGradient {
    double frac_true = 0.0;
    double frac_false = 0.0;
    double frac_unknown = 1.0;
};

// Class fractions over the node's distinct documents. A node without
// documents reads as all-Unknown.
NodeGradient node_gradient(const TreeNode& node, std::span<const Prediction> predictions);

// Distinct documents of the node's sites, ascending corpus index.
std::vector<std::size_t> node_documents(const TreeNode& node);

// Distinct matched documents in corpus order.
std::vector<std::size_t> document_filter(const WordTree& tree);
std::vector<std::string> document_filter_ids(const WordTree& tree, const Corpus& corpus);

inline constexpr double kMinFontScale = 0.15;

double font_scale(const TreeNode& node, const WordTree& tree, double min_scale = kMinFontScale);

}  // namespace emr

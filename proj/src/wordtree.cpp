#include "emr/wordtree.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "emr/error.hpp"

namespace emr {

const TreeNode* TreeNode::child(std::string_view t) const {
    for (const auto& c : children)
        if (c.token == t) return &c;
    return nullptr;
}

namespace {

const std::vector<Token>& tokens_of(const Corpus& corpus, const MatchSite& site) {
    return corpus.documents()[site.document].sentences[site.sentence].tokens;
}

// Token `depth` steps away from the match on the given side, or nullptr past
// the sentence boundary.
const Token* step(const Corpus& corpus, const MatchSite& site, std::size_t phrase_len, Direction dir,
                  std::size_t depth) {
    const auto& toks = tokens_of(corpus, site);
    if (dir == Direction::Forward) {
        const std::size_t i = site.offset + phrase_len + depth;
        return i < toks.size() ? &toks[i] : nullptr;
    }
    if (depth + 1 > site.offset) return nullptr;
    return &toks[site.offset - 1 - depth];
}

void grow(TreeNode& node, const Corpus& corpus, std::size_t phrase_len, Direction dir, std::size_t depth,
          std::size_t max_depth) {
    if (node.end || depth >= max_depth) return;
    std::map<std::string, std::vector<MatchSite>> groups;
    std::vector<MatchSite> ends;
    for (const auto& site : node.sites) {
        if (const Token* t = step(corpus, site, phrase_len, dir, depth)) groups[t->norm].push_back(site);
        else ends.push_back(site);
    }
    for (auto& [token, sites] : groups) {
        TreeNode child;
        child.token = token;
        child.sites = std::move(sites);
        node.children.push_back(std::move(child));
    }
    if (!ends.empty()) {
        TreeNode child;
        child.token = std::string(kEndToken);
        child.end = true;
        child.sites = std::move(ends);
        node.children.push_back(std::move(child));
    }
    std::stable_sort(node.children.begin(), node.children.end(), [](const TreeNode& a, const TreeNode& b) {
        if (a.weight() != b.weight()) return a.weight() > b.weight();
        return a.token < b.token;
    });
    for (auto& c : node.children) grow(c, corpus, phrase_len, dir, depth + 1, max_depth);
}

}  // namespace

WordTree WordTree::from_state(const Corpus& corpus, TreeState state, std::vector<TreeState> history,
                              WordTreeOptions options) {
    WordTree tree;
    tree.options_ = options;
    tree.current_ = std::move(state);
    tree.history_ = std::move(history);
    const std::string label = join_phrase(tree.current_.phrase);
    const std::size_t len = tree.current_.phrase.size();
    for (auto [node, dir] : {std::pair{&tree.forward_, Direction::Forward}, std::pair{&tree.backward_, Direction::Backward}}) {
        node->token = label;
        node->sites = tree.current_.sites;
        grow(*node, corpus, len, dir, 0, options.max_depth);
    }
    return tree;
}

WordTree build_tree(const Corpus& corpus, std::vector<std::string> phrase, WordTreeOptions options) {
    if (phrase.empty()) throw Error("EmptyQuery", "query contains no searchable tokens");
    TreeState state;
    for (std::size_t d = 0; d < corpus.size(); ++d) {
        const auto& sentences = corpus.documents()[d].sentences;
        for (std::size_t s = 0; s < sentences.size(); ++s)
            for (std::size_t off : find_phrase(sentences[s], phrase)) state.sites.push_back({d, s, off});
    }
    state.phrase = std::move(phrase);
    return WordTree::from_state(corpus, std::move(state), {}, options);
}

WordTree build_tree(const Corpus& corpus, std::string_view query, WordTreeOptions options) {
    return build_tree(corpus, normalize_phrase(query), options);
}

WordTree drill_down(const WordTree& tree, const Corpus& corpus, std::string_view token, Direction direction) {
    const TreeNode& side = direction == Direction::Forward ? tree.forward_ : tree.backward_;
    const TreeNode* node = side.child(token);
    if (!node || node->end)
        throw Error("NodeNotInTree", "no " + std::string(direction == Direction::Forward ? "forward" : "backward") +
                                         " node '" + std::string(token) + "' under the current root");

    TreeState next;
    next.phrase = tree.current_.phrase;
    if (direction == Direction::Forward) {
        next.phrase.push_back(node->token);
        next.sites = node->sites;
    } else {
        next.phrase.insert(next.phrase.begin(), node->token);
        for (MatchSite site : node->sites) {
            --site.offset;
            next.sites.push_back(site);
        }
    }
    std::sort(next.sites.begin(), next.sites.end());
    auto history = tree.history_;
    history.push_back(tree.current_);
    return WordTree::from_state(corpus, std::move(next), std::move(history), tree.options_);
}

WordTree revert(const WordTree& tree, const Corpus& corpus) {
    if (tree.history_.empty()) throw Error("AtInitialState", "word tree has no earlier state");
    auto history = tree.history_;
    TreeState prior = std::move(history.back());
    history.pop_back();
    return WordTree::from_state(corpus, std::move(prior), std::move(history), tree.options_);
}

std::vector<std::size_t> node_documents(const TreeNode& node) {
    std::vector<std::size_t> docs;
    for (const auto& s : node.sites) docs.push_back(s.document);
    std::sort(docs.begin(), docs.end());
    docs.erase(std::unique(docs.begin(), docs.end()), docs.end());
    return docs;
}

std::vector<std::size_t> document_filter(const WordTree& tree) { return node_documents(tree.forward()); }

std::vector<std::string> document_filter_ids(const WordTree& tree, const Corpus& corpus) {
    std::vector<std::string> ids;
    for (std::size_t d : document_filter(tree)) ids.push_back(corpus.documents()[d].doc_id);
    return ids;
}

Coverage coverage(const WordTree& tree, const Corpus& corpus) {
    Coverage c;
    c.documents = document_filter(tree).size();
    if (corpus.size() > 0)
        c.percent = std::round(1000.0 * static_cast<double>(c.documents) / static_cast<double>(corpus.size())) / 10.0;
    return c;
}

NodeGradient node_gradient(const TreeNode& node, std::span<const Prediction> predictions) {
    const auto docs = node_documents(node);
    if (docs.empty()) return {};
    const Histogram h = variable_distribution(predictions, docs);
    const double n = static_cast<double>(docs.size());
    NodeGradient g;
    g.frac_true = static_cast<double>(h.n_true) / n;
    g.frac_false = static_cast<double>(h.n_false) / n;
    g.frac_unknown = static_cast<double>(h.n_unknown) / n;
    return g;
}

double font_scale(const TreeNode& node, const WordTree& tree, double min_scale) {
    const std::size_t root = tree.forward().weight();
    if (root == 0) return 1.0;
    const double s = std::sqrt(static_cast<double>(node.weight()) / static_cast<double>(root));
    return std::clamp(s, min_scale, 1.0);
}

}  // namespace emr

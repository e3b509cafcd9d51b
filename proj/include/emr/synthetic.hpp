#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emr/corpus.hpp"
#include "emr/labels.hpp"

namespace emr {

// A variable is True for a document iff one of its trigger phrases occurs in
// it. Trigger phrases are planted; distractor text never contains them.
struct VariableRule {
    std::string name;
    std::vector<std::string> triggers;
    double prevalence = 0.35;
};

struct SyntheticVocabulary {
    std::vector<std::string> adjectives;
    std::vector<std::string> nouns;
    std::vector<std::string> findings;  // predicate adjectives
    std::vector<std::string> regions;
    std::vector<std::string> stock_sentences;

    static SyntheticVocabulary colonoscopy();
};

struct SyntheticSpec {
    std::size_t documents = 280;
    std::vector<VariableRule> rules;
    SyntheticVocabulary vocabulary = SyntheticVocabulary::colonoscopy();
    std::uint64_t seed = 7;
    double pathology_rate = 0.5;
    std::size_t min_distractors = 3;
    std::size_t max_distractors = 7;
};

// The fourteen colonoscopy-style variables with their trigger phrases.
std::vector<VariableRule> default_variable_rules();
SyntheticSpec default_synthetic_spec(std::size_t documents = 280, std::uint64_t seed = 7,
                                     std::size_t variables = 14);

struct SyntheticCorpus {
    Corpus corpus;
    std::vector<Label> gold;  // one label per (document, variable), corpus order then rule order
};

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec);

// Gold labels by scanning sentence tokens for each rule's trigger phrases.
std::vector<Label> trigger_labels(const Corpus& corpus, const std::vector<VariableRule>& rules);

// Gold labels of randomly chosen documents: `seed_docs` documents for initial
// training and a disjoint set of `holdout_docs` for evaluation.
struct LabelSplit {
    std::vector<Label> seed;
    std::vector<Label> holdout;
};

LabelSplit split_gold(const Corpus& corpus, const std::vector<Label>& gold, std::size_t seed_docs,
                      std::size_t holdout_docs, std::uint64_t rng_seed);

}  // namespace emr

#include "emr/synthetic.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "emr/error.hpp"
#include "emr/rng.hpp"

namespace emr {

SyntheticVocabulary SyntheticVocabulary::colonoscopy() {
    SyntheticVocabulary v;
    v.adjectives = {"smooth", "pale", "mild", "small", "flat", "friable", "granular", "patchy", "subtle", "diffuse"};
    v.nouns = {"mucosa", "fold", "vessel", "segment", "lumen", "surface", "pattern", "area", "margin", "tissue"};
    v.findings = {"normal", "unremarkable", "intact", "stable", "clear", "patent", "regular", "benign"};
    v.regions = {"rectum", "sigmoid colon", "descending colon", "transverse colon", "ascending colon",
                 "hepatic flexure", "splenic flexure", "anal canal"};
    v.stock_sentences = {
        "The patient tolerated the procedure well.",
        "The scope was advanced without difficulty.",
        "No complications were observed.",
        "The procedure was explained to the patient.",
        "Informed consent was obtained prior to the procedure.",
        "Specimen containers were labeled at the bedside.",
        "Follow up with the referring physician is advised.",
    };
    return v;
}

std::vector<VariableRule> default_variable_rules() {
    return {
        {"biopsy", {"hot biopsy", "cold biopsy", "biopsy forceps"}, 0.45},
        {"polypectomy", {"snare polypectomy", "polypectomy performed"}, 0.35},
        {"cecum", {"cecum reached", "cecum identified"}, 0.6},
        {"adenoma", {"tubular adenoma", "villous adenoma"}, 0.3},
        {"hyperplastic", {"hyperplastic polyp", "hyperplastic changes"}, 0.3},
        {"bowel_prep", {"prep adequate", "prep inadequate"}, 0.5},
        {"ileum", {"terminal ileum", "ileum intubated"}, 0.35},
        {"diverticulosis", {"sigmoid diverticulosis", "diverticulosis noted"}, 0.3},
        {"hemorrhoids", {"internal hemorrhoids", "external hemorrhoids"}, 0.3},
        {"carcinoma", {"invasive carcinoma", "carcinoma suspected"}, 0.2},
        {"dysplasia", {"high grade dysplasia", "low grade dysplasia"}, 0.25},
        {"retroflexion", {"retroflexion performed", "retroflexion view"}, 0.4},
        {"sedation", {"moderate sedation", "sedation administered"}, 0.5},
        {"withdrawal", {"withdrawal time", "withdrawal completed"}, 0.4},
    };
}

SyntheticSpec default_synthetic_spec(std::size_t documents, std::uint64_t seed, std::size_t variables) {
    SyntheticSpec spec;
    spec.documents = documents;
    spec.seed = seed;
    spec.rules = default_variable_rules();
    if (variables < spec.rules.size()) spec.rules.resize(variables);
    return spec;
}

namespace {

void validate(const SyntheticSpec& spec) {
    if (spec.rules.empty()) throw Error("InvalidSpec", "at least one variable rule is required");
    if (spec.min_distractors > spec.max_distractors) throw Error("InvalidSpec", "min_distractors > max_distractors");
    const auto& v = spec.vocabulary;
    if (v.adjectives.empty() || v.nouns.empty() || v.findings.empty() || v.regions.empty())
        throw Error("InvalidSpec", "vocabulary word lists must be nonempty");
    if (!(spec.pathology_rate >= 0.0 && spec.pathology_rate <= 1.0))
        throw Error("InvalidSpec", "pathology_rate must lie in [0, 1]");

    std::set<std::string> names;
    for (const auto& rule : spec.rules) {
        if (rule.name.empty() || !names.insert(rule.name).second)
            throw Error("InvalidSpec", "variable names must be nonempty and unique");
        if (rule.triggers.empty()) throw Error("InvalidSpec", "variable '" + rule.name + "' has no trigger phrases");
        for (const auto& t : rule.triggers)
            if (normalize_phrase(t).empty())
                throw Error("InvalidSpec", "variable '" + rule.name + "' has an empty trigger phrase");
        if (!(rule.prevalence >= 0.0 && rule.prevalence <= 1.0))
            throw Error("InvalidSpec", "variable '" + rule.name + "' prevalence must lie in [0, 1]");
    }
}

std::string capitalize(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
}

class Writer {
public:
    Writer(const SyntheticSpec& spec, Rng& rng) : spec_(spec), rng_(rng) {}

    std::string distractor() {
        const auto& v = spec_.vocabulary;
        switch (rng_.below(4)) {
        case 0:
            return "The " + rng_.pick(v.adjectives) + " " + rng_.pick(v.nouns) + " appeared " +
                   rng_.pick(v.findings) + " in the " + rng_.pick(v.regions) + ".";
        case 1:
            return capitalize(rng_.pick(v.nouns)) + " in the " + rng_.pick(v.regions) + " was " +
                   rng_.pick(v.findings) + ".";
        case 2:
            if (!v.stock_sentences.empty()) return rng_.pick(v.stock_sentences);
            [[fallthrough]];
        default:
            return "A " + rng_.pick(v.adjectives) + " " + rng_.pick(v.nouns) + " was seen near the " +
                   rng_.pick(v.regions) + ".";
        }
    }

    std::string trigger_sentence(const std::string& trigger) {
        const auto& v = spec_.vocabulary;
        switch (rng_.below(3)) {
        case 0: return capitalize(trigger) + " was noted in the " + rng_.pick(v.regions) + ".";
        case 1: return "Findings include " + trigger + " near the " + rng_.pick(v.regions) + ".";
        default:
            return "The " + rng_.pick(v.nouns) + " showed " + trigger + " on inspection.";
        }
    }

private:
    const SyntheticSpec& spec_;
    Rng& rng_;
};

std::string join_body(const std::vector<std::string>& sentences) {
    std::string out;
    for (const auto& s : sentences) {
        if (!out.empty()) out += ' ';
        out += s;
    }
    return out;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec) {
    validate(spec);
    Rng rng(spec.seed);
    Writer writer(spec, rng);

    std::vector<std::string> variables;
    for (const auto& r : spec.rules) variables.push_back(r.name);

    // Distractor text must never spell a trigger phrase; regenerate if it does.
    std::vector<std::vector<std::string>> trigger_tokens;
    for (const auto& r : spec.rules)
        for (const auto& t : r.triggers) trigger_tokens.push_back(normalize_phrase(t));
    const auto is_clean = [&](const std::string& sentence) {
        Sentence s;
        s.tokens = tokenize(sentence);
        return std::none_of(trigger_tokens.begin(), trigger_tokens.end(),
                            [&](const auto& phrase) { return !find_phrase(s, phrase).empty(); });
    };

    std::vector<PatientRecord> records;
    records.reserve(spec.documents);
    const std::size_t width = std::to_string(spec.documents).size();
    for (std::size_t d = 0; d < spec.documents; ++d) {
        std::string num = std::to_string(d + 1);
        num.insert(0, width - num.size(), '0');
        const std::string pid = "doc" + num;

        const bool has_pathology = rng.chance(spec.pathology_rate);
        std::vector<std::vector<std::string>> bodies(has_pathology ? 2 : 1);
        for (auto& body : bodies) {
            const std::size_t n = spec.min_distractors + rng.below(spec.max_distractors - spec.min_distractors + 1);
            while (body.size() < n) {
                std::string s = writer.distractor();
                if (is_clean(s)) body.push_back(std::move(s));
            }
        }
        for (const auto& rule : spec.rules) {
            if (!rng.chance(rule.prevalence)) continue;
            const std::size_t mentions = rng.chance(0.25) ? 2 : 1;
            for (std::size_t m = 0; m < mentions; ++m) {
                auto& body = bodies[rng.below(bodies.size())];
                const std::size_t at = rng.below(body.size() + 1);
                body.insert(body.begin() + static_cast<std::ptrdiff_t>(at),
                            writer.trigger_sentence(rng.pick(rule.triggers)));
            }
        }

        PatientRecord rec;
        rec.patient_id = pid;
        rec.reports.push_back({pid + "-endo", ReportKind::Endoscopy,
                               "*** DE-IDENTIFIED ***\n\nENDOSCOPY REPORT\n\n" + join_body(bodies[0]) +
                                   "\n\n----------\nElectronically signed by attending staff."});
        if (has_pathology)
            rec.reports.push_back({pid + "-path", ReportKind::Pathology,
                                   "*** DE-IDENTIFIED ***\n\nPATHOLOGY REPORT\n\n" + join_body(bodies[1]) +
                                       "\n\n----------"});
        records.push_back(std::move(rec));
    }

    SyntheticCorpus out{build_corpus(std::move(records), variables), {}};
    out.gold = trigger_labels(out.corpus, spec.rules);
    return out;
}

std::vector<Label> trigger_labels(const Corpus& corpus, const std::vector<VariableRule>& rules) {
    std::vector<std::vector<std::vector<std::string>>> phrases;
    for (const auto& r : rules) {
        auto& list = phrases.emplace_back();
        for (const auto& t : r.triggers) list.push_back(normalize_phrase(t));
    }
    std::vector<Label> out;
    out.reserve(corpus.size() * rules.size());
    for (const auto& doc : corpus.documents()) {
        for (std::size_t v = 0; v < rules.size(); ++v) {
            bool hit = false;
            for (const auto& s : doc.sentences) {
                for (const auto& p : phrases[v])
                    if (!find_phrase(s, p).empty()) hit = true;
                if (hit) break;
            }
            out.push_back({doc.doc_id, rules[v].name, hit});
        }
    }
    return out;
}

LabelSplit split_gold(const Corpus& corpus, const std::vector<Label>& gold, std::size_t seed_docs,
                      std::size_t holdout_docs, std::uint64_t rng_seed) {
    if (seed_docs + holdout_docs > corpus.size())
        throw Error("InvalidSpec", "seed and held-out sets need more documents than the corpus has");
    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(rng_seed);
    rng.shuffle(order);
    std::set<std::string> seed_ids, holdout_ids;
    for (std::size_t i = 0; i < seed_docs; ++i) seed_ids.insert(corpus.documents()[order[i]].doc_id);
    for (std::size_t i = seed_docs; i < seed_docs + holdout_docs; ++i)
        holdout_ids.insert(corpus.documents()[order[i]].doc_id);
    LabelSplit split;
    for (const auto& l : gold) {
        if (seed_ids.count(l.doc_id)) split.seed.push_back(l);
        else if (holdout_ids.count(l.doc_id)) split.holdout.push_back(l);
    }
    return split;
}

}  // namespace emr

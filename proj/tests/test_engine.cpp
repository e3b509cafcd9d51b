#include <doctest.h>

#include <atomic>
#include <functional>
#include <thread>

#include "emr/engine.hpp"
#include "emr/error.hpp"
#include "emr/json_io.hpp"
#include "emr/synthetic.hpp"
#include "oracles.hpp"

using namespace emr;
namespace fs = std::filesystem;

namespace {

std::string error_code(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

Ledger::Clock fixed_clock() {
    return [] { return std::int64_t{5}; };
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::vector<Label> gold_for(const SyntheticCorpus& data, std::size_t docs) {
    std::vector<Label> out;
    for (const auto& l : data.gold)
        if (*data.corpus.index_of(l.doc_id) < docs) out.push_back(l);
    return out;
}

const Label& gold_label(const SyntheticCorpus& data, const std::string& doc, const std::string& var) {
    for (const auto& l : data.gold)
        if (l.doc_id == doc && l.variable == var) return l;
    throw std::runtime_error("no gold label");
}

}  // namespace

TEST_CASE("initial training from seed labels") {
    const auto data = fixture::synthetic(40, 2, 3);
    Engine e(data.corpus, gold_for(data, 15), {}, std::nullopt, fixed_clock());
    const auto snap = e.snapshot();
    CHECK(snap->round == 0);
    CHECK(snap->train_size == 45);
    CHECK(snap->models.models.size() == 3);
    CHECK(snap->trained_docs[0].size() == 15);
    CHECK(snap->last_diff.changes.empty());
    CHECK(snap->models.predictions == predict_corpus(data.corpus, snap->models.models, 0.1));

    const std::vector<Label> bad{{"zz", data.corpus.variables()[0], true}};
    CHECK(error_code([&] { Engine(data.corpus, bad, {}); }) == "MalformedLabels");
}

TEST_CASE("retrain diff matches a full table comparison") {
    const auto data = fixture::synthetic(60, 8, 4);
    Engine e(data.corpus, gold_for(data, 12), {}, std::nullopt, fixed_clock());
    const auto& vars = data.corpus.variables();

    for (std::size_t round = 0; round < 3; ++round) {
        const auto before = e.snapshot();
        for (std::size_t d = 12 + round * 10; d < 22 + round * 10; ++d) {
            const auto& id = data.corpus.documents()[d].doc_id;
            e.add_document_label(id, vars[0], gold_label(data, id, vars[0]).value);
            e.add_document_label(id, vars[2], gold_label(data, id, vars[2]).value);
        }
        const DiffReport diff = e.retrain();
        const auto after = e.snapshot();
        CHECK(after->round == before->round + 1);
        CHECK(oracle::diff_keys(diff.changes) ==
              oracle::table_diff(data.corpus, before->models.predictions, after->models.predictions));
        CHECK(diff.feedback_consumed == 20);
        CHECK(after->models.fingerprints[1] == before->models.fingerprints[1]);
        CHECK(after->models.models[1] == before->models.models[1]);
        CHECK(after->models.fingerprints[0] != before->models.fingerprints[0]);
        for (const auto& c : diff.changes) CHECK(after->changed(c.doc_id, c.variable));
        CHECK(e.pending_count() == 0);
    }
    CHECK(e.snapshot()->train_size == 12 * 4 + 60);

    // Nothing pending: models stay, diff is empty.
    const auto before = e.snapshot();
    CHECK(e.retrain().changes.empty());
    CHECK(e.snapshot()->models.predictions == before->models.predictions);
}

TEST_CASE("contradictions block retraining") {
    const auto data = fixture::synthetic(30, 3, 2);
    Engine e(data.corpus, gold_for(data, 10), {}, std::nullopt, fixed_clock());
    const auto& var = data.corpus.variables()[0];
    const auto& doc = data.corpus.documents()[20].doc_id;
    const auto a = e.add_document_label(doc, var, true);
    e.add_document_label(doc, var, false);
    const auto before = e.snapshot();
    CHECK(error_code([&] { e.retrain(); }) == "UnresolvedConflicts");
    CHECK(e.snapshot() == before);
    CHECK(e.conflicts().size() == 1);
    e.resolve(a.id, Resolution::Delete);
    CHECK_NOTHROW(e.retrain());
    CHECK(e.snapshot()->round == 1);
}

TEST_CASE("concurrent retrains: one runs, the rest are busy") {
    const auto data = fixture::synthetic(120, 4, 14);
    Engine e(data.corpus, gold_for(data, 10), {}, std::nullopt, fixed_clock());
    for (std::size_t d = 10; d < 60; ++d)
        for (const auto& v : data.corpus.variables())
            e.add_document_label(data.corpus.documents()[d].doc_id, v, gold_label(data, data.corpus.documents()[d].doc_id, v).value);

    std::atomic<int> ok{0}, busy{0}, other{0};
    std::atomic<bool> go{false};
    std::vector<std::thread> threads;
    for (int i = 0; i < 4; ++i)
        threads.emplace_back([&] {
            while (!go) std::this_thread::yield();
            try {
                e.retrain();
                ++ok;
            } catch (const Error& err) {
                (err.code() == "Busy" ? busy : other) += 1;
            }
        });

    // Readers see either the old or the new snapshot, never a mix.
    std::atomic<bool> torn{false};
    std::thread reader([&] {
        while (!go) std::this_thread::yield();
        for (int i = 0; i < 200; ++i) {
            const auto s = e.snapshot();
            if (s->models.predictions != predict_corpus(data.corpus, s->models.models, 0.1)) torn = true;
        }
    });
    go = true;
    for (auto& t : threads) t.join();
    reader.join();
    CHECK(ok >= 1);
    CHECK(ok + busy == 4);
    CHECK(other == 0);
    CHECK_FALSE(torn);
}

TEST_CASE("models and ledger survive a restart") {
    TempDir dir("emr_engine_persist");
    const auto data = fixture::synthetic(40, 6, 3);
    const auto seed = gold_for(data, 10);
    const auto& vars = data.corpus.variables();
    PredictionTable after_retrain;
    std::vector<FeedbackItem> items;
    {
        Engine e(data.corpus, seed, {}, dir.path, fixed_clock());
        CHECK(fs::exists(dir.path / "models.json"));
        for (std::size_t d = 10; d < 25; ++d) e.add_document_label(data.corpus.documents()[d].doc_id, vars[1], d % 2);
        e.retrain();
        e.add_neither_feedback("polyp", vars[0]);  // pending across the restart
        after_retrain = e.snapshot()->models.predictions;
        items = e.ledger_items();
    }
    Engine again(data.corpus, seed, {}, dir.path, fixed_clock());
    CHECK(again.snapshot()->round == 1);
    CHECK(again.snapshot()->models.predictions == after_retrain);
    CHECK(again.pending_count() == 1);
    const auto restored = again.ledger_items();
    REQUIRE(restored.size() == items.size());
    for (std::size_t i = 0; i < items.size(); ++i) CHECK(to_json(restored[i]) == to_json(items[i]));

    {
        std::ofstream out(dir.path / "models.json", std::ios::trunc);
        out << "{\"schema\": 99}";
    }
    CHECK(error_code([&] { Engine(data.corpus, seed, {}, dir.path); }) == "MalformedSnapshot");
}

TEST_CASE("evaluation refuses training documents") {
    const auto data = fixture::synthetic(50, 12, 2);
    const auto seed = gold_for(data, 20);
    Engine e(data.corpus, seed, {}, std::nullopt, fixed_clock());
    std::vector<Label> heldout;
    for (const auto& l : data.gold)
        if (*data.corpus.index_of(l.doc_id) >= 30) heldout.push_back(l);
    const auto report = e.evaluate(heldout);
    CHECK(report.overall.confusion.total() == heldout.size());
    CHECK(report.per_variable.size() == 2);
    CHECK(error_code([&] { e.evaluate({seed[0]}); }) == "OverlapError");
}

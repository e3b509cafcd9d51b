import pytest

import emr_review as er


@pytest.fixture(scope="module")
def data():
    corpus, gold = er.synthetic_corpus(documents=80, seed=3, variables=4)
    seed, holdout = er.split_gold(corpus, gold, 20, 20, rng_seed=2)
    return corpus, gold, seed, holdout


def test_corpus(data):
    corpus, gold, _, _ = data
    assert len(corpus) == 80
    assert len(corpus.variables) == 4
    assert len(gold) == 80 * 4
    again = er.parse_corpus(corpus.to_json())
    assert again.doc_ids == corpus.doc_ids


def test_word_tree_and_snap(data):
    corpus = data[0]
    doc = corpus.doc_ids[0]
    text = corpus.text(doc)
    word = next(w for w in text.replace(".", " ").split() if len(w) > 3 and w.isalpha())
    tree = er.word_tree(corpus, word)
    assert tree["coverage"]["docs"] == len(tree["documents"]) >= 1
    assert doc in tree["documents"]

    pos = text.index(word)
    report = er.Engine(corpus, data[2]).get("/api/document/" + doc)[1]["reports"][0]["id"]
    start, end = er.snap_span(corpus, doc, report, pos + 1, pos + 2)
    assert text[start:end].lower() == word.lower()
    assert er.snap_span(corpus, doc, report, start, end) == (start, end)


def test_engine_round_trip(data):
    corpus, gold, seed, holdout = data
    engine = er.Engine(corpus, seed)
    status, grid = engine.get("/api/grid")
    assert status == 200 and len(grid["rows"]) == 80

    held = {l["doc_id"] for l in holdout} | {l["doc_id"] for l in seed}
    fresh = [l for l in gold if l["doc_id"] not in held][:30]
    for l in fresh:
        status, out = engine.post("/api/feedback", {"kind": "document", "doc_id": l["doc_id"],
                                                    "variable": l["variable"],
                                                    "class": "true" if l["value"] else "false"})
        assert status == 201
    diff = engine.retrain()
    assert engine.round == 1
    assert isinstance(diff["changes"], list)
    report = engine.evaluate(holdout)
    assert 0.0 <= report["overall"]["accuracy"] <= 1.0


def test_errors(data):
    corpus, _, seed, _ = data
    engine = er.Engine(corpus, seed)
    doc = corpus.doc_ids[-1]
    var = corpus.variables[0]
    engine.post("/api/feedback", {"kind": "document", "doc_id": doc, "variable": var, "class": "true"})
    engine.post("/api/feedback", {"kind": "document", "doc_id": doc, "variable": var, "class": "false"})
    status, body = engine.post("/api/retrain")
    assert status == 409 and body["code"] == "UnresolvedConflicts"
    with pytest.raises(er.EmrError) as info:
        engine.retrain()
    assert info.value.code == "UnresolvedConflicts"
    with pytest.raises(er.EmrError):
        er.word_tree(corpus, " ,, ")


def test_harness_is_deterministic(data):
    corpus, gold, seed, holdout = data
    a = er.policy_run(corpus, seed, gold, holdout, "phrase", budget=4, retrain_every=2)
    b = er.policy_run(corpus, seed, gold, holdout, "phrase", budget=4, retrain_every=2)
    assert a == b
    assert a.splitlines()[0] == "round,train_size,accuracy,precision,recall,f1,unknown,diff_size"
    assert len(a.splitlines()) == 4
    assert er.replay(corpus, seed, [], holdout).count("\n") == 2

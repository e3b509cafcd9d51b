"""Python access to the review engine.

Labels are lists of ``{"doc_id", "variable", "value"}`` dicts. API responses,
word trees and diffs come back as plain dicts.
"""

import json

from . import _core
from ._core import Corpus, EmrError, load_corpus, parse_corpus

__all__ = [
    "Corpus",
    "EmrError",
    "Engine",
    "load_corpus",
    "parse_corpus",
    "synthetic_corpus",
    "split_gold",
    "word_tree",
    "snap_span",
    "replay",
    "policy_run",
    "default_trigger_phrases",
]

EmrError.code = property(lambda self: self.args[0], doc="Error code, e.g. UnresolvedConflicts.")


def _labels_json(labels):
    return json.dumps({"labels": list(labels)})


def _labels(text):
    return json.loads(text)["labels"]


def synthetic_corpus(documents=280, seed=7, variables=14):
    """Returns (corpus, gold labels)."""
    corpus, gold = _core.synthetic_corpus(documents, seed, variables)
    return corpus, _labels(gold)


def split_gold(corpus, gold, seed_docs, holdout_docs, rng_seed=1):
    """Returns (seed labels, held-out labels) over disjoint random documents."""
    seed, holdout = _core.split_gold(corpus, _labels_json(gold), seed_docs, holdout_docs, rng_seed)
    return _labels(seed), _labels(holdout)


def word_tree(corpus, query, max_depth=20):
    return json.loads(_core.word_tree(corpus, query, max_depth))


def snap_span(corpus, doc_id, report_id, start, end):
    return _core.snap_span(corpus, doc_id, report_id, start, end)


def default_trigger_phrases():
    return json.loads(_core.default_trigger_phrases())


def replay(corpus, seed, script, holdout):
    """Runs a feedback script (JSON lines or a list of dicts); returns the report CSV."""
    if not isinstance(script, str):
        script = "".join(json.dumps(line) + "\n" for line in script)
    return _core.replay(corpus, _labels_json(seed), script, _labels_json(holdout))


def policy_run(corpus, seed, gold, holdout, policy, budget, retrain_every=10, phrases=None):
    if phrases is None:
        phrases = default_trigger_phrases()
    return _core.policy_run(corpus, _labels_json(seed), _labels_json(gold), json.dumps(phrases),
                            _labels_json(holdout), policy, budget, retrain_every)


class Engine:
    """A review engine with the same request handling as the HTTP service."""

    def __init__(self, corpus, seed, tau=0.1, c=1.0, data_dir=None):
        self._engine = _core.Engine(corpus, _labels_json(seed), tau, c,
                                    None if data_dir is None else str(data_dir))

    def request(self, method, path, params=None, body=None):
        """Returns (status, payload)."""
        text = "" if body is None else json.dumps(body)
        status, payload = self._engine.request(method, path, params or {}, text)
        return status, json.loads(payload)

    def get(self, path, **params):
        return self.request("GET", path, {k: str(v) for k, v in params.items()})

    def post(self, path, body=None):
        return self.request("POST", path, body=body if body is not None else {})

    def retrain(self):
        return json.loads(self._engine.retrain())

    def evaluate(self, holdout):
        return json.loads(self._engine.evaluate(_labels_json(holdout)))

    @property
    def round(self):
        return self._engine.round

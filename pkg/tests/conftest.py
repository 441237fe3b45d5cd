import numpy as np
import pytest

from negsample.corpus import AnnotatedSentence, EntitySpan, LabelSet, Sentence


class TableScorer:
    """Fixed label distributions per span; unlisted spans get ``default``."""

    def __init__(self, labels, table=None, default=None):
        self.labels = labels
        self.table = {k: np.asarray(v, dtype=float) for k, v in (table or {}).items()}
        self.default = (np.full(len(labels), 1.0 / len(labels)) if default is None
                        else np.asarray(default, dtype=float))

    def score_spans(self, sentence, spans):
        return np.array([self.table.get(tuple(s), self.default) for s in spans]).reshape(len(spans), -1)


@pytest.fixture
def table_scorer():
    return TableScorer


@pytest.fixture
def toy_corpus():
    """Five separable sentences: capitalized names are PER, cities are LOC."""
    rows = [
        ("mr Smith visited Paris today", [(1, 1, "PER"), (3, 3, "LOC")]),
        ("the talks in Rome ended", [(3, 3, "LOC")]),
        ("Jones met mr Brown", [(0, 0, "PER"), (3, 3, "PER")]),
        ("rain fell on Oslo again", [(3, 3, "LOC")]),
        ("we saw Smith in Oslo", [(2, 2, "PER"), (4, 4, "LOC")]),
    ]
    return [AnnotatedSentence(Sentence(tuple(text.split())), {EntitySpan(*s) for s in spans})
            for text, spans in rows]


@pytest.fixture
def toy_labels():
    return LabelSet(["PER", "LOC"])


_ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance(request):
    """Record ``criterion -> (passed, detail)``; printed in the terminal summary."""
    return request.config.stash.setdefault(_ACCEPTANCE_KEY, {})


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_ACCEPTANCE_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        passed, detail = results[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")

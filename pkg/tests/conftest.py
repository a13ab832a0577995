import numpy as np
import pytest

from gailee.config import TrainConfig
from gailee.data import (Argument, Corpus, Dep, Entity, Event, Sentence, Token, default_grammar, default_schema,
                         generate_synthetic_corpus, validate_sentence)

# small networks keep unit tests fast; acceptance runs use the defaults
SMALL = dict(hidden=16, dim_surface=8, dim_pos=4, dim_pretrained=8, dim_action=4)


@pytest.fixture
def small_config():
    return TrainConfig(**SMALL)


@pytest.fixture(scope="session")
def schema():
    return default_schema()


def make_sentence(schema, sid="s0"):
    """'Rebels attacked the city with rockets', one Attack event with three arguments."""
    words = ["Rebels", "attacked", "the", "city", "with", "rockets"]
    pos = ["NNS", "VBD", "DT", "NN", "IN", "NNS"]
    s = Sentence(
        sid,
        [Token(w, p) for w, p in zip(words, pos)],
        entities=[Entity(0, 1, "PER"), Entity(2, 4, "GPE"), Entity(5, 6, "WEA")],
        events=[Event((1, 2), "Attack", (Argument(0, "Attacker"), Argument(1, "Place"), Argument(2, "Instrument")))],
        deps=[Dep(1, 0, "nsubj"), Dep(1, 3, "dobj"), Dep(1, 5, "nmod")],
    )
    return validate_sentence(s, schema)


@pytest.fixture
def sentence(schema):
    return make_sentence(schema)


@pytest.fixture
def tiny_corpus(schema):
    return Corpus([make_sentence(schema, f"s{k}") for k in range(3)], schema, "train")


@pytest.fixture(scope="session")
def synthetic():
    """Default grammar, 200/50/50 split."""
    return generate_synthetic_corpus(default_grammar(), 0, 200, 50, 50)


@pytest.fixture(scope="session")
def synthetic_small():
    return generate_synthetic_corpus(default_grammar(), 1, 40, 8, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# --------------------------------------------------------------------------
# acceptance reporting: one PASS/FAIL line per criterion in the terminal summary

_CRITERIA: dict[str, dict] = {}


@pytest.fixture
def criterion(request):
    """Attach a criterion label and measured details to an acceptance test."""
    entry = {"label": request.node.name, "details": []}
    _CRITERIA[request.node.nodeid] = entry

    class Recorder:
        def label(self, text):
            entry["label"] = text

        def note(self, text):
            entry["details"].append(text)

    return Recorder()


def pytest_runtest_logreport(report):
    entry = _CRITERIA.get(report.nodeid)
    if entry is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry["outcome"] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for entry in _CRITERIA.values():
        status = "PASS" if entry.get("outcome") == "passed" else "FAIL"
        detail = "; ".join(entry["details"])
        terminalreporter.write_line(f"{status}  {entry['label']}" + (f"  [{detail}]" if detail else ""))

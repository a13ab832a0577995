"""Template grammar that generates fully annotated toy event-extraction corpora.

A template is a list of items:

* ``{"w": "launched", "pos": "VBD"}`` a literal (``w`` may be a list to choose from),
* ``{"e": "GPE", "role": "Attacker", "dep": "nsubj"}`` an entity slot; ``role``
  null marks a non-argument, ``dep`` labels the edge from the trigger,
* ``{"t": ["campaign", "assault"], "pos": "NN"}`` the trigger slot.

``trigger_lexicon`` maps a trigger word to ``[event_type, cue]`` pairs. A word
may only fill a template's trigger slot if the template's event type is listed
for it and the cue (when non-empty) is one of the template's literal words.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..nn import EmbeddingTable
from .corpus import Argument, Corpus, Dep, Entity, Event, Sentence, Token, validate_sentence
from .schema import EventSchema, default_schema


@dataclass
class SyntheticGrammar:
    templates: list[dict]
    fillers: dict[str, list[list[str]]]
    trigger_lexicon: dict[str, list[list[str]]]
    heldout_fillers: dict[str, list[list[str]]] = field(default_factory=dict)
    schema: EventSchema = field(default_factory=default_schema)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        schema = self.schema
        for word, senses in self.trigger_lexicon.items():
            for ev, _cue in senses:
                if ev not in schema.event_types:
                    raise ValueError(f"grammar: trigger {word!r} names unknown event type {ev!r}")
        for k, tpl in enumerate(self.templates):
            ev = tpl.get("event")
            if ev is not None and ev not in schema.event_types:
                raise ValueError(f"grammar: template {k} has unknown event type {ev!r}")
            n_trig = sum("t" in item for item in tpl["items"])
            if (ev is None) != (n_trig == 0) or n_trig > 1:
                raise ValueError(f"grammar: template {k} needs exactly one trigger slot iff it has an event")
            for item in tpl["items"]:
                if "e" in item:
                    etype, role = item["e"], item.get("role")
                    if etype not in schema.entity_types:
                        raise ValueError(f"grammar: template {k} has unknown entity type {etype!r}")
                    if not self.fillers.get(etype):
                        raise ValueError(f"grammar: no fillers for entity type {etype!r}")
                    if role is not None and (ev is None or not schema.role_allowed(ev, role, etype)):
                        raise ValueError(f"grammar: template {k} assigns {role!r} to {etype} against the schema")
            if ev is not None and not self.trigger_words(k):
                raise ValueError(f"grammar: template {k} has no admissible trigger word")

    def literal_words(self, k: int) -> set[str]:
        words = set()
        for item in self.templates[k]["items"]:
            if "w" in item:
                words.update([item["w"]] if isinstance(item["w"], str) else item["w"])
        return words

    def trigger_words(self, k: int) -> list[str]:
        tpl = self.templates[k]
        slot = next(item for item in tpl["items"] if "t" in item)
        literals = self.literal_words(k)
        out = []
        for word in slot["t"]:
            senses = self.trigger_lexicon.get(word, [])
            if any(ev == tpl["event"] and (not cue or cue in literals) for ev, cue in senses):
                out.append(word)
        return out

    def ambiguous_words(self) -> dict[str, list[str]]:
        """Trigger words listed under two or more event types."""
        out = {}
        for word, senses in self.trigger_lexicon.items():
            types = sorted({ev for ev, _ in senses})
            if len(types) >= 2:
                out[word] = types
        return out

    def vocabulary(self) -> list[str]:
        words: dict[str, None] = {}
        for k in range(len(self.templates)):
            for w in sorted(self.literal_words(k)):
                words.setdefault(w, None)
        for word in self.trigger_lexicon:
            words.setdefault(word, None)
        for table in (self.fillers, self.heldout_fillers):
            for etype in sorted(table):
                for filler in table[etype]:
                    for w in filler:
                        words.setdefault(w, None)
        return list(words)

    def to_dict(self) -> dict:
        return {
            "schema": self.schema.to_dict(),
            "trigger_lexicon": self.trigger_lexicon,
            "fillers": self.fillers,
            "heldout_fillers": self.heldout_fillers,
            "templates": self.templates,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticGrammar":
        schema = EventSchema.from_dict(d["schema"]) if "schema" in d else default_schema()
        return cls(d["templates"], d["fillers"], d["trigger_lexicon"], d.get("heldout_fillers", {}), schema)


def load_grammar(path) -> SyntheticGrammar:
    try:
        return SyntheticGrammar.from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from None
    except KeyError as exc:
        raise ValueError(f"{path}: missing key {exc}") from None


def _render(grammar: SyntheticGrammar, k: int, rng: np.random.Generator, sid: str, heldout: bool,
            trigger_word: str | None = None) -> Sentence:
    tpl = grammar.templates[k]
    tokens: list[Token] = []
    entities: list[Entity] = []
    roles: list[tuple[int, str]] = []
    edges: list[tuple[int, str]] = []
    trigger = None
    for item in tpl["items"]:
        start = len(tokens)
        if "w" in item:
            w = item["w"]
            word = w if isinstance(w, str) else w[rng.integers(len(w))]
            tokens.append(Token(word, item.get("pos", "NN")))
        elif "e" in item:
            etype = item["e"]
            pool = list(grammar.fillers[etype])
            if heldout:
                pool += grammar.heldout_fillers.get(etype, [])
            for word in pool[rng.integers(len(pool))]:
                tokens.append(Token(word, "NNP"))
            if item.get("role"):
                roles.append((len(entities), item["role"]))
            entities.append(Entity(start, len(tokens), etype))
        else:
            words = grammar.trigger_words(k)
            word = trigger_word if trigger_word is not None else words[rng.integers(len(words))]
            tokens.append(Token(word, item.get("pos", "NN")))
            trigger = (start, start + 1)
        if item.get("dep"):
            edges.append((start, item["dep"]))
    events, deps = [], []
    if trigger is not None:
        events.append(Event(trigger, tpl["event"], tuple(Argument(e, r) for e, r in roles)))
        deps = [Dep(trigger[0], tok, label) for tok, label in edges]
    return Sentence(sid, tokens, entities, events, deps)


def generate_synthetic_corpus(grammar: SyntheticGrammar, seed: int, n_train: int, n_dev: int,
                              n_test: int) -> tuple[Corpus, Corpus, Corpus]:
    """Train/dev/test corpora, deterministic in ``seed``.

    The first training sentences cover every (ambiguous word, event type) pair;
    dev and test may also draw held-out entity fillers.
    """
    for name, n in (("n_train", n_train), ("n_dev", n_dev), ("n_test", n_test)):
        if n <= 0:
            raise ValueError(f"{name} must be positive, got {n}")
    ambiguous = grammar.ambiguous_words()
    if not ambiguous:
        warnings.warn("grammar has no trigger word shared by two event types", stacklevel=2)
    rng = np.random.default_rng(seed)
    forced = []
    for word, types in ambiguous.items():
        for ev in types:
            ks = [k for k, t in enumerate(grammar.templates) if t.get("event") == ev and word in grammar.trigger_words(k)]
            if ks:
                forced.append((ks[0], word))
    out = []
    for split, n in (("train", n_train), ("dev", n_dev), ("test", n_test)):
        sentences = []
        for i in range(n):
            sid = f"{split}-{i:05d}"
            if split == "train" and i < len(forced):
                k, word = forced[i]
            else:
                k, word = int(rng.integers(len(grammar.templates))), None
            sent = _render(grammar, k, rng, sid, heldout=split != "train", trigger_word=word)
            sentences.append(validate_sentence(sent, grammar.schema))
        out.append(Corpus(sentences, grammar.schema, split))
    return out[0], out[1], out[2]


def role_violations(sentence: Sentence, schema: EventSchema) -> list[str]:
    out = []
    for ev in sentence.events:
        for a in ev.args:
            etype = sentence.entities[a.entity].type
            if not schema.role_allowed(ev.type, a.role, etype):
                out.append(f"{sentence.id}: {ev.type}/{a.role} filled by {etype}")
    return out


def synthetic_embeddings(grammar: SyntheticGrammar, dim: int, seed: int) -> EmbeddingTable:
    """Stand-in pretrained vectors: words of one entity or event type share a centroid."""
    rng = np.random.default_rng(seed)
    centroid: dict[str, np.ndarray] = {}

    def center(key: str) -> np.ndarray:
        if key not in centroid:
            centroid[key] = rng.normal(0.0, 1.0, dim)
        return centroid[key]

    cls_of: dict[str, list[str]] = {}
    for table in (grammar.fillers, grammar.heldout_fillers):
        for etype in sorted(table):
            for filler in table[etype]:
                for w in filler:
                    cls_of.setdefault(w, []).append("entity:" + etype)
    for word, senses in grammar.trigger_lexicon.items():
        cls_of.setdefault(word, []).extend("event:" + ev for ev, _ in senses)
    words = grammar.vocabulary()
    rows = np.zeros((len(words) + 1, dim))
    for k, w in enumerate(words, 1):
        classes = sorted(set(cls_of.get(w, [])))
        base = np.mean([center(c) for c in classes], axis=0) if classes else np.zeros(dim)
        rows[k] = (base + rng.normal(0.0, 0.5, dim)) / np.sqrt(dim)
    return EmbeddingTable(words, dim, trainable=False, weight=rows, name="pretrained")


def _w(word, pos="NN", dep=None):
    item = {"w": word, "pos": pos}
    if dep:
        item["dep"] = dep
    return item


def _e(etype, role=None, dep=None):
    item = {"e": etype, "role": role}
    if dep:
        item["dep"] = dep
    return item


def _t(words, pos):
    return {"t": list(words), "pos": pos}


def default_grammar() -> SyntheticGrammar:
    """Twenty-odd templates over twelve event types, with ``campaign`` ambiguous."""
    dot = _w(".", ".")
    templates = [
        {"event": "Attack", "items": [_e("GPE", "Attacker", "nsubj"), _w("forces", "NNS"), _w("launched", "VBD"),
                                      _w("the", "DT"), _t(["campaign", "offensive", "assault"], "NN"),
                                      _w("against", "IN"), _e("GPE", "Target", "nmod:against"), dot]},
        {"event": "Attack", "items": [_w("the", "DT"), _w("forces", "NNS"), _w("of", "IN"),
                                      _e("GPE", "Attacker", "nmod:of"), _w("continued", "VBD"), _w("their", "PRP$"),
                                      _t(["campaign", "offensive"], "NN"), _w("with", "IN"),
                                      _e("WEA", "Instrument", "nmod:with"), dot]},
        {"event": "Attack", "items": [_e("PER", "Attacker", "nsubj"), _t(["attacked", "bombed", "raided"], "VBD"),
                                      _e("FAC", "Target", "dobj"), _w("in", "IN"), _e("GPE", "Place", "nmod:in"), dot]},
        {"event": "Demonstrate", "items": [_w("the", "DT"), _w("disobedience", "NN"),
                                           _t(["campaign", "protest"], "NN"), _w("began", "VBD"), _w("in", "IN"),
                                           _e("GPE", "Place", "nmod:in"), _w("last", "JJ"), _w("week", "NN"), dot]},
        {"event": "Demonstrate", "items": [_e("ORG", "Entity", "nsubj"), _w("organized", "VBD"), _w("a", "DT"),
                                           _t(["rally", "protest", "march"], "NN"), _w("in", "IN"),
                                           _e("LOC", "Place", "nmod:in"), dot]},
        {"event": "Demonstrate", "items": [_w(["thousands", "hundreds"], "NNS"), _w("of", "IN"),
                                           _w("protesters", "NNS"), _t(["marched", "rallied"], "VBD"),
                                           _w("through", "IN"), _e("GPE", "Place", "nmod:through"), dot]},
        {"event": "Die", "items": [_e("PER", "Victim", "nsubj"), _t(["died", "perished"], "VBD"), _w("in", "IN"),
                                   _e("GPE", "Place", "nmod:in"), dot]},
        {"event": "Die", "items": [_e("PER", "Agent", "nsubj"), _t(["killed", "murdered"], "VBD"),
                                   _e("PER", "Victim", "dobj"), _w("with", "IN"),
                                   _e("WEA", "Instrument", "nmod:with"), dot]},
        {"event": "Transport", "items": [_e("PER", "Artifact", "nsubj"), _t(["traveled", "flew", "moved"], "VBD"),
                                         _w("from", "IN"), _e("GPE", "Origin", "nmod:from"), _w("to", "TO"),
                                         _e("GPE", "Destination", "nmod:to"), dot]},
        {"event": "Meet", "items": [_e("PER", "Entity", "nsubj"), _t(["met"], "VBD"), _e("PER", "Entity", "dobj"),
                                    _w("in", "IN"), _e("GPE", "Place", "nmod:in"), dot]},
        {"event": "Meet", "items": [_e("ORG", "Entity", "nsubj"), _w("held", "VBD"), _t(["talks", "meetings"], "NNS"),
                                    _w("with", "IN"), _e("ORG", "Entity", "nmod:with"), dot]},
        {"event": "Arrest-Jail", "items": [_e("ORG", "Agent", "nsubj"), _t(["arrested", "detained"], "VBD"),
                                           _e("PER", "Person", "dobj"), _w("in", "IN"), _e("GPE", "Place", "nmod:in"),
                                           dot]},
        {"event": "Arrest-Jail", "items": [_e("PER", "Person", "nsubjpass"), _w(",", ","), _w("a", "DT"),
                                           _w("resident", "NN"), _w("of", "IN"), _e("GPE"), _w(",", ","),
                                           _w("was", "VBD"), _t(["arrested", "detained"], "VBN"), _w("by", "IN"),
                                           _e("ORG", "Agent", "nmod:by"), dot]},
        {"event": "Elect", "items": [_e("PER", "Person", "nsubjpass"), _w("was", "VBD"), _t(["elected"], "VBN"),
                                     _w("president", "NN"), _w("of", "IN"), _e("GPE", "Entity", "nmod:of"), dot]},
        {"event": "Start-Position", "items": [_e("ORG", "Entity", "nsubj"), _t(["hired", "appointed"], "VBD"),
                                              _e("PER", "Person", "dobj"), _w("as", "IN"), _w("director", "NN"), dot]},
        {"event": "End-Position", "items": [_e("PER", "Person", "nmod:poss"), _w("'s", "POS"),
                                            _t(["resignation"], "NN"), _w("from", "IN"),
                                            _e("ORG", "Entity", "nmod:from"), _w("surprised", "VBD"), _e("PER"), dot]},
        {"event": "End-Position", "items": [_e("PER", "Person", "nsubj"), _t(["resigned", "quit"], "VBD"),
                                            _w("from", "IN"), _e("ORG", "Entity", "nmod:from"), dot]},
        {"event": "Transfer-Money", "items": [_e("ORG", "Giver", "nsubj"), _t(["paid", "donated"], "VBD"),
                                              _w("money", "NN"), _w("to", "TO"), _e("ORG", "Recipient", "nmod:to"),
                                              dot]},
        {"event": "Injure", "items": [_e("PER", "Victim", "nsubjpass"), _w("was", "VBD"),
                                      _t(["wounded", "injured"], "VBN"), _w("by", "IN"),
                                      _e("WEA", "Instrument", "nmod:by"), _w("in", "IN"), _e("LOC", "Place", "nmod:in"),
                                      dot]},
        {"event": "Marry", "items": [_e("PER", "Person", "nsubj"), _t(["married"], "VBD"), _e("PER", "Person", "dobj"),
                                     _w("in", "IN"), _e("GPE", "Place", "nmod:in"), dot]},
        {"event": None, "items": [_e("PER"), _w("lives", "VBZ"), _w("in", "IN"), _e("GPE"), dot]},
        {"event": None, "items": [_e("ORG"), _w("is", "VBZ"), _w("based", "VBN"), _w("in", "IN"), _e("GPE"), dot]},
        {"event": None, "items": [_w("the", "DT"), _w("weather", "NN"), _w("in", "IN"), _e("LOC"), _w("was", "VBD"),
                                  _w(["calm", "mild"], "JJ"), dot]},
    ]
    lexicon = {
        "campaign": [["Attack", "forces"], ["Demonstrate", "disobedience"]],
        "offensive": [["Attack", ""]], "assault": [["Attack", ""]], "attacked": [["Attack", ""]],
        "bombed": [["Attack", ""]], "raided": [["Attack", ""]],
        "protest": [["Demonstrate", ""]], "rally": [["Demonstrate", ""]], "march": [["Demonstrate", ""]],
        "marched": [["Demonstrate", ""]], "rallied": [["Demonstrate", ""]],
        "died": [["Die", ""]], "perished": [["Die", ""]], "killed": [["Die", ""]], "murdered": [["Die", ""]],
        "traveled": [["Transport", ""]], "flew": [["Transport", ""]], "moved": [["Transport", ""]],
        "met": [["Meet", ""]], "talks": [["Meet", ""]], "meetings": [["Meet", ""]],
        "arrested": [["Arrest-Jail", ""]], "detained": [["Arrest-Jail", ""]],
        "elected": [["Elect", ""]], "hired": [["Start-Position", ""]], "appointed": [["Start-Position", ""]],
        "resignation": [["End-Position", ""]], "resigned": [["End-Position", ""]], "quit": [["End-Position", ""]],
        "paid": [["Transfer-Money", ""]], "donated": [["Transfer-Money", ""]],
        "wounded": [["Injure", ""]], "injured": [["Injure", ""]], "married": [["Marry", ""]],
    }
    fillers = {
        "PER": [["John", "Smith"], ["Mary"], ["Ahmed"], ["Li", "Wei"], ["Carlos"], ["Anna", "Petrova"], ["Tom"],
                ["Fatima"], ["Ivan"], ["Grace", "Kim"], ["Pierre"], ["Sara"]],
        "ORG": [["Reuters"], ["Hamas"], ["Greenpeace"], ["Interpol"], ["Red", "Cross"], ["Boeing"], ["UNICEF"],
                ["NATO"]],
        "GPE": [["Iraq"], ["France"], ["Baghdad"], ["Paris"], ["Washington"], ["Moscow"], ["New", "York"],
                ["Cairo"], ["Berlin"], ["Japan"]],
        "LOC": [["the", "valley"], ["the", "desert"], ["the", "coast"], ["the", "river"], ["the", "mountains"]],
        "FAC": [["the", "embassy"], ["the", "airport"], ["the", "bridge"], ["the", "prison"], ["the", "station"]],
        "WEA": [["rifles"], ["missiles"], ["bombs"], ["grenades"], ["knives"], ["artillery"]],
    }
    heldout = {
        "PER": [["Kenji"], ["Olga"], ["David", "Lee"]],
        "ORG": [["Oxfam"], ["Amnesty"]],
        "GPE": [["Madrid"], ["Kabul"]],
    }
    return SyntheticGrammar(templates, fillers, lexicon, heldout, default_schema())

"""Annotated sentences, JSONL corpus I/O, vocabularies and pretrained embeddings."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from ..nn import EmbeddingTable
from .bio import TRIGGERS_AND_ENTITIES, bio_encode
from .schema import EventSchema


class Token(NamedTuple):
    surface: str
    pos: str
    gold_bio: str = "O"


class Entity(NamedTuple):
    start: int
    end: int
    type: str


class Argument(NamedTuple):
    entity: int
    role: str


class Event(NamedTuple):
    trigger: tuple[int, int]
    type: str
    args: tuple[Argument, ...] = ()


class Dep(NamedTuple):
    head: int
    dep: int
    label: str


@dataclass
class Sentence:
    id: str
    tokens: list[Token]
    entities: list[Entity] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    deps: list[Dep] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "tokens": [t.surface for t in self.tokens],
            "pos": [t.pos for t in self.tokens],
            "entities": [{"start": e.start, "end": e.end, "type": e.type} for e in self.entities],
            "events": [
                {
                    "trigger": {"start": ev.trigger[0], "end": ev.trigger[1]},
                    "type": ev.type,
                    "args": [{"entity": a.entity, "role": a.role} for a in ev.args],
                }
                for ev in self.events
            ],
            "deps": [{"head": d.head, "dep": d.dep, "label": d.label} for d in self.deps],
        }

    @classmethod
    def from_json(cls, d: dict) -> "Sentence":
        tokens, pos = d["tokens"], d["pos"]
        if len(tokens) != len(pos):
            raise ValueError(f"sentence {d.get('id')!r}: {len(tokens)} tokens but {len(pos)} POS tags")
        return cls(
            id=str(d["id"]),
            tokens=[Token(str(s), str(p)) for s, p in zip(tokens, pos)],
            entities=[Entity(int(e["start"]), int(e["end"]), str(e["type"])) for e in d.get("entities", [])],
            events=[
                Event(
                    (int(ev["trigger"]["start"]), int(ev["trigger"]["end"])),
                    str(ev["type"]),
                    tuple(Argument(int(a["entity"]), str(a["role"])) for a in ev.get("args", [])),
                )
                for ev in d.get("events", [])
            ],
            deps=[Dep(int(x["head"]), int(x["dep"]), str(x["label"])) for x in d.get("deps", [])],
        )


def validate_sentence(sentence: Sentence, schema: EventSchema) -> Sentence:
    """Check spans and types against ``schema``; return a copy with gold BIO filled in."""
    sid = sentence.id
    n = len(sentence.tokens)
    if n == 0:
        raise ValueError(f"sentence {sid!r}: no tokens")
    for e in sentence.entities:
        if not 0 <= e.start < e.end <= n:
            raise ValueError(f"sentence {sid!r}: entity span [{e.start}, {e.end}) out of bounds")
        if e.type not in schema.entity_types:
            raise ValueError(f"sentence {sid!r}: unknown entity type {e.type!r}")
    for ev in sentence.events:
        s, t = ev.trigger
        if not 0 <= s < t <= n:
            raise ValueError(f"sentence {sid!r}: trigger span [{s}, {t}) out of bounds")
        if ev.type not in schema.event_types:
            raise ValueError(f"sentence {sid!r}: unknown event type {ev.type!r}")
        for a in ev.args:
            if not 0 <= a.entity < len(sentence.entities):
                raise ValueError(
                    f"sentence {sid!r}: argument references entity {a.entity} of {len(sentence.entities)}"
                )
            if a.role not in schema.roles:
                raise ValueError(f"sentence {sid!r}: unknown role {a.role!r}")
    for d in sentence.deps:
        if not (0 <= d.head < n and 0 <= d.dep < n):
            raise ValueError(f"sentence {sid!r}: dependency ({d.head}, {d.dep}) out of bounds")
    try:
        labels = bio_encode(sentence, TRIGGERS_AND_ENTITIES)
    except ValueError as exc:
        raise ValueError(f"sentence {sid!r}: {exc}") from None
    tokens = [Token(tok.surface, tok.pos, lab) for tok, lab in zip(sentence.tokens, labels)]
    return Sentence(sid, tokens, list(sentence.entities), list(sentence.events), list(sentence.deps))


@dataclass
class Corpus:
    sentences: list[Sentence]
    schema: EventSchema
    split: str = "train"

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, k):
        return self.sentences[k]

    def by_id(self) -> dict[str, Sentence]:
        return {s.id: s for s in self.sentences}


def load_corpus(path, schema: EventSchema, split: str = "train") -> Corpus:
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                sent = Sentence.from_json(json.loads(line))
                sentences.append(validate_sentence(sent, schema))
            except (ValueError, KeyError, TypeError) as exc:
                detail = f"missing field {exc}" if isinstance(exc, KeyError) else str(exc)
                raise ValueError(f"{path}:{lineno}: {detail}") from None
    return Corpus(sentences, schema, split)


def save_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in corpus.sentences:
            fh.write(json.dumps(s.to_json(), ensure_ascii=False) + "\n")


@dataclass
class Vocab:
    surface: list[str]
    pos: list[str]
    deps: list[str]


def build_vocab(corpus: Corpus | Sequence[Sentence]) -> Vocab:
    """Surface, POS and dependency-label inventories in order of first occurrence."""
    sentences = list(corpus)
    if not sentences:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    surface, pos, deps = {}, {}, {}
    for s in sentences:
        for tok in s.tokens:
            surface.setdefault(tok.surface, None)
            pos.setdefault(tok.pos, None)
        for d in s.deps:
            deps.setdefault(d.label, None)
    return Vocab(list(surface), list(pos), list(deps))


def load_embeddings(path, expected_dim: int) -> EmbeddingTable:
    """Frozen table from ``token v1 ... vd`` lines (optional ``count dim`` header)."""
    symbols, rows = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if not parts or not parts[0]:
                continue
            if lineno == 1 and len(parts) == 2 and parts[0].isdigit() and parts[1].isdigit():
                if int(parts[1]) != expected_dim:
                    raise ValueError(f"{path}:1: header declares dim {parts[1]}, expected {expected_dim}")
                continue
            if len(parts) - 1 != expected_dim:
                raise ValueError(f"{path}:{lineno}: expected {expected_dim} values, got {len(parts) - 1}")
            try:
                rows.append([float(x) for x in parts[1:]])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value") from None
            symbols.append(parts[0])
    weight = np.zeros((len(symbols) + 1, expected_dim))
    if rows:
        weight[1:] = rows
    return EmbeddingTable(symbols, expected_dim, trainable=False, weight=weight, name="pretrained")


def save_embeddings(table: EmbeddingTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table) - 1} {table.dim}\n")
        for sym, row in zip(table.symbols[1:], table.weight.value[1:]):
            fh.write(sym + " " + " ".join(repr(float(x)) for x in row) + "\n")

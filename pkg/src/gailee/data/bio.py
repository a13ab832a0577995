"""BIO label sets and span encoding/decoding."""
from __future__ import annotations

from typing import Iterable, Sequence

TRIGGER = "Trigger"
TRIGGERS_ONLY = "triggers_only"
TRIGGERS_AND_ENTITIES = "triggers_and_entities"
LABELING_SCHEMAS = (TRIGGERS_ONLY, TRIGGERS_AND_ENTITIES)


def bio_label_set(schema, labeling_schema: str = TRIGGERS_AND_ENTITIES) -> list[str]:
    """``O`` first, then B-/I- pairs per entity type (if requested), then the trigger pair."""
    if labeling_schema not in LABELING_SCHEMAS:
        raise ValueError(f"unknown labeling schema {labeling_schema!r}")
    labels = ["O"]
    if labeling_schema == TRIGGERS_AND_ENTITIES:
        for t in schema.entity_types:
            labels += [f"B-{t}", f"I-{t}"]
    labels += [f"B-{TRIGGER}", f"I-{TRIGGER}"]
    return labels


def encode_spans(n: int, spans: Iterable[tuple[int, int, str]]) -> list[str]:
    labels = ["O"] * n
    for start, end, kind in sorted(spans):
        if not 0 <= start < end <= n:
            raise ValueError(f"span [{start}, {end}) out of bounds for {n} tokens")
        if any(lab != "O" for lab in labels[start:end]):
            raise ValueError(f"span [{start}, {end}) {kind} overlaps another span")
        labels[start] = f"B-{kind}"
        for k in range(start + 1, end):
            labels[k] = f"I-{kind}"
    return labels


def sentence_spans(sentence, labeling_schema: str = TRIGGERS_AND_ENTITIES) -> list[tuple[int, int, str]]:
    spans = [(ev.trigger[0], ev.trigger[1], TRIGGER) for ev in sentence.events]
    # one trigger span may carry several events
    spans = sorted(set(spans))
    if labeling_schema == TRIGGERS_AND_ENTITIES:
        spans += [(e.start, e.end, e.type) for e in sentence.entities]
    elif labeling_schema != TRIGGERS_ONLY:
        raise ValueError(f"unknown labeling schema {labeling_schema!r}")
    return spans


def bio_encode(sentence, labeling_schema: str = TRIGGERS_AND_ENTITIES) -> list[str]:
    return encode_spans(len(sentence.tokens), sentence_spans(sentence, labeling_schema))


def bio_decode(labels: Sequence[str]) -> list[tuple[int, int, str]]:
    """Spans (start, end, type), half-open.

    An ``I-X`` that does not continue an ``X`` span opens a new one.
    """
    spans = []
    start, kind = None, None
    for k, lab in enumerate(labels):
        if lab == "O":
            if kind is not None:
                spans.append((start, k, kind))
            start, kind = None, None
            continue
        prefix, _, typ = lab.partition("-")
        if prefix not in ("B", "I") or not typ:
            raise ValueError(f"malformed BIO label {lab!r}")
        if prefix == "B" or typ != kind:
            if kind is not None:
                spans.append((start, k, kind))
            start, kind = k, typ
    if kind is not None:
        spans.append((start, len(labels), kind))
    return spans

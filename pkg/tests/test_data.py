import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gailee.data import (NONE, Corpus, EventSchema, Sentence, Token, bio_decode, bio_encode, bio_label_set,
                         build_vocab, default_grammar, default_schema, encode_spans, generate_synthetic_corpus,
                         load_corpus, load_embeddings, load_grammar, load_schema, role_violations, save_corpus,
                         save_embeddings, save_schema, synthetic_embeddings, validate_sentence)
from gailee.data.synthetic import SyntheticGrammar


def test_default_schema_sizes(schema):
    assert len(schema.entity_types) == 7
    assert len(schema.event_types) == 33
    assert len(schema.roles) == 22
    assert NONE not in schema.event_types


def test_schema_rejects_duplicates_and_reserved_names():
    with pytest.raises(ValueError, match="duplicate"):
        EventSchema(["PER", "PER"], ["Attack"], ["Agent"])
    with pytest.raises(ValueError, match="reserved"):
        EventSchema(["PER"], [NONE], ["Agent"])
    with pytest.raises(ValueError, match="undeclared"):
        EventSchema(["PER"], ["Attack"], ["Agent"], {"Attack": {"Place": ["PER"]}})


def test_role_constraints(schema):
    assert not schema.role_allowed("Attack", "Place", "PER")
    assert schema.role_allowed("Attack", "Place", "GPE")
    free = EventSchema(["PER"], ["X"], ["R"])
    assert free.role_allowed("X", "R", "PER")


def test_schema_round_trip(tmp_path, schema):
    save_schema(schema, tmp_path / "s.json")
    assert load_schema(tmp_path / "s.json").to_dict() == schema.to_dict()


def test_bio_label_set_sizes(schema):
    labels = bio_label_set(schema)
    assert len(labels) == 17 and labels[0] == "O" and labels[-2:] == ["B-Trigger", "I-Trigger"]
    assert bio_label_set(schema, "triggers_only") == ["O", "B-Trigger", "I-Trigger"]
    with pytest.raises(ValueError):
        bio_label_set(schema, "bogus")


def test_encode_examples():
    assert encode_spans(5, [(2, 4, "PER")]) == ["O", "O", "B-PER", "I-PER", "O"]
    assert encode_spans(3, []) == ["O"] * 3
    with pytest.raises(ValueError, match="overlaps"):
        encode_spans(5, [(0, 3, "PER"), (2, 4, "GPE")])


def test_decode_repairs_orphan_inside_label():
    assert bio_decode(["I-PER", "I-PER"]) == [(0, 2, "PER")]
    assert bio_decode(["B-PER", "I-GPE", "O", "B-Trigger"]) == [(0, 1, "PER"), (1, 2, "GPE"), (3, 4, "Trigger")]
    with pytest.raises(ValueError):
        bio_decode(["X-PER"])


def test_triggers_only_drops_entities(sentence):
    assert bio_encode(sentence, "triggers_only") == ["O", "B-Trigger", "O", "O", "O", "O"]
    assert bio_encode(sentence) == ["B-PER", "B-Trigger", "B-GPE", "I-GPE", "O", "B-WEA"]


@st.composite
def span_sets(draw):
    n = draw(st.integers(1, 12))
    cuts = sorted(draw(st.sets(st.integers(0, n), max_size=8)))
    spans = []
    for s, e in zip(cuts[::2], cuts[1::2]):
        if s < e:
            spans.append((s, e, draw(st.sampled_from(["PER", "GPE", "Trigger"]))))
    return n, spans


@settings(max_examples=200, deadline=None)
@given(span_sets())
def test_bio_round_trip(case):
    n, spans = case
    assert bio_decode(encode_spans(n, spans)) == sorted(spans)


def test_sentence_json_round_trip(sentence):
    back = validate_sentence(Sentence.from_json(json.loads(json.dumps(sentence.to_json()))), default_schema())
    assert back == sentence


def test_validation_names_sentence(schema):
    bad = Sentence.from_json({"id": "s9", "tokens": ["a", "b"], "pos": ["NN", "NN"],
                              "entities": [{"start": 0, "end": 1, "type": "PER"}],
                              "events": [{"trigger": {"start": 1, "end": 2}, "type": "Attack",
                                          "args": [{"entity": 9, "role": "Attacker"}]}]})
    with pytest.raises(ValueError, match="'s9'.*entity 9 of 1"):
        validate_sentence(bad, schema)
    with pytest.raises(ValueError, match="unknown event type"):
        validate_sentence(Sentence.from_json({"id": "s", "tokens": ["a"], "pos": ["NN"],
                                              "events": [{"trigger": {"start": 0, "end": 1}, "type": "Nope"}]}),
                          schema)


def test_load_corpus_cases(tmp_path, schema, sentence):
    (tmp_path / "empty.jsonl").write_text("")
    assert len(load_corpus(tmp_path / "empty.jsonl", schema)) == 0
    save_corpus(Corpus([sentence], schema), tmp_path / "one.jsonl")
    one = load_corpus(tmp_path / "one.jsonl", schema, "dev")
    assert len(one) == 1 and one.split == "dev"
    assert [t.gold_bio for t in one[0].tokens] == bio_encode(sentence)
    (tmp_path / "bad.jsonl").write_text(json.dumps(sentence.to_json()) + "\n{\"id\": 1}\n")
    with pytest.raises(ValueError, match="bad.jsonl:2"):
        load_corpus(tmp_path / "bad.jsonl", schema)


def test_build_vocab_in_first_occurrence_order(schema):
    s = Sentence("x", [Token("a", "NN"), Token("b", "VB"), Token("a", "NN")])
    v = build_vocab([s])
    assert v.surface == ["a", "b"] and v.pos == ["NN", "VB"]
    with pytest.raises(ValueError):
        build_vocab([])


def test_embeddings_load_and_validate(tmp_path):
    (tmp_path / "e.txt").write_text("cat 0.1 0.2\ndog 0.3 0.4\n")
    t = load_embeddings(tmp_path / "e.txt", 2)
    np.testing.assert_array_equal(t.vector("cat"), [0.1, 0.2])
    np.testing.assert_array_equal(t.vector("unknown"), [0.0, 0.0])
    save_embeddings(t, tmp_path / "f.txt")
    np.testing.assert_array_equal(load_embeddings(tmp_path / "f.txt", 2).weight.value, t.weight.value)
    (tmp_path / "g.txt").write_text("cat " + " ".join(["0.5"] * 199) + "\n")
    with pytest.raises(ValueError, match="g.txt:1"):
        load_embeddings(tmp_path / "g.txt", 200)


def test_generator_is_deterministic_and_sized():
    g = default_grammar()
    a = generate_synthetic_corpus(g, 3, 100, 10, 10)
    b = generate_synthetic_corpus(g, 3, 100, 10, 10)
    assert [len(c) for c in a] == [100, 10, 10]
    for x, y in zip(a, b):
        assert [s.to_json() for s in x] == [s.to_json() for s in y]
    with pytest.raises(ValueError):
        generate_synthetic_corpus(g, 0, 0, 1, 1)


def test_generated_corpus_covers_every_sense_of_ambiguous_words(synthetic):
    train = synthetic[0]
    ambiguous = default_grammar().ambiguous_words()
    assert "campaign" in ambiguous
    for word, types in ambiguous.items():
        for etype in types:
            hits = sum(1 for s in train for ev in s.events
                       if ev.type == etype and s.surfaces[ev.trigger[0]] == word)
            assert hits >= 1, (word, etype)


def test_generated_corpus_respects_role_constraints(synthetic):
    for corpus in synthetic:
        for s in corpus:
            assert role_violations(s, corpus.schema) == []


def test_grammar_without_ambiguity_warns(tmp_path):
    d = default_grammar().to_dict()
    d["trigger_lexicon"] = {w: senses[:1] for w, senses in d["trigger_lexicon"].items()}
    g = SyntheticGrammar.from_dict(d)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        generate_synthetic_corpus(g, 0, 5, 1, 1)
    assert any("two event types" in str(w.message) for w in caught)


def test_grammar_file_round_trip(tmp_path):
    g = default_grammar()
    (tmp_path / "g.json").write_text(json.dumps(g.to_dict()))
    assert load_grammar(tmp_path / "g.json").to_dict() == g.to_dict()
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ValueError, match="invalid JSON"):
        load_grammar(tmp_path / "bad.json")


def test_synthetic_embeddings_cover_vocabulary():
    g = default_grammar()
    t = synthetic_embeddings(g, 8, 0)
    assert t.dim == 8
    assert all(w in t for w in g.vocabulary())

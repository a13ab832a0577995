"""Acceptance criteria, one test each.

The terminal summary prints a PASS/FAIL line per criterion with the measured
values (see ``criterion`` in conftest.py).
"""
import csv
import filecmp
import io
import time

import numpy as np
import pytest

from gailee import numerics as F
from gailee.cli import GRAD_CHECK_TOL, run_grad_check
from gailee.config import TrainConfig
from gailee.data import Corpus, Event, Sentence, Token, build_vocab, default_grammar, default_schema, validate_sentence
from gailee.data.synthetic import synthetic_embeddings
from gailee.extractor import (EventExtractorModel, ExplorationPolicy, TriggerHead, classify_trigger,
                              encode_environment, epsilon_greedy, label_sequence, pg_loss)
from gailee.gail import (Discriminator, discriminator_forward, discriminator_loss, fixed_reward, gail_rewards)
from gailee.trainer import METRICS_HEADER, evaluate, load_model, run_training, score_spans, train_epoch

from conftest import SMALL, make_sentence
from test_trainer import _brute_force


def test_gradient_suite(criterion):
    criterion.label("gradient suite: every block max rel err < 1e-4, runtime < 60 s")
    t0 = time.perf_counter()
    report = run_grad_check(out=io.StringIO())
    elapsed = time.perf_counter() - t0
    worst = max(report, key=report.get)
    criterion.note(f"{len(report)} blocks, worst {worst}={report[worst]:.2e}, {elapsed:.1f}s")
    assert GRAD_CHECK_TOL == 1e-4
    assert all(v < 1e-4 for v in report.values()), {k: v for k, v in report.items() if not v < 1e-4}
    assert elapsed < 60


def _toy_corpus(n=50, seed=0):
    """Three-label language: 'attacked' is a one-token trigger, 'opened fire' a two-token one."""
    rng = np.random.default_rng(seed)
    schema = default_schema()
    filler = ["the", "army", "city", "people", "quickly", "yesterday", "of", "a", "group"]
    sents = []
    for k in range(n):
        words = list(rng.choice(filler, size=rng.integers(3, 7)))
        at = int(rng.integers(0, len(words) + 1))
        trigger = ["opened", "fire"] if k % 2 else ["attacked"]
        words[at:at] = trigger
        tokens = [Token(w, "VB" if w in trigger else "NN") for w in words]
        event = Event((at, at + len(trigger)), "Attack")
        sents.append(validate_sentence(Sentence(f"toy-{k}", tokens, events=[event]), schema))
    return Corpus(sents, schema, "train")


def _token_accuracy(corpus, model):
    hit = total = 0
    with F.no_tape():
        for s in corpus:
            actions, _, _ = label_sequence(model.seq_head, encode_environment(model.encoder, s, "eval"))
            gold = model.gold_labels(s)
            hit += sum(a == g for a, g in zip(actions, gold))
            total += len(gold)
    return hit / total


def test_q_learning_toy_language(criterion):
    criterion.label("Q-learning toy: fixed reward reaches >= 99% token accuracy within 30 epochs, < 2 min")
    corpus = _toy_corpus()
    config = TrainConfig(reward_mode="fixed", labeling_schema="triggers_only")
    model = EventExtractorModel(corpus.schema, build_vocab(corpus), config)
    assert len(model.labels) == 3
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    acc, epoch = _token_accuracy(corpus, model), 0
    while acc < 0.99 and epoch < 30:
        epoch += 1
        train_epoch(corpus, model, None, config, rng, epoch)
        acc = _token_accuracy(corpus, model)
    elapsed = time.perf_counter() - t0
    criterion.note(f"accuracy {acc:.4f} after {epoch} epochs, {elapsed:.1f}s")
    assert acc >= 0.99
    assert elapsed < 120


def test_discriminator_separation(criterion):
    criterion.label("discriminator separation: D(expert) - D(agent) >= 0.2 after 200 updates")
    rng = np.random.default_rng(0)
    width, n_actions, n = 16, 4, 64
    disc = Discriminator(width, n_actions, 64, rng)
    xe, ae = rng.normal(size=(n, width)) + 1.0, rng.integers(n_actions, size=n)
    xa, aa = rng.normal(size=(n, width)) - 1.0, rng.integers(n_actions, size=n)
    disc.observe(np.vstack([xe, xa]))
    for _ in range(200):
        F.zero_grad(disc.parameters())
        with F.Tape() as tape:
            loss = discriminator_loss(disc, xe, ae, xa, aa, 0.01)
        F.backward(tape, loss)
        F.adam_step(disc.parameters(), 0.001)
    d_expert = discriminator_forward(disc, xe)[np.arange(n), ae].mean()
    d_agent = discriminator_forward(disc, xa)[np.arange(n), aa].mean()
    r_expert, r_agent = gail_rewards(disc, xe, ae).mean(), gail_rewards(disc, xa, aa).mean()
    criterion.note(f"gap {d_expert - d_agent:.3f}, reward expert {r_expert:.3f} agent {r_agent:.3f}")
    assert d_expert - d_agent >= 0.2
    assert r_expert > r_agent


def test_reward_bounds(criterion):
    criterion.label("reward bounds: 10,000 GAIL probes strictly inside (-1, 1), fixed reward in {+1, -1}")
    rng = np.random.default_rng(0)
    width, n_actions = 24, 7
    disc = Discriminator(width, n_actions, 32, rng)
    expert, agent = rng.normal(size=(64, width)) + 2.0, rng.normal(size=(64, width)) - 2.0
    acts = rng.integers(n_actions, size=64)
    disc.observe(np.vstack([expert, agent]))
    # a well-separated D plus wide input scales push outputs towards saturation
    for _ in range(300):
        F.zero_grad(disc.parameters())
        with F.Tape() as tape:
            loss = discriminator_loss(disc, expert, acts, agent, acts, 0.0)
        F.backward(tape, loss)
        F.adam_step(disc.parameters(), 0.01)
    states = rng.normal(size=(10_000, width)) * rng.choice([0.1, 1.0, 10.0, 1e3], size=(10_000, 1))
    actions = rng.integers(n_actions, size=10_000)
    rewards = gail_rewards(disc, states, actions)
    criterion.note(f"min {rewards.min():.6f}, max {rewards.max():.6f}")
    assert rewards.shape == (10_000,)
    assert np.all(rewards > -1.0) and np.all(rewards < 1.0)
    fixed = {fixed_reward(int(a), int(g)) for a, g in rng.integers(5, size=(1000, 2))}
    assert fixed == {1.0, -1.0}


def test_policy_gradient_sign(criterion):
    criterion.label("policy-gradient sign: reward +1 raises P(a|s), reward -1 lowers it (lr 0.001)")
    types = list(default_schema().event_types)
    env = F.Tensor(np.random.default_rng(1).normal(size=(3, 32)))
    changes = {}
    for reward in (1.0, -1.0):
        head = TriggerHead(types, 32, TrainConfig(), np.random.default_rng(0))
        action = 5
        with F.no_tape():
            before = classify_trigger(head, env, 1)[0].value[0, action]
        F.zero_grad(head.parameters())
        with F.Tape() as tape:
            dist = classify_trigger(head, env, 1)[0]
            loss = pg_loss(dist, action, reward)
        F.backward(tape, loss)
        F.adam_step(head.parameters(), 0.001)
        with F.no_tape():
            after = classify_trigger(head, env, 1)[0].value[0, action]
        changes[reward] = after - before
    criterion.note(f"dP(+1) {changes[1.0]:+.3e}, dP(-1) {changes[-1.0]:+.3e}")
    assert changes[1.0] > 0
    assert changes[-1.0] < 0


def test_epsilon_greedy_statistics(criterion):
    criterion.label("epsilon-greedy: 100,000 draws at 0.1 explore within [0.095, 0.105]")
    explore = ExplorationPolicy(0.1, np.random.default_rng(0))
    scores = np.random.default_rng(1).normal(size=17)
    explored = sum(epsilon_greedy(scores, explore)[1] for _ in range(100_000))
    criterion.note(f"fraction {explored / 100_000:.5f}")
    assert explore.greedy + explore.random == 100_000
    assert explore.explore_fraction == explored / 100_000
    assert 0.095 <= explore.explore_fraction <= 0.105


def test_scorer_oracle(criterion):
    criterion.label("scorer oracle: 1,000 random pairs match brute force, hand examples bit-exact")
    rng = np.random.default_rng(0)
    for _ in range(1000):
        gold = sorted({(int(a), int(b), "xyz"[c]) for a, b, c in rng.integers(0, 3, size=(rng.integers(0, 8), 3))})
        pred = sorted({(int(a), int(b), "xyz"[c]) for a, b, c in rng.integers(0, 3, size=(rng.integers(0, 8), 3))})
        assert score_spans(gold, pred) == _brute_force(gold, pred)
    spans = [(0, 1, "X"), (2, 3, "Y")]
    assert score_spans(spans, spans[:1]) == (1.0, 0.5, 2 / 3)
    assert score_spans(spans, spans) == (1.0, 1.0, 1.0)
    assert score_spans(spans, []) == (0.0, 0.0, 0.0)
    gold, pred = [(0, 3, 4, "Attack")], [(0, 3, 4, "Demonstrate")]
    assert score_spans(gold, pred, lambda t: t[:3]) == (1.0, 1.0, 1.0)
    assert score_spans(gold, pred) == (0.0, 0.0, 0.0)


@pytest.mark.slow
def test_end_to_end_synthetic(criterion, synthetic, tmp_path):
    criterion.label("end-to-end: GAIL test trigger F1 >= 0.90, role F1 >= 0.80, < 10 min; fixed run emitted")
    train, dev, test = synthetic
    embeddings = synthetic_embeddings(default_grammar(), 200, 0)
    t0 = time.perf_counter()
    gail = run_training(TrainConfig(reward_mode="gail"), train, dev, test, tmp_path / "gail", embeddings)
    gail_time = time.perf_counter() - t0
    fixed = run_training(TrainConfig(reward_mode="fixed"), train, dev, test, tmp_path / "fixed", embeddings)
    g, f = gail.test, fixed.test
    criterion.note(f"gail trigger {g.f1('trigger_labeling'):.3f} role {g.f1('role_labeling'):.3f} "
                   f"({gail_time:.0f}s, best epoch {gail.best_epoch})")
    criterion.note(f"fixed trigger {f.f1('trigger_labeling'):.3f} role {f.f1('role_labeling'):.3f}")
    for name in ("gail", "fixed"):
        assert (tmp_path / name / "metrics.csv").exists()
    assert g.f1("trigger_labeling") >= 0.90
    assert g.f1("role_labeling") >= 0.80
    assert gail_time < 600


def _metrics_shape(path):
    header, *rows = path.read_text().splitlines()
    # test rows carry the best epoch, which depends on the run
    keys = [r.split(",")[:3] for r in rows]
    return header, [("best" if split == "test" else epoch, split, task) for epoch, split, task in keys]


def test_triggers_only_ablation(criterion, synthetic_small, tmp_path):
    criterion.label("ablation: triggers_only runs with 3 labels and the same metrics.csv layout")
    train, dev, test = synthetic_small
    shapes = {}
    for schema in ("triggers_only", "triggers_and_entities"):
        config = TrainConfig(**SMALL, epochs=2, labeling_schema=schema)
        run_training(config, train, dev, test, tmp_path / schema)
        model, _, _ = load_model(tmp_path / schema / "best")
        shapes[schema] = (len(model.labels), _metrics_shape(tmp_path / schema / "metrics.csv"))
    criterion.note(f"labels {shapes['triggers_only'][0]} vs {shapes['triggers_and_entities'][0]}")
    assert shapes["triggers_only"][0] == 3
    assert shapes["triggers_only"][1] == shapes["triggers_and_entities"][1]
    assert shapes["triggers_only"][1][0] == ",".join(METRICS_HEADER)


def test_determinism_and_persistence(criterion, schema, tmp_path):
    criterion.label("determinism: same seed gives identical metrics.csv; reloaded checkpoint reproduces dev F1")
    # a repeated sentence gives a best checkpoint with a nonzero dev score in a few seconds
    train = Corpus([make_sentence(schema, f"s{k}") for k in range(20)], schema, "train")
    dev = Corpus([make_sentence(schema, f"d{k}") for k in range(2)], schema, "dev")
    config = TrainConfig(**SMALL, epochs=8, seed=11, reward_mode="fixed")
    results = [run_training(config, train, dev, None, tmp_path / name) for name in ("a", "b")]
    assert filecmp.cmp(tmp_path / "a" / "metrics.csv", tmp_path / "b" / "metrics.csv", shallow=False)
    model, _, meta = load_model(tmp_path / "a" / "best")
    best = results[0].best_epoch
    recorded = [r for r in csv.reader(open(tmp_path / "a" / "metrics.csv")) if r[:2] == [str(best), "dev"]]
    reloaded = evaluate(dev, model, model.config, best, "dev").rows()
    criterion.note(f"best epoch {best}, dev role F1 {meta['dev_role_f1']} reloaded {reloaded[-1][5]}")
    assert meta["epoch"] == best > 0 and meta["dev_role_f1"] > 0
    assert [[str(x) for x in r] for r in reloaded] == recorded
    assert evaluate(dev, model).f1("role_labeling") == meta["dev_role_f1"]

"""Epoch orchestration, the four-task scorer, CSV traces and checkpoints."""
from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from . import numerics as F
from .config import TrainConfig, dump_config
from .data import (NONE, TRIGGER, Corpus, EventSchema, Sentence, Vocab, bio_decode, build_vocab)
from .extractor import (EventExtractorModel, ExplorationPolicy, behavior_pg_loss, boltzmann_pg_loss,
                        classify_argument, classify_trigger, encode_environment, expected_pg_loss, extract_events,
                        label_sequence, pg_loss, q_targets, q_update_loss)
from .gail import (DiscriminatorBank, FixedRewardProvider, behavior_distribution, discriminator_forward, gail_reward,
                   gail_rewards, select_argument_discriminator, update_discriminators)
from .nn import EmbeddingTable

log = logging.getLogger(__name__)

TASKS = ("trigger_identification", "trigger_labeling", "argument_identification", "role_labeling")
METRICS_HEADER = ["epoch", "split", "task", "precision", "recall", "f1", "mean_reward", "explore_fraction"]
REWARDS_HEADER = ["epoch", "sentence_id", "position", "task", "action", "reward"]


# --------------------------------------------------------------------------
# scoring


def f1_score(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


def score_spans(gold: Iterable, predicted: Iterable, match: Callable | None = None) -> tuple[float, float, float]:
    """Micro (P, R, F1) of exact matches after projecting items with ``match``.

    Items are counted as multisets; 0/0 precision or recall is 0.
    """
    key = match or (lambda x: x)
    g = Counter(key(x) for x in gold)
    p = Counter(key(x) for x in predicted)
    tp = sum((g & p).values())
    n_g, n_p = sum(g.values()), sum(p.values())
    precision = tp / n_p if n_p else 0.0
    recall = tp / n_g if n_g else 0.0
    return precision, recall, f1_score(precision, recall)


class TaskScore(NamedTuple):
    precision: float
    recall: float
    f1: float


@dataclass
class EpochMetrics:
    epoch: int
    split: str
    scores: dict[str, TaskScore]
    mean_rewards: dict[str, float] = field(default_factory=dict)
    explore_fractions: dict[str, float] = field(default_factory=dict)

    def f1(self, task: str) -> float:
        return self.scores[task].f1

    def rows(self) -> list[list]:
        out = []
        for task in TASKS:
            s = self.scores[task]
            reward = self.mean_rewards.get(task)
            explore = self.explore_fractions.get(task)
            out.append([self.epoch, self.split, task, repr(s.precision), repr(s.recall), repr(s.f1),
                        "" if reward is None else repr(reward), "" if explore is None else repr(explore)])
        return out


def event_tuples(k: int, sentence: Sentence, events) -> dict[str, list[tuple]]:
    """Scoring tuples for one sentence; ``events`` are gold Events or ExtractedEvents."""
    out = {t: [] for t in TASKS}
    for ev in events:
        s, e = ev.trigger
        out["trigger_identification"].append((k, s, e))
        out["trigger_labeling"].append((k, s, e, ev.type))
        for arg in ev.args:
            if hasattr(arg, "entity"):
                ent = sentence.entities[arg.entity]
                span, role = (ent.start, ent.end), arg.role
            else:
                (a_s, a_e, _), role = arg
                span = (a_s, a_e)
            out["argument_identification"].append((k, ev.type) + span)
            out["role_labeling"].append((k, ev.type) + span + (role,))
    # gold files may list one trigger span under two event types; identification counts it once
    out["trigger_identification"] = sorted(set(out["trigger_identification"]))
    return out


def score_corpus(gold: dict[str, list], predicted: dict[str, list]) -> dict[str, TaskScore]:
    return {t: TaskScore(*score_spans(gold[t], predicted[t])) for t in TASKS}


def evaluate(corpus: Corpus | Sequence[Sentence], model: EventExtractorModel, config: TrainConfig | None = None,
             epoch: int = 0, split: str | None = None) -> EpochMetrics:
    """Greedy pipelined extraction over ``corpus`` scored on the four tasks."""
    config = config or model.config
    gold = {t: [] for t in TASKS}
    pred = {t: [] for t in TASKS}
    for k, sent in enumerate(corpus):
        for t, items in event_tuples(k, sent, sent.events).items():
            gold[t].extend(items)
        events = extract_events(model, sent, config.entity_mode)
        for t, items in event_tuples(k, sent, events).items():
            pred[t].extend(items)
    split = split or getattr(corpus, "split", "eval")
    return EpochMetrics(epoch, split, score_corpus(gold, pred))


# --------------------------------------------------------------------------
# training


class RewardSource:
    """Per-task rewards from either the fixed rule or the discriminator bank."""

    def __init__(self, config: TrainConfig, bank: DiscriminatorBank | None):
        self.mode = config.reward_mode
        self.fixed = FixedRewardProvider(config.fixed_reward_correct, config.fixed_reward_wrong)
        self.bank = bank
        if self.mode == "gail" and bank is None:
            raise ValueError("gail reward mode needs a discriminator bank")

    def seq(self, states: np.ndarray, actions, gold) -> np.ndarray:
        if self.mode == "fixed":
            return np.array([self.fixed.reward(a, g) for a, g in zip(actions, gold)], dtype=np.float64)
        return gail_rewards(self.bank.seq, states, actions)

    def _fixed_vector(self, gold: int, n_actions: int) -> np.ndarray:
        out = np.full(n_actions, float(self.fixed.c_wrong))
        out[gold] = self.fixed.c_correct
        return out

    def trigger(self, state: np.ndarray, action: int, gold: int) -> float:
        if self.mode == "fixed":
            return self.fixed.reward(action, gold)
        return gail_reward(self.bank.trigger, state, action)

    def trigger_all(self, state: np.ndarray, gold: int, n_actions: int) -> np.ndarray:
        """Reward of every trigger action in ``state``."""
        if self.mode == "fixed":
            return self._fixed_vector(gold, n_actions)
        return 2.0 * discriminator_forward(self.bank.trigger, state)[0] - 1.0

    def argument(self, state: np.ndarray, action: int, gold: int, event_type: str) -> float:
        if self.mode == "fixed":
            return self.fixed.reward(action, gold)
        return gail_reward(select_argument_discriminator(self.bank, event_type), state, action)

    def argument_all(self, state: np.ndarray, gold: int, event_type: str, n_actions: int) -> np.ndarray:
        if self.mode == "fixed":
            return self._fixed_vector(gold, n_actions)
        return 2.0 * discriminator_forward(select_argument_discriminator(self.bank, event_type), state)[0] - 1.0


def build_bank(model: EventExtractorModel, config: TrainConfig) -> DiscriminatorBank:
    rng = np.random.default_rng([config.seed, 1])
    width = model.encoder.width
    return DiscriminatorBank(model.schema.event_types, width, len(model.labels), width,
                             len(model.trigger_head.actions), model.arg_width, len(model.argument_head.actions),
                             config.hidden, rng)


def gold_role_ids(model: EventExtractorModel, sentence: Sentence, event) -> dict[int, int]:
    roles = model.schema.roles
    return {a.entity: roles.index(a.role) for a in event.args}


class _Tally:
    def __init__(self):
        self.gold = {t: [] for t in TASKS}
        self.pred = {t: [] for t in TASKS}
        self.rewards = {t: [] for t in TASKS}

    def add(self, task: str, gold, pred) -> None:
        self.gold[task].extend(gold)
        self.pred[task].extend(pred)


def _policy_loss(config: TrainConfig, dist, action: int, reward_vector: np.ndarray):
    # masked actions have probability 0 and drop out of every form
    allowed = dist.value[0] > 0
    if config.pg_estimator == "boltzmann":
        return boltzmann_pg_loss(dist, reward_vector, config.policy_entropy, allowed)
    if config.pg_estimator == "expected":
        return expected_pg_loss(dist, reward_vector, config.policy_entropy)
    if config.pg_estimator == "behavior":
        behavior = behavior_distribution(dist.value[0], config.epsilon, allowed)
        return behavior_pg_loss(dist, reward_vector, behavior, config.policy_entropy)
    return pg_loss(dist, action, float(reward_vector[action]), config.policy_entropy)


def train_sentence(model: EventExtractorModel, sentence: Sentence, k: int, rewards: RewardSource,
                   explore: dict[str, ExplorationPolicy], rng: np.random.Generator, buffers: dict | None,
                   tally: _Tally | None = None, audit: list | None = None, update_policy: bool = True) -> float:
    """One combined update for the three heads on one sentence; returns the loss value.

    With ``update_policy=False`` the rollout only feeds the reward tallies and
    discriminator buffers.
    """
    config = model.config
    schema = model.schema
    params = model.parameters()
    gold_bio = model.gold_labels(sentence)
    F.zero_grad(params)
    with (F.Tape() if update_policy else F.no_tape()) as tape:
        env = encode_environment(model.encoder, sentence, "train", rng)
        actions, q_values, traj = label_sequence(model.seq_head, env, explore["seq"], "train")
        r_seq = rewards.seq(env.value, actions, gold_bio)
        traj.set_rewards(r_seq)
        loss = q_update_loss(q_values, actions, q_targets(traj, config.gamma))
        if audit is not None:
            audit.append((sentence.id, list(actions), list(gold_bio), r_seq.copy()))
        if buffers is not None:
            n_labels = len(model.labels)
            for t, (a, g) in enumerate(zip(actions, gold_bio)):
                behavior = behavior_distribution(traj[t].q, config.epsilon)
                buffers["seq"].add(env.value[t], a, g, n_labels, behavior)

        gold_entities = [(e.start, e.end, e.type) for e in sentence.entities]
        entity_bio = [gold_bio[s] for s, _, _ in gold_entities]
        pred_trig, pred_args, pred_roles = [], [], []
        for ev in sentence.events:
            t_tr = ev.trigger[0]
            gold_type = schema.event_types.index(ev.type)
            dist, a, _ = classify_trigger(model.trigger_head, env, t_tr, explore["trigger"], "train")
            r_all = rewards.trigger_all(env.value[t_tr], gold_type, dist.shape[1])
            r = float(r_all[a])
            loss = F.add(loss, _policy_loss(config, dist, a, r_all))
            if buffers is not None:
                buffers["trigger"].add(env.value[t_tr], a, gold_type, dist.shape[1],
                                       behavior_distribution(dist.value[0], config.epsilon), dist.value[0])
            if tally is not None:
                tally.rewards["trigger_labeling"].append(r)
                if a != model.trigger_head.none_id:
                    pred_trig.append((k, ev.trigger[0], ev.trigger[1], model.trigger_head.actions[a]))
            roles = gold_role_ids(model, sentence, ev)
            none_role = model.argument_head.none_id
            for j, ((s, e, etype), bio) in enumerate(zip(gold_entities, entity_bio)):
                s_ar = model.argument_state(env, sentence, t_tr, s, bio)
                dist, a, _ = classify_argument(model.argument_head, s_ar, ev.type, etype, schema,
                                               explore["argument"], "train")
                g = roles.get(j, none_role)
                r_all = rewards.argument_all(s_ar.value[0], g, ev.type, dist.shape[1])
                r = float(r_all[a])
                loss = F.add(loss, _policy_loss(config, dist, a, r_all))
                if buffers is not None:
                    behavior = behavior_distribution(dist.value[0], config.epsilon, dist.value[0] > 0)
                    buffers["argument"][ev.type].add(s_ar.value[0], a, g, dist.shape[1], behavior, dist.value[0])
                if tally is not None:
                    tally.rewards["argument_identification"].append(r)
                    if a != none_role:
                        pred_args.append((k, ev.type, s, e))
                        pred_roles.append((k, ev.type, s, e, model.argument_head.actions[a]))
    if update_policy:
        F.backward(tape, loss)
        F.adam_step(params, config.lr)
        F.zero_grad(params)

    if tally is not None:
        tally.rewards["trigger_identification"].extend(r_seq.tolist())
        gold = event_tuples(k, sentence, sentence.events)
        spans = bio_decode([model.labels[a] for a in actions])
        tally.add("trigger_identification", gold["trigger_identification"],
                  [(k, s, e) for s, e, kind in spans if kind == TRIGGER])
        tally.add("trigger_labeling", gold["trigger_labeling"], pred_trig)
        tally.add("argument_identification", gold["argument_identification"], pred_args)
        tally.add("role_labeling", gold["role_labeling"], pred_roles)
    return float(loss.value)


def _all_buffers(buffers: dict) -> list:
    return [buffers["seq"], buffers["trigger"], *buffers["argument"].values()]


def train_epoch(corpus: Corpus, model: EventExtractorModel, bank: DiscriminatorBank | None, config: TrainConfig,
                rng: np.random.Generator, epoch: int = 1, audit: list | None = None,
                update_policy: bool = True) -> EpochMetrics:
    """One pass over ``corpus`` in seeded random order.

    P/R/F1 in the result describe the training-time rollouts: exploratory
    sequence labels and teacher-forced trigger and argument decisions.
    """
    rewards = RewardSource(config, bank)
    explore = {name: ExplorationPolicy(config.epsilon, rng) for name in ("seq", "trigger", "argument")}
    buffers = bank.new_buffers() if config.reward_mode == "gail" else None
    tally = _Tally()
    order = rng.permutation(len(corpus))
    for n_done, k in enumerate(order, 1):
        train_sentence(model, corpus[int(k)], int(k), rewards, explore, rng, buffers, tally, audit, update_policy)
        if buffers is not None and (n_done % config.disc_batch == 0 or n_done == len(order)):
            update_discriminators(bank, buffers, config.lr, config.entropy_weight, model.parameters())
            for buf in _all_buffers(buffers):
                buf.clear()
    tally.rewards["role_labeling"] = tally.rewards["argument_identification"]
    metrics = EpochMetrics(epoch, "train", score_corpus(tally.gold, tally.pred))
    head_of = {"trigger_identification": "seq", "trigger_labeling": "trigger",
               "argument_identification": "argument", "role_labeling": "argument"}
    for task in TASKS:
        vals = tally.rewards[task]
        metrics.mean_rewards[task] = float(np.mean(vals)) if vals else 0.0
        metrics.explore_fractions[task] = explore[head_of[task]].explore_fraction
    return metrics


# --------------------------------------------------------------------------
# reward traces


@dataclass(frozen=True)
class TraceItem:
    sentence_id: str
    position: str
    task: str
    actions: tuple[str, ...]


def default_trace_spec(corpus: Corpus, watch_word: str = "campaign", limit: int = 2) -> list[TraceItem]:
    """Watch every event type the ambiguous ``watch_word`` takes, on its first training sentences."""
    hits = []
    for sent in corpus:
        for ev in sent.events:
            s, e = ev.trigger
            if " ".join(sent.surfaces[s:e]) == watch_word:
                hits.append((sent.id, s, ev.type))
    types = tuple(dict.fromkeys(t for _, _, t in hits))
    chosen, seen = [], set()
    for sid, s, etype in hits:
        if etype not in seen:
            seen.add(etype)
            chosen.append(TraceItem(sid, str(s), "trigger", types))
        if len(chosen) >= limit:
            break
    return chosen


def load_trace_spec(path) -> list[TraceItem]:
    raw = json.loads(Path(path).read_text())
    return [TraceItem(str(d["sentence_id"]), str(d["position"]), str(d["task"]), tuple(d["actions"])) for d in raw]


def save_trace_spec(spec: Sequence[TraceItem], path) -> None:
    Path(path).write_text(json.dumps([
        {"sentence_id": t.sentence_id, "position": t.position, "task": t.task, "actions": list(t.actions)}
        for t in spec
    ], indent=1) + "\n")


def trace_rewards(spec: Sequence[TraceItem], corpus: Corpus, model: EventExtractorModel,
                  rewards: RewardSource, epoch: int) -> list[list]:
    """Reward each watched action at its traced state (eval-mode encoding)."""
    by_id = corpus.by_id()
    rows = []
    for item in spec:
        if item.sentence_id not in by_id:
            raise ValueError(f"trace spec names unknown sentence {item.sentence_id!r}")
        sent = by_id[item.sentence_id]
        with F.no_tape():
            env = encode_environment(model.encoder, sent, "eval")
        if item.task == "sequence":
            t = int(item.position)
            gold = model.gold_labels(sent)[t]
            for name in item.actions:
                a = model.labels.index(name)
                rows.append([epoch, sent.id, item.position, item.task, name,
                             float(rewards.seq(env.value[t:t + 1], [a], [gold])[0])])
        elif item.task == "trigger":
            t = int(item.position)
            gold_types = [ev.type for ev in sent.events if ev.trigger[0] == t]
            gold = model.trigger_head.actions.index(gold_types[0] if gold_types else NONE)
            for name in item.actions:
                a = model.trigger_head.actions.index(name)
                rows.append([epoch, sent.id, item.position, item.task, name,
                             rewards.trigger(env.value[t], a, gold)])
        elif item.task == "argument":
            t_tr, t_ar = (int(x) for x in item.position.split(":"))
            ev = next(ev for ev in sent.events if ev.trigger[0] == t_tr)
            j = next(j for j, e in enumerate(sent.entities) if e.start == t_ar)
            gold = gold_role_ids(model, sent, ev).get(j, model.argument_head.none_id)
            s_ar = model.argument_state(env, sent, t_tr, t_ar, model.gold_labels(sent)[t_ar])
            for name in item.actions:
                a = model.argument_head.actions.index(name)
                rows.append([epoch, sent.id, item.position, item.task, name,
                             rewards.argument(s_ar.value[0], a, gold, ev.type)])
        else:
            raise ValueError(f"unknown trace task {item.task!r}")
    return rows


# --------------------------------------------------------------------------
# persistence


def save_model(model: EventExtractorModel, bank: DiscriminatorBank | None, directory, extra: dict | None = None):
    """Write ``model.json`` and ``params.ckpt`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "config": model.config.to_dict(),
        "schema": model.schema.to_dict(),
        "vocab": {"surface": model.vocab.surface, "pos": model.vocab.pos, "deps": model.vocab.deps},
        "pretrained_symbols": model.encoder.tables["pretrained"].symbols[1:],
        "discriminators": bank is not None,
    }
    meta.update(extra or {})
    (directory / "model.json").write_text(json.dumps(meta, indent=1) + "\n")
    tensors = dict(model.named_tensors())
    if bank is not None:
        tensors.update(bank.named_tensors())
    F.save_checkpoint(directory / "params.ckpt", tensors)


def load_model(directory) -> tuple[EventExtractorModel, DiscriminatorBank | None, dict]:
    directory = Path(directory)
    meta = json.loads((directory / "model.json").read_text())
    config = TrainConfig(**meta["config"])
    schema = EventSchema.from_dict(meta["schema"])
    vocab = Vocab(**meta["vocab"])
    values = F.load_checkpoint(directory / "params.ckpt")
    symbols = meta["pretrained_symbols"]
    pretrained = EmbeddingTable(symbols, config.dim_pretrained, trainable=False,
                                weight=values["frozen/pretrained"], name="pretrained")
    model = EventExtractorModel(schema, vocab, config, pretrained)
    model.load_tensors(values)
    bank = None
    if meta.get("discriminators"):
        bank = build_bank(model, config)
        for name, p in bank.named_tensors().items():
            p.value[...] = values[name]
    return model, bank, meta


# --------------------------------------------------------------------------
# the run


class RunResult(NamedTuple):
    best_epoch: int
    best_dev: EpochMetrics
    test: EpochMetrics | None
    output_dir: Path


def _write_rows(path: Path, rows, header=None, mode="a"):
    try:
        with open(path, mode, newline="") as fh:
            w = csv.writer(fh)
            if header:
                w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def _check_closed_pos(vocab: Vocab, corpora) -> None:
    """Fail before training when an evaluation split uses a POS tag the training split lacks."""
    known = set(vocab.pos)
    for corpus in corpora:
        for sent in corpus:
            for tok in sent.tokens:
                if tok.pos not in known:
                    raise ValueError(f"{corpus.split} sentence {sent.id!r}: POS tag {tok.pos!r} never occurs in "
                                     "the training split (the POS vocabulary is closed)")


def run_training(config: TrainConfig, train: Corpus, dev: Corpus, test: Corpus | None, output_dir,
                 pretrained: EmbeddingTable | None = None, trace_spec: Sequence[TraceItem] | None = None,
                 vocab: Vocab | None = None) -> RunResult:
    """Train for ``config.epochs`` epochs, tracking dev role-labeling F1 for model selection.

    Writes ``metrics.csv``, ``rewards.csv``, periodic checkpoints under
    ``checkpoints/`` and the selected model under ``best/``.
    """
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"{out}: {exc.strerror or exc}") from exc
    vocab = vocab or build_vocab(train)
    _check_closed_pos(vocab, [c for c in (dev, test) if c is not None])
    model = EventExtractorModel(train.schema, vocab, config, pretrained)
    bank = build_bank(model, config) if config.reward_mode == "gail" else None
    rng = np.random.default_rng([config.seed, 2])
    spec = list(default_trace_spec(train) if trace_spec is None else trace_spec)
    rewards = RewardSource(config, bank)
    (out / "config.txt").write_text(dump_config(config))
    save_trace_spec(spec, out / "trace_spec.json")

    metrics_path, rewards_path = out / "metrics.csv", out / "rewards.csv"
    _write_rows(metrics_path, [], METRICS_HEADER, "w")
    _write_rows(rewards_path, [], REWARDS_HEADER, "w")

    if bank is not None:
        # discriminator-only passes so the first policy updates see informative rewards
        for _ in range(config.disc_warmup):
            train_epoch(train, model, bank, config, rng, 0, update_policy=False)
    initial_train = evaluate(train, model, config, 0, "train")
    initial_train.mean_rewards = {t: 0.0 for t in TASKS}
    initial_train.explore_fractions = {t: 0.0 for t in TASKS}
    best_dev = evaluate(dev, model, config, 0, "dev")
    _write_rows(metrics_path, initial_train.rows() + best_dev.rows())
    best_epoch = 0
    save_model(model, bank, out / "best", {"epoch": 0, "dev_role_f1": best_dev.f1("role_labeling")})

    for epoch in range(1, config.epochs + 1):
        tr = train_epoch(train, model, bank, config, rng, epoch)
        dv = evaluate(dev, model, config, epoch, "dev")
        _write_rows(metrics_path, tr.rows() + dv.rows())
        _write_rows(rewards_path, trace_rewards(spec, train, model, rewards, epoch))
        log.info("epoch %d: train trigger F1 %.3f, dev trigger F1 %.3f, dev role F1 %.3f", epoch,
                 tr.f1("trigger_labeling"), dv.f1("trigger_labeling"), dv.f1("role_labeling"))
        if epoch % config.checkpoint_every == 0:
            save_model(model, bank, out / "checkpoints" / f"epoch-{epoch:03d}", {"epoch": epoch})
        if dv.f1("role_labeling") > best_dev.f1("role_labeling"):
            best_dev, best_epoch = dv, epoch
            save_model(model, bank, out / "best", {"epoch": epoch, "dev_role_f1": dv.f1("role_labeling")})

    test_metrics = None
    if test is not None:
        best_model, _, _ = load_model(out / "best")
        test_metrics = evaluate(test, best_model, config, best_epoch, "test")
        _write_rows(metrics_path, test_metrics.rows())
    return RunResult(best_epoch, best_dev, test_metrics, out)

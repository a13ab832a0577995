"""The extraction policy.

A shared Bi-LSTM environment encoder feeds three heads: a Q-learning BIO
sequence labeler, a policy-gradient trigger classifier and a policy-gradient
argument-role classifier. All heads act epsilon-greedily during training.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import numerics as F
from .config import TrainConfig
from .data import NONE, TRIGGER, EventSchema, Sentence, Vocab, bio_decode, bio_encode, bio_label_set
from .nn import DropoutPolicy, EmbeddingTable, FeedForward, LstmCell, bilstm_forward, embed_tokens, ff_forward
from .numerics import Parameter, Tensor

START = "<START>"


# --------------------------------------------------------------------------
# exploration


class ExplorationPolicy:
    """Epsilon-greedy action selection with a private random stream."""

    def __init__(self, epsilon: float, rng: np.random.Generator):
        if not 0.0 <= epsilon < 1.0:
            raise ValueError(f"epsilon must be in [0, 1), got {epsilon}")
        self.epsilon = epsilon
        self.rng = rng
        self.greedy = 0
        self.random = 0

    @property
    def explore_fraction(self) -> float:
        total = self.greedy + self.random
        return self.random / total if total else 0.0

    def reset_counters(self) -> None:
        self.greedy = self.random = 0


def argmax(scores: np.ndarray, mask: np.ndarray | None = None) -> int:
    """Index of the largest allowed score; ties go to the lowest index."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if mask is not None:
        scores = np.where(mask, scores, -np.inf)
    return int(np.argmax(scores))


def epsilon_greedy(scores, explore: ExplorationPolicy | None, mask=None) -> tuple[int, bool]:
    """Return (action, explored). ``explore=None`` means pure argmax."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if scores.size == 0:
        raise ValueError("epsilon-greedy: empty score vector")
    allowed = np.ones(scores.size, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(-1)
    if not allowed.any():
        raise ValueError("epsilon-greedy: every action is masked")
    if explore is None:
        return argmax(scores, allowed), False
    rho = explore.rng.random()
    if rho >= explore.epsilon:
        explore.greedy += 1
        return argmax(scores, allowed), False
    explore.random += 1
    choices = np.flatnonzero(allowed)
    return int(choices[explore.rng.integers(choices.size)]), True


# --------------------------------------------------------------------------
# trajectories


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float | None = None
    terminal: bool = False
    explored: bool = False
    q: np.ndarray | None = None


@dataclass
class Trajectory:
    transitions: list[Transition] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.transitions)

    def __iter__(self):
        return iter(self.transitions)

    def __getitem__(self, k):
        return self.transitions[k]

    @property
    def actions(self) -> list[int]:
        return [t.action for t in self.transitions]

    def set_rewards(self, rewards: Sequence[float]) -> None:
        if len(rewards) != len(self.transitions):
            raise ValueError(f"{len(rewards)} rewards for {len(self.transitions)} transitions")
        for t, r in zip(self.transitions, rewards):
            t.reward = float(r)


# --------------------------------------------------------------------------
# model components


class EnvironmentEncoder:
    def __init__(self, vocab: Vocab, config: TrainConfig, rng: np.random.Generator,
                 pretrained: EmbeddingTable | None = None):
        if pretrained is None:
            pretrained = EmbeddingTable([], config.dim_pretrained, trainable=False, name="pretrained")
        if pretrained.dim != config.dim_pretrained:
            raise ValueError(f"pretrained table has dim {pretrained.dim}, config expects {config.dim_pretrained}")
        self.tables = {
            "surface": EmbeddingTable(vocab.surface, config.dim_surface, rng, name="encoder.surface"),
            "pos": EmbeddingTable(vocab.pos, config.dim_pos, rng, oov=False, name="encoder.pos"),
            "pretrained": pretrained,
        }
        in_dim = config.dim_surface + config.dim_pos + config.dim_pretrained
        self.fwd = LstmCell(in_dim, config.hidden, rng, "encoder.fwd")
        self.bwd = LstmCell(in_dim, config.hidden, rng, "encoder.bwd")
        self.dropout = DropoutPolicy(config.dropout)

    @property
    def width(self) -> int:
        return 2 * self.fwd.hidden_dim

    def parameters(self) -> list[Parameter]:
        return (self.tables["surface"].parameters() + self.tables["pos"].parameters()
                + self.fwd.parameters() + self.bwd.parameters())


def encode_environment(encoder: EnvironmentEncoder, sentence: Sentence, mode: str = "eval",
                       rng: np.random.Generator | None = None) -> Tensor:
    """Per-token environment embeddings, shape (n, 2 * hidden)."""
    x = embed_tokens(sentence, encoder.tables, encoder.dropout, mode, rng)
    return bilstm_forward(encoder.fwd, encoder.bwd, x)


class SequenceLabelerHead:
    """State LSTM over (environment row, previous action) followed by a Q network."""

    def __init__(self, labels: Sequence[str], env_width: int, config: TrainConfig, rng: np.random.Generator):
        self.labels = list(labels)
        self.env_width = env_width
        self.actions = EmbeddingTable(self.labels + [START], config.dim_action, rng, oov=False,
                                      name="seq.action")
        self.start_id = len(self.labels)
        self.cell = LstmCell(env_width + config.dim_action, config.hidden, rng, "seq.lstm")
        self.q = FeedForward([config.hidden, config.hidden, len(self.labels)], rng, "none", "seq.q")

    def parameters(self) -> list[Parameter]:
        return self.actions.parameters() + self.cell.parameters() + self.q.parameters()


def label_sequence(head: SequenceLabelerHead, env: Tensor, explore: ExplorationPolicy | None = None,
                   mode: str = "eval") -> tuple[list[int], Tensor, Trajectory]:
    """Label tokens left to right; returns (actions, Q values (n, |labels|), trajectory).

    In eval mode (or with ``explore=None``) actions are pure argmax. When a tape
    is recording, the returned Q values are rebuilt on it from the committed
    actions so gradients reach the head and the encoder.
    """
    if mode == "eval":
        explore = None
    n = env.shape[0]
    H = head.cell.hidden_dim
    w_x = head.cell.w_x.value
    env_proj = env.value @ w_x[: head.env_width] + head.cell.b.value
    act_proj = head.actions.weight.value @ w_x[head.env_width :]
    w_h = head.cell.w_h.value
    h, c = np.zeros(H), np.zeros(H)
    prev = head.start_id
    actions, rows = [], []
    traj = Trajectory()
    with F.no_tape():
        for t in range(n):
            z = env_proj[t] + act_proj[prev] + h @ w_h
            *_, c, _, h = F._lstm_gates(z, c, H)
            q_row = ff_forward(head.q, Tensor(h[None, :])).value[0]
            a, explored = epsilon_greedy(q_row, explore)
            actions.append(a)
            rows.append(q_row)
            traj.transitions.append(Transition(env.value[t], a, None, t == n - 1, explored, q_row))
            prev = a
    q_values = sequence_q_values(head, env, actions) if F.recording() else Tensor(np.array(rows))
    return actions, q_values, traj


def sequence_q_values(head: SequenceLabelerHead, env: Tensor, actions: Sequence[int]) -> Tensor:
    """Q values along a committed action sequence, built with the differentiable ops."""
    prev_ids = [head.start_id] + list(actions[:-1])
    x = F.concat([env, head.actions.lookup(prev_ids)], axis=1)
    hs = F.lstm_recurrence(head.cell.project(x), head.cell.w_h, head.cell.zeros(), head.cell.zeros())
    return ff_forward(head.q, hs)


def q_targets(trajectory: Trajectory, gamma: float) -> np.ndarray:
    """Bellman targets r_t + gamma * max_a Q(s_{t+1}, a); the terminal step keeps r_n."""
    out = np.empty(len(trajectory))
    for t, tr in enumerate(trajectory):
        if tr.reward is None:
            raise ValueError(f"q_targets: transition {t} has no reward")
        out[t] = tr.reward
        if not tr.terminal:
            nxt = trajectory[t + 1].q
            if nxt is None:
                raise ValueError(f"q_targets: transition {t + 1} carries no Q values")
            out[t] += gamma * float(np.max(nxt))
    return out


def q_update_loss(q_values: Tensor, actions: Sequence[int], targets) -> Tensor:
    """Mean squared error between chosen-action Q values and constant targets."""
    n = len(actions)
    targets = np.asarray(targets, dtype=np.float64)
    if q_values.shape[0] != n or targets.shape != (n,):
        raise ValueError(f"q loss: {q_values.shape[0]} Q rows, {n} actions, {targets.shape} targets")
    diff = F.sub(F.pick(q_values, np.arange(n), actions), Tensor(targets))
    return F.mean(F.mul(diff, diff))


class TriggerHead:
    def __init__(self, event_types: Sequence[str], env_width: int, config: TrainConfig, rng: np.random.Generator):
        self.actions = list(event_types) + [NONE]
        self.none_id = len(self.actions) - 1
        self.ff = FeedForward([env_width, config.hidden, len(self.actions)], rng, "softmax", "trigger.ff")

    def parameters(self) -> list[Parameter]:
        return self.ff.parameters()


def classify_trigger(head: TriggerHead, env: Tensor, t_tr: int, explore: ExplorationPolicy | None = None,
                     mode: str = "eval") -> tuple[Tensor, int, Trajectory]:
    """Distribution over event types plus None for the token at ``t_tr``."""
    if not 0 <= t_tr < env.shape[0]:
        raise ValueError(f"trigger position {t_tr} out of range for {env.shape[0]} tokens")
    state = F.index(env, (slice(t_tr, t_tr + 1), slice(None)))
    dist = ff_forward(head.ff, state)
    a, explored = epsilon_greedy(dist.value[0], None if mode == "eval" else explore)
    return dist, a, Trajectory([Transition(state.value[0], a, None, True, explored)])


def argument_state_width(env_width: int, n_labels: int, n_deps: int) -> int:
    return 2 * env_width + n_labels + n_deps + 1


def dependency_label(deps, t_tr: int, t_ar: int) -> str | None:
    """Label of a direct edge between the two tokens in either direction."""
    for d in deps:
        if (d.head == t_tr and d.dep == t_ar) or (d.head == t_ar and d.dep == t_tr):
            return d.label
    return None


def build_argument_state(env: Tensor, t_tr: int, t_ar: int, bio_action: int, deps, n_labels: int,
                         dep_labels: Sequence[str]) -> Tensor:
    """[env(trigger), env(candidate), one-hot BIO action, one-hot dependency (+none bucket)]."""
    n = env.shape[0]
    if not (0 <= t_tr < n and 0 <= t_ar < n):
        raise ValueError(f"argument state: positions ({t_tr}, {t_ar}) out of range for {n} tokens")
    onehot = np.zeros((1, n_labels + len(dep_labels) + 1))
    onehot[0, bio_action] = 1.0
    label = dependency_label(deps, t_tr, t_ar)
    dep_index = list(dep_labels).index(label) if label in dep_labels else len(dep_labels)
    onehot[0, n_labels + dep_index] = 1.0
    return F.concat([
        F.index(env, (slice(t_tr, t_tr + 1), slice(None))),
        F.index(env, (slice(t_ar, t_ar + 1), slice(None))),
        Tensor(onehot),
    ], axis=1)


class ArgumentHead:
    def __init__(self, roles: Sequence[str], state_width: int, config: TrainConfig, rng: np.random.Generator):
        self.actions = list(roles) + [NONE]
        self.none_id = len(self.actions) - 1
        self.ff = FeedForward([state_width, config.hidden, len(self.actions)], rng, "softmax", "argument.ff")

    def parameters(self) -> list[Parameter]:
        return self.ff.parameters()


def role_mask(schema: EventSchema, event_type: str, entity_type: str) -> np.ndarray:
    """Allowed roles for a candidate of ``entity_type``; None is always allowed."""
    mask = np.array([schema.role_allowed(event_type, r, entity_type) for r in schema.roles] + [True])
    return mask


def classify_argument(head: ArgumentHead, s_ar: Tensor, event_type: str, entity_type: str, schema: EventSchema,
                      explore: ExplorationPolicy | None = None, mode: str = "eval") -> tuple[Tensor, int, Trajectory]:
    if event_type == NONE or event_type not in schema.event_types:
        raise ValueError(f"cannot classify arguments for event type {event_type!r}")
    mask = role_mask(schema, event_type, entity_type)
    dist = ff_forward(head.ff, s_ar, mask=mask[None, :])
    a, explored = epsilon_greedy(dist.value[0], None if mode == "eval" else explore, mask)
    return dist, a, Trajectory([Transition(s_ar.value[0], a, None, True, explored)])


def _entropy_bonus(dist: Tensor, loss: Tensor, weight: float) -> Tensor:
    if weight <= 0.0:
        return loss
    neg_entropy = F.sum(F.mul(dist, F.log(F.add_scalar(dist, 1e-12))))
    return F.add(loss, F.scalar_mul(neg_entropy, float(weight)))


def pg_loss(dist: Tensor, action: int, reward: float, entropy_weight: float = 0.0) -> Tensor:
    """-log P(action | s) * reward for a single-step episode, minus an entropy bonus."""
    p = F.pick(dist, [0], [action])
    if p.value[0] <= 0.0:
        raise ValueError(f"policy gradient: chosen action {action} has probability 0")
    return _entropy_bonus(dist, F.scalar_mul(F.sum(F.log(p)), -float(reward)), entropy_weight)


def expected_pg_loss(dist: Tensor, rewards, entropy_weight: float = 0.0) -> Tensor:
    """-sum_a P(a | s) * R(s, a): the exact policy gradient of a one-step episode.

    Usable whenever the reward of every action is known, which holds for both
    the fixed rule and the per-action discriminator outputs.
    """
    rewards = np.asarray(rewards, dtype=np.float64).reshape(1, -1)
    if rewards.shape[1] != dist.shape[1]:
        raise ValueError(f"expected policy gradient: {rewards.shape[1]} rewards for {dist.shape[1]} actions")
    value = F.sum(F.mul(dist, Tensor(rewards)))
    return _entropy_bonus(dist, F.scalar_mul(value, -1.0), entropy_weight)


def behavior_pg_loss(dist: Tensor, rewards, behavior, entropy_weight: float = 0.0) -> Tensor:
    """-sum_a b(a) * R(s, a) * log P(a | s): ``pg_loss`` averaged over the behavior policy ``b``.

    Unlike ``expected_pg_loss`` the push on an action does not shrink with its
    probability, so a confidently wrong policy still moves toward a better action.
    """
    rewards = np.asarray(rewards, dtype=np.float64).reshape(1, -1)
    behavior = np.asarray(behavior, dtype=np.float64).reshape(1, -1)
    if rewards.shape[1] != dist.shape[1] or behavior.shape[1] != dist.shape[1]:
        raise ValueError(f"behavior policy gradient: expected {dist.shape[1]} rewards and behavior weights")
    if np.any((behavior > 0) & (dist.value <= 0)):
        raise ValueError("behavior policy gradient: behavior puts mass on an action with probability 0")
    idx = np.flatnonzero(behavior[0] > 0)
    log_p = F.log(F.pick(dist, np.zeros_like(idx), idx))
    value = F.sum(F.mul(log_p, Tensor(behavior[0, idx] * rewards[0, idx])))
    return _entropy_bonus(dist, F.scalar_mul(value, -1.0), entropy_weight)


def boltzmann_targets(rewards, temperature: float, mask=None) -> np.ndarray:
    """softmax(R / temperature) over allowed actions; temperature 0 gives the argmax one-hot."""
    rewards = np.asarray(rewards, dtype=np.float64).reshape(-1)
    allowed = np.ones(rewards.size, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(-1)
    if temperature <= 0.0:
        q = np.zeros(rewards.size)
        q[argmax(rewards, allowed)] = 1.0
        return q
    z = np.where(allowed, rewards / temperature, -np.inf)
    q = np.exp(z - z.max())
    return q / q.sum()


def boltzmann_pg_loss(dist: Tensor, rewards, temperature: float, mask=None) -> Tensor:
    """Cross-entropy from softmax(R / temperature) to the policy.

    Same optimum as ``expected_pg_loss`` with entropy weight ``temperature``,
    but the gradient on an under-weighted good action does not vanish.
    """
    rewards = np.asarray(rewards, dtype=np.float64).reshape(-1)
    if rewards.size != dist.shape[1]:
        raise ValueError(f"boltzmann policy gradient: {rewards.size} rewards for {dist.shape[1]} actions")
    q = boltzmann_targets(rewards, temperature, mask)
    idx = np.flatnonzero(q > 0)
    if np.any(dist.value[0, idx] <= 0):
        raise ValueError("boltzmann policy gradient: target puts mass on an action with probability 0")
    log_p = F.log(F.pick(dist, np.zeros_like(idx), idx))
    return F.scalar_mul(F.sum(F.mul(log_p, Tensor(q[idx]))), -1.0)


# --------------------------------------------------------------------------
# the bundle


class ExtractedEvent(NamedTuple):
    trigger: tuple[int, int]
    type: str
    args: tuple[tuple[tuple[int, int, str], str], ...] = ()


class EventExtractorModel:
    """Encoder plus the three heads, with a fixed parameter order."""

    def __init__(self, schema: EventSchema, vocab: Vocab, config: TrainConfig,
                 pretrained: EmbeddingTable | None = None):
        rng = np.random.default_rng(config.seed)
        self.schema = schema
        self.vocab = vocab
        self.config = config
        self.labels = bio_label_set(schema, config.labeling_schema)
        self.label_index = {lab: k for k, lab in enumerate(self.labels)}
        self.dep_labels = list(vocab.deps)
        self.encoder = EnvironmentEncoder(vocab, config, rng, pretrained)
        width = self.encoder.width
        self.seq_head = SequenceLabelerHead(self.labels, width, config, rng)
        self.trigger_head = TriggerHead(schema.event_types, width, config, rng)
        self.arg_width = argument_state_width(width, len(self.labels), len(self.dep_labels))
        self.argument_head = ArgumentHead(schema.roles, self.arg_width, config, rng)

    def parameters(self) -> list[Parameter]:
        return (self.encoder.parameters() + self.seq_head.parameters() + self.trigger_head.parameters()
                + self.argument_head.parameters())

    def named_tensors(self) -> dict[str, Tensor]:
        out = {p.name: p for p in self.parameters()}
        out["frozen/pretrained"] = self.encoder.tables["pretrained"].weight
        return out

    def load_tensors(self, values: dict[str, np.ndarray]) -> None:
        for name, t in self.named_tensors().items():
            if name not in values:
                raise ValueError(f"checkpoint lacks {name}")
            if values[name].shape != t.shape:
                raise ValueError(f"checkpoint {name} has shape {values[name].shape}, model expects {t.shape}")
            t.value[...] = values[name]

    def gold_labels(self, sentence: Sentence) -> list[int]:
        return [self.label_index[lab] for lab in bio_encode(sentence, self.config.labeling_schema)]

    def argument_state(self, env: Tensor, sentence: Sentence, t_tr: int, t_ar: int, bio_action: int) -> Tensor:
        return build_argument_state(env, t_tr, t_ar, bio_action, sentence.deps, len(self.labels), self.dep_labels)


def extract_events(model: EventExtractorModel, sentence: Sentence, mode: str = "gold_entities") -> list[ExtractedEvent]:
    """Greedy pipeline: BIO labels, then trigger types, then roles for each candidate."""
    if mode not in ("gold_entities", "predicted_entities"):
        raise ValueError(f"unknown entity mode {mode!r}")
    schema = model.schema
    with F.no_tape():
        env = encode_environment(model.encoder, sentence, "eval")
        actions, _, _ = label_sequence(model.seq_head, env)
        spans = bio_decode([model.labels[a] for a in actions])
        triggers = [(s, e) for s, e, k in spans if k == TRIGGER]
        if mode == "gold_entities":
            gold = model.gold_labels(sentence)
            candidates = [(e.start, e.end, e.type) for e in sentence.entities]
            cand_bio = [gold[s] for s, _, _ in candidates]
        else:
            candidates = [(s, e, k) for s, e, k in spans if k != TRIGGER]
            cand_bio = [actions[s] for s, _, _ in candidates]
        events = []
        for s, e in triggers:
            _, a, _ = classify_trigger(model.trigger_head, env, s)
            if a == model.trigger_head.none_id:
                continue
            etype = schema.event_types[a]
            args = []
            for cand, bio in zip(candidates, cand_bio):
                s_ar = model.argument_state(env, sentence, s, cand[0], bio)
                _, r, _ = classify_argument(model.argument_head, s_ar, etype, cand[2], schema)
                if r != model.argument_head.none_id:
                    args.append((cand, schema.roles[r]))
            events.append(ExtractedEvent((s, e), etype, tuple(args)))
    return events

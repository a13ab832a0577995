"""Reward providers: fixed +/-c rewards and adversarially trained discriminators.

A discriminator maps a state to one sigmoid unit per action, read as the
probability that (state, action) came from the expert (the gold annotation).
Its reward is ``2 * D - 1``, which lies in (-1, 1).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import numerics as F
from .nn import FeedForward, ff_forward
from .numerics import Parameter, Tensor

# keeps 2 * D - 1 strictly inside (-1, 1) once the sigmoid saturates in float64
_D_EPS = 1e-12


@dataclass(frozen=True)
class FixedRewardProvider:
    c_correct: float = 1.0
    c_wrong: float = -1.0

    def __post_init__(self):
        if not self.c_correct > self.c_wrong:
            raise ValueError("fixed rewards need c_correct > c_wrong")

    def reward(self, action: int, gold_action: int) -> float:
        return self.c_correct if action == gold_action else self.c_wrong


def fixed_reward(action: int, gold_action: int, c_correct: float = 1.0, c_wrong: float = -1.0) -> float:
    return FixedRewardProvider(c_correct, c_wrong).reward(action, gold_action)


class Discriminator:
    """Feed-forward scorer with one sigmoid output per action.

    Inputs are standardized with running statistics (``in_mean``,
    ``in_scale``) refreshed by :meth:`observe`; they start as the identity.
    Statistics are a plain running average until ``1 / momentum`` rows have
    been seen and an exponential moving average afterwards, so batches of a
    single row are handled.
    """

    def __init__(self, state_width: int, n_actions: int, hidden: int, rng: np.random.Generator, name: str = "disc",
                 momentum: float = 0.1, scale_floor: float = 0.01):
        self.name = name
        self.state_width = state_width
        self.n_actions = n_actions
        self.ff = FeedForward([state_width, hidden, n_actions], rng, "sigmoid", name)
        self.in_mean = Tensor(np.zeros((1, state_width)))
        self.in_scale = Tensor(np.ones((1, state_width)))
        self.momentum = momentum
        self.scale_floor = scale_floor
        self.rows_seen = 0

    def parameters(self) -> list[Parameter]:
        return self.ff.parameters()

    def statistics(self) -> dict[str, Tensor]:
        return {f"{self.name}.in_mean": self.in_mean, f"{self.name}.in_scale": self.in_scale}

    def observe(self, states: np.ndarray) -> None:
        """Move the input mean and variance toward those of ``states``."""
        x = np.asarray(states, dtype=np.float64).reshape(-1, self.state_width)
        if len(x) == 0:
            return
        w = max(self.momentum, len(x) / (self.rows_seen + len(x)))
        self.rows_seen += len(x)
        old_mean = self.in_mean.value
        old_var = 0.0 if w == 1.0 else (self.in_scale.value - self.scale_floor) ** 2
        mean = (1 - w) * old_mean + w * x.mean(0, keepdims=True)
        # pooled second moment about the new mean
        var = (1 - w) * (old_var + (old_mean - mean) ** 2) + w * ((x - mean) ** 2).mean(0, keepdims=True)
        self.in_mean.value[...] = mean
        self.in_scale.value[...] = np.sqrt(var) + self.scale_floor


def _states(disc: Discriminator, states) -> Tensor:
    x = np.asarray(states.value if isinstance(states, Tensor) else states, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != disc.state_width:
        raise ValueError(f"{disc.name}: state width {x.shape[1]} != {disc.state_width}")
    return Tensor((x - disc.in_mean.value) / disc.in_scale.value)


def discriminator_forward(disc: Discriminator, state) -> np.ndarray:
    """D values, one column per action; rows follow the input rows."""
    with F.no_tape():
        d = ff_forward(disc.ff, _states(disc, state)).value
    return np.clip(d, _D_EPS, 1.0 - _D_EPS)


def gail_reward(disc: Discriminator, state, action: int) -> float:
    return float(2.0 * discriminator_forward(disc, state)[0, action] - 1.0)


def gail_rewards(disc: Discriminator, states, actions: Sequence[int]) -> np.ndarray:
    """Vectorised ``gail_reward`` over the rows of ``states``."""
    d = discriminator_forward(disc, states)
    return 2.0 * d[np.arange(len(actions)), np.asarray(actions, dtype=np.intp)] - 1.0


def policy_entropy(distributions: Iterable[np.ndarray]) -> float:
    """Mean entropy of the agent's action distributions (zeros contribute 0)."""
    values = []
    for p in distributions:
        p = np.asarray(p, dtype=np.float64).reshape(-1)
        nz = p[p > 0]
        values.append(float(-(nz * np.log(nz)).sum()))
    return float(np.mean(values)) if values else 0.0


def discriminator_loss(disc: Discriminator, expert_states, expert_actions, agent_states=None, agent_actions=None,
                       entropy_weight: float = 0.0, agent_distributions=None, expert_weights=None,
                       agent_weights=None, per_action: bool = False) -> Tensor:
    """-[mean log D(expert) + mean log(1 - D(agent))] - entropy_weight * H(agent policy).

    ``agent_weights`` (rows x actions, rows aligned with the expert rows)
    replaces ``agent_actions`` with a weighted mean over every (state, action)
    cell, so the agent term can average over a whole action distribution.
    ``expert_weights`` weights the expert rows. With ``per_action`` each action
    output gets its own expert and agent means and the loss averages over the
    actions that carry any weight. The entropy term does not depend on the
    discriminator, so it shifts the value without changing the gradient.
    """
    expert_actions = np.asarray(expert_actions, dtype=np.intp).reshape(-1)
    if expert_actions.size == 0:
        raise ValueError(f"{disc.name}: empty expert batch")
    n = expert_actions.size
    xs = _states(disc, expert_states)
    logits = ff_forward(disc.ff, xs, activate=False)
    we = np.ones(n) if expert_weights is None else np.asarray(expert_weights, dtype=np.float64).reshape(-1)
    if agent_weights is not None:
        agent_weights = np.asarray(agent_weights, dtype=np.float64)
        if agent_weights.shape != (n, disc.n_actions):
            raise ValueError(f"{disc.name}: agent weights {agent_weights.shape} != {(n, disc.n_actions)}")

    if per_action:
        e = np.zeros((n, disc.n_actions))
        e[np.arange(n), expert_actions] = we
        a = np.zeros_like(e) if agent_weights is None else agent_weights.copy()
        if agent_weights is None and agent_actions is not None and len(agent_actions):
            raise ValueError(f"{disc.name}: per-action balancing needs agent_weights")
        e_tot, a_tot = e.sum(0), a.sum(0)
        active = int(((e_tot > 0) | (a_tot > 0)).sum())
        e = np.divide(e, e_tot, out=np.zeros_like(e), where=e_tot > 0) / active
        a = np.divide(a, a_tot, out=np.zeros_like(a), where=a_tot > 0) / active
        loss = F.add(F.sum(F.mul(F.log_sigmoid(logits), Tensor(e))),
                     F.sum(F.mul(F.log_sigmoid(F.scalar_mul(logits, -1.0)), Tensor(a))))
        loss = F.scalar_mul(loss, -1.0)
    else:
        picked = F.log_sigmoid(F.pick(logits, np.arange(n), expert_actions))
        loss = F.scalar_mul(F.sum(F.mul(picked, Tensor(we / we.sum()))), -1.0)
        if agent_weights is not None:
            if agent_weights.sum() > 0:
                # log(1 - sigmoid(z)) == log_sigmoid(-z)
                cells = F.log_sigmoid(F.scalar_mul(logits, -1.0))
                loss = F.sub(loss, F.sum(F.mul(cells, Tensor(agent_weights / agent_weights.sum()))))
        elif agent_actions is not None and len(agent_actions):
            agent_actions = np.asarray(agent_actions, dtype=np.intp).reshape(-1)
            logits_a = ff_forward(disc.ff, _states(disc, agent_states), activate=False)
            picked_a = F.pick(logits_a, np.arange(agent_actions.size), agent_actions)
            loss = F.sub(loss, F.mean(F.log_sigmoid(F.scalar_mul(picked_a, -1.0))))
    if entropy_weight and agent_distributions is not None:
        loss = F.add_scalar(loss, -entropy_weight * policy_entropy(agent_distributions))
    return loss


def behavior_distribution(scores, epsilon: float, mask=None) -> np.ndarray:
    """Action probabilities of epsilon-greedy selection over ``scores``."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    allowed = np.ones(scores.size, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(-1)
    p = np.where(allowed, epsilon / allowed.sum(), 0.0)
    p[int(np.argmax(np.where(allowed, scores, -np.inf)))] += 1.0 - epsilon
    return p


class SampleBuffer:
    """Expert and agent samples for one discriminator, one row per visited state.

    Each row holds the expert (gold) action with a weight and an agent weight
    per action. The agent's probability mass on the gold action counts on the
    expert side, since those choices are indistinguishable from the expert.
    """

    def __init__(self):
        self.states: list[np.ndarray] = []
        self.gold: list[int] = []
        self.expert_weights: list[float] = []
        self.agent_weights: list[np.ndarray] = []
        self.distributions: list[np.ndarray] = []

    def add(self, state, agent_action: int, gold_action: int, n_actions: int, behavior=None,
            distribution=None) -> None:
        """Record one state.

        ``behavior`` is the agent's action distribution at ``state``; without it
        the sampled ``agent_action`` stands in as a one-hot distribution.
        ``distribution`` (the policy output) only feeds the entropy term.
        """
        if behavior is None:
            behavior = np.zeros(n_actions)
            behavior[agent_action] = 1.0
        agent = np.array(behavior, dtype=np.float64).reshape(-1)
        if agent.size != n_actions:
            raise ValueError(f"behavior distribution has {agent.size} entries, expected {n_actions}")
        self.states.append(np.array(state, dtype=np.float64).reshape(-1))
        self.gold.append(int(gold_action))
        self.expert_weights.append(1.0 + float(agent[gold_action]))
        agent[gold_action] = 0.0
        self.agent_weights.append(agent)
        if distribution is not None:
            self.distributions.append(np.array(distribution, dtype=np.float64).reshape(-1))

    def __len__(self) -> int:
        return len(self.states)

    def clear(self) -> None:
        for lst in (self.states, self.gold, self.expert_weights, self.agent_weights, self.distributions):
            lst.clear()

    def loss(self, disc: Discriminator, entropy_weight: float = 0.0, per_action: bool = True) -> Tensor:
        return discriminator_loss(disc, np.array(self.states), self.gold, entropy_weight=entropy_weight,
                                  agent_distributions=self.distributions or None,
                                  expert_weights=self.expert_weights, agent_weights=np.array(self.agent_weights),
                                  per_action=per_action)


class DiscriminatorBank:
    """One sequence-labeling, one trigger and one argument discriminator per event type."""

    def __init__(self, event_types: Sequence[str], seq_width: int, n_labels: int, trigger_width: int,
                 n_trigger_actions: int, arg_width: int, n_role_actions: int, hidden: int,
                 rng: np.random.Generator):
        self.event_types = list(event_types)
        self.seq = Discriminator(seq_width, n_labels, hidden, rng, "disc/seq")
        self.trigger = Discriminator(trigger_width, n_trigger_actions, hidden, rng, "disc/trigger")
        self.argument = [
            Discriminator(arg_width, n_role_actions, hidden, rng, f"disc/argument/{k:02d}")
            for k in range(len(self.event_types))
        ]

    def all(self) -> list[Discriminator]:
        return [self.seq, self.trigger] + self.argument

    def parameters(self) -> list[Parameter]:
        return [p for d in self.all() for p in d.parameters()]

    def named_tensors(self) -> dict[str, Tensor]:
        out = {p.name: p for p in self.parameters()}
        for d in self.all():
            out.update(d.statistics())
        return out

    def new_buffers(self) -> dict:
        return {"seq": SampleBuffer(), "trigger": SampleBuffer(),
                "argument": {ev: SampleBuffer() for ev in self.event_types}}


def select_argument_discriminator(bank: DiscriminatorBank, event_type: str) -> Discriminator:
    try:
        return bank.argument[bank.event_types.index(event_type)]
    except ValueError:
        raise ValueError(f"no argument discriminator for event type {event_type!r}") from None


def update_discriminators(bank: DiscriminatorBank, buffers: dict, lr: float = 0.001, entropy_weight: float = 0.0,
                          policy_params: Sequence[Parameter] = ()) -> dict[str, float]:
    """One Adam step for every discriminator whose buffer has expert samples.

    Returns the pre-step loss per discriminator name. ``policy_params`` are
    checked afterwards to still hold all-zero gradients.
    """
    jobs = [(bank.seq, buffers["seq"]), (bank.trigger, buffers["trigger"])]
    jobs += [(select_argument_discriminator(bank, ev), buf) for ev, buf in buffers["argument"].items()]
    losses = {}
    for disc, buf in jobs:
        if not len(buf):
            continue
        params = disc.parameters()
        disc.observe(np.array(buf.states))
        F.zero_grad(params)
        with F.Tape() as tape:
            loss = buf.loss(disc, entropy_weight)
        F.backward(tape, loss)
        F.adam_step(params, lr)
        F.zero_grad(params)
        losses[disc.name] = float(loss.value)
    for p in policy_params:
        if p.grad.any():
            raise AssertionError(f"discriminator update touched policy parameter {p.name}")
    return losses

"""Embedding tables, LSTM cells and feed-forward stacks built on :mod:`gailee.numerics`."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import numerics as F
from .numerics import Parameter, Tensor

INIT_SCALE = 0.08
OOV = "<OOV>"


def uniform_init(rng: np.random.Generator, shape, scale: float = INIT_SCALE) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape)


class EmbeddingTable:
    """Symbol-to-row lookup.

    Trainable tables reserve ``OOV`` as row 0. Frozen (pretrained) tables keep
    row 0 as an all-zero vector which unknown symbols map to.
    """

    def __init__(self, symbols: Sequence[str], dim: int, rng=None, trainable: bool = True,
                 weight: np.ndarray | None = None, name: str = "embedding", oov: bool = True):
        if dim <= 0:
            raise ValueError(f"{name}: dimension must be positive, got {dim}")
        symbols = list(symbols)
        self.has_oov = oov or not trainable
        if self.has_oov:
            symbols = [OOV] + [s for s in symbols if s != OOV]
        self.index = {s: k for k, s in enumerate(symbols)}
        if len(self.index) != len(symbols):
            raise ValueError(f"{name}: duplicate symbols")
        self.symbols = symbols
        self.dim = dim
        self.trainable = trainable
        self.name = name
        if weight is None:
            if trainable:
                weight = uniform_init(rng, (len(symbols), dim))
            else:
                weight = np.zeros((len(symbols), dim))
        weight = np.asarray(weight, dtype=np.float64)
        if weight.shape != (len(symbols), dim):
            raise ValueError(f"{name}: weight shape {weight.shape} != ({len(symbols)}, {dim})")
        if not trainable:
            weight = weight.copy()
            weight[0] = 0.0
        self.weight = Parameter(weight, name) if trainable else Tensor(weight)

    @property
    def oov_id(self) -> int | None:
        return 0 if self.has_oov else None

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self.index and (not self.has_oov or self.index[symbol] != 0)

    def ids(self, symbols: Sequence[str]) -> np.ndarray:
        if self.has_oov:
            return np.fromiter((self.index.get(s, 0) for s in symbols), dtype=np.intp, count=len(symbols))
        try:
            return np.fromiter((self.index[s] for s in symbols), dtype=np.intp, count=len(symbols))
        except KeyError as exc:
            raise ValueError(f"{self.name}: unknown symbol {exc.args[0]!r} in a closed vocabulary") from None

    def lookup(self, ids) -> Tensor:
        return F.gather_rows(self.weight, ids)

    def vector(self, symbol: str) -> np.ndarray:
        return self.weight.value[self.index.get(symbol, 0) if self.has_oov else self.index[symbol]]

    def parameters(self) -> list[Parameter]:
        return [self.weight] if self.trainable else []


@dataclass(frozen=True)
class DropoutPolicy:
    """Input dropout: OOV-masking of surfaces and zeroing of pretrained vectors."""

    rate: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Independent (oov_mask, zero_mask) coin flips for ``n`` tokens."""
        if self.rate == 0.0:
            none = np.zeros(n, dtype=bool)
            return none, none.copy()
        return rng.random(n) < self.rate, rng.random(n) < self.rate


def embed_tokens(sentence, tables: Mapping[str, EmbeddingTable], dropout: DropoutPolicy,
                 mode: str = "eval", rng: np.random.Generator | None = None) -> Tensor:
    """Concatenate surface, POS and pretrained embeddings per token.

    ``tables`` needs the keys ``surface``, ``pos`` and ``pretrained``. POS rows
    are never dropped.
    """
    tokens = sentence.tokens
    if not tokens:
        raise ValueError(f"sentence {sentence.id!r} is empty")
    surfaces = [tok.surface for tok in tokens]
    surface_ids = tables["surface"].ids(surfaces)
    pre_ids = tables["pretrained"].ids(surfaces)
    pos_ids = tables["pos"].ids([tok.pos for tok in tokens])
    if mode == "train":
        oov_mask, zero_mask = dropout.sample(len(tokens), rng)
        surface_ids = np.where(oov_mask, tables["surface"].oov_id, surface_ids)
        pre_ids = np.where(zero_mask, 0, pre_ids)
    elif mode != "eval":
        raise ValueError(f"unknown mode {mode!r}")
    return F.concat(
        [tables["surface"].lookup(surface_ids), tables["pos"].lookup(pos_ids), tables["pretrained"].lookup(pre_ids)],
        axis=1,
    )


class LstmCell:
    """Single LSTM layer; gate order input, forget, output, candidate."""

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator, name: str = "lstm"):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.w_x = Parameter(uniform_init(rng, (input_dim, 4 * hidden_dim)), f"{name}.w_x")
        self.w_h = Parameter(uniform_init(rng, (hidden_dim, 4 * hidden_dim)), f"{name}.w_h")
        bias = np.zeros((1, 4 * hidden_dim))
        bias[0, hidden_dim : 2 * hidden_dim] = 1.0
        self.b = Parameter(bias, f"{name}.b")

    def parameters(self) -> list[Parameter]:
        return [self.w_x, self.w_h, self.b]

    def zeros(self) -> Tensor:
        return Tensor(np.zeros((1, self.hidden_dim)))

    def project(self, inputs: Tensor) -> Tensor:
        if inputs.value.ndim != 2 or inputs.shape[1] != self.input_dim:
            raise ValueError(f"lstm: input shape {inputs.shape} does not match input_dim {self.input_dim}")
        return F.add(F.matmul(inputs, self.w_x), self.b)


def lstm_step(cell: LstmCell, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
    """One recurrence step from elementary primitives (reference for the fused path)."""
    H = cell.hidden_dim
    z = F.add(F.add(F.matmul(x, cell.w_x), F.matmul(h, cell.w_h)), cell.b)
    i = F.sigmoid(F.index(z, (slice(None), slice(0, H))))
    f = F.sigmoid(F.index(z, (slice(None), slice(H, 2 * H))))
    o = F.sigmoid(F.index(z, (slice(None), slice(2 * H, 3 * H))))
    g = F.tanh(F.index(z, (slice(None), slice(3 * H, 4 * H))))
    c_new = F.add(F.mul(f, c), F.mul(i, g))
    return F.mul(o, F.tanh(c_new)), c_new


def lstm_forward(cell: LstmCell, inputs: Tensor, h0: Tensor | None = None, c0: Tensor | None = None) -> Tensor:
    """Hidden states (n, hidden_dim) of a left-to-right pass."""
    return F.lstm_recurrence(cell.project(inputs), cell.w_h,
                             cell.zeros() if h0 is None else h0, cell.zeros() if c0 is None else c0)


def bilstm_forward(fwd: LstmCell, bwd: LstmCell, inputs: Tensor) -> Tensor:
    if fwd.input_dim != bwd.input_dim or fwd.hidden_dim != bwd.hidden_dim:
        raise ValueError("bilstm: forward and backward cells disagree on dimensions")
    n = inputs.shape[0]
    rev = np.arange(n - 1, -1, -1)
    forward = lstm_forward(fwd, inputs)
    backward = F.gather_rows(lstm_forward(bwd, F.gather_rows(inputs, rev)), rev)
    return F.concat([forward, backward], axis=1)


class FeedForward:
    """Affine layers with tanh between them and an optional output activation."""

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator, output: str = "none", name: str = "ff"):
        if len(sizes) < 2:
            raise ValueError("feed-forward needs at least input and output sizes")
        if output not in ("none", "softmax", "sigmoid"):
            raise ValueError(f"unknown output activation {output!r}")
        self.sizes = list(sizes)
        self.output = output
        self.layers = [
            (Parameter(uniform_init(rng, (a, b)), f"{name}.w{k}"), Parameter(np.zeros((1, b)), f"{name}.b{k}"))
            for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))
        ]

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def parameters(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer]


def ff_forward(ff: FeedForward, x: Tensor, mask=None, activate: bool = True) -> Tensor:
    """Run ``x`` through ``ff``; ``activate=False`` returns pre-activation outputs."""
    if x.value.ndim != 2 or x.shape[1] != ff.in_dim:
        raise ValueError(f"feed-forward: input shape {x.shape} does not match input size {ff.in_dim}")
    last = len(ff.layers) - 1
    for k, (w, b) in enumerate(ff.layers):
        x = F.add(F.matmul(x, w), b)
        if k < last:
            x = F.tanh(x)
    if not activate or ff.output == "none":
        return x
    if ff.output == "softmax":
        return F.softmax_rows(x, mask)
    return F.sigmoid(x)

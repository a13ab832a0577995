"""Dense float64 tensors with tape-based reverse-mode differentiation and Adam.

Operations are plain functions (``matmul``, ``add``, ``sigmoid`` ...). While a
:class:`Tape` is active (``with Tape() as tape:``) every operation whose inputs
require gradients is appended to it; :func:`backward` then replays the tape in
reverse and accumulates into :attr:`Parameter.grad`.
"""
from __future__ import annotations

from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numba
import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "Tape",
    "no_tape",
    "recording",
    "backward",
    "matmul",
    "add",
    "sub",
    "mul",
    "scalar_mul",
    "add_scalar",
    "concat",
    "index",
    "gather_rows",
    "pick",
    "sigmoid",
    "tanh",
    "softmax_rows",
    "log",
    "log_sigmoid",
    "sum",
    "mean",
    "lstm_recurrence",
    "adam_step",
    "zero_grad",
    "finite_difference_check",
    "save_checkpoint",
    "load_checkpoint",
]


class Tensor:
    """An n-dimensional float64 array that may take part in differentiation."""

    __slots__ = ("value", "requires_grad")

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


class Parameter(Tensor):
    """A trainable tensor with its gradient accumulator and Adam moments."""

    __slots__ = ("name", "grad", "adam_m", "adam_v", "step_count")

    def __init__(self, value, name: str = ""):
        super().__init__(np.array(value, dtype=np.float64), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)
        self.step_count = 0

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


_ACTIVE: list["Tape"] = []


class Tape:
    """Ordered record of the operations applied during one forward pass."""

    def __init__(self):
        self.nodes: list[tuple[str, Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def kinds(self) -> list[str]:
        return [node[0] for node in self.nodes]


class no_tape:
    """Suspends recording, e.g. for rollouts or numeric re-evaluation."""

    def __enter__(self):
        self._saved = list(_ACTIVE)
        _ACTIVE.clear()

    def __exit__(self, *exc):
        _ACTIVE.extend(self._saved)


def recording() -> bool:
    return bool(_ACTIVE)


def _emit(kind: str, value: np.ndarray, inputs: tuple[Tensor, ...], grad_fn: Callable) -> Tensor:
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(value, requires)
    if requires and _ACTIVE:
        _ACTIVE[-1].nodes.append((kind, out, inputs, grad_fn))
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(param) into ``grad`` of every reachable Parameter."""
    if loss.value.ndim != 0:
        raise ValueError(f"backward: loss must be a scalar, got shape {loss.shape}")
    pending: dict[int, np.ndarray] = {id(loss): np.ones(())}
    for kind, out, inputs, grad_fn in reversed(tape.nodes):
        g = pending.pop(id(out), None)
        if g is None:
            continue
        for t, gi in zip(inputs, grad_fn(g)):
            if gi is None or not t.requires_grad:
                continue
            if isinstance(t, Parameter):
                t.grad += gi
            else:
                key = id(t)
                prev = pending.get(key)
                pending[key] = gi if prev is None else prev + gi


# --------------------------------------------------------------------------
# primitives


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(kind: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{kind}: incompatible shapes {a.shape} and {b.shape}") from None


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    av, bv = a.value, b.value

    def grad_fn(g):
        return (g @ bv.T if a.requires_grad else None, av.T @ g if b.requires_grad else None)

    return _emit("matmul", av @ bv, (a, b), grad_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _emit("add", a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return _emit("sub", a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product."""
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("mul", a, b)
    av, bv = a.value, b.value

    def grad_fn(g):
        return (
            _unbroadcast(g * bv, av.shape) if a.requires_grad else None,
            _unbroadcast(g * av, bv.shape) if b.requires_grad else None,
        )

    return _emit("mul", av * bv, (a, b), grad_fn)


def scalar_mul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _emit("scalar_mul", a.value * c, (a,), lambda g: (g * c,))


def add_scalar(a: Tensor, c: float) -> Tensor:
    return _emit("add_scalar", a.value + float(c), (a,), lambda g: (g,))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(_as_tensor(t) for t in tensors)
    if not tensors:
        raise ValueError("concat: no inputs")
    try:
        value = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise ValueError(f"concat: incompatible shapes {shapes} along axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def grad_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit("concat", value, tensors, grad_fn)


def index(a: Tensor, key) -> Tensor:
    """Basic slicing (ints and slices only); the result is a copy."""
    av = a.value
    try:
        value = av[key].copy()
    except IndexError as exc:
        raise ValueError(f"slice: {exc} for shape {a.shape}") from None

    def grad_fn(g):
        out = np.zeros_like(av)
        out[key] += g
        return (out,)

    return _emit("slice", value, (a,), grad_fn)


def gather_rows(a: Tensor, ids) -> Tensor:
    """Rows ``a[ids]`` (repeats allowed); gradients scatter-add back."""
    ids = np.asarray(ids, dtype=np.intp)
    av = a.value
    if ids.size and (ids.min() < 0 or ids.max() >= av.shape[0]):
        raise ValueError(f"gather_rows: id out of range for {av.shape[0]} rows")

    def grad_fn(g):
        out = np.zeros_like(av)
        np.add.at(out, ids, g)
        return (out,)

    return _emit("gather", av[ids], (a,), grad_fn)


def pick(a: Tensor, rows, cols) -> Tensor:
    """Vector of ``a[rows[k], cols[k]]``."""
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    av = a.value

    def grad_fn(g):
        out = np.zeros_like(av)
        np.add.at(out, (rows, cols), g)
        return (out,)

    return _emit("pick", av[rows, cols], (a,), grad_fn)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # two-branch form avoids overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.value)
    return _emit("sigmoid", s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.value)
    return _emit("tanh", t, (a,), lambda g: (g * (1.0 - t * t),))


def softmax_rows(a: Tensor, mask=None) -> Tensor:
    """Row-wise softmax; entries where ``mask`` is False get probability 0."""
    av = a.value
    if av.ndim != 2 or av.shape[1] < 1:
        raise ValueError(f"softmax-rows: need a matrix with at least one column, got {a.shape}")
    if mask is None:
        shifted = av - av.max(axis=1, keepdims=True)
        e = np.exp(shifted)
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), av.shape)
        if not mask.any(axis=1).all():
            raise ValueError("softmax-rows: a row has every entry masked")
        row_max = np.where(mask, av, -np.inf).max(axis=1, keepdims=True)
        e = np.where(mask, np.exp(np.where(mask, av - row_max, 0.0)), 0.0)
    s = e / e.sum(axis=1, keepdims=True)

    def grad_fn(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return _emit("softmax", s, (a,), grad_fn)


def log(a: Tensor) -> Tensor:
    av = a.value
    if np.any(av <= 0):
        raise ValueError(f"log: non-positive input (min {av.min():.3g})")
    return _emit("log", np.log(av), (a,), lambda g: (g / av,))


def log_sigmoid(a: Tensor) -> Tensor:
    """log(sigmoid(a)) evaluated without forming sigmoid(a)."""
    av = a.value
    return _emit("log_sigmoid", -np.logaddexp(0.0, -av), (a,), lambda g: (g * _sigmoid(-av),))


def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors the primitive name
    shape = a.shape
    return _emit("sum", np.asarray(a.value.sum()), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(a: Tensor) -> Tensor:
    return scalar_mul(sum(a), 1.0 / a.value.size)


def _lstm_gates(z: np.ndarray, c_prev: np.ndarray, hidden: int):
    i = _sigmoid(z[..., :hidden])
    f = _sigmoid(z[..., hidden : 2 * hidden])
    o = _sigmoid(z[..., 2 * hidden : 3 * hidden])
    g = np.tanh(z[..., 3 * hidden :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    return i, f, o, g, c, tc, o * tc


def lstm_recurrence(xproj: Tensor, w_h: Tensor, h0: Tensor, c0: Tensor) -> Tensor:
    """Run an LSTM over pre-projected inputs.

    ``xproj`` is ``inputs @ W_x + b`` with shape (n, 4H); gate blocks are ordered
    input, forget, output, candidate. Returns hidden states (n, H).
    """
    n, four_h = xproj.shape
    hidden = w_h.shape[0]
    if four_h != 4 * hidden or w_h.shape[1] != four_h:
        raise ValueError(f"lstm: incompatible shapes {xproj.shape} and {w_h.shape}")
    if h0.shape != (1, hidden) or c0.shape != (1, hidden):
        raise ValueError(f"lstm: initial state shapes {h0.shape}, {c0.shape} do not match hidden {hidden}")
    wv = w_h.value
    hs = np.empty((n + 1, hidden))
    cs = np.empty((n + 1, hidden))
    gates = np.empty((n, 4 * hidden))
    tcs = np.empty((n, hidden))
    hs[0], cs[0] = h0.value[0], c0.value[0]
    for t in range(n):
        z = xproj.value[t] + hs[t] @ wv
        i, f, o, g, c, tc, h = _lstm_gates(z, cs[t], hidden)
        gates[t, :hidden], gates[t, hidden : 2 * hidden] = i, f
        gates[t, 2 * hidden : 3 * hidden], gates[t, 3 * hidden :] = o, g
        cs[t + 1], tcs[t], hs[t + 1] = c, tc, h

    def grad_fn(g_h):
        dz_all = np.empty((n, 4 * hidden))
        dh_next = np.zeros(hidden)
        dc_next = np.zeros(hidden)
        for t in range(n - 1, -1, -1):
            i = gates[t, :hidden]
            f = gates[t, hidden : 2 * hidden]
            o = gates[t, 2 * hidden : 3 * hidden]
            gg = gates[t, 3 * hidden :]
            tc = tcs[t]
            dh = g_h[t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = dz_all[t]
            dz[:hidden] = dc * gg * i * (1.0 - i)
            dz[hidden : 2 * hidden] = dc * cs[t] * f * (1.0 - f)
            dz[2 * hidden : 3 * hidden] = dh * tc * o * (1.0 - o)
            dz[3 * hidden :] = dc * i * (1.0 - gg * gg)
            dc_next = dc * f
            dh_next = dz @ wv.T
        return (
            dz_all,
            hs[:-1].T @ dz_all if w_h.requires_grad else None,
            dh_next[None, :],
            dc_next[None, :],
        )

    return _emit("lstm", hs[1:].copy(), (xproj, w_h, h0, c0), grad_fn)


# --------------------------------------------------------------------------
# optimisation


@numba.njit(cache=True)
def _adam_kernel(p, g, m, v, lr, b1, b2, eps, c1, c2):
    ok = True
    for k in range(p.size):
        gk = g[k]
        if not np.isfinite(gk):
            ok = False
            break
        mk = b1 * m[k] + (1.0 - b1) * gk
        vk = b2 * v[k] + (1.0 - b2) * gk * gk
        m[k] = mk
        v[k] = vk
        p[k] -= lr * (mk / c1) / (np.sqrt(vk / c2) + eps)
    return ok


def adam_step(
    params: Iterable[Parameter],
    lr: float = 0.001,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update per parameter; gradients are left as-is."""
    if lr <= 0:
        raise ValueError(f"adam: learning rate must be positive, got {lr}")
    for p in params:
        t = p.step_count + 1
        c1 = 1.0 - beta1**t
        c2 = 1.0 - beta2**t
        ok = _adam_kernel(p.value.reshape(-1), p.grad.reshape(-1), p.adam_m.reshape(-1),
                          p.adam_v.reshape(-1), lr, beta1, beta2, eps, c1, c2)
        if not ok:
            raise FloatingPointError(f"adam: non-finite gradient in parameter {p.name!r}")
        p.step_count = t


def zero_grad(params: Iterable[Parameter]) -> None:
    for p in params:
        p.zero_grad()


def finite_difference_check(
    f: Callable[[], Tensor],
    param: Parameter,
    h: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
    corrupt: float = 0.0,
) -> float:
    """Max relative error between backprop and central differences.

    ``f`` rebuilds the scalar loss from scratch on each call. When ``max_coords``
    is set, a random subset of coordinates is checked. ``corrupt`` scales the
    analytic gradient by ``1 + corrupt`` and exists to exercise the failure path.
    Other parameters reached by ``f`` receive gradient as a side effect.
    """
    saved = param.grad.copy()
    param.zero_grad()
    with Tape() as tape:
        loss = f()
    backward(tape, loss)
    analytic = param.grad.reshape(-1) * (1.0 + corrupt)
    param.grad[...] = saved

    flat = param.value.reshape(-1)
    coords = np.arange(flat.size)
    if max_coords is not None and flat.size > max_coords:
        rng = rng or np.random.default_rng(0)
        coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
    worst = 0.0
    with no_tape():
        for k in coords:
            orig = flat[k]
            flat[k] = orig + h
            up = float(f().value)
            flat[k] = orig - h
            down = float(f().value)
            flat[k] = orig
            numeric = (up - down) / (2.0 * h)
            a = analytic[k]
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, err)
    return worst


# --------------------------------------------------------------------------
# checkpoints

_MAGIC = "GAILEE-CHECKPOINT 1"


def save_checkpoint(path, tensors: Mapping[str, Tensor | np.ndarray]) -> None:
    """Text manifest of (name, shape) lines, then little-endian float64 values."""
    lines = [_MAGIC]
    blobs = []
    for name, t in tensors.items():
        if any(c.isspace() for c in name):
            raise ValueError(f"checkpoint: whitespace in parameter name {name!r}")
        arr = np.ascontiguousarray(t.value if isinstance(t, Tensor) else t, dtype="<f8")
        lines.append(f"{name} {','.join(str(d) for d in arr.shape)}")
        blobs.append(arr.tobytes())
    lines.append("END")
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("ascii") + b"".join(blobs))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    marker = b"\nEND\n"
    cut = raw.find(marker)
    if not raw.startswith(_MAGIC.encode()) or cut < 0:
        raise ValueError(f"{path}: not a checkpoint file")
    header = raw[:cut].decode("ascii").splitlines()[1:]
    offset = cut + len(marker)
    out: dict[str, np.ndarray] = {}
    for line in header:
        name, _, dims = line.partition(" ")
        shape = tuple(int(d) for d in dims.split(",")) if dims else ()
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(raw):
            raise ValueError(f"{path}: truncated data for {name}")
        out[name] = np.frombuffer(raw[offset:end], dtype="<f8").reshape(shape).astype(np.float64)
        offset = end
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes")
    return out

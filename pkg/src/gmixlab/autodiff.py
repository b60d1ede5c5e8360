"""Reverse-mode automatic differentiation over dense float64 matrices.

The engine is deliberately small: a `DiffMatrix` wraps a 2-D numpy array
and remembers how it was produced, `backward_pass` walks the recorded
graph once in reverse topological order, and every primitive accumulates
(never overwrites) into `.grad` so that diamond-shaped graphs and
repeated backward calls compose correctly.  Gradients are only cleared
by an explicit reset.

Only the primitives needed by the training pipeline exist.  Each one is
a module-level function; `+ - * @` are thin sugar over them.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (forward values only)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class DiffMatrix:
    """A 2-D float64 matrix participating in reverse-mode differentiation."""

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False):
        array = np.atleast_2d(np.asarray(values, dtype=np.float64))
        if array.ndim != 2:
            raise ContractError(f"DiffMatrix requires a 2-D array, got ndim={array.ndim}")
        self.values = array
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[DiffMatrix, ...] = ()
        self._backward = None

    @classmethod
    def constant(cls, values) -> "DiffMatrix":
        return cls(values, requires_grad=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def item(self) -> float:
        if self.values.shape != (1, 1):
            raise ContractError(f"item requires shape (1, 1), got {self.values.shape}")
        return float(self.values[0, 0])

    def accumulate_grad(self, delta: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += delta

    def grad_array(self) -> np.ndarray:
        """Gradient as an array, zeros if this node never received one."""
        if self.grad is None:
            return np.zeros_like(self.values)
        return self.grad

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"DiffMatrix(shape={self.values.shape}, requires_grad={self.requires_grad})"


def _result(values: np.ndarray, parents: tuple[DiffMatrix, ...], backward) -> DiffMatrix:
    """Wrap an op result, recording parents only while grad mode is on."""
    tracked = tuple(p for p in parents if p.requires_grad)
    if not _GRAD_ENABLED or not tracked:
        return DiffMatrix(values)
    out = DiffMatrix(values, requires_grad=True)
    out._parents = tracked
    out._backward = backward
    return out


def _check_same_shape(a: DiffMatrix, b: DiffMatrix, op: str) -> None:
    if a.values.shape != b.values.shape:
        raise ContractError(f"{op} requires equal shapes, got {a.values.shape} and {b.values.shape}")


def matmul(a: DiffMatrix, b: DiffMatrix) -> DiffMatrix:
    if a.values.shape[1] != b.values.shape[0]:
        raise ContractError(f"matmul inner dimensions differ: {a.values.shape} @ {b.values.shape}")
    values = a.values @ b.values

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g @ b.values.T)
        if b.requires_grad:
            b.accumulate_grad(a.values.T @ g)

    return _result(values, (a, b), backward)


def add(a: DiffMatrix, b: DiffMatrix) -> DiffMatrix:
    _check_same_shape(a, b, "add")

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g)

    return _result(a.values + b.values, (a, b), backward)


def sub(a: DiffMatrix, b: DiffMatrix) -> DiffMatrix:
    _check_same_shape(a, b, "sub")

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(-g)

    return _result(a.values - b.values, (a, b), backward)


def mul(a: DiffMatrix, b: DiffMatrix) -> DiffMatrix:
    _check_same_shape(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * b.values)
        if b.requires_grad:
            b.accumulate_grad(g * a.values)

    return _result(a.values * b.values, (a, b), backward)


def scale(a: DiffMatrix, factor: float) -> DiffMatrix:
    factor = float(factor)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * factor)

    return _result(a.values * factor, (a,), backward)


def add_row(a: DiffMatrix, row: DiffMatrix) -> DiffMatrix:
    """Add a 1 x c row vector to every row of an n x c matrix."""
    if row.values.shape != (1, a.values.shape[1]):
        raise ContractError(f"add_row needs a 1x{a.values.shape[1]} row, got {row.values.shape}")

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if row.requires_grad:
            row.accumulate_grad(g.sum(axis=0, keepdims=True))

    return _result(a.values + row.values, (a, row), backward)


def add_col(a: DiffMatrix, col: DiffMatrix) -> DiffMatrix:
    """Add an n x 1 column vector to every column of an n x c matrix."""
    if col.values.shape != (a.values.shape[0], 1):
        raise ContractError(f"add_col needs a {a.values.shape[0]}x1 column, got {col.values.shape}")

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if col.requires_grad:
            col.accumulate_grad(g.sum(axis=1, keepdims=True))

    return _result(a.values + col.values, (a, col), backward)


def mul_row(a: DiffMatrix, row: DiffMatrix) -> DiffMatrix:
    """Multiply every row of an n x c matrix elementwise by a 1 x c row."""
    if row.values.shape != (1, a.values.shape[1]):
        raise ContractError(f"mul_row needs a 1x{a.values.shape[1]} row, got {row.values.shape}")

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * row.values)
        if row.requires_grad:
            row.accumulate_grad((g * a.values).sum(axis=0, keepdims=True))

    return _result(a.values * row.values, (a, row), backward)


def mul_col(a: DiffMatrix, col: DiffMatrix) -> DiffMatrix:
    """Multiply every column of an n x c matrix elementwise by an n x 1 column."""
    if col.values.shape != (a.values.shape[0], 1):
        raise ContractError(f"mul_col needs a {a.values.shape[0]}x1 column, got {col.values.shape}")

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * col.values)
        if col.requires_grad:
            col.accumulate_grad((g * a.values).sum(axis=1, keepdims=True))

    return _result(a.values * col.values, (a, col), backward)


def sigmoid(a: DiffMatrix) -> DiffMatrix:
    x = a.values
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * out * (1.0 - out))

    return _result(out, (a,), backward)


def relu(a: DiffMatrix) -> DiffMatrix:
    mask = a.values > 0

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * mask)

    return _result(a.values * mask, (a,), backward)


def exp(a: DiffMatrix) -> DiffMatrix:
    out = np.exp(a.values)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * out)

    return _result(out, (a,), backward)


def log(a: DiffMatrix) -> DiffMatrix:
    if np.any(a.values <= 0):
        raise ContractError("log requires strictly positive entries")
    x = a.values

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g / x)

    return _result(np.log(x), (a,), backward)


def square(a: DiffMatrix) -> DiffMatrix:
    x = a.values

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * 2.0 * x)

    return _result(x * x, (a,), backward)


def mean_rows(a: DiffMatrix) -> DiffMatrix:
    """Column-wise mean over rows: n x c -> 1 x c."""
    n = a.values.shape[0]

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(np.broadcast_to(g / n, a.values.shape))

    return _result(a.values.mean(axis=0, keepdims=True), (a,), backward)


def sum_cols(a: DiffMatrix) -> DiffMatrix:
    """Row-wise sum over columns: n x c -> n x 1."""

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(np.broadcast_to(g, a.values.shape))

    return _result(a.values.sum(axis=1, keepdims=True), (a,), backward)


def sum_all(a: DiffMatrix) -> DiffMatrix:
    """Sum of all entries: n x c -> 1 x 1."""

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(np.broadcast_to(g, a.values.shape))

    return _result(np.array([[a.values.sum()]]), (a,), backward)


def max_rows(a: DiffMatrix) -> DiffMatrix:
    """Column-wise max over rows: n x c -> 1 x c (gradient to the argmax row)."""
    winners = np.argmax(a.values, axis=0)
    cols = np.arange(a.values.shape[1])
    out = a.values[winners, cols].reshape(1, -1)

    def backward(g):
        if a.requires_grad:
            delta = np.zeros_like(a.values)
            delta[winners, cols] = g[0, :]
            a.accumulate_grad(delta)

    return _result(out, (a,), backward)


def transpose(a: DiffMatrix) -> DiffMatrix:
    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g.T)

    return _result(np.ascontiguousarray(a.values.T), (a,), backward)


def backward_pass(output: DiffMatrix) -> None:
    """Backpropagate from a scalar output through the recorded graph.

    Seeds the output gradient with 1 and accumulates into every
    reachable node that requires grad.  Raises if the output is not
    1 x 1 so that vector-valued seeds can never happen silently.
    """
    if output.values.shape != (1, 1):
        raise ContractError(f"backward_pass requires a (1, 1) output, got {output.values.shape}")
    if not output.requires_grad:
        return

    topo: list[DiffMatrix] = []
    seen: set[int] = set()
    stack: list[tuple[DiffMatrix, bool]] = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    # Each pass computes its own contribution on a clean slate and then
    # adds whatever gradient was already stored, so repeated passes
    # compose additively instead of double-counting through intermediates.
    prior: dict[int, np.ndarray] = {}
    for node in topo:
        if node.grad is not None:
            prior[id(node)] = node.grad
            node.grad = None

    output.accumulate_grad(np.ones((1, 1)))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)

    for node in topo:
        stored = prior.get(id(node))
        if stored is not None:
            if node.grad is None:
                node.grad = stored
            else:
                node.grad += stored


class ParamStore:
    """Named trainable parameters plus their Adam state.

    Parameter order is insertion order and is part of the store's
    deterministic behaviour (flattened views, probe indexing).
    """

    def __init__(self):
        self._params: dict[str, DiffMatrix] = {}
        self._moment1: dict[str, np.ndarray] = {}
        self._moment2: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, values) -> DiffMatrix:
        if name in self._params:
            raise ContractError(f"parameter {name!r} already exists")
        param = DiffMatrix(np.array(values, dtype=np.float64), requires_grad=True)
        param.grad = np.zeros_like(param.values)
        self._params[name] = param
        self._moment1[name] = np.zeros_like(param.values)
        self._moment2[name] = np.zeros_like(param.values)
        return param

    def __getitem__(self, name: str) -> DiffMatrix:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def size(self) -> int:
        return sum(p.values.size for p in self._params.values())

    def zero_grads(self) -> None:
        for param in self._params.values():
            param.grad = np.zeros_like(param.values)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.values.copy() for name, p in self._params.items()}

    def restore(self, snapshot: dict[str, np.ndarray]) -> None:
        for name, values in snapshot.items():
            param = self._params[name]
            if param.values.shape != values.shape:
                raise ContractError(f"snapshot shape mismatch for {name!r}")
            param.values[...] = values

    def flat_values(self) -> np.ndarray:
        return np.concatenate([p.values.ravel() for p in self._params.values()])

    def flat_grads(self) -> np.ndarray:
        return np.concatenate([p.grad_array().ravel() for p in self._params.values()])

    def locate(self, flat_index: int) -> tuple[str, tuple[int, int]]:
        """Map a flattened index to (parameter name, 2-D index)."""
        offset = 0
        for name, param in self._params.items():
            size = param.values.size
            if flat_index < offset + size:
                row, col = np.unravel_index(flat_index - offset, param.values.shape)
                return name, (int(row), int(col))
            offset += size
        raise ContractError(f"flat index {flat_index} out of range (size {self.size()})")

    def nudge(self, flat_index: int, delta: float) -> None:
        name, idx = self.locate(flat_index)
        self._params[name].values[idx] += delta


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
FD_DENOM_FLOOR = 1e-6


def adam_step(store: ParamStore, lr: float) -> None:
    """One Adam update over every parameter in the store.

    Uses bias-corrected first and second moments with the epsilon added
    outside the square root.  Gradients are read as-is; resetting them is
    the caller's job.
    """
    store.step_count += 1
    t = store.step_count
    correction1 = 1.0 - ADAM_BETA1**t
    correction2 = 1.0 - ADAM_BETA2**t
    for name, param in store.items():
        g = param.grad_array()
        m = store._moment1[name]
        v = store._moment2[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        param.values -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


@dataclass
class ProbeRecord:
    parameter: str
    index: tuple[int, int]
    analytic: float
    numeric: float
    error: float


@dataclass
class FiniteDiffReport:
    max_error: float
    tolerance: float
    probes: list[ProbeRecord] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def finite_diff_check(
    loss_fn,
    store: ParamStore,
    probes: int = 50,
    h: float = 1e-5,
    seed: int = 0,
    tolerance: float = 1e-4,
) -> FiniteDiffReport:
    """Compare analytic gradients against central finite differences.

    `loss_fn(store)` must rebuild the forward graph from the store's
    current values and return the scalar loss DiffMatrix.  Probe
    coordinates are sampled without replacement over the flattened
    parameter space.  The error denominator is floored so coordinates
    whose true gradient sits at or below the central-difference noise
    level (roundoff ~ eps*|loss|/2h, about 1e-11 at h=1e-5) are judged
    on an absolute scale instead of amplifying that noise.
    """
    store.zero_grads()
    out = loss_fn(store)
    backward_pass(out)
    analytic_flat = store.flat_grads()

    total = store.size()
    count = min(probes, total)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(total, size=count, replace=False)

    records: list[ProbeRecord] = []
    for flat_index in chosen:
        flat_index = int(flat_index)
        store.nudge(flat_index, +h)
        with no_grad():
            f_plus = loss_fn(store).item
        store.nudge(flat_index, -2.0 * h)
        with no_grad():
            f_minus = loss_fn(store).item
        store.nudge(flat_index, +h)
        numeric = (f_plus - f_minus) / (2.0 * h)
        analytic = float(analytic_flat[flat_index])
        # floor must sit well above fd roundoff divided by the pass
        # tolerance (~1e-11 / 1e-4) or noise masquerades as error
        denom = max(abs(analytic), abs(numeric), FD_DENOM_FLOOR)
        error = abs(analytic - numeric) / denom
        name, idx = store.locate(flat_index)
        records.append(ProbeRecord(name, (int(idx[0]), int(idx[1])), analytic, numeric, error))

    max_error = max((r.error for r in records), default=0.0)
    return FiniteDiffReport(max_error=max_error, tolerance=tolerance, probes=records)

"""Small dense reverse-mode autodiff over numpy arrays.

Values are float64 arrays of shape ``(n,)`` or ``(batch, n)``. Weight
matrices are stored ``(rows=out, cols=in)`` and applied as ``x @ W.T`` so the
same code handles single vectors and batches.

A :class:`Tape` records each primitive as it runs; :meth:`Tape.backward`
walks the record in reverse to accumulate gradients for every parameter leaf.
Unrecorded tapes (``Tape(record=False)``) are used for inference.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping

import numpy as np
from scipy.special import expit


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf."""


class ShapeError(ValueError):
    pass


def _finite(value: np.ndarray, what: str) -> np.ndarray:
    if not np.isfinite(value).all():
        raise NonFiniteError(f"non-finite value produced by {what}")
    return value


class Node:
    __slots__ = ("value", "grad", "needs_grad", "name")

    def __init__(self, value, needs_grad=False, name=None):
        self.value = value
        self.grad = None
        self.needs_grad = needs_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Node{label} shape={self.value.shape}>"


# -- primitive forward / backward rules --------------------------------------
# backward rules get (g, out, *input values) and return one gradient per input.


def _affine_fwd(W, x, b, U=None, h=None):
    out = x @ W.T
    if U is not None:
        out = out + h @ U.T
    return out + b


def _outer(g, x):
    return g.T @ x if g.ndim == 2 else np.outer(g, x)


def _bias(g):
    return g.sum(axis=0) if g.ndim == 2 else g


def _affine_bwd(g, out, W, x, b, U=None, h=None):
    grads = [_outer(g, x), g @ W, _bias(g)]
    if U is not None:
        grads += [_outer(g, h), g @ U]
    return grads


def _sigmoid_bwd(g, out, v):
    return (g * out * (1.0 - out),)


def _tanh_bwd(g, out, v):
    return (g * (1.0 - out * out),)


def _mul_bwd(g, out, a, b):
    return g * b, g * a


def _add_bwd(g, out, a, b):
    return g, g


def _blend_fwd(z, a, b):
    return (1.0 - z) * a + z * b


def _blend_bwd(g, out, z, a, b):
    return g * (b - a), g * (1.0 - z), g * z


def _mse_fwd(pred, target, mask):
    n = mask.sum()
    if n == 0:
        return np.float64(0.0)
    diff = pred - target
    return np.sum(mask * diff * diff) / n


def _mse_bwd(g, out, pred, target, mask):
    n = mask.sum()
    if n == 0:
        return np.zeros_like(pred), None, None
    return g * 2.0 * mask * (pred - target) / n, None, None


@dataclass(frozen=True)
class Primitive:
    name: str
    forward: Callable
    backward: Callable


AFFINE = Primitive("affine", _affine_fwd, _affine_bwd)
SIGMOID = Primitive("sigmoid", expit, _sigmoid_bwd)
TANH = Primitive("tanh", np.tanh, _tanh_bwd)
MUL = Primitive("mul", np.multiply, _mul_bwd)
ADD = Primitive("add", np.add, _add_bwd)
BLEND = Primitive("blend", _blend_fwd, _blend_bwd)
MSE = Primitive("mse", _mse_fwd, _mse_bwd)


class Tape:
    """Records primitive operations for reverse accumulation.

    Every op accepts :class:`Node` or plain arrays (lifted to constants) and
    returns a :class:`Node`. Parameters enter through :meth:`param`; only
    they receive gradients from :meth:`backward`.
    """

    def __init__(self, record: bool = True):
        self.record = record
        self.ops: list[tuple[Primitive, tuple[Node, ...], Node]] = []
        self.params: dict[str, Node] = {}

    def __len__(self):
        return len(self.ops)

    # -- leaves --------------------------------------------------------------
    def param(self, name: str, value: np.ndarray) -> Node:
        if name in self.params:
            raise KeyError(f"parameter {name!r} already on tape")
        node = Node(value, needs_grad=self.record, name=name)
        self.params[name] = node
        return node

    def constant(self, value) -> Node:
        return Node(np.asarray(value, dtype=np.float64))

    def lift(self, v) -> Node:
        return v if isinstance(v, Node) else self.constant(v)

    # -- recording -----------------------------------------------------------
    def _apply(self, prim: Primitive, inputs: tuple[Node, ...]) -> Node:
        out = _finite(prim.forward(*(n.value for n in inputs)), prim.name)
        node = Node(out, needs_grad=self.record and any(n.needs_grad for n in inputs))
        if self.record:
            self.ops.append((prim, inputs, node))
        return node

    def affine(self, W, x, b, U=None, h=None) -> Node:
        """``W x (+ U h) + b``; U and h come together or not at all."""
        if (U is None) != (h is None):
            raise ShapeError("U and h must both be present or both absent")
        W, x, b = self.lift(W), self.lift(x), self.lift(b)
        _check_matvec(W, x, "W", "x")
        if b.shape != (W.shape[0],):
            raise ShapeError(f"bias shape {b.shape} does not match W rows {W.shape[0]}")
        if U is None:
            return self._apply(AFFINE, (W, x, b))
        U, h = self.lift(U), self.lift(h)
        _check_matvec(U, h, "U", "h")
        if U.shape[0] != W.shape[0] or h.shape[:-1] != x.shape[:-1]:
            raise ShapeError(f"U {U.shape}/h {h.shape} incompatible with W {W.shape}/x {x.shape}")
        return self._apply(AFFINE, (W, x, b, U, h))

    def sigmoid(self, v) -> Node:
        return self._apply(SIGMOID, (self.lift(v),))

    def tanh(self, v) -> Node:
        return self._apply(TANH, (self.lift(v),))

    def mul(self, a, b) -> Node:
        return self._apply(MUL, _same_shape(self.lift(a), self.lift(b)))

    def add(self, a, b) -> Node:
        return self._apply(ADD, _same_shape(self.lift(a), self.lift(b)))

    def blend(self, z, a, b) -> Node:
        """``(1 - z) * a + z * b``, the gated mix used by GRU and MUT1."""
        z, a, b = self.lift(z), self.lift(a), self.lift(b)
        _same_shape(z, a)
        _same_shape(a, b)
        return self._apply(BLEND, (z, a, b))

    def mse(self, pred, target, mask) -> Node:
        pred, target, mask = self.lift(pred), self.lift(target), self.lift(mask)
        _same_shape(pred, target)
        _same_shape(pred, mask)
        return self._apply(MSE, (pred, target, mask))

    # -- reverse pass --------------------------------------------------------
    def backward(self, loss: Node | None = None, seed=1.0) -> dict[str, np.ndarray]:
        """Gradient of ``loss`` (default: last recorded output) w.r.t. every param."""
        if not self.ops:
            raise ValueError("backward on an empty tape")
        if loss is None:
            loss = self.ops[-1][2]
        seed = np.asarray(seed, dtype=np.float64)
        if seed.ndim == 0 and loss.value.size != 1:
            raise ValueError("scalar seed requires a scalar terminal node")
        for _, _, out in self.ops:
            out.grad = None
        for node in self.params.values():
            node.grad = None
        loss.grad = np.broadcast_to(seed, loss.value.shape).astype(np.float64)

        for prim, inputs, out in reversed(self.ops):
            if out.grad is None or not out.needs_grad:
                continue
            grads = prim.backward(out.grad, out.value, *(n.value for n in inputs))
            for node, g in zip(inputs, grads):
                if g is None or not node.needs_grad:
                    continue
                node.grad = g if node.grad is None else node.grad + g

        return {
            name: (node.grad if node.grad is not None else np.zeros_like(node.value))
            for name, node in self.params.items()
        }

    def replay(self) -> list[np.ndarray]:
        """Recompute every recorded op from its inputs, in order."""
        outs = []
        for prim, inputs, out in self.ops:
            value = prim.forward(*(n.value for n in inputs))
            out.value = value
            outs.append(value)
        return outs


def _check_matvec(M: Node, v: Node, mname: str, vname: str):
    if M.value.ndim != 2 or v.value.ndim not in (1, 2) or M.shape[1] != v.shape[-1]:
        raise ShapeError(f"{mname} {M.shape} cannot multiply {vname} {v.shape}")


def _same_shape(a: Node, b: Node):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


# -- array conveniences (no recording) ---------------------------------------


def sigmoid(v) -> np.ndarray:
    return _finite(expit(np.asarray(v, dtype=np.float64)), "sigmoid")


def affine(W, x, U=None, h=None, b=None) -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    if b is None:
        b = np.zeros(W.shape[0])
    return Tape(record=False).affine(W, x, b, U, h).value


def mse_loss(prediction, target, mask) -> float:
    return float(Tape(record=False).mse(prediction, target, mask).value)


# -- parameters ---------------------------------------------------------------


class ParameterSet:
    """Ordered mapping of unique names to float64 arrays."""

    def __init__(self, items: Mapping[str, np.ndarray] | None = None):
        self._items: dict[str, np.ndarray] = {}
        for name, value in (items or {}).items():
            self.add(name, value)

    def add(self, name: str, value) -> np.ndarray:
        if name in self._items:
            raise KeyError(f"duplicate parameter name {name!r}")
        arr = np.array(value, dtype=np.float64)
        self._items[name] = arr
        return arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self._items[name]

    def __contains__(self, name) -> bool:
        return name in self._items

    def __iter__(self) -> Iterator[str]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def items(self):
        return self._items.items()

    def names(self) -> list[str]:
        return list(self._items)

    def count(self, prefix: str = "") -> int:
        return sum(v.size for k, v in self._items.items() if k.startswith(prefix))

    def copy(self) -> "ParameterSet":
        return ParameterSet({k: v.copy() for k, v in self._items.items()})

    def equals(self, other: "ParameterSet") -> bool:
        return self.names() == other.names() and all(
            np.array_equal(self[k], other[k]) for k in self
        )

    def on_tape(self, tape: Tape) -> dict[str, Node]:
        return {name: tape.param(name, value) for name, value in self._items.items()}


def glorot_uniform(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


# -- optimizer -----------------------------------------------------------------


@dataclass
class OptimizerState:
    lr: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-8
    accumulators: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: ParameterSet, lr=1e-3, rho=0.9, eps=1e-8):
        return cls(lr, rho, eps, {k: np.zeros_like(v) for k, v in params.items()})


def rmsprop_update(params: ParameterSet, grads: Mapping[str, np.ndarray], state: OptimizerState):
    """One RMSprop step, in place. Returns ``(params, state)``.

    ``acc = rho * acc + (1 - rho) * g**2``;
    ``param -= lr * g / sqrt(acc + eps)``.
    """
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, expected {p.shape}")
        acc = state.accumulators.get(name)
        if acc is None:
            acc = state.accumulators[name] = np.zeros_like(p)
        acc *= state.rho
        acc += (1.0 - state.rho) * g * g
        p -= state.lr * g / np.sqrt(acc + state.eps)
        _finite(p, f"rmsprop update of {name!r}")
    return params, state


# -- gradient verification ---------------------------------------------------


def grad_check(
    forward: Callable[[Tape, dict[str, Node]], Node],
    params: ParameterSet,
    epsilon: float = 1e-5,
) -> float:
    """Max relative error between tape gradients and central differences.

    ``forward(tape, nodes)`` must build a scalar loss from the parameter
    nodes and be deterministic; the check perturbs every entry of every
    parameter by ``±epsilon`` in place and restores it afterwards.
    """
    if not 0 < epsilon <= 1e-2:
        raise ValueError("epsilon must lie in (0, 1e-2]")
    tape = Tape()
    loss = forward(tape, params.on_tape(tape))
    analytic = tape.backward(loss)

    def evaluate() -> float:
        t = Tape(record=False)
        return forward(t, params.on_tape(t)).value.item()

    worst = 0.0
    for name, p in params.items():
        flat = p.reshape(-1)
        g_ad = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            plus = evaluate()
            flat[i] = orig - epsilon
            minus = evaluate()
            flat[i] = orig
            g_fd = (plus - minus) / (2.0 * epsilon)
            denom = max(abs(g_ad[i]), abs(g_fd), 1e-8)
            worst = max(worst, abs(g_ad[i] - g_fd) / denom)
    return worst

"""Value networks: feed-forward baseline plus LSTM, GRU and MUT1 cells.

Recurrent topology is ``input -> dense tanh -> recurrent cell -> linear``,
unrolled over a fixed window of observations from a zero state. The
feed-forward ``nnet`` skips the cell and sees only the last observation.

Cell step functions take a mapping of cell-local parameter names
(``W_i``, ``U_i``, ``b_i``, ...) and work on either a :class:`Tape` (returning
nodes, for training) or plain arrays (``tape=None``, returning arrays).
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .numerics import (
    NonFiniteError,
    OptimizerState,
    ParameterSet,
    ShapeError,
    Tape,
    glorot_uniform,
    rmsprop_update,
)

ARCHITECTURES = ("nnet", "lstm", "gru", "mut1")
CHECKPOINT_VERSION = 1

# gate name -> has recurrent matrix
_GATES = {
    "lstm": {"i": True, "f": True, "o": True, "c": True},
    "gru": {"z": True, "r": True, "": True},
}


def _suffix(gate: str) -> str:
    return f"_{gate}" if gate else ""


def cell_shapes(arch: str, input_dim: int, hidden: int) -> dict[str, tuple[int, ...]]:
    """Parameter shapes of one recurrent layer, in a fixed order."""
    shapes: dict[str, tuple[int, ...]] = {}
    if arch in _GATES:
        for gate, recurrent in _GATES[arch].items():
            s = _suffix(gate)
            shapes[f"W{s}"] = (hidden, input_dim)
            if recurrent:
                shapes[f"U{s}"] = (hidden, hidden)
            shapes[f"b{s}"] = (hidden,)
    elif arch == "mut1":
        if input_dim != hidden:
            raise ShapeError("MUT1 adds tanh(x) to a hidden-sized vector: input_dim must equal hidden")
        shapes = {
            "W_z": (hidden, input_dim),
            "b_z": (hidden,),
            "W_r": (hidden, input_dim),
            "W_h": (hidden, hidden),
            "b_r": (hidden,),
            "W_hh": (hidden, hidden),
            "b": (hidden,),
        }
    else:
        raise ValueError(f"no recurrent cell for architecture {arch!r}")
    return shapes


def _run(tape, fn):
    """Evaluate ``fn(tape)`` on a throwaway tape if none was given."""
    if tape is not None:
        return fn(tape)
    out = fn(Tape(record=False))
    if isinstance(out, tuple):
        return tuple(o.value for o in out)
    return out.value


def lstm_step(p, x, h_prev, c_prev, tape: Tape | None = None):
    """One LSTM step; returns ``(h, c)``."""

    def step(t):
        i = t.sigmoid(t.affine(p["W_i"], x, p["b_i"], p["U_i"], h_prev))
        f = t.sigmoid(t.affine(p["W_f"], x, p["b_f"], p["U_f"], h_prev))
        o = t.sigmoid(t.affine(p["W_o"], x, p["b_o"], p["U_o"], h_prev))
        c_tilde = t.tanh(t.affine(p["W_c"], x, p["b_c"], p["U_c"], h_prev))
        c = t.add(t.mul(f, c_prev), t.mul(i, c_tilde))
        h = t.mul(o, t.tanh(c))
        return h, c

    return _run(tape, step)


def gru_step(p, x, h_prev, tape: Tape | None = None):
    def step(t):
        z = t.sigmoid(t.affine(p["W_z"], x, p["b_z"], p["U_z"], h_prev))
        r = t.sigmoid(t.affine(p["W_r"], x, p["b_r"], p["U_r"], h_prev))
        x_tilde = t.mul(r, h_prev)
        h_tilde = t.tanh(t.affine(p["W"], x, p["b"], p["U"], x_tilde))
        return t.blend(z, h_prev, h_tilde)

    return _run(tape, step)


def mut1_step(p, x, h_prev, tape: Tape | None = None):
    """MUT1 step. The update gate sees only the input; the candidate adds an
    unweighted ``tanh(x)`` inside its activation."""

    def step(t):
        z = t.sigmoid(t.affine(p["W_z"], x, p["b_z"]))
        r = t.sigmoid(t.affine(p["W_r"], x, p["b_r"], p["W_h"], h_prev))
        h_hat = t.mul(r, h_prev)
        pre = t.add(t.affine(p["W_hh"], h_hat, p["b"]), t.tanh(x))
        return t.blend(z, h_prev, t.tanh(pre))

    return _run(tape, step)


@dataclass
class ValueNetwork:
    arch: str
    input_dim: int
    hidden: int
    actions: int
    window: int
    params: ParameterSet

    @property
    def recurrent(self) -> bool:
        return self.arch != "nnet"

    def forward(self, windows: np.ndarray) -> np.ndarray:
        return network_forward(self, windows)


def param_shapes(arch: str, input_dim: int, hidden: int, actions: int) -> dict[str, tuple[int, ...]]:
    if arch not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")
    shapes = {"dense.W": (hidden, input_dim), "dense.b": (hidden,)}
    if arch != "nnet":
        shapes.update({f"rec.{k}": v for k, v in cell_shapes(arch, hidden, hidden).items()})
    shapes.update({"out.W": (actions, hidden), "out.b": (actions,)})
    return shapes


def init_network(
    arch: str,
    input_dim: int,
    hidden: int = 100,
    actions: int = 4,
    window: int = 10,
    seed: int | np.random.SeedSequence = 0,
) -> ValueNetwork:
    if min(input_dim, hidden, actions, window) <= 0:
        raise ValueError("network dimensions must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    params = ParameterSet()
    for name, shape in param_shapes(arch, input_dim, hidden, actions).items():
        if len(shape) == 2:
            params.add(name, glorot_uniform(rng, *shape))
        else:
            params.add(name, np.zeros(shape))
    return ValueNetwork(arch, input_dim, hidden, actions, window, params)


def _cell_params(nodes: dict) -> dict:
    return {k[4:]: v for k, v in nodes.items() if k.startswith("rec.")}


def forward_nodes(net: ValueNetwork, tape: Tape, nodes: dict, windows: np.ndarray):
    """Build the forward graph for ``windows`` of shape ``(L, d)`` or ``(B, L, d)``."""
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim not in (2, 3) or windows.shape[-2:] != (net.window, net.input_dim):
        raise ShapeError(
            f"expected window shape (..., {net.window}, {net.input_dim}), got {windows.shape}"
        )
    dense_W, dense_b = nodes["dense.W"], nodes["dense.b"]
    if net.arch == "nnet":
        hidden = tape.tanh(tape.affine(dense_W, windows[..., -1, :], dense_b))
        return tape.affine(nodes["out.W"], hidden, nodes["out.b"])

    p = _cell_params(nodes)
    state_shape = windows.shape[:-2] + (net.hidden,)
    h = tape.constant(np.zeros(state_shape))
    c = tape.constant(np.zeros(state_shape))
    for t in range(net.window):
        x = tape.tanh(tape.affine(dense_W, windows[..., t, :], dense_b))
        if net.arch == "lstm":
            h, c = lstm_step(p, x, h, c, tape)
        elif net.arch == "gru":
            h = gru_step(p, x, h, tape)
        else:
            h = mut1_step(p, x, h, tape)
    return tape.affine(nodes["out.W"], h, nodes["out.b"])


def network_forward(net: ValueNetwork, windows) -> np.ndarray:
    """Action values for one window ``(L, d)`` or a batch ``(B, L, d)``.

    Inference-only path: gate matrices are stacked and the input-side
    projections computed for all time steps at once. Agrees with
    :func:`forward_nodes` up to floating-point summation order.
    """
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim not in (2, 3) or windows.shape[-2:] != (net.window, net.input_dim):
        raise ShapeError(
            f"expected window shape (..., {net.window}, {net.input_dim}), got {windows.shape}"
        )
    P = net.params
    if net.arch == "nnet":
        h = np.tanh(windows[..., -1, :] @ P["dense.W"].T + P["dense.b"])
    else:
        X = np.tanh(windows @ P["dense.W"].T + P["dense.b"])
        h = np.zeros(windows.shape[:-2] + (net.hidden,))
        if net.arch == "lstm":
            h = _lstm_unroll(P, X, h)
        elif net.arch == "gru":
            h = _gru_unroll(P, X, h)
        else:
            h = _mut1_unroll(P, X, h)
    out = h @ P["out.W"].T + P["out.b"]
    if not np.isfinite(out).all():
        raise NonFiniteError(f"non-finite action values from {net.arch} network")
    return out


def _stack(P, names):
    return np.concatenate([P[n] for n in names], axis=0)


def _lstm_unroll(P, X, h):
    gates = ("i", "f", "o", "c")
    W = _stack(P, [f"rec.W_{g}" for g in gates])
    U = _stack(P, [f"rec.U_{g}" for g in gates]).T
    XW = X @ W.T + _stack(P, [f"rec.b_{g}" for g in gates])
    H = h.shape[-1]
    c = np.zeros_like(h)
    for t in range(X.shape[-2]):
        pre = XW[..., t, :] + h @ U
        ifo = expit(pre[..., : 3 * H])
        c = ifo[..., H:2 * H] * c + ifo[..., :H] * np.tanh(pre[..., 3 * H:])
        h = ifo[..., 2 * H:] * np.tanh(c)
    return h


def _gru_unroll(P, X, h):
    H = h.shape[-1]
    XZR = X @ _stack(P, ["rec.W_z", "rec.W_r"]).T + _stack(P, ["rec.b_z", "rec.b_r"])
    XH = X @ P["rec.W"].T + P["rec.b"]
    UZR = _stack(P, ["rec.U_z", "rec.U_r"]).T
    U = P["rec.U"].T
    for t in range(X.shape[-2]):
        zr = expit(XZR[..., t, :] + h @ UZR)
        z = zr[..., :H]
        h_tilde = np.tanh(XH[..., t, :] + (zr[..., H:] * h) @ U)
        h = (1.0 - z) * h + z * h_tilde
    return h


def _mut1_unroll(P, X, h):
    Z = expit(X @ P["rec.W_z"].T + P["rec.b_z"])
    XR = X @ P["rec.W_r"].T + P["rec.b_r"]
    TX = np.tanh(X) + P["rec.b"]
    Wh = P["rec.W_h"].T
    Whh = P["rec.W_hh"].T
    for t in range(X.shape[-2]):
        r = expit(XR[..., t, :] + h @ Wh)
        h_tilde = np.tanh((r * h) @ Whh + TX[..., t, :])
        z = Z[..., t, :]
        h = (1.0 - z) * h + z * h_tilde
    return h


def tape_forward(net: ValueNetwork, windows) -> np.ndarray:
    """Reference forward through the tape primitives (no recording)."""
    tape = Tape(record=False)
    return forward_nodes(net, tape, net.params.on_tape(tape), windows).value


@dataclass
class TargetSample:
    window: np.ndarray  # (L, d)
    action: int
    target: float


def train_batch(
    net: ValueNetwork,
    samples: Sequence[TargetSample],
    state: OptimizerState,
    rng: np.random.Generator,
    epochs: int = 2,
    batch_size: int = 10,
) -> list[float]:
    """Minibatch RMSprop on the loss masked to each sample's taken action.

    Returns the sample-weighted mean loss of each epoch.
    """
    if not samples:
        return []
    windows = np.stack([s.window for s in samples])
    actions = np.array([s.action for s in samples])
    targets = np.array([s.target for s in samples], dtype=np.float64)
    if actions.min() < 0 or actions.max() >= net.actions:
        raise ValueError("sample action index out of range")
    n = len(samples)
    rows = np.arange(batch_size)

    losses = []
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            k = len(idx)
            mask = np.zeros((k, net.actions))
            mask[rows[:k], actions[idx]] = 1.0
            target = mask * targets[idx, None]

            tape = Tape()
            nodes = net.params.on_tape(tape)
            pred = forward_nodes(net, tape, nodes, windows[idx])
            loss = tape.mse(pred, target, mask)
            rmsprop_update(net.params, tape.backward(loss), state)
            total += float(loss.value) * k
        losses.append(total / n)
    return losses


# -- checkpoints -------------------------------------------------------------
# An .npz archive: one array per parameter plus a "__meta__" JSON string
# {"version", "arch", "input_dim", "hidden", "actions", "window", "names"}.


def save_network(net: ValueNetwork, path) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "arch": net.arch,
        "input_dim": net.input_dim,
        "hidden": net.hidden,
        "actions": net.actions,
        "window": net.window,
        "names": net.params.names(),
    }
    arrays = {name: value for name, value in net.params.items()}
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.array(json.dumps(meta)), **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_network(path) -> ValueNetwork:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')!r}")
        params = ParameterSet({name: data[name] for name in meta["names"]})
    expected = param_shapes(meta["arch"], meta["input_dim"], meta["hidden"], meta["actions"])
    got = {k: v.shape for k, v in params.items()}
    if got != expected:
        raise ValueError("checkpoint parameter shapes do not match its header")
    return ValueNetwork(
        meta["arch"], meta["input_dim"], meta["hidden"], meta["actions"], meta["window"], params
    )

"""Reverse-mode automatic differentiation on an explicit tape.

The primitive set is deliberately small: dense matmul, broadcast add /
elementwise multiply, tanh, sigmoid, squared Euclidean norm, l1 norm,
slicing and concatenation along one axis, and sin/cos.  Recurrent cells
and the AC measurement equations are composed from these primitives; no
graph compilation or fusion happens anywhere.

Forward values are computed eagerly and cached on the node when an op is
recorded.  The backward sweep walks the node list in reverse creation
order (creation order is a valid topological order, since an op can only
consume nodes that already exist) and routes cotangents through closures
over the cached values — it never re-runs a forward computation, which
the per-op counters make checkable.

A ``Tape`` is single-threaded; independent tapes share no state and may
run in parallel.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Array = np.ndarray


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum a cotangent down to ``shape``, undoing numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def _stable_sigmoid(x: Array) -> Array:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Node:
    """One tape entry: cached value, op kind, parent refs, gradient slot."""

    __slots__ = ("value", "op", "parents", "grad", "index", "_pulls")

    def __init__(self, value: Array, op: str, parents: tuple["Node", ...],
                 pulls: tuple, index: int):
        self.value = value
        self.op = op
        self.parents = parents
        self.grad: Array | None = None
        self.index = index
        self._pulls = pulls  # one closure per parent: cotangent -> contribution

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Node#{self.index}<{self.op} {self.value.shape}>"


class Tape:
    """Records primitive ops eagerly; replays them in reverse for gradients.

    ``op_counts`` tracks how many times each primitive was recorded; the
    backward pass never touches it, so a snapshot taken after the forward
    build must equal the counter after ``grad()``.
    """

    def __init__(self) -> None:
        self._nodes: list[Node] = []
        self.op_counts: Counter = Counter()

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, value, op: str, parents: tuple[Node, ...],
                pulls: tuple) -> Node:
        node = Node(np.asarray(value, dtype=float), op, parents, pulls,
                    len(self._nodes))
        self._nodes.append(node)
        self.op_counts[op] += 1
        return node

    # ------------------------------------------------------------------
    # graph construction
    # ------------------------------------------------------------------

    def leaf(self, value) -> Node:
        """Enter an input (parameter, data, or constant) onto the tape."""
        return self._record(value, "leaf", (), ())

    def constant(self, value) -> Node:
        return self.leaf(value)

    def add(self, a: Node, b: Node) -> Node:
        ash, bsh = a.value.shape, b.value.shape
        return self._record(a.value + b.value, "add", (a, b),
                            (lambda g: _unbroadcast(g, ash),
                             lambda g: _unbroadcast(g, bsh)))

    def mul(self, a: Node, b: Node) -> Node:
        av, bv = a.value, b.value
        return self._record(av * bv, "mul", (a, b),
                            (lambda g: _unbroadcast(g * bv, av.shape),
                             lambda g: _unbroadcast(g * av, bv.shape)))

    def matmul(self, a: Node, b: Node) -> Node:
        av, bv = a.value, b.value
        if av.ndim == 2 and bv.ndim == 2:
            pulls = (lambda g: g @ bv.T, lambda g: av.T @ g)
        elif av.ndim == 2 and bv.ndim == 1:
            pulls = (lambda g: np.outer(g, bv), lambda g: av.T @ g)
        elif av.ndim == 1 and bv.ndim == 2:
            pulls = (lambda g: g @ bv.T, lambda g: np.outer(av, g))
        else:
            raise ValueError(
                f"matmul supports 2d@2d, 2d@1d, 1d@2d; got {av.ndim}d @ {bv.ndim}d")
        return self._record(av @ bv, "matmul", (a, b), pulls)

    def tanh(self, a: Node) -> Node:
        t = np.tanh(a.value)
        return self._record(t, "tanh", (a,), (lambda g: g * (1.0 - t * t),))

    def sigmoid(self, a: Node) -> Node:
        s = _stable_sigmoid(a.value)
        return self._record(s, "sigmoid", (a,), (lambda g: g * s * (1.0 - s),))

    def sin(self, a: Node) -> Node:
        c = np.cos(a.value)
        return self._record(np.sin(a.value), "sin", (a,), (lambda g: g * c,))

    def cos(self, a: Node) -> Node:
        s = np.sin(a.value)
        return self._record(np.cos(a.value), "cos", (a,), (lambda g: -g * s,))

    def sqnorm(self, a: Node) -> Node:
        """Sum of squares over all elements (scalar output)."""
        av = a.value
        return self._record((av * av).sum(), "sqnorm", (a,),
                            (lambda g: 2.0 * g * av,))

    def l1norm(self, a: Node) -> Node:
        """Sum of absolute values; subgradient at 0 taken as 0."""
        sgn = np.sign(a.value)
        return self._record(np.abs(a.value).sum(), "l1norm", (a,),
                            (lambda g: g * sgn,))

    def slice_axis(self, a: Node, axis: int, start: int, stop: int) -> Node:
        key = [slice(None)] * a.value.ndim
        key[axis] = slice(start, stop)
        key = tuple(key)
        shape = a.value.shape

        def pull(g, key=key, shape=shape):
            out = np.zeros(shape)
            out[key] = g
            return out

        return self._record(a.value[key], "slice", (a,), (pull,))

    def concat(self, parts: Sequence[Node], axis: int = 0) -> Node:
        parts = tuple(parts)
        sizes = [p.value.shape[axis] for p in parts]
        offsets = np.concatenate(([0], np.cumsum(sizes)))
        pulls = []
        for i, p in enumerate(parts):
            key = [slice(None)] * p.value.ndim
            key[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
            pulls.append(lambda g, key=tuple(key): g[key])
        value = np.concatenate([p.value for p in parts], axis=axis)
        return self._record(value, "concat", parts, tuple(pulls))

    # composites (recorded as the primitives they expand to)

    def scale(self, a: Node, k: float) -> Node:
        return self.mul(a, self.leaf(np.asarray(k, dtype=float)))

    def sub(self, a: Node, b: Node) -> Node:
        return self.add(a, self.scale(b, -1.0))

    def affine(self, x: Node, w: Node, b: Node) -> Node:
        return self.add(self.matmul(x, w), b)

    # ------------------------------------------------------------------
    # differentiation
    # ------------------------------------------------------------------

    def grad(self, root: Node, leaves: Sequence[Node]) -> list[Array]:
        """Gradients of a scalar ``root`` with respect to ``leaves``.

        Leaves the root does not depend on get zero gradients.  Gradient
        slots are reset on every call, so repeated calls are safe.
        """
        if root.value.size != 1:
            raise ValueError(
                f"gradient root must be scalar, got shape {root.value.shape}")
        for n in self._nodes:
            n.grad = None
        root.grad = np.ones_like(root.value)
        for n in reversed(self._nodes[: root.index + 1]):
            g = n.grad
            if g is None:
                continue
            for parent, pull in zip(n.parents, n._pulls):
                contrib = pull(g)
                parent.grad = contrib if parent.grad is None \
                    else parent.grad + contrib
        return [np.zeros_like(leaf.value) if leaf.grad is None else leaf.grad
                for leaf in leaves]


# ----------------------------------------------------------------------
# Adam
# ----------------------------------------------------------------------

@dataclass
class AdamState:
    """Adam moment accumulators for a fixed list of parameters."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Array], lr: float = 1e-3,
                   beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8) -> "AdamState":
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
        return state


def adam_step(state: AdamState, params: Sequence[Array],
              grads: Sequence[Array]) -> list[Array]:
    """One bias-corrected Adam update; returns the new parameter arrays."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter/gradient count mismatch")
    state.step += 1
    b1c = 1.0 - state.beta1 ** state.step
    b2c = 1.0 - state.beta2 ** state.step
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ValueError(
                f"shape mismatch at parameter {i}: {p.shape} vs {g.shape}")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[i] / b1c
        v_hat = state.v[i] / b2c
        out.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return out


# ----------------------------------------------------------------------
# finite-difference oracle
# ----------------------------------------------------------------------

@dataclass
class FdReport:
    """Per-parameter worst relative error of tape gradients vs central FD."""

    worst: list
    max_rel_error: float
    kinks: list  # (param index, flat element index) near nondifferentiable points


def finite_diff_check(build: Callable[[Tape, list[Node]], Node],
                      point: Sequence[Array], h: float = 1e-5) -> FdReport:
    """Compare tape gradients of a scalar function against central differences.

    ``build`` receives a fresh tape plus leaf nodes at ``point`` and returns
    the scalar root; it is re-invoked for every probe, so it must be a pure
    function of its leaves.  Elements where the forward and backward
    one-sided differences disagree beyond the smooth-curvature budget
    (gap > sqrt(h)·(1+|central|)) are flagged as kinks and excluded from
    the error statistics — the l1 norm at zero is the motivating case.

    This is a test oracle, not a training tool: cost is two function
    evaluations per scalar parameter element.
    """
    point = [np.asarray(p, dtype=float) for p in point]

    def value_at(arrays: list[Array]) -> float:
        tape = Tape()
        leaves = [tape.leaf(a) for a in arrays]
        return float(build(tape, leaves).value)

    tape = Tape()
    leaves = [tape.leaf(a) for a in point]
    root = build(tape, leaves)
    analytic = tape.grad(root, leaves)
    f0 = float(root.value)

    kink_gap = np.sqrt(h)
    worst: list[float] = []
    kinks: list[tuple[int, int]] = []
    for pi, base in enumerate(point):
        err_max = 0.0
        flat = base.ravel()
        for k in range(flat.size):
            probe = [a.copy() for a in point]
            probe[pi].ravel()[k] = flat[k] + h
            fp = value_at(probe)
            probe[pi].ravel()[k] = flat[k] - h
            fm = value_at(probe)
            central = (fp - fm) / (2.0 * h)
            fwd = (fp - f0) / h
            bwd = (f0 - fm) / h
            if abs(fwd - bwd) > kink_gap * (1.0 + abs(central)):
                kinks.append((pi, k))
                continue
            a = float(analytic[pi].ravel()[k])
            err = abs(a - central) / max(abs(a), abs(central), 1e-6)
            err_max = max(err_max, err)
        worst.append(err_max)
    return FdReport(worst=worst,
                    max_rel_error=max(worst) if worst else 0.0,
                    kinks=kinks)

"""Dense float64 arithmetic and a small reverse-mode gradient tape.

The tape works at vector granularity: each recorded operation stores one
closure that pushes the output gradient back to its inputs. Parameters are
:class:`Param` nodes whose gradient buffers persist across tapes, so a
mini-batch is simply several forward passes on one tape followed by a single
:meth:`Tape.backward`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64
REL_ERROR_EPS = 1e-6
GRAD_CHECK_MAX_COORDS = 200


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        desc = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {desc}")


class Node:
    """A value produced on (or fed into) a tape."""

    __slots__ = ("value", "grad", "requires_grad")

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.value.shape})"


class Param(Node):
    """A named trainable (or frozen) parameter group.

    ``grad`` always has the shape of ``value`` and is only cleared by
    :meth:`zero_grad`.
    """

    __slots__ = ("name", "frozen")

    def __init__(self, name: str, value, frozen: bool = False):
        super().__init__(np.array(value, dtype=DTYPE), requires_grad=not frozen)
        if self.value.ndim == 0 or 0 in self.value.shape:
            raise ShapeError(f"param {name!r}", self.value.shape)
        self.name = name
        self.frozen = frozen
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad.fill(0.0)

    def _accumulate(self, g):
        if not self.frozen:
            self.grad += g

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.value.shape}, frozen={self.frozen})"


def _needs(*nodes: Node) -> bool:
    return any(n.requires_grad for n in nodes)


def _check_same(op, a: Node, b: Node):
    if a.shape != b.shape:
        raise ShapeError(op, a.shape, b.shape)


class Tape:
    """Records backward closures in execution order.

    ``Tape(grad=False)`` records nothing; use it for inference.
    """

    def __init__(self, grad: bool = True):
        self.grad_enabled = grad
        self._backward: list[Callable[[], None]] = []

    def __len__(self):
        return len(self._backward)

    def record(self, fn: Callable[[], None]):
        self._backward.append(fn)

    def output(self, value, *inputs: Node) -> Node:
        return Node(value, requires_grad=self.grad_enabled and _needs(*inputs))

    def backward(self, loss: Node):
        if loss.value.shape != ():
            raise ShapeError("backward (scalar loss expected)", loss.shape)
        loss.grad = np.ones((), dtype=DTYPE)
        for fn in reversed(self._backward):
            fn()
        self._backward.clear()

    def constant(self, value) -> Node:
        return Node(value, requires_grad=False)

    # --- linear algebra -------------------------------------------------

    def affine(self, W: Node, x: Node, b: Node) -> Node:
        if W.value.ndim != 2 or x.value.ndim != 1 or b.value.ndim != 1:
            raise ShapeError("affine", W.shape, x.shape, b.shape)
        if W.shape[1] != x.shape[0] or W.shape[0] != b.shape[0]:
            raise ShapeError("affine", W.shape, x.shape, b.shape)
        out = self.output(W.value @ x.value + b.value, W, x, b)
        if out.requires_grad:
            def backward():
                g = out.grad
                if g is None:
                    return
                if W.requires_grad:
                    W._accumulate(np.outer(g, x.value))
                if x.requires_grad:
                    x._accumulate(W.value.T @ g)
                b._accumulate(g)
            self.record(backward)
        return out

    def add(self, a: Node, b: Node) -> Node:
        _check_same("add", a, b)
        out = self.output(a.value + b.value, a, b)
        if out.requires_grad:
            def backward():
                if out.grad is not None:
                    a._accumulate(out.grad)
                    b._accumulate(out.grad)
            self.record(backward)
        return out

    def mul(self, a: Node, b: Node) -> Node:
        _check_same("mul", a, b)
        out = self.output(a.value * b.value, a, b)
        if out.requires_grad:
            def backward():
                g = out.grad
                if g is None:
                    return
                a._accumulate(g * b.value)
                b._accumulate(g * a.value)
            self.record(backward)
        return out

    def sum(self, x: Node) -> Node:
        out = self.output(np.sum(x.value), x)
        if out.requires_grad:
            def backward():
                if out.grad is not None:
                    x._accumulate(np.full(x.shape, out.grad))
            self.record(backward)
        return out

    def mean(self, xs: Sequence[Node]) -> Node:
        """Elementwise mean of equally shaped nodes (scalars included)."""
        if not xs:
            raise ShapeError("mean (empty input)", ())
        for x in xs[1:]:
            _check_same("mean", xs[0], x)
        n = len(xs)
        out = self.output(sum(x.value for x in xs) / n, *xs)
        if out.requires_grad:
            def backward():
                if out.grad is None:
                    return
                g = out.grad / n
                for x in xs:
                    x._accumulate(g)
            self.record(backward)
        return out

    # --- nonlinearities -------------------------------------------------

    def tanh(self, x: Node) -> Node:
        y = np.tanh(x.value)
        out = self.output(y, x)
        if out.requires_grad:
            def backward():
                if out.grad is not None:
                    x._accumulate(out.grad * (1.0 - y * y))
            self.record(backward)
        return out

    def relu(self, x: Node) -> Node:
        mask = x.value > 0
        out = self.output(np.where(mask, x.value, 0.0), x)
        if out.requires_grad:
            def backward():
                if out.grad is not None:
                    x._accumulate(out.grad * mask)
            self.record(backward)
        return out

    def sigmoid(self, x: Node) -> Node:
        y = sigmoid(x.value)
        out = self.output(y, x)
        if out.requires_grad:
            def backward():
                if out.grad is not None:
                    x._accumulate(out.grad * y * (1.0 - y))
            self.record(backward)
        return out

    def rows(self, table: Node, indices: Sequence[int]) -> list[Node]:
        """Look up rows of a matrix; gradients land only in those rows."""
        outs = []
        for i in indices:
            out = self.output(table.value[i].copy(), table)
            if out.requires_grad:
                def backward(out=out, i=i):
                    if out.grad is None:
                        return
                    if isinstance(table, Param):
                        if not table.frozen:
                            table.grad[i] += out.grad
                    else:
                        g = np.zeros_like(table.value)
                        g[i] = out.grad
                        table._accumulate(g)
                self.record(backward)
            outs.append(out)
        return outs

    def softmax_cross_entropy(self, logits: Node, target: int) -> Node:
        """-log softmax(logits)[target], with the fused (p - onehot) backward."""
        z = logits.value
        if z.ndim != 1 or z.size == 0:
            raise ShapeError("softmax_cross_entropy", z.shape)
        if not 0 <= target < z.size:
            raise IndexError(f"target {target} out of range for {z.size} classes")
        shifted = z - z.max()
        log_norm = math.log(np.exp(shifted).sum())
        out = self.output(log_norm - shifted[target], logits)
        if out.requires_grad:
            def backward():
                if out.grad is None:
                    return
                p = np.exp(shifted - log_norm)
                p[target] -= 1.0
                logits._accumulate(out.grad * p)
            self.record(backward)
        return out


# --- plain array functions ----------------------------------------------


def affine(W, x, b):
    W, x, b = (np.asarray(a, dtype=DTYPE) for a in (W, x, b))
    if W.ndim != 2 or W.shape[1] != x.shape[0] or W.shape[0] != b.shape[0]:
        raise ShapeError("affine", W.shape, x.shape, b.shape)
    return W @ x + b


def sigmoid(x):
    # tanh form stays finite for any finite input
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=DTYPE)))


def relu(x):
    x = np.asarray(x, dtype=DTYPE)
    return np.where(x > 0, x, 0.0)


def tanh(x):
    return np.tanh(np.asarray(x, dtype=DTYPE))


def softmax(z):
    z = np.asarray(z, dtype=DTYPE)
    if z.ndim != 1 or z.size == 0:
        raise ShapeError("softmax", z.shape)
    e = np.exp(z - z.max())
    return e / e.sum()


def cross_entropy(p, target: int) -> float:
    p = np.asarray(p, dtype=DTYPE)
    if p.ndim != 1 or p.size == 0:
        raise ShapeError("cross_entropy", p.shape)
    if not 0 <= target < p.size:
        raise IndexError(f"target {target} out of range for {p.size} classes")
    if p[target] <= 0.0:
        return math.inf
    return -math.log(p[target]) + 0.0


def cosine_similarity(u, v) -> float:
    """Cosine of the angle between ``u`` and ``v``; 0.0 if either is zero."""
    u = np.asarray(u, dtype=DTYPE)
    v = np.asarray(v, dtype=DTYPE)
    if u.shape != v.shape:
        raise ShapeError("cosine_similarity", u.shape, v.shape)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    c = float(u @ v) / (nu * nv)
    return min(1.0, max(-1.0, c))


def global_norm(params: Iterable[Param]) -> float:
    return math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params))


def clip_grad_norm(params: Sequence[Param], max_norm: float) -> float:
    """Rescale gradients in place so their global norm is at most ``max_norm``.

    Returns the norm measured before clipping.
    """
    norm = global_norm(params)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for p in params:
            p.grad *= scale
    return norm


# --- finite-difference verification --------------------------------------


@dataclass
class GradCheckReport:
    tolerance: float
    max_rel_error: dict[str, float] = field(default_factory=dict)
    checked: dict[str, int] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures and all(
            e < self.tolerance for e in self.max_rel_error.values())

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    def lines(self) -> list[str]:
        out = []
        for name, err in self.max_rel_error.items():
            status = "ok" if err < self.tolerance and name not in self.failures else "FAIL"
            out.append(f"{name:<16} n={self.checked[name]:<4d} max_rel_err={err:.3e}  {status}")
        for name, msg in self.failures.items():
            if name not in self.max_rel_error:
                out.append(f"{name:<16} FAIL  {msg}")
        return out

    def __str__(self):
        return "\n".join(self.lines())


def relative_error(a: float, n: float, eps: float = REL_ERROR_EPS) -> float:
    return abs(a - n) / max(abs(a), abs(n), eps)


def grad_check(loss_fn: Callable[[Tape], Node], params: Sequence[Param],
               step: float = 1e-5, tolerance: float = 1e-4,
               max_coords: int = GRAD_CHECK_MAX_COORDS,
               seed: int = 0) -> GradCheckReport:
    """Compare tape gradients of ``loss_fn`` with central differences.

    ``loss_fn`` receives a fresh :class:`Tape` and returns a scalar node.
    Groups larger than ``max_coords`` are checked on a fixed-seed subsample.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    params = [p for p in params if not p.frozen]
    report = GradCheckReport(tolerance=tolerance)
    for p in params:
        p.zero_grad()
    tape = Tape()
    loss = loss_fn(tape)
    if not np.isfinite(loss.value):
        for p in params:
            report.failures[p.name] = f"non-finite loss {float(loss.value)}"
        return report
    tape.backward(loss)
    analytic = {p.name: p.grad.copy() for p in params}

    rng = np.random.default_rng(seed)
    for p in params:
        flat = p.value.reshape(-1)
        g = analytic[p.name].reshape(-1)
        if flat.size > max_coords:
            coords = rng.permutation(flat.size)[:max_coords]
        else:
            coords = np.arange(flat.size)
        worst = 0.0
        for k in coords:
            orig = flat[k]
            flat[k] = orig + step
            f_plus = float(loss_fn(Tape()).value)
            flat[k] = orig - step
            f_minus = float(loss_fn(Tape()).value)
            flat[k] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                report.failures[p.name] = f"non-finite loss at coordinate {int(k)}"
                break
            numeric = (f_plus - f_minus) / (2.0 * step)
            worst = max(worst, relative_error(float(g[k]), numeric))
        report.max_rel_error[p.name] = worst
        report.checked[p.name] = len(coords)
    for p in params:
        p.zero_grad()
    return report

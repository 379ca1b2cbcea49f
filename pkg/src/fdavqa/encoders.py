"""One-layer LSTM cell and the question / visual sequence encoders."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .numerics import DTYPE, Node, Param, ShapeError, Tape

GATES = ("i", "f", "o", "g")
INIT_SCALE = 0.08
FORGET_BIAS = 1.0


class LSTMParams:
    """Per-gate input weights W_*, recurrent weights U_* and biases b_*.

    Each gate's :class:`Param` is a view into one stacked buffer (gate order
    i, f, o, g), so a step costs one matrix-vector product per input.
    """

    def __init__(self, prefix: str, input_dim: int, state_dim: int, values: dict | None = None):
        if input_dim <= 0 or state_dim <= 0:
            raise ShapeError(f"{prefix} lstm dims", (input_dim, state_dim))
        self.prefix = prefix
        self.input_dim = input_dim
        self.state_dim = state_dim
        values = values or {}
        H = state_dim
        self.W_all = np.zeros((4 * H, input_dim), dtype=DTYPE)
        self.U_all = np.zeros((4 * H, H), dtype=DTYPE)
        self.b_all = np.zeros(4 * H, dtype=DTYPE)
        self.gW_all = np.zeros_like(self.W_all)
        self.gU_all = np.zeros_like(self.U_all)
        self.gb_all = np.zeros_like(self.b_all)
        self.W, self.U, self.b = {}, {}, {}
        for k, g in enumerate(GATES):
            rows = slice(k * H, (k + 1) * H)
            for store, name, buf, gbuf in ((self.W, f"W_{g}", self.W_all, self.gW_all),
                                           (self.U, f"U_{g}", self.U_all, self.gU_all),
                                           (self.b, f"b_{g}", self.b_all, self.gb_all)):
                if name in values:
                    v = np.asarray(values[name], dtype=DTYPE)
                    if v.shape != buf[rows].shape:
                        raise ShapeError(f"{prefix}.{name}", v.shape, buf[rows].shape)
                    buf[rows] = v
                p = Param(f"{prefix}.{name}", buf[rows])
                p.value = buf[rows]
                p.grad = gbuf[rows]
                store[g] = p

    @classmethod
    def init(cls, prefix, input_dim, state_dim, rng, scale=INIT_SCALE, forget_bias=FORGET_BIAS):
        values = {}
        for g in GATES:
            values[f"W_{g}"] = rng.uniform(-scale, scale, (state_dim, input_dim))
            values[f"U_{g}"] = rng.uniform(-scale, scale, (state_dim, state_dim))
            values[f"b_{g}"] = np.full(state_dim, forget_bias if g == "f" else 0.0)
        return cls(prefix, input_dim, state_dim, values)

    def params(self) -> list[Param]:
        return [d[g] for g in GATES for d in (self.W, self.U, self.b)]


@dataclass
class LSTMState:
    h: Node
    c: Node

    @classmethod
    def zeros(cls, state_dim: int) -> "LSTMState":
        return cls(Node(np.zeros(state_dim)), Node(np.zeros(state_dim)))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_step(tape: Tape, params: LSTMParams, state: LSTMState, x: Node) -> LSTMState:
    """One LSTM update recorded as a single tape operation."""
    if x.value.shape != (params.input_dim,):
        raise ShapeError(f"{params.prefix} lstm input", x.shape, (params.input_dim,))
    if state.h.shape != (params.state_dim,) or state.c.shape != (params.state_dim,):
        raise ShapeError(f"{params.prefix} lstm state", state.h.shape, state.c.shape)
    H = params.state_dim
    xv, hv, cv = x.value, state.h.value, state.c.value
    z = params.W_all @ xv + params.U_all @ hv + params.b_all
    ifo = _sigmoid(z[:3 * H])
    i, f, o = ifo[:H], ifo[H:2 * H], ifo[2 * H:]
    g = np.tanh(z[3 * H:])
    c_new = f * cv + i * g
    tc = np.tanh(c_new)
    h_new = o * tc

    grad = tape.grad_enabled
    h_out = Node(h_new, requires_grad=grad)
    c_out = Node(c_new, requires_grad=grad)
    if grad:
        def backward():
            gh = h_out.grad
            gc = c_out.grad
            if gh is None and gc is None:
                return
            if gh is None:
                gh = np.zeros(H)
            dc = gh * o * (1.0 - tc * tc)
            if gc is not None:
                dc = dc + gc
            da = np.empty(4 * H)
            da[:H] = dc * g
            da[H:2 * H] = dc * cv
            da[2 * H:3 * H] = gh * tc
            da[:3 * H] *= ifo * (1.0 - ifo)
            da[3 * H:] = dc * i * (1.0 - g * g)
            params.gW_all += np.outer(da, xv)
            params.gU_all += np.outer(da, hv)
            params.gb_all += da
            x._accumulate(params.W_all.T @ da)
            state.h._accumulate(params.U_all.T @ da)
            state.c._accumulate(dc * f)
        tape.record(backward)
    return LSTMState(h_out, c_out)


def run_lstm(tape: Tape, params: LSTMParams, inputs: Sequence[Node]) -> list[LSTMState]:
    """Fold :func:`lstm_step` from the zero state; returns every state."""
    state = LSTMState.zeros(params.state_dim)
    states = []
    for x in inputs:
        state = lstm_step(tape, params, state, x)
        states.append(state)
    return states


def encode_question(tape: Tape, params: LSTMParams, embeddings: Sequence[Node]) -> Node:
    """Final hidden state over the word embeddings (zero vector if empty)."""
    states = run_lstm(tape, params, embeddings)
    if not states:
        return Node(np.zeros(params.state_dim, dtype=DTYPE))
    return states[-1].h


def encode_visual(tape: Tape, params: LSTMParams, feed: Sequence[Node],
                  projection: tuple[Param, Param] | None = None) -> Node:
    """Final hidden state over the attention feed sequence.

    ``projection`` is an optional (W, b) affine map applied to each feature
    before it enters the cell.
    """
    if not feed:
        raise ValueError("visual feed sequence is empty")
    xs = []
    for x in feed:
        if projection is not None:
            W, bias = projection
            if x.shape != (W.shape[1],):
                raise ShapeError("visual projection", W.shape, x.shape)
            x = tape.affine(W, x, bias)
        elif x.shape != (params.input_dim,):
            raise ShapeError("visual feature", x.shape, (params.input_dim,))
        xs.append(x)
    return run_lstm(tape, params, xs)[-1].h

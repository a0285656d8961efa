"""Optimal average-cost scheduling on a truncated age state space.

States are canonical age triples (s <= r <= d, a relay copy no fresher than
D stored as r = d) with s <= cap_s, fresh relay ages r <= cap_r and
d <= cap_d. Ages beyond a cap are clamped by :func:`aorelay.model.saturate`,
which keeps every freshness relation intact so no clamped state looks better
informed than the real one.

The decision epoch is the start of a slot, after that slot's generation
event; the cost of a slot is D's age in the next slot, so the gain is the
time-average AoI as measured by the simulator.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse

from .model import (
    AoiState,
    ChannelParams,
    InfeasibleOperation,
    Operation,
    ParameterError,
    SlotOutcome,
    check_caps,
    check_gen_prob,
    decide_rp,
    decide_sp,
    feasible_ops,
    saturate,
    step,
)

log = logging.getLogger(__name__)

MAX_STATES = 5_000_000
OPS = (Operation.N, Operation.R, Operation.S)


class NotConverged(RuntimeError):
    """RVI hit ``max_iters``; ``policy`` holds the last greedy policy."""

    def __init__(self, span: float, iterations: int, policy: "PolicyTable"):
        super().__init__(f"value span {span:.3g} after {iterations} iterations")
        self.span = span
        self.iterations = iterations
        self.policy = policy


@dataclass(frozen=True)
class MdpConfig:
    cap_s: int = 30
    cap_r: int = 60
    cap_d: int = 120
    epsilon: float = 1e-6
    max_iters: int = 20_000
    max_states: int = MAX_STATES

    def __post_init__(self):
        check_caps(self.caps)
        if not self.epsilon > 0:
            raise ParameterError("epsilon must be positive")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be positive")

    @property
    def caps(self) -> tuple[int, int, int]:
        return (self.cap_s, self.cap_r, self.cap_d)


# -- state space ----------------------------------------------------------------


def _state_array(caps) -> np.ndarray:
    cap_s, cap_r, cap_d = caps
    blocks = [np.repeat(np.arange(cap_d + 1), 3).reshape(-1, 3)]
    for s in range(cap_s + 1):
        for d in range(s + 1, cap_d + 1):
            rs = np.concatenate(([s], np.arange(s + 1, min(cap_r, d - 1) + 1), [d]))
            blk = np.empty((len(rs), 3), dtype=np.int64)
            blk[:, 0] = s
            blk[:, 1] = rs
            blk[:, 2] = d
            blocks.append(blk)
    states = np.concatenate(blocks).astype(np.int64)
    order = np.lexsort((states[:, 2], states[:, 1], states[:, 0]))
    return states[order]


def count_states(caps) -> int:
    cap_s, cap_r, cap_d = check_caps(caps)
    total = cap_d + 1
    for s in range(cap_s + 1):
        for d in range(s + 1, cap_d + 1):
            total += 2 + max(0, min(cap_r, d - 1) - s)
    return total


def enumerate_states(config: MdpConfig) -> np.ndarray:
    """All canonical states for ``config``'s caps, as an (n, 3) array.

    Row 0 is (0, 0, 0). Raises if the count exceeds ``config.max_states``.
    """
    n = count_states(config.caps)
    if n > config.max_states:
        raise ParameterError(f"{n} states exceed the limit of {config.max_states}")
    return _state_array(config.caps)


def saturate_array(s, r, d, caps):
    """Vectorised :func:`aorelay.model.saturate` over integer arrays."""
    cap_s, cap_r, cap_d = caps
    r = np.minimum(r, d)
    empty = s == d
    s2 = np.minimum(s, cap_s)
    d2 = np.maximum(np.minimum(d, cap_d), s2 + 1)
    mid = np.minimum(np.maximum(np.minimum(r, cap_r), s2 + 1), d2 - 1)
    mid = np.where(mid <= s2, d2, mid)
    r2 = np.where(r == d, d2, np.where(r == s, s2, mid))
    d_empty = np.minimum(d, cap_d)
    return (
        np.where(empty, d_empty, s2),
        np.where(empty, d_empty, r2),
        np.where(empty, d_empty, d2),
    )


class StateIndex:
    """Dense lookup from a canonical triple to its row in the state array."""

    def __init__(self, states: np.ndarray, caps):
        self.states = states
        self.caps = tuple(caps)
        size = caps[2] + 1
        self._idx = np.full((size, size, size), -1, dtype=np.int32 if len(states) < 2**31 else np.int64)
        self._idx[states[:, 0], states[:, 1], states[:, 2]] = np.arange(len(states))

    def __len__(self):
        return len(self.states)

    def lookup(self, s, r, d):
        out = self._idx[s, r, d]
        if np.any(out < 0):
            raise KeyError("triple outside the canonical state space")
        return out


# -- transitions ------------------------------------------------------------------


def _outcomes(op: Operation, channel: ChannelParams, p: float):
    """(probability, SlotOutcome) for every joint outcome the operation can see."""
    p1, p2, p3 = channel.as_tuple()
    gens = ((True, p), (False, 1.0 - p))
    if op is Operation.S:
        links = [
            ((sd, sr), (p1 if sd else 1 - p1) * (p2 if sr else 1 - p2))
            for sd, sr in itertools.product((True, False), repeat=2)
        ]
        for (g, pg), ((sd, sr), pl) in itertools.product(gens, links):
            yield pg * pl, SlotOutcome(g, sd, sr, False)
    elif op is Operation.R:
        for (g, pg), rd in itertools.product(gens, (True, False)):
            yield pg * (p3 if rd else 1 - p3), SlotOutcome(g, False, False, rd)
    else:
        for g, pg in gens:
            yield pg, SlotOutcome(g, False, False, False)


def transition_kernel(state, op, channel: ChannelParams, p: float, caps=(30, 60, 120)) -> dict:
    """Distribution of the next truncated state after ``op`` from ``state``.

    Outcomes with zero probability are dropped; duplicates are merged.
    """
    caps = check_caps(caps)
    p = check_gen_prob(p, allow_zero=True)
    state = AoiState(*state)
    op = Operation(op)
    if op not in feasible_ops(state):
        raise InfeasibleOperation(f"{op.name} is not feasible in {tuple(state)}")
    dist: dict = {}
    for prob, outcome in _outcomes(op, channel, p):
        if prob == 0.0:
            continue
        nxt = saturate(step(state, op, outcome), caps)
        dist[nxt] = dist.get(nxt, 0.0) + prob
    return dist


def feasible_mask(states: np.ndarray) -> np.ndarray:
    """Boolean (3, n) array; row k says whether ``OPS[k]`` is feasible."""
    s, r, d = states.T
    return np.vstack([np.ones(len(states), bool), r < d, s < d])


def build_transition_matrices(states: np.ndarray, index: StateIndex, channel: ChannelParams, p: float):
    """One sparse (n x n) matrix per operation in ``OPS`` order.

    Rows where the operation is infeasible are all zero.
    """
    p1, p2, p3 = channel.as_tuple()
    caps = index.caps
    n = len(states)
    feas = feasible_mask(states)
    mats = []
    for k, op in enumerate(OPS):
        rows = np.flatnonzero(feas[k])
        s, r, d = (states[rows, j] for j in range(3))
        parts = []
        for g, pg in ((1, p), (0, 1.0 - p)):
            if pg == 0.0:
                continue
            ns = np.zeros_like(s) if g else s + 1
            if op is Operation.S:
                combos = [
                    (s + 1 if a else d + 1, s + 1 if b else r + 1, pg * (p1 if a else 1 - p1) * (p2 if b else 1 - p2))
                    for a in (1, 0) for b in (1, 0)
                ]
            elif op is Operation.R:
                combos = [(r + 1 if a else d + 1, r + 1, pg * (p3 if a else 1 - p3)) for a in (1, 0)]
            else:
                combos = [(d + 1, r + 1, pg)]
            for nd, nr, prob in combos:
                if prob == 0.0:
                    continue
                cols = index.lookup(*saturate_array(ns, nr, nd, caps))
                parts.append((rows, cols, np.full(len(rows), prob)))
        if parts:
            rr, cc, vv = (np.concatenate(x) for x in zip(*parts))
        else:
            rr = cc = np.zeros(0, dtype=np.int64)
            vv = np.zeros(0)
        mats.append(sparse.csr_matrix((vv, (rr, cc)), shape=(n, n)))
    return mats


def policy_matrix(mats, actions: np.ndarray):
    """Transition matrix of the stationary policy ``actions`` (indices into ``OPS``)."""
    n = mats[0].shape[0]
    out = sparse.csr_matrix((n, n))
    for k, m in enumerate(mats):
        sel = sparse.diags((actions == k).astype(float))
        out = out + sel @ m
    return out.tocsr()


# -- policy table -------------------------------------------------------------------


@dataclass
class PolicyTable:
    """Stationary policy over the canonical truncated states.

    ``actions[i]`` is the ``Operation`` value for ``states[i]``. Ages beyond
    the caps are clamped with :func:`saturate` before lookup.
    """

    caps: tuple
    states: np.ndarray = field(repr=False)
    actions: np.ndarray = field(repr=False)
    gain: float = math.nan
    span_residual: float = math.nan
    iterations: int = 0
    span_history: list = field(default_factory=list, repr=False)
    meta: dict = field(default_factory=dict)
    values: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.caps = check_caps(self.caps)
        self.actions = np.asarray(self.actions, dtype=np.int8)
        self._dense = None

    def dense(self) -> np.ndarray:
        """int8 array indexed [s, r, d] over (cap_d + 1)**3, N where undefined."""
        if self._dense is None:
            size = self.caps[2] + 1
            table = np.zeros((size, size, size), dtype=np.int8)
            table[self.states[:, 0], self.states[:, 1], self.states[:, 2]] = self.actions
            self._dense = table
        return self._dense

    def lookup(self, state) -> Operation:
        s, r, d = saturate(AoiState(*state), self.caps)
        if s == d:
            return Operation.N
        return Operation(int(self.dense()[s, r, d]))

    def items(self):
        for row, a in zip(self.states.tolist(), self.actions.tolist()):
            yield AoiState(*row), Operation(a)

    @classmethod
    def from_rule(cls, rule: str, caps=(30, 60, 120)) -> "PolicyTable":
        """Table encoding the SP or RP decision rule."""
        decide = {"SP": decide_sp, "RP": decide_rp}[rule.upper()]
        states = _state_array(check_caps(caps))
        actions = [int(decide(AoiState(*row))) for row in states.tolist()]
        return cls(caps, states, np.array(actions), meta={"rule": rule.upper()})

    def to_csv(self, path: str) -> str:
        """Write ``delta_s,delta_r,delta_d,op`` rows plus a JSON sidecar.

        The sidecar sits next to ``path`` with a ``.json`` suffix and holds
        the gain, residual and caps. Returns its path.
        """
        letters = np.array([op.name for op in OPS])
        with open(path, "w") as fh:
            fh.write("delta_s,delta_r,delta_d,op\n")
            for (s, r, d), a in zip(self.states.tolist(), letters[self.actions]):
                fh.write(f"{s},{r},{d},{a}\n")
        sidecar = os.path.splitext(path)[0] + ".json"
        info = {
            "gain": self.gain,
            "span_residual": self.span_residual,
            "iterations": self.iterations,
            "caps": list(self.caps),
            **self.meta,
        }
        with open(sidecar, "w") as fh:
            json.dump(info, fh, indent=2, sort_keys=True)
        return sidecar

    @classmethod
    def from_csv(cls, path: str) -> "PolicyTable":
        sidecar = os.path.splitext(path)[0] + ".json"
        with open(sidecar) as fh:
            info = json.load(fh)
        raw = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=str, ndmin=2)
        states = raw[:, :3].astype(np.int64)
        actions = np.array([Operation.from_letter(x) for x in raw[:, 3]], dtype=np.int8)
        caps = tuple(info.pop("caps"))
        return cls(
            caps,
            states,
            actions,
            gain=info.pop("gain"),
            span_residual=info.pop("span_residual"),
            iterations=info.pop("iterations"),
            meta=info,
        )


# -- solver ----------------------------------------------------------------------------


def _greedy(q: np.ndarray) -> np.ndarray:
    best = q.min(axis=0)
    tol = 1e-9 * np.maximum(1.0, np.abs(best))
    # first op (N < R < S) within tolerance of the minimum
    return np.argmax(q <= best + tol, axis=0).astype(np.int8)


def relative_value_iteration(
    channel: ChannelParams,
    p: float,
    config: Optional[MdpConfig] = None,
    h0: Optional[np.ndarray] = None,
    damping: float = 1.0,
) -> PolicyTable:
    """Average-cost relative value iteration with reference state (0, 0, 0).

    Iterates h <- min_a [c_a + P_a h] - (same at the reference) until the
    span of the Bellman residual drops below ``config.epsilon``. ``damping``
    < 1 mixes in the previous iterate, which fixes periodic oscillation
    without moving the fixed point. ``h0`` warm-starts from a previous
    solution on the same caps.
    """
    config = config or MdpConfig()
    p = check_gen_prob(p)
    if not 0 < damping <= 1:
        raise ParameterError("damping must lie in (0, 1]")
    states = enumerate_states(config)
    index = StateIndex(states, config.caps)
    mats = build_transition_matrices(states, index, channel, p)
    infeasible = ~feasible_mask(states)
    dvals = states[:, 2].astype(float)
    costs = [m @ dvals for m in mats]

    h = np.zeros(len(states)) if h0 is None else np.array(h0, dtype=float)
    q = np.empty((3, len(states)))
    spans = []
    span = math.inf
    lo = hi = math.nan
    it = 0
    for it in range(1, config.max_iters + 1):
        for k, m in enumerate(mats):
            q[k] = costs[k] + m @ h
        q[infeasible] = np.inf
        th = q.min(axis=0)
        diff = th - h
        lo, hi = float(diff.min()), float(diff.max())
        span = hi - lo
        spans.append(span)
        h = th if damping == 1.0 else (1 - damping) * h + damping * th
        h -= h[0]
        if span < config.epsilon:
            break
    table = PolicyTable(
        config.caps,
        states,
        _greedy(q),
        gain=0.5 * (lo + hi),
        span_residual=span,
        iterations=it,
        span_history=spans,
        meta={"p": p, "p1": channel.p1, "p2": channel.p2, "p3": channel.p3, "epsilon": config.epsilon},
        values=h,
    )
    if span >= config.epsilon:
        raise NotConverged(span, it, table)
    log.debug("RVI converged in %d iterations, gain %.9g", it, table.gain)
    return table


def evaluate_policy(policy: PolicyTable, channel: ChannelParams, p: float, slots: int, seed: int,
                    warmup_slots: int = 10_000, batches: int = 20):
    """Simulate the table-driven policy; returns a :class:`~aorelay.simulator.SimResult`."""
    from .simulator import SimConfig, run_sim

    return run_sim(SimConfig(channel, p, policy, slots, warmup_slots, seed, batches))

"""Exact average AoI from the stationary law of the truncated (Δ_S, Δ_R, Δ_D) chain.

No sampling involved: the distribution is pushed forward slot by slot from
(0, 0, 0) until it stops moving, and the AoI is its mean Δ_D. With the
compiled kernels this runs on a dense [s, r, d] array visiting only cells
that carry mass; otherwise it falls back to sparse matrix-vector products.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .mdp import MdpConfig, StateIndex, build_transition_matrices, enumerate_states, policy_matrix
from .model import ChannelParams, ParameterError, check_caps, check_gen_prob


@dataclass(frozen=True)
class ChainResult:
    avg_aoi: float
    iterations: int
    residual: float  # L1 change of the distribution over the last check window
    tail_mass: float  # stationary mass sitting at d == cap_d


def _policy_args(policy, caps):
    if isinstance(policy, str):
        name = policy.upper()
        if name not in ("SP", "RP"):
            raise ParameterError(f"unknown policy {policy!r}")
        kind = kernels.KIND_SP if name == "SP" else kernels.KIND_RP
        return kind, np.zeros((1, 1, 1), dtype=np.int8), caps
    return kernels.KIND_TABLE, np.ascontiguousarray(policy.dense()), tuple(policy.caps)


def exact_avg_aoi(
    channel: ChannelParams,
    p: float,
    policy="SP",
    cap: int = 300,
    tol: float = 1e-12,
    max_iters: int = 200_000,
    method: str = "auto",
    check_every: int = 25,
    threshold: float = 1e-30,
) -> ChainResult:
    """Stationary mean of Δ_D under ``policy`` with caps (cap - 1, cap, cap).

    ``policy`` is ``"SP"``, ``"RP"`` or a :class:`PolicyTable` (whose own caps
    are then used). Iteration stops once the L1 change of the distribution
    over ``check_every`` sweeps falls below ``tol``. Cells holding less than
    ``threshold`` are not propagated.
    """
    p = check_gen_prob(p)
    caps = check_caps((cap - 1, cap, cap))
    kind, table, caps = _policy_args(policy, caps)
    if method == "auto":
        method = "dense" if kernels.BACKEND == "cython" else "sparse"
    if method == "dense":
        return _dense(channel, p, kind, table, caps, tol, max_iters, check_every, threshold)
    if method == "sparse":
        return _sparse(channel, p, policy, caps, tol, max_iters, check_every)
    raise ParameterError(f"unknown method {method!r}")


def _dense(channel, p, kind, table, caps, tol, max_iters, check_every, threshold):
    size = caps[2] + 1
    src = np.zeros((size, size, size))
    dst = np.zeros_like(src)
    src[0, 0, 0] = 1.0
    scale = 1.0
    dmax = 0
    snapshot = None
    residual = math.inf
    it = 0
    p1, p2, p3 = channel.as_tuple()
    for it in range(1, max_iters + 1):
        # the sweep zeroes src as it reads it, so the buffers just swap
        _, total, new_dmax = kernels.chain_sweep(src, dst, kind, table, caps, p, p1, p2, p3, dmax, threshold, scale)
        src, dst = dst, src
        scale = 1.0 / total
        dmax = int(new_dmax)
        if it % check_every == 0:
            cur = src[: dmax + 1, : dmax + 1, : dmax + 1] * scale
            if snapshot is not None and snapshot.shape == cur.shape:
                residual = float(np.abs(cur - snapshot).sum())
                if residual < tol:
                    break
            snapshot = cur
    k = dmax + 1
    marginal_d = src[:k, :k, :k].sum(axis=(0, 1)) * scale
    tail = float(marginal_d[-1]) if k == size else 0.0
    return ChainResult(float(marginal_d @ np.arange(k)), it, residual, tail)


def _sparse(channel, p, policy, caps, tol, max_iters, check_every):
    config = MdpConfig(*caps, max_states=50_000_000)
    states = enumerate_states(config)
    index = StateIndex(states, caps)
    mats = build_transition_matrices(states, index, channel, p)
    s, r, d = states.T
    # OPS order matches Operation values, so ops double as matrix indices
    if isinstance(policy, str):
        if policy.upper() == "SP":
            actions = np.where(s == d, 0, np.where(s < r, 2, 1))
        else:
            actions = np.where(r < d, 1, np.where(s < d, 2, 0))
    else:
        actions = np.where(s == d, 0, policy.dense()[s, r, d])
    pt = policy_matrix(mats, actions).T.tocsr()
    x = np.zeros(len(states))
    x[0] = 1.0
    residual = math.inf
    it = 0
    snapshot = x.copy()
    for it in range(1, max_iters + 1):
        x = pt @ x
        x /= x.sum()
        if it % check_every == 0:
            residual = float(np.abs(x - snapshot).sum())
            if residual < tol:
                break
            snapshot = x.copy()
    return ChainResult(float(x @ d), it, residual, float(x[d == caps[2]].sum()))

"""Monte Carlo estimation of the time-average AoI at the destination.

A run starts from ages (0, 0, 0) at slot 0. Slot t = 1, 2, ... holds the ages
after the transition out of slot t-1, so the estimate is the mean of Δ_D over
slots ``warmup_slots + 1 .. num_slots``.

Randomness comes from one ``numpy`` PCG64 generator per run, drawn in blocks
of four uniforms per slot (generation, S-D, S-R, R-D). Both kernel backends
consume the same blocks, so results do not depend on the backend.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
from scipy import stats as sps

from . import kernels
from .model import ChannelParams, Operation, ParameterError, check_gen_prob

CHUNK_SLOTS = 1 << 18
TRACE_COLUMNS = ("slot", "delta_s", "delta_r", "delta_d", "op", "gen", "sd", "sr", "rd")
_DUMMY_TABLE = np.zeros((1, 1, 1), dtype=np.int8)
_NO_CAPS = (1, 2, 2)


def derive_seed(base_seed: int, run_index: int) -> int:
    """Seed for the ``run_index``-th run of a sweep.

    Hashes ``(base_seed, run_index)`` through ``numpy.random.SeedSequence``, so
    sweeps never share or overlap generator streams.
    """
    ss = np.random.SeedSequence(int(base_seed), spawn_key=(int(run_index),))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SimConfig:
    """One simulation run.

    ``policy`` is ``"SP"``, ``"RP"`` or a policy table (anything with ``caps``
    and ``dense()``, see :class:`aorelay.mdp.PolicyTable`). ``num_slots``
    includes the ``warmup_slots`` that are discarded.
    """

    channel: ChannelParams
    p: float
    policy: Any = "SP"
    num_slots: int = 10_000_000
    warmup_slots: int = 10_000
    seed: int = 0
    batches: int = 20

    def __post_init__(self):
        check_gen_prob(self.p)
        if isinstance(self.policy, str):
            if self.policy.upper() not in ("SP", "RP"):
                raise ParameterError(f"unknown policy {self.policy!r}")
        elif not (hasattr(self.policy, "dense") and hasattr(self.policy, "caps")):
            raise ParameterError("policy must be 'SP', 'RP' or a policy table")
        if self.num_slots < 1 or self.warmup_slots < 0:
            raise ParameterError("num_slots must be >= 1 and warmup_slots >= 0")
        measured = self.num_slots - self.warmup_slots
        if measured < 1:
            raise ParameterError(f"warmup ({self.warmup_slots}) leaves no slots out of {self.num_slots}")
        if self.batches < 1 or measured % self.batches:
            raise ParameterError(f"batches={self.batches} must divide the {measured} measured slots")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")

    @property
    def measured_slots(self) -> int:
        return self.num_slots - self.warmup_slots

    @property
    def policy_name(self) -> str:
        return self.policy.upper() if isinstance(self.policy, str) else "TABLE"


def _t_half_width(values: np.ndarray, level: float = 0.95) -> float:
    n = len(values)
    if n < 2:
        return math.nan
    se = float(np.std(values, ddof=1)) / math.sqrt(n)
    return float(sps.t.ppf(0.5 + level / 2, n - 1)) * se


@dataclass(frozen=True)
class SimResult:
    avg_aoi: float
    ci_half_width: float
    op_counts: dict
    deliveries_direct: int
    deliveries_relay: int
    slots_simulated: int
    batch_means: np.ndarray = field(repr=False)
    occupancy_batches: np.ndarray = field(repr=False)

    @property
    def std_error(self) -> float:
        """Batch-means standard error of ``avg_aoi``."""
        b = len(self.batch_means)
        return float(np.std(self.batch_means, ddof=1)) / math.sqrt(b) if b > 1 else math.nan

    @property
    def state_occupancy(self) -> np.ndarray:
        """Fraction of slots ending in each (source-fresh, relay-fresh) pattern.

        Ordered (0,0), (0,1), (1,0), (1,1), where the first flag means the
        source holds an update fresher than both R and D and the second means
        R holds one fresher than D.
        """
        return self.occupancy_batches.mean(axis=0)

    @property
    def occupancy_std_error(self) -> np.ndarray:
        b = len(self.occupancy_batches)
        return np.std(self.occupancy_batches, axis=0, ddof=1) / math.sqrt(b)


@dataclass
class _RawRun:
    batch_sums: np.ndarray
    counts: np.ndarray
    occupancy: np.ndarray
    departures: Optional[np.ndarray]


def _policy_args(policy):
    if isinstance(policy, str):
        kind = kernels.KIND_SP if policy.upper() == "SP" else kernels.KIND_RP
        return kind, _DUMMY_TABLE, _NO_CAPS
    return kernels.KIND_TABLE, np.ascontiguousarray(policy.dense(), dtype=np.int8), tuple(policy.caps)


def _run(config: SimConfig, record=False, trace_path=None, backend=None) -> _RawRun:
    impl = backend or kernels
    kind, table, caps = _policy_args(config.policy)
    p1, p2, p3 = config.channel.as_tuple()
    rng = np.random.Generator(np.random.PCG64(config.seed))
    nb = config.batches
    batch_len = config.measured_slots // nb
    state = np.array([0, 0, 0, -1, -1, -1], dtype=np.int64)
    batch_sums = np.zeros(nb)
    counts = np.zeros(5, dtype=np.int64)
    occupancy = np.zeros((nb, 4), dtype=np.int64)
    dep_chunks = []
    dep_buf = np.zeros((CHUNK_SLOTS if record else 1, 6), dtype=np.int64)
    trace_buf = np.zeros((CHUNK_SLOTS if trace_path else 1, 9), dtype=np.int64)

    fh = writer = None
    if trace_path:
        fh = open(trace_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
    try:
        done = 0
        while done < config.num_slots:
            n = min(CHUNK_SLOTS, config.num_slots - done)
            u = rng.random((n, 4))
            ndep = impl.simulate(
                u, kind, table, caps, config.p, p1, p2, p3, state, done,
                config.warmup_slots, batch_len, batch_sums, counts, occupancy,
                dep_buf, trace_buf, bool(record), bool(trace_path),
            )
            if record and ndep:
                dep_chunks.append(dep_buf[:ndep].copy())
            if writer is not None:
                rows = trace_buf[:n]
                ops = np.array([op.name for op in Operation])[rows[:, 4]]
                for row, op in zip(rows.tolist(), ops):
                    row[4] = op
                    writer.writerow(row)
            done += n
    finally:
        if fh is not None:
            fh.close()
    deps = np.concatenate(dep_chunks) if dep_chunks else np.zeros((0, 6), dtype=np.int64)
    return _RawRun(batch_sums, counts, occupancy, deps if record else None)


def run_sim(config: SimConfig, trace_path: Optional[str] = None, backend=None) -> SimResult:
    """Simulate ``config`` and return the time-average AoI with a 95% batch-means CI.

    ``trace_path`` writes one CSV row per slot (the ages in that slot and the
    operation and outcomes of the transition into it). ``backend`` overrides
    the kernel module, mostly for testing.
    """
    raw = _run(config, trace_path=trace_path, backend=backend)
    batch_len = config.measured_slots // config.batches
    means = raw.batch_sums / batch_len
    return SimResult(
        avg_aoi=float(means.mean()),
        ci_half_width=_t_half_width(means),
        op_counts={op: int(raw.counts[int(op)]) for op in Operation},
        deliveries_direct=int(raw.counts[3]),
        deliveries_relay=int(raw.counts[4]),
        slots_simulated=config.num_slots,
        batch_means=means,
        occupancy_batches=raw.occupancy / batch_len,
    )


# -- renewal statistics -------------------------------------------------------


@dataclass(frozen=True)
class RenewalStats:
    """Empirical delivery-interval statistics.

    For consecutive deliveries k-1, k: Y is the age delivered (generation to
    delivery), H the age of that update at its first source transmission,
    S = Y - H its service time, and Z the number of slots between the two
    deliveries. Products pair delivery k-1's Y or S with the following Z.
    A delivery "leaves the system empty" if neither S nor R then holds
    anything fresher than D.
    """

    mean_service: float
    mean_interdeparture: float
    second_moment_interdeparture: float
    mean_system_time: float
    mean_wait_before_service: float
    prob_empty_on_departure: float
    mean_yz_product: float
    cross_sz: float
    num_departures: int = 0
    sz_covariance: float = math.nan
    yz_covariance_empty: float = math.nan
    std_errors: dict = field(default_factory=dict, repr=False)


_STAT_KEYS = (
    "mean_service", "mean_interdeparture", "second_moment_interdeparture",
    "mean_system_time", "mean_wait_before_service", "prob_empty_on_departure",
    "mean_yz_product", "cross_sz", "sz_covariance", "yz_covariance_empty",
    "aoi_sp", "aoi_rp",
)


def _pair_stats(y, h, z, empty) -> dict:
    # y, h, empty belong to delivery k-1; z to the gap ending at delivery k
    s = y - h
    ez = z.mean()
    ez2 = (z * z).mean()
    es = s.mean()
    out = {
        "mean_service": es,
        "mean_interdeparture": ez,
        "second_moment_interdeparture": ez2,
        "mean_system_time": y.mean(),
        "mean_wait_before_service": h.mean(),
        "prob_empty_on_departure": empty.mean(),
        "mean_yz_product": (y * z).mean(),
        "cross_sz": (s * z).mean(),
    }
    out["sz_covariance"] = out["cross_sz"] - es * ez
    mask = empty.astype(bool)
    if mask.any():
        ye, ze = y[mask], z[mask]
        out["yz_covariance_empty"] = (ye * ze).mean() - ye.mean() * ze.mean()
    else:
        out["yz_covariance_empty"] = math.nan
    out["aoi_sp"] = es + ez2 / (2 * ez) - 0.5
    out["aoi_rp"] = out["mean_yz_product"] / ez + ez2 / (2 * ez) - 0.5
    return out


def collect_renewal_stats(config: SimConfig, backend=None) -> RenewalStats:
    """Run ``config`` recording every delivery and summarise the renewal intervals.

    Standard errors (``std_errors``) come from splitting the delivery sequence
    into ``config.batches`` consecutive batches.
    """
    if config.policy_name not in ("SP", "RP"):
        raise ParameterError("renewal statistics are defined for the SP and RP rules only")
    deps = _run(config, record=True, backend=backend).departures
    deps = deps[deps[:, 3] > 0] if len(deps) else deps
    if len(deps) < 3:
        raise RuntimeError(f"only {len(deps)} deliveries after warmup; need at least 3")
    cols = deps.astype(float)
    y, h, z, empty = cols[:-1, 1], cols[:-1, 2], cols[1:, 3], cols[:-1, 5]
    full = _pair_stats(y, h, z, empty)

    errors = {}
    nb = config.batches
    if nb > 1 and len(y) >= 2 * nb:
        parts = np.array_split(np.arange(len(y)), nb)
        per = [_pair_stats(y[i], h[i], z[i], empty[i]) for i in parts]
        for key in _STAT_KEYS:
            vals = np.array([b[key] for b in per])
            vals = vals[np.isfinite(vals)]
            errors[key] = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.nan

    fields = {k: float(full[k]) for k in _STAT_KEYS[:10]}
    return RenewalStats(num_departures=len(deps), std_errors=errors, **fields)


def reconstruct_aoi_from_renewals(stats: RenewalStats, policy: str) -> float:
    """Average AoI assembled from renewal moments.

    SP: E[S] + E[Z^2] / (2 E[Z]) - 1/2, valid because S and the next Z are
    independent under source priority. RP: E[YZ] / E[Z] + E[Z^2] / (2 E[Z]) - 1/2.
    """
    ez = stats.mean_interdeparture
    if not ez > 0:
        raise ParameterError("mean interdeparture time must be positive")
    tail = stats.second_moment_interdeparture / (2 * ez) - 0.5
    proto = policy.upper()
    if proto == "SP":
        return stats.mean_service + tail
    if proto == "RP":
        return stats.mean_yz_product / ez + tail
    raise ParameterError(f"unknown policy {policy!r}")


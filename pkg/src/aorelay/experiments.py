"""Parameter sweeps and protocol comparisons behind the command-line tool.

Every function returns plain rows (:class:`ResultRow`) or dicts; formatting
and exit codes live in :mod:`aorelay.cli`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import analytic, optimizer
from .mdp import MdpConfig, NotConverged, relative_value_iteration
from .model import ChannelParams, ParameterError, check_gen_prob
from .simulator import SimConfig, derive_seed, run_sim

CSV_COLUMNS = ("protocol", "engine", "p", "p1", "p2", "p3", "aoi", "ci_half", "seed", "slots", "zscore")
ENGINES = ("analytic", "simulate", "mdp")
FULL_SLOTS = 10_000_000
QUICK_SLOTS = 100_000
Z_LIMIT = 4.0
Z_LIMIT_QUICK = 6.0
TIE_TOL = 1e-12


def fmt(x) -> str:
    """12 significant digits; blank for missing values."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    return f"{x:.12g}"


@dataclass(frozen=True)
class ResultRow:
    protocol: str
    engine: str
    p: float
    p1: float
    p2: float
    p3: float
    aoi: float
    ci_half: Optional[float] = None
    seed: Optional[int] = None
    slots: Optional[int] = None
    zscore: Optional[float] = None

    def csv_fields(self) -> list[str]:
        return [self.protocol, self.engine] + [fmt(getattr(self, c)) for c in CSV_COLUMNS[2:]]


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    p1: float = 0.2
    p2: float = 0.8
    p3: float = 0.8
    p_grid: tuple = (1.0,)
    engines: tuple = ("analytic",)
    slots: int = FULL_SLOTS
    seed: int = 1
    caps: tuple = (30, 60, 120)
    epsilon: float = 1e-6
    quick: bool = False
    p1_grid: tuple = ()
    p2_grid: tuple = ()
    p3_grid: tuple = ()
    sets: tuple = ()

    def __post_init__(self):
        if not self.engines:
            raise ParameterError("at least one engine is required")
        for e in self.engines:
            if e not in ENGINES:
                raise ParameterError(f"unknown engine {e!r}; choose from {', '.join(ENGINES)}")
        for name in ("p_grid", "p1_grid", "p2_grid", "p3_grid"):
            grid = getattr(self, name)
            if grid and any(b <= a for a, b in zip(grid, grid[1:])):
                raise ParameterError(f"{name} must be strictly ascending")
        if not self.p_grid:
            raise ParameterError("p grid is empty")
        for p in self.p_grid:
            check_gen_prob(p)
        if self.slots < 100:
            raise ParameterError("need at least 100 simulated slots")

    @property
    def channel(self) -> ChannelParams:
        return ChannelParams(self.p1, self.p2, self.p3)

    @property
    def z_limit(self) -> float:
        return Z_LIMIT_QUICK if self.quick else Z_LIMIT


def parse_grid(text: str) -> tuple:
    """``"0.1,0.2"`` or ``"start:step:stop"`` (stop inclusive) to a tuple of floats."""
    text = str(text).strip()
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[1] <= 0:
            raise ParameterError(f"bad range {text!r}; expected start:step:stop with step > 0")
        start, step, stop = parts
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        if n < 1:
            raise ParameterError(f"empty range {text!r}")
        return tuple(round(start + k * step, 12) for k in range(n))
    vals = tuple(float(x) for x in text.split(",") if x.strip())
    if not vals:
        raise ParameterError("empty grid")
    return vals


def sim_config(channel, p, protocol, slots, seed) -> SimConfig:
    """Config with a warmup of min(10^4, slots/10) padded so 20 batches divide evenly."""
    batches = 20
    warmup = min(10_000, slots // 10)
    warmup += (slots - warmup) % batches
    return SimConfig(channel, p, protocol, slots, warmup, seed, batches)


def _analytic_value(protocol: str, channel: ChannelParams, p: float) -> float:
    fn = analytic.sp_avg_aoi if protocol == "SP" else analytic.rp_avg_aoi
    return float(fn(channel, p))


def _require_analytic(spec: ExperimentSpec, channel: ChannelParams):
    if "analytic" in spec.engines:
        channel.require_analytic()


def evaluate_point(spec: ExperimentSpec, channel: ChannelParams, p: float, run_index: int) -> list[ResultRow]:
    """Rows for both protocols at one (channel, p) for the analytic and simulate engines."""
    rows = []
    slots = spec.slots
    for k, proto in enumerate(("SP", "RP")):
        exact = None
        if "analytic" in spec.engines:
            exact = _analytic_value(proto, channel, p)
            rows.append(ResultRow(proto, "analytic", p, *channel.as_tuple(), exact))
        if "simulate" in spec.engines:
            seed = derive_seed(spec.seed, 2 * run_index + k)
            res = run_sim(sim_config(channel, p, proto, slots, seed))
            z = None
            if exact is not None:
                z = (res.avg_aoi - exact) / res.std_error if res.std_error > 0 else 0.0
            rows.append(ResultRow(proto, "simulate", p, *channel.as_tuple(), res.avg_aoi, res.ci_half_width, seed, slots, z))
    return rows


def cmd_single(spec: ExperimentSpec) -> list[ResultRow]:
    channel = spec.channel
    _require_analytic(spec, channel)
    rows = evaluate_point(spec, channel, spec.p_grid[0], 0)
    if "mdp" in spec.engines:
        rows.append(_mdp_row(spec, channel, spec.p_grid[0])[0])
    return rows


def _mdp_row(spec, channel, p, h0=None):
    cfg = MdpConfig(*spec.caps, epsilon=spec.epsilon)
    table = relative_value_iteration(channel, p, cfg, h0=h0)
    return ResultRow("MDP", "mdp", p, *channel.as_tuple(), table.gain), table


def cmd_sweep_p(spec: ExperimentSpec) -> tuple[list[ResultRow], list[str]]:
    """Both protocols over the p grid; notes carry the analytic argmin per protocol."""
    channel = spec.channel
    _require_analytic(spec, channel)
    rows = []
    h0 = None
    for i, p in enumerate(spec.p_grid):
        rows.extend(evaluate_point(spec, channel, p, i))
        if "mdp" in spec.engines:
            row, table = _mdp_row(spec, channel, p, h0)
            h0 = table.values
            rows.append(row)
    notes = []
    if "analytic" in spec.engines:
        for proto in ("SP", "RP"):
            pts = [(r.aoi, -r.p, r.p) for r in rows if r.protocol == proto and r.engine == "analytic"]
            best = min(pts)
            opt = optimizer.optimal_p_sp(channel) if proto == "SP" else optimizer.optimal_p_rp(channel)
            notes.append(
                f"analytic argmin {proto}: grid p={fmt(best[2])} aoi={fmt(best[0])}; "
                f"optimal p*={fmt(opt.p_star)} aoi={fmt(opt.aoi_at_p_star)} ({opt.case_tag})"
            )
    return rows, notes


def cmd_sweep_p2p3_diff(spec: ExperimentSpec) -> list[ResultRow]:
    """RP minus SP analytic AoI over the (P2, P3) grid at fixed P1 and p."""
    p = spec.p_grid[0]
    rows = []
    for p2 in spec.p2_grid:
        for p3 in spec.p3_grid:
            if p2 <= spec.p1 or p3 <= spec.p1:
                raise ParameterError(f"grid point (p2, p3)=({p2}, {p3}) must exceed p1={spec.p1}")
            ch = ChannelParams(spec.p1, p2, p3).require_analytic()
            diff = _analytic_value("RP", ch, p) - _analytic_value("SP", ch, p)
            rows.append(ResultRow("RP-SP", "analytic", p, spec.p1, p2, p3, diff))
    return rows


def cmd_sweep_p1_gaw(spec: ExperimentSpec) -> tuple[list[ResultRow], list[str]]:
    """Generate-at-will AoI versus P1 for each (P2, P3) set, with crossovers."""
    rows = []
    notes = []
    for p2, p3 in spec.sets:
        limit = min(p2, p3)
        for p1 in spec.p1_grid:
            if not 0 < p1 < limit:
                continue
            ch = ChannelParams(p1, p2, p3).require_analytic()
            rows.append(ResultRow("SP", "analytic", 1.0, p1, p2, p3, analytic.sp_aoi_gaw(ch)))
            rows.append(ResultRow("RP", "analytic", 1.0, p1, p2, p3, analytic.rp_aoi_gaw(ch)))
        notes.append(f"crossover p2={fmt(p2)} p3={fmt(p3)}: p1={fmt(analytic.crossover_p1(p2, p3))}")
    return rows, notes


def recommend(sp_value: float, rp_value: float) -> str:
    if abs(sp_value - rp_value) <= TIE_TOL * max(1.0, abs(sp_value)):
        return "tie"
    return "SP" if sp_value < rp_value else "RP"


def cmd_compare(spec: ExperimentSpec) -> dict:
    channel = spec.channel.require_analytic()
    p = spec.p_grid[0]
    sp = _analytic_value("SP", channel, p)
    rp = _analytic_value("RP", channel, p)
    opt_sp = optimizer.optimal_p_sp(channel)
    opt_rp = optimizer.optimal_p_rp(channel)
    out = {
        "p": p,
        "p1": channel.p1,
        "p2": channel.p2,
        "p3": channel.p3,
        "sp_aoi": sp,
        "rp_aoi": rp,
        "recommended": recommend(sp, rp),
        "sp_p_star": opt_sp.p_star,
        "sp_aoi_at_p_star": opt_sp.aoi_at_p_star,
        "sp_case": opt_sp.case_tag,
        "rp_p_star": opt_rp.p_star,
        "rp_aoi_at_p_star": opt_rp.aoi_at_p_star,
    }
    if p == 1.0:
        f = analytic.crossover_p1(channel.p2, channel.p3)
        out["crossover_p1"] = f
        out["crossover_verdict"] = "RP" if channel.p1 < f else ("SP" if channel.p1 > f else "tie")
    return out


def cmd_mdp_solve(spec: ExperimentSpec):
    """Solve the MDP at (channel, p); raises NotConverged like the solver."""
    cfg = MdpConfig(*spec.caps, epsilon=spec.epsilon)
    return relative_value_iteration(spec.channel, spec.p_grid[0], cfg)


def max_abs_z(rows) -> float:
    zs = [abs(r.zscore) for r in rows if r.zscore is not None and not math.isnan(r.zscore)]
    return max(zs) if zs else 0.0


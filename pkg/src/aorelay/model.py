"""Shared domain types and the per-slot dynamics of the three-node relay link.

A slot is processed in a fixed order: the decision reads the ages at the slot
start (after that slot's generation event), the channel outcomes are drawn for
the active links, and the receivers' ages are refreshed at the slot boundary
together with the generation event of the *next* slot.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple


class ParameterError(ValueError):
    """Raised when channel or generation parameters are outside their domain."""


class InfeasibleOperation(ValueError):
    """Raised when an operation has nothing fresher to deliver."""


class Operation(enum.IntEnum):
    # Integer order doubles as the deterministic tie-break N < R < S.
    N = 0
    R = 1
    S = 2

    @property
    def letter(self) -> str:
        return self.name

    @classmethod
    def from_letter(cls, letter: str) -> "Operation":
        try:
            return cls[letter.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown operation {letter!r}") from None


@dataclass(frozen=True)
class ChannelParams:
    """Success probabilities of the S-D (p1), S-R (p2) and R-D (p3) links."""

    p1: float
    p2: float
    p3: float

    def __post_init__(self):
        for name in ("p1", "p2", "p3"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name}={v} is not a probability")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.p1, self.p2, self.p3)

    def satisfies_analytic(self) -> bool:
        p1, p2, p3 = self.p1, self.p2, self.p3
        return 0.0 < p1 < p2 < 1.0 and p1 < p3 < 1.0

    def require_analytic(self) -> "ChannelParams":
        """Return self, or raise unless 0 < p1 < p2 < 1 and 0 < p1 < p3 < 1."""
        if not self.satisfies_analytic():
            raise ParameterError(
                f"closed forms need 0 < p1 < p2 < 1 and 0 < p1 < p3 < 1, got {self.as_tuple()}"
            )
        return self


def check_gen_prob(p: float, allow_zero: bool = False) -> float:
    p = float(p)
    lo_ok = p >= 0.0 if allow_zero else p > 0.0
    if not (lo_ok and p <= 1.0):
        raise ParameterError(f"generation probability must lie in {'[0' if allow_zero else '(0'}, 1], got {p}")
    return p


class AoiState(NamedTuple):
    delta_s: int
    delta_r: int
    delta_d: int

    def is_valid(self) -> bool:
        s, r, d = self
        return 0 <= s <= r and s <= d

    def validate(self) -> "AoiState":
        if not self.is_valid():
            raise ValueError(f"invalid age triple {tuple(self)}: need 0 <= s <= min(r, d)")
        return self


class SlotOutcome(NamedTuple):
    """Random events of one slot.

    ``generated`` is the generation event at the next slot boundary; the link
    flags are ignored for links the chosen operation does not use.
    """

    generated: bool = False
    sd_success: bool = False
    sr_success: bool = False
    rd_success: bool = False


def decide_sp(state: AoiState) -> Operation:
    """Source-prioritized rule: a fresher source update always preempts the relay."""
    s, r, d = state
    if s == d:
        return Operation.N
    if s < r:
        return Operation.S
    return Operation.R


def decide_rp(state: AoiState) -> Operation:
    """Relay-prioritized rule: the relay keeps forwarding until D has its update."""
    s, r, d = state
    if r < d:
        return Operation.R
    if s < d:
        return Operation.S
    return Operation.N


def feasible_ops(state: AoiState) -> frozenset[Operation]:
    s, r, d = state
    ops = {Operation.N}
    if s < d:
        ops.add(Operation.S)
    if r < d:
        ops.add(Operation.R)
    return frozenset(ops)


def step(state: AoiState, op: Operation, outcome: SlotOutcome) -> AoiState:
    """Advance one slot and return the ages at the next decision epoch."""
    s, r, d = state
    op = Operation(op)
    if op is Operation.S and s >= d:
        raise InfeasibleOperation(f"O_S from {tuple(state)}: source holds nothing fresher than D")
    if op is Operation.R and r >= d:
        raise InfeasibleOperation(f"O_R from {tuple(state)}: relay holds nothing fresher than D")

    new_r = r + 1
    new_d = d + 1
    if op is Operation.S:
        if outcome.sr_success:
            new_r = s + 1
        if outcome.sd_success:
            new_d = s + 1
    elif op is Operation.R and outcome.rd_success:
        new_d = r + 1
    new_s = 0 if outcome.generated else s + 1
    return AoiState(new_s, new_r, new_d)


# -- truncation ---------------------------------------------------------------
#
# Once r >= d the relay's copy can never lower D's age again, so its exact age
# matters neither to the rules nor to D. Collapsing it to r = d gives the
# ordering s <= r <= d used by the truncated state spaces.


def canonical(state: AoiState) -> AoiState:
    s, r, d = state
    if r > d:
        r = d
    return AoiState(s, r, d)


def saturate(state: AoiState, caps: tuple[int, int, int]) -> AoiState:
    """Map a (canonical) state onto the truncated space with age caps.

    The clamp keeps every freshness relation (s vs r, s vs d, r vs d) intact,
    so both decision rules see the same situation before and after it:
    an empty system keeps s = r = d, a stale relay keeps r = d, a relay that
    shares the source's update keeps r = s. Requires cap_s < cap_r <= cap_d;
    a relay copy strictly between s and d survives only if cap_d >= cap_s + 2,
    otherwise it is dropped (r = d) when both clamps bite.
    """
    cap_s, cap_r, cap_d = caps
    s, r, d = state
    if r > d:
        r = d
    if s == d:
        d = min(d, cap_d)
        return AoiState(d, d, d)
    s2 = min(s, cap_s)
    d2 = max(min(d, cap_d), s2 + 1)
    if r == d:
        r2 = d2
    elif r == s:
        r2 = s2
    else:
        r2 = min(max(min(r, cap_r), s2 + 1), d2 - 1)
        if r2 <= s2:
            r2 = d2
    return AoiState(s2, r2, d2)


def check_caps(caps: tuple[int, int, int]) -> tuple[int, int, int]:
    cap_s, cap_r, cap_d = (int(c) for c in caps)
    if not (1 <= cap_s < cap_r <= cap_d):
        raise ParameterError(f"age caps must satisfy 1 <= cap_s < cap_r <= cap_d, got {caps}")
    return cap_s, cap_r, cap_d

"""AoI-minimising generation probability for both protocols."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import analytic
from .model import ChannelParams

INTERIOR = "interior-root"
BOUNDARY = "boundary-one"


@dataclass(frozen=True)
class KappaCoeffs:
    """Coefficients of kappa(p) = mu p^2 + lambda p + xi.

    kappa has the sign of d(AoI_SP)/dp on (0, 1].
    """

    mu: float
    lam: float
    xi: float

    @property
    def discriminant(self) -> float:
        return self.lam * self.lam - 4.0 * self.mu * self.xi

    def __call__(self, p):
        return (self.mu * p + self.lam) * p + self.xi

    def roots(self) -> tuple[float, float]:
        """(x1, x2) with x2 the larger root when mu > 0.

        Uses the cancellation-free pairing q = -(lam + sign(lam) sqrt(disc)) / 2,
        roots q / mu and xi / q.
        """
        sq = math.sqrt(self.discriminant)
        q = -0.5 * (self.lam + math.copysign(sq, self.lam))
        other = self.xi / q
        if self.mu == 0.0:
            return (-math.inf, other)
        first = q / self.mu
        # Label so that x2 = (-lam + sqrt(disc)) / (2 mu).
        if self.lam >= 0:
            return (first, other)
        return (other, first)


@dataclass(frozen=True)
class OptResult:
    p_star: float
    aoi_at_p_star: float
    case_tag: str


def kappa_coeffs(channel: ChannelParams) -> KappaCoeffs:
    channel.require_analytic()
    P1, P2, P3 = channel.as_tuple()
    mu = -(
        P1**2 * P2**2 * P3**2
        - 2 * P1**2 * P2 * P3**2
        + 2 * P1**2 * P2 * P3
        - P1**2 * P2
        + P1**2 * P3**2
        - 2 * P1**2 * P3
        + P1**2
        - 2 * P1 * P2**2 * P3**2
        + 2 * P1 * P2 * P3**2
        - P1 * P2 * P3
        + P1 * P2
        + P2**2 * P3**2
        - P2 * P3
    )
    lam = (
        2 * P1**2 * P2**2 * P3**2
        - 4 * P1**2 * P2 * P3**2
        + 2 * P1**2 * P2 * P3
        + 2 * P1**2 * P3**2
        - 2 * P1**2 * P3
        - 4 * P1 * P2**2 * P3**2
        + 4 * P1 * P2 * P3**2
        - 2 * P1 * P2 * P3
        + 2 * P2**2 * P3**2
    )
    xi = -(
        P1**2 * P2**2 * P3**2
        - 2 * P1**2 * P2 * P3**2
        + P1**2 * P3**2
        - 2 * P1 * P2**2 * P3**2
        + 2 * P1 * P2 * P3**2
        + P2**2 * P3**2
    )
    return KappaCoeffs(mu, lam, xi)


def sp_threshold_p1(p2: float, p3: float) -> float:
    """Direct-link probability above which p = 1 is optimal for the SP protocol."""
    return (p2 + p2 * p3 - math.sqrt((p2 - p2 * p3) ** 2 + 4 * p2 * p3)) / (2 * (p2 - 1))


def optimal_p_sp(channel: ChannelParams) -> OptResult:
    k = kappa_coeffs(channel)
    if channel.p1 < sp_threshold_p1(channel.p2, channel.p3):
        p_star = k.roots()[1]
        tag = INTERIOR
    else:
        p_star = 1.0
        tag = BOUNDARY
    return OptResult(p_star, float(analytic.sp_avg_aoi(channel, p_star)), tag)


def optimal_p_rp(channel: ChannelParams) -> OptResult:
    """Generate-at-will is optimal for the relay-prioritized protocol."""
    channel.require_analytic()
    return OptResult(1.0, analytic.rp_aoi_gaw(channel), BOUNDARY)


def grid_search_p(channel: ChannelParams, protocol: str, resolution: int = 10_000) -> float:
    """Brute-force argmin of the closed-form AoI over {1/n, 2/n, ..., 1}.

    Ties resolve to the larger p.
    """
    if resolution < 100:
        raise ValueError("resolution must be at least 100")
    grid = np.arange(1, resolution + 1) / resolution
    aoi = _aoi_fn(protocol)(channel, grid)
    best = np.flatnonzero(aoi == aoi.min())
    return float(grid[best[-1]])


def _aoi_fn(protocol: str):
    proto = protocol.upper()
    if proto == "SP":
        return analytic.sp_avg_aoi
    if proto == "RP":
        return analytic.rp_avg_aoi
    raise ValueError(f"unknown protocol {protocol!r}")

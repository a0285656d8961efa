"""Closed-form average AoI for the source- and relay-prioritized protocols.

All functions take a :class:`~aorelay.model.ChannelParams` that must satisfy
``0 < p1 < p2 < 1`` and ``0 < p1 < p3 < 1`` and a generation probability
``p`` in ``(0, 1]``. ``p`` may also be a numpy array, in which case every
returned quantity broadcasts over it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .model import ChannelParams, ParameterError

ArrayLike = Union[float, np.ndarray]


def _check(channel: ChannelParams, p: ArrayLike):
    channel.require_analytic()
    pa = np.asarray(p, dtype=float)
    if not np.all((pa > 0.0) & (pa <= 1.0)):
        raise ParameterError(f"generation probability must lie in (0, 1], got {p}")
    return channel.p1, channel.p2, channel.p3, (float(pa) if pa.ndim == 0 else pa)


def _coeffs(P1, P2, P3, p):
    alpha = (1 - p) * (1 - P3)
    beta = (1 - p) * (1 - P1) * (1 - P2)
    gamma = P2 * P3 * (1 - p) * (1 - P1)
    return alpha, beta, gamma


@dataclass(frozen=True)
class SpTerms:
    alpha: ArrayLike
    beta: ArrayLike
    gamma: ArrayLike
    e_s: ArrayLike
    e_w: ArrayLike
    e_w2: ArrayLike
    e_t: ArrayLike
    e_z: ArrayLike
    e_t2: ArrayLike
    e_z2: ArrayLike

    def avg_aoi(self) -> ArrayLike:
        """Renewal assembly E[S] + E[Z^2] / (2 E[Z]) - 1/2."""
        return self.e_s + self.e_z2 / (2 * self.e_z) - 0.5


def sp_terms(channel: ChannelParams, p: ArrayLike) -> SpTerms:
    """Renewal moments of the source-prioritized protocol.

    Returns the service-time mean, the waiting and transmission moments and the
    first two moments of the interdeparture time between deliveries at D.
    """
    P1, P2, P3, p = _check(channel, p)
    alpha, beta, gamma = _coeffs(P1, P2, P3, p)
    rate = P1 * (1 - alpha) + gamma
    # beta * P2/(1-P2) and beta * p/(1-p), written without the (1-p) division
    beta_p2 = (1 - p) * (1 - P1) * P2
    beta_pp = p * (1 - P1) * (1 - P2)
    p2_prime = P2 / (1 - P2)

    e_s = 1 / (1 - beta) + gamma / ((1 - alpha) * rate)
    e_w = (1 - p) / p
    e_w2 = (p * p - 3 * p + 2) / (p * p)
    e_t = ((1 - alpha) + beta_p2) / rate
    e_z = (1 - alpha) * (1 - beta) / (p * rate)

    a1 = 1 - alpha
    denom = (a1 * (1 - beta) - a1 * beta_pp - beta_pp * p2_prime) * (a1 * (1 - beta))
    bracket = (
        a1 * a1 * (1 + beta)
        + (3 - alpha - beta - alpha * beta) * beta_p2
        + 2 * e_t * (a1 * a1 * beta_pp + (1 - alpha * beta) * beta_pp * p2_prime)
    )
    e_t2 = bracket / denom
    e_z2 = e_w2 + 2 * e_w * e_t + e_t2
    return SpTerms(alpha, beta, gamma, e_s, e_w, e_w2, e_t, e_z, e_t2, e_z2)


def sp_avg_aoi(channel: ChannelParams, p: ArrayLike) -> ArrayLike:
    P1, P2, P3, p = _check(channel, p)
    num = (1 - (1 - p) * (1 - P3)) * (1 - (1 - p) * (1 - P1) * (1 - P2))
    den = p * (p * P1 + (1 - p) * P3 - (1 - p) * (1 - P1) * (1 - P2) * P3)
    return num / den


def sp_aoi_gaw(channel: ChannelParams) -> float:
    """Minimum source-prioritized AoI under generate-at-will, 1 / p1."""
    if not 0.0 < channel.p1 < 1.0:
        raise ParameterError(f"p1 must lie in (0, 1), got {channel.p1}")
    return 1.0 / channel.p1


def rp_chain_matrix(channel: ChannelParams, p: float) -> np.ndarray:
    """One-slot transition matrix of the relay-prioritized system state.

    States are ordered (0,0), (0,1), (1,0), (1,1) where the first flag says the
    source holds the freshest update in the system and the second says the
    relay holds something fresher than D, both observed at the end of a slot.
    """
    P1, P2, P3 = channel.as_tuple()
    q = 1 - p
    return np.array(
        [
            [q + p * P1, p * (1 - P1) * P2, p * (1 - P1) * (1 - P2), 0.0],
            [q * P3, q * (1 - P3), p * P3, p * (1 - P3)],
            [P1, (1 - P1) * P2, (1 - P1) * (1 - P2), 0.0],
            [0.0, 0.0, P3, 1 - P3],
        ]
    )


def stationary_dist(channel: ChannelParams, p: ArrayLike) -> tuple:
    """Closed-form stationary probabilities (pi00, pi01, pi10, pi11).

    Ordering as in :func:`rp_chain_matrix`. The (0,0) weight carries the
    factor 1 - (1-p1)(1-p2) on its no-generation term; without it the four
    weights only normalise at p = 1.
    """
    P1, P2, P3, p = _check(channel, p)
    alpha, beta, _ = _coeffs(P1, P2, P3, p)
    w00 = P3 * (p * P1 + P3 * (1 - p - beta))
    w01 = p * P2 * P3 * (1 - P1)
    w10 = p * p * P3 * (1 - P1) + p * P3 * P3 * beta
    w11 = p * p * P2 * (1 - P1) * (1 - P3)
    den = w00 + w01 + w10 + w11
    return w00 / den, w01 / den, w10 / den, w11 / den


@dataclass(frozen=True)
class RpTerms:
    pi: tuple
    prob_empty: ArrayLike
    prob_theta: ArrayLike
    e_t: ArrayLike
    e_t2: ArrayLike
    e_z_empty: ArrayLike
    e_z_busy: ArrayLike
    e_z2_empty: ArrayLike
    e_z2_busy: ArrayLike
    e_h: ArrayLike
    e_s_empty: ArrayLike
    e_s_busy: ArrayLike
    e_y_empty: ArrayLike
    e_y_busy: ArrayLike

    @property
    def e_z(self) -> ArrayLike:
        return self.e_z_empty * self.prob_empty + self.e_z_busy * (1 - self.prob_empty)

    @property
    def e_z2(self) -> ArrayLike:
        return self.e_z2_empty * self.prob_empty + self.e_z2_busy * (1 - self.prob_empty)

    @property
    def e_yz(self) -> ArrayLike:
        pe = self.prob_empty
        return self.e_y_empty * self.e_z_empty * pe + self.e_y_busy * self.e_z_busy * (1 - pe)

    def avg_aoi(self) -> ArrayLike:
        return (self.e_yz + 0.5 * self.e_z2) / self.e_z - 0.5


def rp_terms(channel: ChannelParams, p: ArrayLike) -> RpTerms:
    """Conditional renewal moments of the relay-prioritized protocol.

    "empty" / "busy" refer to whether a delivery leaves neither S nor R with
    anything fresher than D.
    """
    P1, P2, P3, p = _check(channel, p)
    alpha, beta, gamma = _coeffs(P1, P2, P3, p)
    q12 = 1 - (1 - P1) * (1 - P2)

    prob_empty = (p * P1 + P3 * (1 - p - beta)) / ((1 - alpha) * q12)
    prob_theta = p / (1 - beta)

    e_t = (P3 + P2 * (1 - P1)) / (P3 * q12)
    e_t2 = (
        P2 * P2 * (1 - P1) ** 2 * (2 - P3)
        + P3 * P3 * (1 + (1 - P1) * (1 - P2))
        + P2 * (2 - P1) * (1 - (1 - P1) * (1 - P3))
        - P1 * P1 * P2
    ) / (P3 * P3 * q12 * q12)
    e_w = (1 - p) / p
    e_w2 = (p * p - 3 * p + 2) / (p * p)

    e_z_busy = e_t
    e_z_empty = e_w + e_t
    e_z2_busy = e_t2
    e_z2_empty = e_t2 + e_w2 + 2 * e_w * e_t

    e_h = p * P2 * (1 - p) * (1 - P1) / ((1 - alpha) ** 2 * (1 - beta))
    e_s_empty = 1 / (1 - beta) + gamma / ((1 - alpha) * (P1 * (1 - alpha) + gamma))
    e_s_busy = 2 / P3 + 1 / (1 - beta) - (P3 * P3 * (1 - p) + p) / (P3 * (1 - alpha))

    return RpTerms(
        pi=stationary_dist(channel, p),
        prob_empty=prob_empty,
        prob_theta=prob_theta,
        e_t=e_t + 0 * p,
        e_t2=e_t2 + 0 * p,
        e_z_empty=e_z_empty,
        e_z_busy=e_z_busy + 0 * p,
        e_z2_empty=e_z2_empty,
        e_z2_busy=e_z2_busy + 0 * p,
        e_h=e_h,
        e_s_empty=e_s_empty,
        e_s_busy=e_s_busy,
        e_y_empty=e_h + e_s_empty,
        e_y_busy=e_h + e_s_busy,
    )


def rp_avg_aoi(channel: ChannelParams, p: ArrayLike) -> ArrayLike:
    return rp_terms(channel, p).avg_aoi()


def rp_aoi_gaw(channel: ChannelParams) -> float:
    """Relay-prioritized AoI under generate-at-will (its minimum over p)."""
    channel.require_analytic()
    P1, P2, P3 = channel.as_tuple()
    mix = P2 + P3 - P1 * P2
    return P2 * (1 - P1) / (P3 * mix) + mix / (P3 * (1 - (1 - P1) * (1 - P2)))


def crossover_p1(p2: float, p3: float) -> float:
    """Direct-link probability at which both protocols tie under generate-at-will.

    Below the returned value the relay-prioritized protocol has the lower AoI,
    above it the source-prioritized one.
    """
    if not (0.0 < p2 < 1.0 and 0.0 < p3 < 1.0):
        raise ParameterError(f"p2 and p3 must lie in (0, 1), got {(p2, p3)}")
    a = 2 * p2 + p3 + p2 * p3
    b = p2 * p2 * (p3 - 2) ** 2 + p3 * (8 * p2 + 5 * p3 - 6 * p2 * p3)
    # (a - sqrt(b)) / (4 p2 - 2) with a^2 - b = 4 p3 (p2 + p3)(2 p2 - 1);
    # the rationalised form has no pole at p2 = 1/2.
    return float(2 * p3 * (p2 + p3) / (a + np.sqrt(b)))

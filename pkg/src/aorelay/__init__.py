"""Age-of-information relaying over a slotted source-relay-destination link.

Two scheduling rules are provided: source-prioritized (a new update at the
source preempts the relay) and relay-prioritized (the relay finishes its
forwarding first). The package evaluates them in closed form, by
simulation and on an exact truncated Markov chain, finds the best
generation probability, and solves for the optimal policy as an MDP.
"""
from .analytic import (
    crossover_p1,
    rp_aoi_gaw,
    rp_avg_aoi,
    rp_terms,
    sp_aoi_gaw,
    sp_avg_aoi,
    sp_terms,
    stationary_dist,
)
from .kernels import BACKEND
from .model import (
    AoiState,
    ChannelParams,
    InfeasibleOperation,
    Operation,
    ParameterError,
    SlotOutcome,
    decide_rp,
    decide_sp,
    feasible_ops,
    step,
)
from .optimizer import grid_search_p, kappa_coeffs, optimal_p_rp, optimal_p_sp
from .simulator import SimConfig, SimResult, collect_renewal_stats, reconstruct_aoi_from_renewals, run_sim

__version__ = "0.1.0"

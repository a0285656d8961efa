import csv
import math

import numpy as np
import pytest

from aorelay import analytic as an
from aorelay.model import AoiState, ChannelParams, Operation, ParameterError, SlotOutcome, step
from aorelay.simulator import (
    CHUNK_SLOTS,
    RenewalStats,
    SimConfig,
    collect_renewal_stats,
    derive_seed,
    reconstruct_aoi_from_renewals,
    run_sim,
)
from oracles import naive_sim

BASE = ChannelParams(0.2, 0.8, 0.8)


def cfg(channel=BASE, p=0.5, policy="SP", slots=200_000, warmup=0, seed=11, batches=20):
    return SimConfig(channel, p, policy, slots, warmup, seed, batches)


def test_perfect_direct_link_gives_unit_age():
    res = run_sim(cfg(ChannelParams(1.0, 0.5, 0.5), 1.0, slots=10_000))
    assert res.avg_aoi == 1.0
    # slot 1 starts from the empty state (0, 0, 0) and idles
    assert res.op_counts[Operation.N] == 1
    assert res.deliveries_direct == 9_999
    assert res.deliveries_relay == 0


@pytest.mark.parametrize("policy", ["SP", "RP"])
def test_matches_naive_slot_loop(policy):
    n = 5000
    config = cfg(ChannelParams(0.3, 0.6, 0.5), 0.4, policy, slots=n, batches=1)
    u = np.random.Generator(np.random.PCG64(config.seed)).random((n, 4))
    ref = naive_sim(u, policy, config.channel, config.p)
    assert run_sim(config).avg_aoi == ref.mean()


def test_chunk_boundaries_do_not_matter():
    n = CHUNK_SLOTS + 1000
    config = cfg(ChannelParams(0.3, 0.6, 0.5), 0.4, "RP", slots=n, warmup=1000, batches=1)
    # the second block continues the same generator stream
    rng = np.random.Generator(np.random.PCG64(config.seed))
    full = np.vstack([rng.random((CHUNK_SLOTS, 4)), rng.random((1000, 4))])
    ref = naive_sim(full, "RP", config.channel, config.p)
    assert run_sim(config).avg_aoi == ref[1000:].mean()


def test_seed_determinism():
    a = run_sim(cfg(seed=5))
    b = run_sim(cfg(seed=5))
    c = run_sim(cfg(seed=6))
    assert a.avg_aoi == b.avg_aoi
    np.testing.assert_array_equal(a.batch_means, b.batch_means)
    assert a.avg_aoi != c.avg_aoi


def test_derived_seeds_distinct():
    seeds = {derive_seed(1, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert derive_seed(1, 3) == derive_seed(1, 3)
    assert derive_seed(1, 3) != derive_seed(2, 3)


def test_counts_and_occupancy_are_consistent():
    res = run_sim(cfg(p=0.7, policy="RP", slots=100_000, warmup=10_000, batches=10))
    assert sum(res.op_counts.values()) == 100_000
    assert set(res.op_counts) == set(Operation)
    assert res.deliveries_direct <= res.op_counts[Operation.S]
    assert res.deliveries_relay <= res.op_counts[Operation.R]
    assert res.state_occupancy.sum() == pytest.approx(1.0)
    assert len(res.batch_means) == 10
    assert res.ci_half_width > 0
    assert res.slots_simulated == 100_000


@pytest.mark.parametrize("policy", ["SP", "RP"])
def test_trace_follows_age_recursion(tmp_path, policy):
    path = tmp_path / "trace.csv"
    p1, p2, p3 = 0.3, 0.6, 0.5
    run_sim(cfg(ChannelParams(p1, p2, p3), 0.4, policy, slots=3000, batches=1), trace_path=str(path))
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3000
    prev = AoiState(0, 0, 0)
    for k, row in enumerate(rows, 1):
        assert int(row["slot"]) == k
        op = Operation.from_letter(row["op"])
        out = SlotOutcome(*(row[c] == "1" for c in ("gen", "sd", "sr", "rd")))
        cur = AoiState(int(row["delta_s"]), int(row["delta_r"]), int(row["delta_d"]))
        assert step(prev, op, out) == cur
        prev = cur


def test_config_validation():
    with pytest.raises(ParameterError):
        cfg(p=0.0)
    with pytest.raises(ParameterError):
        cfg(policy="XX")
    with pytest.raises(ParameterError):
        cfg(slots=1000, warmup=1000)
    with pytest.raises(ParameterError):
        cfg(slots=1001, batches=20)
    with pytest.raises(ParameterError):
        cfg(seed=-1)
    with pytest.raises(ParameterError):
        cfg(policy=object())


def test_analytic_agreement_short_runs():
    # 2e6 slots keep this quick; the acceptance suite runs the full-length grid
    for policy, fn in (("SP", an.sp_avg_aoi), ("RP", an.rp_avg_aoi)):
        for p in (0.3, 0.8):
            res = run_sim(cfg(p=p, policy=policy, slots=2_000_000, warmup=10_000, seed=derive_seed(9, int(p * 10))))
            exact = float(fn(BASE, p))
            assert abs(res.avg_aoi - exact) <= 4 * res.std_error + 1e-3 * exact


def test_higher_link_quality_lowers_age():
    worse = run_sim(cfg(ChannelParams(0.2, 0.8, 0.3), 0.8, "RP", slots=400_000))
    better = run_sim(cfg(ChannelParams(0.2, 0.8, 0.8), 0.8, "RP", slots=400_000))
    assert better.avg_aoi < worse.avg_aoi - 5 * (better.std_error + worse.std_error)


# -- renewal statistics ------------------------------------------------------------------


def test_reconstruct_trivial_renewal():
    stats = RenewalStats(1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0)
    assert reconstruct_aoi_from_renewals(stats, "SP") == 1.0
    assert reconstruct_aoi_from_renewals(stats, "RP") == 1.0
    with pytest.raises(ParameterError):
        reconstruct_aoi_from_renewals(RenewalStats(1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0), "SP")
    with pytest.raises(ParameterError):
        reconstruct_aoi_from_renewals(stats, "MDP")


def test_renewal_needs_deliveries():
    with pytest.raises(RuntimeError):
        collect_renewal_stats(cfg(ChannelParams(0.0, 0.0, 0.0), 0.5, slots=1000))
    with pytest.raises(ParameterError):
        from aorelay.mdp import PolicyTable

        collect_renewal_stats(cfg(policy=PolicyTable.from_rule("SP", (3, 4, 5)), slots=1000))


def test_generate_at_will_sp_never_waits_or_relays():
    stats = collect_renewal_stats(cfg(p=1.0, slots=200_000))
    assert stats.mean_wait_before_service == 0.0
    res = run_sim(cfg(p=1.0, slots=200_000))
    assert res.deliveries_relay == 0
    assert res.op_counts[Operation.R] == 0


@pytest.mark.parametrize(
    "policy, params, p",
    [("SP", (0.2, 0.8, 0.8), 0.5), ("RP", (0.2, 0.3, 0.8), 0.8)],
)
def test_reconstruction_matches_time_average(policy, params, p):
    config = cfg(ChannelParams(*params), p, policy, slots=4_000_000, warmup=10_000, seed=21)
    stats = collect_renewal_stats(config)
    res = run_sim(config)
    assert reconstruct_aoi_from_renewals(stats, policy) == pytest.approx(res.avg_aoi, rel=0.01)


@pytest.mark.parametrize("p", [0.3, 0.6, 1.0])
@pytest.mark.parametrize("params", [(0.2, 0.8, 0.8), (0.2, 0.3, 0.8), (0.3, 0.5, 0.4)])
def test_renewal_identity_grid(params, p):
    for policy in ("SP", "RP"):
        config = cfg(ChannelParams(*params), p, policy, slots=1_000_000, warmup=10_000, seed=derive_seed(3, int(10 * p)))
        recon = reconstruct_aoi_from_renewals(collect_renewal_stats(config), policy)
        assert recon == pytest.approx(run_sim(config).avg_aoi, rel=0.01)


def test_renewal_moments_against_closed_forms():
    config = cfg(p=0.5, slots=4_000_000, warmup=10_000, seed=33)
    stats = collect_renewal_stats(config)
    t = an.sp_terms(BASE, 0.5)
    se = stats.std_errors
    assert abs(stats.mean_interdeparture - t.e_z) < 4 * se["mean_interdeparture"]
    assert abs(stats.mean_service - t.e_s) < 4 * se["mean_service"]

    ch = ChannelParams(0.2, 0.3, 0.8)
    rp = collect_renewal_stats(cfg(ch, 0.8, "RP", slots=4_000_000, warmup=10_000, seed=34))
    rt = an.rp_terms(ch, 0.8)
    assert abs(rp.prob_empty_on_departure - rt.prob_empty) < 4 * rp.std_errors["prob_empty_on_departure"]
    assert abs(rp.mean_wait_before_service - rt.e_h) < 4 * rp.std_errors["mean_wait_before_service"]
    assert abs(rp.mean_interdeparture - rt.e_z) < 4 * rp.std_errors["mean_interdeparture"]
    assert math.isfinite(rp.yz_covariance_empty)

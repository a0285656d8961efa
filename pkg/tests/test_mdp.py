import itertools

import numpy as np
import pytest

from aorelay import analytic as an
from aorelay.chain import exact_avg_aoi
from aorelay.mdp import (
    MdpConfig,
    NotConverged,
    PolicyTable,
    StateIndex,
    build_transition_matrices,
    count_states,
    enumerate_states,
    evaluate_policy,
    relative_value_iteration,
    transition_kernel,
)
from aorelay.model import (
    AoiState,
    ChannelParams,
    InfeasibleOperation,
    Operation,
    ParameterError,
    SlotOutcome,
    feasible_ops,
    saturate,
    step,
)
from aorelay.simulator import SimConfig, run_sim

BASE = ChannelParams(0.2, 0.8, 0.8)
SMALL = MdpConfig(12, 24, 48)


def brute_force_states(caps):
    cap_s, cap_r, cap_d = caps
    out = set()
    for s, r, d in itertools.product(range(cap_d + 1), repeat=3):
        if not s <= r <= d:
            continue
        if s == d:
            out.add((s, r, d))
        elif s <= cap_s and (r in (s, d) or r <= cap_r):
            out.add((s, r, d))
    return out


@pytest.mark.parametrize("caps", [(1, 2, 2), (2, 3, 3), (3, 5, 8), (4, 5, 6), (5, 9, 20)])
def test_state_space_matches_brute_force(caps):
    states = enumerate_states(MdpConfig(*caps))
    assert {tuple(x) for x in states.tolist()} == brute_force_states(caps)
    assert len(states) == count_states(caps)
    assert tuple(states[0]) == (0, 0, 0)
    assert all(AoiState(*x).is_valid() for x in states.tolist())


@pytest.mark.parametrize("caps", [(1, 1, 1), (2, 2, 2)])
def test_non_strict_caps_rejected(caps):
    with pytest.raises(ParameterError):
        MdpConfig(*caps)


def test_state_limit():
    with pytest.raises(ParameterError):
        enumerate_states(MdpConfig(30, 60, 120, max_states=1000))


def test_state_space_closed_under_transitions():
    caps = (3, 5, 8)
    states = enumerate_states(MdpConfig(*caps))
    members = {tuple(x) for x in states.tolist()}
    for row in states.tolist():
        state = AoiState(*row)
        for op in feasible_ops(state):
            for flags in itertools.product((False, True), repeat=4):
                assert tuple(saturate(step(state, op, SlotOutcome(*flags)), caps)) in members


def test_matrices_match_scalar_kernel():
    caps = (3, 5, 8)
    ch = ChannelParams(0.3, 0.6, 0.45)
    states = enumerate_states(MdpConfig(*caps))
    index = StateIndex(states, caps)
    mats = build_transition_matrices(states, index, ch, 0.35)
    for i, row in enumerate(states.tolist()):
        for k, op in enumerate((Operation.N, Operation.R, Operation.S)):
            dense = mats[k].getrow(i).toarray().ravel()
            if op not in feasible_ops(AoiState(*row)):
                assert dense.sum() == 0
                continue
            ref = np.zeros(len(states))
            for nxt, prob in transition_kernel(row, op, ch, 0.35, caps).items():
                ref[index.lookup(*nxt)] += prob
            np.testing.assert_allclose(dense, ref, atol=1e-15)


def test_rows_are_stochastic():
    states = enumerate_states(SMALL)
    mats = build_transition_matrices(states, StateIndex(states, SMALL.caps), BASE, 0.616)
    s, r, d = states.T
    feasible = [np.ones(len(states), bool), r < d, s < d]
    for m, f in zip(mats, feasible):
        sums = np.asarray(m.sum(axis=1)).ravel()
        np.testing.assert_allclose(sums[f], 1.0, atol=1e-12)
        assert np.all(sums[~f] == 0)


def test_kernel_examples():
    ch = ChannelParams(0.2, 0.8, 0.8)
    dist = transition_kernel((0, 4, 4), Operation.S, ch, 0.5)
    # 8 joint outcomes; a direct success without the relay leaves r = 5 > d = 1,
    # which canonicalises onto the outcome where both links succeed
    raw = {}
    for g, sd, sr in itertools.product((False, True), repeat=3):
        prob = (0.5) * (0.2 if sd else 0.8) * (0.8 if sr else 0.2)
        raw[(g, sd, sr)] = (step(AoiState(0, 4, 4), Operation.S, SlotOutcome(g, sd, sr, False)), prob)
    assert len(raw) == 8
    assert sum(pr for _, pr in raw.values()) == pytest.approx(1.0, abs=1e-15)
    assert len(dist) == 6
    assert sum(dist.values()) == pytest.approx(1.0, abs=1e-15)
    assert dist[(0, 1, 1)] == pytest.approx(0.5 * 0.2)
    assert transition_kernel((4, 4, 4), Operation.N, BASE, 0.0) == {(5, 5, 5): 1.0}
    with pytest.raises(InfeasibleOperation):
        transition_kernel((4, 4, 4), Operation.S, BASE, 0.5)


def test_kernel_matches_sampled_frequencies():
    p, p3, n = 0.5, 0.8, 1_000_000
    dist = transition_kernel((2, 2, 5), Operation.R, ChannelParams(0.2, 0.8, p3), p)
    rng = np.random.default_rng(2024)
    gen = rng.random(n) < p
    rd = rng.random(n) < p3
    new_s = np.where(gen, 0, 3)
    new_d = np.where(rd, 3, 6)
    counts = {}
    for key in zip(new_s.tolist(), [3] * n, new_d.tolist()):
        counts[key] = counts.get(key, 0) + 1
    assert set(counts) == set(dist)
    for key, prob in dist.items():
        sigma = np.sqrt(prob * (1 - prob) / n)
        assert abs(counts[key] / n - prob) < 3 * sigma


# -- solver -------------------------------------------------------------------------------


def test_rvi_converges_with_sensible_gain():
    table = relative_value_iteration(BASE, 0.616, SMALL)
    assert table.span_residual < SMALL.epsilon
    assert table.gain <= min(an.sp_avg_aoi(BASE, 0.616), an.rp_avg_aoi(BASE, 0.616)) * 1.01
    spans = table.span_history
    assert all(b <= 1.5 * a for a, b in zip(spans[10:], spans[11:]))


def test_gain_equals_stationary_mean_of_greedy_policy():
    table = relative_value_iteration(ChannelParams(0.2, 0.3, 0.8), 0.5, SMALL)
    exact = exact_avg_aoi(ChannelParams(0.2, 0.3, 0.8), 0.5, table, method="sparse", tol=1e-13)
    assert table.gain == pytest.approx(exact.avg_aoi, abs=1e-5)


def test_cap_insensitivity():
    small = relative_value_iteration(BASE, 0.8, MdpConfig(12, 24, 48)).gain
    large = relative_value_iteration(BASE, 0.8, MdpConfig(20, 40, 80)).gain
    assert small == pytest.approx(large, rel=1e-5)


def test_damping_and_warm_start_keep_the_fixed_point():
    cold = relative_value_iteration(BASE, 0.5, SMALL)
    damped = relative_value_iteration(BASE, 0.5, SMALL, damping=0.7)
    warm = relative_value_iteration(BASE, 0.55, SMALL, h0=cold.values)
    again = relative_value_iteration(BASE, 0.55, SMALL)
    assert damped.gain == pytest.approx(cold.gain, abs=1e-5)
    assert warm.gain == pytest.approx(again.gain, abs=1e-5)
    with pytest.raises(ParameterError):
        relative_value_iteration(BASE, 0.5, SMALL, damping=0.0)


def test_not_converged_carries_last_policy():
    with pytest.raises(NotConverged) as info:
        relative_value_iteration(BASE, 0.5, MdpConfig(12, 24, 48, max_iters=3))
    err = info.value
    assert err.iterations == 3
    assert err.span >= 1e-6
    assert len(err.policy.actions) == count_states((12, 24, 48))


def test_reliable_direct_link_always_sends_from_source():
    # At p = 1 the source is fresher than R in every slot after the first, so
    # s == r < d is unreachable (there R can be the better sender). With
    # P1 >= P3 a source transmission dominates a relay one everywhere else.
    table = relative_value_iteration(ChannelParams(0.9, 0.95, 0.9), 1.0, SMALL)
    for state, op in table.items():
        if state.delta_s < min(state.delta_r, state.delta_d):
            assert op is Operation.S, state


def test_far_stale_destination_may_prefer_the_relay():
    # with P3 > P1 the optimum forwards from R once D is very stale:
    # a likelier delivery beats a one-slot fresher one
    table = relative_value_iteration(ChannelParams(0.9, 0.95, 0.95), 1.0, SMALL)
    assert table.lookup((0, 1, 2)) is Operation.S
    assert table.lookup((0, 1, 40)) is Operation.R


def test_greedy_policy_is_feasible():
    table = relative_value_iteration(ChannelParams(0.2, 0.3, 0.3), 0.4, SMALL)
    for state, op in table.items():
        assert op in feasible_ops(state)


# -- policy tables --------------------------------------------------------------------------


@pytest.mark.parametrize("rule", ["SP", "RP"])
def test_rule_tables_reproduce_the_rules_exactly(rule):
    ch = ChannelParams(0.2, 0.3, 0.8)
    table = PolicyTable.from_rule(rule, (30, 60, 120))
    a = evaluate_policy(table, ch, 0.6, 200_000, seed=8)
    b = run_sim(SimConfig(ch, 0.6, rule, 200_000, 10_000, 8))
    assert a.avg_aoi == b.avg_aoi
    assert a.op_counts == b.op_counts


def test_lookup_saturates():
    table = PolicyTable.from_rule("SP", (3, 5, 8))
    assert table.lookup((50, 80, 90)) is Operation.S
    assert table.lookup((9, 9, 9)) is Operation.N
    assert table.lookup((1, 1, 40)) is Operation.R


def test_csv_round_trip(tmp_path):
    table = relative_value_iteration(BASE, 0.7, MdpConfig(4, 6, 10))
    path = tmp_path / "policy.csv"
    sidecar = table.to_csv(str(path))
    assert sidecar == str(tmp_path / "policy.json")
    assert path.read_text().splitlines()[0] == "delta_s,delta_r,delta_d,op"
    back = PolicyTable.from_csv(str(path))
    assert back.caps == table.caps
    np.testing.assert_array_equal(back.states, table.states)
    np.testing.assert_array_equal(back.actions, table.actions)
    assert back.gain == table.gain
    assert back.meta["p"] == 0.7


def test_optimal_policy_beats_both_rules_in_simulation():
    ch = ChannelParams(0.2, 0.3, 0.3)
    table = relative_value_iteration(ch, 0.8)
    mdp = evaluate_policy(table, ch, 0.8, 2_000_000, seed=5)
    best = min(
        (run_sim(SimConfig(ch, 0.8, rule, 2_000_000, 10_000, 6)) for rule in ("SP", "RP")),
        key=lambda r: r.avg_aoi,
    )
    assert mdp.avg_aoi <= best.avg_aoi + 3 * (mdp.std_error + best.std_error)

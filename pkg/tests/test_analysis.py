import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qnrsim.analysis import (DelayModelParams, asynchrony_window, compute_metrics, control_message_delay,
                             format_value, tcp_retransmit_flag, transient_loss, transient_overload)
from qnrsim.errors import ParameterError
from qnrsim.qnr_solver import SolverConfig, candidate_paths, solve_qnr
from qnrsim.routing import RoutingMatrix, sftc
from qnrsim.topology import directed_link_count

from conftest import both_ways, make_problem, make_topology

TAU = Fraction(1, 1000)


def test_identical_routing_reports_zero(diamond):
    prob = make_problem(diamond, [(0, 3, 10), (3, 0, 10)], [[0, 1, 3], [3, 2, 0]])
    m = compute_metrics(prob.current, prob.current, prob)
    assert (m.sftc, m.rerouted_count, m.max_nftc, m.changed_pct, m.rerouted_pct) == (0, 0, 0, 0.0, 0.0)
    assert not m.nftc.any()
    assert m.reconfig_delay_ms == 0 and m.loss_volume_mb == 0
    # no rerouted flows: propagation + transmission only
    assert m.ctrl_msg_delay_s == pytest.approx(1e-4 + 1e-5)


def test_single_move_on_diamond(diamond):
    prob = make_problem(diamond, [(0, 3, 10), (0, 3, 10)], [[0, 1, 3], [0, 1, 3]])
    new = RoutingMatrix.from_paths(4, [[0, 1, 3], [0, 2, 3]])
    m = compute_metrics(new, prob.current, prob)
    assert m.sftc == 4 and m.rerouted_count == 1 and m.rerouted_pct == 50.0
    # switch 0 swaps 0->1 for 0->2; switches 1 and 2 each change one entry
    assert m.nftc.tolist() == [2, 1, 1, 0]
    assert m.max_nftc == 2 and m.reconfig_delay_ms == 2.0
    assert m.changed_pct == pytest.approx(100 * 4 / (8 * 2))
    assert m.changed_links_distinct == 4
    assert m.touched_switches == (0, 1, 2)


def two_short_one_long():
    # 0-1-2-3-4-5 long route (alt 0-6-7-8-9-5); short flows 2-3-10 (alt 2-11-10)
    pairs = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 6), (6, 7), (7, 8), (8, 9), (9, 5),
             (3, 10), (2, 11), (11, 10)]
    t = make_topology(12, both_ways(pairs))
    flows = [(0, 5, 90), (2, 10, 20), (2, 10, 20)]
    paths = [[0, 1, 2, 3, 4, 5], [2, 3, 10], [2, 3, 10]]
    return make_problem(t, flows, paths)


def test_rerouted_count_and_sftc_rank_differently():
    prob = two_short_one_long()
    cfg = SolverConfig(max_path_hops=5)
    assert candidate_paths(prob.topology, prob.flows[0], 5, prob.current_paths[0])[1:] == [[0, 6, 7, 8, 9, 5]]
    sol = solve_qnr(prob, cfg)
    short_move = compute_metrics(sol.routing, prob.current, prob)
    long_move = compute_metrics(RoutingMatrix.from_paths(12, [[0, 6, 7, 8, 9, 5], [2, 3, 10], [2, 3, 10]]),
                                prob.current, prob)
    assert (short_move.sftc, short_move.rerouted_count) == (8, 2)
    assert (long_move.sftc, long_move.rerouted_count) == (10, 1)


@pytest.mark.parametrize("tp, tt, tc, n, want", [
    (Fraction(1, 1000), Fraction(2, 1000), Fraction(1, 1000), 3, Fraction(7, 1000)),
    (1, 2, 3, 1, 6),
    (1, 2, 3, 0, 3),
    (1, 5, 1, 2, 11),
    (0, 0, 0, 9, 0),
    (Fraction(1, 3), Fraction(1, 7), Fraction(1, 11), 4, Fraction(1, 3) + Fraction(1, 7) + Fraction(3, 7)),
    (2, 1, 1, 100, 2 + 1 + 100),
    (Fraction(1, 10), Fraction(3, 10), Fraction(1, 10), 5, Fraction(1, 10) + Fraction(3, 10) + Fraction(12, 10)),
    (4, 0, 1, 7, 4 + 7),
    (0, 1, 0, 1, 1),
    (0, 1, 2, 0, 1),
])
def test_control_delay_substitution(tp, tt, tc, n, want):
    got = control_message_delay(DelayModelParams(tp, tt, tc, 1.0, n))
    assert got == want


def test_control_delay_boundaries():
    p = DelayModelParams(Fraction(1), Fraction(2), Fraction(3), 1.0, 1)
    assert control_message_delay(p) == 1 + 2 + 3
    with pytest.raises(ParameterError):
        DelayModelParams(n_prime=-1)
    with pytest.raises(ParameterError):
        DelayModelParams(t_processing=-1)


@settings(max_examples=100, deadline=None)
@given(st.fractions(0, 1), st.fractions(0, 1), st.fractions(0, 1))
def test_control_delay_monotone(tp, tt, tc):
    vals = [control_message_delay(DelayModelParams(tp, tt, tc, 1.0, n)) for n in range(0, 101)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_loss_worked_case():
    x = 1000  # Mb/s
    overload = Fraction(9, 10) * x + Fraction(8, 10) * x - x
    assert transient_loss(overload, TAU) == Fraction(7, 10)
    assert transient_loss(0, TAU) == 0
    assert transient_loss(overload, 0) == 0
    with pytest.raises(ParameterError):
        transient_loss(-1, 1)


@settings(max_examples=50)
@given(st.fractions(0, 1000), st.fractions(0, 1))
def test_loss_is_bilinear(o, w):
    assert transient_loss(2 * o, w) == 2 * transient_loss(o, w) == transient_loss(o, 2 * w)


def test_asynchrony_window():
    t = make_topology(4, both_ways([(0, 1), (1, 2), (2, 3)]), delays=[0.001, 0.001, 0.003, 0.001])
    assert asynchrony_window(t, {0, 1, 3}) == 0
    assert asynchrony_window(t, {0, 2}) == pytest.approx(0.002)
    assert asynchrony_window(t, [2]) == 0
    with pytest.raises(ParameterError):
        asynchrony_window(t, set())


@pytest.mark.parametrize("old, new, rto, want", [(1, 3, 1, True), (1, 1, 1, False), (1, 2, 1, False), (2, 1, 0, False)])
def test_tcp_flag(old, new, rto, want):
    assert tcp_retransmit_flag(old, new, rto) is want


def test_tcp_flag_rejects_negative():
    with pytest.raises(ParameterError):
        tcp_retransmit_flag(-1, 0, 1)


def test_swap_overload_and_loss():
    t = make_topology(4, both_ways([(0, 1), (0, 2), (1, 3), (2, 3)]), delays=[0.001, 0.003, 0.001, 0.001])
    prob = make_problem(t, [(0, 3, 90), (0, 3, 80)], [[0, 1, 3], [0, 2, 3]])
    swapped = RoutingMatrix.from_paths(4, [[0, 2, 3], [0, 1, 3]])
    # during the swap each of the four links carries both flows: 170 on 100
    assert transient_overload(swapped, prob) == pytest.approx(4 * 70)
    m = compute_metrics(swapped, prob.current, prob)
    assert m.window_s == pytest.approx(0.002)
    assert m.loss_volume_mb == pytest.approx(280 * 0.002)


def test_metric_invariants(tiny_instances):
    rng = random.Random(1)
    for prob in tiny_instances(150, seed=8):
        paths = [rng.choice(candidate_paths(prob.topology, f, 4)) for f in prob.flows]
        A = RoutingMatrix.from_paths(prob.topology.n, paths)
        m = compute_metrics(A, prob.current, prob)
        assert int(m.nftc.sum()) == m.sftc == sftc(A, prob.current)
        assert m.max_nftc <= m.sftc
        assert m.rerouted_count <= prob.flows.p
        assert (m.rerouted_count == 0) == (m.sftc == 0)
        assert m.changed_pct == pytest.approx(100 * m.sftc / (directed_link_count(prob.topology) * prob.flows.p))
        assert m.reconfig_delay_ms == m.max_nftc * 1.0


def test_metrics_reject_shape_mismatch(diamond):
    prob = make_problem(diamond, [(0, 3, 10)], [[0, 1, 3]])
    with pytest.raises(ParameterError):
        compute_metrics(RoutingMatrix.empty(4, 2), prob.current, prob)


def test_format_value():
    assert format_value(None) == ""
    assert format_value(3) == "3"
    assert format_value(np.int64(3)) == "3"
    assert format_value(0.1 + 0.2) == "0.3"
    assert format_value(True) == "true"
    assert format_value("Optimal") == "Optimal"

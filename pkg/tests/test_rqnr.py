import random

import pytest
from hypothesis import given, settings, strategies as st

from qnrsim.errors import FlowError, ParameterError
from qnrsim.qnr_solver import SolverConfig, solve_qnr
from qnrsim.routing import validate
from qnrsim.rqnr import (CompressionConfig, MergeMap, Stream, compress, compressed_problem, compression_rate,
                         dump_merge_map, expand, load_merge_map, solve_rqnr)
from qnrsim.solution import Status
from qnrsim.workload import Flow, FlowSet, to_units

from conftest import make_problem

CFG = CompressionConfig(10, 100)


def flowset(*rows):
    return FlowSet(tuple(Flow(k, s, d, c, *cls) for k, (s, d, c, *cls) in enumerate(rows)))


def demands(fs):
    return [f.demand_mbps for f in fs]


def test_two_small_flows_merge():
    out, mm = compress(flowset((0, 3, 4), (0, 3, 4)), CFG)
    assert demands(out) == [8]
    assert mm.streams == (Stream(0, (0, 1), 8),)


def test_distinct_pairs_stay_apart():
    fs = flowset((0, 3, 95), (1, 3, 96))
    out, mm = compress(fs, CFG)
    assert out == fs
    assert [s.members for s in mm.streams] == [(0,), (1,)]


def test_tight_cap_blocks_every_merge():
    out, mm = compress(flowset((0, 3, 6), (0, 3, 6), (0, 3, 6)), CompressionConfig(10, 10))
    assert demands(out) == [6, 6, 6]
    assert len(mm.streams) == 3


def test_two_big_two_small_streams():
    out, mm = compress(flowset((0, 3, 95), (0, 3, 96), (0, 3, 4), (0, 3, 4)), CFG)
    assert demands(out) == [95, 96, 8]
    assert [s.members for s in mm.streams] == [(0,), (1,), (2, 3)]


def test_large_head_absorbs_nothing():
    # a big flow never heads a stream, so the small ones pair up instead
    out, _ = compress(flowset((0, 3, 50), (0, 3, 4), (0, 3, 4)), CFG)
    assert demands(out) == [50, 8]


def test_class_separates_streams():
    out, _ = compress(flowset((0, 3, 4, 0), (0, 3, 4, 1), (0, 3, 4, 0)), CFG)
    assert demands(out) == [8, 4]
    assert [f.class_id for f in out] == [0, 1]


def test_scan_is_in_id_order():
    fs = FlowSet((Flow(5, 0, 3, 4), Flow(2, 0, 3, 3), Flow(9, 0, 3, 7)))
    out, mm = compress(fs, CompressionConfig(10, 12))
    # id 2 heads: 3 + 4 = 7, then 7 + 7 = 14 >= 12 stops at id 9
    assert [s.members for s in mm.streams] == [(2, 5), (9,)]
    assert demands(out) == [7, 7]


def test_config_validation():
    with pytest.raises(ParameterError):
        CompressionConfig(0, 10)
    with pytest.raises(ParameterError):
        CompressionConfig(20, 10)


flow_rows = st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3), st.sampled_from([0.5, 1, 2.25, 4, 6, 9.5, 30]),
                               st.integers(0, 1)).filter(lambda r: r[0] != r[1]), min_size=1, max_size=30)


@settings(max_examples=150, deadline=None)
@given(flow_rows, st.sampled_from([(10, 100), (5, 12), (10, 10), (1, 1), (50, 60)]))
def test_compression_invariants(rows, thresholds):
    fs = flowset(*rows)
    cfg = CompressionConfig(*thresholds)
    out, mm = compress(fs, cfg)
    mm.check(fs)
    assert out.total_demand_units() == fs.total_demand_units()
    by_id = {f.id: f for f in fs}
    for s, f in zip(mm.streams, out):
        assert f.id == s.id
        keys = {(by_id[m].src, by_id[m].dst, by_id[m].class_id) for m in s.members}
        assert keys == {(f.src, f.dst, f.class_id)}
        if len(s.members) > 1:
            assert to_units(s.demand_mbps) < to_units(cfg.upper_bound_mbps)
            assert all(by_id[m].demand_units < to_units(cfg.lower_band_mbps) for m in s.members)
        else:
            assert f == by_id[s.id]
    assert 0 <= compression_rate(fs, out) < 1


@pytest.mark.parametrize("before, after, rate", [(100, 100, 0.0), (100, 10, 0.9), (4, 3, 0.25)])
def test_compression_rate(before, after, rate):
    mk = lambda k: FlowSet(tuple(Flow(i, 0, 1, 1) for i in range(k)))
    assert compression_rate(mk(before), mk(after)) == pytest.approx(rate, abs=1e-12)


def test_compression_rate_rejects_growth():
    with pytest.raises(ParameterError):
        compression_rate(FlowSet(()), flowset((0, 1, 1)))
    assert compression_rate(FlowSet(()), FlowSet(())) == 0.0


def test_merge_map_round_trip():
    _, mm = compress(flowset((0, 3, 95), (0, 3, 4.5), (1, 3, 2), (0, 3, 4)), CFG)
    text = dump_merge_map(mm)
    assert text.splitlines()[1] == "1: 1,3 8.5"
    assert load_merge_map(text) == mm
    with pytest.raises(FlowError):
        load_merge_map("x: 1 2")


def test_check_rejects_bad_maps():
    fs = flowset((0, 3, 4), (0, 3, 4), (1, 3, 4))
    bad = [
        MergeMap((Stream(0, (0, 1), 8),)),                              # flow 2 missing
        MergeMap((Stream(0, (0, 1), 9), Stream(2, (2,), 4))),           # wrong total
        MergeMap((Stream(0, (0, 2), 8), Stream(1, (1,), 4))),           # mixed endpoints
        MergeMap((Stream(1, (0, 1), 8), Stream(2, (2,), 4))),           # not led by its own id
        MergeMap((Stream(0, (0, 1), 8), Stream(1, (1,), 4), Stream(2, (2,), 4))),
    ]
    for mm in bad:
        with pytest.raises(FlowError):
            mm.check(fs)


# -- expansion -------------------------------------------------------------

def test_expand_singletons_is_identity(diamond):
    prob = make_problem(diamond, [(0, 3, 60), (0, 3, 60)], [[0, 1, 3], [0, 1, 3]])
    small, mm = compressed_problem(prob, CFG)
    assert small.flows == prob.flows
    sol = solve_qnr(small, SolverConfig(max_path_hops=2))
    out = expand(sol, mm, prob)
    assert out.routing == sol.routing and out.objective == sol.objective and out.status is sol.status


def test_expand_shared_path_costs_nothing(diamond):
    prob = make_problem(diamond, [(0, 3, 4), (0, 3, 4)], [[0, 2, 3], [0, 2, 3]])
    out = solve_rqnr(prob, CFG, SolverConfig(max_path_hops=2))
    assert out.ok and out.objective == 0
    assert out.routing == prob.current


def test_expand_different_paths_counts_the_moved_member(diamond):
    prob = make_problem(diamond, [(0, 3, 4), (0, 3, 4)], [[0, 1, 3], [0, 2, 3]])
    out = solve_rqnr(prob, CFG, SolverConfig(max_path_hops=2))
    # stream stays on the head's path; member 1 leaves 0-2-3 (2) for 0-1-3 (2)
    assert out.ok and out.objective == 4
    assert validate(out.routing, prob) == []
    assert out.stats["streams"] == 1


def test_expand_rejects_mismatch(diamond):
    prob = make_problem(diamond, [(0, 3, 4), (0, 3, 4)], [[0, 1, 3], [0, 2, 3]])
    small, mm = compressed_problem(prob, CFG)
    sol = solve_qnr(small, SolverConfig(max_path_hops=2))
    with pytest.raises(ParameterError):
        expand(sol, MergeMap((Stream(0, (0,), 4), Stream(1, (1,), 4))), prob)
    with pytest.raises(FlowError):
        expand(sol, MergeMap((Stream(0, (0,), 4),)), prob)
    with pytest.raises(ParameterError):
        expand(type(sol)(None, None, Status.INFEASIBLE), mm, prob)


def test_two_big_two_small_rqnr_infeasible(diamond):
    flows = [(0, 3, 95), (0, 3, 96), (0, 3, 4), (0, 3, 4)]
    prob = make_problem(diamond, flows, [[0, 1, 3]] * 4)
    out = solve_rqnr(prob, CFG, SolverConfig(max_path_hops=2))
    assert out.status is Status.INFEASIBLE and out.routing is None
    assert solve_qnr(prob, SolverConfig(max_path_hops=2)).ok


def test_rqnr_is_conservative(tiny_instances):
    rng = random.Random(4)
    checked = 0
    for prob in tiny_instances(250, seed=31, max_p=3):
        # duplicate endpoints so compression has something to merge
        fl = list(prob.flows)
        paths = prob.current_paths
        extra = Flow(len(fl), fl[0].src, fl[0].dst, rng.choice([1, 2, 3]))
        grown = make_problem(prob.topology, [(f.src, f.dst, f.demand_mbps) for f in fl + [extra]],
                             paths + [paths[0]], prob.mu)
        cfg = SolverConfig(max_path_hops=4)
        q = solve_qnr(grown, cfg)
        r = solve_rqnr(grown, CompressionConfig(5, 12), cfg)
        if r.ok:
            assert validate(r.routing, grown) == []
            assert q.ok and q.objective <= r.objective
            checked += 1
    assert checked > 50

import numpy as np
import pytest

from qnrsim.errors import FlowError, ParameterError
from qnrsim.workload import (Flow, FlowSet, SizeDistribution, WorkloadParams, dump_flows, generate_workload,
                             inject_big_flows, load_flows, scale_demands, to_units)

from conftest import both_ways, make_topology


@pytest.fixture
def racked():
    """Four racks of two switches each, racks joined on a ring of their first switches."""
    pairs = [(0, 1), (2, 3), (4, 5), (6, 7), (0, 2), (2, 4), (4, 6), (6, 0)]
    return make_topology(8, both_ways(pairs), racks=[0, 0, 1, 1, 2, 2, 3, 3])


def test_pl_zero_on_fat_tree(fat_tree4):
    fs = generate_workload(fat_tree4, WorkloadParams(p=500, pl=0.0, seed=3))
    edges = set(fat_tree4.edge_switches.tolist())
    for f in fs:
        assert f.src != f.dst
        assert f.src in edges and f.dst in edges
        # each edge switch is its own rack, so every flow is inter-rack
        assert fat_tree4.rack_of[f.src] != fat_tree4.rack_of[f.dst]
        # the draw stays inside the pod
        assert fat_tree4.pod_of[f.src] == fat_tree4.pod_of[f.dst]


def test_pl_one_leaves_rack(fat_tree4, racked):
    for t in (fat_tree4, racked):
        fs = generate_workload(t, WorkloadParams(p=500, pl=1.0, seed=1))
        assert all(t.rack_of[f.src] != t.rack_of[f.dst] for f in fs)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_pl_fraction_multi_switch_racks(racked, seed):
    fs = generate_workload(racked, WorkloadParams(p=10000, pl=0.25, seed=seed))
    inter = np.mean([racked.rack_of[f.src] != racked.rack_of[f.dst] for f in fs])
    assert 0.24 <= inter <= 0.26


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_pl_fraction_fat_tree_pods(fat_tree4, seed):
    fs = generate_workload(fat_tree4, WorkloadParams(p=10000, pl=0.25, seed=seed))
    pods = fat_tree4.pod_of
    inter = np.mean([pods[f.src] != pods[f.dst] for f in fs])
    assert 0.24 <= inter <= 0.26


def test_same_seed_same_flows(fat_tree4):
    wp = WorkloadParams(p=300, pl=0.5, seed=11)
    assert generate_workload(fat_tree4, wp) == generate_workload(fat_tree4, wp)
    other = generate_workload(fat_tree4, WorkloadParams(p=300, pl=0.5, seed=12))
    assert other != generate_workload(fat_tree4, wp)


def test_default_mixture_shape(fat_tree4):
    fs = generate_workload(fat_tree4, WorkloadParams(p=5000, seed=0))
    d = np.array([f.demand_mbps for f in fs])
    small = (d >= 1) & (d <= 10)
    big = (d >= 50) & (d <= 200)
    assert (small | big).all()
    assert 0.88 < small.mean() < 0.92


def test_workload_params_validation():
    with pytest.raises(ParameterError):
        WorkloadParams(p=0)
    with pytest.raises(ParameterError):
        WorkloadParams(p=5, pl=1.5)
    with pytest.raises(ParameterError):
        SizeDistribution("weird", (1,))
    with pytest.raises(ParameterError):
        SizeDistribution.parse("uniform:1")
    assert str(SizeDistribution.parse("uniform:1,10")) == "uniform:1,10"


def test_load_single_flow():
    t = make_topology(4, both_ways([(0, 1), (1, 2), (2, 3)]))
    fs = load_flows("1\n0 0 3 100 1", t)
    assert fs.p == 1
    f = fs[0]
    assert (f.id, f.src, f.dst, f.demand_mbps, f.class_id) == (0, 0, 3, 100.0, 1)


@pytest.mark.parametrize("text, fragment", [
    ("1\n0 0 3 0 1", "line 2"),
    ("2\n0 0 3 5 0\n0 1 3 5 0", "line 3"),
    ("1\n0 2 2 5 0", "line 2"),
    ("1\n0 0 9 5 0", "line 2"),
    ("1\n0 0 3 5", "line 2"),
    ("2\n0 0 3 5 0", "header"),
    ("", "empty"),
])
def test_load_errors(text, fragment):
    t = make_topology(4, both_ways([(0, 1), (1, 2), (2, 3)]))
    with pytest.raises(FlowError, match=fragment):
        load_flows(text, t)


def test_flow_file_round_trip(fat_tree4):
    fs = generate_workload(fat_tree4, WorkloadParams(p=200, seed=4, n_classes=3))
    assert load_flows(dump_flows(fs), fat_tree4) == fs


def test_inject_zero_is_identity(fat_tree4):
    fs = generate_workload(fat_tree4, WorkloadParams(p=40, seed=2))
    assert inject_big_flows(fs, 0, 500, fat_tree4) is fs


def test_inject_five_on_four_hundred(fat_tree4):
    fs = generate_workload(fat_tree4, WorkloadParams(p=400, seed=2))
    out = inject_big_flows(fs, 5, 500, fat_tree4)
    assert out.p == 405
    assert out.flows[:400] == fs.flows
    big = [f for f in out if f.demand_mbps == 500]
    assert len(big) == 5
    assert len({f.id for f in out}) == 405
    edges = set(fat_tree4.edge_switches.tolist())
    assert all(f.src in edges and f.dst in edges and f.src != f.dst for f in big)


def test_inject_rejects_bad_args(fat_tree4):
    fs = generate_workload(fat_tree4, WorkloadParams(p=10, seed=2))
    with pytest.raises(ParameterError):
        inject_big_flows(fs, 5, 0, fat_tree4)
    with pytest.raises(ParameterError):
        inject_big_flows(fs, -1, 10, fat_tree4)


def test_flow_invariants():
    with pytest.raises(FlowError):
        Flow(0, 1, 1, 5)
    with pytest.raises(FlowError):
        Flow(0, 1, 2, -1)
    with pytest.raises(FlowError):
        FlowSet((Flow(0, 1, 2, 1), Flow(0, 2, 1, 1)))


def test_rates_are_exact_units():
    assert to_units(0.1) + to_units(0.2) == to_units(0.3)
    fs = FlowSet((Flow(0, 0, 1, 2.5), Flow(1, 0, 1, 3.25)))
    assert fs.total_demand_units() == 5750
    assert scale_demands(fs, 2)[1].demand_mbps == 6.5

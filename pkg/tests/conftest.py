"""Shared fixtures: small hand-checkable graphs and a random tiny-instance generator."""

import random

import numpy as np
import pytest

from qnrsim.qnr_solver import candidate_paths
from qnrsim.routing import ReconfigProblem, RoutingMatrix
from qnrsim.topology import FatTreeParams, Topology, generate_fat_tree
from qnrsim.workload import Flow, FlowSet


def make_topology(n, links, capacity=100, delays=None, racks=None):
    """Topology from (i, j) or (i, j, cap) tuples; pairs are directed."""
    bw = np.zeros((n, n), dtype=np.int64)
    for link in links:
        i, j = link[0], link[1]
        bw[i, j] = link[2] if len(link) > 2 else capacity
    delays = np.zeros(n) if delays is None else np.asarray(delays, dtype=float)
    racks = np.arange(n) if racks is None else np.asarray(racks)
    return Topology(n, bw, delays, racks)


def both_ways(pairs):
    return [(a, b) for a, b in pairs] + [(b, a) for a, b in pairs]


def make_problem(t, flows, paths, mu=1):
    fs = FlowSet(tuple(Flow(k, s, d, c) for k, (s, d, c) in enumerate(flows)))
    return ReconfigProblem(t, fs, RoutingMatrix.from_paths(t.n, paths), mu)


@pytest.fixture
def diamond():
    """0 -> {1, 2} -> 3 with 100 Mb/s links both ways."""
    return make_topology(4, both_ways([(0, 1), (0, 2), (1, 3), (2, 3)]))


@pytest.fixture
def cycle4():
    """Bidirectional ring 0-1-2-3-0."""
    return make_topology(4, both_ways([(0, 1), (1, 2), (2, 3), (3, 0)]))


@pytest.fixture
def red_flow_net():
    """20 switches on a ring plus the chord path 19 -> 11 -> 1 -> 5 -> 13."""
    ring = [(v, (v + 1) % 20) for v in range(20)]
    chords = [(19, 11), (11, 1), (1, 5), (5, 13)]
    return make_topology(20, both_ways(ring + chords))


@pytest.fixture(scope="session")
def fat_tree4():
    return generate_fat_tree(FatTreeParams(4))


def random_instance(rng: random.Random, max_n=6, max_p=3, max_hops=4):
    """Random strongly connected graph with at most ``max_n`` switches and
    ``max_p`` flows sitting on random simple paths (which may overload)."""
    while True:
        n = rng.randint(3, max_n)
        bw = np.zeros((n, n), dtype=np.int64)
        for i in range(n):
            bw[i, (i + 1) % n] = rng.choice([5, 10, 20])
        for _ in range(rng.randint(0, 2 * n)):
            i, j = rng.randrange(n), rng.randrange(n)
            if i != j:
                bw[i, j] = rng.choice([5, 10, 20])
        t = Topology(n, bw, np.zeros(n), np.arange(n))
        p = rng.randint(1, max_p)
        flows, paths = [], []
        for k in range(p):
            s, d = rng.sample(range(n), 2)
            fl = Flow(k, s, d, rng.choice([2, 4, 6, 8, 11]))
            cands = candidate_paths(t, fl, max_hops)
            if not cands:
                break
            flows.append(fl)
            paths.append(rng.choice(cands))
        if len(flows) < p:
            continue
        return ReconfigProblem(t, FlowSet(tuple(flows)), RoutingMatrix.from_paths(n, paths),
                               rng.choice([1, 0.5, 0.8]))


@pytest.fixture
def tiny_instances():
    def gen(count, seed=0, **kw):
        rng = random.Random(seed)
        return [random_instance(rng, **kw) for _ in range(count)]
    return gen


# -- acceptance report -------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def report_criterion(number: int, ok: bool, detail: str) -> bool:
    """Record and print one PASS/FAIL line; returns ``ok`` for the assert."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)

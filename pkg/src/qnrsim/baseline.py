"""QoS-aware shortest-path rerouting (the conventional comparator) and
primary routing of newly arrived flows."""

from __future__ import annotations

import enum
import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from .routing import ReconfigProblem, RoutingMatrix, as_fraction, sftc
from .solution import Solution, Status
from .topology import Topology
from .workload import UNITS_PER_MBPS, Flow


class FlowOrder(str, enum.Enum):
    INPUT = "InputOrder"
    LARGEST_DEMAND_FIRST = "LargestDemandFirst"
    OVERLOADED_FIRST = "OverloadedFirst"


@dataclass(frozen=True)
class BaselineConfig:
    order: FlowOrder = FlowOrder.LARGEST_DEMAND_FIRST
    metric: str = "HopCount"

    def __post_init__(self):
        object.__setattr__(self, "order", FlowOrder(self.order))
        if self.order is FlowOrder.OVERLOADED_FIRST:
            raise ValueError("baseline supports InputOrder or LargestDemandFirst")
        if self.metric != "HopCount":
            raise ValueError("only the HopCount metric is supported")


class Residual:
    """Residual capacity per directed link, exact.

    Capacities are held as ``mu.numerator * B * 1000`` and demands as
    ``units * mu.denominator`` so ``sum C_f <= mu * B`` stays integral.
    """

    def __init__(self, t: Topology, mu=1):
        self.topology = t
        self.mu = as_fraction(mu)
        self.free = t.bandwidth * (UNITS_PER_MBPS * self.mu.numerator)

    def copy(self) -> "Residual":
        r = Residual.__new__(Residual)
        r.topology, r.mu, r.free = self.topology, self.mu, self.free.copy()
        return r

    def demand(self, f: Flow) -> int:
        return f.demand_units * self.mu.denominator

    def fits(self, path, f: Flow) -> bool:
        d = self.demand(f)
        return all(self.free[a, b] >= d for a, b in zip(path[:-1], path[1:]))

    def commit(self, path, f: Flow) -> None:
        d = self.demand(f)
        for a, b in zip(path[:-1], path[1:]):
            self.free[a, b] -= d

    def release(self, path, f: Flow) -> None:
        d = self.demand(f)
        for a, b in zip(path[:-1], path[1:]):
            self.free[a, b] += d


def route_new_flow(t: Topology, residual: Residual, f: Flow) -> list[int] | None:
    """Minimum-hop path whose links all have residual >= demand.

    Ties go to the lexicographically smallest switch sequence.  Does not
    commit capacity.
    """
    d = residual.demand(f)
    ok = (t.bandwidth > 0) & (residual.free >= d)
    # hop distance to destination over admissible links
    dist = np.full(t.n, -1, dtype=np.int64)
    dist[f.dst] = 0
    queue = deque([f.dst])
    while queue:
        v = queue.popleft()
        for u in np.nonzero(ok[:, v])[0]:
            if dist[u] < 0:
                dist[u] = dist[v] + 1
                queue.append(int(u))
    if dist[f.src] < 0:
        return None
    path = [f.src]
    v = f.src
    while v != f.dst:
        v = next(int(w) for w in np.nonzero(ok[v])[0] if dist[w] == dist[v] - 1)
        path.append(v)
    return path


def _order(prob: ReconfigProblem, order: FlowOrder) -> list[int]:
    idx = list(range(prob.flows.p))
    if order is FlowOrder.LARGEST_DEMAND_FIRST:
        units = prob.flows.demand_units
        idx.sort(key=lambda f: (-int(units[f]), f))
    return idx


def reroute_shortest_path(prob: ReconfigProblem, cfg: BaselineConfig = BaselineConfig()) -> Solution:
    """Place every flow from scratch on its min-hop feasible path.

    Greedy, no look-ahead and no affinity for the old path.
    """
    start = time.perf_counter()
    t = prob.topology
    residual = Residual(t, prob.mu)
    paths: list[list[int] | None] = [None] * prob.flows.p
    for f in _order(prob, cfg.order):
        flow = prob.flows[f]
        path = route_new_flow(t, residual, flow)
        if path is None:
            return Solution(None, None, Status.INFEASIBLE,
                            {"wall_time_s": time.perf_counter() - start, "blocked_flow": flow.id})
        residual.commit(path, flow)
        paths[f] = path
    routing = RoutingMatrix.from_paths(t.n, paths)
    return Solution(routing, sftc(routing, prob.current), Status.OPTIMAL,
                    {"wall_time_s": time.perf_counter() - start, "paths": paths})

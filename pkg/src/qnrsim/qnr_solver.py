"""Exact minimum-SFTC reconfiguration by branch and bound over per-flow paths.

Constraints 3-8 admit exactly the simple src->dst paths for each flow, so the
search branches over a candidate path per flow instead of raw link bits.
Giving flow f the candidate path P costs |old(f)| + |P| - 2|old(f) & P|,
its share of sum |A - A0|.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass

import networkx as nx
import numpy as np

from . import _kernels
from .baseline import BaselineConfig, FlowOrder, reroute_shortest_path
from .errors import GuardExceeded, ParameterError
from .routing import ReconfigProblem, RoutingMatrix, sftc, validate
from .solution import Solution, Status
from .topology import Topology
from .workload import Flow

log = logging.getLogger(__name__)

BRUTE_FORCE_GUARD = 10**7
NO_INCUMBENT = np.iinfo(np.int64).max // 4


@dataclass(frozen=True)
class SolverConfig:
    max_path_hops: int = 6
    time_budget_s: float | None = 60.0
    max_nodes: int | None = None
    flow_order: FlowOrder = FlowOrder.OVERLOADED_FIRST
    seed_with_baseline: bool = True
    chunk_nodes: int = 100_000

    def __post_init__(self):
        object.__setattr__(self, "flow_order", FlowOrder(self.flow_order))
        if self.max_path_hops < 1:
            raise ParameterError("max_path_hops must be >= 1")
        if self.time_budget_s is not None and self.time_budget_s <= 0:
            raise ParameterError("time_budget_s must be positive")
        if self.max_nodes is not None and self.max_nodes < 1:
            raise ParameterError("max_nodes must be >= 1")


def candidate_paths(t: Topology, f: Flow, max_hops: int, current: list[int] | None = None) -> list[list[int]]:
    """All simple ``src -> dst`` paths with at most ``max_hops`` links.

    Shortest first, then lexicographic; ``current`` (if among them) moves to
    the front.
    """
    if f.src == f.dst:
        raise ParameterError("flow endpoints must differ")
    key = (int(f.src), int(f.dst), int(max_hops))
    cached = t.path_cache.get(key)
    if cached is None:
        found = nx.all_simple_paths(t.graph, key[0], key[1], cutoff=key[2])
        cached = tuple(sorted((tuple(p) for p in found), key=lambda p: (len(p), p)))
        t.path_cache[key] = cached
    paths = [list(p) for p in cached]
    if current is not None:
        cur = [int(v) for v in current]
        if cur in paths:
            paths.remove(cur)
            paths.insert(0, cur)
    return paths


def _path_cost(old: set, path) -> int:
    new = set(zip(path[:-1], path[1:]))
    return len(old) + len(new) - 2 * len(old & new)


class _Search:
    """Flattened candidate tables shared by the kernel and the oracle."""

    def __init__(self, prob: ReconfigProblem, max_hops: int):
        t, fs = prob.topology, prob.flows
        self.prob = prob
        self.cands: list[list[list[int]]] = []
        self.costs: list[list[int]] = []
        old_paths = prob.current_paths
        for f, fl in enumerate(fs):
            c = candidate_paths(t, fl, max_hops, old_paths[f])
            old = set(zip(old_paths[f][:-1], old_paths[f][1:]))
            self.cands.append(c)
            self.costs.append([_path_cost(old, path) for path in c])
        self.missing = [fl.id for f, fl in enumerate(fs) if not self.cands[f]]

    def arrays(self):
        prob = self.prob
        t = prob.topology
        link_id = t.link_id
        p = prob.flows.p
        cand_ptr = np.zeros(p + 1, dtype=np.int64)
        link_ptr = [0]
        link_idx: list[int] = []
        cost: list[int] = []
        rank: list[int] = []
        for f in range(p):
            base = len(cost)
            for path, c in zip(self.cands[f], self.costs[f]):
                link_idx.extend(link_id[(a, b)] for a, b in zip(path[:-1], path[1:]))
                link_ptr.append(len(link_idx))
                cost.append(c)
            cand_ptr[f + 1] = len(cost)
            rank.extend(base + k for k in sorted(range(len(self.costs[f])), key=lambda k: (self.costs[f][k], k)))
        links = t.links
        cap = prob.capacity_units[links[:, 0], links[:, 1]].astype(np.int64)
        out_ptr = np.zeros(t.n + 1, dtype=np.int64)
        np.add.at(out_ptr, links[:, 0] + 1, 1)
        out_ptr = np.cumsum(out_ptr)
        out_links = np.argsort(links[:, 0], kind="stable").astype(np.int64)
        in_ptr = np.zeros(t.n + 1, dtype=np.int64)
        np.add.at(in_ptr, links[:, 1] + 1, 1)
        in_ptr = np.cumsum(in_ptr)
        in_links = np.argsort(links[:, 1], kind="stable").astype(np.int64)
        return dict(
            cand_ptr=cand_ptr,
            link_ptr=np.array(link_ptr, dtype=np.int64),
            link_idx=np.array(link_idx, dtype=np.int64),
            cand_cost=np.array(cost, dtype=np.int64),
            cost_rank=np.array(rank, dtype=np.int64),
            demand=np.ascontiguousarray(prob.demand_scaled, dtype=np.int64),
            src_of=np.ascontiguousarray(prob.flows.src, dtype=np.int64),
            dst_of=np.ascontiguousarray(prob.flows.dst, dtype=np.int64),
            out_ptr=out_ptr,
            out_links=out_links,
            in_ptr=in_ptr,
            in_links=in_links,
            capacity=cap,
        )

    def routing(self, choice) -> RoutingMatrix:
        return RoutingMatrix.from_paths(self.prob.topology.n, [self.cands[f][c] for f, c in enumerate(choice)])


def _flow_order(prob: ReconfigProblem, order: FlowOrder) -> np.ndarray:
    p = prob.flows.p
    idx = list(range(p))
    if order is FlowOrder.LARGEST_DEMAND_FIRST:
        units = prob.flows.demand_units
        idx.sort(key=lambda f: (-int(units[f]), f))
    elif order is FlowOrder.OVERLOADED_FIRST:
        report = validate(prob.current, prob)
        hot = {v.location for v in report if v.constraint == 2}
        on_hot = set()
        if hot:
            i, j, f = prob.current.entries
            for a, b, g in zip(i, j, f):
                if (int(a), int(b)) in hot:
                    on_hot.add(int(g))
        idx.sort(key=lambda f: (f not in on_hot, f))
    return np.array(idx, dtype=np.int64)


def solve_qnr(prob: ReconfigProblem, cfg: SolverConfig = SolverConfig()) -> Solution:
    """Routing with minimum SFTC against ``prob.current`` subject to 2-9.

    Ties between optima go to the lexicographically smallest vector of
    candidate indices (flow order of ``prob.flows``).
    """
    start = time.perf_counter()
    p = prob.flows.p
    search = _Search(prob, cfg.max_path_hops)
    stats: dict = {"nodes": 0, "candidates": sum(len(c) for c in search.cands), "kernel": _kernels.active.name}
    if search.missing:
        log.warning("flows %s have no path within max_path_hops=%d", search.missing[:10], cfg.max_path_hops)
        stats.update(wall_time_s=time.perf_counter() - start,
                     reason=f"no candidate path within max_path_hops={cfg.max_path_hops}",
                     flows_without_candidates=search.missing)
        return Solution(None, None, Status.INFEASIBLE, stats)

    arr = search.arrays()
    order = _flow_order(prob, cfg.flow_order)
    rank = np.empty(p, dtype=np.int64)
    rank[order] = np.arange(p)
    best_vec = np.zeros(p, dtype=np.int64)
    best = NO_INCUMBENT

    if cfg.seed_with_baseline:
        seed = reroute_shortest_path(prob, BaselineConfig())
        if seed.ok:
            vec = []
            for f, path in enumerate(seed.stats["paths"]):
                try:
                    vec.append(search.cands[f].index(path))
                except ValueError:
                    break
            if len(vec) == p:
                best_vec[:] = vec
                best = int(sum(search.costs[f][c] for f, c in enumerate(vec)))
                stats["seed_objective"] = best

    residual = arr["capacity"].copy()
    src_need = np.zeros(prob.topology.n, dtype=np.int64)
    np.add.at(src_need, arr["src_of"], arr["demand"])
    dst_need = np.zeros(prob.topology.n, dtype=np.int64)
    np.add.at(dst_need, arr["dst_of"], arr["demand"])
    stack_flow = np.full(p, -1, dtype=np.int64)
    stack_next = np.full(p, -1, dtype=np.int64)
    chosen = np.full(p, -1, dtype=np.int64)
    ws_flow = np.zeros((4, p), dtype=np.int64)
    ws_link = np.zeros(len(arr["capacity"]), dtype=np.int64)
    ws_item = np.zeros(p, dtype=np.int64)
    child_order = np.zeros(len(arr["cand_cost"]), dtype=np.int64)
    state = np.array([0, 0, best, 0, 0], dtype=np.int64)
    kern = _kernels.active
    timed_out = False
    while True:
        limit = cfg.chunk_nodes
        if cfg.max_nodes is not None:
            limit = min(limit, cfg.max_nodes - int(state[3]))
            if limit <= 0:
                timed_out = True
                break
        rc = kern.bnb_run(rank, arr["cand_ptr"], arr["link_ptr"], arr["link_idx"], arr["cand_cost"],
                          arr["cost_rank"], arr["demand"], arr["src_of"], arr["dst_of"], arr["out_ptr"],
                          arr["out_links"], arr["in_ptr"], arr["in_links"], residual, src_need, dst_need,
                          stack_flow, stack_next, child_order, chosen, best_vec, ws_flow, ws_link, ws_item, state, limit)
        if rc == _kernels.BNB_DONE:
            break
        if cfg.time_budget_s is not None and time.perf_counter() - start > cfg.time_budget_s:
            timed_out = True
            break

    best = int(state[2])
    stats["nodes"] = int(state[3])
    stats["search_time_s"] = time.perf_counter() - start
    if best >= NO_INCUMBENT:
        stats["wall_time_s"] = time.perf_counter() - start
        return Solution(None, None, Status.TIMED_OUT if timed_out else Status.INFEASIBLE, stats)

    routing = search.routing(best_vec)
    t0 = time.perf_counter()
    report = validate(routing, prob)
    stats["validation_time_s"] = time.perf_counter() - t0
    assert not report, f"solver produced an infeasible routing:\n{report}"
    objective = sftc(routing, prob.current)
    assert objective == best
    stats["choice"] = [int(c) for c in best_vec]
    stats["wall_time_s"] = time.perf_counter() - start
    return Solution(routing, objective, Status.TIMED_OUT if timed_out else Status.OPTIMAL, stats)


def brute_force(prob: ReconfigProblem, cfg: SolverConfig = SolverConfig()) -> Solution:
    """Exhaustive oracle: every assignment of candidate paths, checked by ``validate``."""
    start = time.perf_counter()
    search = _Search(prob, cfg.max_path_hops)
    sizes = [len(c) for c in search.cands]
    total = math.prod(sizes)
    if total > BRUTE_FORCE_GUARD:
        raise GuardExceeded(f"{total} assignments (per-flow candidates {sizes}) exceed guard {BRUTE_FORCE_GUARD}")
    best = None
    best_choice = None
    n = prob.topology.n
    for choice in itertools.product(*(range(s) for s in sizes)):
        routing = RoutingMatrix.from_paths(n, [search.cands[f][c] for f, c in enumerate(choice)])
        if validate(routing, prob):
            continue
        obj = sftc(routing, prob.current)
        if best is None or obj < best[0]:
            best = (obj, routing)
            best_choice = choice
    stats = {"assignments": total, "wall_time_s": time.perf_counter() - start}
    if best is None:
        return Solution(None, None, Status.INFEASIBLE, stats)
    stats["choice"] = list(best_choice)
    return Solution(best[1], best[0], Status.OPTIMAL, stats)

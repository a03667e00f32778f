"""Forwarding-table compression: merge small same-endpoint flows into
streams, solve the smaller problem, then lift the result back.

Flows sharing (src, dst, class_id) are "SF flows".  A stream keeps the id
and the current path of its first member.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass

from .errors import FlowError, ParameterError
from .qnr_solver import SolverConfig, solve_qnr
from .routing import ReconfigProblem, RoutingMatrix, path_of, sftc, validate
from .solution import Solution, Status
from .workload import UNITS_PER_MBPS, Flow, FlowSet, format_rate, to_units


@dataclass(frozen=True)
class CompressionConfig:
    lower_band_mbps: float
    upper_bound_mbps: float

    def __post_init__(self):
        if not 0 < self.lower_band_mbps <= self.upper_bound_mbps:
            raise ParameterError(
                f"need 0 < lower_band <= upper_bound, got {self.lower_band_mbps}, {self.upper_bound_mbps}")


@dataclass(frozen=True)
class Stream:
    id: int
    members: tuple[int, ...]
    demand_mbps: float


@dataclass(frozen=True)
class MergeMap:
    streams: tuple[Stream, ...]

    def stream_of(self) -> dict[int, int]:
        """original flow id -> stream id"""
        return {m: s.id for s in self.streams for m in s.members}

    def check(self, original: FlowSet) -> None:
        by_id = {f.id: f for f in original}
        seen: set[int] = set()
        for s in self.streams:
            if not s.members or s.members[0] != s.id:
                raise FlowError(f"stream {s.id}: must be led by its own id")
            keys = set()
            units = 0
            for m in s.members:
                if m in seen:
                    raise FlowError(f"flow {m} appears in two streams")
                if m not in by_id:
                    raise FlowError(f"stream {s.id}: unknown flow {m}")
                seen.add(m)
                f = by_id[m]
                keys.add((f.src, f.dst, f.class_id))
                units += f.demand_units
            if len(keys) != 1:
                raise FlowError(f"stream {s.id}: members do not share endpoints and class")
            if units != to_units(s.demand_mbps):
                raise FlowError(f"stream {s.id}: demand {s.demand_mbps} != member total")
        if seen != set(by_id):
            raise FlowError("merge map does not cover the flow set")


def compress(fs: FlowSet, cfg: CompressionConfig) -> tuple[FlowSet, MergeMap]:
    """Greedy single pass in flow order.

    A surviving flow f absorbs a later SF flow q when both started below
    ``lower_band`` and the merged size stays below ``upper_bound``.
    """
    lower = to_units(cfg.lower_band_mbps)
    upper = to_units(cfg.upper_bound_mbps)
    order = sorted(range(fs.p), key=lambda k: fs[k].id)
    merged = [False] * fs.p
    out_flows: list[Flow] = []
    streams: list[Stream] = []
    for a, k in enumerate(order):
        if merged[k]:
            continue
        f = fs[k]
        size = f.demand_units
        members = [f.id]
        if size < lower:
            for k2 in order[a + 1:]:
                q = fs[k2]
                if merged[k2] or (q.src, q.dst, q.class_id) != (f.src, f.dst, f.class_id):
                    continue
                if q.demand_units < lower and size + q.demand_units < upper:
                    size += q.demand_units
                    members.append(q.id)
                    merged[k2] = True
        if len(members) == 1:
            out_flows.append(f)
            streams.append(Stream(f.id, (f.id,), f.demand_mbps))
        else:
            demand = size / UNITS_PER_MBPS
            out_flows.append(Flow(f.id, f.src, f.dst, demand, f.class_id))
            streams.append(Stream(f.id, tuple(members), demand))
    return FlowSet(tuple(out_flows)), MergeMap(tuple(streams))


def compressed_problem(prob: ReconfigProblem, cfg: CompressionConfig) -> tuple[ReconfigProblem, MergeMap]:
    """Compress ``prob.flows``; each stream starts on its head flow's path."""
    flows, mm = compress(prob.flows, cfg)
    idx = prob.flows.index_of
    paths = [prob.current_paths[idx[s.id]] for s in mm.streams]
    current = RoutingMatrix.from_paths(prob.topology.n, paths)
    return prob.with_flows(flows, current), mm


def expand(sol: Solution, mm: MergeMap, original: ReconfigProblem) -> Solution:
    """Give every original flow its stream's path and re-score against the
    original ``A0``."""
    if sol.routing is None:
        raise ParameterError("cannot expand a solution without a routing")
    fs = original.flows
    mm.check(fs)
    if sol.routing.p != len(mm.streams):
        raise ParameterError(f"solution has {sol.routing.p} flows, merge map {len(mm.streams)} streams")
    stream_pos = {s.id: k for k, s in enumerate(mm.streams)}
    stream_of = mm.stream_of()
    paths = []
    for f in fs:
        k = stream_pos[stream_of[f.id]]
        paths.append(path_of(sol.routing, k, f.src, f.dst))
    routing = RoutingMatrix.from_paths(original.topology.n, paths)
    report = validate(routing, original)
    stats = dict(sol.stats)
    stats["expanded_violations"] = len(report)
    status = sol.status
    if report:
        status = Status.INFEASIBLE
        routing = None
    objective = None if routing is None else sftc(routing, original.current)
    return Solution(routing, objective, status, stats)


def compression_rate(before: FlowSet, after: FlowSet) -> float:
    if len(after) > len(before):
        raise ParameterError("compressed set is larger than the original")
    if len(before) == 0:
        return 0.0
    return 1.0 - len(after) / len(before)


def solve_rqnr(prob: ReconfigProblem, comp: CompressionConfig,
               cfg: SolverConfig = SolverConfig()) -> Solution:
    """compress -> exact solve -> expand."""
    start = time.perf_counter()
    small, mm = compressed_problem(prob, comp)
    sol = solve_qnr(small, cfg)
    stats = dict(sol.stats)
    stats.update(streams=small.flows.p, compression_rate=compression_rate(prob.flows, small.flows))
    if sol.routing is None:
        stats["wall_time_s"] = time.perf_counter() - start
        return Solution(None, None, sol.status, stats)
    out = expand(Solution(sol.routing, sol.objective, sol.status, stats), mm, prob)
    out.stats["wall_time_s"] = time.perf_counter() - start
    return out


def dump_merge_map(mm: MergeMap) -> str:
    return "".join(f"{s.id}: {','.join(str(m) for m in s.members)} {format_rate(s.demand_mbps)}\n"
                   for s in mm.streams)


_MAP_LINE = re.compile(r"^\s*(-?\d+)\s*:\s*([-\d,\s]+?)\s+(\S+)\s*$")


def load_merge_map(text: str) -> MergeMap:
    streams = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _MAP_LINE.match(line)
        if not m:
            raise FlowError(f"line {lineno}: expected 'stream_id: m1,m2,... demand'")
        try:
            members = tuple(int(x) for x in m.group(2).replace(" ", "").split(",") if x)
            demand = float(m.group(3))
        except ValueError as exc:
            raise FlowError(f"line {lineno}: {exc}") from None
        streams.append(Stream(int(m.group(1)), members, demand))
    return MergeMap(tuple(streams))

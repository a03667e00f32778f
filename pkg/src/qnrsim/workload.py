"""Flow populations: synthetic generation, flow files, big-flow injection."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import FlowError, ParameterError
from .topology import Topology

# rates are compared as integers in units of 1 kb/s
UNITS_PER_MBPS = 1000


def to_units(mbps: float) -> int:
    return int(round(mbps * UNITS_PER_MBPS))


def _round_rate(x: float) -> float:
    return round(float(x), 3)


def format_rate(x: float) -> str:
    return f"{x:.3f}".rstrip("0").rstrip(".")


@dataclass(frozen=True)
class Flow:
    id: int
    src: int
    dst: int
    demand_mbps: float
    class_id: int = 0

    def __post_init__(self):
        if self.src == self.dst:
            raise FlowError(f"flow {self.id}: src == dst == {self.src}")
        if not self.demand_mbps > 0:
            raise FlowError(f"flow {self.id}: demand must be positive, got {self.demand_mbps}")

    @property
    def demand_units(self) -> int:
        return to_units(self.demand_mbps)


@dataclass(frozen=True)
class FlowSet:
    flows: tuple[Flow, ...] = ()

    def __post_init__(self):
        flows = tuple(self.flows)
        object.__setattr__(self, "flows", flows)
        ids = [f.id for f in flows]
        if len(set(ids)) != len(ids):
            raise FlowError("duplicate flow ids")

    def __len__(self):
        return len(self.flows)

    def __iter__(self):
        return iter(self.flows)

    def __getitem__(self, k):
        return self.flows[k]

    @property
    def p(self) -> int:
        return len(self.flows)

    @cached_property
    def src(self) -> np.ndarray:
        return np.array([f.src for f in self.flows], dtype=np.int64)

    @cached_property
    def dst(self) -> np.ndarray:
        return np.array([f.dst for f in self.flows], dtype=np.int64)

    @cached_property
    def demand_units(self) -> np.ndarray:
        return np.array([f.demand_units for f in self.flows], dtype=np.int64)

    @cached_property
    def index_of(self) -> dict[int, int]:
        return {f.id: k for k, f in enumerate(self.flows)}

    def total_demand_units(self) -> int:
        return int(self.demand_units.sum())

    def check_against(self, t: Topology) -> None:
        for f in self.flows:
            if not (0 <= f.src < t.n and 0 <= f.dst < t.n):
                raise FlowError(f"flow {f.id}: switch index out of range for n={t.n}")


@dataclass(frozen=True)
class SizeDistribution:
    """Flow-size distribution.

    kinds: ``mixture`` (params: small_fraction, small_lo, small_hi, big_lo,
    big_hi), ``uniform`` (lo, hi), ``constant`` (value).
    """

    kind: str = "mixture"
    params: tuple[float, ...] = (0.9, 1.0, 10.0, 50.0, 200.0)

    _ARITY = {"mixture": 5, "uniform": 2, "constant": 1}

    def __post_init__(self):
        if self.kind not in self._ARITY:
            raise ParameterError(f"unknown size distribution {self.kind!r}")
        params = tuple(float(x) for x in self.params)
        if len(params) != self._ARITY[self.kind]:
            raise ParameterError(f"{self.kind} takes {self._ARITY[self.kind]} parameters")
        object.__setattr__(self, "params", params)
        if self.kind == "mixture" and not 0 <= params[0] <= 1:
            raise ParameterError("mixture small_fraction must lie in [0, 1]")
        if self.kind != "mixture" and min(params) <= 0:
            raise ParameterError("flow sizes must be positive")

    @classmethod
    def parse(cls, text: str) -> "SizeDistribution":
        """``"mixture:0.9,1,10,50,200"``, ``"uniform:1,10"``, ``"constant:5"``."""
        kind, _, rest = text.partition(":")
        params = tuple(float(x) for x in rest.split(",")) if rest else cls().params
        return cls(kind.strip(), params)

    def __str__(self):
        return f"{self.kind}:" + ",".join(f"{x:g}" for x in self.params)

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "constant":
            x = self.params[0]
        elif self.kind == "uniform":
            x = rng.uniform(self.params[0], self.params[1])
        else:
            frac, slo, shi, blo, bhi = self.params
            if rng.random() < frac:
                x = rng.uniform(slo, shi)
            else:
                x = rng.uniform(blo, bhi)
        return max(_round_rate(x), 0.001)


@dataclass(frozen=True)
class WorkloadParams:
    p: int
    pl: float = 0.25
    size_distribution: SizeDistribution = field(default_factory=SizeDistribution)
    seed: int = 0
    n_classes: int = 1

    def __post_init__(self):
        if self.p < 1:
            raise ParameterError("flow count p must be >= 1")
        if not 0.0 <= self.pl <= 1.0:
            raise ParameterError("pl must lie in [0, 1]")
        if self.n_classes < 1:
            raise ParameterError("n_classes must be >= 1")


class _EndpointSampler:
    def __init__(self, t: Topology):
        self.endpoints = np.asarray(t.edge_switches)
        racks = t.rack_of[self.endpoints]
        self.rack = {int(v): int(r) for v, r in zip(self.endpoints, racks)}
        self.by_rack: dict[int, list[int]] = {}
        for v in self.endpoints:
            self.by_rack.setdefault(self.rack[int(v)], []).append(int(v))
        self.pod = None if t.pod_of is None else {int(v): int(t.pod_of[v]) for v in self.endpoints}

    def draw(self, rng: np.random.Generator, pl: float) -> tuple[int, int]:
        src = int(self.endpoints[rng.integers(len(self.endpoints))])
        leave = rng.random() < pl
        by_pod = self.pod is not None and len(self.by_rack[self.rack[src]]) == 1
        if by_pod:
            # single-edge racks: the pod plays the rack's role
            home = [int(v) for v in self.endpoints if v != src and self.pod[int(v)] == self.pod[src]]
            away = [int(v) for v in self.endpoints if self.pod[int(v)] != self.pod[src]]
        else:
            home = [v for v in self.by_rack[self.rack[src]] if v != src]
            away = [int(v) for v in self.endpoints if self.rack[int(v)] != self.rack[src]]
        if not away:
            away = [int(v) for v in self.endpoints if self.rack[int(v)] != self.rack[src]]
        pick = home if (not leave and home) else away
        return src, pick[rng.integers(len(pick))]


def generate_workload(t: Topology, params: WorkloadParams) -> FlowSet:
    """Draw ``params.p`` flows between edge switches, deterministic per seed.

    With probability ``pl`` the destination lies in another rack; otherwise
    in the source's rack.  When racks hold a single edge switch the pod
    stands in for the rack on both sides of the draw.
    """
    sampler = _EndpointSampler(t)
    if len(sampler.by_rack) < 2:
        raise ParameterError("workload generation needs at least two racks of edge switches")
    rng = np.random.default_rng(params.seed)
    flows = []
    for fid in range(params.p):
        src, dst = sampler.draw(rng, params.pl)
        demand = params.size_distribution.sample(rng)
        cls = int(rng.integers(params.n_classes)) if params.n_classes > 1 else 0
        flows.append(Flow(fid, src, dst, demand, cls))
    return FlowSet(tuple(flows))


def inject_big_flows(fs: FlowSet, count: int, big_demand_mbps: float, t: Topology,
                     pl: float = 0.25, seed: int = 0) -> FlowSet:
    """Append ``count`` flows of ``big_demand_mbps`` with fresh ids."""
    if count < 0:
        raise ParameterError("count must be >= 0")
    if count == 0:
        return fs
    if not big_demand_mbps > 0:
        raise ParameterError("big_demand_mbps must be positive")
    sampler = _EndpointSampler(t)
    rng = np.random.default_rng([seed, 0xB16])
    next_id = max((f.id for f in fs), default=-1) + 1
    extra = []
    for k in range(count):
        src, dst = sampler.draw(rng, pl)
        extra.append(Flow(next_id + k, src, dst, _round_rate(big_demand_mbps), 0))
    return FlowSet(fs.flows + tuple(extra))


def scale_demands(fs: FlowSet, factor: float) -> FlowSet:
    if not factor > 0:
        raise ParameterError("demand scale must be positive")
    return FlowSet(tuple(Flow(f.id, f.src, f.dst, max(_round_rate(f.demand_mbps * factor), 0.001), f.class_id)
                         for f in fs))


def load_flows(text: str, t: Topology) -> FlowSet:
    """Parse ``p`` then ``p`` lines of ``id src dst demand_mbps class_id``."""
    expected = None
    flows = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if expected is None:
                if len(tok) != 1:
                    raise ValueError("first line must be the flow count")
                expected = int(tok[0])
                if expected < 0:
                    raise ValueError("negative flow count")
                continue
            if len(tok) != 5:
                raise ValueError("flow line must be 'id src dst demand_mbps class_id'")
            fid, src, dst = int(tok[0]), int(tok[1]), int(tok[2])
            demand, cls = float(tok[3]), int(tok[4])
            if fid in seen:
                raise ValueError(f"duplicate flow id {fid}")
            if not (0 <= src < t.n and 0 <= dst < t.n):
                raise ValueError(f"unknown switch index in flow {fid}")
            if src == dst:
                raise ValueError(f"flow {fid} has src == dst")
            if not demand > 0:
                raise ValueError(f"flow {fid} demand must be positive")
            seen.add(fid)
            flows.append(Flow(fid, src, dst, demand, cls))
        except ValueError as exc:
            raise FlowError(f"line {lineno}: {exc}") from None
    if expected is None:
        raise FlowError("empty flow file")
    if expected != len(flows):
        raise FlowError(f"header declares {expected} flows, found {len(flows)}")
    return FlowSet(tuple(flows))


def dump_flows(fs: FlowSet) -> str:
    lines = [str(len(fs))]
    lines += [f"{f.id} {f.src} {f.dst} {format_rate(f.demand_mbps)} {f.class_id}" for f in fs]
    return "\n".join(lines) + "\n"

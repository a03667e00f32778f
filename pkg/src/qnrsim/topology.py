"""Switch-level network graphs: fat-trees, file-loaded topologies, controller delays."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ParameterError, TopologyError

LAYERS = ("core", "aggregation", "edge")
DEFAULT_CONTROLLER_DELAY_S = 0.001


@dataclass(frozen=True, eq=False)
class Topology:
    """Directed switch graph.

    ``bandwidth[i, j]`` is the capacity of link ``i -> j`` in Mb/s (0 = no
    link).  ``rack_of`` groups edge switches into racks; ``pod_of`` is an
    optional coarser locality group (fat-tree pods).
    """

    n: int
    bandwidth: np.ndarray
    controller_delay: np.ndarray
    rack_of: np.ndarray
    layer_of: tuple[str, ...] | None = None
    pod_of: np.ndarray | None = None

    def __post_init__(self):
        n = self.n
        if n < 1:
            raise TopologyError(f"switch count must be positive, got {n}")
        b = np.asarray(self.bandwidth, dtype=np.int64)
        if b.shape != (n, n):
            raise TopologyError(f"bandwidth must be {n}x{n}, got {b.shape}")
        if (b < 0).any():
            raise TopologyError("negative link capacity")
        if np.diagonal(b).any():
            raise TopologyError("self-links are not allowed")
        delay = np.asarray(self.controller_delay, dtype=np.float64)
        if delay.shape != (n,) or (delay < 0).any():
            raise TopologyError("controller_delay must be n non-negative values")
        racks = np.asarray(self.rack_of, dtype=np.int64)
        if racks.shape != (n,):
            raise TopologyError("rack_of must have n entries")
        if self.layer_of is not None:
            if len(self.layer_of) != n or any(x not in LAYERS for x in self.layer_of):
                raise TopologyError(f"layer_of must have n entries from {LAYERS}")
        pods = None
        if self.pod_of is not None:
            pods = np.asarray(self.pod_of, dtype=np.int64)
            if pods.shape != (n,):
                raise TopologyError("pod_of must have n entries")
            pods.setflags(write=False)
        for arr in (b, delay, racks):
            arr.setflags(write=False)
        object.__setattr__(self, "bandwidth", b)
        object.__setattr__(self, "controller_delay", delay)
        object.__setattr__(self, "rack_of", racks)
        object.__setattr__(self, "pod_of", pods)
        if self.layer_of is not None:
            object.__setattr__(self, "layer_of", tuple(self.layer_of))
        if n > 1:
            n_comp, _ = connected_components(csr_matrix(b > 0), directed=True, connection="strong")
            if n_comp != 1:
                raise TopologyError("topology is not strongly connected")

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.bandwidth, other.bandwidth)
            and np.array_equal(self.controller_delay, other.controller_delay)
            and np.array_equal(self.rack_of, other.rack_of)
            and self.layer_of == other.layer_of
            and ((self.pod_of is None and other.pod_of is None)
                 or (self.pod_of is not None and other.pod_of is not None
                     and np.array_equal(self.pod_of, other.pod_of)))
        )

    __hash__ = None

    @cached_property
    def links(self) -> np.ndarray:
        """(L, 2) array of directed links with capacity > 0, row-major order."""
        i, j = np.nonzero(self.bandwidth)
        return np.stack([i, j], axis=1).astype(np.int64)

    @cached_property
    def link_id(self) -> dict[tuple[int, int], int]:
        return {(int(i), int(j)): k for k, (i, j) in enumerate(self.links)}

    @cached_property
    def successors(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(int(j) for j in np.nonzero(self.bandwidth[i])[0]) for i in range(self.n))

    @cached_property
    def edge_switches(self) -> np.ndarray:
        """Switches that may terminate flows."""
        if self.layer_of is None:
            return np.arange(self.n)
        return np.array([i for i, layer in enumerate(self.layer_of) if layer == "edge"], dtype=np.int64)

    @cached_property
    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from((int(i), int(j)) for i, j in self.links)
        return g

    @cached_property
    def path_cache(self) -> dict:
        """Memo for simple-path enumeration, keyed by (src, dst, max_hops)."""
        return {}

    def has_link(self, i: int, j: int) -> bool:
        return 0 <= i < self.n and 0 <= j < self.n and self.bandwidth[i, j] > 0


@dataclass(frozen=True)
class FatTreeParams:
    K: int
    link_capacity_mbps: int = 1000
    controller_delay_s: float = DEFAULT_CONTROLLER_DELAY_S

    def __post_init__(self):
        if not isinstance(self.K, (int, np.integer)) or self.K < 2 or self.K % 2:
            raise ParameterError(f"fat-tree order K must be an even integer >= 2, got {self.K!r}")
        if self.link_capacity_mbps <= 0 or int(self.link_capacity_mbps) != self.link_capacity_mbps:
            raise ParameterError("link_capacity_mbps must be a positive integer")


def generate_fat_tree(params: FatTreeParams) -> Topology:
    """Three-layer fat-tree of order K.

    Switch numbering: core switches first, then per pod its aggregation
    switches followed by its edge switches.  Core switch ``c`` (``c = a*K/2
    + m``) attaches to aggregation switch ``a`` of every pod.
    """
    k = params.K
    half = k // 2
    n_core = half * half
    n = n_core + k * k
    cap = int(params.link_capacity_mbps)
    bw = np.zeros((n, n), dtype=np.int64)
    layer = ["core"] * n_core
    pod = [-1] * n_core
    racks = [-1] * n

    def agg(p, a):
        return n_core + p * k + a

    def edge(p, e):
        return n_core + p * k + half + e

    for p in range(k):
        layer += ["aggregation"] * half + ["edge"] * half
        pod += [p] * k
        for a in range(half):
            for e in range(half):
                bw[agg(p, a), edge(p, e)] = cap
                bw[edge(p, e), agg(p, a)] = cap
            for m in range(half):
                c = a * half + m
                bw[c, agg(p, a)] = cap
                bw[agg(p, a), c] = cap
    rack = 0
    for v in range(n):
        if layer[v] == "edge":
            racks[v] = rack
            rack += 1
    return Topology(
        n=n,
        bandwidth=bw,
        controller_delay=np.full(n, params.controller_delay_s),
        rack_of=np.array(racks),
        layer_of=tuple(layer),
        pod_of=np.array(pod),
    )


def directed_link_count(t: Topology) -> int:
    return int(np.count_nonzero(t.bandwidth))


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def load_topology(text: str) -> Topology:
    """Parse the line-oriented topology format.

    ::

        n
        delays d_0 ... d_{n-1}      (optional, seconds)
        racks r_0 ... r_{n-1}       (optional)
        layers l_0 ... l_{n-1}      (optional: core/aggregation/edge)
        pods p_0 ... p_{n-1}        (optional)
        i j capacity_mbps           (one per directed link)
    """
    n = None
    delays = racks = layers = pods = None
    bw = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line:
            continue
        tok = line.split()
        try:
            if n is None:
                if len(tok) != 1:
                    raise ValueError("first line must be the switch count")
                n = int(tok[0])
                if n < 1:
                    raise ValueError("switch count must be positive")
                bw = np.zeros((n, n), dtype=np.int64)
                continue
            head = tok[0]
            if head in ("delays", "racks", "layers", "pods"):
                vals = tok[1:]
                if len(vals) != n:
                    raise ValueError(f"{head} needs {n} values, got {len(vals)}")
                if head == "delays":
                    delays = [float(x) for x in vals]
                    if any(d < 0 for d in delays):
                        raise ValueError("negative controller delay")
                elif head == "racks":
                    racks = [int(x) for x in vals]
                elif head == "pods":
                    pods = [int(x) for x in vals]
                else:
                    if any(x not in LAYERS for x in vals):
                        raise ValueError(f"layers must be one of {LAYERS}")
                    layers = tuple(vals)
                continue
            if len(tok) != 3:
                raise ValueError("link line must be 'i j capacity_mbps'")
            i, j, c = int(tok[0]), int(tok[1]), int(tok[2])
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"switch index out of range in link {i} {j}")
            if i == j:
                raise ValueError(f"self-link {i} {j}")
            if c <= 0:
                raise ValueError("link capacity must be positive")
            if bw[i, j]:
                raise ValueError(f"duplicate link {i} {j}")
            bw[i, j] = c
        except ValueError as exc:
            raise TopologyError(f"line {lineno}: {exc}") from None
    if n is None:
        raise TopologyError("empty topology file")
    if delays is None:
        delays = [DEFAULT_CONTROLLER_DELAY_S] * n
    if racks is None:
        racks = list(range(n))
    return Topology(
        n=n,
        bandwidth=bw,
        controller_delay=np.array(delays, dtype=np.float64),
        rack_of=np.array(racks),
        layer_of=layers,
        pod_of=None if pods is None else np.array(pods),
    )


def dump_topology(t: Topology) -> str:
    lines = [str(t.n), "delays " + " ".join(repr(float(d)) for d in t.controller_delay),
             "racks " + " ".join(str(int(r)) for r in t.rack_of)]
    if t.layer_of is not None:
        lines.append("layers " + " ".join(t.layer_of))
    if t.pod_of is not None:
        lines.append("pods " + " ".join(str(int(x)) for x in t.pod_of))
    for i, j in t.links:
        lines.append(f"{i} {j} {int(t.bandwidth[i, j])}")
    return "\n".join(lines) + "\n"

"""Routing state as a binary (n, n, p) tensor, plus constraint checking.

Storage is sparse: a sorted array of flat keys ``(f*n + i)*n + j`` for the
nonzero entries.  ``to_dense`` gives the (n, n, p) view used by the dense
kernels; validation picks dense sweeps below ``DENSE_LIMIT`` entries and
bincount-based sparse sweeps above it.  Both routes produce identical
reports.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import ParameterError, PathDecodeError, RoutingError
from .topology import Topology
from .workload import UNITS_PER_MBPS, FlowSet

DENSE_LIMIT = 2_000_000

CONSTRAINT_NAMES = {
    0: "nonexistent link",
    2: "link capacity",
    3: "no return to source",
    4: "stay at destination",
    5: "leave source once",
    6: "enter destination once",
    7: "flow conservation",
    8: "at most one out-link",
    9: "binary entry",
}


class RoutingMatrix:
    """Immutable binary tensor ``A[i, j, f]``."""

    def __init__(self, n: int, p: int, keys: Iterable[int] = ()):
        self.n = int(n)
        self.p = int(p)
        k = np.unique(np.asarray(list(keys) if not isinstance(keys, np.ndarray) else keys, dtype=np.int64))
        if k.size and (k[0] < 0 or k[-1] >= self.n * self.n * self.p):
            raise RoutingError("routing entry out of range")
        k.setflags(write=False)
        self.keys = k

    # construction ---------------------------------------------------------

    @classmethod
    def empty(cls, n: int, p: int) -> "RoutingMatrix":
        return cls(n, p, np.empty(0, dtype=np.int64))

    @classmethod
    def from_entries(cls, n: int, p: int, entries: Iterable[tuple[int, int, int]]) -> "RoutingMatrix":
        keys = [(f * n + i) * n + j for i, j, f in entries]
        return cls(n, p, np.array(keys, dtype=np.int64))

    @classmethod
    def from_dense(cls, A: np.ndarray) -> "RoutingMatrix":
        A = np.asarray(A)
        if A.ndim != 3 or A.shape[0] != A.shape[1]:
            raise RoutingError(f"dense routing must have shape (n, n, p), got {A.shape}")
        if not np.isin(A, (0, 1)).all():
            raise RoutingError("routing entries must be 0 or 1")
        n, _, p = A.shape
        i, j, f = np.nonzero(A)
        return cls(n, p, (f.astype(np.int64) * n + i) * n + j)

    @classmethod
    def from_paths(cls, n: int, paths: Sequence[Sequence[int] | None]) -> "RoutingMatrix":
        keys = []
        for f, path in enumerate(paths):
            if path is None:
                continue
            for a, b in zip(path[:-1], path[1:]):
                keys.append((f * n + a) * n + b)
        return cls(n, len(paths), np.array(keys, dtype=np.int64))

    # views ----------------------------------------------------------------

    @cached_property
    def entries(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(i, j, f) index arrays of the nonzero entries."""
        n = self.n
        f, rest = np.divmod(self.keys, n * n)
        i, j = np.divmod(rest, n)
        return i, j, f

    def to_dense(self) -> np.ndarray:
        A = np.zeros((self.n, self.n, self.p), dtype=np.uint8)
        i, j, f = self.entries
        A[i, j, f] = 1
        return A

    def flow_links(self, f: int) -> list[tuple[int, int]]:
        nn = self.n * self.n
        lo, hi = np.searchsorted(self.keys, [f * nn, (f + 1) * nn])
        rest = self.keys[lo:hi] - f * nn
        return [(int(a), int(b)) for a, b in zip(*np.divmod(rest, self.n))]

    def with_flow(self, f: int, links: Iterable[tuple[int, int]]) -> "RoutingMatrix":
        """Copy with flow ``f``'s slice replaced by ``links``."""
        nn = self.n * self.n
        lo, hi = np.searchsorted(self.keys, [f * nn, (f + 1) * nn])
        new = np.array([(f * self.n + a) * self.n + b for a, b in links], dtype=np.int64)
        return RoutingMatrix(self.n, self.p, np.concatenate([self.keys[:lo], new, self.keys[hi:]]))

    def __len__(self):
        return int(self.keys.size)

    def __eq__(self, other):
        if not isinstance(other, RoutingMatrix):
            return NotImplemented
        return self.n == other.n and self.p == other.p and np.array_equal(self.keys, other.keys)

    __hash__ = None

    def __repr__(self):
        return f"RoutingMatrix(n={self.n}, p={self.p}, nnz={len(self)})"


def _as_dense(A) -> np.ndarray:
    return A.to_dense() if isinstance(A, RoutingMatrix) else np.asarray(A)


def _check_shapes(A, A0):
    sa = (A.n, A.n, A.p) if isinstance(A, RoutingMatrix) else np.shape(A)
    sb = (A0.n, A0.n, A0.p) if isinstance(A0, RoutingMatrix) else np.shape(A0)
    if tuple(sa) != tuple(sb):
        raise ParameterError(f"routing shapes differ: {tuple(sa)} vs {tuple(sb)}")


def sftc(A, A0) -> int:
    """Number of forwarding-table entries that differ: sum |A - A0|."""
    _check_shapes(A, A0)
    if isinstance(A, RoutingMatrix) and isinstance(A0, RoutingMatrix):
        return int(np.setxor1d(A.keys, A0.keys, assume_unique=True).size)
    a = np.ascontiguousarray(_as_dense(A), dtype=np.uint8)
    b = np.ascontiguousarray(_as_dense(A0), dtype=np.uint8)
    return int(_kernels.active.count_diff(a, b))


def sftc_linear(A, A0) -> int:
    """Same count through the product form sum(A + A0 - 2*A*A0)."""
    _check_shapes(A, A0)
    if isinstance(A, RoutingMatrix) and isinstance(A0, RoutingMatrix):
        if A.n * A.n * A.p > DENSE_LIMIT:
            both = np.intersect1d(A.keys, A0.keys, assume_unique=True).size
            return int(len(A) + len(A0) - 2 * both)
    a = _as_dense(A).astype(np.int64)
    b = _as_dense(A0).astype(np.int64)
    return int(np.sum(a + b - 2 * a * b))


# ---------------------------------------------------------------------------
# problem + validation
# ---------------------------------------------------------------------------

def as_fraction(mu) -> Fraction:
    if isinstance(mu, Fraction):
        return mu
    return Fraction(str(mu)).limit_denominator(10**6)


@dataclass(frozen=True)
class Violation:
    constraint: int
    location: tuple[int, ...]
    detail: str


class ViolationReport(list):
    """List of :class:`Violation`; empty iff the routing is feasible."""

    def constraints(self) -> set[int]:
        return {v.constraint for v in self}

    def count(self, constraint: int | None = None) -> int:  # type: ignore[override]
        if constraint is None:
            return len(self)
        return sum(1 for v in self if v.constraint == constraint)

    def __str__(self):
        return "\n".join(f"({v.constraint}) {CONSTRAINT_NAMES[v.constraint]} at {v.location}: {v.detail}"
                         for v in self)


@dataclass(frozen=True, eq=False)
class ReconfigProblem:
    """Topology + flows + current routing ``A0`` + utilisation cap ``mu``.

    ``current`` must be structurally valid (constraints 3-9, decodable to
    one simple path per flow); it may overload links.
    """

    topology: Topology
    flows: FlowSet
    current: RoutingMatrix
    mu: Fraction = Fraction(1)

    def __post_init__(self):
        mu = as_fraction(self.mu)
        if not 0 < mu <= 1:
            raise ParameterError(f"mu must lie in (0, 1], got {self.mu}")
        object.__setattr__(self, "mu", mu)
        t, fs, a0 = self.topology, self.flows, self.current
        if a0.n != t.n or a0.p != fs.p:
            raise ParameterError(f"A0 shape {(a0.n, a0.n, a0.p)} does not match n={t.n}, p={fs.p}")
        fs.check_against(t)
        bad = [v for v in validate(a0, self, structural_only=True)]
        if bad:
            raise RoutingError("current routing is not structurally valid:\n" + str(ViolationReport(bad[:10])))
        for f, flow in enumerate(fs):
            path_of(a0, f, flow.src, flow.dst)

    @cached_property
    def current_paths(self) -> list[list[int]]:
        return [path_of(self.current, f, fl.src, fl.dst) for f, fl in enumerate(self.flows)]

    @cached_property
    def capacity_units(self) -> np.ndarray:
        """mu * B scaled by the mu denominator, in rate units (n x n)."""
        return self.topology.bandwidth * (UNITS_PER_MBPS * self.mu.numerator)

    @cached_property
    def demand_scaled(self) -> np.ndarray:
        return self.flows.demand_units * self.mu.denominator

    def with_flows(self, flows: FlowSet, current: RoutingMatrix) -> "ReconfigProblem":
        return ReconfigProblem(self.topology, flows, current, self.mu)


def _sparse_sums(A: RoutingMatrix, demand: np.ndarray, src: np.ndarray, dst: np.ndarray):
    n, p = A.n, A.p
    i, j, f = A.entries
    load = np.bincount(i * n + j, weights=None if demand is None else demand[f], minlength=n * n)
    load = load.astype(np.int64).reshape(n, n) if demand is not None else None
    out_deg = np.bincount(i * p + f, minlength=n * p).reshape(n, p).astype(np.int64)
    in_deg = np.bincount(j * p + f, minlength=n * p).reshape(n, p).astype(np.int64)
    fr = np.arange(p)
    return {
        "load": load,
        "into_src": in_deg[src, fr],
        "out_dst": out_deg[dst, fr],
        "out_src": out_deg[src, fr],
        "into_dst": in_deg[dst, fr],
        "balance": out_deg - in_deg,
        "out_deg": out_deg,
    }


def _dense_sums(A: np.ndarray, demand: np.ndarray, src: np.ndarray, dst: np.ndarray, kern=None):
    kern = kern or _kernels.active
    A = np.ascontiguousarray(A)
    return {
        "load": kern.link_load(A, demand),
        "into_src": kern.into_node(A, src),
        "out_dst": kern.out_of_node(A, dst),
        "out_src": kern.out_of_node(A, src),
        "into_dst": kern.into_node(A, dst),
        "balance": kern.balance(A),
        "out_deg": kern.out_degree(A),
    }


def validate(A, prob: ReconfigProblem, structural_only: bool = False, dense: bool | None = None) -> ViolationReport:
    """Report every violated constraint instance of ``A`` for ``prob``.

    ``A`` is a :class:`RoutingMatrix` or a dense (n, n, p) integer array.
    Capacity is checked exactly: ``sum_f A*C_f <= mu*B`` cross-multiplied.
    ``dense`` forces one evaluation route (default: by size).
    """
    t = prob.topology
    fs = prob.flows
    n, p = t.n, fs.p
    shape = (A.n, A.n, A.p) if isinstance(A, RoutingMatrix) else np.shape(A)
    if tuple(shape) != (n, n, p):
        raise ParameterError(f"routing shape {tuple(shape)} does not match (n, n, p) = {(n, n, p)}")
    report = ViolationReport()
    src, dst = fs.src, fs.dst
    demand = prob.flows.demand_units * as_fraction(prob.mu).denominator
    use_dense = (n * n * p <= DENSE_LIMIT) if dense is None else dense

    if not isinstance(A, RoutingMatrix):
        Ad = np.asarray(A)
        nonbin = np.argwhere((Ad != 0) & (Ad != 1))
        for i, j, f in nonbin:
            report.append(Violation(9, (int(i), int(j), int(f)), f"entry value {Ad[i, j, f]}"))
        Ad = (Ad != 0).astype(np.uint8)
        sums = _dense_sums(Ad, demand, src, dst) if use_dense else _sparse_sums(RoutingMatrix.from_dense(Ad), demand, src, dst)
        ei, ej, ef = np.nonzero(Ad)
    else:
        sums = _dense_sums(A.to_dense(), demand, src, dst) if use_dense else _sparse_sums(A, demand, src, dst)
        ei, ej, ef = A.entries

    bw = t.bandwidth
    nolink = bw[ei, ej] == 0
    for i, j, f in zip(ei[nolink], ej[nolink], ef[nolink]):
        report.append(Violation(0, (int(i), int(j), int(f)), f"flow {f} uses missing link {i}->{j}"))

    if not structural_only:
        cap = bw * (UNITS_PER_MBPS * as_fraction(prob.mu).numerator)
        over = np.argwhere((sums["load"] > cap) & (bw > 0))
        mu = as_fraction(prob.mu)
        for i, j in over:
            load_mbps = sums["load"][i, j] / (mu.denominator * UNITS_PER_MBPS)
            report.append(Violation(2, (int(i), int(j)),
                                    f"load {load_mbps:g} Mb/s > mu*B = {float(mu * int(bw[i, j])):g} Mb/s"))

    for f in np.nonzero(sums["into_src"] != 0)[0]:
        report.append(Violation(3, (int(f),), f"{sums['into_src'][f]} link(s) enter source {src[f]}"))
    for f in np.nonzero(sums["out_dst"] != 0)[0]:
        report.append(Violation(4, (int(f),), f"{sums['out_dst'][f]} link(s) leave destination {dst[f]}"))
    for f in np.nonzero(sums["out_src"] != 1)[0]:
        report.append(Violation(5, (int(f),), f"{sums['out_src'][f]} link(s) leave source {src[f]}, need 1"))
    for f in np.nonzero(sums["into_dst"] != 1)[0]:
        report.append(Violation(6, (int(f),), f"{sums['into_dst'][f]} link(s) enter destination {dst[f]}, need 1"))
    bal = sums["balance"].copy()
    if p:
        fr = np.arange(p)
        bal[src, fr] = 0
        bal[dst, fr] = 0
    for i, f in np.argwhere(bal != 0):
        report.append(Violation(7, (int(i), int(f)), f"out - in = {bal[i, f]} at transit switch"))
    for i, f in np.argwhere(sums["out_deg"] > 1):
        report.append(Violation(8, (int(i), int(f)), f"{sums['out_deg'][i, f]} out-links at switch {i}"))

    report.sort(key=lambda v: (v.constraint, v.location))
    return report


# ---------------------------------------------------------------------------
# path codec
# ---------------------------------------------------------------------------

def path_of(A: RoutingMatrix, f: int, src: int, dst: int | None = None) -> list[int]:
    """Decode flow ``f``'s slice into the walk ``src -> ... -> dst``."""
    links = A.flow_links(f)
    if not links:
        raise PathDecodeError(f"flow {f}: empty slice (no link leaves source {src})")
    succ: dict[int, int] = {}
    for a, b in links:
        if a in succ:
            raise PathDecodeError(f"flow {f}: switch {a} branches to {succ[a]} and {b}")
        succ[a] = b
    if src not in succ:
        raise PathDecodeError(f"flow {f}: no link leaves source {src}")
    path = [src]
    seen = {src}
    v = src
    while v in succ:
        v = succ[v]
        if v in seen:
            raise PathDecodeError(f"flow {f}: loop through switch {v}")
        seen.add(v)
        path.append(v)
    if dst is not None and v != dst:
        raise PathDecodeError(f"flow {f}: walk ends at switch {v}, expected {dst}")
    if len(path) - 1 != len(links):
        stray = sorted(a for a, _ in links if a not in seen)
        raise PathDecodeError(f"flow {f}: links not on the path, e.g. at switch {stray[0]}")
    return path


def encode_path(path: Sequence[int], f: int, into: RoutingMatrix, topology: Topology | None = None,
                flows: FlowSet | None = None) -> RoutingMatrix:
    """Return ``into`` with flow ``f``'s slice set to exactly ``path``'s links."""
    path = [int(v) for v in path]
    if len(path) < 2:
        raise RoutingError("path needs at least two switches")
    if len(set(path)) != len(path):
        raise RoutingError(f"path {path} repeats a switch")
    if topology is not None:
        for a, b in zip(path[:-1], path[1:]):
            if not topology.has_link(a, b):
                raise RoutingError(f"path {path} uses nonexistent link {a}->{b}")
    if flows is not None:
        fl = flows[f]
        if path[0] != fl.src or path[-1] != fl.dst:
            raise RoutingError(f"path {path} does not join flow {fl.id}'s endpoints {fl.src}->{fl.dst}")
    return into.with_flow(f, list(zip(path[:-1], path[1:])))


# ---------------------------------------------------------------------------
# routing file
# ---------------------------------------------------------------------------

def dump_routing(A: RoutingMatrix, flows: FlowSet) -> str:
    lines = []
    for f, fl in enumerate(flows):
        if not A.flow_links(f):
            continue
        lines.append(f"{fl.id}: " + " -> ".join(str(v) for v in path_of(A, f, fl.src, fl.dst)))
    return "\n".join(lines) + ("\n" if lines else "")


_ROUTE_LINE = re.compile(r"^\s*(-?\d+)\s*:\s*(.*)$")


def load_routing(text: str, flows: FlowSet, n: int) -> RoutingMatrix:
    paths: list[list[int] | None] = [None] * flows.p
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _ROUTE_LINE.match(line)
        if not m:
            raise RoutingError(f"line {lineno}: expected 'f: s -> ... -> d'")
        fid = int(m.group(1))
        if fid not in flows.index_of:
            raise RoutingError(f"line {lineno}: unknown flow id {fid}")
        f = flows.index_of[fid]
        try:
            path = [int(x) for x in m.group(2).split("->")]
        except ValueError:
            raise RoutingError(f"line {lineno}: bad switch list") from None
        if any(not 0 <= v < n for v in path):
            raise RoutingError(f"line {lineno}: switch index out of range")
        if paths[f] is not None:
            raise RoutingError(f"line {lineno}: flow {fid} routed twice")
        paths[f] = path
    return RoutingMatrix.from_paths(n, paths)


# ---------------------------------------------------------------------------
# non-negative objective export
# ---------------------------------------------------------------------------

@dataclass
class LinearProgram:
    """Objective ``sum c*x + constant`` and rows ``sum a*x (<=|=|>=) b``."""

    objective: list[tuple[int, str]] = field(default_factory=list)
    constant: int = 0
    constraints: list[tuple[list[tuple[int, str]], str, int]] = field(default_factory=list)
    binaries: list[str] = field(default_factory=list)


def _var(i, j, f):
    return f"A_{i}_{j}_{f}"


def nonneg_form(prob: ReconfigProblem) -> LinearProgram:
    """Objective sum(A + A0) with rows A + A0 <= 1 where A0 = 1, plus rows 2-8."""
    t, fs = prob.topology, prob.flows
    links = [(int(i), int(j)) for i, j in t.links]
    p = fs.p
    a0 = set()
    ai, aj, af = prob.current.entries
    for i, j, f in zip(ai, aj, af):
        a0.add((int(i), int(j), int(f)))
    lp = LinearProgram()
    for f in range(p):
        for i, j in links:
            lp.objective.append((1, _var(i, j, f)))
            lp.binaries.append(_var(i, j, f))
    lp.constant = len(a0)
    demand = prob.demand_scaled
    cap = prob.capacity_units
    if p:
        for i, j in links:
            lp.constraints.append(([(int(demand[f]), _var(i, j, f)) for f in range(p)], "<=", int(cap[i, j])))
    out_links = {v: [(a, b) for a, b in links if a == v] for v in range(t.n)}
    in_links = {v: [(a, b) for a, b in links if b == v] for v in range(t.n)}
    for f, fl in enumerate(fs):
        s, d = fl.src, fl.dst
        if in_links[s]:
            lp.constraints.append(([(1, _var(a, b, f)) for a, b in in_links[s]], "=", 0))
        if out_links[d]:
            lp.constraints.append(([(1, _var(a, b, f)) for a, b in out_links[d]], "=", 0))
        lp.constraints.append(([(1, _var(a, b, f)) for a, b in out_links[s]], "=", 1))
        lp.constraints.append(([(1, _var(a, b, f)) for a, b in in_links[d]], "=", 1))
        for v in range(t.n):
            if v in (s, d) or not (out_links[v] or in_links[v]):
                continue
            terms = [(1, _var(a, b, f)) for a, b in out_links[v]] + [(-1, _var(a, b, f)) for a, b in in_links[v]]
            lp.constraints.append((terms, "=", 0))
        for v in range(t.n):
            if len(out_links[v]) > 1:
                lp.constraints.append(([(1, _var(a, b, f)) for a, b in out_links[v]], "<=", 1))
    for i, j, f in sorted(a0, key=lambda x: (x[2], x[0], x[1])):
        lp.constraints.append(([(1, _var(i, j, f))], "<=", 0))
    return lp


def format_lp(lp: LinearProgram) -> str:
    lines = ["min"]
    lines += [f"{c} {v}" for c, v in lp.objective]
    lines.append(f"constant {lp.constant}")
    lines.append("subject to")
    for terms, op, rhs in lp.constraints:
        lhs = " + ".join(f"{c} {v}" for c, v in terms)
        lines.append(f"{lhs} {op} {rhs}")
    lines.append("binary " + " ".join(lp.binaries))
    return "\n".join(lines) + "\n"


def export_nonneg_form(prob: ReconfigProblem) -> str:
    return format_lp(nonneg_form(prob))


def parse_lp(text: str) -> LinearProgram:
    lp = LinearProgram()
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "min":
            section = "obj"
            continue
        if line == "subject to":
            section = "st"
            continue
        if line.startswith("binary"):
            lp.binaries = line.split()[1:]
            continue
        if section == "obj":
            tok = line.split()
            if tok[0] == "constant":
                lp.constant = int(tok[1])
            else:
                lp.objective.append((int(tok[0]), tok[1]))
        elif section == "st":
            m = re.match(r"^(.*)\s(<=|>=|=)\s(-?\d+)$", line)
            if not m:
                raise ParameterError(f"line {lineno}: malformed constraint")
            terms = []
            for term in m.group(1).split(" + "):
                c, v = term.split()
                terms.append((int(c), v))
            lp.constraints.append((terms, m.group(2), int(m.group(3))))
        else:
            raise ParameterError(f"line {lineno}: content before 'min'")
    return lp

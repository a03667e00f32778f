"""Scenario engine: admit flows on primary routes, trigger a reconfiguration,
run the algorithms, record metrics, and write CSV / routing / plot files."""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import _kernels
from .analysis import CSV_COLUMNS, EXTRA_COLUMNS, DelayModelParams, MetricsReport, compute_metrics, format_value
from .baseline import BaselineConfig, Residual, reroute_shortest_path, route_new_flow
from .errors import GuardExceeded, ParameterError
from .qnr_solver import SolverConfig, solve_qnr
from .routing import DENSE_LIMIT, ReconfigProblem, RoutingMatrix, as_fraction, dump_routing, validate
from .rqnr import CompressionConfig, compressed_problem, dump_merge_map, expand
from .solution import Solution
from .topology import FatTreeParams, Topology, generate_fat_tree, load_topology
from .workload import (Flow, FlowSet, SizeDistribution, WorkloadParams, _round_rate, dump_flows,
                       generate_workload, inject_big_flows)

log = logging.getLogger(__name__)

ALGORITHMS = ("qnr", "rqnr", "spf")
NOT_FIRED = "NotFired"
# node budget per solve when wall-clock timing is off
DEFAULT_NODE_BUDGET = 200_000


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: str = "scenario"
    # topology: "fat-tree" (K values below) or a topology file
    topology: str = "fat-tree"
    K: tuple[int, ...] = (4,)
    link_capacity_mbps: int = 1000
    controller_delay_s: float = 0.001
    topology_file: str | None = None
    # workload; every combination of p x pl x seed is one sweep point
    p: tuple[int, ...] = (100,)
    pl: tuple[float, ...] = (0.25,)
    seeds: tuple[int, ...] = (0,)
    size_distribution: str = "mixture:0.9,1,10,50,200"
    big_flows: int = 0
    big_flow_mbps: float = 500.0
    demand_scale: float = 1.25
    mu: Fraction = Fraction(1)
    # reconfiguration
    algorithms: tuple[str, ...] = ("qnr", "spf")
    trigger: str = "immediate"
    lower_band_mbps: float = 10.0
    upper_bound_mbps: float = 100.0
    max_path_hops: int = 6
    time_budget_s: float = 60.0
    max_nodes: int | None = None
    timing: str = "wall"
    # delay model
    t_propagation: float = 1e-4
    t_transmission: float = 1e-5
    t_processing: float = 1e-3
    per_entry_update_ms: float = 1.0
    # output
    output_dir: str = "out"
    workers: int = 1
    plots: bool = True

    def __post_init__(self):
        if self.topology not in ("fat-tree", "file"):
            raise ParameterError("topology must be 'fat-tree' or 'file'")
        if self.topology == "file" and not self.topology_file:
            raise ParameterError("topology = file needs topology_file")
        if self.topology == "fat-tree" and self.topology_file:
            raise ParameterError("give either a fat-tree or a topology_file, not both")
        for name in ("K", "p", "pl", "seeds", "algorithms"):
            if not getattr(self, name):
                raise ParameterError(f"{name} must not be empty")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ParameterError(f"unknown algorithm {a!r}; choose from {ALGORITHMS}")
        if self.timing not in ("wall", "off"):
            raise ParameterError("timing must be 'wall' or 'off'")
        if not self.demand_scale > 0:
            raise ParameterError("demand_scale must be positive")
        if self.workers < 1:
            raise ParameterError("workers must be >= 1")
        object.__setattr__(self, "mu", as_fraction(self.mu))
        if not 0 < self.mu <= 1:
            raise ParameterError(f"mu must lie in (0, 1], got {self.mu}")
        parse_trigger(self.trigger)
        SizeDistribution.parse(self.size_distribution)
        CompressionConfig(self.lower_band_mbps, self.upper_bound_mbps)

    def solver_config(self) -> SolverConfig:
        if self.timing == "off":
            nodes = self.max_nodes if self.max_nodes is not None else DEFAULT_NODE_BUDGET
            return SolverConfig(max_path_hops=self.max_path_hops, time_budget_s=None, max_nodes=nodes)
        return SolverConfig(max_path_hops=self.max_path_hops, time_budget_s=self.time_budget_s,
                            max_nodes=self.max_nodes)

    def delay_params(self) -> DelayModelParams:
        return DelayModelParams(self.t_propagation, self.t_transmission, self.t_processing,
                                self.per_entry_update_ms)

    def snapshot(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}


def parse_trigger(text: str) -> tuple[str, float | None]:
    """``immediate``, ``on-congestion`` or ``period:T`` (T in seconds)."""
    t = text.strip().lower()
    if t in ("immediate", "on-congestion"):
        return t, None
    if t.startswith("period:"):
        try:
            period = float(t.split(":", 1)[1])
        except ValueError:
            period = -1.0
        if period > 0:
            return "period", period
    raise ParameterError(f"bad trigger {text!r}; use immediate, on-congestion or period:T")


def _convert(ftype, raw: str):
    ftype = str(ftype)
    raw = raw.strip()
    if ftype.startswith("tuple[int"):
        return tuple(int(x) for x in raw.split(",") if x.strip())
    if ftype.startswith("tuple[float"):
        return tuple(float(x) for x in raw.split(",") if x.strip())
    if ftype.startswith("tuple[str"):
        return tuple(x.strip() for x in raw.split(",") if x.strip())
    if ftype == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if ftype.startswith("int"):
        return None if raw.lower() in ("", "none") else int(raw)
    if ftype == "float":
        return float(raw)
    if ftype == "Fraction":
        return Fraction(raw)
    if ftype.startswith("str"):
        return None if raw.lower() in ("", "none") and "None" in ftype else raw
    raise ValueError(f"unsupported field type {ftype}")


def parse_config(text: str, base_dir: str | os.PathLike | None = None) -> ScenarioConfig:
    """Flat ``key = value`` text; lists are comma separated; ``#`` comments."""
    types = {f.name: f.type for f in dataclasses.fields(ScenarioConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ParameterError(f"line {lineno}: expected 'key = value'")
        if key not in types:
            raise ParameterError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ParameterError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _convert(types[key], value)
        except (ValueError, ZeroDivisionError) as exc:
            raise ParameterError(f"line {lineno}: {key}: {exc}") from None
    if values.get("topology_file") and "topology" not in values:
        values["topology"] = "file"
    if base_dir is not None:
        for key in ("topology_file", "output_dir"):
            if values.get(key) and not os.path.isabs(values[key]):
                values[key] = os.path.join(base_dir, values[key])
    return ScenarioConfig(**values)


def load_config(path: str | os.PathLike) -> ScenarioConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


# --------------------------------------------------------------------------
# admission and triggering
# --------------------------------------------------------------------------

@dataclass
class Admission:
    problem: ReconfigProblem
    dropped: tuple[int, ...]


def admit(t: Topology, fs: FlowSet, mu=1, demand_scale: float = 1.0) -> Admission:
    """Route flows one at a time, in id order, at ``demand / demand_scale``.

    Flows that find no feasible path are dropped.  The returned problem
    carries the admitted flows at full demand on their admission paths, so
    capacity may be exceeded when ``demand_scale > 1``.
    """
    if not demand_scale > 0:
        raise ParameterError("demand_scale must be positive")
    residual = Residual(t, mu)
    kept: list[Flow] = []
    paths: list[list[int]] = []
    dropped: list[int] = []
    for f in sorted(fs, key=lambda x: x.id):
        reduced = Flow(f.id, f.src, f.dst, max(_round_rate(f.demand_mbps / demand_scale), 0.001), f.class_id)
        path = route_new_flow(t, residual, reduced)
        if path is None:
            dropped.append(f.id)
            continue
        residual.commit(path, reduced)
        kept.append(f)
        paths.append(path)
    prob = ReconfigProblem(t, FlowSet(tuple(kept)), RoutingMatrix.from_paths(t.n, paths), mu)
    return Admission(prob, tuple(dropped))


def is_congested(prob: ReconfigProblem) -> bool:
    return any(v.constraint == 2 for v in validate(prob.current, prob))


def trigger_fires(trigger: str, prob: ReconfigProblem) -> bool:
    kind, _ = parse_trigger(trigger)
    if kind == "on-congestion":
        return is_congested(prob)
    # immediate, or a period that has elapsed on this static snapshot
    return True


# --------------------------------------------------------------------------
# runs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepPoint:
    K: int | None
    p: int
    pl: float
    seed: int

    @property
    def label(self) -> str:
        topo = "file" if self.K is None else f"K{self.K}"
        return f"{topo}_p{self.p}_pl{self.pl:g}_s{self.seed}"


@dataclass
class RunRecord:
    scenario_id: str
    algorithm: str
    point: SweepPoint
    n: int
    p: int
    mu: Fraction
    status: str
    trigger: str
    metrics: MetricsReport | None
    solve_time_ms: float | None
    active_flows: int
    compression_rate: float | None = None
    dropped: int = 0
    congested: bool = False
    stats: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def row(self) -> dict[str, str]:
        m = self.metrics
        vals = {
            "scenario_id": f"{self.scenario_id}:{self.point.label}",
            "algorithm": self.algorithm,
            "n": self.n,
            "p": self.p,
            "K": self.point.K,
            "PL": self.point.pl,
            "mu": float(self.mu),
            "sftc": m and m.sftc,
            "changed_pct": m and m.changed_pct,
            "rerouted_count": m and m.rerouted_count,
            "rerouted_pct": m and m.rerouted_pct,
            "max_nftc": m and m.max_nftc,
            "reconfig_delay_ms": m and m.reconfig_delay_ms,
            "ctrl_msg_delay_s": m and m.ctrl_msg_delay_s,
            "loss_volume_mb": m and m.loss_volume_mb,
            "solve_time_ms": self.solve_time_ms,
            "status": self.status,
            "changed_links_distinct": m and m.changed_links_distinct,
            "changed_links_distinct_pct": m and m.changed_links_distinct_pct,
            "active_flows": self.active_flows,
            "compression_rate": self.compression_rate,
            "trigger": self.trigger,
        }
        if m is None:
            for k in ("sftc", "changed_pct", "rerouted_count", "rerouted_pct", "max_nftc", "reconfig_delay_ms",
                      "ctrl_msg_delay_s", "loss_volume_mb", "changed_links_distinct", "changed_links_distinct_pct"):
                vals[k] = None
        return {k: format_value(v) for k, v in vals.items()}


def build_topology(cfg: ScenarioConfig, K: int | None) -> Topology:
    if cfg.topology == "file":
        return load_topology(Path(cfg.topology_file).read_text())
    return generate_fat_tree(FatTreeParams(K, cfg.link_capacity_mbps, cfg.controller_delay_s))


def sweep_points(cfg: ScenarioConfig) -> list[SweepPoint]:
    ks = (None,) if cfg.topology == "file" else cfg.K
    return [SweepPoint(k, p, pl, s) for k, p, pl, s in itertools.product(ks, cfg.p, cfg.pl, cfg.seeds)]


def build_problem(cfg: ScenarioConfig, point: SweepPoint, t: Topology | None = None) -> Admission:
    t = t if t is not None else build_topology(cfg, point.K)
    wp = WorkloadParams(p=point.p, pl=point.pl, seed=point.seed,
                        size_distribution=SizeDistribution.parse(cfg.size_distribution))
    fs = generate_workload(t, wp)
    fs = inject_big_flows(fs, cfg.big_flows, cfg.big_flow_mbps, t, pl=point.pl, seed=point.seed)
    return admit(t, fs, cfg.mu, cfg.demand_scale)


def run_algorithm(name: str, prob: ReconfigProblem, cfg: ScenarioConfig) -> tuple[Solution, dict]:
    """Run one algorithm; the dict holds extras for the record and the files."""
    extra: dict = {"active_flows": prob.flows.p}
    if name == "qnr":
        sol = solve_qnr(prob, cfg.solver_config())
    elif name == "spf":
        sol = reroute_shortest_path(prob, BaselineConfig())
    elif name == "rqnr":
        comp = CompressionConfig(cfg.lower_band_mbps, cfg.upper_bound_mbps)
        small, mm = compressed_problem(prob, comp)
        inner = solve_qnr(small, cfg.solver_config())
        extra.update(active_flows=small.flows.p, merge_map=mm,
                     compression_rate=1.0 - small.flows.p / prob.flows.p if prob.flows.p else 0.0)
        if inner.routing is None:
            sol = Solution(None, None, inner.status, dict(inner.stats))
        else:
            sol = expand(inner, mm, prob)
    else:
        raise ParameterError(f"unknown algorithm {name!r}")
    return sol, extra


def _run_point(cfg: ScenarioConfig, point: SweepPoint) -> tuple[list[RunRecord], dict[str, str]]:
    """One sweep point: records plus the text files to write for it."""
    adm = build_problem(cfg, point)
    prob = adm.problem
    files = {
        "flows.txt": dump_flows(prob.flows),
        "current.txt": dump_routing(prob.current, prob.flows),
    }
    congested = is_congested(prob)
    fired = trigger_fires(cfg.trigger, prob)
    snap = cfg.snapshot()
    records = []
    for name in cfg.algorithms:
        if not fired:
            metrics = compute_metrics(prob.current, prob.current, prob, cfg.delay_params())
            records.append(RunRecord(cfg.scenario_id, name, point, prob.topology.n, prob.flows.p, prob.mu,
                                     NOT_FIRED, cfg.trigger, metrics, None, prob.flows.p,
                                     dropped=len(adm.dropped), congested=congested, config=snap))
            continue
        start = time.perf_counter()
        sol, extra = run_algorithm(name, prob, cfg)
        elapsed_ms = (time.perf_counter() - start) * 1000.0
        metrics = None
        if sol.routing is not None:
            metrics = compute_metrics(sol.routing, prob.current, prob, cfg.delay_params())
            files[f"{name}.txt"] = dump_routing(sol.routing, prob.flows)
        if "merge_map" in extra:
            files[f"{name}.map"] = dump_merge_map(extra["merge_map"])
        stats = {k: v for k, v in sol.stats.items() if k in ("nodes", "seed_objective", "reason", "blocked_flow")}
        records.append(RunRecord(
            cfg.scenario_id, name, point, prob.topology.n, prob.flows.p, prob.mu, str(sol.status), cfg.trigger,
            metrics, elapsed_ms if cfg.timing == "wall" else None, extra["active_flows"],
            compression_rate=extra.get("compression_rate"), dropped=len(adm.dropped), congested=congested,
            stats=stats, config=snap))
    return records, files


def write_csv(records: list[RunRecord], path: str | os.PathLike) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS + EXTRA_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow(r.row())
    Path(path).write_text(buf.getvalue())


def read_csv(path: str | os.PathLike) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_scenario(cfg: ScenarioConfig, write: bool = True) -> list[RunRecord]:
    """Run every sweep point and algorithm; rows keep sweep-point order."""
    points = sweep_points(cfg)
    if cfg.workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_point, [cfg] * len(points), points))
    else:
        results = [_run_point(cfg, pt) for pt in points]
    records = [r for recs, _ in results for r in recs]
    if write:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        for pt, (_, files) in zip(points, results):
            d = out / "routes" / pt.label
            d.mkdir(parents=True, exist_ok=True)
            for name, text in files.items():
                (d / name).write_text(text)
        write_csv(records, out / "metrics.csv")
        if cfg.plots:
            emit_plots(records, out / "plots")
    return records


def exit_status(records: list[RunRecord]) -> int:
    """0 if any fired record found a routing, 1 if every fired one failed."""
    fired = [r for r in records if r.status != NOT_FIRED]
    if fired and all(r.metrics is None for r in fired):
        return 1
    return 0


# --------------------------------------------------------------------------
# constraint profiling
# --------------------------------------------------------------------------

PROFILED_CONSTRAINTS = (2, 3, 4, 5, 6, 7, 8)


def _sweeps(A: np.ndarray, prob: ReconfigProblem, kern) -> dict:
    demand = np.ascontiguousarray(prob.demand_scaled, dtype=np.int64)
    src = np.ascontiguousarray(prob.flows.src, dtype=np.int64)
    dst = np.ascontiguousarray(prob.flows.dst, dtype=np.int64)
    cap = prob.capacity_units
    return {
        2: lambda: bool((kern.link_load(A, demand) > cap).any()),
        3: lambda: bool(kern.into_node(A, src).any()),
        4: lambda: bool(kern.out_of_node(A, dst).any()),
        5: lambda: bool((kern.out_of_node(A, src) != 1).any()),
        6: lambda: bool((kern.into_node(A, dst) != 1).any()),
        7: lambda: bool(kern.balance(A).any()),
        8: lambda: bool((kern.out_degree(A) > 1).any()),
    }


@dataclass
class ConstraintProfile:
    p: int
    full_s: float
    isolated_s: dict[int, float]
    without_s: dict[int, float]

    @property
    def shares(self) -> dict[int, float]:
        total = sum(self.isolated_s.values())
        if total <= 0:
            return {c: 0.0 for c in self.isolated_s}
        return {c: t / total for c, t in self.isolated_s.items()}


def profile_constraints(prob: ReconfigProblem, A: RoutingMatrix | None = None, repeats: int = 5,
                        kern=None) -> ConstraintProfile:
    """Time the dense validation sweeps: all together, each alone, and all but one.

    Each time is the minimum over ``repeats`` runs.  Shares are each sweep's
    isolated time over the sum of isolated times.
    """
    A = prob.current if A is None else A
    cells = A.n * A.n * A.p
    if cells > DENSE_LIMIT:
        raise GuardExceeded(f"dense tensor of {cells} cells exceeds the profiling limit {DENSE_LIMIT}")
    kern = kern or _kernels.active
    dense = np.ascontiguousarray(A.to_dense())
    sweeps = _sweeps(dense, prob, kern)

    def timed(ids) -> float:
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            for c in ids:
                sweeps[c]()
            best = min(best, time.perf_counter() - t0)
        return best

    timed(PROFILED_CONSTRAINTS)  # warm-up, compiles kernels
    full = timed(PROFILED_CONSTRAINTS)
    isolated = {c: timed((c,)) for c in PROFILED_CONSTRAINTS}
    without = {c: timed(tuple(x for x in PROFILED_CONSTRAINTS if x != c)) for c in PROFILED_CONSTRAINTS}
    full = min(full, timed(PROFILED_CONSTRAINTS))
    return ConstraintProfile(A.p, full, isolated, without)


def profile_schedule(p_values=(100, 200, 300, 400), K: int = 4, seed: int = 0, repeats: int = 5,
                     demand_scale: float = 1.25) -> list[ConstraintProfile]:
    cfg = ScenarioConfig(K=(K,), p=tuple(p_values), seeds=(seed,), demand_scale=demand_scale)
    t = build_topology(cfg, K)
    out = []
    for pt in sweep_points(cfg):
        prob = build_problem(cfg, pt, t).problem
        out.append(profile_constraints(prob, repeats=repeats))
    return out


PROFILE_COLUMNS = ("p", "constraint", "isolated_ms", "without_ms", "full_ms", "share_pct")


def profile_csv(profiles: list[ConstraintProfile]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PROFILE_COLUMNS)
    for prof in profiles:
        shares = prof.shares
        for c in PROFILED_CONSTRAINTS:
            w.writerow([prof.p, c, format_value(prof.isolated_s[c] * 1e3), format_value(prof.without_s[c] * 1e3),
                        format_value(prof.full_s * 1e3), format_value(100.0 * shares[c])])
    return buf.getvalue()


# --------------------------------------------------------------------------
# plots
# --------------------------------------------------------------------------

PLOT_FAMILIES = {
    "sftc-vs-p": ("sftc", "SFTC"),
    "rerouted-vs-p": ("rerouted_count", "rerouted flows"),
    "rerouted-pct-vs-p": ("rerouted_pct", "rerouted flows (%)"),
    "max-nftc-vs-p": ("max_nftc", "max NFTC"),
    "active-flows-vs-p": ("active_flows", "active flows"),
    "compression-rate-vs-p": ("compression_rate", "compression rate"),
}


def _as_row(r) -> dict[str, str]:
    return r.row() if isinstance(r, RunRecord) else r


def _requested_p(row: dict[str, str]) -> int:
    # scenario ids end in ":<K>_p<P>_pl<PL>_s<seed>"
    label = row["scenario_id"].rsplit(":", 1)[-1]
    for part in label.split("_"):
        if part.startswith("p") and not part.startswith("pl") and part[1:].isdigit():
            return int(part[1:])
    return int(row["p"])


def emit_plots(records, out_dir: str | os.PathLike) -> list[Path]:
    """One SVG per figure family; series per (algorithm, K, PL), mean over seeds."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = [_as_row(r) for r in records]
    if not rows:
        raise ParameterError("no records to plot")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    with matplotlib.rc_context({"svg.hashsalt": "qnrsim", "svg.fonttype": "none"}):
        for name, (col, ylabel) in PLOT_FAMILIES.items():
            series: dict[tuple, dict[int, list[float]]] = {}
            for row in rows:
                if row.get(col, "") == "":
                    continue
                if name == "compression-rate-vs-p" and row["algorithm"] != "rqnr":
                    continue
                key = (row["algorithm"], row["K"], row["PL"])
                series.setdefault(key, {}).setdefault(_requested_p(row), []).append(float(row[col]))
            fig, ax = plt.subplots(figsize=(5, 3.5))
            for key in sorted(series):
                pts = sorted(series[key].items())
                xs = [x for x, _ in pts]
                ys = [float(np.mean(v)) for _, v in pts]
                alg, k, pl = key
                label = alg + (f" K={k}" if k else "") + f" PL={pl}"
                ax.plot(xs, ys, marker="o", label=label)
            ax.set_xlabel("number of flows p")
            ax.set_ylabel(ylabel)
            if series:
                ax.legend(fontsize="small")
            fig.tight_layout()
            path = out / f"{name}.svg"
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            written.append(path)
    return written

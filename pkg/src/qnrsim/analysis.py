"""Evaluation metrics and analytic delay/loss models for a reconfiguration.

Table model: a switch holds one forwarding entry per (flow, outgoing link),
so the entry changes at switch i are the differing cells of row i of the
routing tensor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .routing import ReconfigProblem, RoutingMatrix
from .topology import Topology, directed_link_count
from .workload import UNITS_PER_MBPS

CSV_COLUMNS = (
    "scenario_id", "algorithm", "n", "p", "K", "PL", "mu", "sftc", "changed_pct",
    "rerouted_count", "rerouted_pct", "max_nftc", "reconfig_delay_ms", "ctrl_msg_delay_s",
    "loss_volume_mb", "solve_time_ms", "status",
)
# secondary columns, written after the fixed ones
EXTRA_COLUMNS = ("changed_links_distinct", "changed_links_distinct_pct", "active_flows",
                 "compression_rate", "trigger")


@dataclass(frozen=True)
class DelayModelParams:
    t_propagation: float = 1e-4
    t_transmission: float = 1e-5
    t_processing: float = 1e-3
    per_entry_update_ms: float = 1.0
    n_prime: int = 0

    def __post_init__(self):
        for name in ("t_propagation", "t_transmission", "t_processing", "per_entry_update_ms", "n_prime"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")


@dataclass
class MetricsReport:
    sftc: int
    changed_pct: float
    rerouted_count: int
    rerouted_pct: float
    nftc: np.ndarray
    max_nftc: int
    reconfig_delay_ms: float
    ctrl_msg_delay_s: float
    loss_volume_mb: float
    changed_links_distinct: int = 0
    changed_links_distinct_pct: float = 0.0
    overload_mbps: float = 0.0
    window_s: float = 0.0
    touched_switches: tuple[int, ...] = field(default=())


def control_message_delay(p: DelayModelParams):
    """t_prop + t_trans + max((n'-1) t_trans, n' t_proc), the max clamped at 0.

    Plain arithmetic, so Fraction inputs give exact results.
    """
    if p.n_prime < 0:
        raise ParameterError("n_prime must be >= 0")
    tail = max((p.n_prime - 1) * p.t_transmission, p.n_prime * p.t_processing, 0)
    return p.t_propagation + p.t_transmission + tail


def transient_loss(overload_mbps, window_s):
    """Volume (Mb) dropped while ``overload_mbps`` exceeds capacity for ``window_s``."""
    if overload_mbps < 0 or window_s < 0:
        raise ParameterError("overload and window must be >= 0")
    return overload_mbps * window_s


def asynchrony_window(t: Topology, touched) -> float:
    """Spread of controller->switch delays over the switches being updated."""
    touched = sorted(set(int(v) for v in touched))
    if not touched:
        raise ParameterError("no switches touched")
    d = t.controller_delay[touched]
    return float(d.max() - d.min())


def tcp_retransmit_flag(old_path_delay: float, new_path_delay: float, rto: float) -> bool:
    if old_path_delay < 0 or new_path_delay < 0 or rto < 0:
        raise ParameterError("delays must be >= 0")
    return new_path_delay - old_path_delay > rto


def _diff_keys(A: RoutingMatrix, A0: RoutingMatrix) -> np.ndarray:
    if (A.n, A.p) != (A0.n, A0.p):
        raise ParameterError("routing shapes differ")
    return np.setxor1d(A.keys, A0.keys, assume_unique=True)


def transient_overload(A: RoutingMatrix, prob: ReconfigProblem) -> float:
    """Worst-case excess (Mb/s) while old and new rules coexist.

    Every rerouted flow is charged on the union of its old and new links;
    the excess over physical capacity is summed across links.
    """
    A0 = prob.current
    n = A.n
    both = np.union1d(A.keys, A0.keys)
    f = both // (n * n)
    rest = both % (n * n)
    i, j = rest // n, rest % n
    load = np.zeros((n, n), dtype=np.int64)
    np.add.at(load, (i, j), prob.flows.demand_units[f])
    excess = load - prob.topology.bandwidth * UNITS_PER_MBPS
    return float(np.clip(excess, 0, None).sum()) / UNITS_PER_MBPS


def compute_metrics(A: RoutingMatrix, A0: RoutingMatrix, prob: ReconfigProblem,
                    delay: DelayModelParams = DelayModelParams()) -> MetricsReport:
    n, p = A0.n, A0.p
    if A0 != prob.current:
        prob = prob.with_flows(prob.flows, A0)
    diff = _diff_keys(A, A0)
    sftc = int(diff.size)
    f = diff // (n * n)
    rest = diff % (n * n)
    rows = rest // n
    nftc = np.bincount(rows, minlength=n).astype(np.int64)
    rerouted = int(np.unique(f).size)
    links_distinct = int(np.unique(rest).size)
    n_links = directed_link_count(prob.topology)
    cells = n_links * p
    touched = tuple(int(v) for v in np.nonzero(nftc)[0])
    window = asynchrony_window(prob.topology, touched) if touched else 0.0
    overload = transient_overload(A, prob) if sftc else 0.0
    d = DelayModelParams(delay.t_propagation, delay.t_transmission, delay.t_processing,
                         delay.per_entry_update_ms, rerouted)
    max_nftc = int(nftc.max()) if n else 0
    return MetricsReport(
        sftc=sftc,
        changed_pct=100.0 * sftc / cells if cells else 0.0,
        rerouted_count=rerouted,
        rerouted_pct=100.0 * rerouted / p if p else 0.0,
        nftc=nftc,
        max_nftc=max_nftc,
        reconfig_delay_ms=max_nftc * delay.per_entry_update_ms,
        ctrl_msg_delay_s=float(control_message_delay(d)),
        loss_volume_mb=transient_loss(overload, window),
        changed_links_distinct=links_distinct,
        changed_links_distinct_pct=100.0 * links_distinct / n_links if n_links else 0.0,
        overload_mbps=overload,
        window_s=window,
        touched_switches=touched,
    )


def format_value(x) -> str:
    """Stable text for CSV cells."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.9g}"
    return str(x)

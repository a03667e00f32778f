from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .routing import RoutingMatrix


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    TIMED_OUT = "TimedOut"

    def __str__(self):
        return self.value


@dataclass
class Solution:
    """Result of a reconfiguration run.

    ``routing``/``objective`` are None when no feasible routing is known.
    ``stats`` carries solver diagnostics (nodes, wall time, ...).
    """

    routing: RoutingMatrix | None
    objective: int | None
    status: Status
    stats: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

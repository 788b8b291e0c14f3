"""Shared data types for the edge-push toolkit.

States are (E, Q, I, C): battery units, request class, next-content
indicator and pushed-content count. Everything downstream indexes states
with the order documented on ``StateSpace``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum, auto
from typing import Any


class Action(IntEnum):
    SLEEP = 0
    UNICAST = 1
    PUSH = 2


class PolicyKind(Enum):
    POTB = "potb"
    APTB = "aptb"
    EETB = "eetb"
    GOTB = "gotb"
    SERVICE_ON_DEMAND = "sod"
    OPTIMAL = "optimal"

    @classmethod
    def parse(cls, name: str) -> PolicyKind:
        key = name.strip().lower().replace("-", "_")
        aliases = {"service_on_demand": "sod", "dp": "optimal"}
        key = aliases.get(key, key)
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValueError(f"Unknown policy: {name!r}")


class Provenance(Enum):
    CLOSED_FORM = "closed-form"
    FSMC = "fsmc"
    MONTE_CARLO = "mc"
    DP = "dp"

    @classmethod
    def parse(cls, name: str) -> Provenance:
        key = name.strip().lower().replace("_", "-")
        if key in ("monte-carlo", "montecarlo"):
            key = "mc"
        for p in cls:
            if p.value == key:
                return p
        raise ValueError(f"Unknown evaluation method: {name!r}")


class EventType(Enum):
    ITERATION = auto()
    RESULT = auto()
    ANOMALY = auto()


@dataclass(frozen=True, slots=True)
class SystemState:
    """One MDP state.

    indicator is meaningful only when request > 0 (1 iff the request
    targets rank pushed+1).
    """
    energy: int
    request: int = 0
    indicator: int = 0
    pushed: int = 0


@dataclass(frozen=True, slots=True)
class BlockingReport:
    """Blocking estimate with where it came from.

    samples is the counted slot total for Monte Carlo runs, None otherwise.
    """
    value: float
    provenance: Provenance
    samples: int | None = None
    ci_radius: float | None = None
    metadata: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class Event:
    event_type: EventType
    source: str
    payload: dict[str, Any] = field(default_factory=dict)

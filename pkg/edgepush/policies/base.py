"""Stationary policies and the rule interface that builds them."""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from edgepush.core.errors import InfeasibleActionError
from edgepush.core.model import ModelParams, StateSpace, feasibility_mask
from edgepush.core.types import Action, SystemState

logger = logging.getLogger(__name__)

POLICY_MAGIC = "edgepush-policy 1"


@dataclass(frozen=True, eq=False)
class StationaryPolicy:
    """One action per state, indexed in StateSpace order."""
    space: StateSpace
    actions: NDArray[np.int8]
    label: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        a = np.asarray(self.actions, dtype=np.int8)
        if a.shape != (self.space.size,):
            raise ValueError(f"expected {self.space.size} actions, got shape {a.shape}")
        if a.size and (a.min() < 0 or a.max() > 2):
            raise ValueError("actions must be 0 (sleep), 1 (unicast) or 2 (push)")
        a.setflags(write=False)
        object.__setattr__(self, "actions", a)

    @classmethod
    def all_sleep(cls, space: StateSpace) -> StationaryPolicy:
        return cls(space, np.zeros(space.size, dtype=np.int8), label="all-sleep")

    def action(self, state: SystemState) -> Action:
        return Action(int(self.actions[self.space.index(state)]))

    def validate(self, params: ModelParams) -> None:
        """Raise InfeasibleActionError naming the first bad state."""
        if params.space != self.space:
            raise ValueError(f"policy built for {self.space}, params describe {params.space}")
        ok = feasibility_mask(params)[np.arange(self.space.size), self.actions]
        bad = np.flatnonzero(~ok)
        if bad.size:
            x = self.space.state(int(bad[0]))
            u = Action(int(self.actions[bad[0]]))
            raise InfeasibleActionError(
                f"policy {self.label or '?'}: {u.name} infeasible at {x}", state=x, action=u,
            )

    def differs(self, other: StationaryPolicy) -> int:
        """Number of states where the two policies act differently."""
        return int(np.count_nonzero(self.actions != other.actions))

    def frequencies(self, weights: NDArray[np.float64]) -> NDArray[np.float64]:
        """Probability of each action under a state distribution."""
        return np.bincount(self.actions, weights=weights, minlength=3)[:3]


class PolicyRule(ABC):
    """Builds a StationaryPolicy from the state arrays of a scenario."""

    label: str = "rule"

    @abstractmethod
    def assign(self, energy, request, indicator, pushed, params: ModelParams) -> NDArray[np.int8]: ...

    def build(self, params: ModelParams) -> StationaryPolicy:
        e, q, i, c = params.space.arrays
        policy = StationaryPolicy(params.space, self.assign(e, q, i, c, params), label=self.label)
        policy.validate(params)
        return policy


# ── Policy files ─────────────────────────────────────────────────────────

def save_policy(policy: StationaryPolicy, path: str | Path) -> Path:
    """Text header with the state-order contract, then one action byte per state."""
    path = Path(path)
    s = policy.space
    header = [
        POLICY_MAGIC,
        "order E,QI,C",
        "index (E*(2M+1)+QI)*(N+1)+C",
        "qi 0=(0,0) 2m-1=(m,0) 2m=(m,1)",
        "actions 0=sleep 1=unicast 2=push",
        f"dims E_max={s.battery_units} M={s.classes} N={s.contents}",
        f"states {s.size}",
        f"label {policy.label or '-'}",
        "end",
    ]
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(policy.actions.astype(np.uint8).tobytes())
    logger.info("Saved policy %s (%d states) to %s", policy.label or "-", s.size, path)
    return path


def load_policy(path: str | Path, space: StateSpace | None = None) -> StationaryPolicy:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Policy file not found: {path}")
    raw = path.read_bytes()
    marker = b"\nend\n"
    cut = raw.find(marker)
    if not raw.startswith(POLICY_MAGIC.encode("ascii")) or cut < 0:
        raise ValueError(f"{path} is not a policy file")
    fields = {}
    for line in raw[:cut].decode("ascii").splitlines()[1:]:
        key, _, value = line.partition(" ")
        fields[key] = value
    dims = dict(kv.split("=") for kv in fields["dims"].split())
    stored = StateSpace(int(dims["E_max"]), int(dims["M"]), int(dims["N"]))
    if space is not None and space != stored:
        raise ValueError(f"policy file has dims {stored}, expected {space}")
    body = np.frombuffer(raw[cut + len(marker):], dtype=np.uint8)
    if body.size != stored.size or int(fields["states"]) != stored.size:
        raise ValueError(f"policy file holds {body.size} actions, expected {stored.size}")
    label = fields.get("label", "-")
    return StationaryPolicy(stored, body.astype(np.int8), label="" if label == "-" else label)

"""Scenario constants, energy-arrival laws and the enumerated state space."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.typing import NDArray
from scipy.stats import poisson

from edgepush.core.channel import DistanceGrid
from edgepush.core.content import Catalog
from edgepush.core.types import Action, SystemState

logger = logging.getLogger(__name__)

PMF_ATOL = 1e-12


# ── Energy arrivals ──────────────────────────────────────────────────────

def poisson_arrivals(mean: float, support: int | None = None, tail_tol: float = 0.0) -> NDArray[np.float64]:
    """Poisson(mean) pmf on 0..L-1; the last atom carries P(A >= L-1).

    With tail_tol=0 (the default) L is ``support``. Any support above
    E_max gives the kernel the exact law, since every arrival of E_max
    units or more fills the battery. A positive tail_tol also stops L
    where the survival function drops below it.
    """
    if mean < 0:
        raise ValueError(f"arrival mean must be >= 0, got {mean}")
    if tail_tol < 0:
        raise ValueError(f"tail_tol must be >= 0, got {tail_tol}")
    if mean == 0:
        return np.array([1.0])
    length = int(poisson.isf(tail_tol, mean)) + 2 if tail_tol > 0 else None
    if support is not None:
        length = support if length is None else min(length, support)
    if length is None:
        raise ValueError("tail_tol=0 needs an explicit support")
    if length < 2:
        return np.array([1.0])
    pmf = poisson.pmf(np.arange(length), mean)
    pmf[-1] = poisson.sf(length - 2, mean)
    return pmf


def deterministic_arrivals(units: int) -> NDArray[np.float64]:
    if units < 0:
        raise ValueError(f"arrival units must be >= 0, got {units}")
    pmf = np.zeros(units + 1)
    pmf[units] = 1.0
    return pmf


def explicit_arrivals(values) -> NDArray[np.float64]:
    pmf = np.asarray(values, dtype=np.float64)
    if pmf.ndim != 1 or pmf.size == 0 or np.any(pmf < 0):
        raise ValueError("arrival pmf must be a non-empty list of non-negative numbers")
    return pmf


# ── Scenario ─────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class ModelParams:
    """Every constant the kernel needs. Energies are integer units of grid.unit_energy."""
    battery_units: int
    push_units: int
    request_prob: float
    catalog: Catalog
    grid: DistanceGrid
    arrival_pmf: NDArray[np.float64]
    arrival_mean: float = field(default=float("nan"))

    def __post_init__(self) -> None:
        pmf = np.asarray(self.arrival_pmf, dtype=np.float64)
        if pmf.ndim != 1 or pmf.size == 0 or np.any(pmf < 0):
            raise ValueError("arrival_pmf must be a non-empty non-negative vector")
        if abs(pmf.sum() - 1.0) > PMF_ATOL:
            raise ValueError(f"arrival_pmf sums to {pmf.sum():.15g}, expected 1")
        pmf.setflags(write=False)
        object.__setattr__(self, "arrival_pmf", pmf)

        pmf_mean = float(np.dot(np.arange(pmf.size), pmf))
        if np.isnan(self.arrival_mean):
            object.__setattr__(self, "arrival_mean", pmf_mean)
        elif self.arrival_mean < 0:
            raise ValueError(f"arrival_mean must be >= 0, got {self.arrival_mean}")
        elif abs(self.arrival_mean - pmf_mean) > 1e-6 * max(1.0, self.arrival_mean):
            logger.warning(
                "Nominal arrival mean %.6g differs from the pmf mean %.6g",
                self.arrival_mean, pmf_mean,
            )

        if self.battery_units < 0:
            raise ValueError(f"battery_units must be >= 0, got {self.battery_units}")
        if not 1 <= self.push_units <= self.battery_units:
            raise ValueError(
                f"push_units must lie in [1, battery_units={self.battery_units}], got {self.push_units}"
            )
        if self.grid.multipliers[-1] > self.battery_units:
            raise ValueError(
                f"largest unicast cost {self.grid.multipliers[-1]} exceeds battery_units={self.battery_units}"
            )
        if not 0.0 <= self.request_prob <= 1.0:
            raise ValueError(f"request_prob must lie in [0, 1], got {self.request_prob}")
        if self.grid.mode == "paper" and self.push_units != self.grid.multipliers[-1]:
            logger.warning(
                "push_units=%d differs from the edge unicast cost l_M=%d in paper mode",
                self.push_units, self.grid.multipliers[-1],
            )

    @property
    def n_classes(self) -> int:
        return self.grid.n_classes

    @property
    def n_contents(self) -> int:
        return self.catalog.size

    @property
    def update_prob(self) -> float:
        return self.catalog.update_prob

    @cached_property
    def space(self) -> StateSpace:
        return StateSpace(self.battery_units, self.n_classes, self.n_contents)

    def spend(self, request: int, action: Action) -> int:
        """Energy units an action consumes."""
        if action == Action.SLEEP:
            return 0
        if action == Action.UNICAST:
            if request < 1:
                raise ValueError("unicast needs a pending request")
            return self.grid.multipliers[request - 1]
        return self.push_units


# ── State space ──────────────────────────────────────────────────────────

def qi_index(request: int, indicator: int) -> int:
    """(0,0) -> 0, (m,0) -> 2m-1, (m,1) -> 2m."""
    return 0 if request == 0 else 2 * request - 1 + indicator


def qi_pair(qi: int) -> tuple[int, int]:
    if qi == 0:
        return 0, 0
    return (qi + 1) // 2, (qi + 1) % 2


@dataclass(frozen=True)
class StateSpace:
    """Enumerated states in lexicographic (E, (Q,I), C) order.

    index = (E * (2M+1) + qi) * (N+1) + C with qi from ``qi_index``.
    """
    battery_units: int
    classes: int
    contents: int

    @property
    def n_qi(self) -> int:
        return 2 * self.classes + 1

    @property
    def n_pushed(self) -> int:
        return self.contents + 1

    @property
    def size(self) -> int:
        return (self.battery_units + 1) * self.n_qi * self.n_pushed

    def index(self, state: SystemState) -> int:
        self.validate(state)
        qi = qi_index(state.request, state.indicator)
        return (state.energy * self.n_qi + qi) * self.n_pushed + state.pushed

    def state(self, index: int) -> SystemState:
        if not 0 <= index < self.size:
            raise ValueError(f"state index {index} out of range [0, {self.size})")
        rest, c = divmod(index, self.n_pushed)
        e, qi = divmod(rest, self.n_qi)
        q, i = qi_pair(qi)
        return SystemState(e, q, i, c)

    def validate(self, state: SystemState) -> None:
        if not 0 <= state.energy <= self.battery_units:
            raise ValueError(f"energy {state.energy} outside [0, {self.battery_units}]")
        if not 0 <= state.request <= self.classes:
            raise ValueError(f"request class {state.request} outside [0, {self.classes}]")
        if state.indicator not in (0, 1) or (state.request == 0 and state.indicator):
            raise ValueError(f"indicator {state.indicator} invalid for request {state.request}")
        if not 0 <= state.pushed <= self.contents:
            raise ValueError(f"pushed count {state.pushed} outside [0, {self.contents}]")

    @cached_property
    def arrays(self) -> tuple[NDArray[np.int64], NDArray[np.int64], NDArray[np.int64], NDArray[np.int64]]:
        """(E, Q, I, C) per state index."""
        idx = np.arange(self.size)
        rest, c = np.divmod(idx, self.n_pushed)
        e, qi = np.divmod(rest, self.n_qi)
        q = (qi + 1) // 2
        i = np.where(qi == 0, 0, (qi + 1) % 2)
        return e, q, i, c

    def ec_index(self) -> NDArray[np.int64]:
        """Index of each state's (E, C) pair in the lumped chain."""
        e, _, _, c = self.arrays
        return e * self.n_pushed + c

    def __iter__(self):
        return (self.state(k) for k in range(self.size))


def enumerate_states(params: ModelParams) -> list[SystemState]:
    return list(params.space)


def feasible_actions(state: SystemState, params: ModelParams) -> tuple[Action, ...]:
    actions = [Action.SLEEP]
    if state.request > 0 and state.energy >= params.grid.multipliers[state.request - 1]:
        actions.append(Action.UNICAST)
    if state.energy >= params.push_units and state.pushed < params.n_contents:
        actions.append(Action.PUSH)
    return tuple(actions)


def stage_cost(state: SystemState, action: Action) -> int:
    """1 when the slot's request goes unserved."""
    return int(state.request > 0 and action != Action.UNICAST and state.indicator * action == 0)


def feasibility_mask(params: ModelParams) -> NDArray[np.bool_]:
    """(n_states, 3) table of feasible actions."""
    e, q, _, c = params.space.arrays
    l = np.concatenate([[0], np.asarray(params.grid.multipliers)])
    mask = np.zeros((params.space.size, 3), dtype=bool)
    mask[:, Action.SLEEP] = True
    mask[:, Action.UNICAST] = (q > 0) & (e >= l[q])
    mask[:, Action.PUSH] = (e >= params.push_units) & (c < params.n_contents)
    return mask


def cost_table(params: ModelParams) -> NDArray[np.float64]:
    """(n_states, 3) stage costs, infeasible entries included."""
    _, q, i, _ = params.space.arrays
    cost = np.zeros((params.space.size, 3))
    has = q > 0
    cost[:, Action.SLEEP] = has
    cost[:, Action.PUSH] = has & (i == 0)
    return cost

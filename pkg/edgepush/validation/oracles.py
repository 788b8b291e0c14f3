"""Brute-force references for small scenarios.

The kernel here is built by enumerating the elementary events of a slot
(arrival, eviction, request rank, user class) one by one, without any of
the factor tables in ``edgepush.core.kernel``. Policies are enumerated
exhaustively, so only use this on a handful of states.
"""

from __future__ import annotations

import itertools
import logging
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from edgepush.core.channel import DistanceGrid
from edgepush.core.content import Catalog
from edgepush.core.model import ModelParams, feasible_actions, stage_cost
from edgepush.core.types import Action, SystemState

logger = logging.getLogger(__name__)

MAX_POLICIES = 100_000


def micro_params(
    battery_units: int = 1,
    classes: int = 1,
    contents: int = 1,
    push_units: int | None = None,
    request_prob: float = 0.6,
    update_prob: float = 0.3,
    skew: float = 1.0,
    arrival_pmf=(0.5, 0.5),
) -> ModelParams:
    """A tiny scenario on a unit grid; no channel calibration involved."""
    grid = DistanceGrid(
        boundaries=tuple(float(m) for m in range(1, classes + 1)),
        multipliers=tuple(range(1, classes + 1)),
        unit_energy=1.0,
        mode="paper",
    )
    return ModelParams(
        battery_units=battery_units,
        push_units=classes if push_units is None else push_units,
        request_prob=request_prob,
        catalog=Catalog(contents, skew, update_prob),
        grid=grid,
        arrival_pmf=np.asarray(arrival_pmf, dtype=np.float64),
    )


def brute_force_transition(state: SystemState, action: Action, params: ModelParams) -> dict[SystemState, float]:
    """Next-state pmf by enumerating (arrival, evicted rank, request rank, class)."""
    action = Action(action)
    if action not in feasible_actions(state, params):
        raise ValueError(f"{action.name} infeasible at {state}")
    n = params.n_contents
    spend = params.spend(state.request, action)
    f = params.catalog.popularity
    frac = params.grid.annulus_fractions

    # rank 0 stands for "nothing evicted" / "no request"
    evictions = [(0, 1.0 - params.update_prob)] + [(j, params.update_prob / n) for j in range(1, n + 1)]
    requests = [(0, 1.0 - params.request_prob)] + [(i, params.request_prob * f[i - 1]) for i in range(1, n + 1)]

    out: dict[SystemState, float] = defaultdict(float)
    for a, pa in enumerate(params.arrival_pmf):
        e2 = min(params.battery_units, state.energy - spend + a)
        for j, pj in evictions:
            c = state.pushed
            hit = 1 <= j <= c
            if action == Action.PUSH:
                c2 = c if hit else c + 1
            else:
                c2 = c - 1 if hit else c
            for i, pi in requests:
                if i == 0 or i <= c2:
                    p = pa * pj * pi
                    if p > 0:
                        out[SystemState(e2, 0, 0, c2)] += p
                    continue
                for m, pm in enumerate(frac, start=1):
                    p = pa * pj * pi * pm
                    if p > 0:
                        out[SystemState(e2, m, int(i == c2 + 1), c2)] += p
    return dict(out)


def brute_force_matrix(params: ModelParams, actions) -> NDArray[np.float64]:
    """Dense transition matrix of a policy via ``brute_force_transition``."""
    space = params.space
    chain = np.zeros((space.size, space.size))
    for k, x in enumerate(space):
        for y, p in brute_force_transition(x, Action(int(actions[k])), params).items():
            chain[k, space.index(y)] += p
    return chain


def long_run_cost(chain: NDArray[np.float64], cost: NDArray[np.float64], start: int = 0, power: int = 2 ** 20) -> float:
    """Average cost from ``start`` as the row of a high power of (I + P)/2."""
    damped = 0.5 * (np.eye(chain.shape[0]) + chain)
    limit = np.linalg.matrix_power(damped, power)
    return float(limit[start] @ cost)


def enumerate_policies(params: ModelParams):
    """Every deterministic stationary policy, as int8 action vectors."""
    choices = [tuple(int(u) for u in feasible_actions(x, params)) for x in params.space]
    count = int(np.prod([len(c) for c in choices], dtype=np.float64))
    if count > MAX_POLICIES:
        raise ValueError(f"{count} policies is too many to enumerate (limit {MAX_POLICIES})")
    for combo in itertools.product(*choices):
        yield np.asarray(combo, dtype=np.int8)


@dataclass
class ExhaustiveResult:
    optimum: float
    minimizers: list[NDArray[np.int8]] = field(default_factory=list)
    values: list[float] = field(default_factory=list)


def exhaustive_optimum(params: ModelParams, start: int = 0, tol: float = 1e-10) -> ExhaustiveResult:
    """Minimum long-run blocking over all stationary policies."""
    space = params.space
    values: list[float] = []
    policies: list[NDArray[np.int8]] = []
    for actions in enumerate_policies(params):
        cost = np.array([stage_cost(x, Action(int(u))) for x, u in zip(space, actions)], dtype=np.float64)
        values.append(long_run_cost(brute_force_matrix(params, actions), cost, start))
        policies.append(actions)
    best = min(values)
    winners = [p for p, v in zip(policies, values) if v <= best + tol]
    logger.info("Enumerated %d policies: optimum %.10f (%d minimizers)", len(values), best, len(winners))
    return ExhaustiveResult(best, winners, values)

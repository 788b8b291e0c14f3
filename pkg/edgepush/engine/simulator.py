"""Seeded Monte Carlo execution of the slotted system.

Slot order: the policy acts on x_k and the stage cost is charged; energy
arrives and the battery is clipped at E_max; one content may be replaced
(and the push lands); the next request is drawn given the new pushed
count. Every slot consumes exactly three uniforms from numpy's PCG64
generator, in that order, so a seed fixes the trajectory bit for bit.
"""

from __future__ import annotations

import logging
import math
import time
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from edgepush.core.errors import InfeasibleActionError
from edgepush.core.kernel import request_transition
from edgepush.core.model import ModelParams, feasible_actions, qi_index, qi_pair, stage_cost
from edgepush.core.types import Action, BlockingReport, Provenance, SystemState
from edgepush.policies.base import StationaryPolicy

logger = logging.getLogger(__name__)

DRAW_BLOCK = 65_536


def _cdf(pmf) -> list[float]:
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0
    return cdf.tolist()


class SlotSampler:
    """Inverse-CDF tables for one scenario."""

    def __init__(self, params: ModelParams) -> None:
        self.params = params
        self.arrival_cdf = _cdf(params.arrival_pmf)
        self.request_cdf = [_cdf(request_transition(c, params)) for c in range(params.n_contents + 1)]
        self.cost = (0, *params.grid.multipliers)

    def advance(self, e: int, q: int, c: int, action: int, u_a: float, u_c: float, u_r: float) -> tuple[int, int, int]:
        """(E', qi', C') after one slot; the action must be feasible."""
        p = self.params
        spend = 0 if action == 0 else (self.cost[q] if action == 1 else p.push_units)
        e = min(p.battery_units, e - spend + bisect_right(self.arrival_cdf, u_a))
        evicted = u_c < p.update_prob * c / p.n_contents
        if action == 2:
            c = c if evicted else c + 1
        elif evicted:
            c -= 1
        return e, bisect_right(self.request_cdf[c], u_r), c


@lru_cache(maxsize=8)
def _sampler(params: ModelParams) -> SlotSampler:
    return SlotSampler(params)


def step(state: SystemState, action: Action, rng: np.random.Generator, params: ModelParams) -> tuple[SystemState, int]:
    """Sample the next state and return it with the stage cost."""
    action = Action(action)
    if action not in feasible_actions(state, params):
        raise InfeasibleActionError(f"{action.name} infeasible at {state}", state=state, action=action)
    u_a, u_c, u_r = rng.random(3)
    e, qi, c = _sampler(params).advance(state.energy, state.request, state.pushed, int(action), u_a, u_c, u_r)
    q, i = qi_pair(qi)
    return SystemState(e, q, i, c), stage_cost(state, action)


@dataclass
class SimConfig:
    params: ModelParams
    policy: StationaryPolicy
    slots: int = 1_000_000
    warmup: int = 10_000
    seed: int = 0
    initial: SystemState = field(default_factory=lambda: SystemState(0, 0, 0, 0))
    batches: int = 50
    keep_trace: bool = False

    def __post_init__(self) -> None:
        if not self.slots > self.warmup >= 0:
            raise ValueError(f"need slots > warmup >= 0, got slots={self.slots}, warmup={self.warmup}")
        if self.batches < 2:
            raise ValueError(f"batches must be >= 2, got {self.batches}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        self.params.space.validate(self.initial)


@dataclass(frozen=True)
class SimReport:
    """Counts over the slots after warm-up.

    blocking is blocked / counted slots; per_request_blocking divides by
    the slots that carried a request instead. ci_radius is 1.96 times the
    larger of the binomial and batch-means standard errors.
    """
    blocked: int
    counted_slots: int
    requests: int
    blocking: float
    per_request_blocking: float
    action_frequencies: tuple[float, float, float]
    mean_battery: float
    binomial_sigma: float
    batch_sigma: float
    ci_radius: float
    seed: int
    trace: tuple[tuple[int, int, int, int, int, int], ...] | None = None

    def to_report(self) -> BlockingReport:
        return BlockingReport(
            self.blocking, Provenance.MONTE_CARLO, self.counted_slots, self.ci_radius,
            metadata={
                "seed": self.seed,
                "per_request_blocking": self.per_request_blocking,
                "action_frequencies": self.action_frequencies,
                "mean_battery": self.mean_battery,
                "binomial_sigma": self.binomial_sigma,
                "batch_sigma": self.batch_sigma,
            },
        )


def run(config: SimConfig) -> SimReport:
    p = config.params
    config.policy.validate(p)
    sampler = _sampler(p)
    actions = config.policy.actions.tolist()
    n_qi, n_c = p.space.n_qi, p.space.n_pushed
    pairs = [qi_pair(k) for k in range(n_qi)]

    counted = config.slots - config.warmup
    n_batches = min(config.batches, counted)
    batch_blocked = [0] * n_batches
    blocked = requests = battery = 0
    act_counts = [0, 0, 0]
    trace: list[tuple[int, int, int, int, int, int]] = []

    x0 = config.initial
    e, qi, c = x0.energy, qi_index(x0.request, x0.indicator), x0.pushed
    rng = np.random.default_rng(config.seed)
    t0 = time.perf_counter()
    k = 0
    while k < config.slots:
        draws = rng.random((min(DRAW_BLOCK, config.slots - k), 3)).tolist()
        for u_a, u_c, u_r in draws:
            q, ind = pairs[qi]
            a = actions[(e * n_qi + qi) * n_c + c]
            if k >= config.warmup:
                t = k - config.warmup
                cost = q > 0 and a != 1 and not (ind and a == 2)
                if cost:
                    blocked += 1
                    batch_blocked[t * n_batches // counted] += 1
                requests += q > 0
                battery += e
                act_counts[a] += 1
                if config.keep_trace:
                    trace.append((e, q, ind, c, a, int(cost)))
            e, qi, c = sampler.advance(e, q, c, a, u_a, u_c, u_r)
            k += 1

    blocking = blocked / counted
    binomial = math.sqrt(blocking * (1.0 - blocking) / counted)
    sizes = np.bincount(np.arange(counted) * n_batches // counted, minlength=n_batches)
    rates = np.asarray(batch_blocked) / sizes
    batch = float(np.std(rates, ddof=1) / math.sqrt(n_batches)) if n_batches > 1 else 0.0
    report = SimReport(
        blocked=blocked,
        counted_slots=counted,
        requests=requests,
        blocking=blocking,
        per_request_blocking=blocked / requests if requests else 0.0,
        action_frequencies=tuple(n / counted for n in act_counts),
        mean_battery=battery / counted,
        binomial_sigma=binomial,
        batch_sigma=batch,
        ci_radius=1.96 * max(binomial, batch),
        seed=config.seed,
        trace=tuple(trace) if config.keep_trace else None,
    )
    logger.info(
        "Simulated %s: %d slots (%d counted) blocking=%.5f +- %.5f in %.1fs",
        config.policy.label or "policy", config.slots, counted, blocking,
        report.ci_radius, time.perf_counter() - t0,
    )
    return report

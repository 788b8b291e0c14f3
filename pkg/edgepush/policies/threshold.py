"""Threshold policies and their infinite-battery closed forms.

All energies are in grid units; arrival_mean is the mean harvest per
slot in the same units.

    POTB   push the C_PO most popular contents, never unicast
    APTB   push everything (threshold N), never unicast
    EETB   push up to the break-even rank, unicast near users with what is left
    GOTB   scan every push threshold up to C_PO with the EETB predictor
    SOD    service on demand, unicast whenever the battery allows
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from edgepush.core.channel import mean_unicast_energy
from edgepush.core.content import head_mass
from edgepush.core.errors import PreconditionError
from edgepush.core.model import ModelParams
from edgepush.core.types import Action, PolicyKind
from edgepush.policies.base import PolicyRule, StationaryPolicy

logger = logging.getLogger(__name__)

BUDGET_RTOL = 1e-12


def _floor(x: float) -> int:
    # absorbs representation error when x is an integer in exact arithmetic
    return math.floor(x + 1e-9 * max(1.0, abs(x)))


@dataclass(frozen=True, slots=True)
class ThresholdPolicySpec:
    """A threshold policy and what the closed forms say about it.

    m_thr is the unicast class cutoff: classes 1..m_thr are served, so the
    distance cutoff is d_{m_thr} (0 when m_thr = 0). predicted is the
    infinite-battery blocking, None when no closed form applies.
    """
    kind: PolicyKind
    c_thr: int
    m_thr: int = 0
    eta: float = 0.0
    predicted: float | None = None

    def __post_init__(self) -> None:
        if self.c_thr < 0 or self.m_thr < 0:
            raise ValueError(f"thresholds must be >= 0, got c_thr={self.c_thr}, m_thr={self.m_thr}")
        if not -1e-12 <= self.eta <= 1 + 1e-12:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")

    def distance_cutoff(self, params: ModelParams) -> float:
        return params.grid.class_boundary(self.m_thr)

    def planned_load(self, params: ModelParams) -> float:
        """Share of the mean harvest this rule spends when the battery never runs dry."""
        grid = params.grid
        unicast = float(np.dot(grid.multipliers[: self.m_thr], grid.annulus_fractions[: self.m_thr]))
        spend = push_budget(self.c_thr, params) + self.eta * unicast
        if params.arrival_mean <= 0:
            return math.inf if spend > 0 else 0.0
        return spend / params.arrival_mean


# ── Closed forms ─────────────────────────────────────────────────────────

def lemma1_push_probability(c_thr: int, update_prob: float, n: int) -> float:
    """Long-run push rate of a push-threshold policy with unlimited energy."""
    if not 0 <= c_thr <= n:
        raise ValueError(f"c_thr must lie in [0, {n}], got {c_thr}")
    return update_prob * c_thr / (n + update_prob)


def lemma2_lower_bound(c_thr: int, params: ModelParams) -> float:
    """Blocking floor of any policy that pushes up to c_thr and serves the rest."""
    push = lemma1_push_probability(c_thr, params.update_prob, params.n_contents)
    return push * params.request_prob * (1.0 - head_mass(params.catalog, c_thr))


def push_budget(c_thr: int, params: ModelParams) -> float:
    """Mean energy units per slot spent on pushing up to c_thr."""
    return lemma1_push_probability(c_thr, params.update_prob, params.n_contents) * params.push_units


def unicast_rate(c_thr: int, params: ModelParams) -> float:
    """Probability a slot carries a request the pushed set does not cover."""
    push = lemma1_push_probability(c_thr, params.update_prob, params.n_contents)
    return (1.0 - push) * params.request_prob * (1.0 - head_mass(params.catalog, c_thr))


def potb_threshold(params: ModelParams) -> int:
    """Largest push threshold whose mean push energy fits the mean harvest."""
    n, p_c = params.n_contents, params.update_prob
    if params.push_units <= 0:
        raise ValueError("push_units must be > 0")
    if p_c == 0:
        return n
    return min(n, _floor((n + p_c) * params.arrival_mean / (p_c * params.push_units)))


def theorem1_blocking(params: ModelParams) -> float:
    return params.request_prob * (1.0 - head_mass(params.catalog, potb_threshold(params)))


def aptb_blocking(params: ModelParams) -> float | None:
    """0 when the harvest funds pushing the whole catalog, else no closed form."""
    if params.arrival_mean >= push_budget(params.n_contents, params) * (1 - BUDGET_RTOL):
        return 0.0
    return None


def lemma3_ee_threshold(params: ModelParams) -> int:
    """Largest rank whose push costs no more than the unicasts it saves."""
    n, p_c, p_u = params.n_contents, params.update_prob, params.request_prob
    e_u = mean_unicast_energy(params.grid)
    if p_u == 0:
        return 0
    if p_c == 0:
        return n
    cat = params.catalog
    if cat.skew > 0:
        x = n * p_u * e_u / (p_c * params.push_units * cat.harmonic)
        return min(n, _floor(x ** (1.0 / cat.skew)))
    saved = (n / p_c) * p_u * cat.popularity * e_u
    return int(np.count_nonzero(params.push_units <= saved * (1 + BUDGET_RTOL)))


def eetb_dtilde(params: ModelParams, c_thr: int) -> tuple[int, float]:
    """(m_thr, eta): the widest unicast class set the leftover energy pays for."""
    m = params.n_classes
    eta = unicast_rate(c_thr, params)
    if eta <= 0:
        return m, 0.0
    spare = max(0.0, params.arrival_mean - push_budget(c_thr, params)) / eta
    cap = min(mean_unicast_energy(params.grid), spare)
    cost = np.cumsum(np.asarray(params.grid.multipliers) * params.grid.annulus_fractions)
    served = int(np.count_nonzero(cost <= cap + BUDGET_RTOL * max(1.0, cap)))
    return served, eta


def _predicted(params: ModelParams, c_thr: int) -> tuple[float, int, float]:
    m_thr, eta = eetb_dtilde(params, c_thr)
    covered = (params.grid.class_boundary(m_thr) / params.grid.radius) ** 2
    return lemma2_lower_bound(c_thr, params) + eta * (1.0 - covered), m_thr, eta


def theorem2_blocking(params: ModelParams, c_thr: int | None = None) -> float:
    """EETB infinite-battery blocking; c_thr defaults to the break-even rank."""
    c = lemma3_ee_threshold(params) if c_thr is None else c_thr
    if params.arrival_mean < push_budget(c, params) * (1 - BUDGET_RTOL):
        raise PreconditionError(
            f"harvest {params.arrival_mean:.6g} units/slot cannot fund pushing {c} contents "
            f"({push_budget(c, params):.6g} units/slot); EETB degenerates to APTB"
        )
    return _predicted(params, c)[0]


# ── Specs ────────────────────────────────────────────────────────────────

def potb_spec(params: ModelParams) -> ThresholdPolicySpec:
    return ThresholdPolicySpec(PolicyKind.POTB, potb_threshold(params), 0, 0.0, theorem1_blocking(params))


def aptb_spec(params: ModelParams) -> ThresholdPolicySpec:
    return ThresholdPolicySpec(PolicyKind.APTB, params.n_contents, 0, 0.0, aptb_blocking(params))


def eetb_spec(params: ModelParams) -> ThresholdPolicySpec:
    c = lemma3_ee_threshold(params)
    try:
        predicted = theorem2_blocking(params, c)
    except PreconditionError as e:
        logger.info("%s", e)
        return ThresholdPolicySpec(PolicyKind.EETB, params.n_contents, 0, 0.0, aptb_blocking(params))
    m_thr, eta = eetb_dtilde(params, c)
    return ThresholdPolicySpec(PolicyKind.EETB, c, m_thr, eta, predicted)


def gotb_search(params: ModelParams) -> ThresholdPolicySpec:
    """Scan C = 0..C_PO and keep the smallest predicted blocking (first on ties).

    Predictions assume an unlimited battery. The pick is often the largest C
    whose pushes and full unicast service still fit the harvest, so its
    ``planned_load`` runs close to 1 and a finite battery can starve it.
    """
    best: ThresholdPolicySpec | None = None
    for c in range(potb_threshold(params) + 1):
        value, m_thr, eta = _predicted(params, c)
        if best is None or value < best.predicted:
            best = ThresholdPolicySpec(PolicyKind.GOTB, c, m_thr, eta, value)
    logger.debug("GOTB: c_thr=%d m_thr=%d predicted=%.6g", best.c_thr, best.m_thr, best.predicted)
    return best


def service_on_demand_spec(params: ModelParams) -> ThresholdPolicySpec:
    return ThresholdPolicySpec(
        PolicyKind.SERVICE_ON_DEMAND, 0, params.n_classes, unicast_rate(0, params), None,
    )


def best_closed_form(params: ModelParams) -> ThresholdPolicySpec:
    """Whichever of POTB and EETB the closed forms favour."""
    candidates = [s for s in (potb_spec(params), eetb_spec(params)) if s.predicted is not None]
    return min(candidates, key=lambda s: s.predicted)


SPEC_BUILDERS = {
    PolicyKind.POTB: potb_spec,
    PolicyKind.APTB: aptb_spec,
    PolicyKind.EETB: eetb_spec,
    PolicyKind.GOTB: gotb_search,
    PolicyKind.SERVICE_ON_DEMAND: service_on_demand_spec,
}


def make_spec(kind: PolicyKind | str, params: ModelParams) -> ThresholdPolicySpec:
    kind = PolicyKind.parse(kind) if isinstance(kind, str) else kind
    if kind not in SPEC_BUILDERS:
        raise ValueError(f"{kind.value} is not a threshold policy")
    return SPEC_BUILDERS[kind](params)


# ── Rules ────────────────────────────────────────────────────────────────

class PushThresholdRule(PolicyRule):
    """Push while C < c_thr and the battery allows; otherwise sleep."""

    def __init__(self, c_thr: int, label: str = "potb") -> None:
        self.c_thr = c_thr
        self.label = label

    def assign(self, energy, request, indicator, pushed, params) -> NDArray[np.int8]:
        push = (pushed < self.c_thr) & (energy >= params.push_units)
        return np.where(push, Action.PUSH, Action.SLEEP).astype(np.int8)


class EnergyEfficientRule(PolicyRule):
    """Push below c_thr, then unicast classes 1..m_thr when affordable."""

    def __init__(self, c_thr: int, m_thr: int, label: str = "eetb") -> None:
        self.c_thr = c_thr
        self.m_thr = m_thr
        self.label = label

    def assign(self, energy, request, indicator, pushed, params) -> NDArray[np.int8]:
        l = np.concatenate([[0], np.asarray(params.grid.multipliers)])
        pushing = pushed < self.c_thr
        push = pushing & (energy >= params.push_units)
        unicast = ~pushing & (request > 0) & (request <= self.m_thr) & (energy >= l[request])
        out = np.full(energy.shape, Action.SLEEP, dtype=np.int8)
        out[push] = Action.PUSH
        out[unicast] = Action.UNICAST
        return out


class ServiceOnDemandRule(PolicyRule):
    label = "sod"

    def assign(self, energy, request, indicator, pushed, params) -> NDArray[np.int8]:
        l = np.concatenate([[0], np.asarray(params.grid.multipliers)])
        serve = (request > 0) & (energy >= l[request])
        return np.where(serve, Action.UNICAST, Action.SLEEP).astype(np.int8)


def build_policy(spec: ThresholdPolicySpec, params: ModelParams) -> StationaryPolicy:
    if spec.c_thr > params.n_contents:
        raise ValueError(f"c_thr={spec.c_thr} exceeds catalog size {params.n_contents}")
    if spec.m_thr > params.n_classes:
        raise ValueError(f"m_thr={spec.m_thr} exceeds class count {params.n_classes}")
    label = spec.kind.value
    if spec.kind in (PolicyKind.POTB, PolicyKind.APTB):
        rule: PolicyRule = PushThresholdRule(spec.c_thr, label)
    elif spec.kind in (PolicyKind.EETB, PolicyKind.GOTB):
        rule = EnergyEfficientRule(spec.c_thr, spec.m_thr, label)
    elif spec.kind == PolicyKind.SERVICE_ON_DEMAND:
        rule = ServiceOnDemandRule()
    else:
        raise ValueError(f"{spec.kind.value} is not a threshold policy")
    policy = rule.build(params)
    policy.metadata.update(c_thr=spec.c_thr, m_thr=spec.m_thr, eta=spec.eta, predicted=spec.predicted)
    return policy

"""Average-cost policy iteration.

Evaluation solves the Bellman system on the lumped (E, C) chain, where
the unknowns are post-decision values H(E', C') = E[h(x') | E', C'], and
expands back to the full state space exactly:

    lambda + H = R g + (R A) H,   h = g - lambda + A H

Residuals are always checked on the full system.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from edgepush.analysis.markov import closed_classes
from edgepush.core.errors import ConvergenceError, ReducibleChainError
from edgepush.core.kernel import TransitionKernel
from edgepush.core.types import EventType
from edgepush.engine.event_bus import EventBus
from edgepush.policies.base import StationaryPolicy

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-9
TIE_RTOL = 1e-12
LAMBDA_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class EvaluationResult:
    """Average cost and differential values of one policy; h[anchor] = 0."""
    average_cost: float
    differential: NDArray[np.float64]
    anchor: int
    residual: float


@dataclass(frozen=True, slots=True)
class IterationRecord:
    iteration: int
    average_cost: float
    changed: int


@dataclass(frozen=True, eq=False)
class SolveResult:
    policy: StationaryPolicy
    evaluation: EvaluationResult
    trace: list[IterationRecord] = field(default_factory=list)
    bellman_residual: float = 0.0


def solve_average_cost(chain: sp.spmatrix, cost: NDArray[np.float64]) -> tuple[float, NDArray[np.float64]]:
    """lambda and relative values of a unichain reward chain, values[-1] = 0.

    Solves (I - P) v + lambda 1 = cost with the last value pinned. A
    singular system raises MatrixRankWarning as an exception.
    """
    n = chain.shape[0]
    system = (sp.identity(n, format="csc") - sp.csc_matrix(chain)).tocsc()
    system = sp.hstack([system[:, :-1], sp.csc_matrix(np.ones((n, 1)))], format="csc")
    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)
        z = np.atleast_1d(spsolve(system, np.asarray(cost, dtype=np.float64)))
    values = z.copy()
    values[-1] = 0.0
    return float(z[-1]), values


def _reducible(chain: sp.spmatrix, kernel: TransitionKernel, policy: StationaryPolicy) -> Exception:
    classes = closed_classes(chain)
    if len(classes) < 2:
        return ConvergenceError(f"evaluation system for {policy.label or 'policy'} is ill-conditioned")
    n_c = kernel.space.n_pushed
    reps = tuple(divmod(int(cls[0]), n_c) for cls in classes[:2])
    return ReducibleChainError(
        f"policy {policy.label or '?'} induces {len(classes)} closed classes; "
        f"(E, C) = {reps[0]} and {reps[1]} do not communicate",
        states=reps,
    )


def policy_evaluation(policy: StationaryPolicy, kernel: TransitionKernel) -> EvaluationResult:
    actions = kernel.check_actions(policy.actions)
    n = kernel.space.size
    g = kernel.costs[np.arange(n), actions]
    a = kernel.action_factor(actions)
    r = kernel.request_factor
    lumped = (r @ a).tocsc()

    try:
        lam, post = solve_average_cost(lumped, r @ g)
    except MatrixRankWarning:
        raise _reducible(lumped, kernel, policy) from None
    if not (np.isfinite(lam) and np.all(np.isfinite(post))):
        raise _reducible(lumped, kernel, policy)

    h = g - lam + a @ post
    anchor = n - 1
    h -= h[anchor]

    residual = float(np.max(np.abs(lam + h - g - a @ (r @ h))))
    if residual > RESIDUAL_TOL:
        raise _reducible(lumped, kernel, policy)
    return EvaluationResult(lam, h, anchor, residual)


def policy_improvement(
    h: NDArray[np.float64],
    kernel: TransitionKernel,
    incumbent: NDArray | None = None,
) -> StationaryPolicy:
    """Greedy policy for h. Near-ties keep the incumbent, else the lowest action."""
    q = kernel.q_factors(h)
    best = q.min(axis=1)
    near = q <= (best + TIE_RTOL * (1.0 + np.abs(best)))[:, None]
    choice = np.argmax(near, axis=1)
    if incumbent is not None:
        incumbent = np.asarray(incumbent, dtype=np.int64)
        keep = near[np.arange(choice.size), incumbent]
        choice = np.where(keep, incumbent, choice)
    return StationaryPolicy(kernel.space, choice.astype(np.int8), label="greedy")


def bellman_residual(evaluation: EvaluationResult, kernel: TransitionKernel) -> float:
    """max_x |lambda + h(x) - min_u [g + E h]|."""
    q = kernel.q_factors(evaluation.differential)
    return float(np.max(np.abs(evaluation.average_cost + evaluation.differential - q.min(axis=1))))


def policy_iteration(
    kernel: TransitionKernel,
    initial: StationaryPolicy | None = None,
    max_iter: int = 1000,
    bus: EventBus | None = None,
) -> SolveResult:
    """Howard policy iteration from ``initial`` (all-sleep by default).

    Near-ties in improvement keep the current action. Only a state whose
    current action is not among the tied minimizers takes the lowest
    tied action index, the rule ``policy_improvement`` applies alone.
    Raises ConvergenceError when the average cost rises, when
    ``max_iter`` is reached, or when the returned policy fails the
    Bellman residual check.
    """
    policy = initial or StationaryPolicy.all_sleep(kernel.space)
    kernel.check_actions(policy.actions)
    trace: list[IterationRecord] = []

    for it in range(1, max_iter + 1):
        ev = policy_evaluation(policy, kernel)
        if trace and ev.average_cost > trace[-1].average_cost + LAMBDA_TOL:
            raise ConvergenceError(
                f"average cost rose from {trace[-1].average_cost:.12g} "
                f"to {ev.average_cost:.12g} at iteration {it}"
            )
        improved = policy_improvement(ev.differential, kernel, incumbent=policy.actions)
        changed = improved.differs(policy)
        trace.append(IterationRecord(it, ev.average_cost, changed))
        logger.debug("iteration %d: lambda=%.10f changed=%d", it, ev.average_cost, changed)
        if bus is not None:
            bus.emit(EventType.ITERATION, "policy_iteration", {
                "iteration": it, "average_cost": ev.average_cost, "changed": changed,
            })

        if changed == 0:
            res = bellman_residual(ev, kernel)
            if res > RESIDUAL_TOL:
                raise ConvergenceError(
                    f"policy iteration settled after {it} iterations but the Bellman "
                    f"residual {res:.3g} exceeds {RESIDUAL_TOL:.0e}"
                )
            logger.info(
                "Policy iteration converged in %d iterations: lambda=%.8f", it, ev.average_cost,
            )
            optimal = StationaryPolicy(kernel.space, policy.actions, label="optimal")
            return SolveResult(optimal, ev, trace, res)
        policy = improved

    raise ConvergenceError(f"policy iteration did not settle within {max_iter} iterations")

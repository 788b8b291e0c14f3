"""Exact finite-battery evaluation of a stationary policy.

Chains are pruned to the states reachable from a start state, checked for
a single closed class, then solved directly with one balance equation
swapped for normalization. Damped power iteration is the fallback.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray
from scipy.sparse.csgraph import breadth_first_order, connected_components
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from edgepush.core.errors import MultipleRecurrentClassesError
from edgepush.core.kernel import TransitionKernel
from edgepush.core.types import BlockingReport, Provenance

logger = logging.getLogger(__name__)

BALANCE_TOL = 1e-9
POWER_TOL = 1e-12
POWER_MAX_SWEEPS = 10_000_000


def _pattern(chain: sp.spmatrix) -> sp.csr_matrix:
    # graph routines treat stored zeros as edges
    out = sp.csr_matrix(chain, dtype=np.float64, copy=True)
    out.eliminate_zeros()
    return out


@dataclass(frozen=True, eq=False)
class StationaryDistribution:
    probabilities: NDArray[np.float64]
    residual: float
    method: str = "direct"

    def __len__(self) -> int:
        return self.probabilities.size


def closed_classes(chain: sp.spmatrix) -> list[NDArray[np.int64]]:
    """Strongly connected components with no edge leaving them."""
    chain = _pattern(chain)
    n, labels = connected_components(chain, directed=True, connection="strong")
    coo = chain.tocoo()
    live = coo.data > 0
    leaving = labels[coo.row[live]] != labels[coo.col[live]]
    open_labels = np.unique(labels[coo.row[live][leaving]])
    closed = np.setdiff1d(np.arange(n), open_labels)
    return [np.flatnonzero(labels == k) for k in closed]


def _balance_residual(chain: sp.csr_matrix, pi: NDArray[np.float64]) -> float:
    return float(np.max(np.abs(chain.T @ pi - pi))) if pi.size else 0.0


def _direct(chain: sp.csr_matrix) -> NDArray[np.float64]:
    n = chain.shape[0]
    balance = (chain.T - sp.identity(n, format="csr")).tocsr()
    system = sp.vstack([balance[:-1], sp.csr_matrix(np.ones((1, n)))], format="csc")
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", MatrixRankWarning)
        return np.atleast_1d(spsolve(system, rhs))


def power_iteration(chain: sp.spmatrix, tol: float = POWER_TOL, max_sweeps: int = POWER_MAX_SWEEPS) -> NDArray[np.float64]:
    """pi of the damped chain (I + P)/2, which shares P's stationary law."""
    damped = (0.5 * (sp.identity(chain.shape[0], format="csr") + sp.csr_matrix(chain))).T.tocsr()
    pi = np.full(chain.shape[0], 1.0 / chain.shape[0])
    for sweep in range(max_sweeps):
        nxt = damped @ pi
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - pi)) < tol:
            logger.debug("Power iteration settled after %d sweeps", sweep + 1)
            return nxt
        pi = nxt
    logger.warning("Power iteration hit %d sweeps without reaching %.0e", max_sweeps, tol)
    return pi


def stationary_distribution(chain: sp.spmatrix, start: int = 0, tol: float = BALANCE_TOL) -> StationaryDistribution:
    """pi of the chain restricted to states reachable from ``start``.

    Unreachable and transient states get probability 0.
    """
    chain = _pattern(chain)
    n = chain.shape[0]
    reach = np.sort(breadth_first_order(chain, start, directed=True, return_predecessors=False))
    sub = chain[reach][:, reach].tocsr()
    classes = closed_classes(sub)
    if len(classes) > 1:
        a, b = int(reach[classes[0][0]]), int(reach[classes[1][0]])
        raise MultipleRecurrentClassesError(
            f"{len(classes)} recurrent classes reachable from state {start}; "
            f"states {a} and {b} do not communicate",
            states=(a, b),
        )
    logger.debug("Chain pruned to %d of %d states", reach.size, n)

    method = "direct"
    try:
        pi = _direct(sub)
        ok = np.all(np.isfinite(pi))
    except MatrixRankWarning:
        ok = False
    if ok:
        pi = np.where(pi < 0, 0.0, pi)
        pi /= pi.sum()
        ok = _balance_residual(sub, pi) <= tol
    if not ok:
        logger.warning("Direct stationary solve failed on %d states, using power iteration", reach.size)
        pi = power_iteration(sub)
        method = "power"

    full = np.zeros(n)
    full[reach] = pi
    return StationaryDistribution(full, _balance_residual(chain, full), method)


# ── Policy chains ────────────────────────────────────────────────────────

def induced_chain(policy, kernel: TransitionKernel) -> sp.csr_matrix:
    """Full state-space transition matrix of a policy."""
    return kernel.full_matrix(policy.actions)


def lumped_chain(policy, kernel: TransitionKernel) -> sp.csr_matrix:
    """Transition matrix on (E, C) pairs, index E*(N+1)+C."""
    return kernel.lumped_matrix(policy.actions)


def policy_stationary_distribution(policy, kernel: TransitionKernel) -> StationaryDistribution:
    """pi over full states, solved on the (E, C) chain and expanded exactly.

    The start is the empty state (0, 0, 0, 0), lumped index 0.
    """
    a = kernel.action_factor(policy.actions)
    r = kernel.request_factor
    lumped = stationary_distribution((r @ a).tocsr(), start=0)
    pi = r.T @ lumped.probabilities
    residual = float(np.max(np.abs(r.T @ (a.T @ pi) - pi)))
    return StationaryDistribution(pi, residual, lumped.method)


def blocking_probability(policy, pi: StationaryDistribution | NDArray, kernel: TransitionKernel) -> float:
    """sum_x pi(x) g(x, mu(x))."""
    p = pi.probabilities if isinstance(pi, StationaryDistribution) else np.asarray(pi)
    g = kernel.costs[np.arange(kernel.space.size), policy.actions]
    return float(np.clip(np.dot(p, g), 0.0, 1.0))


def analyze_policy(policy, kernel: TransitionKernel) -> BlockingReport:
    pi = policy_stationary_distribution(policy, kernel)
    value = blocking_probability(policy, pi, kernel)
    e = kernel.space.arrays[0]
    freqs = policy.frequencies(pi.probabilities)
    logger.info("FSMC %s: blocking=%.6f (residual %.1e)", policy.label or "policy", value, pi.residual)
    return BlockingReport(
        value, Provenance.FSMC,
        metadata={
            "residual": pi.residual,
            "method": pi.method,
            "action_frequencies": tuple(float(f) for f in freqs),
            "mean_battery": float(np.dot(pi.probabilities, e)),
        },
    )

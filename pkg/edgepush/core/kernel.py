"""Transition kernel p(x'|x,u) as a product of three factors.

    energy    E' = min(E_max, E - spend + A),  A ~ arrival pmf
    pushed    C' after one possible eviction (and the push, if any)
    request   (Q', I') given C'

Because (Q', I') depends only on C', any stationary policy induces a
Markov chain on the (E, C) pairs alone. The kernel exposes the two halves
of that factorization: ``action_factor`` (state -> (E', C')) and
``request_factor`` ((E', C') -> state). The full chain is A @ R and the
lumped chain is R @ A.
"""

from __future__ import annotations

import logging
from collections import defaultdict

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from edgepush.core.content import head_mass
from edgepush.core.errors import InfeasibleActionError
from edgepush.core.model import (
    ModelParams,
    cost_table,
    feasibility_mask,
    qi_pair,
)
from edgepush.core.types import Action, SystemState

logger = logging.getLogger(__name__)


# ── Factor pmfs ──────────────────────────────────────────────────────────

def _energy_row(base: int, pmf: NDArray[np.float64], e_max: int) -> NDArray[np.float64]:
    """pmf of min(e_max, base + A); overflow lands on the cap."""
    row = np.zeros(e_max + 1)
    room = e_max - base
    k = min(room, pmf.size)
    row[base:base + k] = pmf[:k]
    if room < pmf.size:
        row[e_max] += pmf[room:].sum()
    return row


def energy_transition(energy: int, request: int, action: Action, params: ModelParams) -> NDArray[np.float64]:
    """pmf over next battery level 0..E_max."""
    if action == Action.UNICAST and request < 1:
        raise InfeasibleActionError("unicast without a pending request", action=action)
    spend = params.spend(request, action)
    if spend > energy:
        raise InfeasibleActionError(
            f"{action.name} needs {spend} units, battery holds {energy}", action=action,
        )
    return _energy_row(energy - spend, params.arrival_pmf, params.battery_units)


def push_count_transition(pushed: int, action: Action, params: ModelParams) -> NDArray[np.float64]:
    """pmf over next pushed count 0..N."""
    n = params.n_contents
    if not 0 <= pushed <= n:
        raise ValueError(f"pushed count {pushed} outside [0, {n}]")
    evict = params.update_prob * pushed / n
    row = np.zeros(n + 1)
    if action == Action.PUSH:
        if pushed >= n:
            raise InfeasibleActionError("nothing left to push", action=action)
        row[pushed] += evict
        row[pushed + 1] += 1.0 - evict
    else:
        if pushed > 0:
            row[pushed - 1] += evict
        row[pushed] += 1.0 - evict
    return row


def request_transition(pushed_next: int, params: ModelParams) -> NDArray[np.float64]:
    """pmf over the 2M+1 (Q, I) slots given the next pushed count."""
    n, p_u = params.n_contents, params.request_prob
    if not 0 <= pushed_next <= n:
        raise ValueError(f"pushed count {pushed_next} outside [0, {n}]")
    row = np.zeros(2 * params.n_classes + 1)
    if pushed_next == n or p_u == 0:
        row[0] = 1.0
        return row
    cat = params.catalog
    frac = params.grid.annulus_fractions
    hit_next = cat.rank_popularity(pushed_next + 1)
    miss = max(0.0, 1.0 - head_mass(cat, pushed_next + 1))
    row[0] = (1.0 - p_u) + p_u * head_mass(cat, pushed_next)
    row[2::2] = p_u * hit_next * frac
    row[1::2] = p_u * miss * frac
    return row


def transition(state: SystemState, action: Action, params: ModelParams) -> dict[SystemState, float]:
    """Next-state pmf as a mapping, zero entries omitted."""
    params.space.validate(state)
    action = Action(action)
    pe = energy_transition(state.energy, state.request, action, params)
    pc = push_count_transition(state.pushed, action, params)
    out: dict[SystemState, float] = defaultdict(float)
    for c2 in np.flatnonzero(pc):
        r = request_transition(int(c2), params)
        for e2 in np.flatnonzero(pe):
            for qi in np.flatnonzero(r):
                q, i = qi_pair(int(qi))
                out[SystemState(int(e2), q, i, int(c2))] += pe[e2] * pc[c2] * r[qi]
    return dict(out)


# ── Materialized kernel ──────────────────────────────────────────────────

def _spread(x: sp.csr_matrix, target: NDArray[np.int64], weights: NDArray[np.float64], n_c: int) -> sp.csr_matrix:
    """Map row r of an energy matrix onto (E', target[r]) columns, scaled."""
    counts = np.diff(x.indptr)
    cols = x.indices.astype(np.int64) * n_c + np.repeat(target, counts)
    data = x.data * np.repeat(weights, counts)
    return sp.csr_matrix((data, cols, x.indptr), shape=(x.shape[0], x.shape[1] * n_c))


class TransitionKernel:
    """Sparse factor tables for one ModelParams.

    Everything is built in the constructor; afterwards the object is
    read-only and can be shared between threads.
    """

    def __init__(self, params: ModelParams) -> None:
        self.params = params
        self.space = params.space
        self.feasible = feasibility_mask(params)
        self.costs = cost_table(params)
        e_max = params.battery_units
        n_c = self.space.n_pushed

        self.spends = sorted({0, params.push_units, *params.grid.multipliers})
        self._slot = {s: k for k, s in enumerate(self.spends)}
        self.energy: dict[int, sp.csr_matrix] = {}
        for s in self.spends:
            rows = np.zeros((e_max + 1, e_max + 1))
            for e in range(s, e_max + 1):
                rows[e] = _energy_row(e - s, params.arrival_pmf, e_max)
            self.energy[s] = sp.csr_matrix(rows)
        self._energy_stack = sp.vstack([self.energy[s] for s in self.spends], format="csr")

        stay = np.zeros((n_c, n_c))
        push = np.zeros((n_c, n_c))
        for c in range(n_c):
            stay[c] = push_count_transition(c, Action.SLEEP, params)
            if c < params.n_contents:
                push[c] = push_count_transition(c, Action.PUSH, params)
        self.pushed_stay = sp.csr_matrix(stay)
        self.pushed_push = sp.csr_matrix(push)
        self.requests = np.vstack([request_transition(c, params) for c in range(n_c)])

        e, q, _, c = self.space.arrays
        l = np.concatenate([[0], np.asarray(params.grid.multipliers)])
        slot_of = np.vectorize(self._slot.__getitem__, otypes=[np.int64])
        self._spend_slot = np.empty((self.space.size, 3), dtype=np.int64)
        self._spend_slot[:, Action.SLEEP] = self._slot[0]
        self._spend_slot[:, Action.UNICAST] = slot_of(l[q])
        self._spend_slot[:, Action.PUSH] = self._slot[params.push_units]

        qi = (np.arange(self.space.size) // n_c) % self.space.n_qi
        self.request_factor = sp.csr_matrix(
            (self.requests[c, qi], (self.space.ec_index(), np.arange(self.space.size))),
            shape=(self.n_lumped, self.space.size),
        )
        self.request_factor.eliminate_zeros()
        logger.info(
            "Kernel: %d states (%d lumped), %d arrival atoms, spends %s",
            self.space.size, self.n_lumped, params.arrival_pmf.size, self.spends,
        )

    @property
    def n_lumped(self) -> int:
        return (self.params.battery_units + 1) * self.space.n_pushed

    def check_actions(self, actions: NDArray) -> NDArray[np.int64]:
        actions = np.asarray(actions, dtype=np.int64)
        if actions.shape != (self.space.size,):
            raise ValueError(f"expected {self.space.size} actions, got shape {actions.shape}")
        if actions.min() < 0 or actions.max() > 2:
            raise ValueError("actions must be 0 (sleep), 1 (unicast) or 2 (push)")
        bad = np.flatnonzero(~self.feasible[np.arange(actions.size), actions])
        if bad.size:
            x = self.space.state(int(bad[0]))
            u = Action(int(actions[bad[0]]))
            raise InfeasibleActionError(
                f"{u.name} infeasible at {x} ({bad.size} states affected)", state=x, action=u,
            )
        return actions

    def action_factor(self, actions: NDArray) -> sp.csr_matrix:
        """(n_states x n_lumped) probabilities of (E', C') under the given actions."""
        actions = self.check_actions(actions)
        n_c = self.space.n_pushed
        e, _, _, c = self.space.arrays
        slot = self._spend_slot[np.arange(actions.size), actions]
        x = self._energy_stack[slot * (self.params.battery_units + 1) + e]

        push = actions == Action.PUSH
        evict = self.params.update_prob * c / self.params.n_contents
        low = np.where(push, c, np.maximum(c - 1, 0))
        high = np.where(push, c + 1, c)
        a = _spread(x, low, evict, n_c) + _spread(x, high, 1.0 - evict, n_c)
        a.sum_duplicates()
        a.eliminate_zeros()
        return a.tocsr()

    def full_matrix(self, actions: NDArray) -> sp.csr_matrix:
        return (self.action_factor(actions) @ self.request_factor).tocsr()

    def lumped_matrix(self, actions: NDArray) -> sp.csr_matrix:
        return (self.request_factor @ self.action_factor(actions)).tocsr()

    def row(self, index: int, action: Action) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        """Nonzero (columns, probabilities) of one kernel row."""
        e, q, _, c = (int(a[index]) for a in self.space.arrays)
        action = Action(action)
        if not self.feasible[index, action]:
            raise InfeasibleActionError(
                f"{action.name} infeasible at {self.space.state(index)}",
                state=self.space.state(index), action=action,
            )
        spend = self.params.spend(q, action)
        pe = self.energy[spend][e].toarray().ravel()
        pc = (self.pushed_push if action == Action.PUSH else self.pushed_stay)[c].toarray().ravel()
        joint = np.einsum("e,c,cq->eqc", pe, pc, self.requests).ravel()
        cols = np.flatnonzero(joint)
        return cols, joint[cols]

    def q_factors(self, h: NDArray[np.float64]) -> NDArray[np.float64]:
        """(n_states, 3) g(x,u) + E[h(x') | x, u]; +inf where u is infeasible."""
        e_max = self.params.battery_units
        post = (self.request_factor @ h).reshape(e_max + 1, self.space.n_pushed)
        stay = np.stack([
            (self.pushed_stay @ (self.energy[s] @ post).T).T for s in self.spends
        ])
        pushed = (self.pushed_push @ (self.energy[self.params.push_units] @ post).T).T

        e, _, _, c = self.space.arrays
        idx = np.arange(self.space.size)
        q = np.empty((self.space.size, 3))
        q[:, Action.SLEEP] = stay[self._spend_slot[idx, Action.SLEEP], e, c]
        q[:, Action.UNICAST] = stay[self._spend_slot[idx, Action.UNICAST], e, c]
        q[:, Action.PUSH] = pushed[e, c]
        q += self.costs
        q[~self.feasible] = np.inf
        return q

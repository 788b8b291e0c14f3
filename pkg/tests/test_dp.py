"""Average-cost policy iteration."""

from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from edgepush.analysis.markov import analyze_policy
from edgepush.core.errors import ConvergenceError, ReducibleChainError
from edgepush.core.kernel import TransitionKernel
from edgepush.core.model import stage_cost
from edgepush.core.types import Action, EventType, PolicyKind
from edgepush.engine.event_bus import EventBus
from edgepush.policies.base import StationaryPolicy
from edgepush.policies.dp import (
    bellman_residual,
    policy_evaluation,
    policy_improvement,
    policy_iteration,
    solve_average_cost,
)
from edgepush.policies.threshold import build_policy, make_spec
from edgepush.validation.oracles import brute_force_matrix, exhaustive_optimum, long_run_cost

THRESHOLD_KINDS = ["potb", "aptb", "eetb", "gotb", "sod"]


def test_two_state_toy_chain():
    chain = sp.csr_matrix([[0.5, 0.5], [0.5, 0.5]])
    lam, values = solve_average_cost(chain, np.array([1.0, 0.0]))
    assert lam == pytest.approx(0.5, abs=1e-15)
    np.testing.assert_allclose(values, [1.0, 0.0], atol=1e-15)


def test_costless_system(scenarios):
    kernel = TransitionKernel(scenarios.micro(request_prob=0.0))
    result = policy_iteration(kernel)
    ev = result.evaluation
    assert len(result.trace) <= 2
    assert ev.average_cost == pytest.approx(0.0, abs=1e-15)

    # request states are never entered but still carry their one-slot cost
    _, q, _, _ = kernel.space.arrays
    g = kernel.costs[np.arange(kernel.space.size), result.policy.actions]
    np.testing.assert_allclose(ev.differential[q == 0], 0.0, atol=1e-12)
    np.testing.assert_allclose(ev.differential[q > 0], g[q > 0] - ev.average_cost, atol=1e-12)
    assert g[q > 0].max() == 1.0


def test_anchor_is_last_state(micro):
    kernel = TransitionKernel(micro)
    ev = policy_evaluation(StationaryPolicy.all_sleep(kernel.space), kernel)
    assert ev.anchor == kernel.space.size - 1
    assert ev.differential[ev.anchor] == 0.0
    assert ev.residual < 1e-9
    assert 0.0 <= ev.average_cost <= 1.0


# ── Improvement ──────────────────────────────────────────────────────────

def test_myopic_improvement(paper_kernel, paper_params):
    policy = policy_improvement(np.zeros(paper_kernel.space.size), paper_kernel)
    e, q, i, c = paper_kernel.space.arrays
    a = policy.actions
    assert np.all(a[e == 0] == Action.SLEEP)
    # zero-cost ties among sleep and push resolve to sleep
    assert np.all(a[q == 0] == Action.SLEEP)
    served = (q > 0) & (i == 1) & (e >= paper_params.push_units) & (c < paper_params.n_contents)
    assert served.any()
    assert np.all(a[served] == Action.UNICAST)
    affordable = (q > 0) & (e >= q)
    assert np.all(a[affordable] == Action.UNICAST)


def test_incumbent_survives_ties(paper_kernel, paper_params):
    e, q, _, c = paper_kernel.space.arrays
    pushable = (e >= paper_params.push_units) & (c < paper_params.n_contents)
    incumbent = np.where(pushable, Action.PUSH, Action.SLEEP).astype(np.int8)
    policy = policy_improvement(np.zeros(paper_kernel.space.size), paper_kernel, incumbent=incumbent)
    assert np.all(policy.actions[pushable & (q == 0)] == Action.PUSH)


# ── Iteration ────────────────────────────────────────────────────────────

def test_matches_exhaustive_enumeration(micro):
    kernel = TransitionKernel(micro)
    result = policy_iteration(kernel)
    brute = exhaustive_optimum(micro)
    assert len(brute.values) == 72
    assert result.evaluation.average_cost == pytest.approx(brute.optimum, abs=1e-10)

    cost = np.array([stage_cost(x, Action(int(u))) for x, u in zip(kernel.space, result.policy.actions)])
    achieved = long_run_cost(brute_force_matrix(micro, result.policy.actions), cost)
    assert achieved == pytest.approx(brute.optimum, abs=1e-10)


def test_trace_and_events(micro):
    bus = EventBus()
    seen = []
    bus.subscribe(seen.append, EventType.ITERATION)
    result = policy_iteration(TransitionKernel(micro), bus=bus)
    lams = [r.average_cost for r in result.trace]
    assert all(b <= a + 1e-12 for a, b in zip(lams, lams[1:]))
    assert result.trace[-1].changed == 0
    assert [e.payload["iteration"] for e in seen] == list(range(1, len(lams) + 1))
    assert result.policy.label == "optimal"


def test_restart_from_optimum_keeps_every_action(micro):
    kernel = TransitionKernel(micro)
    first = policy_iteration(kernel)
    again = policy_iteration(kernel, initial=first.policy)
    assert len(again.trace) == 1
    np.testing.assert_array_equal(again.policy.actions, first.policy.actions)


def test_iteration_cap(micro):
    with pytest.raises(ConvergenceError):
        policy_iteration(TransitionKernel(micro), max_iter=1)


def test_residual_above_tolerance_is_not_optimal(micro, monkeypatch):
    monkeypatch.setattr("edgepush.policies.dp.bellman_residual", lambda ev, kernel: 1e-6)
    with pytest.raises(ConvergenceError, match="Bellman residual"):
        policy_iteration(TransitionKernel(micro))


def test_reducible_policy_is_reported(scenarios):
    # no evictions: the pushed count never moves under all-sleep
    params = scenarios.micro(update_prob=0.0)
    kernel = TransitionKernel(params)
    with pytest.raises(ReducibleChainError) as info:
        policy_evaluation(StationaryPolicy.all_sleep(kernel.space), kernel)
    assert len(info.value.states) == 2


@pytest.fixture(scope="module")
def reduced_optimum(reduced_kernel):
    return policy_iteration(reduced_kernel)


def test_reduced_instance_converges(reduced_optimum, reduced_kernel):
    lams = [r.average_cost for r in reduced_optimum.trace]
    assert all(b <= a + 1e-12 for a, b in zip(lams, lams[1:]))
    assert reduced_optimum.bellman_residual < 1e-9
    assert bellman_residual(reduced_optimum.evaluation, reduced_kernel) < 1e-9
    reduced_optimum.policy.validate(reduced_kernel.params)


@pytest.mark.parametrize("kind", THRESHOLD_KINDS)
def test_optimum_dominates_threshold_policies(reduced_optimum, reduced_kernel, reduced_params, kind):
    policy = build_policy(make_spec(kind, reduced_params), reduced_params)
    fsmc = analyze_policy(policy, reduced_kernel).value
    assert reduced_optimum.evaluation.average_cost <= fsmc + 1e-8


@pytest.mark.parametrize("kind", THRESHOLD_KINDS)
def test_evaluation_agrees_with_stationary_analysis(reduced_kernel, reduced_params, kind):
    policy = build_policy(make_spec(kind, reduced_params), reduced_params)
    dp = policy_evaluation(policy, reduced_kernel).average_cost
    assert dp == pytest.approx(analyze_policy(policy, reduced_kernel).value, abs=1e-8)


def test_service_on_demand_on_paper_instance(paper_kernel, paper_params):
    policy = build_policy(make_spec(PolicyKind.SERVICE_ON_DEMAND, paper_params), paper_params)
    dp = policy_evaluation(policy, paper_kernel).average_cost
    assert dp == pytest.approx(analyze_policy(policy, paper_kernel).value, abs=1e-9)

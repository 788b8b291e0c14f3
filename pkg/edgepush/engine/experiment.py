"""Batch driver: sweep one scenario constant and evaluate policies.

Each sweep point is independent and runs in its own worker process when
more than one worker is allowed. Rows come back in sweep order, so the
CSV only depends on the ExperimentSpec.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from edgepush.analysis.markov import analyze_policy
from edgepush.config import SWEEP_AXES, build_model_params, with_sweep_value
from edgepush.core.kernel import TransitionKernel
from edgepush.core.types import EventType, PolicyKind, Provenance
from edgepush.engine.event_bus import EventBus
from edgepush.engine.simulator import SimConfig, run
from edgepush.policies.dp import policy_evaluation, policy_iteration
from edgepush.policies.threshold import build_policy, lemma2_lower_bound, make_spec

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "sweep_param", "sweep_value", "policy", "method", "blocking", "ci_radius",
    "c_thr", "m_thr", "seed", "slots", "eta", "predicted",
    "per_request_blocking", "status", "error",
]
EXTRA_COLUMNS = ["lower_bound", "planned_load", "wall_time"]
INTEGER_COLUMNS = {"c_thr": "Int64", "m_thr": "Int64", "seed": "UInt64", "slots": "Int64"}
# read_csv must keep it as text, so not "n/a" or any other default NA string
NO_CLOSED_FORM = "no-closed-form"

EXACT_TOL = 1e-8
METHOD_PREFERENCE = (Provenance.DP, Provenance.FSMC, Provenance.MONTE_CARLO, Provenance.CLOSED_FORM)


@dataclass
class ExperimentSpec:
    """One sweep. scenario is a config mapping without the experiment section."""
    scenario: dict[str, Any]
    sweep_param: str
    sweep_values: list[float]
    policies: list[PolicyKind | str]
    methods: list[Provenance | str]
    slots: int = 1_000_000
    warmup: int = 10_000
    seed: int = 2024
    dp_state_cap: int = 50_000
    workers: int = 1
    output: Path | None = None

    def __post_init__(self) -> None:
        if self.sweep_param not in SWEEP_AXES:
            raise ValueError(f"Unknown sweep axis: {self.sweep_param!r} (known: {', '.join(SWEEP_AXES)})")
        if not self.sweep_values:
            raise ValueError("sweep_values must not be empty")
        if not self.policies:
            raise ValueError("at least one policy is required")
        if not self.methods:
            raise ValueError("at least one evaluation method is required")
        self.policies = [p if isinstance(p, PolicyKind) else PolicyKind.parse(p) for p in self.policies]
        self.methods = [m if isinstance(m, Provenance) else Provenance.parse(m) for m in self.methods]
        if Provenance.DP in self.methods and PolicyKind.OPTIMAL not in self.policies:
            self.policies.append(PolicyKind.OPTIMAL)
        for v in self.sweep_values:
            self._check_value(float(v))
        if not self.slots > self.warmup >= 0:
            raise ValueError(f"need slots > warmup >= 0, got slots={self.slots}, warmup={self.warmup}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")

    def _check_value(self, v: float) -> None:
        axis = self.sweep_param
        if axis in ("p_c", "p_u") and not 0.0 <= v <= 1.0:
            raise ValueError(f"{axis} values must lie in [0, 1], got {v}")
        if axis == "arrival_mean" and v < 0:
            raise ValueError(f"arrival_mean values must be >= 0, got {v}")
        if axis == "e_max" and (v < 1 or v != int(v)):
            raise ValueError(f"e_max values must be positive integers, got {v}")


def derive_seed(base: int, point: int, policy: int) -> int:
    """Independent 64-bit stream seed per (sweep point, policy)."""
    return int(np.random.SeedSequence([base, point, policy]).generate_state(1, dtype=np.uint64)[0])


def _row(spec: ExperimentSpec, value: float, kind: PolicyKind, method: Provenance) -> dict[str, Any]:
    return {
        "sweep_param": spec.sweep_param, "sweep_value": value, "policy": kind.value,
        "method": method.value, "blocking": None, "ci_radius": None, "c_thr": None,
        "m_thr": None, "seed": None, "slots": None, "eta": None, "predicted": None,
        "per_request_blocking": None, "status": "ok", "error": "",
        "lower_bound": None, "planned_load": None, "wall_time": 0.0,
    }


def _fail(row: dict[str, Any], exc: Exception) -> None:
    row["status"] = "error"
    row["error"] = f"{type(exc).__name__}: {exc}"
    logger.warning(
        "%s=%s %s/%s failed: %s", row["sweep_param"], row["sweep_value"],
        row["policy"], row["method"], row["error"],
    )


def evaluate_point(spec: ExperimentSpec, index: int) -> list[dict[str, Any]]:
    """All rows of one sweep point. Failures are recorded per row."""
    value = spec.sweep_values[index]
    rows = {(k, m): _row(spec, value, k, m) for k in spec.policies for m in spec.methods}
    try:
        params = build_model_params(with_sweep_value(spec.scenario, spec.sweep_param, value))
    except Exception as e:
        for row in rows.values():
            _fail(row, e)
        return list(rows.values())

    big = params.space.size > spec.dp_state_cap
    kernel: TransitionKernel | None = None

    def get_kernel() -> TransitionKernel:
        nonlocal kernel
        if kernel is None:
            kernel = TransitionKernel(params)
        return kernel

    for p_idx, kind in enumerate(spec.policies):
        mine = [rows[(kind, m)] for m in spec.methods]
        optimal_value = None
        try:
            if kind == PolicyKind.OPTIMAL:
                if big:
                    logger.warning(
                        "Skipping DP at %s=%s: %d states above cap %d",
                        spec.sweep_param, value, params.space.size, spec.dp_state_cap,
                    )
                    for row in mine:
                        row["status"] = "skipped"
                        row["error"] = f"state space {params.space.size} > dp_state_cap {spec.dp_state_cap}"
                    continue
                t0 = time.perf_counter()
                solved = policy_iteration(get_kernel())
                policy, optimal_value = solved.policy, solved.evaluation.average_cost
                solve_time = time.perf_counter() - t0
                threshold = None
            else:
                threshold = make_spec(kind, params)
                policy = build_policy(threshold, params)
                solve_time = 0.0
        except Exception as e:
            for row in mine:
                _fail(row, e)
            continue

        for method, row in zip(spec.methods, mine):
            if threshold is not None:
                row.update(
                    c_thr=threshold.c_thr, m_thr=threshold.m_thr, eta=threshold.eta,
                    predicted=threshold.predicted,
                    lower_bound=lemma2_lower_bound(threshold.c_thr, params),
                    planned_load=threshold.planned_load(params),
                )
            t0 = time.perf_counter()
            try:
                if method == Provenance.CLOSED_FORM:
                    if threshold is None or threshold.predicted is None:
                        row["status"] = NO_CLOSED_FORM
                    else:
                        row["blocking"] = threshold.predicted
                elif method == Provenance.FSMC:
                    row["blocking"] = analyze_policy(policy, get_kernel()).value
                elif method == Provenance.MONTE_CARLO:
                    seed = derive_seed(spec.seed, index, p_idx)
                    rep = run(SimConfig(params, policy, spec.slots, spec.warmup, seed))
                    row.update(
                        blocking=rep.blocking, ci_radius=rep.ci_radius, seed=seed,
                        slots=spec.slots, per_request_blocking=rep.per_request_blocking,
                    )
                elif method == Provenance.DP:
                    if big:
                        row["status"] = "skipped"
                        row["error"] = f"state space {params.space.size} > dp_state_cap {spec.dp_state_cap}"
                    elif optimal_value is not None:
                        row["blocking"] = optimal_value
                    else:
                        row["blocking"] = policy_evaluation(policy, get_kernel()).average_cost
            except Exception as e:
                _fail(row, e)
            row["wall_time"] = time.perf_counter() - t0 + (solve_time if method == Provenance.DP else 0.0)
    return list(rows.values())


def run_experiment(spec: ExperimentSpec, bus: EventBus | None = None) -> pd.DataFrame:
    """One row per (sweep value, policy, method), in sweep order."""
    n = len(spec.sweep_values)
    results: list[list[dict[str, Any]] | None] = [None] * n
    t0 = time.perf_counter()
    if spec.workers <= 1 or n == 1:
        for i in range(n):
            results[i] = evaluate_point(spec, i)
            logger.info("Sweep point %d/%d done (%s=%s)", i + 1, n, spec.sweep_param, spec.sweep_values[i])
    else:
        with ProcessPoolExecutor(max_workers=min(spec.workers, n)) as executor:
            futures = {executor.submit(evaluate_point, spec, i): i for i in range(n)}
            for future in as_completed(futures):
                i = futures[future]
                results[i] = future.result()
                logger.info("Sweep point %s=%s done", spec.sweep_param, spec.sweep_values[i])

    rows = [row for point in results for row in point]
    table = pd.DataFrame(rows, columns=CSV_COLUMNS + EXTRA_COLUMNS)
    # nullable integers, or pandas would turn them into floats next to the gaps
    for col, dtype in INTEGER_COLUMNS.items():
        table[col] = pd.array([row[col] for row in rows], dtype=dtype)
    if bus is not None:
        before = bus.failures[EventType.RESULT]
        for row in rows:
            bus.emit(EventType.RESULT, "experiment", row)
        if bus.failures[EventType.RESULT] > before:
            logger.warning("%d RESULT subscriber calls failed", bus.failures[EventType.RESULT] - before)
    failed = int((table["status"] == "error").sum())
    logger.info(
        "Experiment: %d rows (%d failed) in %.1fs", len(table), failed, time.perf_counter() - t0,
    )
    if spec.output is not None:
        write_results(table, spec.output)
    return table


def write_results(table: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table[CSV_COLUMNS].to_csv(path, index=False, float_format="%.12g", lineterminator="\n")
    logger.info("Wrote %d rows to %s", len(table), path)
    return path


# ── Comparison ───────────────────────────────────────────────────────────

@dataclass(frozen=True, slots=True)
class Anomaly:
    sweep_value: float
    rule: str
    policy: str
    detail: str


@dataclass
class ComparisonSummary:
    ranking: pd.DataFrame
    anomalies: list[Anomaly] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.anomalies


def _tolerance(row) -> float:
    if row["method"] == Provenance.MONTE_CARLO.value and row["ci_radius"] is not None and not pd.isna(row["ci_radius"]):
        return 3.0 * float(row["ci_radius"]) / 1.96
    return EXACT_TOL


def _best_rows(group: pd.DataFrame) -> pd.DataFrame:
    """One row per policy: the most exact method that produced a value."""
    order = {m.value: k for k, m in enumerate(METHOD_PREFERENCE)}
    g = group.assign(_pref=group["method"].map(order))
    # closed forms describe an infinite battery; only rank them when nothing else ran
    actual = g[g["method"] != Provenance.CLOSED_FORM.value]
    g = actual if len(actual) else g
    return g.sort_values(["policy", "_pref"]).groupby("policy", sort=False).head(1).drop(columns="_pref")


def _load_note(gotb, other, name: str) -> str:
    loads = (gotb.get("planned_load"), other.get("planned_load"))
    if any(v is None or pd.isna(v) for v in loads):
        return ""
    return f" (planned harvest use: gotb {loads[0]:.0%}, {name} {loads[1]:.0%})"


def compare_report(results: pd.DataFrame, bus: EventBus | None = None) -> ComparisonSummary:
    """Rank policies per sweep value and flag broken dominance relations."""
    ok = results[(results["status"] == "ok") & results["blocking"].notna()]
    ranked: list[pd.DataFrame] = []
    anomalies: list[Anomaly] = []
    for value, group in ok.groupby("sweep_value", sort=False):
        best = _best_rows(group).sort_values(["blocking", "policy"]).reset_index(drop=True)
        best.insert(0, "rank", np.arange(1, len(best) + 1))
        ranked.append(best[["sweep_value", "rank", "policy", "method", "blocking"]])

        rows = {r["policy"]: r for _, r in best.iterrows()}
        opt = rows.get(PolicyKind.OPTIMAL.value)
        gotb = rows.get(PolicyKind.GOTB.value)
        for name, r in rows.items():
            if opt is not None and name != PolicyKind.OPTIMAL.value:
                slack = _tolerance(r) + _tolerance(opt)
                if opt["blocking"] > r["blocking"] + slack:
                    anomalies.append(Anomaly(value, "dp-dominance", name,
                        f"optimal {opt['blocking']:.6g} > {name} {r['blocking']:.6g}"))
            if gotb is not None and name not in (PolicyKind.GOTB.value, PolicyKind.OPTIMAL.value):
                slack = _tolerance(r) + _tolerance(gotb)
                if gotb["blocking"] > r["blocking"] + slack:
                    anomalies.append(Anomaly(value, "gotb-dominance", name,
                        f"gotb {gotb['blocking']:.6g} > {name} {r['blocking']:.6g}" + _load_note(gotb, r, name)))
            floor = r.get("lower_bound")
            if floor is not None and not pd.isna(floor) and r["blocking"] < floor - _tolerance(r):
                anomalies.append(Anomaly(value, "lower-bound", name,
                    f"{name} {r['blocking']:.6g} below push floor {floor:.6g}"))

    for a in anomalies:
        logger.warning("Anomaly at %s: %s (%s)", a.sweep_value, a.rule, a.detail)
        if bus is not None:
            bus.emit(EventType.ANOMALY, "compare_report", {
                "sweep_value": a.sweep_value, "rule": a.rule, "policy": a.policy, "detail": a.detail,
            })
    ranking = pd.concat(ranked, ignore_index=True) if ranked else pd.DataFrame(
        columns=["sweep_value", "rank", "policy", "method", "blocking"])
    return ComparisonSummary(ranking, anomalies)

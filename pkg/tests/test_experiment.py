"""Sweep driver, CSV output and policy comparison."""

from __future__ import annotations

import pandas as pd
import pytest

from edgepush.core.types import EventType, PolicyKind, Provenance
from edgepush.engine.event_bus import EventBus
from edgepush.engine.experiment import (
    CSV_COLUMNS,
    EXTRA_COLUMNS,
    NO_CLOSED_FORM,
    ExperimentSpec,
    compare_report,
    derive_seed,
    run_experiment,
)

# E_max=20, M=3, N=8 through the config builder
SMALL = {
    "grid": {"classes": 3},
    "content": {"catalog_size": 8},
    "model": {"battery_units": 20, "arrival": {"mean": 1.0}},
}


def small_spec(**overrides) -> ExperimentSpec:
    kwargs = dict(
        scenario=SMALL, sweep_param="p_c", sweep_values=[0.2, 0.4],
        policies=["potb", "sod"], methods=["closed-form", "fsmc", "mc"],
        slots=20_000, warmup=1_000, seed=5,
    )
    kwargs.update(overrides)
    return ExperimentSpec(**kwargs)


# ── Spec ─────────────────────────────────────────────────────────────────

def test_spec_parses_names():
    spec = small_spec(policies=["potb", "service-on-demand"], methods=["FSMC", "monte-carlo"])
    assert spec.policies == [PolicyKind.POTB, PolicyKind.SERVICE_ON_DEMAND]
    assert spec.methods == [Provenance.FSMC, Provenance.MONTE_CARLO]


def test_dp_brings_the_optimal_policy():
    spec = small_spec(methods=["fsmc", "dp"])
    assert spec.policies[-1] == PolicyKind.OPTIMAL


@pytest.mark.parametrize("overrides", [
    {"policies": []},
    {"methods": []},
    {"sweep_values": []},
    {"sweep_param": "noise"},
    {"sweep_values": [0.2, 1.5]},
    {"sweep_param": "e_max", "sweep_values": [10, 2.5]},
    {"sweep_param": "arrival_mean", "sweep_values": [-1.0]},
    {"slots": 100, "warmup": 100},
    {"workers": 0},
    {"policies": ["potb", "lru"]},
])
def test_spec_validation(overrides):
    with pytest.raises(ValueError):
        small_spec(**overrides)


def test_derived_seeds():
    assert derive_seed(5, 0, 1) == derive_seed(5, 0, 1)
    seeds = {derive_seed(5, i, j) for i in range(4) for j in range(4)}
    assert len(seeds) == 16
    assert all(0 <= s < 2 ** 64 for s in seeds)


# ── Runs ─────────────────────────────────────────────────────────────────

@pytest.fixture(scope="module")
def small_table():
    return run_experiment(small_spec())


def test_table_layout(small_table):
    assert list(small_table.columns) == CSV_COLUMNS + EXTRA_COLUMNS
    assert len(small_table) == 2 * 2 * 3
    assert small_table["sweep_value"].tolist() == [0.2] * 6 + [0.4] * 6
    assert small_table["policy"].tolist()[:6] == ["potb"] * 3 + ["sod"] * 3
    assert small_table["method"].tolist()[:3] == ["closed-form", "fsmc", "mc"]


def test_row_contents(small_table):
    sod_cf = small_table[(small_table["policy"] == "sod") & (small_table["method"] == "closed-form")]
    assert (sod_cf["status"] == NO_CLOSED_FORM).all()
    assert sod_cf["blocking"].isna().all()

    mc = small_table[small_table["method"] == "mc"]
    assert (mc["status"] == "ok").all()
    assert (mc["slots"] == 20_000).all()
    assert mc["seed"].nunique() == 4
    assert (mc["ci_radius"] > 0).all()
    assert (small_table["planned_load"] > 0).all()

    fsmc = small_table[small_table["method"] == "fsmc"].set_index(["sweep_value", "policy"])["blocking"]
    for (value, policy), row in mc.set_index(["sweep_value", "policy"]).iterrows():
        assert abs(row["blocking"] - fsmc[(value, policy)]) <= 3 * row["ci_radius"] / 1.96 + 5e-3

    potb = small_table[small_table["policy"] == "potb"]
    assert potb["c_thr"].notna().all()
    assert (potb["lower_bound"] >= 0).all()


def test_results_are_published():
    bus = EventBus()
    seen = []
    bus.subscribe(seen.append, EventType.RESULT)
    table = run_experiment(small_spec(methods=["fsmc"], sweep_values=[0.3]), bus=bus)
    assert len(seen) == len(table) == 2
    assert seen[0].payload["policy"] == "potb"


def test_csv_is_reproducible(tmp_path):
    first, second, parallel = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    run_experiment(small_spec(output=first))
    run_experiment(small_spec(output=second))
    run_experiment(small_spec(output=parallel, workers=2))
    text = first.read_bytes()
    assert text.splitlines()[0].decode() == ",".join(CSV_COLUMNS)
    assert len(text.splitlines()) == 1 + 12
    assert second.read_bytes() == text
    assert parallel.read_bytes() == text


def test_status_survives_csv_round_trip(tmp_path):
    path = tmp_path / "sweep.csv"
    table = run_experiment(small_spec(output=path, methods=["closed-form"], sweep_values=[0.3]))
    back = pd.read_csv(path)
    assert back["status"].notna().all()
    assert back["status"].tolist() == table["status"].tolist() == ["ok", NO_CLOSED_FORM]


def test_dp_rows(tmp_path):
    table = run_experiment(small_spec(methods=["fsmc", "dp"], sweep_values=[0.3]))
    assert set(table["policy"]) == {"potb", "sod", "optimal"}
    assert (table["status"] == "ok").all()
    dp = table[table["method"] == "dp"].set_index("policy")["blocking"]
    fsmc = table[table["method"] == "fsmc"].set_index("policy")["blocking"]
    assert dp["optimal"] <= dp["potb"] + 1e-9
    assert dp["optimal"] <= dp["sod"] + 1e-9
    for name in ("potb", "sod"):
        assert dp[name] == pytest.approx(fsmc[name], abs=1e-8)
    assert fsmc["optimal"] == pytest.approx(dp["optimal"], abs=1e-8)


def test_dp_skipped_above_cap():
    table = run_experiment(small_spec(methods=["fsmc", "dp"], sweep_values=[0.3], dp_state_cap=100))
    assert (table.loc[table["policy"] == "optimal", "status"] == "skipped").all()
    dp = table[table["method"] == "dp"]
    assert (dp["status"] == "skipped").all()
    potb_fsmc = table[(table["policy"] == "potb") & (table["method"] == "fsmc")]
    assert (potb_fsmc["status"] == "ok").all()


def test_failed_point_does_not_stop_sweep():
    # a 2-unit battery cannot hold the 3-unit edge unicast
    table = run_experiment(small_spec(sweep_param="e_max", sweep_values=[2, 20], methods=["fsmc"]))
    bad = table[table["sweep_value"] == 2]
    good = table[table["sweep_value"] == 20]
    assert (bad["status"] == "error").all()
    assert bad["error"].str.contains("ValueError").all()
    assert (good["status"] == "ok").all()


# ── Comparison ───────────────────────────────────────────────────────────

def _table(*rows):
    base = {c: None for c in CSV_COLUMNS + EXTRA_COLUMNS}
    out = []
    for policy, method, blocking in rows:
        out.append({**base, "sweep_param": "p_c", "sweep_value": 0.2, "policy": policy,
                    "method": method, "blocking": blocking, "status": "ok", "error": ""})
    return pd.DataFrame(out, columns=CSV_COLUMNS + EXTRA_COLUMNS)


def test_dominance_violation_is_flagged():
    bus = EventBus()
    seen = []
    bus.subscribe(seen.append, EventType.ANOMALY)
    summary = compare_report(_table(("potb", "fsmc", 0.20), ("optimal", "dp", 0.30)), bus=bus)
    assert not summary.clean
    assert [(a.rule, a.policy) for a in summary.anomalies] == [("dp-dominance", "potb")]
    assert seen[0].payload["rule"] == "dp-dominance"
    assert summary.ranking["policy"].tolist() == ["potb", "optimal"]


def test_gotb_anomaly_reports_planned_harvest_use():
    table = _table(("gotb", "fsmc", 0.040), ("eetb", "fsmc", 0.037))
    table["planned_load"] = [0.9735, 0.8913]
    [anomaly] = compare_report(table).anomalies
    assert (anomaly.rule, anomaly.policy) == ("gotb-dominance", "eetb")
    assert anomaly.detail.endswith("(planned harvest use: gotb 97%, eetb 89%)")


def test_consistent_table_is_clean():
    summary = compare_report(_table(
        ("potb", "fsmc", 0.20), ("gotb", "fsmc", 0.12), ("optimal", "dp", 0.10), ("gotb", "closed-form", 0.05),
    ))
    assert summary.clean
    assert summary.ranking["rank"].tolist() == [1, 2, 3]
    assert summary.ranking["method"].tolist() == ["dp", "fsmc", "fsmc"]


def test_single_policy_ranking():
    summary = compare_report(_table(("sod", "mc", 0.4)))
    assert summary.clean
    assert summary.ranking[["rank", "policy"]].values.tolist() == [[1, "sod"]]


def test_monte_carlo_noise_is_tolerated():
    table = _table(("potb", "mc", 0.200), ("optimal", "dp", 0.201))
    table.loc[0, "ci_radius"] = 0.002
    assert compare_report(table).clean

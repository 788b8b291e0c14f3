"""Config loading, presets, overrides and policy files."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from scipy.stats import poisson

from edgepush.config import (
    PRESETS,
    apply_overrides,
    build_experiment_spec,
    build_model_params,
    load_config,
    resolve_config,
    with_sweep_value,
    worker_count,
)
from edgepush.core.types import PolicyKind, Provenance
from edgepush.policies.base import load_policy, save_policy
from edgepush.policies.threshold import build_policy, make_spec

REPO_CONFIG = Path(__file__).resolve().parents[1] / "config.yaml"


# ── Loading ──────────────────────────────────────────────────────────────

def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "nope.yaml")


def test_non_mapping_is_rejected(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_config(path)


def test_empty_file_is_empty_config(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("", encoding="utf-8")
    assert load_config(path) == {}


def test_repository_config_is_paper_default():
    cfg = load_config(REPO_CONFIG)
    assert cfg["preset"] == "paper-v"
    params = build_model_params(cfg)
    default = build_model_params({})
    assert params.space == default.space
    assert params.arrival_mean == default.arrival_mean
    np.testing.assert_array_equal(params.arrival_pmf, default.arrival_pmf)


# ── Presets ──────────────────────────────────────────────────────────────

def test_paper_defaults():
    params = build_model_params({})
    assert params.battery_units == 50
    assert params.push_units == 5
    assert params.grid.multipliers == (1, 2, 3, 4, 5)
    assert params.grid.unit_energy == pytest.approx(0.2, rel=1e-6)
    assert params.n_contents == 20
    assert params.request_prob == 0.9
    assert params.update_prob == 0.2
    assert params.arrival_mean == 1.5
    assert params.arrival_pmf.sum() == pytest.approx(1.0, abs=1e-12)


def test_default_poisson_law_is_exact():
    params = build_model_params({})
    pmf = params.arrival_pmf
    assert pmf.size == 50 + 5 + 1
    k = np.arange(pmf.size - 1)
    np.testing.assert_array_equal(pmf[:-1], poisson.pmf(k, 1.5))
    assert pmf[-1] == poisson.sf(pmf.size - 2, 1.5)

    lumped = build_model_params({"model": {"arrival": {"tail_tol": 1e-15}}})
    assert lumped.arrival_pmf.size < pmf.size
    assert lumped.arrival_pmf.sum() == pytest.approx(1.0, abs=1e-12)


def test_unknown_preset():
    with pytest.raises(ValueError):
        resolve_config({"preset": "fig-9"})


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_every_preset_builds(name):
    spec = build_experiment_spec({"preset": name})
    assert spec.sweep_values
    build_model_params(spec.scenario)


def test_battery_ladder():
    spec = build_experiment_spec({"preset": "battery-ladder"})
    assert spec.sweep_param == "e_max"
    assert spec.sweep_values == [10, 20, 50, 100, 200, 500]
    assert spec.policies == [PolicyKind.POTB, PolicyKind.EETB]
    assert spec.methods == [Provenance.CLOSED_FORM, Provenance.FSMC]
    params = build_model_params(spec.scenario)
    assert params.update_prob == 0.6
    assert params.arrival_mean == 1.0


def test_explicit_keys_beat_preset():
    cfg = resolve_config({"preset": "battery-ladder", "content": {"update_prob": 0.3}})
    assert cfg["content"]["update_prob"] == 0.3
    assert cfg["content"]["catalog_size"] == 20


# ── Overrides ────────────────────────────────────────────────────────────

def test_overrides_parse_as_yaml():
    cfg: dict = {}
    apply_overrides(cfg, [
        "content.update_prob=0.4",
        "experiment.policies=[potb, sod]",
        "model.arrival.kind=deterministic",
        "model.arrival.units=3",
        "preset=arrival-rate",
    ])
    assert cfg["content"]["update_prob"] == 0.4
    assert cfg["experiment"]["policies"] == ["potb", "sod"]
    assert cfg["preset"] == "arrival-rate"
    params = build_model_params(cfg)
    assert params.arrival_pmf.tolist() == [0.0, 0.0, 0.0, 1.0]


@pytest.mark.parametrize("pair", ["content", "=3", "content.update_prob.x=1"])
def test_bad_overrides(pair):
    cfg = {"content": {"update_prob": 0.2}}
    with pytest.raises(ValueError):
        apply_overrides(cfg, [pair])


def test_explicit_pmf_arrivals():
    params = build_model_params({"model": {"arrival": {"kind": "pmf", "pmf": [0.2, 0.5, 0.3]}}})
    assert params.arrival_mean == pytest.approx(1.1)
    with pytest.raises(ValueError):
        build_model_params({"model": {"arrival": {"kind": "pmf"}}})
    with pytest.raises(ValueError):
        build_model_params({"model": {"arrival": {"kind": "solar"}}})


def test_sweep_value_substitution():
    base = {"model": {"battery_units": 50}}
    out = with_sweep_value(base, "e_max", 100.0)
    assert out["model"]["battery_units"] == 100
    assert isinstance(out["model"]["battery_units"], int)
    assert base["model"]["battery_units"] == 50
    assert with_sweep_value({}, "arrival_mean", 2)["model"]["arrival"]["mean"] == 2.0
    with pytest.raises(ValueError):
        with_sweep_value(base, "skew", 1.0)


def test_worker_count(monkeypatch):
    monkeypatch.delenv("EDGEPUSH_WORKERS", raising=False)
    assert worker_count({}) == 1
    monkeypatch.setenv("EDGEPUSH_WORKERS", "3")
    assert worker_count({}) == 3
    assert worker_count({"experiment": {"workers": 2}}) == 2
    monkeypatch.setenv("EDGEPUSH_WORKERS", "many")
    with pytest.raises(ValueError):
        worker_count({})
    with pytest.raises(ValueError):
        worker_count({"experiment": {"workers": 0}})


# ── Policy files ─────────────────────────────────────────────────────────

def test_policy_file_round_trip(tmp_path, reduced_params):
    policy = build_policy(make_spec("eetb", reduced_params), reduced_params)
    path = save_policy(policy, tmp_path / "nested" / "eetb.bin")
    loaded = load_policy(path, reduced_params.space)
    assert loaded.differs(policy) == 0
    assert loaded.label == "eetb"
    header = path.read_bytes().split(b"\nend\n")[0].decode("ascii")
    assert "index (E*(2M+1)+QI)*(N+1)+C" in header


def test_policy_file_dimension_mismatch(tmp_path, reduced_params, paper_params):
    path = save_policy(build_policy(make_spec("sod", reduced_params), reduced_params), tmp_path / "p.bin")
    with pytest.raises(ValueError):
        load_policy(path, paper_params.space)


def test_policy_file_corruption(tmp_path, reduced_params):
    path = save_policy(build_policy(make_spec("sod", reduced_params), reduced_params), tmp_path / "p.bin")
    path.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(ValueError):
        load_policy(path)
    junk = tmp_path / "junk.bin"
    junk.write_bytes(b"hello")
    with pytest.raises(ValueError):
        load_policy(junk)
    with pytest.raises(FileNotFoundError):
        load_policy(tmp_path / "absent.bin")

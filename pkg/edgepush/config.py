"""YAML configuration for edge-push scenarios and experiments.

A config is a mapping with sections channel, grid, content, model and
(optionally) experiment. ``preset`` seeds every key from a named preset;
explicit keys win.

Usage:
    from edgepush.config import load_config, build_model_params
    cfg = load_config("config.yaml")
    params = build_model_params(cfg)
"""

from __future__ import annotations

import copy
import logging
import os
from pathlib import Path
from typing import Any

import yaml

from edgepush.core.channel import ChannelParams, FadingModel, build_distance_grid
from edgepush.core.content import Catalog
from edgepush.core.model import (
    ModelParams,
    deterministic_arrivals,
    explicit_arrivals,
    poisson_arrivals,
)

logger = logging.getLogger(__name__)

WORKERS_ENV = "EDGEPUSH_WORKERS"

PAPER_V: dict[str, Any] = {
    "channel": {
        "bandwidth": 1.0e6,
        "target_rate": 1.0e6,
        "pathloss_gain_db": 10.0,
        "pathloss_exp": 2.0,
        "cell_radius": 50.0,
        "edge_power": 1.0,
        "slot_length": 1.0,
        "fading": {"family": "rayleigh", "mean_gain": 1.0, "shape": 1.0, "nodes": 96},
    },
    "grid": {"classes": 5, "mode": "paper"},
    "content": {"catalog_size": 20, "skew": 1.0, "update_prob": 0.2},
    "model": {
        "battery_units": 50,
        "push_units": None,
        "request_prob": 0.9,
        "arrival": {"kind": "poisson", "mean": 1.5, "tail_tol": 0.0},
    },
    "experiment": {
        "sweep_param": "p_c",
        "sweep_values": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        "policies": ["potb", "aptb", "eetb", "gotb", "sod"],
        "methods": ["closed-form", "fsmc"],
        "slots": 1_000_000,
        "warmup": 10_000,
        "seed": 2024,
        "dp_state_cap": 50_000,
        "output": "results.csv",
    },
}

PRESETS: dict[str, dict[str, Any]] = {
    "paper-v": {},
    # threshold policies against battery size
    "battery-ladder": {
        "content": {"update_prob": 0.6},
        "model": {"request_prob": 0.9, "arrival": {"mean": 1.0}},
        "experiment": {
            "sweep_param": "e_max",
            "sweep_values": [10, 20, 50, 100, 200, 500],
            "policies": ["potb", "eetb"],
        },
    },
    "update-rate": {
        "model": {"request_prob": 0.9, "arrival": {"mean": 1.5}},
        "experiment": {
            "sweep_param": "p_c",
            "sweep_values": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            "methods": ["closed-form", "fsmc", "dp"],
        },
    },
    "arrival-rate": {
        "content": {"update_prob": 0.2},
        "model": {"request_prob": 0.9},
        "experiment": {"sweep_param": "arrival_mean", "sweep_values": [0.5, 1.0, 1.5, 2.0, 2.5]},
    },
    "request-rate": {
        "content": {"update_prob": 0.2},
        "model": {"arrival": {"mean": 0.75}},
        "experiment": {
            "sweep_param": "p_u",
            "sweep_values": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
        },
    },
}

SWEEP_AXES: dict[str, tuple[str, ...]] = {
    "p_c": ("content", "update_prob"),
    "arrival_mean": ("model", "arrival", "mean"),
    "p_u": ("model", "request_prob"),
    "e_max": ("model", "battery_units"),
}


def load_config(path: str | Path) -> dict[str, Any]:
    """Load a YAML config file (UTF-8 encoded)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        cfg = yaml.safe_load(f)
    if cfg is None:
        cfg = {}
    if not isinstance(cfg, dict):
        raise ValueError(f"Config must be a YAML mapping, got {type(cfg).__name__}")
    return cfg


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve_config(cfg: dict[str, Any] | None = None) -> dict[str, Any]:
    """Expand ``preset`` and fill every missing key from the paper-v preset."""
    cfg = dict(cfg or {})
    name = cfg.pop("preset", "paper-v")
    if name not in PRESETS:
        raise ValueError(f"Unknown preset: {name!r} (known: {', '.join(PRESETS)})")
    return _merge(_merge(PAPER_V, PRESETS[name]), cfg)


def apply_overrides(cfg: dict[str, Any], pairs: list[str] | None) -> None:
    """Apply ``section.key=value`` overrides in place; values parse as YAML."""
    for pair in pairs or []:
        key, sep, raw = pair.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"Override must look like section.key=value, got {pair!r}")
        *parents, leaf = key.strip().split(".")
        node = cfg
        for part in parents:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ValueError(f"Cannot override {key}: {part} is not a section")
            node = child
        node[leaf] = yaml.safe_load(raw)
        logger.info("override %s = %r", key.strip(), node[leaf])


def with_sweep_value(cfg: dict[str, Any], axis: str, value: float) -> dict[str, Any]:
    if axis not in SWEEP_AXES:
        raise ValueError(f"Unknown sweep axis: {axis!r} (known: {', '.join(SWEEP_AXES)})")
    out = copy.deepcopy(cfg)
    *parents, leaf = SWEEP_AXES[axis]
    node = out
    for part in parents:
        node = node.setdefault(part, {})
    node[leaf] = int(value) if axis == "e_max" else float(value)
    return out


# ── Builders ─────────────────────────────────────────────────────────────

def build_channel_params(cfg: dict[str, Any]) -> ChannelParams:
    """Build ChannelParams from the 'channel' section, calibrating noise unless given."""
    c = resolve_config(cfg)["channel"]
    f = c.get("fading", {})
    fading = FadingModel(
        family=str(f.get("family", "rayleigh")).lower(),
        mean_gain=float(f.get("mean_gain", 1.0)),
        shape=float(f.get("shape", 1.0)),
        n_nodes=int(f.get("nodes", 96)),
    )
    if c.get("pathloss_gain") is not None:
        gain = float(c["pathloss_gain"])
    else:
        gain = 10.0 ** (float(c.get("pathloss_gain_db", 10.0)) / 10.0)
    common = dict(
        bandwidth=float(c["bandwidth"]),
        target_rate=float(c["target_rate"]),
        pathloss_gain=gain,
        pathloss_exp=float(c["pathloss_exp"]),
        cell_radius=float(c["cell_radius"]),
        edge_power=float(c["edge_power"]),
        slot_length=float(c.get("slot_length", 1.0)),
        fading=fading,
    )
    if c.get("noise_power") is not None:
        return ChannelParams(noise_power=float(c["noise_power"]), **common)
    return ChannelParams.calibrated(**common)


def build_arrivals(model: dict[str, Any], support: int):
    """(pmf, nominal mean) from the 'model.arrival' section."""
    a = model.get("arrival", {})
    kind = str(a.get("kind", "poisson")).lower()
    if kind == "poisson":
        mean = float(a.get("mean", 1.5))
        return poisson_arrivals(mean, support, float(a.get("tail_tol", 0.0))), mean
    if kind == "deterministic":
        units = int(a.get("units", a.get("mean", 0)))
        return deterministic_arrivals(units), float(units)
    if kind == "pmf":
        if not a.get("pmf"):
            raise ValueError("model.arrival.pmf required for kind 'pmf'")
        return explicit_arrivals(a["pmf"]), None
    raise ValueError(f"Unknown arrival kind: {kind!r}")


def build_model_params(cfg: dict[str, Any]) -> ModelParams:
    """Build a full scenario; missing keys come from the paper-v preset."""
    cfg = resolve_config(cfg)
    channel = build_channel_params(cfg)
    g = cfg["grid"]
    grid = build_distance_grid(
        channel, int(g.get("classes", 5)), str(g.get("mode", "paper")), g.get("multipliers"),
    )
    ct = cfg["content"]
    catalog = Catalog(
        size=int(ct.get("catalog_size", 20)),
        skew=float(ct.get("skew", 1.0)),
        update_prob=float(ct.get("update_prob", 0.2)),
    )
    m = cfg["model"]
    push = m.get("push_units")
    push_units = int(push) if push is not None else grid.multipliers[-1]
    battery = int(m.get("battery_units", 50))
    pmf, mean = build_arrivals(m, battery + max(push_units, grid.multipliers[-1]) + 1)
    kwargs = {} if mean is None else {"arrival_mean": mean}
    return ModelParams(
        battery_units=battery,
        push_units=push_units,
        request_prob=float(m.get("request_prob", 0.9)),
        catalog=catalog,
        grid=grid,
        arrival_pmf=pmf,
        **kwargs,
    )


def worker_count(cfg: dict[str, Any]) -> int:
    """experiment.workers, else $EDGEPUSH_WORKERS, else 1."""
    value = cfg.get("experiment", {}).get("workers")
    if value is None:
        value = os.environ.get(WORKERS_ENV, 1)
    try:
        workers = int(value)
    except (TypeError, ValueError):
        raise ValueError(f"worker count must be an integer, got {value!r}") from None
    if workers < 1:
        raise ValueError(f"worker count must be >= 1, got {workers}")
    return workers


def build_experiment_spec(cfg: dict[str, Any]):
    """Build an ExperimentSpec from the resolved config."""
    from edgepush.engine.experiment import ExperimentSpec

    cfg = resolve_config(cfg)
    e = cfg["experiment"]
    scenario = {k: v for k, v in cfg.items() if k != "experiment"}
    output = e.get("output")
    return ExperimentSpec(
        scenario=scenario,
        sweep_param=str(e.get("sweep_param", "p_c")),
        sweep_values=list(e.get("sweep_values") or []),
        policies=list(e.get("policies") or []),
        methods=list(e.get("methods") or []),
        slots=int(e.get("slots", 1_000_000)),
        warmup=int(e.get("warmup", 10_000)),
        seed=int(e.get("seed", 2024)),
        dp_state_cap=int(e.get("dp_state_cap", 50_000)),
        workers=worker_count(cfg),
        output=Path(output) if output else None,
    )

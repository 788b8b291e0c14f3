#!/usr/bin/env python3
"""edge-push command line.

Usage:
    python run.py -c config.yaml thresholds             # closed-form quantities
    python run.py -c config.yaml solve -o policy.bin    # optimal policy by policy iteration
    python run.py -c config.yaml analyze --policy eetb  # exact blocking of one policy
    python run.py -c config.yaml simulate --policy potb --slots 1000000 --seed 7
    python run.py -c config.yaml sweep                  # experiment section -> CSV
    python run.py --set preset=battery-ladder --set model.battery_units=100 analyze --policy potb
"""

from __future__ import annotations

import argparse
import logging
import sys

import edgepush
from edgepush.analysis.markov import analyze_policy
from edgepush.config import (
    apply_overrides,
    build_experiment_spec,
    build_model_params,
    load_config,
)
from edgepush.core.channel import mean_unicast_energy
from edgepush.core.errors import EdgePushError, PreconditionError
from edgepush.core.kernel import TransitionKernel
from edgepush.core.types import Event, EventType, PolicyKind
from edgepush.engine.event_bus import EventBus
from edgepush.engine.experiment import compare_report, run_experiment
from edgepush.engine.simulator import SimConfig, run
from edgepush.policies.base import load_policy, save_policy
from edgepush.policies.dp import policy_iteration
from edgepush.policies.threshold import (
    best_closed_form,
    build_policy,
    gotb_search,
    lemma1_push_probability,
    lemma2_lower_bound,
    lemma3_ee_threshold,
    make_spec,
    potb_threshold,
    theorem1_blocking,
    theorem2_blocking,
)

logger = logging.getLogger("edgepush.run")


# ── Logging ──────────────────────────────────────────────────────────────

def setup_logging(level=logging.INFO):
    fmt = logging.Formatter(
        "%(asctime)s  %(name)-28s  %(levelname)-7s  %(message)s",
        datefmt="%H:%M:%S",
    )
    handler = logging.StreamHandler(sys.stdout)
    handler.setFormatter(fmt)
    root = logging.getLogger("edgepush")
    root.setLevel(level)
    root.handlers.clear()
    root.addHandler(handler)


# ── Progress printer ─────────────────────────────────────────────────────

class ProgressPrinter:
    """Bus subscriber echoing solver iterations and sweep rows."""

    def __init__(self, bus: EventBus):
        bus.subscribe(self.on_event)
        self.rows = 0

    def on_event(self, event: Event) -> None:
        p = event.payload
        if event.event_type == EventType.ITERATION:
            print(f"  iter {p['iteration']:4d}  lambda={p['average_cost']:.10f}  changed={p['changed']}", flush=True)
        elif event.event_type == EventType.RESULT:
            self.rows += 1
            value = "-" if p["blocking"] is None else f"{p['blocking']:.6f}"
            print(
                f"  {p['sweep_param']}={p['sweep_value']:<8g} {p['policy']:<8s} {p['method']:<12s} "
                f"{value:>10s}  {p['status']}",
                flush=True,
            )
        elif event.event_type == EventType.ANOMALY:
            print(f"  ANOMALY {p['rule']} at {p['sweep_value']}: {p['detail']}", flush=True)


def banner(title: str) -> None:
    print()
    print("=" * 60)
    print(f"  {title}")
    print("=" * 60)


# ── Policy selection ─────────────────────────────────────────────────────

def resolve_policy(params, args):
    if args.policy_file:
        policy = load_policy(args.policy_file, params.space)
        policy.validate(params)
        return policy
    kind = PolicyKind.parse(args.policy)
    if kind == PolicyKind.OPTIMAL:
        return policy_iteration(TransitionKernel(params)).policy
    return build_policy(make_spec(kind, params), params)


# ── Subcommands ──────────────────────────────────────────────────────────

def cmd_thresholds(cfg: dict, args: argparse.Namespace) -> None:
    params = build_model_params(cfg)
    g = params.grid
    c_po = potb_threshold(params)
    c_ee = lemma3_ee_threshold(params)
    eetb = make_spec(PolicyKind.EETB, params)
    gotb = gotb_search(params)
    best = best_closed_form(params)

    banner("CLOSED-FORM QUANTITIES")
    print(f"  Grid d_m [m]:    {', '.join(f'{d:.3f}' for d in g.boundaries)}")
    print(f"  Multipliers:     {', '.join(str(l) for l in g.multipliers)}  (E_unit={g.unit_energy:.4g} J)")
    print(f"  Mean unicast:    {mean_unicast_energy(g):.4f} units")
    print(f"  Arrival mean:    {params.arrival_mean:.4f} units/slot")
    print(f"  C_PO:            {c_po}")
    print(f"  C_EE:            {c_ee}")
    print(f"  Push rate @C_PO: {lemma1_push_probability(c_po, params.update_prob, params.n_contents):.6f}")
    print(f"  Floor @C_PO:     {lemma2_lower_bound(c_po, params):.6f}")
    print(f"  Floor @C_EE:     {lemma2_lower_bound(c_ee, params):.6f}")
    print(f"  POTB blocking:   {theorem1_blocking(params):.6f}")
    try:
        print(f"  EETB blocking:   {theorem2_blocking(params):.6f}  (m_thr={eetb.m_thr}, eta={eetb.eta:.6f})")
    except PreconditionError as e:
        print(f"  EETB blocking:   n/a ({e})")
    print(f"  GOTB choice:     c_thr={gotb.c_thr} m_thr={gotb.m_thr} predicted={gotb.predicted:.6f}")
    print(f"  Best closed form: {best.kind.value} ({best.predicted:.6f})")
    print("=" * 60)


def cmd_solve(cfg: dict, args: argparse.Namespace) -> None:
    params = build_model_params(cfg)
    bus = EventBus()
    ProgressPrinter(bus)
    banner(f"POLICY ITERATION  ({params.space.size} states)")
    result = policy_iteration(TransitionKernel(params), max_iter=args.max_iter, bus=bus)
    path = save_policy(result.policy, args.output)
    print("=" * 60)
    print(f"  lambda*:          {result.evaluation.average_cost:.10f}")
    print(f"  Iterations:       {len(result.trace)}")
    print(f"  Bellman residual: {result.bellman_residual:.2e}")
    print(f"  Policy file:      {path}")
    print("=" * 60)


def cmd_analyze(cfg: dict, args: argparse.Namespace) -> None:
    params = build_model_params(cfg)
    policy = resolve_policy(params, args)
    report = analyze_policy(policy, TransitionKernel(params))
    freqs = report.metadata["action_frequencies"]
    banner(f"FSMC ANALYSIS  ({policy.label or 'policy'})")
    print(f"  Blocking:        {report.value:.8f}")
    if policy.metadata.get("predicted") is not None:
        print(f"  Closed form:     {policy.metadata['predicted']:.8f}")
    print(f"  Sleep/Uni/Push:  {freqs[0]:.4f} / {freqs[1]:.4f} / {freqs[2]:.4f}")
    print(f"  Mean battery:    {report.metadata['mean_battery']:.3f} units")
    print(f"  Residual:        {report.metadata['residual']:.2e} ({report.metadata['method']})")
    print("=" * 60)


def cmd_simulate(cfg: dict, args: argparse.Namespace) -> None:
    params = build_model_params(cfg)
    policy = resolve_policy(params, args)
    rep = run(SimConfig(params, policy, slots=args.slots, warmup=args.warmup, seed=args.seed))
    banner(f"MONTE CARLO  ({policy.label or 'policy'}, seed {args.seed})")
    print(f"  Blocking:        {rep.blocking:.6f} +- {rep.ci_radius:.6f}")
    print(f"  Per request:     {rep.per_request_blocking:.6f}  ({rep.requests} requests)")
    print(f"  Sleep/Uni/Push:  {' / '.join(f'{f:.4f}' for f in rep.action_frequencies)}")
    print(f"  Mean battery:    {rep.mean_battery:.3f} units")
    print("=" * 60)


def cmd_sweep(cfg: dict, args: argparse.Namespace) -> None:
    if args.output:
        cfg.setdefault("experiment", {})["output"] = args.output
    if args.workers is not None:
        cfg.setdefault("experiment", {})["workers"] = args.workers
    spec = build_experiment_spec(cfg)
    bus = EventBus()
    printer = ProgressPrinter(bus)
    banner(f"SWEEP {spec.sweep_param}  ({len(spec.sweep_values)} points, {spec.workers} workers)")
    table = run_experiment(spec, bus=bus)
    summary = compare_report(table, bus=bus)
    print("=" * 60)
    for value, group in summary.ranking.groupby("sweep_value", sort=False):
        order = "  <  ".join(f"{r.policy} {r.blocking:.5f}" for r in group.itertuples())
        print(f"  {spec.sweep_param}={value:g}: {order}")
    print(f"  Rows:            {printer.rows}  ({int((table['status'] == 'error').sum())} failed)")
    print(f"  Anomalies:       {len(summary.anomalies)}")
    if spec.output is not None:
        print(f"  Results:         {spec.output}")
    print("=" * 60)


# ── CLI ──────────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="edge-push push/unicast control toolkit")
    parser.add_argument("--config", "-c", default=None, help="YAML config file (defaults to the paper-v preset)")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
        help="Override a config entry (repeatable)",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("thresholds", help="Print closed-form thresholds and predictions")

    p = sub.add_parser("solve", help="Optimal policy by policy iteration")
    p.add_argument("--output", "-o", default="policy.bin", help="Policy file to write")
    p.add_argument("--max-iter", type=int, default=1000)

    for name, text in (("analyze", "Exact FSMC blocking of a policy"), ("simulate", "Monte Carlo run of a policy")):
        p = sub.add_parser(name, help=text)
        group = p.add_mutually_exclusive_group()
        group.add_argument("--policy", "-p", default="eetb", help="potb, aptb, eetb, gotb, sod or optimal")
        group.add_argument("--policy-file", default=None, help="Policy file written by 'solve'")
        if name == "simulate":
            p.add_argument("--slots", type=int, default=1_000_000)
            p.add_argument("--warmup", type=int, default=10_000)
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("sweep", help="Run the experiment section and write CSV")
    p.add_argument("--output", "-o", default=None, help="CSV path (overrides experiment.output)")
    p.add_argument("--workers", "-w", type=int, default=None, help="Worker processes")
    return parser


COMMANDS = {
    "thresholds": cmd_thresholds,
    "solve": cmd_solve,
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(logging.DEBUG if args.verbose else logging.INFO)
    logger.info("edge-push v%s", edgepush.__version__)

    try:
        cfg = load_config(args.config) if args.config else {}
        # overrides land before anything is built
        apply_overrides(cfg, args.overrides)
        COMMANDS[args.command](cfg, args)
    except (ValueError, FileNotFoundError, EdgePushError) as e:
        logger.error("%s", e)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

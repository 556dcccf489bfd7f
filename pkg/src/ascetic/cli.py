"""Command line entry point: ``python3 -m ascetic <command>``.

Seeds resolve as ``--seed`` flag, then ``ASCETIC_SEED``, then the config.
Output directories resolve as ``--outdir``, then ``ASCETIC_OUTDIR``, then ".".
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from .model import DELAY_MODELS, Allocation, check_constraints
from .orchestrator import ORCHESTRATORS
from .simctl import (ExperimentConfig, apply_env, build_instance, parse_metrics, plot_data,
                     run_simulation, SweepResult, sweep)
from .topology import Topology, build_topology
from .workload import Scenario, generate_scenario


def _load_config(path: str | None) -> ExperimentConfig:
    cfg = ExperimentConfig.from_text(Path(path).read_text()) if path else ExperimentConfig()
    return apply_env(cfg)


def _seed(args, cfg: ExperimentConfig) -> int:
    return cfg.seed if args.seed is None else args.seed


def _outdir(args) -> Path:
    out = Path(args.outdir or os.environ.get("ASCETIC_OUTDIR") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str):
    path.write_text(text)
    print(f"wrote {path}")


def cmd_config(args):
    sys.stdout.write(ExperimentConfig().to_text())
    return 0


def cmd_gen_topo(args):
    cfg = _load_config(args.config)
    nodes = args.nodes or cfg.nodes
    tiers = args.tiers or cfg.tiers
    topo = build_topology(nodes, tiers, seed=[_seed(args, cfg), 0], params=cfg.topology)
    out = _outdir(args)
    _write(out / "topology.txt", topo.to_text())
    return 0


def cmd_gen_scn(args):
    cfg = _load_config(args.config)
    topo = Topology.from_text(Path(args.topology).read_text())
    scn = generate_scenario(topo, cfg.scenario, seed=[_seed(args, cfg), 1])
    out = _outdir(args)
    _write(out / "scenario.txt", scn.to_text())
    _write(out / "requests.csv", scn.requests_csv())
    return 0


def cmd_run(args):
    cfg = _load_config(args.config)
    if args.orch:
        cfg = dataclasses.replace(cfg, orchestrators=tuple(args.orch))
    seed = _seed(args, cfg)
    out = _outdir(args)
    instance = build_instance(cfg, seed)
    runs = [("base", run_simulation(cfg, seed, name, instance)) for name in cfg.orchestrators]
    result = SweepResult(None, runs)
    topo, scn = instance
    _write(out / "topology.txt", topo.to_text())
    _write(out / "scenario.txt", scn.to_text())
    for _, series in runs:
        _write(out / f"allocation-{series.orchestrator}.csv", series.allocation.to_csv(topo))
    _write(out / "metrics.csv", result.metrics_csv())
    _write(out / "summary.csv", result.summary_csv())
    return 0


def cmd_sweep(args):
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.axis:
        cfg = dataclasses.replace(cfg, axis=args.axis)
    if args.values:
        cfg = dataclasses.replace(cfg, axis_values=tuple(args.values))
    if args.orch:
        cfg = dataclasses.replace(cfg, orchestrators=tuple(args.orch))
    result = sweep(cfg, repetitions=args.repetitions)
    out = _outdir(args)
    _write(out / "metrics.csv", result.metrics_csv())
    _write(out / "summary.csv", result.summary_csv())
    _write(out / "plotdata.csv", result.plotdata_csv())
    return 0


def cmd_validate(args):
    topo = Topology.from_text(Path(args.topology).read_text())
    scn = Scenario.from_text(Path(args.scenario).read_text())
    alloc = Allocation.from_csv(Path(args.allocation).read_text())
    report = check_constraints(alloc, scn, topo, supported_only=not args.strict,
                               delay_model=args.delay_model)
    print(report.to_json())
    return 0 if report.feasible else 1


def cmd_plotdata(args):
    rows = parse_metrics(Path(args.metrics).read_text())
    out = _outdir(args)
    _write(out / "plotdata.csv", plot_data(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ascetic",
                                description="Edge service placement and request assignment simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True, seed=True):
        if config:
            sp.add_argument("--config", help="ascetic-cfg v1 file (defaults when omitted)")
        if seed:
            sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--outdir", default=None)

    sp = sub.add_parser("config", help="print the default configuration")
    sp.set_defaults(func=cmd_config)

    sp = sub.add_parser("gen-topo", help="generate a topology file")
    common(sp)
    sp.add_argument("--nodes", type=int, default=None)
    sp.add_argument("--tiers", type=int, default=None)
    sp.set_defaults(func=cmd_gen_topo)

    sp = sub.add_parser("gen-scn", help="generate a scenario on a topology")
    common(sp)
    sp.add_argument("--topology", required=True)
    sp.set_defaults(func=cmd_gen_scn)

    sp = sub.add_parser("run", help="simulate one seed for each orchestrator")
    common(sp)
    sp.add_argument("--orch", nargs="+", choices=ORCHESTRATORS)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="sweep nodes or requests over seeds")
    common(sp)
    sp.add_argument("--axis", choices=("nodes", "requests"))
    sp.add_argument("--values", type=int, nargs="+")
    sp.add_argument("--repetitions", type=int, default=None)
    sp.add_argument("--orch", nargs="+", choices=ORCHESTRATORS)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("validate", help="re-check a stored allocation against all constraints")
    sp.add_argument("--topology", required=True)
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--allocation", required=True)
    sp.add_argument("--delay-model", choices=DELAY_MODELS, default="restricted")
    sp.add_argument("--strict", action="store_true",
                    help="also require every active request to be supported")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("plotdata", help="turn metrics.csv into panel series")
    sp.add_argument("--metrics", required=True)
    sp.add_argument("--outdir", default=None)
    sp.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)

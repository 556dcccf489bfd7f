"""Acceptance suite: one PASS/FAIL line per criterion, printed past pytest's capture.

Run alone with ``pytest -v tests/test_acceptance.py``. The predictor-learning
criterion dominates the runtime (about 12 minutes on one CPU); the whole file
takes roughly 17 minutes.
"""

import time

import numpy as np
import pytest

from ascetic.cli import main as cli_main
from ascetic.model import check_constraints, evaluate_slot, objective_cost
from ascetic.orchestrator import PredictionTable, ResidualState, solve_horizon, wise_place
from ascetic.predictor import (PredictorAgent, double_q_target, frequency_predict,
                               random_subset)
from ascetic.simctl import ExperimentConfig, sweep
from ascetic.topology import build_topology
from ascetic.workload import MobilityModel, ScenarioParams, generate_scenario
from helpers import random_allocation, tiny_case
from oracles import naive_e2e, naive_link_delay, naive_objective, naive_path_cost

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(number, name, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number} {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    return emit


def unsupported_count(alloc):
    return sum(len(s.unsupported) for s in alloc.slots.values())


def test_1_constraint_soundness(report):
    t0 = time.perf_counter()
    topologies = {}
    failures, checked = [], 0
    for k in range(1000):
        rng = np.random.default_rng(k)
        n = int(rng.integers(2, 21))
        key = (n, k % 5)
        if key not in topologies:
            topologies[key] = build_topology(n, seed=k)
        topo = topologies[key]
        params = ScenarioParams(n_requests=int(rng.integers(0, 41)),
                                horizon=int(rng.integers(1, 21)))
        scn = generate_scenario(topo, params, k)
        model = ("restricted", "literal")[k % 2]
        for name in ("wise", "random", "ccam"):
            alloc = solve_horizon(name, scn, topo, seed=k, delay_model=model)
            checked += 1
            rep = check_constraints(alloc, scn, topo, supported_only=True, delay_model=model)
            if not rep.feasible:
                failures.append((k, name, rep.failing()))
    for k in range(200):
        topo, scn = tiny_case(10_000 + k)
        for name in ("exact", "wise", "random", "ccam"):
            alloc = solve_horizon(name, scn, topo, seed=k)
            checked += 1
            if not check_constraints(alloc, scn, topo, supported_only=True).feasible:
                failures.append((10_000 + k, name, "tiny"))
    ok = not failures
    report(1, "constraint soundness", ok,
           f"{checked} outputs over 1200 scenarios, {len(failures)} violations, "
           f"{time.perf_counter() - t0:.0f}s")
    assert ok, failures[:5]


def test_2_gap_to_exhaustive_optimum(report):
    ratios, missed = [], []
    for seed in range(400):
        topo, scn = tiny_case(seed)
        exact = solve_horizon("exact", scn, topo)
        wise = solve_horizon("wise", scn, topo)
        exact_ok = unsupported_count(exact) == 0
        wise_ok = (unsupported_count(wise) == 0
                   and check_constraints(wise, scn, topo, supported_only=True).feasible)
        if exact_ok and not wise_ok:
            missed.append(seed)
        if exact_ok and wise_ok:
            wise_cost = objective_cost(wise, scn, topo)
            exact_cost = objective_cost(exact, scn, topo)
            ratios.append(1.0 if wise_cost == 0 else exact_cost / wise_cost)
    r = np.array(ratios)
    q = np.percentile(r, [0, 10, 25, 50, 75, 100])
    ok = not missed and r.mean() >= 0.75
    report(2, "optimality gap", ok,
           f"{len(r)} instances, mean exact/wise {r.mean():.3f} (reference 0.91), "
           f"min/p10/p25/median/p75/max " + "/".join(f"{x:.3f}" for x in q)
           + f", wise infeasible where exact feasible: {len(missed)}")
    assert ok


def test_3_delay_calculus_oracle(report):
    worst = 0.0

    def gap(got, want):
        worst_now = abs(got - want) / max(abs(want), 1e-12) if want else abs(got)
        return max(worst, worst_now)

    for k in range(1000):
        rng = np.random.default_rng(k)
        topo = build_topology(int(rng.integers(2, 10)), seed=k % 50)
        scn = generate_scenario(topo, ScenarioParams(n_requests=int(rng.integers(1, 25)),
                                                     horizon=2, n_services=4,
                                                     instances_per_service=2), k)
        model = ("restricted", "literal")[k % 2]
        alloc = random_allocation(scn, topo, rng)
        for slot in alloc.slots.values():
            state = evaluate_slot(slot, scn, topo, model)
            for i, r in enumerate(state.requests):
                for l in np.flatnonzero(state.traversals[i]):
                    worst = gap(state.link_delay[i, l],
                                naive_link_delay(scn, topo, slot, r, int(l), model))
                worst = gap(state.e2e[i], naive_e2e(scn, topo, slot, r, model))
                worst = gap(state.path_cost[i], naive_path_cost(topo, slot, r))
        worst = gap(objective_cost(alloc, scn, topo), naive_objective(alloc, scn, topo))
    ok = worst <= 1e-9
    report(3, "delay-calculus oracle", ok,
           f"1000 random allocations, worst relative gap {worst:.2e}")
    assert ok


def test_4_double_q_target(report):
    got = double_q_target(1.0, 0.9, [1.0, 3.0], [5.0, 7.0])
    ok = abs(got - 7.3) <= 1e-9
    report(4, "double-Q target", ok, f"got {got!r}, want 7.3")
    assert ok


def top_z_accuracy(predicted, actual, z):
    return len(predicted & actual) / min(z, len(actual))


def markov_accuracies(slots=5000, scored=1000, n_poa=10, n_services=20, z=3, window=10):
    import types
    poa_only = types.SimpleNamespace(poa_nodes=tuple(range(n_poa)))
    scn = generate_scenario(poa_only, ScenarioParams(
        n_requests=30, horizon=slots, n_services=n_services, arrival_window=1,
        mobility=MobilityModel("markov", 0.8)), seed=1)
    agents = [PredictorAgent(n_services, z, window=window, seed=p) for p in range(n_poa)]
    history = [[] for _ in range(n_poa)]
    rng = np.random.default_rng(0)
    scores = {"ddql": [], "frequency": [], "random": []}
    pending = {}
    for t in range(1, slots + 1):
        for p in range(n_poa):
            seen = scn.services_at(p, t)
            if t > slots - scored and seen and p in pending:
                for name, guess in pending[p].items():
                    scores[name].append(top_z_accuracy(guess, seen, z))
            history[p].append(seen)
            agents[p].step(seen, t)
            if t >= slots - scored:
                pending[p] = {"ddql": agents[p].greedy(),
                              "frequency": frequency_predict(history[p], z, n_services),
                              "random": random_subset(n_services, z, rng)}
    return {k: float(np.mean(v)) for k, v in scores.items()}


def cyclic_accuracy(slots=2000, scored=500, n_services=20, z=3):
    cycle = [frozenset({0, 1, 2}), frozenset({3, 4, 5}), frozenset({6, 7, 8}),
             frozenset({9, 10, 11})]
    agent = PredictorAgent(n_services, z, seed=0)
    hits = []
    guess = None
    for t in range(1, slots + 1):
        seen = cycle[t % len(cycle)]
        if guess is not None and t > slots - scored:
            hits.append(top_z_accuracy(guess, seen, z))
        agent.step(seen, t)
        guess = agent.greedy()
    return float(np.mean(hits))


def test_5_predictor_learning(report):
    t0 = time.perf_counter()
    acc = markov_accuracies()
    cyc = cyclic_accuracy()
    markov_ok = acc["ddql"] >= 2 * acc["random"] and acc["ddql"] >= acc["frequency"] - 0.10
    ok = markov_ok and cyc > 0.9
    report(5, "predictor learning", ok,
           f"markov ddql {acc['ddql']:.3f} / frequency {acc['frequency']:.3f} / "
           f"random {acc['random']:.3f}; cyclic {cyc:.3f}; {time.perf_counter() - t0:.0f}s")
    assert ok


def test_6_unsupported_trend(report):
    cfg = ExperimentConfig(nodes=20, orchestrators=("wise", "ccam", "random"),
                           predictor="oracle", axis="requests", axis_values=(20, 40, 80),
                           repetitions=10)
    res = sweep(cfg)
    means = {}
    for label, series in res.runs:
        means.setdefault((label, series.orchestrator), []).append(series.unsupported.sum())
    ok = True
    parts = []
    for value in (20, 40, 80):
        label = f"requests={value}"
        w, c, r = (float(np.mean(means[(label, o)])) for o in ("wise", "ccam", "random"))
        ok &= w <= c and w <= r
        parts.append(f"R={value}: wise {w:.1f} ccam {c:.1f} random {r:.1f}")
    report(6, "unsupported trend", ok, "; ".join(parts))
    assert ok


def test_7_wise_scaling(report):
    sizes = [10, 20, 40, 80]
    times = []
    for n in sizes:
        topo = build_topology(n, seed=0)
        scn = generate_scenario(topo, ScenarioParams(n_requests=40, horizon=3), 0)
        tables = {t: PredictionTable.from_scenario(scn, t) for t in (1, 2, 3)}
        best = np.inf
        for _ in range(3):
            start = time.perf_counter()
            for t in (1, 2, 3):
                wise_place(tables[t], topo, scn, t, ResidualState(topo, scn, t))
            best = min(best, time.perf_counter() - start)
        times.append(best)
    slope = float(np.polyfit(np.log(sizes), np.log(times), 1)[0])
    ok = slope <= 2.5
    report(7, "wise scaling", ok, f"log-log slope {slope:.2f}, times "
           + ", ".join(f"N={n}:{s * 1e3:.1f}ms" for n, s in zip(sizes, times)))
    assert ok


def run_cli_suite(root, cfg_path, capsys):
    """Every subcommand once; returns {name: bytes} of files and captured stdout."""
    out = {}
    root.mkdir()
    steps = [
        ("config", ["config"]),
        ("gen-topo", ["gen-topo", "--config", cfg_path, "--seed", "3",
                      "--outdir", str(root / "gen")]),
        ("gen-scn", ["gen-scn", "--config", cfg_path, "--seed", "3", "--outdir",
                     str(root / "gen"), "--topology", str(root / "gen" / "topology.txt")]),
        ("run", ["run", "--config", cfg_path, "--seed", "3", "--outdir", str(root / "run")]),
        ("sweep", ["sweep", "--config", cfg_path, "--seed", "3",
                   "--outdir", str(root / "sweep")]),
        ("validate", ["validate", "--topology", str(root / "run" / "topology.txt"),
                      "--scenario", str(root / "run" / "scenario.txt"),
                      "--allocation", str(root / "run" / "allocation-wise.csv")]),
        ("plotdata", ["plotdata", "--metrics", str(root / "sweep" / "metrics.csv"),
                      "--outdir", str(root / "plot")]),
    ]
    for name, argv in steps:
        capsys.readouterr()
        rc = cli_main(argv)
        out[f"{name}:rc"] = str(rc).encode()
        # Printed paths name the output directory, which differs between the two runs.
        out[f"{name}:stdout"] = capsys.readouterr().out.replace(str(root), "<out>").encode()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = path.read_bytes()
    return out


def test_8_cli_determinism(report, tmp_path, capsys):
    cfg = ExperimentConfig(nodes=8, scenario=ScenarioParams(n_requests=15, horizon=4),
                           orchestrators=("wise", "ccam", "random"), predictor="ddql",
                           window=2, repetitions=2, axis="requests", axis_values=(8, 15))
    cfg_path = tmp_path / "cfg.txt"
    cfg_path.write_text(cfg.to_text())
    first = run_cli_suite(tmp_path / "a", str(cfg_path), capsys)
    second = run_cli_suite(tmp_path / "b", str(cfg_path), capsys)
    csvs = sorted(k for k in first if k.endswith(".csv"))
    differing = sorted(k for k in set(first) | set(second) if first.get(k) != second.get(k))
    ok = not differing and len(csvs) >= 6
    report(8, "cli determinism", ok,
           f"7 commands, {len(first)} outputs ({len(csvs)} csv), differing: {differing or 'none'}")
    assert ok

import json

import pytest

from ascetic.cli import main
from ascetic.simctl import ExperimentConfig
from ascetic.topology import Topology
from ascetic.workload import Scenario, ScenarioParams

CFG = ExperimentConfig(nodes=8, scenario=ScenarioParams(n_requests=12, horizon=3),
                       orchestrators=("wise", "ccam", "random"), predictor="ddql", window=2,
                       repetitions=2, axis="requests", axis_values=(6, 12))


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text(CFG.to_text())
    return str(path)


def test_config_prints_defaults(capsys):
    assert main(["config"]) == 0
    assert ExperimentConfig.from_text(capsys.readouterr().out) == ExperimentConfig()


def test_generate_then_validate(tmp_path, cfg_file, capsys):
    out = tmp_path / "gen"
    assert main(["gen-topo", "--config", cfg_file, "--seed", "4", "--outdir", str(out)]) == 0
    topo = Topology.from_text((out / "topology.txt").read_text())
    assert topo.n_nodes == 8
    assert main(["gen-scn", "--config", cfg_file, "--seed", "4", "--outdir", str(out),
                 "--topology", str(out / "topology.txt")]) == 0
    scn = Scenario.from_text((out / "scenario.txt").read_text())
    assert scn.n_requests == 12
    assert (out / "requests.csv").read_text().startswith("id,arrival_slot,service")

    run = tmp_path / "run"
    assert main(["run", "--config", cfg_file, "--seed", "4", "--outdir", str(run)]) == 0
    # The run rebuilds the same instance from the same seed.
    assert (run / "topology.txt").read_text() == (out / "topology.txt").read_text()
    assert (run / "scenario.txt").read_text() == (out / "scenario.txt").read_text()
    capsys.readouterr()
    args = ["validate", "--topology", str(run / "topology.txt"), "--scenario",
            str(run / "scenario.txt"), "--allocation", str(run / "allocation-wise.csv")]
    assert main(args) == 0
    assert json.loads(capsys.readouterr().out)["feasible"] is True


def test_validate_flags_tampering(tmp_path, cfg_file, capsys):
    run = tmp_path / "run"
    main(["run", "--config", cfg_file, "--orch", "wise", "--outdir", str(run)])
    lines = (run / "allocation-wise.csv").read_text().splitlines()
    t, r, inst, node, p_in, p_out, delay, cost = lines[1].split(",")
    lines[1] = ",".join([t, r, inst, node, p_in, p_out, "999.0", cost])
    (run / "bad.csv").write_text("\n".join(lines) + "\n")
    capsys.readouterr()
    rc = main(["validate", "--topology", str(run / "topology.txt"), "--scenario",
               str(run / "scenario.txt"), "--allocation", str(run / "bad.csv")])
    assert rc == 1
    assert json.loads(capsys.readouterr().out)["constraints"]["C10"]["pass"] is False


def test_sweep_and_plotdata(tmp_path, cfg_file, monkeypatch):
    monkeypatch.setenv("ASCETIC_OUTDIR", str(tmp_path / "env"))
    assert main(["sweep", "--config", cfg_file]) == 0
    env = tmp_path / "env"
    for name in ("metrics.csv", "summary.csv", "plotdata.csv"):
        assert (env / name).exists()
    summary = (env / "summary.csv").read_text().splitlines()
    assert len(summary) == 1 + 2 * 3
    assert main(["plotdata", "--metrics", str(env / "metrics.csv"),
                 "--outdir", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "plotdata.csv").read_text() == (env / "plotdata.csv").read_text()


def test_env_seed_changes_output(tmp_path, cfg_file, monkeypatch):
    main(["gen-topo", "--config", cfg_file, "--outdir", str(tmp_path / "a")])
    monkeypatch.setenv("ASCETIC_SEED", "99")
    main(["gen-topo", "--config", cfg_file, "--outdir", str(tmp_path / "b")])
    main(["gen-topo", "--config", cfg_file, "--seed", "0", "--outdir", str(tmp_path / "c")])
    a, b, c = ((tmp_path / d / "topology.txt").read_text() for d in "abc")
    assert a != b and a == c

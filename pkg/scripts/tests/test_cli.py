"""
End-to-end tests of the command-line front end: outputs, config dumps,
determinism and exit codes.
"""

import json

import pandas as pd
import pytest

from app.config import settings
from app.main import build_parser, run
from app.services.acceptance import AcceptanceSuite
from app.services.convergence import CONVERGENCE_COLUMNS
from app.services.exporters import config_path


def test_simulate_writes_breakpoints_and_config(output_dir):
    out = output_dir / "path.csv"
    args = ["simulate", "--kind", "citp", "--omega", "1", "--ell", "1", "--horizon", "20", "--seed", "7",
            "--x0", "0.5", "--s1", "1", "--s2", "-1", "-o", str(out)]
    assert run(args) == 0
    frame = pd.read_csv(out)
    assert list(frame.columns) == ["t_break", "x", "s1", "s2", "clamp_flag"]
    assert frame["x"].iloc[0] == 0.5
    assert frame["x"].between(0.0, 1.0).all()

    saved = json.loads((output_dir / "path.csv.config.json").read_text())
    assert saved["seed"] == 7 and saved["command"] == "simulate"


def test_same_seed_gives_identical_bytes(output_dir):
    outputs = []
    for name in ("a.csv", "b.csv"):
        out = output_dir / name
        args = ["simulate", "--kind", "cftp", "--alpha", "1", "--beta", "2", "--horizon", "50", "--seed", "3",
                "-o", str(out)]
        assert run(args) == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]


def test_simulate_lattice_event_list(output_dir):
    out = output_dir / "lattice.csv"
    args = ["simulate", "--kind", "ditp", "--omega", "1", "--L", "11", "--horizon", "5", "--seed", "1",
            "-o", str(out)]
    assert run(args) == 0
    frame = pd.read_csv(out)
    assert list(frame.columns) == ["t", "y", "s1", "s2"]
    assert frame["y"].between(1, 11).all()


def test_invariant_measure_json(output_dir):
    out = output_dir / "measure.json"
    assert run(["invariant", "--kind", "cftp", "--alpha", "1", "--beta", "1", "--ell", "2", "-o", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert payload["kind"] == "ftp"
    assert len(payload["rows"]) == 9
    assert payload["normalization"] > 0


def test_invariant_with_comparison(output_dir):
    out = output_dir / "stationary.csv"
    args = ["invariant", "--kind", "dftp", "--alpha", "1", "--beta", "1", "--L", "5", "--compare-horizon", "200",
            "--seed", "2", "-o", str(out)]
    assert run(args) == 0
    stationary = pd.read_csv(out)
    assert stationary["prob"].sum() == pytest.approx(1.0)
    compare = pd.read_csv(output_dir / "stationary.csv.compare.csv")
    assert {"prob", "empirical", "tv"} <= set(compare.columns)
    assert compare["empirical"].sum() == pytest.approx(1.0)


def test_converge_table(output_dir):
    out = output_dir / "converge.csv"
    args = ["converge", "--kind", "citp", "--omega", "1", "--L", "5,17", "--replicas", "20", "--seed", "1",
            "-o", str(out)]
    assert run(args) == 0
    frame = pd.read_csv(out)
    assert list(frame.columns) == CONVERGENCE_COLUMNS
    assert list(frame["L"]) == [5, 17]
    assert (frame["sup_dev_q10"] <= frame["sup_dev_q90"]).all()


def test_converge_sweep_adds_parameter_columns(output_dir):
    out = output_dir / "sweep.csv"
    args = ["converge", "--kind", "citp", "--omega", "1,2", "--L", "5", "--replicas", "5", "--seed", "1",
            "-o", str(out)]
    assert run(args) == 0
    frame = pd.read_csv(out)
    assert list(frame.columns[:3]) == ["kind", "omega", "ell"]
    assert len(frame) == 2


def test_hitting_table(output_dir):
    out = output_dir / "hitting.csv"
    args = ["hitting", "--kind", "cftp", "--alpha", "1", "--beta", "1", "--replicas", "100", "--seed", "5",
            "-o", str(out)]
    assert run(args) == 0
    frame = pd.read_csv(out)
    assert len(frame) == 10
    assert frame["mc_stderr"].gt(0).all()


def test_mixing_json_and_replica_table(output_dir, monkeypatch):
    monkeypatch.setattr(settings, "pilot_replicas", 4)
    out = output_dir / "mixing.json"
    table = output_dir / "replicas.csv"
    args = ["mixing", "--kind", "citp", "--omega", "4", "--ell", "0.25", "--replicas", "30", "--seed", "3",
            "--quick", "-o", str(out), "--replica-table", str(table)]
    assert run(args) == 0
    estimates = json.loads(out.read_text())
    assert len(estimates) == 1
    assert estimates[0]["t_mix_coupling"] > 0
    assert estimates[0]["t_mix_tv"] is None
    replicas = pd.read_csv(table)
    assert len(replicas) == 3 * 30
    assert list(replicas.columns[-5:]) == ["replica", "tau1", "tau2", "tau_coupling", "sup_deviation"]


def test_verify_exit_status_follows_the_checks(output_dir, monkeypatch):
    out = output_dir / "report.json"
    monkeypatch.setattr(AcceptanceSuite, "checks", property(lambda self: [("trivial", lambda: (True, {"x": 1}))]))
    assert run(["verify", "--quick", "-o", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report[0]["name"] == "trivial" and report[0]["passed"]

    monkeypatch.setattr(AcceptanceSuite, "checks", property(lambda self: [("broken", lambda: 1 / 0)]))
    assert run(["verify", "-o", str(out)]) == 1
    report = json.loads(out.read_text())
    assert report[0]["error"].startswith("ZeroDivisionError")


@pytest.mark.parametrize(
    "args",
    [
        ["simulate", "--kind", "citp", "--omega", "1", "--horizon", "5"],
        ["simulate", "--kind", "citp", "--alpha", "1", "--beta", "1", "--horizon", "5", "--seed", "1"],
        ["simulate", "--kind", "citp", "--omega", "1", "--seed", "1"],
        ["simulate", "--kind", "ditp", "--omega", "1", "--horizon", "5", "--seed", "1"],
        ["mixing", "--kind", "citp", "--omega", "1", "--seed", "1", "--epsilon", "1.5"],
        ["simulate", "--kind", "citp", "--omega", "-1", "--horizon", "5", "--seed", "1"],
        ["converge", "--kind", "citp", "--omega", "1", "--L", "1", "--seed", "1"],
        ["hitting", "--kind", "cftp", "--alpha", "1", "--beta", "1", "--seed", "1", "--replicas", "0"],
    ],
)
def test_invalid_configuration_exits_with_2(args, output_dir):
    assert run(args) == 2


def test_velocity_outside_the_alphabet_exits_with_2(output_dir):
    args = ["simulate", "--kind", "citp", "--omega", "1", "--horizon", "5", "--seed", "1", "--s1", "0"]
    assert run(args) == 2


def test_no_subcommand_exits_with_2():
    assert run([]) == 2


def test_unknown_kind_is_an_argparse_error():
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args(["simulate", "--kind", "quantum"])
    assert exc.value.code == 2


def test_config_path_for_stdout_runs(tmp_path):
    path = config_path(None, str(tmp_path), "hitting", 5)
    assert path == tmp_path / "hitting-seed5.config.json"

import csv
import json

import pytest
from typer.testing import CliRunner

from src.app import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, get_app, main
from src.routes.common import load_snapshots
from src.schemas.flow import FlowParams
from src.services import flow_model, oracle

runner = CliRunner()


@pytest.fixture
def snapshot_file(tmp_path):
    path = tmp_path / "snap.csv"
    assert main(["--seed", "3", "generate", "-n", "8", "--kappa", "0.5", "--out", str(path)]) == EXIT_OK
    return path


@pytest.fixture
def matrix_file(tmp_path, snapshot_file):
    path = tmp_path / "w.txt"
    assert main(["weights", str(snapshot_file), "--kappa", "0.5", "--out", str(path)]) == EXIT_OK
    return path


def read_json(capsys):
    return json.loads(capsys.readouterr().out)


def test_generate_is_reproducible(tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (first, second):
        assert main(["--seed", "7", "generate", "-n", "12", "--S", "-0.5", "--out", str(path)]) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()
    truth = json.loads((tmp_path / "a.truth.json").read_text(encoding="utf-8"))
    assert truth["S"] == -0.5 and sorted(truth["perm"]) == list(range(12))


def test_exact_matches_the_in_memory_pipeline(capsys, snapshot_file, matrix_file):
    capsys.readouterr()
    assert main(["exact", str(matrix_file)]) == EXIT_OK
    report = read_json(capsys)
    snap = load_snapshots(snapshot_file)
    w = flow_model.build_weight_matrix(snap, FlowParams(S=0.0, kappa=0.5))
    assert report["n"] == 8
    assert report["ln_per"] == oracle.permanent_exact(w)


def test_exact_reads_snapshots_directly(capsys, snapshot_file, matrix_file):
    capsys.readouterr()
    main(["exact", str(matrix_file)])
    from_matrix = read_json(capsys)
    main(["exact", str(snapshot_file), "--kappa", "0.5"])
    assert read_json(capsys) == from_matrix


def test_bp_then_correct(capsys, tmp_path, matrix_file):
    beliefs = tmp_path / "beliefs.json"
    assert main(["bp", str(matrix_file), "--out", str(beliefs)]) == EXIT_OK
    state = json.loads(beliefs.read_text(encoding="utf-8"))
    assert {"f_bp", "beta", "residual", "iterations"} <= set(state)
    assert len(state["beta"]) == 8
    capsys.readouterr()
    assert main(["correct", "--beliefs", str(beliefs), "--matrix", str(matrix_file)]) == EXIT_OK
    report = read_json(capsys)
    assert report["ln_z_bp"] == pytest.approx(-state["f_bp"], rel=1e-12)
    for key in ("ln_z_sp", "ln_z_sp4", "g_sp", "g4", "ratio", "committed", "warnings"):
        assert key in report


def test_bp_as_csv(capsys, matrix_file):
    capsys.readouterr()
    assert main(["--format", "csv", "bp", str(matrix_file)]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == ",".join(f"j{j}" for j in range(8))
    assert len(lines) == 9


def test_mcmc_report(capsys, matrix_file):
    capsys.readouterr()
    args = ["mcmc", str(matrix_file), "--temps", "10", "--sweeps", "5", "--chains", "4"]
    assert main(args) == EXIT_OK
    report = read_json(capsys)
    assert len(report["chain_log_weights"]) == 4
    assert report["ln_z_stderr"] >= 0.0


def test_mcmc_ignores_the_thread_count(capsys, matrix_file):
    capsys.readouterr()
    args = ["mcmc", str(matrix_file), "--temps", "10", "--sweeps", "5", "--chains", "4"]
    main(["--threads", "1"] + args)
    one = read_json(capsys)
    main(["--threads", "3"] + args)
    many = read_json(capsys)
    one.pop("seconds")
    many.pop("seconds")
    assert one == many


def without_timings(csv_text: str) -> list:
    rows = list(csv.reader(csv_text.splitlines()))
    keep = [k for k, name in enumerate(rows[0]) if not name.startswith("seconds_")]
    return [[row[k] for k in keep] for row in rows]


def test_pipeline_output_is_identical_across_thread_counts(capsys, tmp_path, snapshot_file, matrix_file):
    outputs = []
    for threads in ("1", "2", "8"):
        prefix = ["--threads", threads]
        beliefs = tmp_path / f"beliefs_{threads}.json"
        assert main(prefix + ["bp", str(matrix_file), "--out", str(beliefs)]) == EXIT_OK
        capsys.readouterr()
        correct = ["correct", "--beliefs", str(beliefs), "--matrix", str(matrix_file)]
        assert main(prefix + correct + ["--compare-orthants", "3", "--compare-flips", "1"]) == EXIT_OK
        corrected = capsys.readouterr().out
        assert main(prefix + ["--format", "json", "compare", str(matrix_file), "--no-mcmc"]) == EXIT_OK
        compared = {k: repr(v) for k, v in read_json(capsys).items() if not k.startswith("seconds_")}
        sweep = ["sweep", str(snapshot_file), "--grid", "0.25,0.5,1", "--methods", "bp,bp_sp4,exact"]
        assert main(prefix + sweep) == EXIT_OK
        swept = without_timings(capsys.readouterr().out)
        outputs.append((beliefs.read_bytes(), corrected, compared, swept))
    assert outputs[0] == outputs[1] == outputs[2]


def test_match_writes_distances(capsys, snapshot_file):
    capsys.readouterr()
    assert main(["--format", "csv", "match", str(snapshot_file), "--kappa", "0.5"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "i,j,distance"
    assert len(lines) == 9
    assert sorted(int(line.split(",")[1]) for line in lines[1:]) == list(range(8))


def test_sweep_csv(capsys, snapshot_file):
    capsys.readouterr()
    args = ["sweep", str(snapshot_file), "--grid", "0.25,0.5,1", "--methods", "bp,exact"]
    assert main(args) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("param,lnZ_bp,lnZ_sp")
    assert len(lines) == 4
    first = lines[1].split(",")
    assert float(first[0]) == 0.25
    assert first[2] == "nan"


def test_sweep_json_with_exact_optimum(capsys, snapshot_file):
    capsys.readouterr()
    args = ["--format", "json", "sweep", str(snapshot_file), "--grid", "0.25,0.5,1,2", "--methods", "exact"]
    assert main(args + ["--exact-optimum"]) == EXIT_OK
    report = read_json(capsys)
    assert report["parameter"] == "kappa"
    assert len(report["rows"]) == 4
    assert 0.25 <= report["exact_optimum"] <= 2.0
    assert "exact" in report["argmax"]


def test_compare_json(capsys, matrix_file):
    capsys.readouterr()
    assert main(["--format", "json", "compare", str(matrix_file), "--no-mcmc"]) == EXIT_OK
    report = read_json(capsys)
    assert report["n"] == 8
    assert report["lnZ_bp"] <= report["lnZ_exact"] + 1e-9
    assert "lnZ_mcmc" not in report
    assert "node_bound_violations" in report


def test_compare_small_instance_reports_loop_series(capsys, tmp_path):
    path = tmp_path / "w3.txt"
    path.write_text("3\n0 -0.5 -1\n-0.5 0 -0.5\n-1 -0.5 0\n", encoding="utf-8")
    capsys.readouterr()
    assert main(["--format", "json", "compare", str(path), "--no-mcmc"]) == EXIT_OK
    report = read_json(capsys)
    assert report["loop_bound_violations"] == 0
    assert report["loop_z"] > 0.0


def test_compare_renders_a_table(tmp_path):
    path = tmp_path / "w2.txt"
    path.write_text("2\n0 0\n0 0\n", encoding="utf-8")
    result = runner.invoke(get_app(), ["compare", str(path), "--no-mcmc"])
    assert result.exit_code == 0, result.output
    assert "lnZ_bp" in result.output
    assert "lnZ_exact" in result.output


def test_malformed_matrix_exits_with_usage_code(capsys, tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("2\n0 0\n", encoding="utf-8")
    assert main(["exact", str(path)]) == EXIT_USAGE
    assert "línea 2" in capsys.readouterr().err


def test_snapshots_need_kappa(capsys, snapshot_file):
    assert main(["exact", str(snapshot_file)]) == EXIT_USAGE
    assert "kappa" in capsys.readouterr().err


def test_unknown_option_is_a_usage_error():
    assert main(["exact", "--no-such-option"]) == EXIT_USAGE


def test_infeasible_matrix_is_a_numerical_failure(capsys, tmp_path):
    path = tmp_path / "blocked.txt"
    path.write_text("2\n0 -inf\n0 -inf\n", encoding="utf-8")
    assert main(["mcmc", str(path), "--temps", "5", "--sweeps", "2", "--chains", "2"]) == EXIT_NUMERICAL
    assert "Error numérico" in capsys.readouterr().err


def test_invalid_sweep_methods(snapshot_file):
    assert main(["sweep", str(snapshot_file), "--methods", "bp,magic"]) == EXIT_USAGE


def test_help_without_arguments():
    result = runner.invoke(get_app(), [])
    assert "generate" in result.output

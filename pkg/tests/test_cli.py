"""End-to-end coverage of every CLI subcommand and the error surface."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from fairtrim.cli import main
from fairtrim.model import load_model
from fairtrim.synthetic import write_loans, write_toy_loans


@pytest.fixture(scope="module")
def toy_files(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("toy")
    csv_path, schema_path = tmp / "toy.csv", tmp / "toy.schema.json"
    write_toy_loans(csv_path, schema_path)
    return str(csv_path), str(schema_path)


@pytest.fixture(scope="module")
def loans_files(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("loans")
    csv_path, schema_path = tmp / "loans.csv", tmp / "loans.schema.json"
    write_loans(csv_path, schema_path, n=60, seed=0, flip_rate=0.5)
    return str(csv_path), str(schema_path)


def run(capsys, argv):
    code = main(argv)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def run_json(capsys, argv):
    code, out, err = run(capsys, argv)
    assert code == 0, err
    return json.loads(out)


FAST = ["--epochs", "80", "--lr", "0.5", "--pool-multiplier", "5"]


def test_load_check(capsys, toy_files):
    csv_path, schema_path = toy_files
    obj = run_json(capsys, ["load-check", csv_path, "--schema", schema_path])
    assert obj["rows"] == 7
    assert obj["encoded_width"] == 4  # income, wealth, race one-hot (2)
    assert obj["label_counts"] == {"positive": 3, "negative": 4}
    assert obj["groups"] == {"black": 4, "white": 3}
    assert obj["derived_batch_sizes"] == [1]


def test_load_check_wrong_schema_is_domain_error(capsys, toy_files, loans_files):
    csv_path, _ = toy_files
    _, schema_path = loans_files
    code, out, err = run(capsys, ["load-check", csv_path, "--schema", schema_path])
    assert code == 2
    payload = json.loads(err)
    assert payload["error"] == "SchemaMismatch"
    assert payload["message"]


def test_load_check_missing_file_is_environment_error(capsys, toy_files):
    _, schema_path = toy_files
    code, out, err = run(capsys, ["load-check", "/nonexistent.csv", "--schema", schema_path])
    assert code == 1
    assert "error" in json.loads(err)


def test_bad_flag_value_is_domain_error(capsys, toy_files):
    csv_path, schema_path = toy_files
    code, _, err = run(
        capsys,
        ["discrim", csv_path, "--schema", schema_path, "--lambda", "2.0"],
    )
    assert code == 2
    assert json.loads(err)["error"] == "RangeError"


def test_train_writes_model(capsys, toy_files, tmp_path):
    csv_path, schema_path = toy_files
    obj = run_json(
        capsys,
        ["train", csv_path, "--schema", schema_path, "--out-dir", str(tmp_path)]
        + FAST + ["--batch-size", "7"],
    )
    m = load_model(obj["model_path"])
    assert m.n_params == obj["n_params"]
    assert 0.0 <= obj["train_accuracy"] <= 1.0
    assert obj["final_train_loss"] > 0.0


def test_discrim_with_saved_model(capsys, toy_files, tmp_path):
    csv_path, schema_path = toy_files
    trained = run_json(
        capsys,
        ["train", csv_path, "--schema", schema_path, "--out-dir", str(tmp_path)]
        + FAST + ["--batch-size", "7"],
    )
    obj = run_json(
        capsys,
        ["discrim", csv_path, "--schema", schema_path,
         "--model", trained["model_path"]] + FAST,
    )
    assert obj["pool_pairs"] == 5 * 7
    assert obj["discriminatory_pairs"] <= obj["pool_pairs"]
    assert 0.0 <= obj["individual_discrimination"] <= 1.0
    assert obj["statistical_parity_difference"] is not None


def test_discrim_trains_when_model_omitted(capsys, toy_files):
    csv_path, schema_path = toy_files
    obj = run_json(
        capsys,
        ["discrim", csv_path, "--schema", schema_path] + FAST + ["--batch-size", "7"],
    )
    assert obj["pool_pairs"] == 5 * 7


def test_rank_outputs(capsys, toy_files, tmp_path):
    csv_path, schema_path = toy_files
    obj = run_json(
        capsys,
        ["rank", csv_path, "--schema", schema_path, "--out-dir", str(tmp_path),
         "--seed", "3"] + FAST + ["--batch-size", "7"],
    )
    ranking = Path(obj["ranking_path"])
    assert ranking.exists()
    header, *rows = ranking.read_text().strip().splitlines()
    assert header == "rank,row_id,score"
    assert len(rows) >= 1
    assert (tmp_path / "ranking_diagnostics.json").exists()
    assert obj["most_harmful"][0] == int(rows[0].split(",")[1])


def test_debias_outputs(capsys, toy_files, tmp_path):
    csv_path, schema_path = toy_files
    obj = run_json(
        capsys,
        ["debias", csv_path, "--schema", schema_path, "--out-dir", str(tmp_path),
         "--seed", "3"] + FAST + ["--batch-size", "7"],
    )
    assert obj["rows_before"] == 7
    assert obj["rows_after"] == 7 - len(obj["removed_row_ids"])
    assert Path(obj["debiased_path"]).exists()
    report = json.loads((tmp_path / "debias_report.json").read_text())
    assert report["removed_row_ids"] == obj["removed_row_ids"]


def test_grid_and_report(capsys, loans_files, tmp_path):
    csv_path, schema_path = loans_files
    obj = run_json(
        capsys,
        ["grid", csv_path, "--schema", schema_path, "--out-dir", str(tmp_path),
         "--hidden1", "6", "--hidden2", "3", "--chunk-percent", "5",
         "--epochs", "120", "--lr", "0.3", "--pool-multiplier", "3"],
    )
    # single hidden pair x 2 derived batch sizes x 2 permutation seeds
    assert obj["n_configs"] == 4
    assert set(obj["reports"]) == {"configs", "boxplot", "summary"}
    for p in obj["reports"].values():
        assert Path(p).exists()

    rep = run_json(capsys, ["report", "--out-dir", str(tmp_path)])
    assert set(rep["mean_discrimination"]) == {"full", "sr", "ours"}
    assert rep["picks"] == obj["picks"]


def test_report_without_grid_files(capsys, tmp_path):
    code, _, err = run(capsys, ["report", "--out-dir", str(tmp_path)])
    assert code == 1
    assert "error" in json.loads(err)


def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


def test_unknown_command_rejected():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_module_invocation_subprocess(toy_files):
    csv_path, schema_path = toy_files
    proc = subprocess.run(
        [sys.executable, "-m", "fairtrim.cli", "load-check", csv_path,
         "--schema", schema_path],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["rows"] == 7

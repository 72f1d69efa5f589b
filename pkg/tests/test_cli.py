import json
import subprocess
import sys
from pathlib import Path

import pytest

from infodesign import cli, corpus
from infodesign.game import dump_spec, spec_to_dict

SPECS = Path(__file__).resolve().parent.parent / "specs"


def outputs(out: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_judge_cpse_verify(tmp_path, capsys):
    code = cli.run(["verify", "--spec", str(SPECS / "judge.json"), "--mode", "cpse", "--grid", "100",
                    "--out", str(tmp_path)])
    text = capsys.readouterr().out
    assert code == 0
    assert "verification: PASS" in text
    assert "tabulated value at the prior: sender 0.6" in text
    for name in ("values.csv", "policy.csv", "horizon.csv", "verification.csv", "summary.txt"):
        assert (tmp_path / name).exists()


def test_missing_spec_names_the_path(tmp_path, capsys):
    code = cli.run(["solve", "--spec", str(tmp_path / "nowhere.json"), "--out", str(tmp_path)])
    assert code == 1
    assert "nowhere.json" in capsys.readouterr().err


def test_invalid_spec_exits_with_spec_error(tmp_path, capsys):
    doc = spec_to_dict(corpus.judge())
    doc["initial"] = [0.7, 0.7]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert cli.run(["validate", "--spec", str(path)]) == 1
    assert "initial" in capsys.readouterr().err
    assert cli.run(["solve", "--spec", str(path), "--out", str(tmp_path / "o")]) == 1


def test_validate_accepts_corpus_documents(capsys):
    for path in sorted(SPECS.glob("*.json")):
        assert cli.run(["validate", "--spec", str(path)]) == 0
    assert capsys.readouterr().out.count(": ok") == len(list(SPECS.glob("*.json")))


def test_rollout_with_zero_paths_writes_no_trajectories(tmp_path):
    code = cli.run(["rollout", "--spec", str(SPECS / "conflict.json"), "--paths", "0",
                    "--out", str(tmp_path)])
    assert code == 0
    assert not (tmp_path / "trajectories.csv").exists()


def test_runs_are_byte_identical(tmp_path):
    argv = ["rollout", "--spec", str(SPECS / "two_receivers.json"), "--paths", "500", "--seed", "7",
            "--verify"]
    assert cli.run(argv + ["--out", str(tmp_path / "a")]) == 0
    assert cli.run(argv + ["--out", str(tmp_path / "b")]) == 0
    a, b = outputs(tmp_path / "a"), outputs(tmp_path / "b")
    assert a == b and "trajectories.csv" in a


def test_report_reads_existing_directory(tmp_path, capsys):
    cli.run(["solve", "--spec", str(SPECS / "conflict.json"), "--out", str(tmp_path)])
    first = capsys.readouterr().out
    assert cli.run(["report", "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out == first
    (tmp_path / "policy.csv").unlink()
    assert cli.run(["report", "--out", str(tmp_path)]) == 1
    assert cli.run(["report", "--out", str(tmp_path / "empty")]) == 1


def test_verification_failure_exit_code(tmp_path, monkeypatch):
    import infodesign.verify as verify

    monkeypatch.setattr(verify.DeviationReport, "passed", property(lambda self: False))
    code = cli.run(["verify", "--spec", str(SPECS / "conflict.json"), "--out", str(tmp_path)])
    assert code == 3
    assert "verification: FAIL" in (tmp_path / "summary.txt").read_text()


def test_solver_failure_exit_code(tmp_path, monkeypatch):
    import infodesign.backward as backward
    from infodesign.stage import NoFixedPointFound

    def fail(ctx, mu, responder):
        raise NoFixedPointFound("injected")

    monkeypatch.setattr(backward, "sender_stage", fail)
    code = cli.run(["solve", "--spec", str(SPECS / "conflict.json"), "--grid", "4", "--out", str(tmp_path)])
    assert code == 2
    assert "partial" in (tmp_path / "summary.txt").read_text()


def test_module_entry_point(tmp_path):
    path = tmp_path / "judge.json"
    dump_spec(corpus.judge(), path)
    proc = subprocess.run([sys.executable, "-m", "infodesign", "validate", "--spec", str(path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "ok" in proc.stdout


def test_unknown_mode_is_rejected():
    with pytest.raises(SystemExit):
        cli.run(["solve", "--spec", "x.json", "--mode", "nash"])

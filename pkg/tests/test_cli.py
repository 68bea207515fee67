import json
from dataclasses import replace

import pytest

from conftest import needs_z3

from cpsp import cli
from cpsp.completeness import canonicalize


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("name, code", [
    ("external-distance-fraud", 0), ("mafia-fraud", 0),
    ("exact-clock", 1), ("honest-near", 1),
])
def test_verify_exit_codes(capsys, name, code):
    got, out, _ = run(capsys, "verify", f"corpus/{name}.cpsp", "--backend", "builtin")
    assert got == code
    assert ("ATTACK FOUND" in out) == (code == 0)
    assert "states" in out and "solver calls" in out


def test_limits_exit_two(capsys):
    code, out, _ = run(capsys, "verify", "corpus/honest-near.cpsp", "--max-states", "2",
                       "--backend", "builtin")
    assert code == 2 and "inconclusive" in out


def test_rounding_needs_smt_under_builtin(capsys):
    # clock rounding is outside the builtin fragment, so no safe verdict is claimed
    code, out, _ = run(capsys, "verify", "corpus/in-between-ticks.cpsp", "--backend", "builtin")
    assert code == 2 and "inconclusive" in out


@needs_z3
def test_rounding_attack_found_with_smt(capsys):
    assert run(capsys, "verify", "corpus/in-between-ticks.cpsp")[0] == 0


def test_errors_exit_three(capsys, tmp_path):
    code, _, err = run(capsys, "verify", str(tmp_path / "missing.cpsp"))
    assert code == 3 and err
    bad = tmp_path / "bad.cpsp"
    bad.write_text("scenario s { participants p1; run p1: nope(); goal complete(p1); }")
    assert run(capsys, "verify", str(bad))[0] == 3
    assert run(capsys, "verify", "corpus/honest-near.cpsp", "--backend", "smt",
               "--solver-path", "/nonexistent/z3")[0] == 3


def test_auto_degrades_without_solver(capsys):
    code, _, err = run(capsys, "verify", "corpus/external-distance-fraud.cpsp",
                       "--solver-path", "/nonexistent/z3")
    assert code == 0 and "builtin" in err


def test_emit_both_then_export(capsys, tmp_path):
    code, out, _ = run(capsys, "verify", "corpus/mafia-fraud.cpsp", "--backend", "builtin",
                       "--emit", "both", "--out", str(tmp_path))
    assert code == 0
    data = json.loads((tmp_path / "mafia_fraud.json").read_text())
    assert data["schema"] == 1 and data["nodes"]
    direct = (tmp_path / "mafia_fraud.dot").read_text()
    assert direct.startswith("digraph")
    dot = tmp_path / "again.dot"
    assert run(capsys, "export", str(tmp_path / "mafia_fraud.json"), "--out", str(dot))[0] == 0
    assert dot.read_text().startswith("digraph")
    code, out, _ = run(capsys, "export", str(tmp_path / "mafia_fraud.json"))
    assert code == 0 and "subgraph cluster_" in out


def test_export_rejects_other_schemas(capsys, tmp_path):
    p = tmp_path / "t.json"
    p.write_text(json.dumps({"schema": 99}))
    assert run(capsys, "export", str(p))[0] == 3


def test_corpus_commands(capsys):
    code, out, _ = run(capsys, "corpus", "list")
    assert code == 0 and "corpus/nsl-db-hijack.cpsp" in out
    code, out, _ = run(capsys, "corpus", "show", "honest-near.cpsp")
    assert code == 0 and "scenario" in out


def test_check_completeness(capsys):
    code, out, _ = run(capsys, "check-completeness", "corpus/mafia-fraud-scattered.cpsp",
                       "--trials", "5", "--backend", "builtin")
    assert code == 0 and "0 failed" in out
    code, out, _ = run(capsys, "check-completeness", "corpus/mafia-fraud.cpsp")
    assert code == 0 and "vacuous" in out


def test_check_completeness_catches_a_broken_canonicalizer(capsys):
    def lossy(b):
        b2 = canonicalize(b)
        return replace(b2, msg=b2.msg[:-1])
    code = cli.cmd_check_completeness("corpus/mafia-fraud-scattered.cpsp", None, 5, 0,
                                      "builtin", None, canon=lossy)
    assert code == 1 and "FAIL" in capsys.readouterr().out


def test_environment_defaults(monkeypatch):
    args = cli.build_parser().parse_args(["verify", "corpus/honest-near.cpsp",
                                          "--backend", "builtin"])
    monkeypatch.setenv("CPSP_WORKERS", "3")
    monkeypatch.setenv("CPSP_SOLVER", "/opt/solver")
    cfg = cli.run_config(args)
    assert cfg.workers == 3 and cfg.solver_path == "/opt/solver"
    args.workers = 1
    assert cli.run_config(args).workers == 1  # flags win
    monkeypatch.setenv("CPSP_WORKERS", "many")
    args.workers = None
    with pytest.raises(cli.CliError):
        cli.run_config(args)


def test_smt_backend_needs_a_solver(monkeypatch):
    monkeypatch.setenv("CPSP_SOLVER", "/nonexistent/z3")
    args = cli.build_parser().parse_args(["verify", "x.cpsp", "--backend", "smt"])
    with pytest.raises(cli.CliError):
        cli.run_config(args)


@needs_z3
def test_verify_with_smt(capsys):
    code, out, _ = run(capsys, "verify", "corpus/exact-clock.cpsp", "--backend", "smt")
    assert code == 1

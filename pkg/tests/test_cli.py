import csv
import dataclasses
import json

import numpy as np
import pytest

from cocycle_lab import arithmetic
from cocycle_lab.algebra import FLIP
from cocycle_lab.cli import (SecondIterateRow, ExperimentConfig, build_config, build_parser,
                             cmd_identities, identity_suite, main)
from cocycle_lab.reduction import ReductionStepReport


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def csv_body(text):
    lines = text.splitlines()
    assert lines[0].startswith("# generated ") and "seed=" in lines[0]
    return list(csv.reader(lines[1:]))


def test_identities_pass(capsys):
    code, out, _ = run(capsys, "identities", "--seed", "3")
    rows = csv_body(out)
    assert code == 0
    assert rows[0] == ["identity", "error", "tolerance", "status"]
    assert len(rows) == 6 and all(r[3] == "pass" for r in rows[1:])


def test_corrupted_flip_fails_identities():
    bad = FLIP.q + np.array([0, 0, 1e-6, 0])
    rows = identity_suite(np.random.default_rng(0), samples=100, flip=bad)
    assert any(err > tol for _, err, tol in rows)
    cfg = ExperimentConfig(samples=100, output_path=None)
    assert cmd_identities(cfg, flip=bad) == 3


def test_arith_json(capsys):
    code, out, _ = run(capsys, "arith", "--depth", "8")
    data = json.loads(out)
    assert code == 0
    assert {"generated", "seed", "alpha", "partial_quotients", "dc", "dc_tilde"} <= set(data)
    assert data["partial_quotients"] == [1] * 8
    assert data["seed"] == 0


def test_corollary_columns(capsys):
    code, out, _ = run(capsys, "corollary", "--grid", "128", "--z", "0.06,0.08")
    rows = csv_body(out)
    assert code == 0
    assert rows[0] == [f.name for f in dataclasses.fields(SecondIterateRow)]
    assert len(rows) == 4
    for r in rows[1:]:
        assert float(r[1]) < 1e-10 and r[2] == "True"


def test_reduce_columns(capsys):
    code, out, _ = run(capsys, "reduce", "--trunc", "8,16", "--tol", "1e-8")
    lines = out.splitlines()
    assert code == 0
    assert lines[0].startswith("# generated") and "z_n=" in lines[0]
    assert lines[1].split(",") == list(ReductionStepReport.FIELDS)


def test_reduce_rejects_liouville_frequency(capsys):
    alpha = repr(arithmetic.liouville_like())
    code, _, err = run(capsys, "reduce", "--alpha", alpha)
    assert code == 2 and err


def test_pipeline_writes_json_and_csv(tmp_path, capsys):
    out = tmp_path / "run.json"
    code, _, _ = run(capsys, "pipeline", "--out", str(out))
    assert code == 0
    data = json.loads(out.read_text())
    assert data["distance_to_constant"] <= 1e-3
    assert "generated" in data and data["seed"] == 0
    table = csv_body(out.with_suffix(".csv").read_text())
    assert table[0] == ["m", "distance_to_constant"]
    assert len(table) == 1 + len(data["distances"])


def test_pipeline_precondition_exit(capsys):
    code, _, err = run(capsys, "pipeline", "--alpha", "0.5000001")
    assert code == 2 and "cocycle-lab" in err


def test_unknown_config_field(tmp_path, capsys):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"gamma": 10, "colour": "red"}))
    code, _, err = run(capsys, "arith", "--config", str(p))
    assert code == 2 and "colour" in err


def test_invalid_values_are_config_errors(capsys):
    assert run(capsys, "arith", "--alpha", "1.5")[0] == 2
    assert run(capsys, "corollary", "--z", "0.5")[0] == 2
    assert run(capsys, "arith", "--grid", "7")[0] == 2


def test_missing_config_is_io_error(tmp_path, capsys):
    assert run(capsys, "arith", "--config", str(tmp_path / "nope.json"))[0] == 4


def test_unwritable_output_is_io_error(tmp_path, capsys):
    code, _, _ = run(capsys, "arith", "--out", str(tmp_path / "missing" / "x.json"))
    assert code == 4


def test_flags_override_config_over_defaults(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"gamma": 5, "tau": 3, "truncation": [4, 8]}))
    cfg = build_config(build_parser().parse_args(["arith", "--config", str(p), "--tau", "2.5"]))
    assert cfg.gamma == 5 and cfg.tau == 2.5 and cfg.truncation == (4, 8)
    assert cfg.K == ExperimentConfig().K


@pytest.mark.parametrize("command", ["identities", "corollary", "reduce", "arith"])
def test_outputs_are_deterministic(command, tmp_path, capsys):
    texts = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main([command, "--seed", "11", "--out", str(out)]) == 0
        texts.append(out.read_text())
    strip = [[ln for ln in t.splitlines() if "generated" not in ln] for t in texts]
    assert strip[0] == strip[1]

import json
import math
import os
import subprocess
import sys

import pytest

from lyaplab import config as C
from lyaplab.cli import main, run

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")


def write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(json.dumps(doc, indent=2))
    return str(p)


def read_outputs(d):
    return {f: open(os.path.join(d, f), "rb").read() for f in sorted(os.listdir(d))}


def test_lyap_diag(tmp_path):
    out = tmp_path / "out"
    assert main(["lyap", "--config", os.path.join(CONFIGS, "lyap_diag.json"), "--out-dir", str(out)]) == 0
    doc = json.loads((out / "results.json").read_text())
    assert doc["results"]["lyap_top"]["estimate"] == pytest.approx(math.log(2), abs=1e-12)
    assert doc["config_hash"] == C.config_hash(doc["config"])
    assert doc["master_seed"] == 1


def test_missing_field_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, "bad.json", {"subcommand": "lyap", "measure": {"kind": "sic"}, "trials": 10})
    assert main(["lyap", "--config", cfg, "--out-dir", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "line" in err and "n" in err


def test_schema_violation_points_at_line(tmp_path, capsys):
    text = '{\n  "subcommand": "lyap",\n  "measure": {"kind": "sic"},\n  "n": -4,\n  "trials": 10\n}\n'
    p = tmp_path / "neg.json"
    p.write_text(text)
    assert main(["lyap", "--config", str(p), "--out-dir", str(tmp_path / "o")]) == 2
    assert "line 4" in capsys.readouterr().err


def test_malformed_json_exit_2(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{"subcommand": "lyap",\n  "n": }')
    assert main(["lyap", "--config", str(p)]) == 2


def test_subcommand_mismatch(tmp_path):
    assert main(["gap", "--config", os.path.join(CONFIGS, "lyap_diag.json"), "--out-dir", str(tmp_path)]) == 2


def test_numerical_failure_exit_3(tmp_path, capsys):
    doc = json.load(open(os.path.join(CONFIGS, "wdist_example.json")))
    doc.update(solver="sinkhorn", reg=1e-4, tol=1e-15, max_iter=1)
    cfg = write(tmp_path, "w.json", doc)
    assert main(["wdist", "--config", cfg, "--out-dir", str(tmp_path / "o")]) == 3
    assert "numerical failure" in capsys.readouterr().err


@pytest.mark.parametrize("name", sorted(os.listdir(CONFIGS)))
def test_shipped_configs_byte_identical(name, tmp_path):
    cfg = os.path.join(CONFIGS, name)
    sub = json.load(open(cfg))["subcommand"]
    outs = []
    for i, workers in enumerate(("1", "4")):
        d = str(tmp_path / f"run{i}")
        assert main([sub, "--config", cfg, "--out-dir", d, "--workers", workers, "--emit-plot"]) == 0
        outs.append(read_outputs(d))
    assert outs[0] == outs[1]
    # results re-parse and their embedded config revalidates
    doc = json.loads(outs[0]["results.json"])
    C.validate(doc["config"])
    assert doc["config_hash"] == C.config_hash(doc["config"])


def test_flags_override_config(tmp_path):
    out = tmp_path / "o"
    assert main(["lyap", "--config", os.path.join(CONFIGS, "lyap_diag.json"), "--n", "7", "--seed", "9",
                 "--out-dir", str(out)]) == 0
    doc = json.loads((out / "results.json").read_text())
    assert doc["config"]["n"] == 7 and doc["master_seed"] == 9


def test_flag_only_invocation(tmp_path):
    out = tmp_path / "o"
    assert main(["hyperbolic", "clt", "--n", "20", "--trials", "200", "--out-dir", str(out)]) == 0
    doc = json.loads((out / "results.json").read_text())
    assert doc["results"]["relator_residual"] < 1e-9


def test_run_returns_document(tmp_path):
    doc = run({"subcommand": "gap", "measure": {"kind": "sic"}, "n": 20, "trials": 50}, str(tmp_path))
    assert doc["results"]["lyap_sum2"]["estimate"] == 0


def test_print_schema(capsys):
    assert main(["--print-schema"]) == 0
    assert "$schema" in json.loads(capsys.readouterr().out)


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "lyaplab", "lyap", "--config",
                        os.path.join(CONFIGS, "lyap_diag.json"), "--out-dir", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0 and (tmp_path / "results.json").exists()

import json
import subprocess
import sys
from importlib import resources

import pytest

from uedalab.cli import EXIT_INPUT, EXIT_OK, canonical, fmt, run


def data_path(name):
    return str(resources.files("uedalab").joinpath("data", name))


def report(argv):
    code, text = run(argv)
    assert code == EXIT_OK, text
    return json.loads(text)


def test_float_format_round_trips():
    for x in (0.1, 1 / 3, 1e-300, 123456789.123):
        assert float(fmt(x)) == x
    assert canonical({"b": 1.5, "a": 2 + 1j}) == {"b": "1.5", "a": ["2", "1"]}


def test_header_fields():
    out = report(["cover-data", "--case", "cuspidal"])
    h = out["header"]
    assert set(h) == {"tool", "version", "command", "seed", "precision", "tolerances", "inputSha256"}
    assert h["command"] == "cover-data"


def test_ueda_type_default_model():
    out = report(["ueda-type"])
    assert out["report"]["type"] == "infinite_up_to"


def test_classify_bundle_angles():
    assert report(["classify-bundle", "--angle", "2/5"])["report"]["classification"]["verdict"] == "Torsion"
    assert report(["classify-bundle", "--angle", "golden"])["report"]["classification"]["verdict"] == "E1"


def test_majorant_plain():
    out = report(["majorant", "--M0", "2", "--R0", "3", "--n-max", "10"])["report"]
    assert out["coefficients"][1] == "2.0"


def test_cover_data_cusp():
    out = report(["cover-data", "--case", "cuspidal"])["report"]
    assert out["bNu"] == [2, 3, 6] and out["deckGroup"] == "Z/6" and out["b"] == 1


def test_cover_data_gcd_exit_code():
    code, text = run(["cover-data", "--a", "2", "--a-nu", "2"])
    assert code == EXIT_INPUT and "gcd" in text


def test_bad_json_exit_code(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{\"points\": [1, 2,, 3]}")
    code, text = run(["classify-nine-points", "--points", str(p)])
    assert code == EXIT_INPUT and "line 1" in text


def test_nine_points_pencil():
    out = report(["classify-nine-points", "--points", data_path("pencil.json")])
    assert out["report"]["theoremCase"] == "i"


def test_psh_verify_csv(tmp_path):
    csv_path = tmp_path / "grid.csv"
    out = report(["psh-verify", "--grid", "10", "--checks", "2", "--csv", str(csv_path)])
    assert out["report"]["profile"]["fractionPosDef"] == "1"
    lines = csv_path.read_text().splitlines()
    assert len(lines) == 101 and lines[0].startswith("w_re")


@pytest.mark.parametrize("argv", [
    ["ueda-type", "--n-max", "3"],
    ["classify-bundle", "--angle", "golden", "--depth", "2000"],
    ["majorant", "--M0", "1", "--R0", "1", "--angle", "golden", "--n-max", "50"],
    ["psh-verify", "--grid", "8", "--checks", "2"],
    ["cover-data", "--case", "concurrent_lines"],
])
def test_byte_determinism(argv):
    assert run(argv) == run(argv)


def test_seed_changes_header():
    a = report(["cover-data", "--case", "cuspidal", "--seed", "1"])
    b = report(["cover-data", "--case", "cuspidal", "--seed", "2"])
    assert a["report"] == b["report"] and a["header"]["seed"] != b["header"]["seed"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "uedalab", "cover-data", "--case", "cuspidal"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and json.loads(res.stdout)["report"]["a"] == 6

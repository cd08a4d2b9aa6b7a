import json
import subprocess
import sys
from pathlib import Path

import pytest

from vblin import __version__
from vblin.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, load_schema, run

SCEN = Path(__file__).resolve().parent.parent / "scenarios"

EXPECTED_FAIL = {"linearize-rank-deficient", "foliation-noninvariant"}
COMMANDS = {
    "linearize": "linearize", "estimates": "verify-estimates", "symmetry": "symmetry",
    "plot": "plot", "foliation": "foliation-check", "parse": "parse-check",
}


def command_for(path: Path) -> str:
    return COMMANDS[path.stem.split("-")[0]]


FAST = ["parse-check", "symmetry-saddle", "plot-circles", "foliation-rotation",
        "foliation-noninvariant", "estimates-discontinuity", "linearize-cubic", "linearize-rank-deficient"]


@pytest.mark.parametrize("name", FAST)
def test_scenario_exit_codes(name, tmp_path):
    path = SCEN / f"{name}.json"
    out = tmp_path / "out.json"
    code = run([command_for(path), "--scenario", str(path), "--out", str(out)])
    assert code == (EXIT_FAIL if name in EXPECTED_FAIL else EXIT_OK)
    if command_for(path) != "plot":
        report = json.loads(out.read_text())
        assert report["tool"] == "vblin" and report["version"] == __version__
        assert report["pass"] is (code == EXIT_OK)
        assert len(report["scenario_sha256"]) == 64
    else:
        assert out.read_text().startswith("<svg")


def test_symmetry_svg_written(tmp_path):
    out = tmp_path / "circle.json"
    assert run(["symmetry", "--scenario", str(SCEN / "symmetry-circle.json"), "--out", str(out)]) == EXIT_OK
    assert out.with_suffix(".svg").read_text().startswith("<svg")


def _write(tmp_path, obj, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return str(p)


class TestConfigErrors:
    def test_missing_file(self, tmp_path):
        assert run(["parse-check", "--scenario", str(tmp_path / "nope.json")]) == EXIT_CONFIG

    def test_malformed_json(self, tmp_path):
        assert run(["parse-check", "--scenario", _write(tmp_path, "{oops")]) == EXIT_CONFIG

    def test_unknown_key(self, tmp_path):
        assert run(["parse-check", "--scenario", _write(tmp_path, {"expressions": [], "extra": 1})]) == EXIT_CONFIG

    def test_seminorm_order_too_high(self, tmp_path):
        sc = json.loads((SCEN / "estimates-cubic.json").read_text())
        sc["seminorm_orders"] = [4]
        assert run(["verify-estimates", "--scenario", _write(tmp_path, sc)]) == EXIT_CONFIG

    def test_bad_expression_in_map(self, tmp_path):
        sc = json.loads((SCEN / "linearize-cubic.json").read_text())
        sc["map"]["b"] = ["v+tan(v)"]
        assert run(["linearize", "--scenario", _write(tmp_path, sc)]) == EXIT_CONFIG

    def test_map_not_zero_section_preserving(self, tmp_path):
        sc = json.loads((SCEN / "linearize-cubic.json").read_text())
        sc["map"]["b"] = ["v+1"]
        assert run(["linearize", "--scenario", _write(tmp_path, sc)]) == EXIT_CONFIG

    def test_threads(self):
        assert run(["parse-check", "--scenario", str(SCEN / "parse-check.json"), "--threads", "0"]) == EXIT_CONFIG


def test_schemas_are_strict():
    for cmd in COMMANDS.values():
        assert load_schema(cmd)["additionalProperties"] is False


def test_module_entry_point(tmp_path):
    out = tmp_path / "r.json"
    proc = subprocess.run(
        [sys.executable, "-m", "vblin", "parse-check", "--scenario", str(SCEN / "parse-check.json"), "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["command"] == "parse-check"
    ver = subprocess.run([sys.executable, "-m", "vblin", "--version"], capture_output=True, text=True)
    assert __version__ in ver.stdout


def test_stdout_report(capsys):
    assert run(["parse-check", "--scenario", str(SCEN / "parse-check.json")]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["pass"] is True

import json
import subprocess
import sys

import pytest

from gmicrolocal.cli import KINDS, ScenarioSpec, ValidationError, main, run_scenario, validate


def _run(tmp_path, *args):
    return main(list(args) + ["--out", str(tmp_path)])


def test_all_kinds_registered():
    assert len(KINDS) == 19


@pytest.mark.parametrize("kind,extra", [
    ("classify", []),
    ("compose", ["--symbol", "xi", "--symbol-b", "x", "--trunc", "2"]),
    ("adjoint", []),
    ("transpose", []),
    ("parametrix", []),
    ("symbol-order", ["--symbol", "one_plus_xi2"]),
    ("kernel", []),
    ("flow", ["--times", "0.5"]),
    ("apply", ["--fixture", "delta1d", "--grid", "64"]),
    ("wavefront", ["--fixture", "delta1d"]),
    ("singsupp", ["--fixture", "two_deltas1d"]),
    ("propagate", ["--times", "1.0"]),
])
def test_kinds_pass(tmp_path, kind, extra):
    assert _run(tmp_path, kind, *extra) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["pass"] is True
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["scenario"]["kind"] == kind
    assert "tau_dir" in man["thresholds"] and "wall_seconds" not in man


def test_ginf_pair_summary(tmp_path):
    assert _run(tmp_path, "ginf") == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["checks"] == {"lorentzian_fast": True, "lorentzian_slow": True}


def test_failing_check_exits_one(tmp_path):
    # the truncation-order criterion fails on this implementation (see the README)
    assert _run(tmp_path, "verify-all", "--criteria", "4") == 1


def test_validation_errors_exit_two(tmp_path, capsys):
    assert _run(tmp_path, "wavefront", "--grid", "100") == 2
    assert "config.grid" in capsys.readouterr().err
    assert _run(tmp_path, "wavefront", "--eps", "1:3") == 2


def test_module_error_exits_two(tmp_path, capsys):
    assert _run(tmp_path, "parametrix", "--symbol", "sin_x") == 2
    assert "NotElliptic" in capsys.readouterr().err


def test_validate_field_paths():
    with pytest.raises(ValidationError) as e:
        validate(ScenarioSpec("wavefront", inputs={"fixture": "nope"}))
    assert e.value.path == "inputs.fixture"
    with pytest.raises(ValidationError) as e:
        validate(ScenarioSpec("bogus"))
    assert e.value.path == "kind"


def test_scenario_file_and_flag_override(tmp_path):
    scen = tmp_path / "s.json"
    scen.write_text(json.dumps({"kind": "compose", "inputs": {"symbol": "xi", "symbol_b": "x"},
                                "config": {"trunc": 4}, "seed": 3}))
    out = tmp_path / "o"
    assert main(["compose", "--scenario", str(scen), "--trunc", "2", "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["scenario"]["config"]["trunc"] == 2 and man["scenario"]["seed"] == 3


def test_kind_mismatch_in_file(tmp_path):
    scen = tmp_path / "s.json"
    scen.write_text(json.dumps({"kind": "adjoint"}))
    assert main(["compose", "--scenario", str(scen), "--out", str(tmp_path)]) == 2


def test_bundles_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        run_scenario(ScenarioSpec("apply", {"fixture": "delta2d"}, {"grid": 64}, 0, str(d)))
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files and all((a / f).read_bytes() == (b / f).read_bytes() for f in files)


def test_timing_flag_records_wall_time(tmp_path):
    assert main(["adjoint", "--out", str(tmp_path), "--timing"]) == 0
    assert "wall_seconds" in json.loads((tmp_path / "manifest.json").read_text())


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "gmicrolocal", "transpose", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert json.loads(r.stdout)["pass"] is True

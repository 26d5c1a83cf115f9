import json
import subprocess
import sys

import pytest

from bforge.cli_io import InstanceError, PipelineConfig, UsageError, main, parse_data, parse_instance, run
from bforge.splitting_engine import SplittingSpec
from bforge.tree_system import TreeSystem, build_tree_system
from conftest import bundled
from test_tree_system import two_blob


def test_validate_bundled(capsys):
    assert main(["validate", "--instance", "bundled:small_system"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["ok"] and out["sections"]["kind"] == "tree_system"


def test_decompose_round_trip_exit_zero(tmp_path):
    assert main(["decompose", "--instance", "bundled:small_system", "--out", str(tmp_path),
                 "--format", "dot"]) == 0
    assert (tmp_path / "decompose.dot").read_text().startswith("graph")
    rep = json.loads((tmp_path / "decompose.json").read_text())
    assert rep["sections"]["isomorphism"]["ok"]


def test_complete_refuses_half(capsys):
    assert main(["complete", "--instance", "bundled:three_level", "--depth", "3", "--eps", "1/2"]) == 1
    assert main(["complete", "--instance", "bundled:three_level", "--depth", "3", "--eps", "3/4"]) == 0


def test_combine_refusal_names_required_depth(capsys):
    status = main(["combine", "--instance", "bundled:z3_free_product", "--depth", "3", "--radius", "3"])
    captured = capsys.readouterr()
    assert status == 1
    assert "depth" in captured.err and "4" in captured.err
    assert json.loads(captured.out)["sections"]["required_depth"] == 4


def test_negative_distance_is_named(tmp_path, capsys):
    data = two_blob()
    data["spaces"]["v1"] = {"points": ["a", "b"], "dist": [["0", "-1"], ["-1", "0"]]}
    path = tmp_path / "neg.json"
    path.write_text(json.dumps(data))
    assert main(["validate", "--instance", str(path)]) == 2
    err = capsys.readouterr().err
    assert "negative" in err or "dist[0][1]" in err


def test_bad_json_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n "base": "v",\n "tree": [\n}\n')
    with pytest.raises(InstanceError, match=r"line \d+, column \d+"):
        parse_instance(str(path))


def test_missing_file_and_bad_eps(capsys):
    assert main(["validate", "--instance", "/nonexistent/x.json"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["complete", "--instance", "bundled:three_level", "--eps", "3/0"])
    assert exc.value.code == 2
    assert "zero denominator" in capsys.readouterr().err


def test_config_validation():
    with pytest.raises(UsageError):
        PipelineConfig("bundled:small_system", "explode")
    with pytest.raises(UsageError):
        PipelineConfig("bundled:small_system", "glue", threads=0)
    with pytest.raises(UsageError):
        run(PipelineConfig("bundled:z3_free_product", "glue"))


def test_instance_kinds():
    assert isinstance(parse_data(bundled("z3_free_product")), SplittingSpec)
    s = parse_data(bundled("small_system"))
    assert isinstance(s, TreeSystem)
    assert build_tree_system(json.loads(json.dumps(s.to_json()))) == s


@pytest.mark.parametrize("fmt", ["json", "text", "dot"])
def test_every_format_renders(fmt, tmp_path):
    status, rep = run(PipelineConfig("bundled:small_system", "glue", out=str(tmp_path), format=fmt))
    assert status == 0
    assert rep.render(fmt)
    assert (tmp_path / "glue.json").exists()


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "bforge", "validate", "--instance", "bundled:small_system"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and '"ok": true' in res.stdout

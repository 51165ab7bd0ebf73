import contextlib
import io
import json

import pytest

from mev_arena.cli import main
from mev_arena.errors import ValidationError
from mev_arena.presets import all_presets, get_preset
from mev_arena.scenario import ScenarioIOError, build_scenario, load_scenario, read_document


def run_cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


@pytest.mark.parametrize("name", sorted(all_presets()))
def test_presets_validate(name):
    sc = build_scenario(get_preset(name))
    assert sc.kind == get_preset(name)["kind"]


def test_preset_files_match_builtins(tmp_path):
    code, _, _ = run_cli("presets", "--out", str(tmp_path))
    assert code == 0
    for name in all_presets():
        assert load_scenario(tmp_path / f"{name}.json").raw == get_preset(name)


def write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def test_named_violations(tmp_path):
    doc = get_preset("pga-war")
    doc["game"]["gas_limit"] = -5
    doc["game"]["latency"] = {"nodes": ["p0", "seq"], "edges": [["p0", "nowhere", 1]],
                              "owner": {"p0": 0}, "sequencer": "seq"}
    with pytest.raises(ValidationError) as exc:
        build_scenario(doc)
    assert any("gas_limit" in v for v in exc.value.violations)
    doc["game"]["gas_limit"] = 1000
    with pytest.raises(ValidationError) as exc:
        build_scenario(doc)
    assert any("nowhere" in v for v in exc.value.violations)
    code, _, err = run_cli("simulate", "--scenario", str(write(tmp_path, doc)))
    assert code == 1 and "nowhere" in err


def test_all_violations_reported_together():
    doc = get_preset("pga-war")
    doc["game"]["gas_limit"] = 0
    doc["game"]["value"] = -1
    doc["analysis"]["runs"] = 0
    with pytest.raises(ValidationError) as exc:
        build_scenario(doc)
    assert len(exc.value.violations) >= 3


def test_io_error_distinct(tmp_path):
    with pytest.raises(ScenarioIOError):
        read_document(tmp_path / "missing.json")
    code, _, err = run_cli("simulate", "--scenario", str(tmp_path / "missing.json"))
    assert code == 2 and "cannot read" in err


def test_float_literals_rejected(tmp_path):
    p = tmp_path / "f.json"
    p.write_text(json.dumps(get_preset("pga-war")).replace('"epsilon": "50"', '"epsilon": 0.5'))
    with pytest.raises(ValidationError, match="float"):
        load_scenario(p)


def test_unknown_flag_and_subcommand_exit_1():
    assert run_cli("no-such-command")[0] == 1
    assert run_cli("counterexample", "--bogus")[0] == 1
    code, _, err = run_cli("simulate", "--scenario", "preset:nope")
    assert code == 1 and "unknown preset" in err


def test_counterexample_output():
    code, out, err = run_cli("counterexample", "--L", "100", "--gmin", "10", "--m", "1",
                             "--eps", "0.01")
    assert code == 0
    header, row = out.strip().splitlines()
    rec = dict(zip(header.split(","), row.split(",")))
    assert (rec["FBR"], rec["OPT"], rec["ratio"]) == ("10.1", "90", "101/900")
    assert "FBR=10.1 OPT=90 ratio=101/900" in err


def test_solve_kev_json():
    code, out, _ = run_cli("solve-kev", "--items", "6:5,5:4,5:4", "--L", "10", "--format", "json")
    data = json.loads(out)
    assert code == 0 and data["command"] == "solve-kev"
    assert data["result"]["exact"]["revenue"] == 40
    assert data["result"]["greedy_by_price"]["revenue"] == 30


def test_pomev_uniagent():
    code, _, err = run_cli("pomev", "--scenario", "preset:pga-uniagent", "--runs", "20")
    assert code == 0 and "PoMEV=1" in err


def test_simulate_byte_identical(tmp_path):
    args = ("simulate", "--scenario", "preset:pga-war", "--seed", "7", "--runs", "30")
    a = run_cli(*args, "--out", str(tmp_path / "a"))
    b = run_cli(*args, "--threads", "4", "--out", str(tmp_path / "b"))
    assert a == b and a[0] == 0
    assert (tmp_path / "a/events.jsonl").read_bytes() == (tmp_path / "b/events.jsonl").read_bytes()


def test_local_mev_search_preset():
    code, out, _ = run_cli("local-mev", "--scenario", "preset:search-example", "--format", "json")
    assert code == 0
    assert json.loads(out)["result"]

import csv
import io
import json
import math
import subprocess
import sys

import pytest

from topowalk.cli import main
from topowalk.errors import ConfigError
from topowalk.experiments import (config_copy, load_preset, parse_config, preset_names, run,
                                  write_outputs)

FIGURE_PRESETS = ["fig6", "fig7a", "fig7b", "fig7c", "fig8", "fig9", "fig10"]


def _walk_config(**over):
    cfg = {
        "kind": "walk",
        "chains": [{"regions": [{"phi_a": -math.pi / 2, "phi_b": 0.0, "cells": 40}]}],
        "injection": {"cell": 20, "pol": "V"},
        "steps": 12,
    }
    cfg.update(over)
    return cfg


def _rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_bundled_presets():
    names = preset_names()
    for expected in FIGURE_PRESETS + ["register", "entangle-edge-symmetric", "entangle-edge-crossed",
                                      "transmission", "winding-sweep"]:
        assert expected in names


@pytest.mark.parametrize("name", ["fig6", "fig9", "fig10", "register", "transmission",
                                  "winding-sweep", "entangle-edge-crossed"])
def test_config_round_trip(name):
    cfg = load_preset(name)
    again = parse_config(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


def test_list_presets(capsys):
    assert main(["--list-presets"]) == 0
    assert "fig7b" in capsys.readouterr().out.split()


def test_zero_steps_rejected_without_outputs(tmp_path, capsys):
    text = json.dumps(_walk_config(steps=0), indent=2)
    path = tmp_path / "bad.json"
    path.write_text(text)
    out = tmp_path / "out"
    assert main(["--config", str(path), "--out", str(out)]) == 2
    err = capsys.readouterr().err
    expected_line = text.splitlines().index('  "steps": 0') + 1
    assert f"line {expected_line}" in err and "'steps'" in err
    assert not out.exists()


@pytest.mark.parametrize("mutation,field", [
    ({"injection": {"cell": 40}}, "injection.cell"),
    ({"kind": "dance"}, "kind"),
    ({"extra": 1}, "extra"),
    ({"steps": 2.5}, "steps"),
    ({"params": {"fit_start": -1}}, "params.fit_start"),
    ({"params": {"nonsense": 1}}, "params.nonsense"),
])
def test_invalid_fields_are_named(mutation, field):
    with pytest.raises(ConfigError) as info:
        parse_config(json.dumps(_walk_config(**mutation), indent=2))
    assert info.value.field == field
    assert info.value.line is not None


def test_sweep_validation():
    base = load_preset("winding-sweep").to_dict()
    base["sweep"] = {"mode": "grid", "axes": {"phi_a": [], "phi_b": [0.0]}}
    with pytest.raises(ConfigError):
        parse_config(base)
    base["sweep"] = {"mode": "grid", "axes": {"phi_a": list(range(400)), "phi_b": list(range(400))}}
    with pytest.raises(ConfigError):
        parse_config(base)
    base["sweep"] = {"mode": "points", "axes": {"phi_a": [0.0, 1.0], "phi_b": [0.0]}}
    with pytest.raises(ConfigError):
        parse_config(base)


def test_invalid_json_and_missing_source(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "kind": "walk",\n  oops\n}')
    assert main(["--config", str(path)]) == 2
    assert "line 3" in capsys.readouterr().err
    assert main([]) == 2
    assert main(["--config", str(tmp_path / "missing.json")]) == 2
    assert main(["--preset", "no-such-thing"]) == 2
    assert main(["--preset", "fig6", "--threads", "-1"]) == 2


def test_wavefront_at_chain_end_exits_with_invariant(tmp_path, capsys):
    path = tmp_path / "short.json"
    cfg = _walk_config(steps=40)
    cfg["chains"][0]["regions"][0]["cells"] = 20
    cfg["injection"]["cell"] = 3
    path.write_text(json.dumps(cfg))
    assert main(["--config", str(path), "--out", str(tmp_path / "o")]) == 3
    assert "invariant" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_outputs_and_summary(tmp_path, capsys):
    assert main(["--preset", "fig7b", "--out", str(tmp_path)]) == 0
    printed = capsys.readouterr().out
    assert "boundary_peak_mass_final" in printed
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["boundary_peak.csv", "distribution.csv", "manifest.json", "summary.json"]
    rows = _rows((tmp_path / "distribution.csv").read_text())
    assert rows[0] == ["step", "cell", "subsite", "probability"]
    assert {int(r[0]) for r in rows[1:]} == set(range(101))
    summary = json.loads((tmp_path / "summary.json").read_text())
    for key in ("crossing_mass", "crossing_mass_left", "boundary_peak_mass_final", "boundary", "config"):
        assert key in summary
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert "distribution.csv" in json.dumps(manifest)


@pytest.mark.parametrize("name", ["fig9", "fig10", "transmission"])
def test_reruns_are_byte_identical(tmp_path, name):
    a, b = tmp_path / "a", tmp_path / "b"
    write_outputs(run(load_preset(name)), a)
    write_outputs(run(load_preset(name)), b)
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_worker_count_does_not_change_outputs():
    cfg = load_preset("fig10")
    one, two = run(cfg, threads=1), run(cfg, threads=2)
    assert one.files == two.files


def test_single_point_sweep_equals_direct_run():
    cfg = load_preset("fig10")
    one = config_copy(cfg, sweep={"mode": "points", "axes": {"phi_a": [2.0944], "phi_b": [3.1416]}})
    row = _rows(run(one).files["sweep.csv"])[1]
    direct = cfg.to_dict()
    direct.pop("sweep")
    direct["chains"][0]["regions"][-1].update(phi_a=2.0944, phi_b_H=3.1416, phi_b_V=3.1416)
    summary = run(parse_config(direct)).summary
    assert float(row[6]) == summary["boundary_peak_mass_final"]
    assert float(row[7]) == summary["crossing_mass"]


def test_fig6_histogram_has_two_lobes():
    res = run(load_preset("fig6"))
    final = {}
    for step, cell, _, p in _rows(res.files["distribution.csv"])[1:]:
        if step == "50":
            final[int(cell)] = final.get(int(cell), 0.0) + float(p)
    middle = sum(final.get(c, 0.0) for c in range(62, 75)) / 13
    assert max(final.get(c, 0.0) for c in range(0, 60)) > 2 * middle
    assert max(final.get(c, 0.0) for c in range(77, 172)) > 2 * middle


def test_fig7b_peak_converges():
    res = run(load_preset("fig7b"))
    peak = [float(r[1]) for r in _rows(res.files["boundary_peak.csv"])[1:]]
    assert len(peak) == 101
    assert min(peak[50:]) > 0.2
    assert abs(sum(peak[50:75]) / 25 - sum(peak[75:]) / 26) < 0.03


def test_fig10_rows_follow_windings():
    rows = _rows(run(load_preset("fig10")).files["sweep.csv"])
    head = rows[0]
    assert head[:5] == ["index", "phi_a", "phi_b", "nu_left", "nu_right"]
    body = [dict(zip(head, r)) for r in rows[1:]]
    assert [int(r["index"]) for r in body] == list(range(len(body)))
    differ = [r for r in body if r["nu_left"] != r["nu_right"]]
    same = [r for r in body if r["nu_left"] == r["nu_right"]]
    assert len(differ) >= 5 and same
    assert all(float(r["boundary_peak_mass_final"]) > 0.05 for r in differ)
    assert all(float(r["boundary_peak_mass_final"]) < 0.01 for r in same)


def test_transmission_sweep_is_monotone():
    rows = _rows(run(load_preset("transmission")).files["sweep.csv"])
    head = rows[0]
    t = [float(r[head.index("transmission")]) for r in rows[1:]]
    assert all(a > b for a, b in zip(t, t[1:]))


def test_gap_closed_points_are_recorded():
    cfg = load_preset("winding-sweep")
    small = config_copy(cfg, sweep={"mode": "points", "axes": {"phi_a": [0.7, -math.pi / 2], "phi_b": [0.7, 0.0]}})
    rows = _rows(run(small).files["sweep.csv"])
    assert rows[1][3] == "" and rows[2][3] == "1"


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "topowalk", "--list-presets"],
                         capture_output=True, text=True, check=True)
    assert "fig6" in out.stdout.split()

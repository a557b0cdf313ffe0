import csv
import json
from pathlib import Path

import numpy as np
import pytest

from boltz1d.cli import _a_profile, main, read_growth_spec
from boltz1d.config import PRESET_NAMES, ConfigError, load_config, parse_config, preflight
from boltz1d.diagnostics import CSV_COLUMNS
from boltz1d.integrator import Trajectory, run
from boltz1d.output import emit_outputs

DOCS = Path(__file__).resolve().parents[1] / "docs" / "presets.md"

TINY = """
[scenario]
preset = near-maxwellian-torus
[grid]
Nx = 4
Nv = 6
[integrator]
dt = 0.02
t_end = 0.06
snapshot_stride = 1
[diagnostics]
n_q = 16
[output]
directory = {out}
snapshots = yes
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_empty_config_is_default_preset():
    cfg = parse_config("")
    assert cfg.preset == "near-maxwellian-torus"
    assert cfg.get("grid.Nx") == 8 and cfg.get("integrator.scheme") == "strang"


def test_errors_are_collected_and_named():
    text = "[integrator]\ndt = 0\nsnapshot_stride = 0\n[grid]\nNv = 7\nwidth = 3\n[bogus]\nx = 1\n"
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    errs = e.value.errors
    assert any(m.startswith("integrator.dt") for m in errs)
    assert any(m.startswith("integrator.snapshot_stride") for m in errs)
    assert any("grid.width: unknown key" in m for m in errs)
    assert any("[bogus]" in m for m in errs)
    assert len(errs) >= 4


def test_type_and_cross_field_errors():
    with pytest.raises(ConfigError) as e:
        parse_config("[grid]\nNx = eight\n")
    assert "grid.Nx" in str(e.value)
    with pytest.raises(ConfigError) as e:
        parse_config("[scenario]\npreset = line-dissipation\n[diagnostics]\nreference = auto\n")
    assert "torus-only" in str(e.value)
    with pytest.raises(ConfigError) as e:
        parse_config("[grid]\nVmax = 2.0\n")
    assert "grid.Vmax" in str(e.value)
    with pytest.raises(ConfigError) as e:
        parse_config("[scenario]\npreset = nope\n")
    assert "unknown preset" in str(e.value)


def _docs_table():
    rows = {}
    for line in DOCS.read_text().splitlines():
        cells = [c.strip() for c in line.strip().strip("|").split("|")]
        if len(cells) == 4 and "." in cells[0] and not cells[0].startswith("-"):
            rows[cells[0]] = cells[1:]
    return rows


def test_presets_doc_matches_code():
    rows = _docs_table()
    assert rows
    for i, name in enumerate(PRESET_NAMES):
        flat = parse_config(f"[scenario]\npreset = {name}\n").flat()
        for key, cells in rows.items():
            v = flat[key]
            assert cells[i] == ("-" if v is None else str(v)), (name, key)
    documented = set(rows)
    expected = {k for k in parse_config("").flat() if not k.startswith(("output.", "scenario."))}
    assert documented == expected


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_presets_build(name):
    cfg = parse_config(f"[scenario]\npreset = {name}\n")
    st = cfg.initial_state()
    assert st.mass == pytest.approx(cfg.get("datum.m"), rel=1e-12)
    cfg.kernel()
    cfg.integrator()


def test_near_maxwellian_preflight_below_threshold():
    cfg = parse_config("")
    info = preflight(cfg)
    assert info["below_threshold"] and info["H_in"] < info["entropy_threshold"]
    assert info["dt_nu_max"] < 0.5


def test_run_outputs_and_determinism(tmp_path):
    out = tmp_path / "out"
    cfgp = write(tmp_path, "tiny.ini", TINY.format(out=out))
    assert main(["run", str(cfgp)]) == 0
    csv_bytes = (out / "diagnostics.csv").read_bytes()
    man_bytes = (out / "manifest.json").read_bytes()
    with open(out / "diagnostics.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == tuple(CSV_COLUMNS)
    assert len(rows) == 1 + 4
    man = json.loads(man_bytes)
    assert man["status"] == "completed" and man["all_checks_hold"]
    assert {c["name"] for c in man["checks"]} >= {"mass_drift", "entropy_monotone", "no_clipping", "growth_bound"}
    assert (out / "plots" / "X.svg").read_text().startswith("<svg")
    assert len(list((out / "snapshots").iterdir())) == 4
    assert main(["run", str(cfgp)]) == 0
    assert (out / "diagnostics.csv").read_bytes() == csv_bytes
    assert (out / "manifest.json").read_bytes() == man_bytes


def test_run_output_override(tmp_path):
    cfgp = write(tmp_path, "tiny.ini", TINY.format(out=tmp_path / "ignored"))
    assert main(["run", str(cfgp), "-o", str(tmp_path / "o2")]) == 0
    assert (tmp_path / "o2" / "manifest.json").exists()
    assert not (tmp_path / "ignored").exists()


def test_empty_trajectory_writes_manifest_only(tmp_path):
    cfg = parse_config("")
    written = emit_outputs(Trajectory(status="failed", error="boom"), cfg, outdir=tmp_path)
    assert set(written) == {"json"}
    assert sorted(p.name for p in tmp_path.iterdir()) == ["manifest.json"]
    assert json.loads((tmp_path / "manifest.json").read_text())["error"] == "boom"


def test_zero_kernel_line_disperses(tmp_path):
    text = """
[scenario]
preset = line-dissipation
[grid]
L = 4.0
Nx = 32
Vmax = 3.0
Nv = 6
[kernel]
type = zero
[datum]
T = 0.25
width = 0.5
center = 0.0
[integrator]
dt = 0.1
t_end = 2.0
[diagnostics]
n_q = 32
"""
    tr = run(parse_config(text))
    X = tr.column("X")
    mass = tr.column("mass")
    assert tr.status == "completed"
    assert X[-1] < 0.5 * X[0]
    assert mass[-1] < mass[0]
    assert tr.counters["leak_x"] == pytest.approx(mass[0] - mass[-1], rel=1e-9)


def test_verify_cli_report(tmp_path, capsys):
    p = tmp_path / "v.json"
    assert main(["verify", "pinsker", "--trials", "5", "--seed", "7", "--json", str(p)]) == 0
    rep = json.loads(p.read_text())
    entry = rep["lemmas"][0]
    for key in ("lhs", "rhs", "margin", "trials", "seed"):
        assert key in entry
    assert entry["seed"] == 7 and entry["trials"] == 5 and rep["all_hold"]
    assert main(["verify", "nonsense"]) == 2


def test_oracle_cli(tmp_path):
    good = write(tmp_path, "g.ini", "[growth]\nmode = bony\nc = 2\nphi0 = 0.5\na = decay:1,2\nn_t = 64\n")
    assert main(["oracle", str(good), "--json", str(tmp_path / "o.json")]) == 0
    out = json.loads((tmp_path / "o.json").read_text())
    assert out["holds"] and out["log_oracle"] <= out["log_bound"]
    ent = write(tmp_path, "e.ini", "[growth]\nmode = small_entropy\nc = 1\nphi0 = 2\nc2 = 0.3\nalpha = 0.4\n"
                "eps = 0.5\nm = 1\nn_t = 64\n")
    assert main(["oracle", str(ent)]) == 0
    bad = write(tmp_path, "b.ini", "[growth]\nmode = bony\nspeed = 3\n")
    assert main(["oracle", str(bad)]) == 2
    assert main(["oracle", str(tmp_path / "missing.ini")]) == 2


def test_growth_spec_profiles():
    t = np.linspace(0, 1, 5)
    np.testing.assert_allclose(_a_profile("const:2", t), 2.0)
    np.testing.assert_allclose(_a_profile("decay:1,1", t), np.exp(-t))
    np.testing.assert_allclose(_a_profile("power:1,2", t), (1 + t) ** -2.0)
    np.testing.assert_allclose(_a_profile("table:0,1", t), t)
    with pytest.raises(ValueError):
        _a_profile("wiggle:1", t)


def test_read_growth_spec_rejects_bad_mode(tmp_path):
    p = write(tmp_path, "g.ini", "[growth]\nmode = linear\n")
    with pytest.raises(ConfigError):
        read_growth_spec(p)


def test_check_kernel_cli(tmp_path, capsys):
    ok = write(tmp_path, "k.ini", "[kernel]\nC = 2.0\nR0 = 0.3\n")
    assert main(["check-kernel", str(ok)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["h1_holds"] and rep["h2_holds"]
    np.savetxt(tmp_path / "hard.txt", np.column_stack([[0.0, 100.0], [0.0, 100.0]]))
    bad = write(tmp_path, "bad.ini", "[kernel]\ntype = custom-table\ntable = hard.txt\nR0 = 0.0\n")
    assert main(["check-kernel", str(bad)]) == 1


def test_bad_config_exit_code(tmp_path, capsys):
    p = write(tmp_path, "x.ini", "[integrator]\ndt = -1\n")
    assert main(["run", str(p)]) == 2
    assert "integrator.dt" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "none.ini")]) == 2


def test_load_config_resolves_table_relative_to_file(tmp_path):
    np.savetxt(tmp_path / "tab.txt", np.column_stack([np.linspace(0, 10, 11), np.linspace(0, 1, 11)]))
    p = write(tmp_path, "c.ini", "[kernel]\ntype = custom-table\ntable = tab.txt\nR0 = 0.5\n")
    assert load_config(p).kernel().R0 == 0.5

import csv
import io
import re
import subprocess
import sys

import numpy as np
import pytest

from asym_mdi import cli
from asym_mdi.config import ConfigError, default_config, parse_config, render_ini
from asym_mdi.errors import LPInfeasibleError, NumericError

TINY = ["--set", "source.spdc.grid_points=128", "--set", "optimizer.particles=4",
        "--set", "optimizer.iterations=2", "--set", "optimizer.restart_particles=3",
        "--set", "optimizer.restart_iterations=2", "--set", "sweep.distance_points=3",
        "--set", "sweep.distance_max_km=60", "--set", "sweep.size_points=3"]


def run_cli(capsys, *argv):
    code = cli.run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    body = [l for l in text.splitlines() if not l.startswith("#")]
    return list(csv.reader(io.StringIO("\n".join(body))))


def header(text):
    return [l for l in text.splitlines() if l.startswith("#")]


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def test_defaults_round_trip():
    cfg = default_config()
    again = parse_config(render_ini(cfg))
    assert again.values == cfg.values
    assert cfg["finite"]["n_tot"] == 1e12 and cfg["channel"]["relay_efficiency"] == 0.6


def _without(section):
    lines, skip = [], False
    for line in render_ini(default_config()).splitlines():
        if line.startswith("["):
            skip = line.strip() == f"[{section}]"
        if not skip:
            lines.append(line)
    return "\n".join(lines)


def test_missing_section_is_named(tmp_path, capsys):
    path = tmp_path / "c.ini"
    path.write_text(_without("channel"))
    code, _, err = run_cli(capsys, "pnd", "-c", str(path), "--source", "wcp", "--intensity", "0.5")
    assert code == 2
    assert "[channel]" in err


@pytest.mark.parametrize("edit, needle", [
    ((r"relay_efficiency = \S+", "relay_efficiency = fast"), "relay_efficiency"),
    ((r"relay_efficiency = \S+", "relay_efficiency = 1.5"), "relay_efficiency"),
    ((r"misalignment = \S+", "misalignment = 0.015\nbogus_key = 1"), "bogus_key"),
    ((r"n_tot = \S+", "n_tot = -5"), "n_tot"),
])
def test_bad_values_name_the_key(edit, needle):
    text, hits = re.subn(edit[0], edit[1], render_ini(default_config()), count=1)
    assert hits == 1
    with pytest.raises(ConfigError, match=needle):
        parse_config(text)


def test_unit_errors_name_the_expected_unit():
    text = render_ini(default_config()).replace("filter_fwhm_grad_s = 600.0\n", "", 1)
    with pytest.raises(ConfigError, match="GHz"):
        parse_config(text)


def test_override_switches_filter_units():
    cfg = default_config()
    with pytest.raises(ConfigError, match="exactly one"):
        cfg.with_override("source.spdc", "filter_fwhm_ghz", "600")
    cfg = cfg.with_overrides([("source.spdc", "filter_fwhm_grad_s", ""),
                              ("source.spdc", "filter_fwhm_ghz", "600")])
    assert cfg["source.spdc"]["filter_fwhm_ghz"] == 600.0
    assert cfg["source.spdc"]["filter_fwhm_grad_s"] == ""
    with pytest.raises(ConfigError, match="relay_efficiency"):
        cfg.with_override("channel", "relay_efficiency", "2")


def test_cli_switches_filter_units(capsys):
    code, out, _ = run_cli(capsys, "schmidt", *TINY, "--set", "source.spdc.filter_fwhm_grad_s=",
                           "--set", "source.spdc.filter_fwhm_ghz=600")
    assert code == 0 and "# source.spdc.filter_fwhm_ghz = 600.0" in header(out)


def test_override_rejects_unknown_keys(capsys):
    code, _, err = run_cli(capsys, "schmidt", "--set", "channel.nonsense=1")
    assert code == 2 and "nonsense" in err
    code, _, err = run_cli(capsys, "schmidt", "--set", "oops")
    assert code == 2


# ---------------------------------------------------------------------------
# exit codes
# ---------------------------------------------------------------------------

def test_numeric_failure_exit_code(monkeypatch, capsys):
    def boom(cfg, args):
        raise NumericError("root finder diverged")

    monkeypatch.setitem(cli.COMMANDS, "schmidt", boom)
    code, _, err = run_cli(capsys, "schmidt")
    assert code == 3 and "diverged" in err


def test_infeasible_lp_exit_code(monkeypatch, capsys):
    def boom(cfg, args):
        raise LPInfeasibleError("no feasible yields")

    monkeypatch.setitem(cli.COMMANDS, "keyrate", boom)
    code, _, err = run_cli(capsys, "keyrate", "--reference-set", "1")
    assert code == 4 and "infeasible" in err


def test_input_errors_exit_code(capsys):
    assert run_cli(capsys, "keyrate", "--scenario", "ww", "--params", "0.1,0.5")[0] == 2
    assert run_cli(capsys, "keyrate", "--scenario", "ww", "--reference-set", "1")[0] == 2
    assert run_cli(capsys, "sweep-distance", "--scenarios", "xx")[0] == 2
    assert run_cli(capsys, "pnd", "--source", "wcp", "--intensity", "-1")[0] == 2


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def test_schmidt_output(capsys):
    code, out, _ = run_cli(capsys, "schmidt", *TINY)
    assert code == 0
    rows = table(out)
    assert rows[0] == ["mode", "lambda", "wcp_overlap_re", "wcp_overlap_im", "wcp_proportion"]
    lam = [float(r[1]) for r in rows[1:]]
    assert lam == sorted(lam, reverse=True) and sum(lam) <= 1 + 1e-12
    assert any(l.startswith("# purity = ") for l in header(out))


def test_schmidt_mode_functions(capsys):
    code, out, _ = run_cli(capsys, "schmidt", "--mode-functions", "2", *TINY)
    assert code == 0
    rows = table(out)
    assert rows[0][:3] == ["omega_rad_s", "psi1_re", "psi1_im"] and len(rows) == 129


def test_hom_output(capsys):
    code, out, _ = run_cli(capsys, "hom", *TINY, "--set", "sweep.tau_points=11")
    assert code == 0
    p = [float(r[1]) for r in table(out)[1:]]
    assert len(p) == 11 and min(p) == p[5] and max(p) <= 0.5


def test_pnd_output(capsys):
    code, out, _ = run_cli(capsys, "pnd", "--source", "wcp", "--intensity", "0.5",
                           "--eta", "0.3", *TINY)
    assert code == 0
    p = np.array([float(r[1]) for r in table(out)[1:]])
    assert p[1] == pytest.approx(0.15 * np.exp(-0.15), rel=1e-12)
    code, out, _ = run_cli(capsys, "pnd", "--source", "spdc", "--intensity", "0.1", *TINY)
    assert code == 0 and any(l.startswith("# mass = ") for l in header(out))


def test_keyrate_output_and_header(capsys):
    code, out, _ = run_cli(capsys, "keyrate", "--reference-set", "1", *TINY)
    assert code == 0
    rows = table(out)
    assert rows[0] == ["distance_km", "rate"] and len(rows) == 4
    assert all(float(r[1]) >= 0 for r in rows[1:])
    digest = [l for l in header(out) if l.startswith("# config_sha256 = ")]
    assert len(digest) == 1 and len(digest[0].split(" = ")[1]) == 64
    assert any("n_tot" in l for l in header(out))
    code, out2, _ = run_cli(capsys, "keyrate", "--reference-set", "1", *TINY,
                            "--set", "finite.n_tot=1e10")
    assert [l for l in header(out2) if "sha256" in l] != digest


def test_keyrate_size_grid(capsys):
    code, out, _ = run_cli(capsys, "keyrate", "--scenario", "ww",
                           "--params", "0.05,0.5,0.05,0.8,0.05,0.05", "--vary", "size", *TINY)
    assert code == 0
    rows = table(out)
    assert rows[0] == ["n_tot", "rate"]
    rates = [float(r[1]) for r in rows[1:]]
    assert rates == sorted(rates)


def test_optimize_is_byte_identical_on_rerun(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run_cli(capsys, "optimize", "--scenario", "ww", "-o", str(a), *TINY)[0] == 0
    assert run_cli(capsys, "optimize", "--scenario", "ww", "-o", str(b), *TINY)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    rows = table(a.read_text())
    assert rows[0][:3] == ["scenario", "index", "distance_km"] and len(rows) == 4


def test_sweep_distance_structure(capsys):
    code, out, _ = run_cli(capsys, "sweep-distance", "--scenarios", "ww,ws", *TINY)
    assert code == 0
    rows = table(out)[1:]
    assert [r[0] for r in rows] == ["ww"] * 3 + ["ws"] * 3
    assert [r[1] for r in rows] == ["1", "2", "3"] * 2


def test_sweep_size_structure(capsys):
    code, out, _ = run_cli(capsys, "sweep-size", "--scenario", "ww", *TINY)
    assert code == 0
    rows = table(out)[1:]
    assert [r[0] for r in rows] == ["finite"] * 3 + ["asymptotic"]
    assert rows[-1][1] == "inf"


def test_fixed_params_structure(capsys):
    code, out, _ = run_cli(capsys, "fixed-params", "--reference", *TINY,
                           "--set", "sweep.fixed_indices=1,3,70")
    assert code == 0
    names = {r[0] for r in table(out)[1:]}
    assert names == {"optimized", "optimal_index_1", "optimal_index_3",
                     "reference_set_1", "reference_set_2", "reference_set_3"}
    assert any("index 70 outside" in l for l in header(out))


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "asym_mdi.cli", "--version"],
                         capture_output=True, text=True, check=True)
    assert res.stdout.strip()

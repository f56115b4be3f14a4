import json
import subprocess
import sys

import pytest

from phenotaxis.cli import build_parser, main
from phenotaxis.experiments import RunConfig


def test_presets_list(capsys):
    assert main(["presets", "list"]) == 0
    names = capsys.readouterr().out.split()
    assert "fig2-classical" in names and "fig3-switching-ci" in names


def test_presets_show_and_write(tmp_path, capsys):
    assert main(["presets", "show", "fig1-classical"]) == 0
    shown = capsys.readouterr().out
    assert RunConfig.loads(shown).name == "fig1-classical"
    path = tmp_path / "p.toml"
    assert main(["presets", "write", "fig1-classical", str(path)]) == 0
    assert RunConfig.load(path) == RunConfig.loads(shown)
    assert main(["presets", "show"]) == 2
    assert main(["presets", "show", "nope"]) == 2


def test_flags_override_file(tmp_path):
    path = tmp_path / "c.toml"
    RunConfig(N=100).save(path)
    args = build_parser().parse_args(["run", "--config", str(path), "--N", "50", "--t-end", "7",
                                      "--set", "flux=sg"])
    from phenotaxis.cli import _resolve_config
    cfg = _resolve_config(args)
    assert (cfg.N, cfg.t_end, cfg.flux) == (50, 7.0, "sg")


def test_run_and_plot_data(tmp_path, capsys):
    out = tmp_path / "runs"
    common = ["--kind", "symmetric", "--gamma", "10", "--N", "40", "--t_end", "30", "--n-samples", "20",
              "--output-dir", str(out)]
    assert main(["run", "--name", "one"] + common) == 0
    assert "one:" in capsys.readouterr().out
    rec = json.loads((out / "one" / "record.json").read_text())
    assert rec["config"]["N"] == 40
    assert main(["plot-data", "--kind", "timeseries", "--out", str(tmp_path / "pd"), str(out / "one")]) == 0
    assert (tmp_path / "pd" / "one-timeseries.dat").exists()


def test_sweep_command(tmp_path, capsys):
    out = tmp_path / "runs"
    rc = main(["sweep", "--axis", "gamma", "--values", "1,10", "--N", "40", "--t-end", "30",
               "--name", "sw", "--output-dir", str(out)])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "value,cause,t_event,peak,mass_drift,lemma44_margin"
    assert len(lines) == 3
    assert (out / "sw-gamma-sweep.csv").exists()


def test_stability_command(capsys):
    assert main(["stability", "--preset", "fig1-classical-ci"]) == 0
    out = capsys.readouterr().out
    assert "# unstable" in out
    assert main(["stability", "--preset", "fig1-classical-ci", "--rho", "0.1"]) == 0
    assert "# stable" in capsys.readouterr().out


def test_errors_are_reported(capsys):
    assert main(["run", "--set", "bogus=1"]) == 2
    assert "unknown config keys" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["sweep", "--axis", "R", "--values", "1"])


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "phenotaxis", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("phenotaxis ")

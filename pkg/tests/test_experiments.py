import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from phenotaxis.diagnostics import read_rows
from phenotaxis.experiments import GAMMA_GRID, PRESETS, ConfigError, RunConfig, get_preset
from phenotaxis.experiments.runner import (
    SUMMARY_COLUMNS, RunRecord, emit_plot_data, run, sweep,
)


def small(tmp_path, **kw):
    base = dict(name="t", kind="symmetric", gamma=10.0, dim=1, N=60, t_end=60.0, n_samples=40,
                output_dir=str(tmp_path))
    base.update(kw)
    return RunConfig(**base)


# -- configuration -------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_roundtrip(name):
    cfg = PRESETS[name]
    assert RunConfig.loads(cfg.dumps()) == cfg
    assert RunConfig.loads(RunConfig.loads(cfg.dumps()).dumps()) == cfg


def test_preset_contents():
    assert GAMMA_GRID == (1.0, 10.0, 100.0, 1000.0, 10000.0)
    for fig, dim in (("fig1", 1), ("fig2", 2), ("fig3", 3)):
        for variant in ("classical", "switching"):
            full, ci = PRESETS[f"{fig}-{variant}"], PRESETS[f"{fig}-{variant}-ci"]
            assert full.dim == ci.dim == dim
            assert full.N == 10_000 and ci.N == 2000
            assert full.R == 10.0 and full.rho == 6.0
    assert PRESETS["fig2-classical"].model().is_classical
    with pytest.raises(KeyError):
        get_preset("fig4")


def test_config_file_has_unit_comments(tmp_path):
    text = RunConfig().dumps()
    assert "[time]" in text and "[length]" in text
    for line in text.splitlines():
        assert "#" in line


@pytest.mark.parametrize("text,msg", [
    ("gama = 3.0\n", "unknown"),
    ("N = 4\n", "N"),
    ("kind = 'switching'\nalpha = 1.0\n", "beta"),
    ("kind = 'classical'\ngamma = 1.0\n", "gamma"),
    ("flux = 'weno'\n", "flux"),
    ("[model]\nkind = 'classical'\n", "flat"),
    ("rho = -1.0\n", "rho"),
    ("N = 100.5\n", "N"),
    ("t_end = \n", "TOML"),
])
def test_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        RunConfig.loads(text)


def test_kind_change_drops_old_rates():
    cfg = RunConfig().replace(kind="classical")
    assert cfg.gamma is None and cfg.model().is_classical
    cfg = RunConfig.loads("kind = 'switching'\nalpha = 2.0\nbeta = 3.0\n")
    assert cfg.model().rates == (2.0, 3.0)


def test_overrides():
    cfg = RunConfig().with_overrides(["N=500", "flux=sg", "t_end=1e3", "name = run-a"])
    assert (cfg.N, cfg.flux, cfg.t_end, cfg.name) == (500, "sg", 1000.0, "run-a")
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(["N"])


@given(st.floats(1e-3, 1e4), st.integers(8, 10**5), st.sampled_from([1, 2, 3]),
       st.sampled_from(["central", "upwind", "sg"]), st.floats(1e-3, 1e3))
def test_config_roundtrip_property(gamma, N, dim, flux, rho):
    cfg = RunConfig(gamma=gamma, N=N, dim=dim, flux=flux, rho=rho)
    assert RunConfig.loads(cfg.dumps()) == cfg
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_integrator_settings_follow_config():
    cfg = RunConfig(t_end=100.0, n_samples=20, dt_max=0.0)
    icfg = cfg.integrator()
    assert icfg.dt_max == 10.0
    assert icfg.schedule().size == 21 and icfg.schedule()[0] == 0.0
    assert icfg.max_density_cap == cfg.max_density_cap


# -- runs ----------------------------------------------------------------------

def test_run_writes_consistent_record(tmp_path):
    rec = run(small(tmp_path))
    rows = rec.rows()
    assert rows[0].t == 0.0
    assert all(b.t > a.t for a, b in zip(rows, rows[1:]))
    assert rec.peak == rows[-1].max_z
    assert rec.mass_drift < 1e-10
    assert rec.lemma44_margin > 0
    prof = rec.profile()
    assert prof.shape == (60, 5)
    np.testing.assert_array_equal(prof[:, 4], prof[:, 1] + prof[:, 3])
    assert RunRecord.load(tmp_path / "t") == rec
    assert RunConfig.load(tmp_path / "t" / "config.toml") == small(tmp_path)
    assert rec.version


def test_blow_up_record_ends_at_its_maximum(tmp_path):
    cfg = small(tmp_path, name="b", kind="classical", gamma=None, dim=2, N=200, t_end=400.0)
    rec = run(cfg)
    assert rec.cause == "blow_up" and rec.t_c is not None
    rows = rec.rows()
    assert rows[-1].max_z == max(r.max_z for r in rows)
    assert math.isnan(rec.lemma44_margin)


def test_reruns_are_bit_identical(tmp_path):
    a = run(small(tmp_path / "a"))
    b = run(small(tmp_path / "b"))
    for attr in ("diagnostics_path", "profile_path"):
        assert open(getattr(a, attr)).read() == open(getattr(b, attr)).read()
    assert (a.cause, a.t_event, a.peak, a.stats) == (b.cause, b.t_event, b.peak, b.stats)


def test_record_json_keeps_nan(tmp_path):
    rec = run(small(tmp_path, kind="classical", gamma=None))
    back = RunRecord.load(tmp_path / "t" / "record.json")
    assert math.isnan(back.lemma44_margin)
    with pytest.raises(ValueError):
        RunRecord.load(rec.diagnostics_path)


def test_sweep_order_and_summary(tmp_path):
    values = [100.0, 1.0, 10.0]
    summary, records = sweep(small(tmp_path, name="s"), "gamma", values)
    assert [r[0] for r in summary] == values
    assert [r.config["gamma"] for r in records] == values
    lines = (tmp_path / "s-gamma-sweep.csv").read_text().splitlines()
    assert lines[1] == "# " + ",".join(SUMMARY_COLUMNS)
    assert [float(l.split(",")[0]) for l in lines[2:]] == values


def test_parallel_sweep_matches_serial(tmp_path):
    values = [1.0, 10.0]
    serial, _ = sweep(small(tmp_path / "a", name="s"), "gamma", values, workers=1)
    para, _ = sweep(small(tmp_path / "b", name="s"), "gamma", values, workers=2)
    assert serial == para


def test_empty_sweep(tmp_path):
    summary, records = sweep(small(tmp_path), "gamma", [])
    assert summary == [] and records == []


def test_sweep_rejects_bad_input(tmp_path):
    with pytest.raises(ConfigError):
        sweep(small(tmp_path), "R", [1.0])
    with pytest.raises(ConfigError):
        sweep(small(tmp_path), "gamma", [1.0, -2.0])
    with pytest.raises(ConfigError):
        sweep(small(tmp_path), "gamma", [math.inf])


def test_sweep_records_failures_without_aborting(tmp_path):
    # a plain file where the second run's directory should go makes that run fail
    (tmp_path / "f-gamma10").write_text("in the way")
    summary, records = sweep(small(tmp_path, name="f"), "gamma", [1.0, 10.0, 100.0])
    assert [r[1] == "error" for r in summary] == [False, True, False]
    assert records[1] is None and math.isnan(summary[1][2])
    assert records[2].config["gamma"] == 100.0


def test_invalid_sweep_value_fails_before_running(tmp_path):
    with pytest.raises(ConfigError):
        sweep(small(tmp_path, name="v"), "N", [60, 7.5])
    assert not (tmp_path / "v-N60").exists()


def test_sweep_over_rho_and_n(tmp_path):
    summary, records = sweep(small(tmp_path, name="r"), "rho", [1.0, 2.0])
    assert [r.config["rho"] for r in records] == [1.0, 2.0]
    summary, records = sweep(small(tmp_path, name="n"), "N", [40, 80])
    assert [r.config["N"] for r in records] == [40, 80]


# -- plot data -----------------------------------------------------------------

def test_timeseries_and_profile_files(tmp_path):
    rec = run(small(tmp_path))
    (ts,) = emit_plot_data([rec], "timeseries", tmp_path / "pd")
    data = np.loadtxt(ts, ndmin=2)
    assert data.shape == (len(rec.rows()), 2)
    assert ts.read_text().startswith("# t max_z\n")
    (pf,) = emit_plot_data([rec], "profile", tmp_path / "pd")
    prof = np.loadtxt(pf)
    assert prof.shape[1] == 5
    np.testing.assert_array_equal(prof[:, 4], prof[:, 1] + prof[:, 3])


def test_peak_vs_gamma_with_fit(tmp_path):
    _, records = sweep(small(tmp_path, name="g"), "gamma", [1.0, 10.0, 100.0, 1000.0])
    (p,) = emit_plot_data(records, "peak_vs_gamma", tmp_path / "pd")
    data = np.loadtxt(p)
    assert data.shape == (4, 2)
    assert list(data[:, 0]) == [1.0, 10.0, 100.0, 1000.0]
    text = p.read_text()
    assert "# fit gamma>=10" in text and "# r2 " in text
    slope = float(next(l for l in text.splitlines() if l.startswith("# slope")).split()[-1])
    assert slope > 0


def test_peak_vs_gamma_rejects_mixtures(tmp_path):
    a = run(small(tmp_path, name="a"))
    b = run(small(tmp_path, name="b", N=80, gamma=20.0))
    c = run(small(tmp_path, name="c", kind="classical", gamma=None))
    with pytest.raises(ValueError):
        emit_plot_data([a, b], "peak_vs_gamma", tmp_path)
    with pytest.raises(ValueError):
        emit_plot_data([a, c], "peak_vs_gamma", tmp_path)
    with pytest.raises(ValueError):
        emit_plot_data([a, a], "peak_vs_gamma", tmp_path)
    with pytest.raises(ValueError):
        emit_plot_data([a], "histogram", tmp_path)
    (p,) = emit_plot_data([a], "peak_vs_gamma", tmp_path)
    assert "fit omitted" in p.read_text()

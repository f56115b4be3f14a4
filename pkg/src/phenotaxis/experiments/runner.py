"""Single runs, parameter sweeps and plot-ready column files.

Every run writes into its own directory ``<output_dir>/<name>/``:

``config.toml``      the resolved configuration
``diagnostics.csv``  one row per sample (see :mod:`phenotaxis.diagnostics`)
``profile.csv``      final radial profile, columns r,u,v,w,z
``record.json``      the :class:`RunRecord`
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .. import __version__
from ..diagnostics import lemma44_check, linear_fit, mass_drift, observe, read_rows, write_rows
from ..integrator import BLOW_UP, integrate
from ..model import initial_state
from ..spatial import DiscreteSystem
from .config import SWEEP_AXES, ConfigError, RunConfig

logger = logging.getLogger(__name__)

ERROR = "error"
SUMMARY_COLUMNS = ("value", "cause", "t_event", "peak", "mass_drift", "lemma44_margin")
PLOT_KINDS = ("timeseries", "peak_vs_gamma", "profile")
FIT_GAMMA_MIN = 10.0


@dataclass
class RunRecord:
    config: dict
    cause: str
    t_event: float
    diagnostics_path: str
    profile_path: str
    version: str
    wall_time: float
    peak: float
    mass_drift: float
    lemma44_margin: float
    stats: dict = field(default_factory=dict)

    @property
    def run_config(self) -> RunConfig:
        return RunConfig.from_dict(self.config)

    @property
    def t_c(self) -> Optional[float]:
        return self.t_event if self.cause == BLOW_UP else None

    def rows(self):
        return read_rows(self.diagnostics_path)

    def profile(self) -> np.ndarray:
        """Final profile as an ``(N, 5)`` array of r, u, v, w, z."""
        return np.loadtxt(self.profile_path, delimiter=",", comments="#", ndmin=2)

    def to_json(self) -> str:
        # json has no inf/nan literals that other readers accept; store them as strings
        d = {k: (repr(v) if isinstance(v, float) and not math.isfinite(v) else v)
             for k, v in dataclasses.asdict(self).items()}
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        d = json.loads(text)
        for k in ("t_event", "wall_time", "peak", "mass_drift", "lemma44_margin"):
            d[k] = float(d[k])
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "RunRecord":
        p = Path(path)
        if p.is_dir():
            p = p / "record.json"
        try:
            return cls.from_json(p.read_text())
        except (json.JSONDecodeError, TypeError) as exc:
            raise ValueError(f"{p} is not a run record: {exc}") from None


def _write_profile(path, state, mesh) -> None:
    w = state.w if state.w is not None else np.zeros_like(state.u)
    cols = np.column_stack([mesh.cell_centers, state.u, state.v, w, state.z])
    np.savetxt(path, cols, delimiter=",", header="r,u,v,w,z", comments="# ", fmt="%.17g")


def run(config: RunConfig) -> RunRecord:
    """Integrate one configuration and persist its outputs."""
    config.validate()
    spec = config.model()
    mesh = config.mesh()
    icfg = config.integrator()
    out = Path(config.output_dir) / config.name
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / "config.toml")

    system = DiscreteSystem(spec, mesh, config.flux)
    y0 = initial_state(spec, mesh, config.rho)
    rows = []
    last = {}

    def sink(t, y):
        st = system.state(t, y)
        rows.append(observe(st, mesh))
        last["state"] = st

    start = time.perf_counter()
    outcome = integrate(system, y0, icfg, sink=sink)
    wall = time.perf_counter() - start

    diag_path = out / "diagnostics.csv"
    prof_path = out / "profile.csv"
    write_rows(diag_path, rows, preamble=[f"run {config.name}", f"cause {outcome.cause}",
                                          f"t_event {outcome.t_event!r}"])
    _write_profile(prof_path, last["state"], mesh)

    margin = math.nan
    if not spec.is_classical:
        alpha, beta = spec.rates
        margin = lemma44_check(rows, alpha, beta, rows[0].mass).margin
    record = RunRecord(
        config=config.to_dict(),
        cause=outcome.cause,
        t_event=float(outcome.t_event),
        diagnostics_path=str(diag_path),
        profile_path=str(prof_path),
        version=__version__,
        wall_time=wall,
        peak=rows[-1].max_z,
        mass_drift=mass_drift(rows),
        lemma44_margin=margin,
        stats=dataclasses.asdict(outcome.stats),
    )
    record.save(out / "record.json")
    logger.info("%s: %s at t=%.6g (%.1fs)", config.name, outcome.cause, outcome.t_event, wall)
    return record


def _sweep_configs(base: RunConfig, axis: str, values: Sequence[float]):
    if axis not in SWEEP_AXES:
        raise ConfigError(f"cannot sweep {axis!r}; choose from {SWEEP_AXES}")
    configs = []
    for v in values:
        v = float(v)
        if not (math.isfinite(v) and v > 0):
            raise ConfigError(f"sweep values must be finite and positive, got {v!r}")
        configs.append(base.replace(**{axis: v, "name": f"{base.name}-{axis}{v:g}"}))
    return configs


def _run_safely(config: RunConfig):
    try:
        return run(config)
    except Exception as exc:  # recorded per row, the sweep carries on
        logger.error("%s failed: %s", config.name, exc)
        return f"{type(exc).__name__}: {exc}"


def sweep(base: RunConfig, axis: str, values: Sequence[float], workers: int = 1):
    """Run ``base`` once per value of ``axis``.

    Returns ``(summary_rows, records)`` in input order; a failed run leaves
    ``None`` in ``records`` and an ``error`` row. The summary is also written
    to ``<output_dir>/<name>-<axis>-sweep.csv``.
    """
    configs = _sweep_configs(base, axis, values)
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_safely, configs))
    else:
        results = [_run_safely(c) for c in configs]

    summary, records = [], []
    for value, res in zip(values, results):
        if isinstance(res, RunRecord):
            records.append(res)
            summary.append((float(value), res.cause, res.t_event, res.peak,
                            res.mass_drift, res.lemma44_margin))
        else:
            records.append(None)
            summary.append((float(value), ERROR, math.nan, math.nan, math.nan, math.nan))
            logger.warning("sweep %s=%g: %s", axis, value, res)

    out = Path(base.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"{base.name}-{axis}-sweep.csv", "w") as fh:
        fh.write(f"# sweep of {axis} from {base.name}\n")
        fh.write("# " + ",".join(SUMMARY_COLUMNS) + "\n")
        for row in summary:
            fh.write(",".join([repr(row[0]), row[1]] + [repr(float(x)) for x in row[2:]]) + "\n")
    return summary, records


def emit_plot_data(records: Sequence[RunRecord], kind: str, out_dir) -> list:
    """Write whitespace-delimited column files for ``kind``; returns their paths."""
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {PLOT_KINDS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = list(records)
    paths = []

    if kind == "timeseries":
        for rec in records:
            rows = rec.rows()
            p = out / f"{rec.config['name']}-timeseries.dat"
            np.savetxt(p, [(r.t, r.max_z) for r in rows], header="t max_z", fmt="%.17g")
            paths.append(p)
    elif kind == "profile":
        for rec in records:
            p = out / f"{rec.config['name']}-profile.dat"
            np.savetxt(p, rec.profile(), header="r u v w z", fmt="%.17g")
            paths.append(p)
    else:
        _check_gamma_family(records)
        pts = sorted((r.config["gamma"], r.peak) for r in records)
        p = out / f"{records[0].config['name'].rsplit('-gamma', 1)[0]}-peak_vs_gamma.dat"
        np.savetxt(p, pts, header="gamma peak", fmt="%.17g")
        fit_pts = [(g, z) for g, z in pts if g >= FIT_GAMMA_MIN]
        with open(p, "a") as fh:
            if len({g for g, _ in fit_pts}) >= 2:
                fit = linear_fit(fit_pts)
                fh.write(f"# fit gamma>={FIT_GAMMA_MIN:g}: peak = slope*gamma + intercept\n")
                fh.write(f"# slope {fit.slope!r}\n# intercept {fit.intercept!r}\n# r2 {fit.r2!r}\n")
            else:
                fh.write(f"# fit omitted: fewer than two gamma values >= {FIT_GAMMA_MIN:g}\n")
        paths.append(p)
    return paths


def _check_gamma_family(records):
    if not records:
        raise ValueError("peak_vs_gamma needs at least one record")
    if any(r.config.get("kind") != "symmetric" for r in records):
        raise ValueError("peak_vs_gamma needs symmetric-switching records")
    shared = ("dim", "R", "N", "rho", "flux")
    ref = records[0].config
    for r in records[1:]:
        diff = [k for k in shared if r.config.get(k) != ref.get(k)]
        if diff:
            raise ValueError(f"records differ in {', '.join(diff)}; cannot share a gamma axis")
    gammas = [r.config["gamma"] for r in records]
    if len(set(gammas)) != len(gammas):
        raise ValueError("duplicate gamma values among records")

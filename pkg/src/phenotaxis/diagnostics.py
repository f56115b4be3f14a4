"""Scalar observables along a trajectory and checks of provable properties."""
from __future__ import annotations

import math
from dataclasses import astuple, dataclass
from typing import Iterable, Sequence

import numpy as np

from .mesh import Mesh, integrate
from .model import State

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

CSV_COLUMNS = ("t", "max_z", "argmax_r", "mass", "mass_u", "mass_w", "min_field", "uw_gap_l2")


@dataclass(frozen=True)
class DiagnosticsRow:
    t: float
    max_z: float
    argmax_r: float
    mass: float
    mass_u: float
    mass_w: float
    min_field: float
    uw_gap_l2: float

    def to_csv(self) -> str:
        return ",".join(repr(float(x)) for x in astuple(self))

    @classmethod
    def from_csv(cls, line: str) -> "DiagnosticsRow":
        parts = line.strip().split(",")
        if len(parts) != len(CSV_COLUMNS):
            raise ValueError(f"expected {len(CSV_COLUMNS)} columns, got {len(parts)}")
        return cls(*(float(p) for p in parts))


def csv_header() -> str:
    return "# " + ",".join(CSV_COLUMNS)


def observe(state: State, mesh: Mesh) -> DiagnosticsRow:
    z = state.z
    k = int(np.argmax(z))
    mass_u = integrate(mesh, state.u)
    if state.w is None:
        # classical system: u carries the whole population, no second phenotype
        mass_w = 0.0
        gap = math.nan
    else:
        mass_w = integrate(mesh, state.w)
        gap = math.sqrt(integrate(mesh, (state.w - state.u) ** 2))
    low = min(float(np.min(f)) for f in state.fields())
    return DiagnosticsRow(
        t=float(state.t),
        max_z=float(z[k]),
        argmax_r=float(mesh.cell_centers[k]),
        mass=integrate(mesh, z),
        mass_u=mass_u,
        mass_w=mass_w,
        min_field=low,
        uw_gap_l2=gap,
    )


def write_rows(path, rows: Iterable[DiagnosticsRow], preamble: Sequence[str] = ()) -> None:
    with open(path, "w") as fh:
        for line in preamble:
            fh.write(f"# {line}\n")
        fh.write(csv_header() + "\n")
        for row in rows:
            fh.write(row.to_csv() + "\n")


def read_rows(path) -> list:
    with open(path) as fh:
        return [DiagnosticsRow.from_csv(line) for line in fh if line.strip() and not line.startswith("#")]


def mass_drift(rows: Sequence[DiagnosticsRow]) -> float:
    """Largest relative deviation of total mass from its first sampled value."""
    m0 = rows[0].mass
    return max(abs(r.mass - m0) for r in rows) / abs(m0)


@dataclass(frozen=True)
class BoundCheck:
    passed: bool
    margin: float
    worst_t: float


def lemma44_check(rows: Sequence[DiagnosticsRow], alpha: float, beta: float, m: float,
                  slack: float = 1e-3) -> BoundCheck:
    """Check ``alpha * mass_u(t) <= (1 + slack) * (m / (e t) + m beta)`` for every row with ``t > 0``.

    ``margin`` is the smallest ``(bound - lhs) / lhs``; infinite when the
    chemotaxing mass vanishes.
    """
    if m <= 0:
        raise ValueError("m must be positive")
    margin = math.inf
    worst_t = math.nan
    for r in rows:
        if r.t <= 0:
            continue
        lhs = alpha * r.mass_u
        bound = (1.0 + slack) * (m / (math.e * r.t) + m * beta)
        if lhs > 0:
            rel = (bound - lhs) / lhs
            if rel < margin:
                margin, worst_t = rel, r.t
    return BoundCheck(margin >= 0, margin, worst_t)


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float


def linear_fit(points) -> LinearFit:
    """Ordinary least squares through ``(x, y)`` pairs."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two points")
    x, y = pts[:, 0], pts[:, 1]
    if np.ptp(x) == 0:
        raise ValueError("degenerate fit: all x values are equal")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    return LinearFit(float(slope), float(intercept), r2)


def uw_gap_integral(rows: Sequence[DiagnosticsRow], t_end: float) -> float:
    """Trapezoidal ``int_0^t_end ||w - u||_2^2 dt`` over the sampled rows."""
    if len(rows) < 2:
        raise ValueError("need at least two samples")
    t = np.array([r.t for r in rows])
    g2 = np.array([r.uw_gap_l2 for r in rows]) ** 2
    if t[0] > 0 or t[-1] < t_end:
        raise ValueError(f"samples cover [{t[0]}, {t[-1]}], need [0, {t_end}]")
    inside = t <= t_end
    ts, gs = t[inside], g2[inside]
    if ts[-1] < t_end:
        g_end = np.interp(t_end, t, g2)
        ts, gs = np.append(ts, t_end), np.append(gs, g_end)
    return float(_trapezoid(gs, ts))


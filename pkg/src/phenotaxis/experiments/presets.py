"""Named run configurations for the one-, two- and three-dimensional studies.

Every figure has a classical and a switching variant at R=10, rho=6 on the
full N=10^4 mesh, plus a ``-ci`` twin on N=2000 for quick regression runs.
Switching variants use the exponentially fitted flux so that the steep,
stationary aggregates of the three-dimensional runs stay positive; classical
variants keep the central flux, whose step-size collapse marks blow-up.
"""
from __future__ import annotations

from .config import RunConfig

GAMMA_GRID = (1.0, 10.0, 100.0, 1000.0, 10000.0)
FULL_N = 10_000
CI_N = 2000

_BASE = dict(rho=6.0, R=10.0, t_end=5000.0)


def _make():
    presets = {}
    for fig, dim in (("fig1", 1), ("fig2", 2), ("fig3", 3)):
        for suffix, N in (("", FULL_N), ("-ci", CI_N)):
            name = f"{fig}-classical{suffix}"
            presets[name] = RunConfig(name=name, kind="classical", gamma=None, dim=dim, N=N,
                                      flux="central", **_BASE)
            name = f"{fig}-switching{suffix}"
            presets[name] = RunConfig(name=name, kind="symmetric", gamma=10.0, dim=dim, N=N,
                                      flux="sg", **_BASE)
    return presets


PRESETS = _make()


def get_preset(name: str) -> RunConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}") from None

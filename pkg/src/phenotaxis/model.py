"""PDE systems, initial data, uniform equilibria and linear stability.

Three systems are supported:

* ``switching``: chemotaxing ``u``, attractant ``v``, secreting ``w`` with
  switching rates ``alpha`` (u -> w) and ``beta`` (w -> u);
* ``symmetric``: the same system with ``alpha == beta == gamma``;
* ``classical``: the Keller-Segel companion in ``(z, v)`` with chemotactic
  sensitivity 1/2 and production rate 1/2.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from .mesh import Mesh

KINDS = ("switching", "symmetric", "classical")

CLASSICAL_CHI = 0.5
CLASSICAL_PRODUCTION = 0.5
PERTURBATION = 1e-3


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    alpha: Optional[float] = None
    beta: Optional[float] = None
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "switching":
            _require_rate("alpha", self.alpha)
            _require_rate("beta", self.beta)
        elif self.kind == "symmetric":
            _require_rate("gamma", self.gamma)
        if self.kind != "switching" and (self.alpha is not None or self.beta is not None):
            raise ValueError(f"alpha/beta are not parameters of kind {self.kind!r}")
        if self.kind != "symmetric" and self.gamma is not None:
            raise ValueError(f"gamma is not a parameter of kind {self.kind!r}")

    @classmethod
    def switching(cls, alpha: float, beta: float) -> "ModelSpec":
        return cls("switching", alpha=float(alpha), beta=float(beta))

    @classmethod
    def symmetric(cls, gamma: float) -> "ModelSpec":
        return cls("symmetric", gamma=float(gamma))

    @classmethod
    def classical(cls) -> "ModelSpec":
        return cls("classical")

    @property
    def is_classical(self) -> bool:
        return self.kind == "classical"

    @property
    def field_count(self) -> int:
        return 2 if self.is_classical else 3

    @property
    def field_names(self) -> tuple:
        return ("z", "v") if self.is_classical else ("u", "v", "w")

    @property
    def rates(self) -> tuple:
        """(alpha, beta) for the switching kinds."""
        if self.kind == "switching":
            return self.alpha, self.beta
        if self.kind == "symmetric":
            return self.gamma, self.gamma
        raise ValueError("the classical system has no switching rates")

    @property
    def chi(self) -> float:
        return CLASSICAL_CHI if self.is_classical else 1.0

    def reaction_matrix(self) -> np.ndarray:
        """Constant matrix ``K`` with reaction terms ``K @ (fields at a cell)``."""
        if self.is_classical:
            return np.array([[0.0, 0.0], [CLASSICAL_PRODUCTION, -1.0]])
        a, b = self.rates
        return np.array([[-a, 0.0, b], [0.0, -1.0, 1.0], [a, 0.0, -b]])

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for key in ("alpha", "beta", "gamma"):
            value = getattr(self, key)
            if value is not None:
                d[key] = value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        kind = d["kind"]
        kw = {k: float(d[k]) for k in ("alpha", "beta", "gamma") if d.get(k) is not None}
        return cls(kind, **kw)


def _require_rate(name, value):
    if value is None or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite rate, got {value!r}")


@dataclass
class State:
    """Fields at cell centres at time ``t``; ``u`` holds ``z`` for the classical system."""

    t: float
    u: np.ndarray
    v: np.ndarray
    w: Optional[np.ndarray] = None

    @property
    def z(self) -> np.ndarray:
        return self.u if self.w is None else self.u + self.w

    def fields(self) -> list:
        return [self.u, self.v] if self.w is None else [self.u, self.v, self.w]

    def pack(self) -> np.ndarray:
        """Interleave by cell: all fields of cell i are adjacent."""
        return np.ascontiguousarray(np.stack(self.fields(), axis=1).ravel())

    @classmethod
    def unpack(cls, t: float, y: np.ndarray, field_count: int) -> "State":
        y = np.asarray(y, dtype=float).reshape(-1, field_count)
        if field_count == 2:
            return cls(t, y[:, 0].copy(), y[:, 1].copy())
        return cls(t, y[:, 0].copy(), y[:, 1].copy(), y[:, 2].copy())


def initial_state(spec: ModelSpec, mesh: Mesh, rho: float) -> State:
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho!r}")
    x = mesh.cell_centers
    v = rho * (1.0 + PERTURBATION * np.exp(-x * x)) / 2.0
    if spec.is_classical:
        return State(0.0, np.full(mesh.n_cells, float(rho)), v)
    half = np.full(mesh.n_cells, rho / 2.0)
    return State(0.0, half, v, half.copy())


def uniform_steady_state(spec: ModelSpec, rho: float) -> tuple:
    """Homogeneous equilibrium with total density ``rho``.

    Returns ``(u*, v*, w*)`` for the switching kinds and ``(z*, v*)`` for
    the classical system.
    """
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho!r}")
    if spec.is_classical:
        return (float(rho), CLASSICAL_PRODUCTION * rho)
    a, b = spec.rates
    u = b * rho / (a + b)
    w = a * rho / (a + b)
    return (u, w, w)


def linearization(spec: ModelSpec, rho: float, kappa: float) -> np.ndarray:
    """Matrix governing a perturbation ``exp(lambda t) phi`` with ``-Laplace phi = kappa phi``."""
    if spec.is_classical:
        z = uniform_steady_state(spec, rho)[0]
        return np.array([
            [-kappa, CLASSICAL_CHI * z * kappa],
            [CLASSICAL_PRODUCTION, -kappa - 1.0],
        ])
    a, b = spec.rates
    u = uniform_steady_state(spec, rho)[0]
    return np.array([
        [-kappa - a, u * kappa, b],
        [0.0, -kappa - 1.0, 1.0],
        [a, 0.0, -kappa - b],
    ])


def growth_rates(spec: ModelSpec, rho: float, kappa: float) -> float:
    """Largest real part of the linearised spectrum at wavenumber ``kappa``."""
    if kappa < 0:
        raise ValueError(f"kappa must be nonnegative, got {kappa!r}")
    return float(np.max(np.linalg.eigvals(linearization(spec, rho, kappa)).real))


def instability_bound(spec: ModelSpec, rho: float) -> float:
    """Upper bound on any real-unstable wavenumber.

    A real eigenvalue crosses zero only where the determinant of the
    linearisation changes sign; for the classical system that happens at
    ``kappa = chi*mu*rho - 1`` and for the switching kinds where
    ``(kappa+1)(kappa+alpha+beta) = alpha*u*``, so ``kappa**2 < alpha*u*``.
    """
    if spec.is_classical:
        return max(CLASSICAL_CHI * CLASSICAL_PRODUCTION * rho - 1.0, 0.0)
    a, _ = spec.rates
    u = uniform_steady_state(spec, rho)[0]
    return float(np.sqrt(a * u))


def critical_gamma(rho: float, kappa: float) -> float:
    """Smallest symmetric switching rate at which mode ``kappa`` is unstable.

    With ``u* = rho/2`` the mode grows iff ``(kappa+1)(kappa+2g) < g*rho/2``,
    i.e. ``g > kappa(kappa+1) / (rho/2 - 2(kappa+1))``. Returns ``inf`` when
    no rate destabilises the mode.
    """
    if not rho > 0 or kappa < 0:
        raise ValueError("need rho > 0 and kappa >= 0")
    slack = rho / 2.0 - 2.0 * (kappa + 1.0)
    if slack <= 0:
        return np.inf
    return kappa * (kappa + 1.0) / slack


@dataclass
class StabilityReport:
    wavenumbers: np.ndarray
    growth_rates: np.ndarray
    unstable: bool
    most_unstable_mode: tuple

    def to_rows(self):
        return list(zip(self.wavenumbers.tolist(), self.growth_rates.tolist()))


def _laplacian_tridiagonal(mesh: Mesh):
    from .spatial import transmissibilities

    T = transmissibilities(mesh)
    V = mesh.cell_volumes
    diag = np.zeros(mesh.n_cells)
    diag[:-1] += T
    diag[1:] += T
    diag /= V
    off = -T / np.sqrt(V[:-1] * V[1:])
    return diag, off


def discrete_laplacian_spectrum(mesh: Mesh, kappa_max: Optional[float] = None) -> np.ndarray:
    """Eigenvalues of the zero-flux finite-volume ``-Laplace`` on ``mesh``.

    The operator is ``V^-1 K`` with ``K`` the stiffness matrix of the
    interior-face transmissibilities. It is similar to ``B^T B`` with ``B``
    the bidiagonal ``sqrt(T) * diff * V^-1/2``, so the eigenvalues are the
    squared singular values of ``B``.

    With ``kappa_max`` only eigenvalues up to it are returned. They come from
    bisection on the zero-diagonal Golub-Kahan form of ``B``, which resolves
    them to high relative accuracy even though the graded mesh makes the
    operator norm huge (about 1e14 at N=10^4). Without ``kappa_max`` the
    whole spectrum is computed to absolute accuracy ``eps * norm``.
    """
    if kappa_max is None:
        diag, off = _laplacian_tridiagonal(mesh)
        return np.sort(eigvalsh_tridiagonal(diag, off))
    from .spatial import transmissibilities

    T = transmissibilities(mesh)
    V = mesh.cell_volumes
    d = np.zeros(mesh.n_cells)
    d[:-1] = np.sqrt(T / V[:-1])
    off = np.empty(2 * mesh.n_cells - 1)
    off[0::2] = d
    off[1::2] = np.sqrt(T / V[1:])
    top = np.sqrt(max(kappa_max, 0.0))
    # the Golub-Kahan spectrum is +-sigma; keep the nonnegative half
    s = eigvalsh_tridiagonal(np.zeros(off.size + 1), off, select="v",
                             select_range=(-top, top), tol=0.0)
    s = np.sort(s)[s.size // 2:]
    return np.sort(s * s)


def stability_scan(spec: ModelSpec, rho: float, mesh: Mesh, kappa_max: Optional[float] = None,
                   tol: float = 1e-12) -> StabilityReport:
    if kappa_max is None:
        kappa_max = 2.0 * instability_bound(spec, rho) + 4.0
    ev = discrete_laplacian_spectrum(mesh, kappa_max)
    # the cells form a connected chain, so the kernel is exactly the constant
    # mode; it is always the smallest eigenvalue and only carries round-off
    kappas = ev[1:]
    rates = np.array([growth_rates(spec, rho, k) for k in kappas])
    if rates.size:
        j = int(np.argmax(rates))
        mode = (float(kappas[j]), float(rates[j]))
        unstable = bool(rates[j] > tol)
    else:
        mode = (float("nan"), float("nan"))
        unstable = False
    return StabilityReport(kappas, rates, unstable, mode)

"""Conservative finite-volume semi-discretisation in radial symmetry.

Each field obeys ``d(phi_i)/dt = (D_{i+1/2} - D_{i-1/2}) / V_i + reactions`` where
``D`` is the inward-positive face transport (diffusion minus chemotactic
drift for the motile field). Boundary faces at r=0 and r=R carry no flux.
Degrees of freedom are interleaved by cell, so the Jacobian is banded.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .mesh import Mesh
from .model import ModelSpec, State

logger = logging.getLogger(__name__)


FLUX_SCHEMES = ("central", "upwind", "sg")


def bernoulli(x: np.ndarray) -> np.ndarray:
    """``B(x) = x / (exp(x) - 1)`` with ``B(0) = 1``, evaluated without overflow."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-4
    neg = (x < 0) & ~small
    pos = (x > 0) & ~small
    xs = x[small]
    out[small] = 1.0 - xs / 2.0 + xs * xs / 12.0
    out[neg] = x[neg] / np.expm1(x[neg])
    # multiply through by exp(-x) for positive arguments
    xp = x[pos]
    out[pos] = xp * np.exp(-xp) / -np.expm1(-xp)
    return out


def bernoulli_prime(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-4
    neg = (x < 0) & ~small
    pos = (x > 0) & ~small
    out[small] = -0.5 + x[small] / 6.0
    xn = x[neg]
    em = np.expm1(xn)
    out[neg] = (em - xn * (1.0 + em)) / (em * em)
    xp = x[pos]
    q = np.exp(-xp)
    out[pos] = q * (-np.expm1(-xp) - xp) / np.expm1(-xp) ** 2
    return out


def transmissibilities(mesh: Mesh) -> np.ndarray:
    """Face area over centre spacing for the ``N - 1`` interior faces."""
    dc = np.diff(mesh.cell_centers)
    return mesh.face_areas[1:-1] / dc


@dataclass(frozen=True)
class BandedMatrix:
    """Square matrix in LAPACK general-band layout: ``data[ku + i - j, j] = A[i, j]``."""

    data: np.ndarray
    kl: int
    ku: int

    @property
    def n(self) -> int:
        return self.data.shape[1]

    def to_dense(self) -> np.ndarray:
        n = self.n
        A = np.zeros((n, n))
        for k in range(-self.kl, self.ku + 1):
            row = self.ku - k
            if k >= 0:
                idx = np.arange(n - k)
                A[idx, idx + k] = self.data[row, k:]
            else:
                idx = np.arange(n + k)
                A[idx - k, idx] = self.data[row, : n + k]
        return A

    def matvec(self, x: np.ndarray) -> np.ndarray:
        n = self.n
        out = np.zeros(n)
        for k in range(-self.kl, self.ku + 1):
            row = self.data[self.ku - k]
            if k >= 0:
                out[: n - k] += row[k:] * x[k:]
            else:
                out[-k:] += row[: n + k] * x[: n + k]
        return out


class DiscreteSystem:
    """Method-of-lines right-hand side and Jacobian for one model on one mesh."""

    def __init__(self, spec: ModelSpec, mesh: Mesh, flux: str = "central"):
        if flux not in FLUX_SCHEMES:
            raise ValueError(f"unknown flux scheme {flux!r}; choose from {FLUX_SCHEMES}")
        self.spec = spec
        self.mesh = mesh
        self.flux = flux
        self.field_count = spec.field_count
        self.n_cells = mesh.n_cells
        self.dof_count = self.field_count * self.n_cells
        self.half_bandwidth = 2 * self.field_count - 1
        self._T = transmissibilities(mesh)
        self._invV = 1.0 / mesh.cell_volumes
        self._K = spec.reaction_matrix()
        self._chi = spec.chi

    # -- face operators ------------------------------------------------------

    def _divergence(self, D: np.ndarray) -> np.ndarray:
        """Net inflow per unit volume from interior face transports ``D``."""
        out = np.zeros(self.n_cells)
        out[:-1] += D
        out[1:] -= D
        return out * self._invV

    def _motile_transport(self, u, v):
        """Face transport ``D`` of the chemotactic field and its partial derivatives.

        Returns ``D, dD/du_j, dD/du_{j+1}, dD/dv_j, dD/dv_{j+1}`` for each
        interior face between cells ``j`` and ``j + 1``.
        """
        T, chi = self._T, self._chi
        du = np.diff(u)
        dv = np.diff(v)
        if self.flux == "sg":
            # exponential fitting: exact for zero-flux profiles u ~ exp(chi v)
            x = chi * dv
            bp, bm = bernoulli(x), bernoulli(-x)
            dbp, dbm = bernoulli_prime(x), bernoulli_prime(-x)
            D = T * (bp * u[1:] - bm * u[:-1])
            dv_r = T * chi * (dbp * u[1:] + dbm * u[:-1])
            return D, -T * bm, T * bp, -dv_r, dv_r
        if self.flux == "upwind":
            # drift velocity is +chi grad v: the donor is the upstream cell
            wl = (dv > 0).astype(float)
        else:
            wl = np.full(dv.shape, 0.5)
        wr = 1.0 - wl
        ut = wl * u[:-1] + wr * u[1:]
        D = T * (du - chi * ut * dv)
        return (D, -T * (1.0 + chi * wl * dv), T * (1.0 - chi * wr * dv),
                T * chi * ut, -T * chi * ut)

    def diffusion(self, phi: np.ndarray) -> np.ndarray:
        return self._divergence(self._T * np.diff(phi))

    def chemotaxis_divergence(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Discrete ``-div(chi * u * grad v)`` in face-flux form."""
        u = self._check_field(u)
        v = self._check_field(v)
        D = self._motile_transport(u, v)[0]
        return self._divergence(D - self._T * np.diff(u))

    # -- assembly ------------------------------------------------------------

    def _check_field(self, a):
        a = np.asarray(a, dtype=float)
        if a.shape != (self.n_cells,):
            raise ValueError(f"field has shape {a.shape}, expected ({self.n_cells},)")
        return a

    def _as_matrix(self, y) -> np.ndarray:
        if isinstance(y, State):
            y = y.pack()
        y = np.asarray(y, dtype=float)
        if y.shape != (self.dof_count,):
            raise ValueError(f"state has {y.size} dofs, system expects {self.dof_count}")
        if not np.all(np.isfinite(y)):
            raise ValueError("state contains non-finite values")
        return y.reshape(self.n_cells, self.field_count)

    def rhs(self, y) -> np.ndarray:
        """Time derivative of the packed state vector ``y`` (or a ``State``)."""
        Y = self._as_matrix(y)
        dY = Y @ self._K.T
        for f in range(1, self.field_count):
            dY[:, f] += self.diffusion(Y[:, f])
        dY[:, 0] += self._divergence(self._motile_transport(Y[:, 0], Y[:, 1])[0])
        return dY.ravel()

    def jacobian(self, y) -> BandedMatrix:
        Y = self._as_matrix(y)
        F = self.field_count
        n = self.dof_count
        kl = ku = self.half_bandwidth
        data = np.zeros((kl + ku + 1, n))

        def add(rf, cf, offset, values):
            # d(rhs of field rf at cell i) / d(field cf at cell i + offset)
            k = F * offset + cf - rf
            row = data[ku - k]
            if offset >= 0:
                rows = np.arange(rf, F * (self.n_cells - offset), F)
            else:
                rows = np.arange(rf - F * offset, n, F)
            row[rows + k] += values

        T, invV = self._T, self._invV
        # cell j gains D_j through its right face and loses D_{j-1} through its left
        for f in range(1, F):
            add(f, f, 0, -self._divergence_diag(T))
            add(f, f, 1, T * invV[:-1])
            add(f, f, -1, T * invV[1:])

        _, Dul, Dur, Dvl, Dvr = self._motile_transport(Y[:, 0], Y[:, 1])
        pad = lambda a, left: np.concatenate([[0.0], a]) if left else np.concatenate([a, [0.0]])
        for cf, (dl, dr) in ((0, (Dul, Dur)), (1, (Dvl, Dvr))):
            add(0, cf, 0, (pad(dl, False) - pad(dr, True)) * invV)
            add(0, cf, 1, dr * invV[:-1])
            add(0, cf, -1, -dl * invV[1:])

        for rf in range(F):
            for cf in range(F):
                if self._K[rf, cf] != 0.0:
                    add(rf, cf, 0, np.full(self.n_cells, self._K[rf, cf]))
        return BandedMatrix(data, kl, ku)

    def _divergence_diag(self, T):
        d = np.zeros(self.n_cells)
        d[:-1] += T
        d[1:] += T
        return d * self._invV

    # -- helpers -------------------------------------------------------------

    def state(self, t: float, y: np.ndarray) -> State:
        return State.unpack(t, y, self.field_count)

    def total_mass(self, y) -> float:
        """Integral of the total population density (z = u + w)."""
        Y = self._as_matrix(y)
        z = Y[:, 0] if self.field_count == 2 else Y[:, 0] + Y[:, 2]
        return float(np.dot(z, self.mesh.cell_volumes))

    def density_indices(self) -> np.ndarray:
        """Dof indices of population densities (excludes the attractant)."""
        idx = np.arange(self.dof_count).reshape(self.n_cells, self.field_count)
        cols = [0] if self.field_count == 2 else [0, 2]
        return np.sort(idx[:, cols].ravel())


def assemble_rhs(sys: DiscreteSystem, state) -> np.ndarray:
    return sys.rhs(state)


def assemble_jacobian(sys: DiscreteSystem, state) -> BandedMatrix:
    return sys.jacobian(state)


def chemotaxis_divergence(sys: DiscreteSystem, u, v) -> np.ndarray:
    return sys.chemotaxis_divergence(u, v)

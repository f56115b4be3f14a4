"""Adaptive singly diagonally implicit Runge-Kutta integration of banded stiff
systems, with blow-up and steady-state detection.

Two L-stable, stiffly accurate schemes are available. ``sdirk4`` (the
default) has five stages, order four and an embedded third-order solution.
``trbdf2`` is the one-step TR-BDF2 pair of order two with a third-order
error estimate. All implicit stages share the iteration matrix
``I - gamma*h*J``, so a step needs at most one banded LU factorisation, and
the local error estimate is filtered through the same factorisation.

A run ends in one of three ways:

* ``blow_up`` - the controller needs ``h < dt_min``, Newton fails at
  ``dt_min``, or a population density exceeds ``max_density_cap``;
* ``steady_state`` - the relative rate of change of the solution stays
  below ``steady_tol`` over a window of ``steady_window`` time units;
* ``horizon`` - ``t_end`` is reached.
"""
from __future__ import annotations

import logging
import math
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import lapack

from .model import State
from .spatial import BandedMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Tableau:
    """Singly diagonally implicit, stiffly accurate Runge-Kutta scheme.

    ``A`` is lower triangular with constant diagonal ``gamma`` (a zero first
    row marks an explicit first stage). ``b`` equals the last row of ``A``;
    ``b_hat`` is the embedded method used for error control.
    """

    name: str
    A: np.ndarray
    b_hat: np.ndarray
    order: int
    error_order: int

    @property
    def gamma(self) -> float:
        return float(self.A[-1, -1])

    @property
    def c(self) -> np.ndarray:
        return self.A.sum(axis=1)

    @property
    def explicit_first(self) -> bool:
        return self.A[0, 0] == 0.0


_G = 2.0 - math.sqrt(2.0)
_d = _G / 2.0
_w = math.sqrt(2.0) / 4.0

TR_BDF2 = Tableau(
    "trbdf2",
    np.array([[0.0, 0.0, 0.0], [_d, _d, 0.0], [_w, _w, _d]]),
    np.array([(1.0 - _w) / 3.0, (3.0 * _w + 1.0) / 3.0, _d / 3.0]),
    order=2,
    error_order=2,
)

SDIRK4 = Tableau(
    "sdirk4",
    np.array([
        [1 / 4, 0, 0, 0, 0],
        [1 / 2, 1 / 4, 0, 0, 0],
        [17 / 50, -1 / 25, 1 / 4, 0, 0],
        [371 / 1360, -137 / 2720, 15 / 544, 1 / 4, 0],
        [25 / 24, -49 / 48, 125 / 16, -85 / 12, 1 / 4],
    ]),
    np.array([59 / 48, -17 / 96, 225 / 32, -85 / 12, 0.0]),
    order=4,
    error_order=3,
)

METHODS = {t.name: t for t in (TR_BDF2, SDIRK4)}

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 5.0
NEWTON_MAXITER = 7
NEWTON_TOL = 0.03

STEADY_STATE = "steady_state"
BLOW_UP = "blow_up"
HORIZON = "horizon"


def default_output_times(t_end: float, count: int = 500, t_first: float = 1e-3) -> np.ndarray:
    """``t = 0`` followed by ``count`` log-spaced times from ``t_first`` to ``t_end``."""
    if t_end <= t_first:
        return np.array([0.0, t_end])
    ts = np.geomspace(t_first, t_end, count)
    ts[-1] = t_end
    return np.concatenate([[0.0], ts])


@dataclass
class IntegratorConfig:
    t_end: float
    rtol: float = 1e-6
    atol: float = 1e-9
    dt_init: float = 1e-6
    dt_min: float = 1e-13
    dt_max: Optional[float] = None
    max_density_cap: float = 1e30
    output_times: Optional[Sequence[float]] = None
    steady_window: float = 10.0
    steady_tol: float = 1e-8
    detect_steady: bool = True
    method: str = "sdirk4"

    def __post_init__(self):
        if self.dt_max is None:
            self.dt_max = self.t_end / 10.0
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ValueError(f"t_end must be positive and finite, got {self.t_end!r}")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if not (0 < self.dt_min < self.dt_max):
            raise ValueError(f"need 0 < dt_min < dt_max, got {self.dt_min!r}, {self.dt_max!r}")
        if not self.dt_init > 0:
            raise ValueError("dt_init must be positive")
        if not self.steady_tol > 0 or not self.steady_window > 0:
            raise ValueError("steady_tol and steady_window must be positive")
        if not self.max_density_cap > 0:
            raise ValueError("max_density_cap must be positive")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {sorted(METHODS)}")

    def schedule(self) -> np.ndarray:
        if self.output_times is None:
            return default_output_times(self.t_end)
        ts = np.asarray(self.output_times, dtype=float)
        if ts.ndim != 1 or np.any(np.diff(ts) <= 0) or ts[0] < 0 or ts[-1] > self.t_end:
            raise ValueError("output_times must be strictly increasing within [0, t_end]")
        return ts


class Trajectory:
    """Sink that keeps every sampled state in memory."""

    def __init__(self):
        self.times: list = []
        self.states: list = []

    def __call__(self, t: float, y: np.ndarray) -> None:
        self.times.append(t)
        self.states.append(np.array(y, copy=True))

    def __len__(self):
        return len(self.times)


@dataclass
class StepStats:
    accepted: int = 0
    rejected: int = 0
    rhs_evals: int = 0
    jacobian_evals: int = 0
    factorizations: int = 0
    newton_failures: int = 0


@dataclass
class RunOutcome:
    cause: str
    t_event: float
    t_final: float
    y_final: np.ndarray = field(repr=False)
    trajectory: Optional[Trajectory] = field(default=None, repr=False)
    stats: StepStats = field(default_factory=StepStats)

    @property
    def t_c(self) -> Optional[float]:
        return self.t_event if self.cause == BLOW_UP else None

    @property
    def t_s(self) -> Optional[float]:
        return self.t_event if self.cause == STEADY_STATE else None


def derivative_ratio(y0: np.ndarray, y1: np.ndarray, dt: float, atol: float) -> float:
    """Max-norm rate of change between two samples relative to the solution size."""
    scale = max(float(np.max(np.abs(y1))), atol)
    return float(np.max(np.abs(y1 - y0))) / (dt * scale)


def steady_criterion(times: Sequence[float], states: Sequence[np.ndarray], cfg: IntegratorConfig) -> bool:
    """True when every sample-to-sample rate in the window is at most ``steady_tol``.

    ``times``/``states`` are the recent trajectory samples; the window must
    span at least ``cfg.steady_window``.
    """
    times = np.asarray(times, dtype=float)
    if times.size < 2 or times[-1] - times[0] < cfg.steady_window * (1 - 1e-12):
        raise ValueError("window must span at least steady_window")
    worst = max(
        derivative_ratio(np.asarray(states[k]), np.asarray(states[k + 1]),
                         times[k + 1] - times[k], cfg.atol)
        for k in range(times.size - 1)
    )
    return worst <= cfg.steady_tol


class _Problem:
    """Adapter giving ``rhs``/``jacobian``/``density_indices`` a common face."""

    def __init__(self, system):
        self.system = system
        self.rhs = system.rhs
        self.jacobian = system.jacobian
        getter = getattr(system, "density_indices", None)
        self.density_idx = getter() if getter is not None else None


class ODEProblem:
    """Generic ``y' = f(y)`` with a dense Jacobian; used for small test systems."""

    def __init__(self, fun: Callable, jac: Callable):
        self._fun = fun
        self._jac = jac

    def rhs(self, y):
        return np.asarray(self._fun(y), dtype=float)

    def jacobian(self, y) -> BandedMatrix:
        J = np.atleast_2d(np.asarray(self._jac(y), dtype=float))
        return dense_to_banded(J)


def dense_to_banded(A: np.ndarray) -> BandedMatrix:
    n = A.shape[0]
    kl = ku = max(n - 1, 0)
    data = np.zeros((kl + ku + 1, n))
    for i in range(n):
        for j in range(n):
            data[ku + i - j, j] = A[i, j]
    return BandedMatrix(data, kl, ku)


class _Factorization:
    def __init__(self, J: BandedMatrix, dh: float):
        kl, ku = J.kl, J.ku
        ab = np.zeros((2 * kl + ku + 1, J.n))
        ab[kl:] = -dh * J.data
        ab[kl + ku] += 1.0
        self.lu, self.piv, info = lapack.dgbtrf(ab, kl, ku, overwrite_ab=1)
        self.kl, self.ku = kl, ku
        self.ok = info == 0 and np.all(np.isfinite(self.lu))

    def solve(self, b: np.ndarray) -> np.ndarray:
        x, info = lapack.dgbtrs(self.lu, self.kl, self.ku, b, self.piv)
        return x


_Newton = namedtuple("_Newton", "converged y iterations rate")


class DIRKStepper:
    """One-step driver for a :class:`Tableau`; :func:`integrate` applies the event logic."""

    def __init__(self, problem, y0: np.ndarray, cfg: IntegratorConfig, stats: StepStats,
                 tableau: Tableau):
        self.p = problem
        self.cfg = cfg
        self.stats = stats
        self.tab = tableau
        self.y = y0
        self.f = self._rhs(y0)
        self.J = None
        self.J_fresh = False
        self.eta = 1.0

    def _rhs(self, y):
        self.stats.rhs_evals += 1
        return self.p.rhs(y)

    def _refresh_jacobian(self):
        self.J = self.p.jacobian(self.y)
        self.stats.jacobian_evals += 1
        self.J_fresh = True

    def _newton(self, lu, psi, guess, gh, scale) -> _Newton:
        """Solve ``Y - gh f(Y) = psi`` by simplified Newton."""
        y = guess.copy()
        prev = None
        rate = None
        eta = max(self.eta, np.finfo(float).eps) ** 0.8
        for k in range(NEWTON_MAXITER):
            try:
                with np.errstate(all="ignore"):
                    fy = self._rhs(y)
            except ValueError:
                # non-finite iterate
                return _Newton(False, y, k, rate)
            delta = lu.solve(psi + gh * fy - y)
            if not np.all(np.isfinite(delta)):
                return _Newton(False, y, k, rate)
            y = y + delta
            norm = math.sqrt(np.mean((delta / scale) ** 2))
            if prev is not None:
                rate = norm / prev if prev > 0 else 0.0
                if rate >= 1.0:
                    return _Newton(False, y, k + 1, rate)
                if rate ** (NEWTON_MAXITER - k) / (1.0 - rate) * norm > NEWTON_TOL:
                    return _Newton(False, y, k + 1, rate)
                eta = rate / (1.0 - rate)
            if eta * norm <= NEWTON_TOL or norm == 0.0:
                self.eta = eta
                return _Newton(True, y, k + 1, rate)
            prev = norm
        return _Newton(False, y, NEWTON_MAXITER, rate)

    def attempt(self, h: float):
        """Try one step of size ``h``.

        Returns ``(status, y_new, f_new, err)`` with status ``"ok"`` or
        ``"newton"``; ``err`` is the weighted RMS local error estimate.
        """
        if self.J is None:
            self._refresh_jacobian()
        A, gamma = self.tab.A, self.tab.gamma
        s = A.shape[0]
        y, f = self.y, self.f
        gh = gamma * h
        scale = self.cfg.atol + self.cfg.rtol * np.abs(y)
        while True:
            lu = _Factorization(self.J, gh)
            self.stats.factorizations += 1
            ok = lu.ok
            K = []
            if ok and self.tab.explicit_first:
                K.append(f)
            Y = y
            while ok and len(K) < s:
                i = len(K)
                psi = y + h * sum(A[i, j] * K[j] for j in range(i)) if i else y.copy()
                guess = psi + gh * (K[-1] if K else f)
                res = self._newton(lu, psi, guess, gh, scale)
                ok = res.converged
                if ok:
                    Y = res.y
                    K.append((Y - psi) / gh)
            if ok:
                y1, f1 = Y, K[-1]
                est = h * sum((A[-1, j] - self.tab.b_hat[j]) * K[j] for j in range(s))
                err_vec = lu.solve(est)
                sc = self.cfg.atol + self.cfg.rtol * np.maximum(np.abs(y), np.abs(y1))
                err = math.sqrt(np.mean((err_vec / sc) ** 2))
                if not math.isfinite(err):
                    err = math.inf
                return "ok", y1, f1, err
            self.stats.newton_failures += 1
            if not self.J_fresh:
                self._refresh_jacobian()
                continue
            return "newton", None, None, math.inf

    def accept(self, y1, f1):
        self.y = y1
        self.f = f1
        self.J_fresh = False


def integrate(system, y0, cfg: IntegratorConfig, sink: Optional[Callable] = None) -> RunOutcome:
    """Integrate ``system`` from ``y0`` (a :class:`State` or packed vector) per ``cfg``.

    ``sink(t, y)`` receives every scheduled sample plus the terminal state;
    when omitted a :class:`Trajectory` is created and returned on the outcome.
    """
    t0 = 0.0
    if isinstance(y0, State):
        t0 = float(y0.t)
        y0 = y0.pack()
    y0 = np.array(y0, dtype=float, copy=True).ravel()
    if not np.all(np.isfinite(y0)):
        raise ValueError("initial state contains non-finite values")
    problem = _Problem(system)
    f0 = problem.rhs(y0)
    if not np.all(np.isfinite(f0)):
        raise ValueError("right-hand side is non-finite at the initial state")

    trajectory = None
    if sink is None:
        trajectory = sink = Trajectory()

    stats = StepStats()
    tableau = METHODS[cfg.method]
    stepper = DIRKStepper(problem, y0, cfg, stats, tableau)
    expo = -1.0 / (tableau.error_order + 1)
    schedule = cfg.schedule()
    schedule = schedule[schedule >= t0]
    k_out = 0
    last_emitted = -math.inf

    def emit(t, y):
        nonlocal last_emitted
        if t > last_emitted:
            sink(t, y)
            last_emitted = t

    while k_out < len(schedule) and schedule[k_out] <= t0:
        emit(t0, y0)
        k_out += 1

    density_idx = problem.density_idx
    cap_check = density_idx if density_idx is not None else slice(None)
    warned_negative = False

    t = t0
    h = min(cfg.dt_init, cfg.dt_max)
    quiet_since = t0
    burn_in = t0 + cfg.steady_window

    def finish(cause, t_event):
        emit(t, stepper.y)
        return RunOutcome(cause, t_event, t, stepper.y, trajectory, stats)

    while True:
        t_remaining = cfg.t_end - t
        if t_remaining <= 1e-12 * max(1.0, cfg.t_end):
            return finish(HORIZON, cfg.t_end)

        # land exactly on the next output time; don't let that shrink the controller's h
        h_step = min(h, t_remaining)
        if k_out < len(schedule):
            gap = schedule[k_out] - t
            if h_step >= gap or gap - h_step < 1e-3 * h_step:
                h_step = gap
        status, y1, f1, err = stepper.attempt(h_step)

        if status == "newton":
            if h_step <= cfg.dt_min:
                logger.info("newton failed at dt_min, t=%.6g", t)
                return finish(BLOW_UP, t)
            h = max(h_step * 0.25, 0.0)
            stats.rejected += 1
            if h < cfg.dt_min:
                return finish(BLOW_UP, t)
            continue

        if err > 1.0:
            stats.rejected += 1
            fac = max(FAC_MIN, SAFETY * err ** expo) if math.isfinite(err) else FAC_MIN
            h = h_step * min(1.0, fac)
            if h < cfg.dt_min:
                logger.info("step size collapsed below dt_min at t=%.6g", t)
                return finish(BLOW_UP, t)
            continue

        # accepted
        y_prev = stepper.y
        stepper.accept(y1, f1)
        stats.accepted += 1
        t_new = cfg.t_end if abs(cfg.t_end - (t + h_step)) <= 1e-12 * cfg.t_end else t + h_step
        ratio = derivative_ratio(y_prev, y1, t_new - t, cfg.atol)
        t = t_new

        fac = SAFETY * err ** expo if err > 0 else FAC_MAX
        h_next = h_step * min(FAC_MAX, max(FAC_MIN, fac))
        if h_step < h:
            # clipped step: keep the larger of the clipped proposal and the old h
            h_next = max(h_next, h) if err <= 0.5 else h_next
        h = min(h_next, cfg.dt_max)

        while k_out < len(schedule) and schedule[k_out] <= t * (1 + 1e-14):
            emit(t, y1)
            k_out += 1

        if not warned_negative:
            low = float(np.min(y1))
            if low < -100.0 * cfg.atol:
                logger.warning("negative undershoot %.3g at t=%.6g", low, t)
                warned_negative = True

        if float(np.max(y1[cap_check])) > cfg.max_density_cap:
            logger.info("density cap exceeded at t=%.6g", t)
            return finish(BLOW_UP, t)

        if cfg.detect_steady:
            if ratio > cfg.steady_tol:
                quiet_since = t
            elif t >= burn_in and t - quiet_since >= cfg.steady_window:
                return finish(STEADY_STATE, t)

        if h < cfg.dt_min:
            return finish(BLOW_UP, t)

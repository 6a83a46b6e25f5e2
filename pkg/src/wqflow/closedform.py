"""Closed-form special solutions and the scalar scale-ODE system.

This is the oracle layer: self-similar density/potential pairs on R^n for
the three flow regimes, their exact time derivatives, the normalization
constant that makes them probability densities, and the scalar ODE system
(w, wdot, alpha = wdot/w, beta, eta) that drives the Langevin family.

The three regimes share one radial profile
    rho = C(n,p) * w^(-n) * exp(-(p-1)/p^q * |x|^q / w^q)
with the scale factor w(t) given by
    geodesic (c = inf):  w = t,        alpha = 1/t,    eta = t
    p-heat   (c = 0):    w = t^(1/p),  alpha = 1/(p t)
    Langevin (0 < c < inf):  c^p w'' + (p-1) w' = (p-1)/p^(q-1) * w'^(2-q)/w
solved here with classical RK4.  All trajectories are immutable arrays on a
uniform time grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import Grid

__all__ = [
    "c_np",
    "SpecialFields",
    "special_geodesic",
    "special_pheat",
    "special_langevin",
    "suggest_box_halfwidth",
    "ScaleTrajectory",
    "solve_scale_ode",
    "solve_beta_ode",
    "eta_weight",
    "scale_trajectory",
]


def c_np(n: int, p: float) -> float:
    """Normalization constant of the self-similar profiles.

    (p q^(p-1))^(-n/p) * pi^(-n/2) * Gamma(n/2 + 1) / Gamma(n/q + 1).
    For p = 2 this is (4 pi)^(-n/2), the Gaussian normalizer at unit scale.
    """
    if p <= 1.0:
        raise ValueError(f"need p > 1, got {p}")
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    q = p / (p - 1.0)
    return (
        (p * q ** (p - 1.0)) ** (-n / p)
        * math.pi ** (-n / 2.0)
        * math.gamma(n / 2.0 + 1.0)
        / math.gamma(n / q + 1.0)
    )


@dataclass(frozen=True)
class SpecialFields:
    """A closed-form (rho, phi) pair sampled on a grid.

    `u` is the analytic gradient of phi (the hyperbolic state variable) and
    the d*_dt arrays are exact time derivatives, so PDE residual checks
    isolate the spatial discretization error.
    """

    t: float
    rho: np.ndarray
    phi: np.ndarray
    u: np.ndarray
    drho_dt: np.ndarray
    dphi_dt: np.ndarray
    du_dt: np.ndarray


def _radial(grid: Grid, q: float):
    """|x|^q, |x|^(q-2) x and the coordinate mesh, with the origin guarded."""
    xs = grid.meshgrid()
    r2 = sum(x * x for x in xs)
    rq = r2 ** (q / 2.0)
    # r^(q-2) x vanishes at the origin for q > 2 and is never sampled there
    # for q < 2 (cell-centered boxes with even N have no origin node).
    with np.errstate(divide="ignore", invalid="ignore"):
        rqm2 = np.where(r2 > 0.0, r2 ** ((q - 2.0) / 2.0), 0.0)
    radial_vec = np.stack([rqm2 * x for x in xs])
    return rq, radial_vec


def special_geodesic(grid: Grid, n: int, p: float, t: float) -> SpecialFields:
    """Self-similar geodesic-flow solution on R^n at time t > 0.

    rho = C t^(-n) exp(-(p-1)|x|^q/(pt)^q),  phi = |x|^q / (q t^(q-1)).
    Its transport velocity |grad phi|^(p-2) grad phi is exactly x/t.
    """
    if t <= 0.0:
        raise ValueError(f"need t > 0, got {t}")
    if grid.periodic:
        raise ValueError("self-similar solutions live on a truncated box, not a torus")
    q = p / (p - 1.0)
    rq, rvec = _radial(grid, q)
    C = c_np(n, p)
    rho = C * t ** (-n) * np.exp(-(p - 1.0) * rq / (p * t) ** q)
    phi = rq / (q * t ** (q - 1.0))
    u = rvec / t ** (q - 1.0)
    drho = rho * (-n / t + (p - 1.0) * q * rq / (p ** q * t ** (q + 1.0)))
    dphi = -(q - 1.0) * rq / (q * t ** q)
    du = -(q - 1.0) * rvec / t ** q
    return SpecialFields(t, rho, phi, u, drho, dphi, du)


def special_pheat(grid: Grid, n: int, p: float, t: float) -> SpecialFields:
    """Self-similar p-heat solution on R^n at time t > 0.

    Same profile with w = t^(1/p); the potential is slaved to the density,
    phi = -log rho - 1, so u = grad phi = -grad log rho pointwise.
    """
    if t <= 0.0:
        raise ValueError(f"need t > 0, got {t}")
    if grid.periodic:
        raise ValueError("self-similar solutions live on a truncated box, not a torus")
    q = p / (p - 1.0)
    rq, rvec = _radial(grid, q)
    C = c_np(n, p)
    rho = C * t ** (-n / p) * np.exp(-rq / (q * (p * t) ** (q - 1.0)))
    phi = rq / (q * (p * t) ** (q - 1.0)) + (n / p) * math.log(t) - math.log(C) - 1.0
    u = rvec / (p * t) ** (q - 1.0)
    drho = rho * (-n / (p * t) + (q - 1.0) / q * p ** (1.0 - q) * rq / t ** q)
    dphi = -drho / rho
    du = -(q - 1.0) * rvec / (p ** (q - 1.0) * t ** q)
    return SpecialFields(t, rho, phi, u, drho, dphi, du)


def special_langevin(grid: Grid, n: int, p: float, c: float, scale: "ScaleSample") -> SpecialFields:
    """Self-similar Langevin solution on R^n driven by a scale-ODE sample.

    rho = C w^(-n) exp(-(p-1)/p^q |x|^q/w^q),
    phi = alpha^(q-1)/q |x|^q + beta,
    with (w, alpha, beta) and their rates taken from the solved scale system.
    """
    if grid.periodic:
        raise ValueError("self-similar solutions live on a truncated box, not a torus")
    q = p / (p - 1.0)
    rq, rvec = _radial(grid, q)
    C = c_np(n, p)
    w, alpha, beta = scale.w, scale.alpha, scale.beta
    adot, bdot = scale.alphadot, scale.betadot
    kappa = (p - 1.0) / p ** q
    rho = C * w ** (-n) * np.exp(-kappa * rq / w ** q)
    phi = alpha ** (q - 1.0) / q * rq + beta
    u = alpha ** (q - 1.0) * rvec
    drho = rho * (-n * alpha + q * kappa * alpha * rq / w ** q)
    dphi = (q - 1.0) / q * alpha ** (q - 2.0) * adot * rq + bdot
    du = (q - 1.0) * alpha ** (q - 2.0) * adot * rvec
    return SpecialFields(scale.t, rho, phi, u, drho, dphi, du)


def suggest_box_halfwidth(n: int, p: float, w: float, tail: float = 1e-8) -> float:
    """Smallest half-width L with self-similar mass outside [-L, L]^n below `tail`.

    Integrates the radial profile numerically and bisects; the caller still
    monitors the realized quadrature mass, this is only a sizing hint.
    """
    q = p / (p - 1.0)
    kappa = (p - 1.0) / p ** q
    # radial mass density of the unit-mass profile, s = r/w
    s = np.linspace(0.0, 400.0 ** (1.0 / q), 200_001)
    surf = 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)
    g = surf * c_np(n, p) * s ** (n - 1) * np.exp(-kappa * s ** q)
    cum = np.concatenate([[0.0], np.cumsum((g[1:] + g[:-1]) / 2.0 * np.diff(s))])
    outside = cum[-1] - cum
    idx = int(np.searchsorted(outside[::-1], tail))
    s_star = s[len(s) - 1 - idx] if idx < len(s) else s[-1]
    return float(s_star * w * 1.05)


# ---------------------------------------------------------------------------
# scale ODE system
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScaleSample:
    """One time slice of the scale system, with ODE-consistent rates."""

    t: float
    w: float
    wdot: float
    alpha: float
    beta: float
    eta: float
    alphadot: float
    betadot: float


class ScaleTrajectory:
    """Immutable (w, wdot, alpha, beta, eta) trajectory on a uniform t-grid."""

    def __init__(self, c, p, n, t, w, wdot, beta, eta):
        self.c = float(c)
        self.p = float(p)
        self.n = int(n)
        self.t = np.asarray(t, dtype=float)
        self.w = np.asarray(w, dtype=float)
        self.wdot = np.asarray(wdot, dtype=float)
        self.beta = np.asarray(beta, dtype=float)
        self.eta = np.asarray(eta, dtype=float)
        self.alpha = self.w_alpha()
        for a in (self.t, self.w, self.wdot, self.beta, self.eta, self.alpha):
            a.setflags(write=False)

    def w_alpha(self):
        return self.wdot / self.w

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def index_of(self, t: float) -> int:
        k = int(round((t - self.t[0]) / self.dt))
        if not (0 <= k < len(self.t)) or abs(self.t[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a trajectory time")
        return k

    def _rates(self, k: int) -> tuple[float, float]:
        """(alphadot, betadot) from the ODE right-hand sides at index k."""
        p, q, n = self.p, self.q, self.n
        w, a, b = self.w[k], self.alpha[k], self.beta[k]
        if math.isinf(self.c):
            return -a * a, 0.0
        if self.c == 0.0:
            # w = t^(1/p), alpha = 1/(pt): alphadot = -p alpha^2, beta slaved.
            return -self.p * a * a, 0.0
        cp = self.c ** p
        adot = ((p - 1.0) / p ** (q - 1.0) * a ** (2.0 - q) / w ** q - (p - 1.0) * a) / cp - a * a
        bdot = (n * math.log(w) - math.log(c_np(n, p)) - 1.0 - b) / cp
        return adot, bdot

    def sample(self, t: float) -> ScaleSample:
        k = self.index_of(t)
        adot, bdot = self._rates(k)
        return ScaleSample(
            t=float(self.t[k]), w=float(self.w[k]), wdot=float(self.wdot[k]),
            alpha=float(self.alpha[k]), beta=float(self.beta[k]), eta=float(self.eta[k]),
            alphadot=adot, betadot=bdot,
        )

    # -- cross-residuals of the equivalent ODE forms, via finite differences.
    # Fourth-order centered stencils keep the differencing error below the
    # RK4 trajectory error, so the residuals measure ODE consistency itself.

    def _ddt4(self, f: np.ndarray) -> np.ndarray:
        return (-f[4:] + 8.0 * f[3:-1] - 8.0 * f[1:-3] + f[:-4]) / (12.0 * self.dt)

    def pode_residual(self) -> np.ndarray:
        """c^p wddot + (p-1) wdot - (p-1)/p^(q-1) wdot^(2-q)/w on interior nodes.

        In the c = inf mode the equation is divided through by c^p, leaving
        the transport limit wddot = 0.
        """
        p, q = self.p, self.q
        wddot = self._ddt4(self.wdot)
        w, wd = self.w[2:-2], self.wdot[2:-2]
        if math.isinf(self.c):
            return wddot
        cp = 0.0 if self.c == 0.0 else self.c ** p
        return cp * wddot + (p - 1.0) * wd - (p - 1.0) / p ** (q - 1.0) * wd ** (2.0 - q) / w

    def alphaeq_residual(self) -> np.ndarray:
        """Riccati form: c^p (alphadot + alpha^2) + (p-1) alpha - (p-1)/p^(q-1) alpha^(2-q)/w^q.

        The c = inf mode checks the limit form alphadot + alpha^2 = 0.
        """
        p, q = self.p, self.q
        adot = self._ddt4(self.alpha)
        a, w = self.alpha[2:-2], self.w[2:-2]
        if math.isinf(self.c):
            return adot + a * a
        cp = 0.0 if self.c == 0.0 else self.c ** p
        return cp * (adot + a * a) + (p - 1.0) * a - (p - 1.0) / p ** (q - 1.0) * a ** (2.0 - q) / w ** q

    def eta_residual(self) -> np.ndarray:
        """(1 + etadot)/eta - 2 alpha - (p-1)/c^p on interior nodes."""
        if self.c == 0.0:
            raise ValueError("eta relation is not defined in the c=0 mode")
        k = 0.0 if math.isinf(self.c) else (self.p - 1.0) / self.c ** self.p
        edot = self._ddt4(self.eta)
        return (1.0 + edot) / self.eta[2:-2] - 2.0 * self.alpha[2:-2] - k


def solve_scale_ode(c, p, w0, wdot0, t0, T, dt) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """RK4 on the scale ODE as the first-order system (w, wdot).

    Returns (t, w, wdot) on the uniform grid t0 + k dt.  Aborts if wdot or w
    hits zero: wdot^(2-q) is singular there for q > 2 and the self-similar
    family stops making sense.
    """
    if not (0.0 < c < math.inf):
        raise ValueError(f"finite positive c required, got {c}")
    if w0 <= 0.0 or wdot0 <= 0.0:
        raise ValueError("need w0 > 0 and wdot0 > 0")
    if dt <= 0.0 or T <= t0:
        raise ValueError("need dt > 0 and T > t0")
    q = p / (p - 1.0)
    cp = c ** p
    if dt > 0.5 * cp:
        raise ValueError(f"dt={dt} too coarse for damping time c^p={cp}; the system is stiff")
    nsteps = int(round((T - t0) / dt))
    if abs(t0 + nsteps * dt - T) > 1e-9:
        raise ValueError("(T - t0) must be an integer multiple of dt")

    def rhs(w, s):
        return s, ((p - 1.0) / p ** (q - 1.0) * s ** (2.0 - q) / w - (p - 1.0) * s) / cp

    t = t0 + dt * np.arange(nsteps + 1)
    w = np.empty(nsteps + 1)
    s = np.empty(nsteps + 1)
    w[0], s[0] = w0, wdot0
    for k in range(nsteps):
        wk, sk = w[k], s[k]
        if wk <= 0.0 or sk <= 0.0:
            raise FloatingPointError(f"scale ODE left the admissible region at t={t[k]}: w={wk}, wdot={sk}")
        k1 = rhs(wk, sk)
        k2 = rhs(wk + 0.5 * dt * k1[0], sk + 0.5 * dt * k1[1])
        k3 = rhs(wk + 0.5 * dt * k2[0], sk + 0.5 * dt * k2[1])
        k4 = rhs(wk + dt * k3[0], sk + dt * k3[1])
        w[k + 1] = wk + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        s[k + 1] = sk + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    if np.any(w <= 0.0) or np.any(s <= 0.0):
        raise FloatingPointError("scale ODE produced non-positive w or wdot")
    return t, w, s


def solve_beta_ode(c, p, n, t, w, wdot, beta0) -> np.ndarray:
    """RK4 on the linear phase ODE c^p betadot + beta = n log w - log C - 1.

    Midpoint values of w come from two-point quintic Hermite interpolation
    of (w, wdot, wddot), with wddot supplied by the scale ODE itself; the
    O(dt^6) interpolant keeps the full fourth order of RK4.
    """
    q = p / (p - 1.0)
    cp = c ** p
    dt = float(t[1] - t[0])
    logC = math.log(c_np(n, p))
    wddot = ((p - 1.0) / p ** (q - 1.0) * wdot ** (2.0 - q) / w - (p - 1.0) * wdot) / cp

    def rhs(logw, b):
        return (n * logw - logC - 1.0 - b) / cp

    beta = np.empty_like(w)
    beta[0] = beta0
    for k in range(len(t) - 1):
        w_mid = (
            0.5 * (w[k] + w[k + 1])
            + 5.0 / 32.0 * dt * (wdot[k] - wdot[k + 1])
            + dt * dt / 64.0 * (wddot[k] + wddot[k + 1])
        )
        lw0, lwm, lw1 = math.log(w[k]), math.log(w_mid), math.log(w[k + 1])
        b = beta[k]
        k1 = rhs(lw0, b)
        k2 = rhs(lwm, b + 0.5 * dt * k1)
        k3 = rhs(lwm, b + 0.5 * dt * k2)
        k4 = rhs(lw1, b + dt * k3)
        beta[k + 1] = b + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return beta


def _eta_series(c, p, t, w, eta0) -> np.ndarray:
    """eta along the whole trajectory via cumulative composite Simpson.

    eta(t) = -w^2(t) e^(k(t-t0)) [ F(t) - eta0 / w^2(t0) ],
    F(t) = int_{t0}^t w^(-2)(s) e^(-k(s-t0)) ds,  k = (p-1)/c^p,
    which solves (1 + etadot)/eta = 2 alpha + k for any eta0; eta0 is the
    free constant of the indefinite integral.
    """
    k_damp = 0.0 if math.isinf(c) else (p - 1.0) / c ** p
    dt = float(t[1] - t[0])
    g = np.exp(-k_damp * (t - t[0])) / (w * w)
    F = np.empty_like(g)
    F[0] = 0.0
    if len(g) > 2:
        F[1] = dt / 12.0 * (5.0 * g[0] + 8.0 * g[1] - g[2])
    elif len(g) > 1:
        F[1] = dt / 2.0 * (g[0] + g[1])
    for m in range(2, len(g)):
        F[m] = F[m - 2] + dt / 3.0 * (g[m - 2] + 4.0 * g[m - 1] + g[m])
    return -(w * w) * np.exp(k_damp * (t - t[0])) * (F - eta0 / (w[0] * w[0]))


def eta_weight(w_traj, c, p, t0, t, eta0: float = 0.0) -> float:
    """eta(t) for a stored (t, w) trajectory, integral lower limit t0.

    `w_traj` is a (times, w) pair on a uniform grid; t0 and t must both be
    trajectory times with t >= t0.  eta0 fixes the integration constant
    (eta(t0) = eta0); the defining ODE relation holds for every choice.
    """
    times, w = np.asarray(w_traj[0], dtype=float), np.asarray(w_traj[1], dtype=float)
    dt = float(times[1] - times[0])
    i0 = int(round((t0 - times[0]) / dt))
    i1 = int(round((t - times[0]) / dt))
    if not (0 <= i0 <= i1 < len(times)):
        raise ValueError(f"eta_weight needs trajectory times with t0 <= t, got t0={t0}, t={t}")
    for i, tv in ((i0, t0), (i1, t)):
        if abs(times[i] - tv) > 1e-9 * max(1.0, abs(tv)):
            raise ValueError(f"{tv} is not a trajectory time")
    series = _eta_series(c, p, times[i0:], w[i0:], eta0)
    return float(series[i1 - i0])


def scale_trajectory(
    c, p, n, t0, T, dt,
    w0: float = 1.0, wdot0: float = 1.0,
    beta0: float | None = None, eta0: float | None = None,
) -> ScaleTrajectory:
    """Assemble the full scale system for any coupling regime.

    c = inf and c = 0 bypass the solver with their closed forms (w = t and
    w = t^(1/p)); finite c runs RK4.  beta0 defaults to the phase
    equilibrium at t0 and eta0 to t0, the value that reproduces eta(t) = t
    exactly in the geodesic mode.
    """
    nsteps = int(round((T - t0) / dt))
    t = t0 + dt * np.arange(nsteps + 1)
    logC = math.log(c_np(n, p))
    if math.isinf(c):
        w, wdot = t.copy(), np.ones_like(t)
        beta = np.full_like(t, 0.0 if beta0 is None else beta0)
        eta = t.copy()
        return ScaleTrajectory(c, p, n, t, w, wdot, beta, eta)
    if c == 0.0:
        w = t ** (1.0 / p)
        wdot = (1.0 / p) * t ** (1.0 / p - 1.0)
        beta = n * np.log(w) - logC - 1.0
        eta = t.copy()
        return ScaleTrajectory(c, p, n, t, w, wdot, beta, eta)
    t, w, wdot = solve_scale_ode(c, p, w0, wdot0, t0, T, dt)
    if beta0 is None:
        beta0 = n * math.log(w0) - logC - 1.0
    beta = solve_beta_ode(c, p, n, t, w, wdot, beta0)
    eta = _eta_series(c, p, t, w, t0 if eta0 is None else eta0)
    return ScaleTrajectory(c, p, n, t, w, wdot, beta, eta)

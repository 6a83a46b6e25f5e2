"""Explicit time integration of the three flow regimes.

The evolving state is U = (log rho, u), the variable choice that makes
the continuity/momentum pair symmetric hyperbolic, with the potential phi
carried redundantly because the entropy diagnostics need it.  A monitor
keeps |u - grad phi| honest instead of reconstructing phi from u.

Regimes:
    geodesic          d_t log rho = -(1/rho) div(rho v),  v = |u|^(p-2) u
                      d_t phi = -(1/p)|u|^p,   d_t u = grad(d_t phi)
    langevin          same continuity; momentum gains the damping
                      -(u + grad log rho)/c^p and phi the matching
                      -(phi + log rho + 1)/c^p
    langevin-backward damping signs flipped to (-phi + log rho + 1)/c^p
    pheat             d_t log rho = (1/rho) div(rho |grad log rho|^(p-2)
                      grad log rho); phi = -log rho - 1 and u = grad phi
                      are slaved

The continuity update is evaluated in flux form divided by rho, so the
semi-discrete total mass is conserved exactly on periodic grids; RK4 then
leaves only an O(dt^4) drift.  Smooth-regime scope: central differences
and RK4, no shock capturing; runs abort on CFL or monitor breach.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import diagnostics
from .closedform import (
    ScaleTrajectory,
    scale_trajectory,
    special_geodesic,
    special_langevin,
    special_pheat,
)
from .fields import Grid, ModelParams, curl2d, divergence, gradient, jacobian, quadrature, regularized_speed, speed2

__all__ = [
    "FlowState",
    "RunConfig",
    "RunResult",
    "FlowError",
    "MonitorBreach",
    "geodesic_rhs",
    "langevin_rhs",
    "pheat_rhs",
    "cfl_dt",
    "rk4_step",
    "run",
    "splitmix64_stream",
    "trig_perturbation",
]

REGIMES = ("geodesic", "langevin", "pheat", "langevin-backward")


class FlowError(RuntimeError):
    """Integration failed (blow-up, non-finite fields, bad configuration)."""


class MonitorBreach(FlowError):
    """A runtime monitor left its tolerance; `monitor` names the offender."""

    def __init__(self, monitor: str, value: float, t: float, tol: float):
        self.monitor = monitor
        self.value = value
        self.t = t
        self.tol = tol
        super().__init__(f"monitor '{monitor}' breached at t={t:.6g}: |{value:.6g}| > {tol:.6g}")


@dataclass
class FlowState:
    """Evolving (log rho, u, phi) triple at time t."""

    t: float
    logrho: np.ndarray
    u: np.ndarray
    phi: np.ndarray
    regime: str = "geodesic"


# ---------------------------------------------------------------------------
# regime right-hand sides
# ---------------------------------------------------------------------------

def _continuity(grid: Grid, logrho: np.ndarray, V: np.ndarray) -> np.ndarray:
    """-(1/rho) div(rho V): flux form keeps the discrete mass sum exact."""
    rho = np.exp(logrho)
    return -divergence(grid, rho * V) / rho


def geodesic_rhs(grid: Grid, state: FlowState, params: ModelParams):
    """Kinetic transport: continuity plus the p-Hamilton-Jacobi equation.

    u advances by the discrete gradient of the phi update, so u = grad phi
    propagates exactly through the linear RK4 combinations.
    """
    rs = regularized_speed(state.u, params)
    dlogrho = _continuity(grid, state.logrho, rs * state.u)
    dphi = -speed2(state.u, params) ** (params.p / 2.0) / params.p
    du = gradient(grid, dphi)
    return dlogrho, du, dphi


def langevin_rhs(grid: Grid, state: FlowState, params: ModelParams, backward: bool = False):
    """Damped kinetic transport (compressible p-Euler form of the momentum).

    The momentum equation is integrated as a genuine vector equation,
    d_t u = -|u|^(p-2) (grad u) u - (u + grad log rho)/c^p, so a curl in u
    is transported and damped at rate c^-p rather than projected away.
    """
    cp = params.cp
    if not (0.0 < cp < math.inf):
        raise FlowError(f"langevin regime needs c in (0, inf), got c={params.c}")
    rs = regularized_speed(state.u, params)
    dlogrho = _continuity(grid, state.logrho, rs * state.u)
    glr = gradient(grid, state.logrho)
    J = jacobian(grid, state.u)
    adv = rs * np.einsum("ij...,j...->i...", J, state.u)
    # phi and u are always damped; the backward system flips the entropy force
    sgn = -1.0 if backward else 1.0
    dphi = -speed2(state.u, params) ** (params.p / 2.0) / params.p - (
        state.phi + sgn * (state.logrho + 1.0)
    ) / cp
    du = -adv - (state.u + sgn * glr) / cp
    return dlogrho, du, dphi


def pheat_rhs(grid: Grid, state: FlowState, params: ModelParams):
    """Entropy gradient flow: the p-Laplacian heat equation for log rho."""
    g = gradient(grid, state.logrho)
    rho = np.exp(state.logrho)
    return divergence(grid, rho * regularized_speed(g, params) * g) / rho, None, None


def _rhs(grid, state, params):
    if state.regime == "geodesic":
        return geodesic_rhs(grid, state, params)
    if state.regime == "langevin":
        return langevin_rhs(grid, state, params)
    if state.regime == "langevin-backward":
        return langevin_rhs(grid, state, params, backward=True)
    if state.regime == "pheat":
        return pheat_rhs(grid, state, params)
    raise FlowError(f"unknown regime '{state.regime}'")


def _slave_pheat(grid: Grid, state: FlowState) -> FlowState:
    state.phi = -state.logrho - 1.0
    state.u = -gradient(grid, state.logrho)
    return state


# ---------------------------------------------------------------------------
# step control
# ---------------------------------------------------------------------------

def cfl_dt(grid: Grid, state: FlowState, params: ModelParams, sigma: float, dt_max: float = 0.05) -> float:
    """Stable explicit step: advective h/speed bound, damping time c^p,
    and the parabolic h^2 bound for the p-heat regime.

    Raises FlowError if the speeds are non-finite (blow-up already
    happened)."""
    if not 0.0 < sigma < 1.0:
        raise FlowError(f"CFL number must lie in (0,1), got {sigma}")
    h = min(grid.h)
    if state.regime == "pheat":
        g = gradient(grid, state.logrho)
        diff = max(1.0, params.p - 1.0) * float(regularized_speed(g, params).max())
        if not math.isfinite(diff):
            raise FlowError("non-finite diffusivity: blow-up detected")
        dt = sigma * h * h / (2.0 * grid.ndim * max(diff, 1e-300))
        return min(dt, dt_max)
    v = regularized_speed(state.u, params) * state.u
    vmax = float(np.sqrt(sum(v[i] * v[i] for i in range(grid.ndim))).max())
    if not math.isfinite(vmax):
        raise FlowError("non-finite transport speed: blow-up detected")
    speed = vmax
    cp = params.cp
    if 0.0 < cp < math.inf:
        # acoustic speed of the damped hyperbolic pair, plus relaxation time
        speed += cp ** -0.5
        return min(sigma * h / max(speed, 1e-300), sigma * cp, dt_max)
    return min(sigma * h / max(speed, 1e-300), dt_max)


def rk4_step(grid: Grid, state: FlowState, params: ModelParams, dt: float) -> FlowState:
    """One classical RK4 step; p-heat re-slaves phi and u afterwards.

    The p-heat right-hand side reads only log rho, so its stage states
    carry the base u and phi untouched and the slaving happens once at the
    end of the step.
    """
    pheat = state.regime == "pheat"

    def stage(coef: float, k) -> FlowState:
        return FlowState(
            t=state.t,
            logrho=state.logrho + coef * k[0],
            u=state.u if pheat else state.u + coef * k[1],
            phi=state.phi if pheat else state.phi + coef * k[2],
            regime=state.regime,
        )

    k1 = _rhs(grid, state, params)
    k2 = _rhs(grid, stage(0.5 * dt, k1), params)
    k3 = _rhs(grid, stage(0.5 * dt, k2), params)
    k4 = _rhs(grid, stage(dt, k3), params)

    def combine(base, i):
        return base + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])

    new = FlowState(
        t=state.t + dt,
        logrho=combine(state.logrho, 0),
        u=state.u if pheat else combine(state.u, 1),
        phi=state.phi if pheat else combine(state.phi, 2),
        regime=state.regime,
    )
    return _slave_pheat(grid, new) if pheat else new


# ---------------------------------------------------------------------------
# seeded perturbations (cross-language reproducible)
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


def splitmix64_stream(seed: int):
    """splitmix64 as an endless stream of doubles in [0, 1).

    Each output is (z >> 11) * 2^-53 of the next splitmix64 word, so any
    implementation of the reference algorithm reproduces runs bit-for-bit.
    """
    s = seed & _MASK64
    while True:
        s = (s + 0x9E3779B97F4A7C15) & _MASK64
        z = s
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4B595) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        z = z ^ (z >> 31)
        yield (z >> 11) * 2.0 ** -53


class trig_perturbation:
    """Low-frequency trigonometric polynomial with an analytic gradient.

    Draw order (documented for ports): for each axis a = 0..n-1, for each
    mode m = 1..2, a cosine then a sine coefficient, each 2U-1 scaled by
    amp/m; in 2D two extra cross-mode coefficients follow, with unequal
    wavenumbers (1, 2) so the discrete curl of the analytic gradient is a
    genuine O(h^2) quantity rather than an exact cancellation.  The value
    and gradient are exact trigonometric sums, not finite differences.
    """

    _CROSS_MODES = (1, 2)

    def __init__(self, grid: Grid, amp: float, stream):
        self.grid = grid
        self.terms = []  # (axis or "cross", m, is_sin, coeff)
        for a in range(grid.ndim):
            for m in (1, 2):
                for is_sin in (False, True):
                    self.terms.append((a, m, is_sin, amp / m * (2.0 * next(stream) - 1.0)))
        if grid.ndim == 2:
            for is_sin in (False, True):
                self.terms.append(("cross", 1, is_sin, 0.5 * amp * (2.0 * next(stream) - 1.0)))

    def _xi(self, a):
        x = self.grid.meshgrid()[a]
        return 2.0 * math.pi * (x - self.grid.lo[a]) / (self.grid.hi[a] - self.grid.lo[a])

    def _k(self, a):
        return 2.0 * math.pi / (self.grid.hi[a] - self.grid.lo[a])

    def value(self) -> np.ndarray:
        f = np.zeros(self.grid.shape)
        m0, m1 = self._CROSS_MODES
        for a, m, is_sin, coef in self.terms:
            trig = np.sin if is_sin else np.cos
            if a == "cross":
                f += coef * trig(m0 * self._xi(0)) * trig(m1 * self._xi(1))
            else:
                f += coef * trig(m * self._xi(a))
        return f

    def grad(self) -> np.ndarray:
        g = np.zeros((self.grid.ndim,) + self.grid.shape)
        m0, m1 = self._CROSS_MODES
        for a, m, is_sin, coef in self.terms:
            if a == "cross":
                x0, x1 = m0 * self._xi(0), m1 * self._xi(1)
                if is_sin:
                    g[0] += coef * m0 * self._k(0) * np.cos(x0) * np.sin(x1)
                    g[1] += coef * m1 * self._k(1) * np.sin(x0) * np.cos(x1)
                else:
                    g[0] += -coef * m0 * self._k(0) * np.sin(x0) * np.cos(x1)
                    g[1] += -coef * m1 * self._k(1) * np.cos(x0) * np.sin(x1)
            else:
                xi = m * self._xi(a)
                d = coef * m * self._k(a)
                g[a] += d * np.cos(xi) if is_sin else -d * np.sin(xi)
        return g


def _rotational_field(grid: Grid, amp: float) -> np.ndarray:
    """Divergence-free u = amp (d_y psi, -d_x psi), psi = cos xi0 cos xi1."""
    if grid.ndim != 2:
        raise FlowError("rotational initial data needs a 2D grid")
    xs = grid.meshgrid()
    k = [2.0 * math.pi / (grid.hi[a] - grid.lo[a]) for a in range(2)]
    xi = [k[a] * (xs[a] - grid.lo[a]) for a in range(2)]
    u = np.zeros((2,) + grid.shape)
    u[0] = -amp * k[1] * np.cos(xi[0]) * np.sin(xi[1])
    u[1] = amp * k[0] * np.sin(xi[0]) * np.cos(xi[1])
    return u


# ---------------------------------------------------------------------------
# full runs
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    """Everything one integration needs; see the CLI docs for file keys."""

    grid: Grid
    params: ModelParams
    regime: str
    t0: float
    T: float
    dt: float | None = None          # explicit step; None derives it from sigma
    sigma: float = 0.4
    dt_max: float = 0.05
    diag_every: int = 8              # steps between diagnostic records
    ic: str = "special"              # special | perturbed | files
    seed: int = 1
    amp_rho: float = 0.3
    amp_phi: float = 0.2
    rot_amp: float = 0.0
    ic_fields: tuple | None = None   # (logrho, u, phi) arrays for ic="files"
    scale_w0: float = 1.0
    scale_wdot0: float = 1.0
    scale_beta0: float | None = None
    mass_tol: float = 1e-6
    ugrad_tol: float | None = None   # None: 1000 (h^2 + dt^4) (1 + max|u0|)
    curl_tol: float | None = None    # None: same scale plus 10x initial curl


@dataclass
class RunResult:
    records: list
    final_state: FlowState
    grid: Grid
    params: ModelParams
    regime: str
    dt: float
    scale: ScaleTrajectory | None
    initial_mass: float


def _initial_state(config: RunConfig, scale: ScaleTrajectory | None) -> FlowState:
    grid, params, regime = config.grid, config.params, config.regime
    if config.ic == "special":
        if grid.periodic:
            raise FlowError("ic=special needs a truncated box (self-similar data lives on R^n)")
        if regime == "geodesic":
            sf = special_geodesic(grid, grid.ndim, params.p, config.t0)
        elif regime == "pheat":
            sf = special_pheat(grid, grid.ndim, params.p, config.t0)
        else:
            sf = special_langevin(grid, grid.ndim, params.p, params.c, scale.sample(config.t0))
        logrho = np.log(np.maximum(sf.rho, 1e-300))
        return FlowState(config.t0, logrho, sf.u.copy(), sf.phi.copy(), regime)
    if config.ic == "perturbed":
        if not grid.periodic:
            raise FlowError("ic=perturbed generates torus data; use a periodic grid")
        stream = splitmix64_stream(config.seed)
        bump = trig_perturbation(grid, config.amp_rho, stream)
        pot = trig_perturbation(grid, config.amp_phi, stream)
        raw = bump.value()
        rho = np.exp(raw)
        rho /= quadrature(grid, rho)
        phi = pot.value()
        u = pot.grad()
        if config.rot_amp != 0.0:
            u = u + _rotational_field(grid, config.rot_amp)
        state = FlowState(config.t0, np.log(rho), u, phi, regime)
        return _slave_pheat(grid, state) if regime == "pheat" else state
    if config.ic == "files":
        if config.ic_fields is None:
            raise FlowError("ic=files needs ic_fields=(logrho, u, phi)")
        logrho, u, phi = config.ic_fields
        return FlowState(config.t0, np.asarray(logrho, float), np.asarray(u, float), np.asarray(phi, float), regime)
    raise FlowError(f"unknown initial-condition selector '{config.ic}'")


def run(config: RunConfig, on_record=None) -> RunResult:
    """Integrate one configuration and collect diagnostic records.

    The step is fixed for the whole run (explicit dt, or the initial CFL
    bound rounded so records land on a uniform grid and the final step
    hits T exactly).  After every step the fields must stay finite and the
    mass within tolerance of 1; at every record the u-vs-grad(phi) gap,
    the curl norm (2D) and the CFL bound are checked too.  The run aborts
    on the first breach, naming the offending monitor.
    """
    grid, params, regime = config.grid, config.params, config.regime
    if regime not in REGIMES:
        raise FlowError(f"unknown regime '{regime}', expected one of {REGIMES}")
    if not config.T > config.t0:
        raise FlowError("need T > t0")

    backward = regime == "langevin-backward"
    horizon = config.T - config.t0

    scale = None
    if regime in ("langevin", "langevin-backward"):
        cp = params.cp
        if not (0.0 < cp < math.inf):
            raise FlowError(f"regime '{regime}' needs c in (0, inf), got c={params.c}")

    state = _initial_state(config, _prelim_scale(config) if regime.startswith("langevin") else None)

    # fixed step, rounded so diag_every steps tile each record interval
    dt0 = config.dt if config.dt is not None else cfl_dt(grid, state, params, config.sigma, config.dt_max)
    nsteps = max(config.diag_every, int(math.ceil(horizon / dt0)))
    nsteps = config.diag_every * int(math.ceil(nsteps / config.diag_every))
    dt = horizon / nsteps

    if regime in ("langevin", "langevin-backward"):
        record_dt = dt * config.diag_every
        ode_dt = record_dt / max(1, int(math.ceil(record_dt / min(1e-3, 0.4 * params.cp))))
        scale = scale_trajectory(
            params.c, params.p, grid.ndim, config.t0, config.T, ode_dt,
            w0=config.scale_w0, wdot0=config.scale_wdot0, beta0=config.scale_beta0,
        )

    # normalize the initial mass so conservation is measured against 1
    mass0 = quadrature(grid, np.exp(state.logrho))
    state.logrho = state.logrho - math.log(mass0)

    h2dt4 = min(grid.h) ** 2 + dt ** 4
    uscale = 1.0 + float(np.abs(state.u).max())
    ugrad_tol = config.ugrad_tol if config.ugrad_tol is not None else 1000.0 * h2dt4 * uscale
    curl0 = float(np.abs(curl2d(grid, state.u)).max()) if grid.ndim == 2 else 0.0
    curl_tol = config.curl_tol if config.curl_tol is not None else 1000.0 * h2dt4 * uscale + 10.0 * curl0

    def make_record(s: FlowState):
        sample = scale.sample(round_t(s.t)) if scale is not None else None
        rec = diagnostics.compute_record(grid, s, params, scale_sample=sample, backward=backward)
        if on_record is not None:
            on_record(s, rec)
        return rec

    def round_t(t):
        # keep scale lookups on the exact record grid despite fp drift
        k = round((t - config.t0) / dt)
        return config.t0 + k * dt

    def check_mass(s: FlowState):
        mass = quadrature(grid, np.exp(s.logrho))
        if not math.isfinite(mass):
            raise MonitorBreach("finite", mass, s.t, math.inf)
        if abs(mass - 1.0) > config.mass_tol:
            raise MonitorBreach("mass", mass - 1.0, s.t, config.mass_tol)

    def check_monitors(s: FlowState, rec):
        if regime != "pheat" and rec.ugrad_gap > ugrad_tol:
            raise MonitorBreach("ugrad", rec.ugrad_gap, s.t, ugrad_tol)
        if grid.ndim == 2 and rec.curl_max > curl_tol:
            raise MonitorBreach("curl", rec.curl_max, s.t, curl_tol)
        if dt > cfl_dt(grid, s, params, 0.95, dt_max=math.inf):
            raise MonitorBreach("cfl", dt, s.t, cfl_dt(grid, s, params, 0.95, dt_max=math.inf))

    records = []
    check_mass(state)
    rec = make_record(state)
    check_monitors(state, rec)
    records.append(rec)

    for k in range(nsteps):
        state = rk4_step(grid, state, params, dt)
        if not np.isfinite(state.logrho).all():
            raise MonitorBreach("finite", math.nan, state.t, math.inf)
        check_mass(state)
        if (k + 1) % config.diag_every == 0:
            state.t = round_t(state.t)
            rec = make_record(state)
            check_monitors(state, rec)
            records.append(rec)

    return RunResult(records, state, grid, params, regime, dt, scale, mass0)


def _prelim_scale(config: RunConfig) -> ScaleTrajectory | None:
    """Scale trajectory for building special initial data at t0 only."""
    params = config.params
    if config.ic != "special":
        return None
    dt = min(1e-3, 0.4 * params.cp)
    return scale_trajectory(
        params.c, params.p, config.grid.ndim, config.t0, config.t0 + 2.0 * dt, dt,
        w0=config.scale_w0, wdot0=config.scale_wdot0, beta0=config.scale_beta0,
    )

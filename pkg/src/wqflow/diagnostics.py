"""Entropy and energy functionals plus the identity-verification harness.

Every proved identity is checked the same way: the time-derivative side is
a centered finite difference over the diagnostic record series, the
integral side is an instantaneous quadrature over the fields; the two
sides are never assembled from each other, so agreement actually verifies
the identity rather than the bookkeeping.

A DiagnosticsRecord is one time slice of all scalar functionals.  Records
are produced during a run (or from closed-form samples) and all checks
operate on record lists after the fact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .closedform import c_np
from .fields import (
    Grid,
    ModelParams,
    a_inner,
    a_norm2,
    anisotropy,
    curl2d,
    divergence,
    gradient,
    hessian,
    linearized_p_laplacian,
    p_laplacian,
    quadrature,
    regularized_speed,
    speed2,
)

__all__ = [
    "DiagnosticsRecord",
    "compute_record",
    "write_diagnostics_csv",
    "CSV_COLUMNS",
    "entropy",
    "relative_entropy_np",
    "w_entropy_series",
    "convexity_series",
    "entropy_dissipation_check",
    "wie_check",
    "hamiltonian_checks",
    "conservation_checks",
    "bochner_residual",
    "wq_distance_1d",
]

# density floor inside logarithms; x log x -> 0 handled by masking tiny mass
_RHO_FLOOR = 1e-300
_RHO_TINY = 1e-14


@dataclass(frozen=True)
class DiagnosticsRecord:
    """All scalar functionals of one flow state.

    Quadratures (K, P, fisher_a, hess_a, defect integrals, dent_*) are
    instantaneous; any time derivative is left to the series helpers.  The
    scale quantities (w, alpha, eta, beta) come from the matching scale
    trajectory, or from the closed forms w = t (geodesic), w = t^(1/p)
    (p-heat).
    """

    t: float
    mass: float
    ent: float                # Boltzmann entropy  int rho log rho
    ent_np: float             # relative entropy with scale t
    ent_cnp: float            # relative entropy with scale w(t)
    kin: float                # K = int |grad phi|_eps^p rho
    pot: float                # P = int phi rho
    dent_flux: float          # int <grad rho, |u|^(p-2) u>
    dent_div: float           # -int rho div(|u|^(p-2) u); adjoint twin of dent_flux
    fisher_a: float           # int |u|^(p-2) |grad log rho|_A^2 rho
    damp_a: float             # int |u|^(p-2) |u +- grad log rho|_A^2 rho (sign per regime)
    hess_a: float             # int | |u|^(p-2) Hess phi |_A^2 rho
    defect_geo: float         # int | |u|^(p-2) Hess phi - a/t |_A^2 rho
    defect_alpha: float       # same with alpha(t) in place of 1/t
    i_cnp: float              # fisher_a minus the self-similar baseline
    h_c: float                # Hamiltonian of the active regime
    l_c: float                # Lagrangian (c^p/q) K - Ent
    w: float
    alpha: float
    eta: float
    beta: float
    curl_max: float           # max |curl u| (2D, else nan)
    ugrad_gap: float          # max |u - grad phi|


def entropy(grid: Grid, rho: np.ndarray) -> float:
    """Boltzmann entropy; nodes below the tiny-mass cutoff contribute 0."""
    safe = np.maximum(rho, _RHO_FLOOR)
    integrand = np.where(rho > _RHO_TINY, rho * np.log(safe), 0.0)
    return quadrature(grid, integrand)


def relative_entropy_np(grid: Grid, rho: np.ndarray, t: float, n: int, p: float) -> float:
    """Entropy relative to the self-similar profile at scale t.

    Ent + (n/q)(1 + log(C^(-q/n) t^q)); identically zero on the
    self-similar solution itself.
    """
    q = p / (p - 1.0)
    return entropy(grid, rho) + n / q - math.log(c_np(n, p)) + n * math.log(t)


def _relative_term(n: int, p: float, w: float) -> float:
    q = p / (p - 1.0)
    return n / q - math.log(c_np(n, p)) + n * math.log(w)


def compute_record(
    grid: Grid,
    state,
    params: ModelParams,
    scale_sample=None,
    backward: bool = False,
) -> DiagnosticsRecord:
    """Evaluate every scalar functional on one flow state.

    `scale_sample` supplies (w, alpha, eta, beta) for the Langevin regime.
    Without it the geodesic scale w = t is used for generic states and
    w = t^(1/p) when the state is flagged as p-heat.
    """
    t = state.t
    p, q, n = params.p, params.q, grid.ndim
    rho = np.exp(state.logrho)
    u, phi = state.u, state.phi

    if scale_sample is not None:
        w, alpha, eta, beta = scale_sample.w, scale_sample.alpha, scale_sample.eta, scale_sample.beta
    elif getattr(state, "regime", "") == "pheat":
        w, alpha, eta, beta = t ** (1.0 / p), 1.0 / (p * t), t, math.nan
    else:
        w, alpha, eta, beta = t, 1.0 / t, t, math.nan

    rs = regularized_speed(u, params)
    V = rs * u
    grad_logrho = gradient(grid, state.logrho)
    grad_rho = gradient(grid, rho)
    A, a = anisotropy(u, params)
    X = rs * hessian(grid, phi)

    mass = quadrature(grid, rho)
    ent = entropy(grid, rho)
    kin = quadrature(grid, speed2(u, params) ** (p / 2.0), weight=rho)
    pot = quadrature(grid, phi, weight=rho)
    dent_flux = quadrature(grid, sum(grad_rho[i] * V[i] for i in range(grid.ndim)))
    dent_div = -quadrature(grid, rho * divergence(grid, V))
    fisher_a = quadrature(grid, rs * a_inner(grad_logrho, grad_logrho, A), weight=rho)
    # damping integrand of the second-derivative energy laws; the backward
    # system replaces u + grad log rho by u - grad log rho
    damp_vec = u - grad_logrho if backward else u + grad_logrho
    damp_a = quadrature(grid, rs * a_inner(damp_vec, damp_vec, A), weight=rho)
    hess_a = quadrature(grid, a_norm2(X, A), weight=rho)
    defect_geo = quadrature(grid, a_norm2(X - a / t, A), weight=rho)
    defect_alpha = quadrature(grid, a_norm2(X - alpha * a, A), weight=rho)
    i_cnp = fisher_a - (p - 1.0) / p ** (q - 1.0) * n * alpha ** (2.0 - q) / w ** q

    cp = params.cp
    if math.isinf(cp):
        h_c = math.nan
        l_c = math.nan
    else:
        h_c = (cp / q if backward else cp / p) * kin + ent
        l_c = cp / q * kin - ent

    curl_max = (
        float(np.abs(curl2d(grid, u)).max()) if grid.ndim == 2 else math.nan
    )
    ugrad_gap = float(np.abs(u - gradient(grid, phi)).max())

    return DiagnosticsRecord(
        t=t,
        mass=mass,
        ent=ent,
        ent_np=ent + _relative_term(n, p, t),
        ent_cnp=ent + _relative_term(n, p, w),
        kin=kin,
        pot=pot,
        dent_flux=dent_flux,
        dent_div=dent_div,
        fisher_a=fisher_a,
        damp_a=damp_a,
        hess_a=hess_a,
        defect_geo=defect_geo,
        defect_alpha=defect_alpha,
        i_cnp=i_cnp,
        h_c=h_c,
        l_c=l_c,
        w=w,
        alpha=alpha,
        eta=eta,
        beta=beta,
        curl_max=curl_max,
        ugrad_gap=ugrad_gap,
    )


# ---------------------------------------------------------------------------
# series helpers (uniform record spacing)
# ---------------------------------------------------------------------------

def _col(records, name) -> np.ndarray:
    return np.array([getattr(r, name) for r in records], dtype=float)


def _dt_of(records) -> float:
    ts = _col(records, "t")
    dts = np.diff(ts)
    if len(dts) == 0 or not np.allclose(dts, dts[0], rtol=1e-8, atol=1e-12):
        raise ValueError("records are not uniformly spaced in time")
    return float(dts[0])


def _ddt(y: np.ndarray, dt: float) -> np.ndarray:
    """Centered first difference on interior nodes."""
    return (y[2:] - y[:-2]) / (2.0 * dt)


def _d2dt(y: np.ndarray, dt: float) -> np.ndarray:
    """Centered second difference on interior nodes."""
    return (y[2:] - 2.0 * y[1:-1] + y[:-2]) / (dt * dt)


def w_entropy_series(records):
    """W-entropy balance along a geodesic run.

    Returns (t, w_np, dw_lhs, dw_rhs) on interior records: w_np is the
    centered first difference of t*Ent_np, dw_lhs its centered second
    difference, and dw_rhs the instantaneous defect integral t*defect_geo.
    On a flat domain the two dw sides agree up to discretization error and
    both are nonnegative.
    """
    if len(records) < 3:
        raise ValueError("w_entropy_series needs at least 3 records")
    dt = _dt_of(records)
    ts = _col(records, "t")
    g = ts * _col(records, "ent_np")
    w_np = _ddt(g, dt)
    dw_lhs = _d2dt(g, dt)
    dw_rhs = (ts * _col(records, "defect_geo"))[1:-1]
    return ts[1:-1], w_np, dw_lhs, dw_rhs


def convexity_series(records, n: int):
    """Second difference of E(t) = t Ent + n t log t along a run.

    Convex (nonnegative) along geodesic flows on Ric >= 0 domains, and
    equal to the W-entropy rate dW/dt.
    """
    if len(records) < 3:
        raise ValueError("convexity_series needs at least 3 records")
    dt = _dt_of(records)
    ts = _col(records, "t")
    E = ts * _col(records, "ent") + n * ts * np.log(ts)
    return ts[1:-1], _d2dt(E, dt)


def entropy_dissipation_check(records, params: ModelParams):
    """Entropy dissipation balance for the forward Langevin flow.

    d2Ent/dt2 + ((p-1)/c^p) dEnt/dt + fisher_A/c^p = hess_A  (flat domain).
    Returns (t, lhs, rhs, relative residual) on interior records.  The
    residual is normalized by the window maximum of |rhs|: the Hessian
    integral can sweep through zero along a run while the balance's other
    terms stay O(1), so a pointwise ratio would blow up at instants where
    the identity holds to full absolute precision.
    """
    if len(records) < 3:
        raise ValueError("entropy_dissipation_check needs at least 3 records")
    cp = params.cp
    if not (0.0 < cp < math.inf):
        raise ValueError("entropy dissipation balance needs finite positive c")
    dt = _dt_of(records)
    ent = _col(records, "ent")
    lhs = (
        _d2dt(ent, dt)
        + (params.p - 1.0) / cp * _ddt(ent, dt)
        + _col(records, "fisher_a")[1:-1] / cp
    )
    rhs = _col(records, "hess_a")[1:-1]
    rel = np.abs(lhs - rhs) / max(float(np.abs(rhs).max()), 1e-300)
    return _col(records, "t")[1:-1], lhs, rhs, rel


def wie_check(records, params: ModelParams):
    """W-entropy-information balance for the Langevin flow.

    (1/eta) dW/dt + I/c^p = defect integral with rate alpha(t), where
    W = Ent_cnp + eta * d/dt Ent_cnp.  Needs five consecutive records
    (two nested centered differences).  Returns (t, lhs, i_term, rhs,
    residual) on the doubly-interior records.
    """
    if len(records) < 5:
        raise ValueError("wie_check needs at least 5 records")
    cp = params.cp
    if not (0.0 < cp < math.inf):
        raise ValueError("the W-entropy-information balance needs finite positive c")
    dt = _dt_of(records)
    e = _col(records, "ent_cnp")
    eta = _col(records, "eta")
    W = e[1:-1] + eta[1:-1] * _ddt(e, dt)
    dW = _ddt(W, dt)
    eta_in = eta[2:-2]
    if np.any(np.abs(eta_in) < 1e-12):
        raise ValueError("eta vanishes inside the check window")
    lhs = dW / eta_in
    i_term = _col(records, "i_cnp")[2:-2] / cp
    rhs = _col(records, "defect_alpha")[2:-2]
    residual = lhs + i_term - rhs
    return _col(records, "t")[2:-2], lhs, i_term, rhs, residual


def hamiltonian_checks(records, params: ModelParams, backward: bool = False):
    """Residuals of the Hamiltonian/Lagrangian derivative laws.

    Forward: dH/dt = -K,  d2H/dt2 = (p/c^p)(dent_div + K),
             dL/dt = -p dent_flux - (p-1) K,
             d2L/dt2 = -p hess_A + (p/c^p) damp_A.
    Backward: dH/dt = p dent_flux - (p-1) K,
              d2H/dt2 = p hess_A + (p/c^p) damp_A  (nonnegative: convex).
    Returns a dict of interior-record arrays.
    """
    if len(records) < 3:
        raise ValueError("hamiltonian_checks needs at least 3 records")
    cp = params.cp
    dt = _dt_of(records)
    p = params.p
    H = _col(records, "h_c")
    kin = _col(records, "kin")[1:-1]
    flux = _col(records, "dent_flux")[1:-1]
    damp = _col(records, "damp_a")[1:-1]
    hess = _col(records, "hess_a")[1:-1]
    out = {"t": _col(records, "t")[1:-1], "h": H[1:-1], "dh": _ddt(H, dt), "d2h": _d2dt(H, dt), "kin": kin}
    if backward:
        out["dh_law"] = p * flux - (p - 1.0) * kin
        out["d2h_law"] = p * hess + p / cp * damp
    else:
        out["dh_law"] = -kin
        out["d2h_law"] = p / cp * (_col(records, "dent_div")[1:-1] + kin)
        L = _col(records, "l_c")
        out["dl"] = _ddt(L, dt)
        out["dl_law"] = -p * flux - (p - 1.0) * kin
        out["d2l"] = _d2dt(L, dt)
        out["d2l_law"] = -p * hess + p / cp * damp
    return out


def conservation_checks(records, params: ModelParams):
    """Geodesic conservation laws: kinetic energy constant, dP/dt = K/q.

    Returns (relative kinetic drift, max relative error of dP/dt vs K/q,
    max mass deviation from the initial mass).
    """
    if len(records) < 3:
        raise ValueError("conservation_checks needs at least 3 records")
    dt = _dt_of(records)
    kin = _col(records, "kin")
    pot = _col(records, "pot")
    mass = _col(records, "mass")
    k_drift = float((kin.max() - kin.min()) / max(abs(kin[0]), 1e-300))
    dp = _ddt(pot, dt)
    law = kin[1:-1] / params.q
    dp_err = float(np.max(np.abs(dp - law) / np.maximum(np.abs(law), 1e-300)))
    mass_dev = float(np.max(np.abs(mass - mass[0])))
    return k_drift, dp_err, mass_dev


# ---------------------------------------------------------------------------
# pointwise p-Bochner identity
# ---------------------------------------------------------------------------

def bochner_residual(
    grid: Grid, phi: np.ndarray, params: ModelParams, gradient_floor: float = 0.0
):
    """Pointwise residual of the p-Bochner identity on a flat domain.

    L(|grad phi|^p) = p |grad phi|^(2p-4) |Hess phi|_A^2
                      + p |grad phi|^(p-2) <grad phi, grad Dp phi>,
    all factors eps-regularized.  Returns (residual field, max norm over
    the nodes with |grad phi| >= gradient_floor); the identity's
    hypotheses require a nonvanishing gradient, so callers restrict the
    max to such a region when phi has critical points.
    """
    p = params.p
    g = gradient(grid, phi)
    w = speed2(g, params)
    lhs = linearized_p_laplacian(grid, g, w ** (p / 2.0), params)
    A, _ = anisotropy(g, params)
    H = hessian(grid, phi)
    dp = p_laplacian(grid, phi, params)
    grad_dp = gradient(grid, dp)
    rhs = p * w ** ((2.0 * p - 4.0) / 2.0) * a_norm2(H, A) + p * w ** ((p - 2.0) / 2.0) * sum(
        g[i] * grad_dp[i] for i in range(grid.ndim)
    )
    res = lhs - rhs
    mask = w - params.eps >= gradient_floor ** 2
    max_res = float(np.abs(res[mask]).max()) if mask.any() else math.nan
    return res, max_res


# ---------------------------------------------------------------------------
# 1D transport distance oracle
# ---------------------------------------------------------------------------

def wq_distance_1d(
    grid: Grid, rho0: np.ndarray, rho1: np.ndarray, q: float,
    n_samples: int = 4096, mass_tol: float = 1e-6,
) -> float:
    """L^q transport distance between two 1D densities by monotone rearrangement.

    W_q^q = int_0^1 |F0^{-1}(s) - F1^{-1}(s)|^q ds with piecewise-linear
    CDFs (density constant per cell) inverted on a uniform midpoint s-grid.
    """
    if grid.ndim != 1:
        raise ValueError("wq_distance_1d needs a 1D grid")
    if q <= 0:
        raise ValueError(f"need q > 0, got {q}")
    h = grid.h[0]
    inverses = []
    for rho in (rho0, rho1):
        if np.any(rho < 0.0):
            raise ValueError("densities must be nonnegative")
        mass = float(rho.sum()) * h
        if abs(mass - 1.0) > mass_tol:
            raise ValueError(f"density mass {mass} deviates from 1 beyond {mass_tol}")
        cell_mass = rho * h / mass
        F = np.concatenate([[0.0], np.cumsum(cell_mass)])
        F[-1] = 1.0
        # left cell edges; both topologies tile [lo, hi) with width-h cells
        edges = grid.lo[0] + np.arange(len(rho) + 1) * h
        s = (np.arange(n_samples) + 0.5) / n_samples
        idx = np.clip(np.searchsorted(F, s, side="right") - 1, 0, len(rho) - 1)
        dens = np.maximum(cell_mass[idx], 1e-300) / h
        inverses.append(edges[idx] + (s - F[idx]) / dens)
    diff = np.abs(inverses[0] - inverses[1])
    return float(np.mean(diff ** q) ** (1.0 / q))


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

CSV_COLUMNS = (
    "t", "mass", "Ent", "Ent_np", "W_np", "dW_np_dt_lhs", "dW_np_dt_rhs",
    "Ent_cnp", "W_cnp", "I_cnp", "H_c", "L_c", "K", "P", "curl_max", "defect",
)


def write_diagnostics_csv(path, records) -> None:
    """Fixed-column CSV; derivative columns are centered differences.

    Endpoint rows get nan in the differenced columns.  Floats are written
    with shortest round-trip repr so identical runs give identical bytes.
    """
    n = len(records)
    ts = _col(records, "t")
    nanpad = lambda arr: np.concatenate([[math.nan], arr, [math.nan]])
    if n >= 3:
        dt = _dt_of(records)
        g = ts * _col(records, "ent_np")
        w_np = nanpad(_ddt(g, dt))
        dw_lhs = nanpad(_d2dt(g, dt))
        e = _col(records, "ent_cnp")
        w_cnp = nanpad(e[1:-1] + _col(records, "eta")[1:-1] * _ddt(e, dt))
    else:
        w_np = dw_lhs = w_cnp = np.full(n, math.nan)
    dw_rhs = ts * _col(records, "defect_geo")

    rows = []
    for i, r in enumerate(records):
        rows.append((
            r.t, r.mass, r.ent, r.ent_np, w_np[i], dw_lhs[i], dw_rhs[i],
            r.ent_cnp, w_cnp[i], r.i_cnp, r.h_c, r.l_c, r.kin, r.pot,
            r.curl_max, r.defect_alpha,
        ))
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")

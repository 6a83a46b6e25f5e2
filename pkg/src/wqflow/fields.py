"""Flat-domain grids, finite-difference calculus and anisotropy tensor algebra.

Everything downstream (closed-form oracles, flow integrators, entropy
diagnostics) is built on the uniform tensor-product grids and second-order
central stencils defined here.  Two topologies are supported:

- periodic: a flat torus, indices wrap, no boundary terms.  Discrete
  integration by parts holds to round-off, which several entropy identities
  rely on.
- box: a truncated piece of R^n with cell-centered nodes and one-sided
  second-order stencils at the edges.  Used for the rapidly decaying
  self-similar solutions; the truncation tail is monitored, never assumed.

Scalar fields are numpy arrays of the grid shape, vector fields carry a
leading component axis (n, *shape), rank-2 tensor fields two leading axes
(n, n, *shape).

The p-Laplacian and its linearization are degenerate (p > 2) or singular
(p < 2) where the gradient vanishes, so every |grad|^(p-2) factor is
evaluated as (|grad|^2 + eps)^((p-2)/2) with a single regularization eps
shared by fluxes and diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Grid",
    "ModelParams",
    "gradient",
    "divergence",
    "jacobian",
    "hessian",
    "speed2",
    "regularized_speed",
    "p_laplacian",
    "anisotropy",
    "a_norm2",
    "a_inner",
    "tr_a",
    "linearized_p_laplacian",
    "quadrature",
    "curl2d",
    "write_field",
    "read_field",
]


@dataclass(frozen=True)
class Grid:
    """Uniform tensor-product grid on a flat 1D or 2D domain.

    Spacing is h = (hi - lo) / N per axis.  Periodic grids place nodes at
    lo + i*h (index N is identified with 0); box grids are cell-centered at
    lo + (i + 1/2)*h, so a symmetric box with even N has no node at the
    origin, where the self-similar profiles have |x|^q kinks.
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    shape: tuple[int, ...]
    periodic: bool = True

    def __post_init__(self):
        if not 1 <= len(self.shape) <= 2:
            raise ValueError(f"only 1D and 2D grids are supported, got shape {self.shape}")
        if not (len(self.lo) == len(self.hi) == len(self.shape)):
            raise ValueError("lo, hi and shape must have equal length")
        if any(N < 8 for N in self.shape):
            raise ValueError(f"need at least 8 points per axis, got {self.shape}")
        if any(b <= a for a, b in zip(self.lo, self.hi)):
            raise ValueError("each axis needs hi > lo")

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((b - a) / N for a, b, N in zip(self.lo, self.hi, self.shape))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.h)

    def axis(self, i: int) -> np.ndarray:
        """Node coordinates along axis i."""
        a, N, h = self.lo[i], self.shape[i], self.h[i]
        offset = 0.0 if self.periodic else 0.5
        return a + (np.arange(N) + offset) * h

    def meshgrid(self) -> tuple[np.ndarray, ...]:
        return np.meshgrid(*(self.axis(i) for i in range(self.ndim)), indexing="ij")

    def radius2(self) -> np.ndarray:
        """|x|^2 at every node."""
        xs = self.meshgrid()
        return sum(x * x for x in xs)

    def n_nodes(self) -> int:
        return math.prod(self.shape)


@dataclass(frozen=True)
class ModelParams:
    """Exponent pair (p, q), Langevin coupling c and regularization eps.

    q = p/(p-1) is derived, never stored, so 1/p + 1/q = 1 holds by
    construction.  c = inf selects the geodesic regime, c = 0 the p-heat
    regime; both are handled as explicit modes, not numerical limits.
    """

    p: float
    c: float = math.inf
    eps: float = 1e-8
    n: int = 1

    def __post_init__(self):
        if self.p <= 1.0:
            raise ValueError(f"need p > 1, got p={self.p}")
        if self.eps <= 0.0:
            raise ValueError(f"need eps > 0, got eps={self.eps}")
        if self.c < 0.0:
            raise ValueError(f"need c >= 0, got c={self.c}")
        if self.n not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got n={self.n}")

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def cp(self) -> float:
        """c^p; inf for the geodesic mode, 0 for the p-heat mode."""
        if math.isinf(self.c):
            return math.inf
        return self.c ** self.p


# ---------------------------------------------------------------------------
# first and second derivative stencils
# ---------------------------------------------------------------------------

def _d1(grid: Grid, f: np.ndarray, axis: int) -> np.ndarray:
    """Second-order first derivative along one axis."""
    h = grid.h[axis]
    if grid.periodic:
        return (np.roll(f, -1, axis) - np.roll(f, 1, axis)) / (2.0 * h)
    out = np.empty_like(f)
    sl = [slice(None)] * f.ndim

    def at(idx):
        s = list(sl)
        s[axis] = idx
        return tuple(s)

    out[at(slice(1, -1))] = (f[at(slice(2, None))] - f[at(slice(0, -2))]) / (2.0 * h)
    out[at(0)] = (-3.0 * f[at(0)] + 4.0 * f[at(1)] - f[at(2)]) / (2.0 * h)
    out[at(-1)] = (3.0 * f[at(-1)] - 4.0 * f[at(-2)] + f[at(-3)]) / (2.0 * h)
    return out


def _d2(grid: Grid, f: np.ndarray, axis: int) -> np.ndarray:
    """Second-order second derivative along one axis."""
    h = grid.h[axis]
    h2 = h * h
    if grid.periodic:
        return (np.roll(f, -1, axis) - 2.0 * f + np.roll(f, 1, axis)) / h2
    out = np.empty_like(f)
    sl = [slice(None)] * f.ndim

    def at(idx):
        s = list(sl)
        s[axis] = idx
        return tuple(s)

    out[at(slice(1, -1))] = (f[at(slice(2, None))] - 2.0 * f[at(slice(1, -1))] + f[at(slice(0, -2))]) / h2
    out[at(0)] = (2.0 * f[at(0)] - 5.0 * f[at(1)] + 4.0 * f[at(2)] - f[at(3)]) / h2
    out[at(-1)] = (2.0 * f[at(-1)] - 5.0 * f[at(-2)] + 4.0 * f[at(-3)] - f[at(-4)]) / h2
    return out


def gradient(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Gradient of a scalar field, shape (n, *grid.shape)."""
    return np.stack([_d1(grid, f, ax) for ax in range(grid.ndim)])


def divergence(grid: Grid, V: np.ndarray) -> np.ndarray:
    """Divergence of a vector field.

    Uses the same central stencil as `gradient`, so on periodic grids the
    discrete adjointness  sum f div(V) = -sum <grad f, V>  holds to
    round-off (the stencil matrix is antisymmetric).
    """
    return sum(_d1(grid, V[ax], ax) for ax in range(grid.ndim))


def jacobian(grid: Grid, V: np.ndarray) -> np.ndarray:
    """J[i, j] = d_j V_i for a vector field, shape (n, n, *grid.shape)."""
    n = grid.ndim
    return np.stack([np.stack([_d1(grid, V[i], j) for j in range(n)]) for i in range(n)])


def hessian(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Hessian of a scalar field, shape (n, n, *grid.shape).

    Diagonal entries use the compact 3-point second-derivative stencil;
    off-diagonals nest the first-derivative stencils, which act on distinct
    axes and therefore commute, making the discrete Hessian exactly
    symmetric.  The rigidity-defect diagnostics rely on that symmetry.
    """
    n = grid.ndim
    H = np.empty((n, n) + grid.shape)
    for i in range(n):
        H[i, i] = _d2(grid, f, i)
    for i in range(n):
        for j in range(i + 1, n):
            Hij = _d1(grid, _d1(grid, f, j), i)
            H[i, j] = Hij
            H[j, i] = Hij
    return H


def curl2d(grid: Grid, V: np.ndarray) -> np.ndarray:
    """Scalar curl d_1 V_2 - d_2 V_1 of a 2D vector field.

    The 2-form d(u^*) of a velocity field reduces to this scalar in 2D; it
    vanishes identically for discrete gradients on periodic grids because
    the two stencils commute.
    """
    if grid.ndim != 2:
        raise ValueError(f"curl2d needs a 2D grid, got ndim={grid.ndim}")
    return _d1(grid, V[1], 0) - _d1(grid, V[0], 1)


def quadrature(grid: Grid, f: np.ndarray, weight: np.ndarray | None = None) -> float:
    """Midpoint-rule integral: node sum times h^n.

    Exact for periodic trigonometric polynomials below Nyquist; on boxes it
    is the midpoint rule, superalgebraically accurate for integrands that
    decay below round-off before the edge.
    """
    if weight is not None:
        f = f * weight
    return float(f.sum()) * grid.cell_volume


# ---------------------------------------------------------------------------
# regularized p-Laplacian machinery
# ---------------------------------------------------------------------------

def speed2(V: np.ndarray, params: ModelParams) -> np.ndarray:
    """Regularized squared speed |V|^2 + eps."""
    return sum(V[i] * V[i] for i in range(V.shape[0])) + params.eps


def regularized_speed(V: np.ndarray, params: ModelParams) -> np.ndarray:
    """(|V|^2 + eps)^((p-2)/2), the p-flux weight. Identically 1 at p = 2."""
    if params.p == 2.0:
        return np.ones(V.shape[1:])
    return speed2(V, params) ** ((params.p - 2.0) / 2.0)


def p_laplacian(grid: Grid, phi: np.ndarray, params: ModelParams) -> np.ndarray:
    """Flux-form p-Laplacian div(|grad phi|^(p-2) grad phi)."""
    g = gradient(grid, phi)
    return divergence(grid, regularized_speed(g, params) * g)


def anisotropy(V: np.ndarray, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Anisotropy tensor A = I + (p-2) V (x) V / (|V|^2 + eps) and its inverse.

    The inverse comes from the exact rank-one (Sherman-Morrison) formula
        a = I - (p-2) V (x) V / (eps + (p-1)|V|^2),
    so A.a = I to round-off.  A is positive definite for p > 1 with smallest
    eigenvalue min(1, p-1) up to O(eps).
    """
    if params.p <= 1.0:
        raise ValueError("anisotropy tensor is not positive definite for p <= 1")
    n = V.shape[0]
    eye = np.eye(n).reshape((n, n) + (1,) * (V.ndim - 1))
    if params.p == 2.0:
        A = np.broadcast_to(eye, (n, n) + V.shape[1:]).copy()
        return A, A.copy()
    v2 = sum(V[i] * V[i] for i in range(n))
    outer = V[:, None] * V[None, :]
    A = eye + (params.p - 2.0) * outer / (v2 + params.eps)
    a = eye - (params.p - 2.0) * outer / (params.eps + (params.p - 1.0) * v2)
    return A, a


def a_inner(X: np.ndarray, Y: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Pointwise A-weighted inner product sum_ij A_ij X_i Y_j."""
    return np.einsum("ij...,i...,j...->...", A, X, Y)


def a_norm2(T: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Pointwise squared A-norm of a rank-2 tensor, sum A_ik A_jl T_ij T_kl."""
    return np.einsum("ik...,jl...,ij...,kl...->...", A, A, T, T)


def tr_a(T: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Pointwise A-trace sum_ij A_ij T_ij."""
    return np.einsum("ij...,ij...->...", A, T)


def linearized_p_laplacian(
    grid: Grid, V_base: np.ndarray, psi: np.ndarray, params: ModelParams
) -> np.ndarray:
    """Linearization of the p-Laplacian at a base gradient field V_base.

    Computes div(w^((p-2)/2) A(grad psi)) with w = |V_base|^2 + eps and A
    the anisotropy tensor of V_base.  Reduces to the ordinary Laplacian at
    p = 2.  Enters the p-Bochner identity applied to |grad phi|^p.
    """
    A, _ = anisotropy(V_base, params)
    w = regularized_speed(V_base, params)
    flux = w * np.einsum("ij...,j...->i...", A, gradient(grid, psi))
    return divergence(grid, flux)


# ---------------------------------------------------------------------------
# field snapshot files
# ---------------------------------------------------------------------------

_FIELD_MAGIC = "wqflow-field v1"


def write_field(path, grid: Grid, f: np.ndarray) -> None:
    """Write one field: text header, then row-major little-endian float64."""
    topo = "p" if grid.periodic else "b"
    header = (
        f"{_FIELD_MAGIC}"
        f" n={grid.ndim}"
        f" N={','.join(str(N) for N in grid.shape)}"
        f" lo={','.join(repr(x) for x in grid.lo)}"
        f" hi={','.join(repr(x) for x in grid.hi)}"
        f" topology={topo}\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(f, dtype="<f8").tobytes())


def read_field(path) -> tuple[Grid, np.ndarray]:
    """Read a field snapshot written by `write_field`."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").rstrip("\n")
        raw = fh.read()
    if not header.startswith(_FIELD_MAGIC):
        raise ValueError(f"not a wqflow field file: {path}")
    kv = dict(tok.split("=", 1) for tok in header[len(_FIELD_MAGIC):].split())
    ndim = int(kv["n"])
    shape = tuple(int(s) for s in kv["N"].split(","))
    lo = tuple(float(s) for s in kv["lo"].split(","))
    hi = tuple(float(s) for s in kv["hi"].split(","))
    if len(shape) != ndim:
        raise ValueError(f"header dimension mismatch in {path}")
    grid = Grid(lo=lo, hi=hi, shape=shape, periodic=kv["topology"] == "p")
    data = np.frombuffer(raw, dtype="<f8")
    n_nodes = grid.n_nodes()
    if data.size % n_nodes != 0:
        raise ValueError(f"payload size {data.size} not a multiple of node count {n_nodes}")
    ncomp = data.size // n_nodes
    if ncomp == 1:
        return grid, data.reshape(shape).copy()
    return grid, data.reshape((ncomp,) + shape).copy()

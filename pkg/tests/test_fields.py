"""Grid, stencil, tensor-algebra and quadrature tests.

Analytic fields serve as oracles throughout: trigonometric polynomials on
the torus (exact derivatives known), polynomials on the box.  Convergence
checks assert the error ratio under N -> 2N, not absolute constants.
"""

import math

import numpy as np
import pytest

from wqflow.fields import (
    Grid,
    ModelParams,
    a_inner,
    a_norm2,
    anisotropy,
    curl2d,
    divergence,
    gradient,
    hessian,
    jacobian,
    linearized_p_laplacian,
    p_laplacian,
    quadrature,
    read_field,
    regularized_speed,
    tr_a,
    write_field,
)
from wqflow.flows import splitmix64_stream, trig_perturbation


def torus(N, n=1):
    return Grid((0.0,) * n, (2.0 * math.pi,) * n, (N,) * n)


def box(N, L=1.0, n=1):
    return Grid((-L,) * n, (L,) * n, (N,) * n, periodic=False)


class TestGrid:
    def test_spacing_and_nodes(self):
        g = torus(64)
        assert g.h == (2.0 * math.pi / 64,)
        assert g.axis(0)[0] == 0.0
        b = box(64, 2.0)
        assert b.h == (4.0 / 64,)
        # cell-centered: no node at the origin for even N
        assert np.abs(b.axis(0)).min() == pytest.approx(b.h[0] / 2)

    def test_invariants(self):
        with pytest.raises(ValueError):
            Grid((0.0,), (1.0,), (4,))
        with pytest.raises(ValueError):
            Grid((0.0,), (-1.0,), (16,))
        with pytest.raises(ValueError):
            Grid((0.0, 0.0), (1.0,), (16, 16))

    def test_params_conjugate_exponent(self):
        par = ModelParams(p=3.0, n=1)
        assert par.q == 1.5
        assert par.p / (par.p - 1.0) == par.q
        with pytest.raises(ValueError):
            ModelParams(p=1.0)
        with pytest.raises(ValueError):
            ModelParams(p=2.0, eps=0.0)


class TestGradient:
    def test_constant(self):
        g = torus(32)
        assert np.all(gradient(g, np.full(g.shape, 3.7)) == 0.0)

    def test_sine_order2(self):
        errs = []
        for N in (256, 512):
            g = torus(N)
            x = g.axis(0)
            errs.append(np.abs(gradient(g, np.sin(x))[0] - np.cos(x)).max())
        h = 2.0 * math.pi / 256
        assert errs[0] <= 1.2 * h * h / 6.0
        assert 3.2 <= errs[0] / errs[1] <= 4.8

    def test_linear_on_box(self):
        g = box(64, 2.0)
        x = g.axis(0)
        gr = gradient(g, x)[0]
        assert np.abs(gr - 1.0).max() < 1e-12  # exact for linear, boundary included


class TestDivergence:
    def test_constant(self):
        g = torus(32, n=2)
        V = np.ones((2,) + g.shape)
        assert np.abs(divergence(g, V)).max() == 0.0

    def test_laplacian_of_sine(self):
        errs = []
        for N in (128, 256):
            g = torus(N)
            x = g.axis(0)
            lap = divergence(g, gradient(g, np.sin(x)))
            errs.append(np.abs(lap + np.sin(x)).max())
        assert 3.2 <= errs[0] / errs[1] <= 4.8

    def test_discrete_adjointness(self):
        # sum f div V + sum <grad f, V> = 0 to round-off on periodic grids
        for n in (1, 2):
            g = torus(64, n=n)
            stream = splitmix64_stream(99)
            f = trig_perturbation(g, 1.0, stream).value()
            V = np.stack([trig_perturbation(g, 1.0, stream).value() for _ in range(n)])
            lhs = quadrature(g, f * divergence(g, V))
            rhs = -quadrature(g, sum(gradient(g, f)[i] * V[i] for i in range(n)))
            assert abs(lhs - rhs) <= 1e-12


class TestHessian:
    def test_quadratic_identity(self):
        g = box(64, 2.0, n=2)
        X, Y = g.meshgrid()
        H = hessian(g, (X * X + Y * Y) / 2.0)
        interior = (slice(2, -2),) * 2
        assert np.abs(H[0, 0][interior] - 1.0).max() < 1e-10
        assert np.abs(H[1, 1][interior] - 1.0).max() < 1e-10
        assert np.abs(H[0, 1][interior]).max() < 1e-10

    def test_sine_product_order2(self):
        errs = []
        for N in (64, 128):
            g = torus(N, n=2)
            X, Y = g.meshgrid()
            H = hessian(g, np.sin(X) * np.sin(Y))
            exact = np.stack([
                np.stack([-np.sin(X) * np.sin(Y), np.cos(X) * np.cos(Y)]),
                np.stack([np.cos(X) * np.cos(Y), -np.sin(X) * np.sin(Y)]),
            ])
            errs.append(np.abs(H - exact).max())
        assert 3.2 <= errs[0] / errs[1] <= 4.8

    def test_symmetry_exact(self):
        g = torus(32, n=2)
        stream = splitmix64_stream(5)
        H = hessian(g, trig_perturbation(g, 1.0, stream).value())
        assert np.array_equal(H[0, 1], H[1, 0])

    def test_constant(self):
        g = torus(32, n=2)
        assert np.abs(hessian(g, np.full(g.shape, 2.0))).max() == 0.0


class TestRegularizedSpeed:
    def test_p2_is_one(self):
        par = ModelParams(p=2.0, eps=1e-8, n=2)
        u = np.random.default_rng(0).normal(size=(2, 8, 8))
        assert np.all(regularized_speed(u, par) == 1.0)

    def test_unit_vector_p3(self):
        par = ModelParams(p=3.0, eps=1e-300, n=2)
        u = np.zeros((2, 8, 8))
        u[0] = 1.0
        assert np.abs(regularized_speed(u, par) - 1.0).max() < 1e-12

    def test_numeric_value(self):
        par = ModelParams(p=3.0, eps=1e-8, n=2)
        u = np.zeros((2, 8, 8))
        u[0] = 2.0
        assert regularized_speed(u, par)[0, 0] == pytest.approx(math.sqrt(4.0 + 1e-8), rel=1e-15)


class TestPLaplacian:
    def test_quadratic_p2(self):
        g = box(64, 2.0)
        x = g.axis(0)
        par = ModelParams(p=2.0, eps=1e-8, n=1)
        lap = p_laplacian(g, x * x / 2.0, par)
        assert np.abs(lap[2:-2] - 1.0).max() < 1e-9

    def test_quadratic_general_p(self):
        # div(|x|^(p-2) x) = (n + p - 2) |x|^(p-2) for phi = |x|^2/2
        g = box(256, 2.0)
        x = g.axis(0)
        par = ModelParams(p=3.0, eps=1e-12, n=1)
        lap = p_laplacian(g, x * x / 2.0, par)
        exact = (1.0 + 3.0 - 2.0) * np.abs(x)
        mask = np.abs(x) > 0.25
        assert np.abs((lap - exact)[2:-2][mask[2:-2]]).max() < 5e-3

    def test_constant(self):
        g = torus(32)
        par = ModelParams(p=1.5, eps=1e-8, n=1)
        assert np.abs(p_laplacian(g, np.full(g.shape, 1.0), par)).max() < 1e-6

    def test_trace_identity(self):
        # tr_A(|grad phi|^(p-2) Hess phi) = p-Laplacian, O(h^2) + O(eps);
        # like every p != 2 identity, pointwise away from gradient zeros
        # (the flux is only C^(1,1) there, so the max is taken on
        # |grad phi| >= 1/2)
        errs = []
        for N in (128, 256):
            g = torus(N)
            x = g.axis(0)
            phi = np.sin(x)
            par = ModelParams(p=3.0, eps=1e-12, n=1)
            grad_phi = gradient(g, phi)
            A, _ = anisotropy(grad_phi, par)
            lhs = tr_a(regularized_speed(grad_phi, par) * hessian(g, phi), A)
            mask = np.abs(np.cos(x)) >= 0.5
            errs.append(np.abs((lhs - p_laplacian(g, phi, par))[mask]).max())
        assert 3.2 <= errs[0] / errs[1] <= 4.8


class TestAnisotropy:
    def test_p2_identity(self):
        par = ModelParams(p=2.0, eps=1e-8, n=2)
        u = np.random.default_rng(1).normal(size=(2, 6, 6))
        A, a = anisotropy(u, par)
        eye = np.eye(2).reshape(2, 2, 1, 1)
        assert np.abs(A - eye).max() == 0.0
        assert np.abs(a - eye).max() == 0.0

    def test_rank_one_example(self):
        par = ModelParams(p=3.0, eps=1e-300, n=2)
        u = np.zeros((2, 4, 4))
        u[0] = 1.0
        A, a = anisotropy(u, par)
        assert A[0, 0][0, 0] == pytest.approx(2.0, abs=1e-12)
        assert A[1, 1][0, 0] == pytest.approx(1.0, abs=1e-15)
        assert a[0, 0][0, 0] == pytest.approx(0.5, abs=1e-12)
        assert a[1, 1][0, 0] == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
    def test_inverse_and_positivity(self, p):
        par = ModelParams(p=p, eps=1e-8, n=2)
        u = np.random.default_rng(2).normal(size=(2, 16, 16))
        A, a = anisotropy(u, par)
        prod = np.einsum("ij...,jk...->ik...", A, a)
        eye = np.eye(2).reshape(2, 2, 1, 1)
        assert np.abs(prod - eye).max() <= 1e-10
        # eigenvalues of A: 1 and 1 + (p-2)|u|^2/(|u|^2+eps)
        evs = np.linalg.eigvalsh(np.moveaxis(A, (0, 1), (-2, -1)))
        assert evs.min() >= min(1.0, p - 1.0) - 1e-6


class TestTensorContractions:
    def test_identity_weight(self):
        T = np.random.default_rng(3).normal(size=(2, 2, 5, 5))
        A = np.broadcast_to(np.eye(2).reshape(2, 2, 1, 1), T.shape).copy()
        frob = (T * T).sum(axis=(0, 1))
        assert np.abs(a_norm2(T, A) - frob).max() < 1e-12
        X = np.random.default_rng(4).normal(size=(2, 5, 5))
        Y = np.random.default_rng(5).normal(size=(2, 5, 5))
        assert np.abs(a_inner(X, Y, A) - (X * Y).sum(axis=0)).max() < 1e-12

    def test_diagonal_weight(self):
        A = np.zeros((2, 2, 1))
        A[0, 0], A[1, 1] = 2.0, 1.0
        T = np.broadcast_to(np.eye(2).reshape(2, 2, 1), (2, 2, 1)).copy()
        assert a_norm2(T, A)[0] == pytest.approx(5.0)
        X = np.zeros((2, 1))
        X[0] = 1.0
        assert a_inner(X, X, A)[0] == pytest.approx(2.0)


class TestLinearizedPLaplacian:
    def test_p2_is_laplacian(self):
        g = torus(128)
        x = g.axis(0)
        par = ModelParams(p=2.0, eps=1e-8, n=1)
        base = gradient(g, np.cos(x))
        lhs = linearized_p_laplacian(g, base, np.sin(x), par)
        rhs = divergence(g, gradient(g, np.sin(x)))
        assert np.abs(lhs - rhs).max() < 1e-12

    def test_constant_is_zero(self):
        g = torus(32)
        par = ModelParams(p=3.0, eps=1e-8, n=1)
        base = gradient(g, np.sin(g.axis(0)))
        assert np.abs(linearized_p_laplacian(g, base, np.full(g.shape, 4.0), par)).max() == 0.0


class TestQuadrature:
    def test_unit(self):
        g = Grid((0.0,), (1.0,), (37,))
        assert quadrature(g, np.ones(g.shape)) == pytest.approx(1.0, abs=1e-14)

    def test_sin_squared(self):
        g = torus(64)
        assert abs(quadrature(g, np.sin(g.axis(0)) ** 2) - math.pi) <= 1e-12

    def test_weight(self):
        g = torus(64)
        x = g.axis(0)
        assert quadrature(g, np.sin(x) ** 2, weight=2.0 * np.ones_like(x)) == pytest.approx(2 * math.pi)


class TestCurl2d:
    def test_gradient_is_curl_free(self):
        g = torus(64, n=2)
        stream = splitmix64_stream(17)
        phi = trig_perturbation(g, 1.0, stream).value()
        h2 = min(g.h) ** 2
        assert np.abs(curl2d(g, gradient(g, phi))).max() <= h2  # exactly 0 here

    def test_rigid_rotation(self):
        g = box(32, 1.0, n=2)
        X, Y = g.meshgrid()
        u = np.stack([-Y, X])
        c = curl2d(g, u)
        assert np.abs(c - 2.0).max() < 1e-11

    def test_constant_and_dim_guard(self):
        g = torus(32, n=2)
        assert np.abs(curl2d(g, np.ones((2,) + g.shape))).max() == 0.0
        with pytest.raises(ValueError):
            curl2d(torus(32), np.ones((1, 32)))


class TestJacobian:
    def test_matches_hessian_for_gradients(self):
        g = torus(48, n=2)
        stream = splitmix64_stream(23)
        phi = trig_perturbation(g, 1.0, stream).value()
        J = jacobian(g, gradient(g, phi))
        H = hessian(g, phi)
        # off-diagonals are the same commuting stencils (up to fp order),
        # diagonals differ only by stencil width
        assert np.abs(J[0, 1] - H[0, 1]).max() < 1e-14
        assert np.abs(J[0, 0] - H[0, 0]).max() < 0.05


class TestSnapshotIO:
    def test_roundtrip_scalar(self, tmp_path):
        g = box(32, 3.0, n=2)
        f = np.sin(g.meshgrid()[0])
        path = tmp_path / "field.bin"
        write_field(path, g, f)
        g2, f2 = read_field(path)
        assert g2 == g
        assert np.array_equal(f, f2)

    def test_roundtrip_vector(self, tmp_path):
        g = torus(16, n=2)
        X, Y = g.meshgrid()
        u = np.stack([np.cos(X), np.sin(Y)])
        path = tmp_path / "u.bin"
        write_field(path, g, u)
        g2, u2 = read_field(path)
        assert g2 == g
        assert np.array_equal(u, u2)

    def test_single_component_reads_as_scalar(self, tmp_path):
        # the header carries no component count, so a one-component 1D
        # payload comes back in scalar layout; callers reshape
        g = torus(16)
        u = np.stack([np.cos(g.axis(0))])
        path = tmp_path / "u1.bin"
        write_field(path, g, u)
        _, u2 = read_field(path)
        assert u2.shape == (16,)
        assert np.array_equal(u[0], u2)

    def test_header(self, tmp_path):
        g = torus(16, n=2)
        path = tmp_path / "x.bin"
        write_field(path, g, np.zeros(g.shape))
        header = open(path, "rb").readline().decode()
        assert header.startswith("wqflow-field v1 n=2 N=16,16")
        assert "topology=p" in header

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"not a field\n123")
        with pytest.raises(ValueError):
            read_field(path)

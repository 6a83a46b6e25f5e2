"""Entropy functionals, identity-check plumbing, the transport-distance
oracle, and the diagnostics CSV format."""

import math

import numpy as np
import pytest

from wqflow import diagnostics as dg
from wqflow.closedform import special_geodesic
from wqflow.fields import Grid, ModelParams, gradient, quadrature
from wqflow.flows import FlowState, RunConfig, run, splitmix64_stream, trig_perturbation


def torus(N, n=1):
    return Grid((0.0,) * n, (2.0 * math.pi,) * n, (N,) * n)


class TestEntropy:
    def test_uniform(self):
        g = torus(64, n=2)
        V = (2.0 * math.pi) ** 2
        rho = np.full(g.shape, 1.0 / V)
        assert dg.entropy(g, rho) == pytest.approx(-math.log(V), rel=1e-12)

    def test_gaussian_value(self):
        # entropy of the p = 2 self-similar profile at t = 1, n = 1
        g = Grid((-14.0,), (14.0,), (2048,), periodic=False)
        sf = special_geodesic(g, 1, 2.0, 1.0)
        assert dg.entropy(g, sf.rho) == pytest.approx(-0.5 * (1.0 + math.log(4.0 * math.pi)), abs=1e-9)

    def test_tiny_mass_contributes_zero(self):
        g = torus(16)
        rho = np.full(g.shape, 1e-200)
        assert dg.entropy(g, rho) == 0.0

    def test_relative_entropy_vanishes_on_special(self):
        g = Grid((-14.0,), (14.0,), (2048,), periodic=False)
        for p in (2.0, 3.0):
            sf = special_geodesic(g, 1, p, 1.3)
            assert abs(dg.relative_entropy_np(g, sf.rho, 1.3, 1, p)) <= 1e-5


class TestRecord:
    def _state(self, g, seed=13, regime="geodesic"):
        stream = splitmix64_stream(seed)
        rho = np.exp(trig_perturbation(g, 0.3, stream).value())
        rho /= quadrature(g, rho)
        pot = trig_perturbation(g, 0.2, stream)
        return FlowState(1.0, np.log(rho), pot.grad(), pot.value(), regime)

    def test_dual_entropy_dissipation_forms(self):
        # flux form and -int rho Dp phi agree to round-off on periodic grids
        for p in (1.5, 2.0, 3.0):
            g = torus(128)
            par = ModelParams(p=p, c=1.0, eps=1e-8, n=1)
            rec = dg.compute_record(g, self._state(g), par)
            assert abs(rec.dent_flux - rec.dent_div) <= 1e-10

    def test_p2_reductions(self):
        # at p = 2 the anisotropy is the identity: the A-weighted Fisher
        # integral is the plain one and H_c/L_c use the Boltzmann entropy
        g = torus(128)
        par = ModelParams(p=2.0, c=1.0, eps=1e-8, n=1)
        st = self._state(g)
        rec = dg.compute_record(g, st, par)
        rho = np.exp(st.logrho)
        glr = gradient(g, st.logrho)
        fisher_plain = quadrature(g, sum(glr[i] ** 2 for i in range(1)), weight=rho)
        assert rec.fisher_a == pytest.approx(fisher_plain, rel=1e-12)
        assert rec.h_c == pytest.approx(0.5 * rec.kin + rec.ent, rel=1e-12)
        assert rec.l_c == pytest.approx(0.5 * rec.kin - rec.ent, rel=1e-12)

    def test_geodesic_scale_synthesized(self):
        g = torus(64)
        par = ModelParams(p=2.0, c=math.inf, eps=1e-8, n=1)
        rec = dg.compute_record(g, self._state(g), par)
        assert rec.w == 1.0 and rec.alpha == 1.0 and rec.eta == 1.0
        assert math.isnan(rec.h_c)

    def test_defect_zero_on_p2_special(self):
        # quadratic potential: discrete Hessian is exact, defect vanishes
        g = Grid((-12.0,), (12.0,), (512,), periodic=False)
        par = ModelParams(p=2.0, c=math.inf, eps=1e-8, n=1)
        sf = special_geodesic(g, 1, 2.0, 1.0)
        st = FlowState(1.0, np.log(sf.rho), sf.u, sf.phi, "geodesic")
        rec = dg.compute_record(g, st, par)
        assert abs(rec.defect_geo) <= 1e-20


class TestSeriesHelpers:
    def _records(self, n_rec=7):
        g = torus(128)
        par = ModelParams(p=2.0, c=math.inf, eps=1e-8, n=1)
        cfg = RunConfig(grid=g, params=par, regime="geodesic", t0=1.0, T=1.0 + 0.01 * (n_rec - 1),
                        dt=2e-3, diag_every=5, ic="perturbed", seed=4)
        return run(cfg).records

    def test_window_guards(self):
        recs = self._records()
        with pytest.raises(ValueError):
            dg.w_entropy_series(recs[:2])
        with pytest.raises(ValueError):
            dg.wie_check(recs[:4], ModelParams(p=2.0, c=1.0, n=1))
        with pytest.raises(ValueError):
            dg.entropy_dissipation_check(recs[:2], ModelParams(p=2.0, c=1.0, n=1))

    def test_nonuniform_spacing_rejected(self):
        recs = self._records()
        broken = [recs[0], recs[1], recs[3]]
        with pytest.raises(ValueError):
            dg.w_entropy_series(broken)

    def test_finite_c_required(self):
        recs = self._records()
        with pytest.raises(ValueError):
            dg.entropy_dissipation_check(recs, ModelParams(p=2.0, c=math.inf, n=1))


class TestConvexityEdgeCases:
    def test_rigidity_linear_in_t(self):
        # on the self-similar family t*Ent + n t log t is linear in t, so
        # the second difference vanishes up to quadrature curvature
        for p, L, tol in ((2.0, 16.0, 1e-9), (3.0, 18.0, 5e-6)):
            g = Grid((-L,), (L,), (2048,), periodic=False)
            ts = 1.0 + 0.01 * np.arange(21)
            ent = np.array([dg.entropy(g, special_geodesic(g, 1, p, t).rho) for t in ts])
            E = ts * ent + ts * np.log(ts)
            d2 = (E[2:] - 2.0 * E[1:-1] + E[:-2]) / 0.01 ** 2
            assert np.abs(d2).max() <= tol

    def test_stationary_state_gives_n_over_t(self):
        # constant entropy: the second difference reduces to n d2(t log t)/dt2
        g = torus(128)
        par = ModelParams(p=2.0, c=math.inf, eps=1e-8, n=1)
        logrho = np.full(g.shape, -math.log(2.0 * math.pi))
        u = np.zeros((1,) + g.shape)
        phi = np.zeros(g.shape)
        cfg = RunConfig(grid=g, params=par, regime="geodesic", t0=1.0, T=1.2, dt=2e-3,
                        diag_every=10, ic="files", ic_fields=(logrho, u, phi))
        ts, conv = dg.convexity_series(run(cfg).records, 1)
        assert np.abs(conv - 1.0 / ts).max() <= 2e-4


class TestIdentitySmoke2D:
    def test_w_entropy_closes_in_2d(self):
        # the full identity chain on a 2D torus at small N, order 2 in h
        rels = []
        for N in (64, 128):
            g = torus(N, n=2)
            par = ModelParams(p=2.0, c=math.inf, eps=1e-8, n=2)
            cfg = RunConfig(grid=g, params=par, regime="geodesic", t0=1.0, T=1.1,
                            dt=2.5e-3, diag_every=4, ic="perturbed", seed=7,
                            amp_rho=0.5, amp_phi=0.35)
            res = run(cfg)
            _, _, lhs, rhs = dg.w_entropy_series(res.records)
            rels.append(float(np.abs(lhs - rhs).max() / np.abs(rhs).max()))
        assert rels[0] <= 5e-3
        assert rels[1] < rels[0]


class TestPheatEntropyRate:
    def test_dent_matches_flux_with_slaved_potential(self):
        # d/dt Ent by differencing equals -int rho Dp(phi), phi = -log rho - 1
        g = torus(512)
        par = ModelParams(p=3.0, c=0.0, eps=1e-8, n=1)
        cfg = RunConfig(grid=g, params=par, regime="pheat", t0=1.0, T=1.005,
                        sigma=0.3, diag_every=20, ic="perturbed", seed=5)
        recs = run(cfg).records
        ent = np.array([r.ent for r in recs])
        ddiv = np.array([r.dent_div for r in recs])
        dt = recs[1].t - recs[0].t
        dent = (ent[2:] - ent[:-2]) / (2.0 * dt)
        rel = np.abs(dent - ddiv[1:-1]) / np.abs(ddiv[1:-1])
        assert rel.max() <= 1e-3


class TestDistanceOracle:
    def grid(self):
        return Grid((-20.0,), (20.0,), (2000,), periodic=False)

    def test_translation(self):
        g = self.grid()
        x = g.axis(0)
        h = g.h[0]
        rho0 = np.exp(-x * x / 2.0) / math.sqrt(2.0 * math.pi)
        rho1 = np.roll(rho0, 40)
        for q in (1.5, 2.0, 3.0):
            assert dg.wq_distance_1d(g, rho0, rho1, q) == pytest.approx(40 * h, abs=1e-4)

    def test_identical_is_zero(self):
        g = self.grid()
        x = g.axis(0)
        rho = np.exp(-x * x / 2.0) / math.sqrt(2.0 * math.pi)
        assert dg.wq_distance_1d(g, rho, rho, 2.0) == 0.0

    def test_two_boxes(self):
        # unit-mass width-1 boxes centered at 0 and 3: inverse CDFs differ
        # by the constant 3, so W_q = 3 for every q
        g = self.grid()
        x = g.axis(0)
        h = g.h[0]
        rho0 = np.where(np.abs(x) < 0.5, 1.0, 0.0)
        rho0 /= rho0.sum() * h
        rho1 = np.roll(rho0, int(round(3.0 / h)))
        assert dg.wq_distance_1d(g, rho0, rho1, 2.0) == pytest.approx(3.0, abs=1e-9)

    def test_mass_guard(self):
        g = self.grid()
        rho = np.ones(g.shape)
        with pytest.raises(ValueError):
            dg.wq_distance_1d(g, rho, rho, 2.0)

    def test_needs_1d(self):
        g = Grid((0.0, 0.0), (1.0, 1.0), (16, 16))
        with pytest.raises(ValueError):
            dg.wq_distance_1d(g, np.ones(g.shape), np.ones(g.shape), 2.0)


class TestCsv:
    def _records(self):
        g = torus(64)
        par = ModelParams(p=2.0, c=1.0, eps=1e-8, n=1)
        cfg = RunConfig(grid=g, params=par, regime="langevin", t0=1.0, T=1.1,
                        dt=2e-3, diag_every=10, ic="perturbed", seed=21)
        return run(cfg).records

    def test_columns_and_endpoints(self, tmp_path):
        recs = self._records()
        path = tmp_path / "diag.csv"
        dg.write_diagnostics_csv(path, recs)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(dg.CSV_COLUMNS)
        first = lines[1].split(",")
        assert first[dg.CSV_COLUMNS.index("W_np")] == "nan"
        mid = lines[len(lines) // 2].split(",")
        assert mid[dg.CSV_COLUMNS.index("W_np")] != "nan"
        assert len(first) == len(dg.CSV_COLUMNS)

    def test_bit_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        dg.write_diagnostics_csv(a, self._records())
        dg.write_diagnostics_csv(b, self._records())
        assert a.read_bytes() == b.read_bytes()

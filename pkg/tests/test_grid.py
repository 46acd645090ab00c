import math

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from conftest import BALL_CENTER, BALL_H, BALL_PARAMS, BALL_R, half_plane_rho
from pucci_serrin import grid, pucci
from pucci_serrin.errors import ArgumentError, ConvergenceError, DegenerateDomainError, DomainError
from pucci_serrin.geometry import SpaceForm
from pucci_serrin.grid import BOUNDARY, EXTERIOR, INTERIOR, GridField, SolverConfig
from pucci_serrin.pucci import MINUS, PLUS, PucciParams
from pucci_serrin.radial import AffineSource, RadialProblem, shoot

E2 = SpaceForm.euclidean(2)
H2 = SpaceForm.hyperbolic(2)


def arccosh_distance(x, y):
    return np.arccosh(1 + np.sum((x - y) ** 2, axis=-1) / (2 * x[..., 1] * y[..., 1]))


def quadratic(M, center=(0.0, 0.0)):
    M = np.asarray(M)
    c = np.asarray(center)

    def f(pts):
        d = np.asarray(pts) - c
        return 0.5 * np.einsum("...i,ij,...j->...", d, M, d)
    return f


def field_from(fn, dom):
    X1, X2 = dom.coords()
    return GridField(fn(np.stack([X1, X2], axis=-1)), dom)


def interior_vals(field):
    return field.values[field.domain.interior_mask]


def rand_sym(rng):
    a = rng.standard_normal((2, 2))
    return a + a.T


class TestStencil:
    def test_directions_w1(self):
        assert grid.stencil_directions(1) == [(1, 0), (-1, 1), (0, 1), (1, 1)]

    def test_frames_are_orthogonal(self):
        for W in (1, 2, 3, 4):
            for e, f in grid.stencil_frames(W):
                assert e[0] * f[0] + e[1] * f[1] == 0
                assert tuple(f) in grid.stencil_directions(W) or (-f[0], -f[1]) in grid.stencil_directions(W)

    def test_frame_count_w3(self):
        assert len(grid.stencil_frames(3)) == 8
        assert ((3, 1), (-1, 3)) in grid.stencil_frames(3)

    def test_bad_width(self):
        with pytest.raises(ArgumentError):
            grid.stencil_directions(0)


class TestBuilders:
    def test_single_node(self):
        dom = grid.build_geodesic_ball((0.0, 1.0), 0.01, 1 / 64)
        assert dom.n_interior == 1
        i, j = np.argwhere(dom.interior_mask)[0]
        assert (dom.x1[i], dom.x2[j]) == pytest.approx((0.0, 1.0))

    def test_symmetric_mask(self):
        dom = grid.build_geodesic_ball((0.0, 1.0), 0.5, 1 / 64)
        np.testing.assert_allclose(dom.x1, -dom.x1[::-1], atol=1e-14)
        assert np.array_equal(dom.mask, dom.mask[::-1, :])

    def test_brute_force_count(self):
        dom = grid.build_geodesic_ball(BALL_CENTER, BALL_R, BALL_H)
        c = np.array(BALL_CENTER)
        # independent count on a wider lattice through the centre
        k = np.arange(-80, 81)
        X1, X2 = np.meshgrid(c[0] + k * BALL_H, c[1] + k * BALL_H, indexing="ij")
        pts = np.stack([X1, X2], axis=-1)
        pts = pts[pts[..., 1] > 0]
        assert dom.n_interior == int(np.count_nonzero(arccosh_distance(pts, c) < BALL_R))

    def test_mask_vs_distance(self):
        dom = grid.build_geodesic_ball(BALL_CENTER, BALL_R, BALL_H)
        rho = half_plane_rho(dom)
        X1, X2 = dom.coords()
        ref = arccosh_distance(np.stack([X1, X2], axis=-1), np.array(BALL_CENTER))
        np.testing.assert_allclose(rho, ref, atol=1e-12)
        assert np.array_equal(dom.interior_mask, ref < BALL_R)

    def test_ring_covers_stencil(self):
        dom = grid.build_geodesic_ball(BALL_CENTER, BALL_R, BALL_H)
        inner = np.argwhere(dom.interior_mask)
        for p, q in grid.stencil_directions(dom.width):
            for s in (1, -1):
                ends = inner + s * np.array([p, q])
                assert np.all(ends >= 0) and np.all(ends < dom.mask.shape)
                assert not np.any(dom.mask[ends[:, 0], ends[:, 1]] == EXTERIOR)

    def test_boundary_nodes(self):
        dom = grid.build_geodesic_ball(BALL_CENTER, 0.2, 1 / 32)
        nodes = dom.boundary_nodes
        assert len(nodes) == int(np.count_nonzero(dom.mask == BOUNDARY))
        assert all(v == 0.0 for _, v in nodes)

    def test_touches_chart_boundary(self):
        with pytest.raises(DomainError):
            grid.build_geodesic_ball((0.0, 0.1), 30.0, 1 / 16)

    def test_sphere_chart(self):
        with pytest.raises(DomainError):
            grid.build_geodesic_ball((0.0, 0.0), 0.5, 1 / 16, chart=SpaceForm.sphere(2))

    def test_three_dimensional_chart(self):
        with pytest.raises(ArgumentError):
            grid.build_geodesic_ball((0.0, 1.0), 0.5, 1 / 16, chart=SpaceForm.hyperbolic(3))

    @pytest.mark.parametrize("h", [0.0, -0.1, math.nan])
    def test_bad_h(self, h):
        with pytest.raises((ArgumentError, DomainError)):
            grid.build_geodesic_ball((0.0, 1.0), 0.5, h)

    def test_ellipse_shape(self):
        dom = grid.build_ellipse((0.0, 1.0), 0.5, 0.25, 1 / 32)
        X1, X2 = dom.coords()
        ref = ((X1 / 0.5) ** 2 + ((X2 - 1) / 0.25) ** 2) < 1
        assert np.array_equal(dom.interior_mask, ref)


class TestResidual:
    @pytest.fixture(scope="class")
    @staticmethod
    def disc():
        return grid.build_geodesic_ball((0.0, 0.0), 0.5, 1 / 32, chart=E2)

    @pytest.mark.parametrize("W", [1, 2, 3])
    def test_quadratic_trace(self, disc, W):
        rng = np.random.default_rng(W)
        M = rand_sym(rng)
        q = quadratic(M)
        r = grid.discrete_pucci_residual(field_from(q, disc), disc, PucciParams(1, 1), MINUS,
                                         SolverConfig(W=W), boundary=q)
        np.testing.assert_allclose(interior_vals(r), np.trace(M), atol=1e-10)

    def test_frame_gap(self, disc):
        rng = np.random.default_rng(10)
        p = PucciParams(1.0, 3.0)
        gaps = {1: [], 2: [], 3: []}
        for _ in range(20):
            M = rand_sym(rng)
            q = quadratic(M)
            exact = pucci.pucci_minus(M, p)
            for W in gaps:
                r = grid.discrete_pucci_residual(field_from(q, disc), disc, p, MINUS,
                                                 SolverConfig(W=W), boundary=q)
                vals = interior_vals(r)
                assert np.ptp(vals) <= 1e-9
                # every frame value is tr(A M) for an admissible A, so it cannot undercut the infimum
                assert vals[0] >= exact - 1e-10
                gaps[W].append(vals[0] - exact)
        g = {W: np.array(v) for W, v in gaps.items()}
        assert np.all(g[2] <= g[1] + 1e-10) and np.all(g[3] <= g[2] + 1e-10)
        assert g[3].max() < g[1].max()

    def test_plus_is_dual(self, disc):
        rng = np.random.default_rng(11)
        M = rand_sym(rng)
        p = PucciParams(1.0, 2.0)
        plus = grid.discrete_pucci_residual(field_from(quadratic(M), disc), disc, p, PLUS,
                                            boundary=quadratic(M))
        minus = grid.discrete_pucci_residual(field_from(quadratic(-M), disc), disc, p, MINUS,
                                             boundary=quadratic(-M))
        np.testing.assert_allclose(interior_vals(plus), -interior_vals(minus), atol=1e-10)

    def test_zero(self):
        dom = grid.build_geodesic_ball(BALL_CENTER, 0.3, 1 / 32)
        r = grid.discrete_pucci_residual(GridField(np.zeros(dom.mask.shape), dom), dom,
                                         PucciParams(1, 2, 0.5), MINUS)
        assert np.all(r.values == 0)

    def test_hyperbolic_quadratic_consistency(self):
        # discrete residual approaches the continuous operator on a smooth function
        # isotropic weights remove the fixed frame gap, leaving the O(h) upwind error
        p = PucciParams(1.3, 1.3, 0.3)
        M = np.array([[1.0, 0.4], [0.4, -0.7]])
        g0 = np.array([0.3, -0.5])
        fn = lambda x: quadratic(M, BALL_CENTER)(x) + (np.asarray(x) - BALL_CENTER) @ g0
        errs = []
        for h in (1 / 32, 1 / 64, 1 / 128):
            dom = grid.build_geodesic_ball(BALL_CENTER, 0.05, h)
            r = grid.discrete_pucci_residual(field_from(fn, dom), dom, p, MINUS, boundary=fn)
            i, j = np.argwhere(dom.interior_mask & np.isclose(dom.coords()[0], 0) &
                               np.isclose(dom.coords()[1], 1.0))[0]
            x = np.array(BALL_CENTER)
            exact = pucci.operator_value(H2, x, g0, M, p, MINUS)
            errs.append(abs(r.values[i, j] - exact))
        assert errs[-1] < errs[0]

    @pytest.mark.parametrize("sign", [MINUS, PLUS])
    def test_monotone(self, sign):
        # raising an off-node value never lowers the residual (-F is nonincreasing in it)
        dom = grid.build_geodesic_ball(BALL_CENTER, 0.2, 1 / 32)
        p = PucciParams(1.0, 2.0, 0.8)
        rng = np.random.default_rng(12)
        inner = np.argwhere(dom.interior_mask)
        for _ in range(40):
            u = GridField(np.where(dom.interior_mask, rng.standard_normal(dom.mask.shape), 0.0), dom)
            base = grid.discrete_pucci_residual(u, dom, p, sign).values
            i, j = inner[rng.integers(len(inner))]
            bumped = u.values.copy()
            bumped[i, j] += rng.uniform(0.01, 1.0)
            new = grid.discrete_pucci_residual(GridField(bumped, dom), dom, p, sign).values
            others = dom.interior_mask.copy()
            others[i, j] = False
            assert np.all(new[others] >= base[others] - 1e-10)


class TestHoward:
    def test_euclidean_quadratic(self):
        dom = grid.build_geodesic_ball((0.0, 0.0), 1.0, 1 / 64, chart=E2)
        u = grid.howard_solve(dom, PucciParams(1, 1), (2.0, 0.0))
        X1, X2 = dom.coords()
        exact = np.where(dom.interior_mask, 0.5 * (1 - X1**2 - X2**2), 0.0)
        assert np.max(np.abs(u.values - exact)) <= (1 / 64) ** 2
        assert np.all(u.values[dom.mask == BOUNDARY] == 0)

    def test_euclidean_quadratic_nearest(self):
        h = 1 / 64
        dom = grid.build_geodesic_ball((0.0, 0.0), 1.0, h, chart=E2)
        u = grid.howard_solve(dom, PucciParams(1, 1), (2.0, 0.0), cfg=SolverConfig(boundary_mode="nearest"))
        X1, X2 = dom.coords()
        exact = np.where(dom.interior_mask, 0.5 * (1 - X1**2 - X2**2), 0.0)
        # ring nodes sit up to ~h outside the circle, so the error is first order
        assert np.max(np.abs(u.values - exact)) <= 2 * h

    def test_radial_match(self, hyper_ball, hyper_radial):
        dom, u = hyper_ball
        rho = half_plane_rho(dom)
        ref = hyper_radial.u(rho[dom.interior_mask])
        err = np.max(np.abs(u.values[dom.interior_mask] - ref)) / np.max(hyper_radial.u_values)
        assert err <= 0.02
        assert u.report.converged and u.report.residual_sup <= 1e-8

    def test_plus_with_gradient_term(self):
        p = PucciParams(1.0, 2.0, 0.5)
        dom = grid.build_geodesic_ball(BALL_CENTER, 0.4, 1 / 64)
        u = grid.howard_solve(dom, p, (1.0, 0.3), PLUS)
        sol = shoot(RadialProblem(H2, 0.4, p, PLUS, AffineSource(1.0, 0.3)))
        ref = sol.u(half_plane_rho(dom)[dom.interior_mask])
        assert np.max(np.abs(u.values[dom.interior_mask] - ref)) / sol.u0 <= 0.02

    def test_zero_source(self):
        dom = grid.build_geodesic_ball(BALL_CENTER, 0.3, 1 / 32)
        u = grid.howard_solve(dom, BALL_PARAMS, (0.0, 0.0))
        assert np.max(np.abs(u.values)) <= 1e-12

    def test_comparison(self):
        dom = grid.build_geodesic_ball(BALL_CENTER, 0.3, 1 / 32)
        rng = np.random.default_rng(13)
        f2 = np.ones(dom.mask.shape)
        f1 = f2 + rng.uniform(0, 1, dom.mask.shape)
        p = PucciParams(1, 2, 0.5)
        u1 = grid.howard_solve(dom, p, (f1, 0.5))
        u2 = grid.howard_solve(dom, p, (f2, 0.5))
        assert np.all(u1.values >= u2.values - 1e-10)

    @pytest.mark.parametrize("mode", ["nearest", "fractional"])
    def test_isotropic_five_point(self, mode):
        lam = 1.3
        dom = grid.build_geodesic_ball(BALL_CENTER, 0.4, 1 / 32)
        u = grid.howard_solve(dom, PucciParams(lam, lam), (1.0, 0.0),
                              cfg=SolverConfig(boundary_mode=mode, tol=1e-11))
        ref = five_point_solve(dom, lam, 1.0, fractional=(mode == "fractional"))
        assert np.max(np.abs(u.values - ref)) <= 1e-8

    def test_symmetry(self, hyper_ball):
        _, u = hyper_ball
        assert np.max(np.abs(u.values - u.values[::-1, :])) <= 1e-10

    def test_nonconvergence(self):
        dom = grid.build_geodesic_ball(BALL_CENTER, 0.3, 1 / 32)
        with pytest.raises(ConvergenceError) as exc:
            grid.howard_solve(dom, PucciParams(1, 3, 1.0), (1.0, 0.0), cfg=SolverConfig(max_policy_iters=1))
        err = exc.value
        assert not err.report.converged and err.report.residual_sup > 1e-8
        assert err.field.values.shape == dom.mask.shape

    def test_negative_slope(self):
        dom = grid.build_geodesic_ball(BALL_CENTER, 0.3, 1 / 32)
        with pytest.raises(ArgumentError):
            grid.howard_solve(dom, BALL_PARAMS, (1.0, -1.0))

    def test_empty_domain(self):
        dom = grid.GridDomain(np.arange(5.0), 1 + np.arange(5.0), 1.0, np.zeros((5, 5), np.int8), H2, width=1)
        with pytest.raises(DegenerateDomainError):
            grid.howard_solve(dom, BALL_PARAMS)

    def test_width_exceeds_ring(self):
        dom = grid.build_geodesic_ball(BALL_CENTER, 0.3, 1 / 32, W=1)
        with pytest.raises(ArgumentError):
            grid.howard_solve(dom, BALL_PARAMS, cfg=SolverConfig(W=3))

    @pytest.mark.parametrize("kw", [dict(W=0), dict(tol=0.0), dict(linear_tol=-1.0),
                                    dict(max_policy_iters=0), dict(boundary_mode="exact")])
    def test_bad_config(self, kw):
        with pytest.raises(ArgumentError):
            SolverConfig(**kw)


def five_point_solve(dom, lam, c, fractional):
    """lam * x2^2 * (five-point Laplacian) u + c = 0, zero on the boundary, assembled by hand."""
    idx = -np.ones(dom.mask.shape, dtype=int)
    nodes = np.argwhere(dom.interior_mask)
    idx[nodes[:, 0], nodes[:, 1]] = np.arange(len(nodes))
    rows, cols, vals = [], [], []
    h = dom.h
    for k, (i, j) in enumerate(nodes):
        x = np.array([dom.x1[i], dom.x2[j]])
        diag = 0.0
        for axis in range(2):
            arms = []
            for s in (1, -1):
                ii, jj = (i + s, j) if axis == 0 else (i, j + s)
                if idx[ii, jj] >= 0:
                    arms.append((h, idx[ii, jj]))
                elif fractional:
                    step = np.zeros(2)
                    step[axis] = s * h
                    t = brentq(lambda a: dom.levelset(x + a * step), 0.0, 1.0, xtol=1e-15)
                    arms.append((t * h, -1))
                else:
                    arms.append((h, -1))
            (ha, na), (hb, nb) = arms
            for hh, nn in arms:
                w = 2.0 / (hh * (ha + hb))
                diag += w
                if nn >= 0:
                    rows.append(k)
                    cols.append(nn)
                    vals.append(-w * lam * x[1] ** 2)
        rows.append(k)
        cols.append(k)
        vals.append(diag * lam * x[1] ** 2)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(len(nodes),) * 2)
    u = spla.spsolve(A.tocsc(), np.full(len(nodes), c))
    out = np.zeros(dom.mask.shape)
    out[nodes[:, 0], nodes[:, 1]] = u
    return out


class TestBoundaryProfile:
    def test_euclidean_quadratic(self):
        dom = grid.build_geodesic_ball((0.0, 0.0), 1.0, 1 / 64, chart=E2)
        u = grid.howard_solve(dom, PucciParams(1, 1), (2.0, 0.0))
        prof = grid.boundary_gradient_profile(u)
        np.testing.assert_allclose(prof.values, 1.0, atol=1e-6)

    def test_hyperbolic_ball(self, hyper_ball, hyper_radial):
        dom, u = hyper_ball
        prof = grid.boundary_gradient_profile(u, dom)
        assert prof.spread <= 0.03
        assert prof.mean == pytest.approx(hyper_radial.c0, rel=0.02)

    def test_ellipse(self, hyper_ellipse):
        _, u = hyper_ellipse
        assert grid.boundary_gradient_profile(u).spread >= 0.20

    def test_points_on_boundary(self, hyper_ball):
        dom, u = hyper_ball
        prof = grid.boundary_gradient_profile(u, dom)
        np.testing.assert_allclose(dom.levelset(prof.points), 0.0, atol=1e-10)
        assert np.all(dom.mask[prof.nodes[:, 0], prof.nodes[:, 1]] == BOUNDARY)

    def test_nearest_mode_on_loaded_domain(self, tmp_path, hyper_ball):
        dom, u = hyper_ball
        dom.to_csv(tmp_path / "d.csv")
        loaded = grid.load_domain(tmp_path / "d.csv")
        v = grid.howard_solve(loaded, BALL_PARAMS, (1.0, 0.0))
        assert v.report.converged
        prof = grid.boundary_gradient_profile(v)
        # staircase boundary: pointwise values are rough, only the mean is meaningful
        assert np.all(prof.values > 0)
        assert prof.mean == pytest.approx(grid.boundary_gradient_profile(u).mean, rel=0.2)

    def test_normals_point_outward(self, hyper_ball):
        dom, _ = hyper_ball
        # the geodesic ball is the chart circle about (0, cosh R) with radius sinh R
        ch, sh = math.cosh(BALL_R), math.sinh(BALL_R)
        ang = np.linspace(0, 2 * np.pi, 13)[:-1]
        pts = np.stack([sh * np.cos(ang), ch + sh * np.sin(ang)], axis=1)
        exact = grid.outward_normals(dom, pts)
        np.testing.assert_allclose(exact, np.stack([np.cos(ang), np.sin(ang)], axis=1), atol=1e-6)
        stripped = grid.GridDomain(dom.x1, dom.x2, dom.h, dom.mask, dom.chart, width=dom.width)
        approx = grid.outward_normals(stripped, pts)
        assert np.all(np.sum(exact * approx, axis=1) > 0.95)


class TestCsv:
    def test_domain_round_trip(self, tmp_path):
        dom = grid.build_geodesic_ball(BALL_CENTER, 0.3, 1 / 32)
        dom.to_csv(tmp_path / "d.csv")
        back = grid.load_domain(tmp_path / "d.csv")
        assert np.array_equal(back.mask, dom.mask)
        np.testing.assert_allclose(back.x1, dom.x1, rtol=1e-8)
        assert back.chart.kind is H2.kind and back.h == pytest.approx(dom.h)

    def test_field_round_trip(self, tmp_path):
        dom = grid.build_geodesic_ball(BALL_CENTER, 0.3, 1 / 32)
        u = grid.howard_solve(dom, BALL_PARAMS, (1.0, 0.0))
        u.to_csv(tmp_path / "u.csv")
        back = grid.load_field(tmp_path / "u.csv", dom)
        np.testing.assert_allclose(back.values, u.values, rtol=1e-8, atol=1e-12)

    def test_header(self, tmp_path):
        dom = grid.build_geodesic_ball(BALL_CENTER, 0.3, 1 / 32)
        dom.to_csv(tmp_path / "d.csv")
        lines = (tmp_path / "d.csv").read_text().splitlines()
        assert lines[0] == "x1,x2,mask" and len(lines) == dom.mask.size + 1
        assert {ln.rsplit(",", 1)[1] for ln in lines[1:]} <= {"0", "1", "2"}

    def test_loaded_ring_width(self, tmp_path):
        for W in (1, 2, 3):
            dom = grid.build_geodesic_ball(BALL_CENTER, 0.3, 1 / 32, W=W)
            dom.to_csv(tmp_path / "d.csv")
            assert grid.load_domain(tmp_path / "d.csv").width == W

    def test_loaded_without_ring(self, tmp_path):
        (tmp_path / "d.csv").write_text("x1,x2,mask\n0,1,1\n0,2,0\n1,1,0\n1,2,0\n")
        with pytest.raises(DomainError):
            grid.load_domain(tmp_path / "d.csv")

    def test_bad_mask_value(self, tmp_path):
        (tmp_path / "d.csv").write_text("x1,x2,mask\n0,1,0\n0,2,7\n")
        with pytest.raises(DomainError):
            grid.load_domain(tmp_path / "d.csv")

    def test_field_shape_mismatch(self):
        dom = grid.build_geodesic_ball(BALL_CENTER, 0.3, 1 / 32)
        with pytest.raises(ArgumentError):
            GridField(np.zeros((2, 2)), dom)

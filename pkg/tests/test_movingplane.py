import math

import numpy as np
import pytest

from conftest import BALL_PARAMS
from pucci_serrin import grid, movingplane as mp
from pucci_serrin.errors import ArgumentError, DegenerateDomainError, ResolutionError
from pucci_serrin.geometry import SpaceForm
from pucci_serrin.grid import GridField
from pucci_serrin.io import parse_key_values, read_csv
from pucci_serrin.movingplane import CORNER, EXHAUSTED, SITUATIONS, TANGENCY, MovingPlaneReport
from pucci_serrin.pucci import PucciParams

E2 = SpaceForm.euclidean(2)


def field(fn, dom):
    X1, X2 = dom.coords()
    return GridField(fn(X1, X2), dom)


@pytest.fixture(scope="module")
def disc():
    return grid.build_geodesic_ball((0.0, 0.0), 1.0, 1 / 128, chart=E2)


@pytest.fixture(scope="module")
def egg():
    def phi(x):
        x = np.asarray(x, dtype=float)
        return x[..., 0] ** 2 + x[..., 1] ** 2 / (0.25 * (1 + 0.6 * x[..., 0])) - 1
    dom = grid.build_levelset_domain(phi, (0.0, 0.0), (1, 1, 0.7, 0.7), 1 / 64, E2, name="egg")
    return dom, grid.howard_solve(dom, PucciParams(1, 1), (1.0, 0.0))


def planted(dom, q, p):
    """u = -x1 |x - q|^(p-1) / 2, so that w_0 = x1 |x - q|^(p-1) for q on the axis x1 = 0."""
    return field(lambda x1, x2: -0.5 * x1 * np.hypot(x1 - q[0], x2 - q[1]) ** (p - 1), dom)


class TestReflection:
    def test_aligned_symmetric(self, hyper_ball):
        dom, u = hyper_ball
        ref = mp.reflected_field(u, dom, 0.0)
        i, j = ref.nodes[:, 0], ref.nodes[:, 1]
        mirror = u.values[dom.nx - 1 - i, j]
        assert np.array_equal(ref.values, mirror)
        assert np.all(ref.contained)

    def test_constant(self, hyper_ball):
        dom, _ = hyper_ball
        ref = mp.reflected_field(GridField(np.full(dom.mask.shape, 3.5), dom), dom, 0.13)
        np.testing.assert_allclose(ref.values[ref.contained], 3.5, rtol=1e-15)

    def test_half_offset_second_order(self):
        fn = lambda x1, x2: np.sin(3 * x1) * np.cos(2 * x2) + x1**3
        errs = []
        for h in (1 / 32, 1 / 64, 1 / 128):
            dom = grid.build_geodesic_ball((0.0, 0.0), 0.8, h, chart=E2)
            s = 0.25 * h + 0.125  # reflections land half-way between columns
            ref = mp.reflected_field(field(fn, dom), dom, s)
            pts = dom.points(ref.nodes)
            exact = fn(2 * s - pts[:, 0], pts[:, 1])
            errs.append(np.max(np.abs(ref.values - exact)[ref.contained]))
        assert errs[0] / errs[1] > 3.0 and errs[1] / errs[2] > 3.0

    def test_flags_reflections_outside(self, egg):
        dom, u = egg
        ref = mp.reflected_field(u, dom, -0.5)
        assert not np.all(ref.contained) and np.any(ref.contained)


class TestW:
    def test_symmetric_zero(self, hyper_ball):
        dom, u = hyper_ball
        assert mp.w_field(u, dom, 0.0).sup() <= 1e-10

    def test_monotone_nonnegative(self, disc):
        u = field(lambda x1, x2: -x1 - 0.3 * x1**3 + np.cos(x2), disc)
        for s in (0.0, 0.2, 0.5):
            w = mp.w_field(u, disc, s)
            assert np.all(w.values[w.contained] >= -1e-12)

    def test_vanishes_on_plane(self, disc):
        u = field(lambda x1, x2: np.exp(x1) * (1 + x2**2), disc)
        s = disc.x1[disc.nx // 2 + 10]
        w = mp.w_field(u, disc, s - 1e-12)
        on_plane = np.isclose(disc.points(w.nodes)[:, 0], s)
        assert on_plane.any()
        assert np.max(np.abs(w.values[on_plane])) <= 1e-10

    def test_antisymmetry(self, disc):
        u = field(lambda x1, x2: np.sin(2 * x1 + x2) + x1 * x2, disc)
        k = disc.nx // 2 + 7
        s = disc.x1[k]
        w = mp.w_field(u, disc, s)
        i, j = w.nodes[:, 0], w.nodes[:, 1]
        ri = 2 * k - i
        ok = w.contained
        w_at_mirror = u.values[i[ok], j[ok]] - u.values[ri[ok], j[ok]]
        np.testing.assert_allclose(w_at_mirror, -w.values[ok], atol=1e-12)


class TestSweep:
    @pytest.mark.parametrize("direction", [1, -1])
    def test_ball(self, hyper_ball, direction):
        dom, u = hyper_ball
        rep = mp.find_critical_s(u, direction=direction)
        assert abs(rep.s_star) <= dom.h
        assert rep.symmetric and rep.w_sup_at_star <= mp.default_tolerance(u, dom)
        assert rep.situation in SITUATIONS
        assert rep.direction == (float(direction), 0.0)

    def test_default_tolerance(self, hyper_ball):
        dom, u = hyper_ball
        assert mp.default_tolerance(u, dom) == max(5e-3 * u.sup(), 10 * dom.h**2)

    def test_tilt(self, hyper_ball):
        dom, u = hyper_ball
        X1, _ = dom.coords()
        tilted = GridField(u.values * (1 + 0.3 * X1), dom)
        rep = mp.find_critical_s(tilted)
        assert not rep.symmetric and rep.w_sup_at_star > rep.tol

    def test_exhausted(self, hyper_ball):
        dom, u = hyper_ball
        rep = mp.find_critical_s(u, s_stop=1.0)
        assert rep.situation == EXHAUSTED and rep.s_star == rep.d

    def test_corner_on_disc(self, disc):
        rep = mp.find_critical_s(field(lambda x1, x2: 1 - x1**2 - x2**2, disc))
        assert rep.situation == CORNER
        assert abs(rep.s_star) <= disc.h
        assert abs(abs(rep.corner_point[1]) - 1.0) <= 1e-6
        assert rep.symmetric

    def test_tangency(self, egg):
        dom, u = egg
        rep = mp.find_critical_s(u, direction=-1)
        # the blunt end sweeps from the left: its reflected cap leaves the domain first
        assert rep.situation == TANGENCY and rep.corner_point is None
        assert rep.s_star < 0.2
        corner = mp.find_critical_s(u, direction=1)
        assert corner.situation == CORNER
        assert not rep.symmetric

    def test_refinement_brackets_event(self, egg):
        dom, u = egg
        rep = mp.find_critical_s(u, direction=-1)
        fu, fdom = mp._flip(u, dom)
        region = mp._Region(fdom)
        s = -rep.s_star
        assert mp._check(region, fdom, s)[0] == TANGENCY
        assert mp._check(region, fdom, s + 2e-6 * dom.h)[0] is None

    def test_loaded_domain(self, tmp_path, hyper_ball):
        dom, _ = hyper_ball
        dom.to_csv(tmp_path / "d.csv")
        loaded = grid.load_domain(tmp_path / "d.csv")
        v = grid.howard_solve(loaded, BALL_PARAMS, (1.0, 0.0))
        for direction in (1, -1):
            rep = mp.find_critical_s(v, direction=direction)
            assert rep.symmetric and abs(rep.s_star) <= loaded.h

    def test_empty(self):
        dom = grid.GridDomain(np.arange(4.0), 1 + np.arange(4.0), 1.0, np.zeros((4, 4), np.int8),
                              SpaceForm.hyperbolic(2), width=1)
        with pytest.raises(DegenerateDomainError):
            mp.find_critical_s(GridField(np.zeros((4, 4)), dom))

    def test_bad_direction(self, hyper_ball):
        _, u = hyper_ball
        with pytest.raises(ArgumentError):
            mp.find_critical_s(u, direction=2)

    def test_bad_situation(self):
        with pytest.raises(ArgumentError):
            MovingPlaneReport((1.0, 0.0), 0.0, "Sideways", 0.0, True, 1.0, 0.0)

    def test_export(self, tmp_path, disc):
        u = planted(disc, (0.0, 1.0), 2.0)
        rep = mp.find_critical_s(u)
        samples = mp.corner_samples(u, disc, rep)
        rep.export(tmp_path / "r.txt", samples, tmp_path / "c.csv")
        kv = parse_key_values((tmp_path / "r.txt").read_text())
        assert kv["situation"] == CORNER and kv["symmetric"] == "false"
        assert float(kv["s_star"]) == pytest.approx(rep.s_star, rel=1e-8, abs=1e-12)
        table = read_csv(tmp_path / "c.csv", ("t", "w"))
        np.testing.assert_allclose(table[:, 0], samples[0], rtol=1e-8)


class TestCornerGrowth:
    @pytest.fixture(scope="class")
    @staticmethod
    def corner(disc):
        rep = mp.find_critical_s(field(lambda x1, x2: 1 - x1**2 - x2**2, disc))
        return rep.corner_point

    @pytest.mark.parametrize("p", [1.2, 2.0, 2.5])
    def test_planted(self, disc, corner, p):
        u = planted(disc, corner, p)
        rep = mp.find_critical_s(u)
        assert rep.situation == CORNER and not rep.symmetric
        fit, _ = mp.corner_growth_check(u, disc, rep, alpha=0.5, beta=2.0)
        assert fit == pytest.approx(p, abs=0.05)

    def test_consistency_flags(self, disc, corner):
        u = planted(disc, corner, 2.5)
        assert mp.corner_growth_check(u, disc, mp.find_critical_s(u), 0.5, 2.0)[1]
        u = planted(disc, corner, 1.2)
        assert not mp.corner_growth_check(u, disc, mp.find_critical_s(u), 0.5, 2.0)[1]

    def test_ball_sentinel(self, hyper_ball):
        dom, u = hyper_ball
        fit, ok = mp.corner_growth_check(u, dom, mp.find_critical_s(u), 0.5, 2.0)
        assert math.isnan(fit) and ok

    def test_needs_corner(self, egg):
        dom, u = egg
        with pytest.raises(ArgumentError):
            mp.corner_growth_check(u, dom, mp.find_critical_s(u, direction=-1), 0.5, 2.0)

    def test_resolution(self, disc, corner):
        u = planted(disc, corner, 2.0)
        rep = mp.find_critical_s(u)
        with pytest.raises(ResolutionError):
            mp.corner_growth_check(u, disc, rep, 0.5, 2.0, t_min=0.05, t_max=0.06)

    def test_alpha_range(self, disc, corner):
        u = planted(disc, corner, 2.0)
        with pytest.raises(ArgumentError):
            mp.corner_growth_check(u, disc, mp.find_critical_s(u), 1.5, 2.0)

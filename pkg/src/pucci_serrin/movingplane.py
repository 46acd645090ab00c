"""Moving-plane sweep on solved grid fields.

The plane ``T_s = {x1 = s}`` starts at ``d = max x1`` over the interior and
moves left in half steps.  ``Sigma_s`` is the interior part right of the
plane and ``w_s(x) = u(R_s x) - u(x)`` compares the solution with its
mirror image.  The sweep stops when either

* the mirrored cap leaves the domain (``Tangency``), or
* the outward normal on ``T_s`` loses its positive ``e1`` component (``Corner``);

if neither happens before the stop position the run is ``Exhausted``.
Reflections ``x1 -> 2s - x1`` are chart isometries in both supported charts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .cone import growth_exponent_fit
from .errors import ArgumentError, DegenerateDomainError, ResolutionError
from .grid import (BOUNDARY, INTERIOR, GridDomain, GridField, _bilinear, outward_normals,
                   signed_distance)
from .io import fmt, write_csv, write_report

TANGENCY, CORNER, EXHAUSTED = "Tangency", "Corner", "Exhausted"
SITUATIONS = (TANGENCY, CORNER, EXHAUSTED)

#: ``nu . e1`` must exceed this for the plane to keep moving.
NORMAL_TIE = 1e-6


@dataclass
class SigmaField:
    """Values on the nodes of ``Sigma_s``; ``contained`` flags reflections inside the domain."""

    s: float
    nodes: np.ndarray
    values: np.ndarray
    contained: np.ndarray

    def sup(self):
        v = self.values[self.contained]
        return float(np.max(np.abs(v))) if v.size else 0.0

    def as_grid(self, shape):
        out = np.full(shape, np.nan)
        out[self.nodes[:, 0], self.nodes[:, 1]] = self.values
        return out


@dataclass
class MovingPlaneReport:
    direction: tuple
    s_star: float
    situation: str
    w_sup_at_star: float
    symmetric: bool
    tol: float
    d: float
    corner_point: Optional[np.ndarray] = None
    steps: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.situation not in SITUATIONS:
            raise ArgumentError(f"unknown situation {self.situation!r}")

    def items(self):
        out = [
            ("direction", tuple(float(v) for v in self.direction)),
            ("d", self.d),
            ("s_star", self.s_star),
            ("situation", self.situation),
            ("w_sup_at_star", self.w_sup_at_star),
            ("tol", self.tol),
            ("symmetric", bool(self.symmetric)),
            ("corner_point", "none" if self.corner_point is None else tuple(self.corner_point)),
            ("steps", self.steps),
        ]
        out += list(self.extra.items())
        return out

    def to_text(self):
        return "".join(f"{k} = {fmt(v)}\n" for k, v in self.items())

    def export(self, path, corner_samples=None, corner_path=None):
        write_report(path, self.items())
        if corner_samples is not None and corner_path is not None:
            t, w = corner_samples
            write_csv(corner_path, ("t", "w"), zip(t, w))


# ----------------------------------------------------------------------------
# geometry helpers


class _Region:
    """Point-in-domain test and boundary crossings, from the level set if present."""

    def __init__(self, dom: GridDomain):
        self.dom = dom
        self.sd = None if dom.levelset is not None else signed_distance(dom)

    def inside(self, pts):
        pts = np.atleast_2d(pts)
        if self.dom.levelset is not None:
            return np.asarray(self.dom.levelset(pts)) < 0.0
        val = _bilinear(self.dom, self.sd, pts)
        return np.nan_to_num(val, nan=-1.0) > 0.0

    def _phi(self, pts):
        if self.dom.levelset is not None:
            return np.asarray(self.dom.levelset(pts), dtype=float)
        return -np.nan_to_num(_bilinear(self.dom, self.sd, pts), nan=-1.0)

    def crossings(self, s):
        """Points of ``T_s`` on the boundary (sign changes along the column, then bisection)."""
        x2 = self.dom.x2
        col = np.stack([np.full(x2.size, s), x2], axis=-1)
        ph = self._phi(col)
        idx = np.nonzero((ph[:-1] < 0.0) != (ph[1:] < 0.0))[0]
        if idx.size == 0:
            return np.zeros((0, 2))
        lo, hi = x2[idx].copy(), x2[idx + 1].copy()
        inside_lo = ph[idx] < 0.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            pin = self._phi(np.stack([np.full(mid.size, s), mid], axis=-1)) < 0.0
            same = pin == inside_lo
            lo = np.where(same, mid, lo)
            hi = np.where(same, hi, mid)
        return np.stack([np.full(lo.size, s), 0.5 * (lo + hi)], axis=-1)


def _interior_nodes(dom):
    nodes = np.argwhere(dom.mask == INTERIOR)
    if nodes.size == 0:
        raise DegenerateDomainError("domain has no interior nodes")
    return nodes


def _sigma(dom, s):
    nodes = _interior_nodes(dom)
    x1 = dom.x1[nodes[:, 0]]
    return nodes[x1 > s]


def reflected_field(u: GridField, dom: GridDomain, s: float, region=None) -> SigmaField:
    """``u(R_s x)`` on ``Sigma_s`` by bilinear interpolation (exact at grid-aligned ``s``)."""
    nodes = _sigma(dom, s)
    pts = dom.points(nodes)
    pts[:, 0] = 2.0 * s - pts[:, 0]
    region = region or _Region(dom)
    vals = _bilinear(dom, u.values, pts)
    contained = region.inside(pts) & np.isfinite(vals)
    return SigmaField(float(s), nodes, np.nan_to_num(vals, nan=0.0), contained)


def w_field(u: GridField, dom: GridDomain, s: float, region=None) -> SigmaField:
    ref = reflected_field(u, dom, s, region)
    own = u.values[ref.nodes[:, 0], ref.nodes[:, 1]]
    return SigmaField(ref.s, ref.nodes, ref.values - own, ref.contained)


def default_tolerance(u: GridField, dom: GridDomain) -> float:
    """``max(5e-3 * sup|u|, 10 h^2)``."""
    return max(5e-3 * u.sup(), 10.0 * dom.h ** 2)


# ----------------------------------------------------------------------------
# sweep


def _flip(u: GridField, dom: GridDomain):
    """Mirror ``x1 -> -x1`` so that the ``-e1`` sweep reuses the ``+e1`` code."""
    phi = dom.levelset
    flipped_phi = None
    if phi is not None:
        def flipped_phi(x):
            x = np.array(x, dtype=float, copy=True)
            x[..., 0] = -x[..., 0]
            return phi(x)
    fd = GridDomain(x1=-dom.x1[::-1].copy(), x2=dom.x2, h=dom.h, mask=dom.mask[::-1].copy(),
                    chart=dom.chart, levelset=flipped_phi, width=dom.width,
                    name=dom.name + "[flipped]")
    return GridField(u.values[::-1].copy(), fd), fd


def _check(region, dom, s):
    """``(situation or None, contact point)`` at position ``s``."""
    nodes = _sigma(dom, s)
    if nodes.size:
        pts = dom.points(nodes)
        pts[:, 0] = 2.0 * s - pts[:, 0]
        out = ~region.inside(pts)
        if np.any(out):
            return TANGENCY, pts[np.argmax(out)]
    z = region.crossings(s)
    if z.size:
        nu = outward_normals(dom, z)
        if np.any(nu[:, 0] <= NORMAL_TIE):
            return CORNER, z[np.argmin(nu[:, 0])]
    return None, None


def find_critical_s(u: GridField, dom: GridDomain = None, tol=None, direction=1,
                    s_start=None, s_stop=None) -> MovingPlaneReport:
    """Sweep ``T_s`` in direction ``+e1`` (``direction=1``) or ``-e1`` (``direction=-1``).

    ``s_start``/``s_stop`` (in the sweep's own orientation, i.e. measured
    along the direction) restrict the window; by default it runs from
    ``d`` to the far side of the domain.
    """
    dom = u.domain if dom is None else dom
    if direction not in (1, -1):
        raise ArgumentError("direction must be +1 or -1 (the e1 axis)")
    _interior_nodes(dom)
    if tol is None:
        tol = default_tolerance(u, dom)
    if not tol > 0:
        raise ArgumentError("tolerance must be positive")
    if direction == -1:
        fu, fdom = _flip(u, dom)
        rep = find_critical_s(fu, fdom, tol, 1,
                              None if s_start is None else -s_start,
                              None if s_stop is None else -s_stop)
        cp = None if rep.corner_point is None else np.array([-rep.corner_point[0],
                                                             rep.corner_point[1]])
        return replace(rep, direction=(-1.0, 0.0), s_star=-rep.s_star, d=-rep.d, corner_point=cp)

    nodes = _interior_nodes(dom)
    xs = dom.x1[nodes[:, 0]]
    d = float(np.max(xs))
    lo_end = float(np.min(xs)) - dom.h if s_stop is None else float(s_stop)
    start = d if s_start is None else min(float(s_start), d)
    region = _Region(dom)

    def finish(s, situation, point, steps):
        w = w_field(u, dom, s, region)
        wsup = w.sup()
        return MovingPlaneReport(
            direction=(1.0, 0.0), s_star=float(s), situation=situation, w_sup_at_star=wsup,
            symmetric=bool(wsup <= tol), tol=float(tol), d=d,
            corner_point=None if situation != CORNER else np.asarray(point, dtype=float),
            steps=steps,
        )

    if lo_end >= start:
        return finish(d, EXHAUSTED, None, 0)

    half = 0.5 * dom.h
    s_valid = None
    k = 0
    while True:
        s = start - k * half
        if s < lo_end:
            return finish(s_valid if s_valid is not None else start, EXHAUSTED, None, k)
        situation, point = _check(region, dom, s)
        if situation is None:
            s_valid = s
            k += 1
            continue
        if s_valid is None:
            return finish(s, situation, point, k)
        # refine between the last valid position and the violation
        bad, good = s, s_valid
        while good - bad > 1e-6 * dom.h:
            mid = 0.5 * (good + bad)
            sit, pt = _check(region, dom, mid)
            if sit is None:
                good = mid
            else:
                bad, situation, point = mid, sit, pt
        return finish(bad, situation, point, k)


# ----------------------------------------------------------------------------
# corner growth


def corner_samples(u: GridField, dom: GridDomain, report: MovingPlaneReport,
                   t_min=None, t_max=None, ratio=math.sqrt(2.0)):
    """``(t, w)`` along ``Q + t e`` with ``e`` the normalised ``e1 - nu(Q)``.

    Only radii whose point lies in ``Sigma_{s*}`` with its reflection inside
    the domain and ``w > 0`` are returned.
    """
    if report.corner_point is None:
        raise ArgumentError("report has no corner point")
    q = np.asarray(report.corner_point, dtype=float)
    sgn = report.direction[0]
    if sgn < 0:
        u, dom = _flip(u, dom)
        q = np.array([-q[0], q[1]])
    s = sgn * report.s_star
    nu = outward_normals(dom, q)[0]
    e = np.array([1.0, 0.0]) - nu
    e /= np.linalg.norm(e)
    region = _Region(dom)
    extent = min(dom.x1[-1] - dom.x1[0], dom.x2[-1] - dom.x2[0])
    t_min = 8.0 * dom.h if t_min is None else t_min
    t_max = 0.25 * extent if t_max is None else t_max
    n = int(math.floor(math.log(t_max / t_min) / math.log(ratio))) + 1 if t_max > t_min else 0
    t = t_min * ratio ** np.arange(max(n, 0))
    pts = q[None, :] + t[:, None] * e[None, :]
    ref = pts.copy()
    ref[:, 0] = 2.0 * s - ref[:, 0]
    ok = (pts[:, 0] > s) & region.inside(pts) & region.inside(ref)
    w = _bilinear(dom, u.values, ref) - _bilinear(dom, u.values, pts)
    ok &= np.isfinite(w) & (w > 0.0)
    return t[ok], w[ok]


def corner_growth_check(u: GridField, dom: GridDomain, report: MovingPlaneReport, alpha, beta,
                        **sampling):
    """``(fit, consistent)`` for the growth of ``w_{s*}`` at the corner point.

    When the report already says ``w = 0`` within tolerance there is nothing
    to measure: ``(nan, True)``.  Otherwise ``consistent`` is
    ``beta - 0.2 <= fit <= 2 + alpha + 0.2``.
    """
    if not 0.0 < alpha <= 1.0:
        raise ArgumentError(f"alpha must lie in (0, 1], got {alpha}")
    if report.symmetric or report.w_sup_at_star <= report.tol:
        return float("nan"), True
    if report.situation != CORNER:
        raise ArgumentError(f"corner growth needs a Corner report, got {report.situation}")
    t, w = corner_samples(u, dom, report, **sampling)
    if t.size < 3:
        raise ResolutionError(f"only {t.size} usable radii at the corner (need 3); refine the grid")
    fit = growth_exponent_fit(t, w)
    return fit, bool(beta - 0.2 <= fit <= 2.0 + alpha + 0.2)


__all__ = [
    "BOUNDARY", "CORNER", "EXHAUSTED", "TANGENCY", "MovingPlaneReport", "SigmaField",
    "corner_growth_check", "corner_samples", "default_tolerance", "find_critical_s",
    "reflected_field", "w_field",
]

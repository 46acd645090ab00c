"""Monotone wide-stencil solver for ``F^sign(hess_g u, grad_g u) + c - b u = 0``
on planar masked grids, Euclidean or half-plane chart, zero Dirichlet data.

Layout
------
Arrays are indexed ``[i, j]`` with ``x1 = x1[i]`` and ``x2 = x2[j]``.  A node
is interior (mask 1) when the domain's level set is negative there; the
exterior nodes reached by some stencil offset from an interior node form
the boundary ring (mask 2).

Stencil
-------
Directions are the primitive integer vectors with max-norm at most ``W``;
frames are orthogonal pairs of them.  Each (direction, side) "arm" ends
either at an interior node or, in ``fractional`` mode, at the point where
the segment leaves the domain (Shortley-Weller arms), where the Dirichlet
value is imposed.  ``nearest`` mode puts the value on the ring node instead.

Every discrete operator is a nonnegative combination of arm differences,
so the scheme is a min (or max) of monotone linear schemes and Howard
iteration applies.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import geometry
from ._grid_kernels import select_policy
from .errors import ArgumentError, ConvergenceError, DegenerateDomainError, DomainError
from .geometry import Kind, SpaceForm
from .io import read_csv, write_csv
from .pucci import MINUS, PucciParams, parse_sign, sign_value
from .radial import AffineSource

log = logging.getLogger(__name__)

EXTERIOR, INTERIOR, BOUNDARY = 0, 1, 2
FRACTIONAL, NEAREST = "fractional", "nearest"

#: Smallest arm fraction kept in fractional mode.
MIN_ARM = 1e-6

#: Refuse to allocate grids larger than this.
MAX_NODES = 5e7


# ----------------------------------------------------------------------------
# stencil geometry


def stencil_directions(W: int):
    """Primitive integer directions with max-norm <= W, one per +/- pair."""
    if int(W) != W or W < 1:
        raise ArgumentError(f"stencil width must be an integer >= 1, got {W}")
    out = []
    for q in range(0, W + 1):
        for p in range(-W, W + 1):
            if q == 0 and p <= 0:
                continue
            if math.gcd(p, q) == 1:
                out.append((p, q))
    return out


def stencil_frames(W: int):
    """Orthogonal pairs ``(e, e_perp)`` with ``e`` in the closed first quadrant."""
    return [((p, q), (-q, p)) for (p, q) in stencil_directions(W) if p > 0 and q >= 0]


@dataclass
class Stencil:
    directions: np.ndarray   # (ndir, 2) int
    frames: np.ndarray       # (nf, 2) direction indices
    nodes: np.ndarray        # (n, 2) interior (i, j)
    neighbor: np.ndarray     # (ndir, 2, n) interior index of the arm end, -1 on a cut
    fraction: np.ndarray     # (ndir, 2, n) arm length in units of |e| h
    cut_points: np.ndarray   # (ndir, 2, n, 2) chart point of each cut (nan otherwise)
    jx: int
    jy: int
    mode: str


# ----------------------------------------------------------------------------
# domains


@dataclass(eq=False)
class GridDomain:
    x1: np.ndarray
    x2: np.ndarray
    h: float
    mask: np.ndarray
    chart: SpaceForm
    levelset: Optional[Callable] = None
    width: int = 3
    name: str = "domain"
    _stencils: dict = field(default_factory=dict, repr=False)

    @property
    def origin(self):
        return np.array([self.x1[0], self.x2[0]])

    @property
    def nx(self):
        return self.x1.size

    @property
    def ny(self):
        return self.x2.size

    @property
    def interior_mask(self):
        return self.mask == INTERIOR

    @property
    def boundary_nodes(self):
        """``[((i, j), 0.0), ...]``: ring nodes with their Dirichlet value."""
        return [((int(i), int(j)), 0.0) for i, j in np.argwhere(self.mask == BOUNDARY)]

    @property
    def n_interior(self):
        return int(np.count_nonzero(self.mask == INTERIOR))

    def coords(self):
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def points(self, idx):
        idx = np.asarray(idx)
        return np.stack([self.x1[idx[..., 0]], self.x2[idx[..., 1]]], axis=-1)

    def conformal(self, x2):
        """``(m^-1, m^-1/2, first-order scale)`` at heights ``x2``."""
        x2 = np.asarray(x2, dtype=float)
        if self.chart.kind is Kind.HYPERBOLIC:
            return x2 * x2, x2.copy(), 1.0 / x2
        return np.ones_like(x2), np.ones_like(x2), np.zeros_like(x2)

    def stencil(self, W=None, mode=FRACTIONAL) -> Stencil:
        W = self.width if W is None else W
        if W > self.width:
            raise ArgumentError(f"stencil width {W} exceeds the domain's ring width {self.width}")
        if mode not in (FRACTIONAL, NEAREST):
            raise ArgumentError(f"boundary mode must be {FRACTIONAL!r} or {NEAREST!r}")
        if mode == FRACTIONAL and self.levelset is None:
            raise ArgumentError("fractional arms need a level set; use nearest mode")
        key = (W, mode)
        if key not in self._stencils:
            self._stencils[key] = _build_stencil(self, W, mode)
        return self._stencils[key]

    def to_csv(self, path):
        X1, X2 = self.coords()
        rows = zip(X1.ravel(), X2.ravel(), self.mask.ravel())
        write_csv(path, ("x1", "x2", "mask"), rows)


def _bisect_cut(phi, a, b, iters=60):
    """Fraction ``t`` in (0, 1] with ``phi(a + t (b - a)) = 0``; ``phi(a) < 0 <= phi(b)``."""
    lo = np.zeros(a.shape[0])
    hi = np.ones(a.shape[0])
    d = b - a
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = phi(a + mid[:, None] * d) < 0.0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return 0.5 * (lo + hi)


def _build_stencil(dom: GridDomain, W: int, mode: str) -> Stencil:
    dirs = stencil_directions(W)
    index = {d: n for n, d in enumerate(dirs)}
    frames = []
    for e, ep in stencil_frames(W):
        frames.append((index[e], index[ep]))
    interior = np.argwhere(dom.mask == INTERIOR)
    n = interior.shape[0]
    node_id = np.full(dom.mask.shape, -1, dtype=np.int64)
    node_id[interior[:, 0], interior[:, 1]] = np.arange(n)

    ndir = len(dirs)
    neighbor = np.empty((ndir, 2, n), dtype=np.int64)
    fraction = np.ones((ndir, 2, n))
    cuts = np.full((ndir, 2, n, 2), np.nan)
    here = dom.points(interior)
    for d, (p, q) in enumerate(dirs):
        for s, sgn in enumerate((1, -1)):
            ti = interior[:, 0] + sgn * p
            tj = interior[:, 1] + sgn * q
            nb = node_id[ti, tj]
            neighbor[d, s] = nb
            cut = nb < 0
            if not np.any(cut):
                continue
            end = np.stack([dom.x1[ti[cut]], dom.x2[tj[cut]]], axis=-1)
            if mode == FRACTIONAL:
                t = np.maximum(_bisect_cut(dom.levelset, here[cut], end), MIN_ARM)
                fraction[d, s, cut] = t
                cuts[d, s, cut] = here[cut] + t[:, None] * (end - here[cut])
            else:
                cuts[d, s, cut] = end
    return Stencil(
        directions=np.array(dirs, dtype=np.int64),
        frames=np.array(frames, dtype=np.int64),
        nodes=interior,
        neighbor=neighbor,
        fraction=fraction,
        cut_points=cuts,
        jx=index[(1, 0)],
        jy=index[(0, 1)],
        mode=mode,
    )


def _offsets(W):
    out = []
    for p, q in stencil_directions(W):
        out += [(p, q), (-p, -q)]
    return out


def _classify(phi_nodes, W):
    """Interior where the level set is negative; ring = exterior nodes one offset away."""
    inside = phi_nodes < 0.0
    ring = np.zeros_like(inside)
    nx, ny = inside.shape
    ii, jj = np.nonzero(inside)
    for p, q in _offsets(W):
        ti, tj = ii + p, jj + q
        if np.any((ti < 0) | (ti >= nx) | (tj < 0) | (tj >= ny)):
            raise DomainError("stencil leaves the grid; enlarge the padding")
        ring[ti, tj] = True
    mask = np.zeros(inside.shape, dtype=np.int8)
    mask[ring & ~inside] = BOUNDARY
    mask[inside] = INTERIOR
    return mask


def _axis(center, below, above, h, pad):
    lo = int(math.ceil(below / h - 1e-9)) + pad
    hi = int(math.ceil(above / h - 1e-9)) + pad
    return center + h * np.arange(-lo, hi + 1)


def _check_h(h):
    if not (h > 0 and math.isfinite(h)):
        raise ArgumentError(f"grid spacing must be positive, got {h}")


def _chart(chart):
    chart = SpaceForm(Kind.HYPERBOLIC, 2) if chart is None else chart
    if isinstance(chart, (str, Kind)):
        chart = SpaceForm(chart, 2)
    if chart.dim != 2:
        raise ArgumentError("grid charts are two-dimensional")
    if chart.kind is Kind.SPHERE:
        raise DomainError("grid solving in the sphere chart is not supported; use the radial solver")
    return chart


def build_levelset_domain(phi, center, extent, h, chart=None, W=3, name="levelset") -> GridDomain:
    """Grid aligned so that ``center`` is a node.

    ``extent = (left, right, below, above)`` bounds the set ``{phi < 0}``
    around ``center``; the grid is padded by ``W + 1`` nodes.
    """
    _check_h(h)
    chart = _chart(chart)
    c = np.asarray(center, dtype=float)
    left, right, below, above = extent
    pad = W + 1
    lowest = c[1] - h * (math.ceil(below / h - 1e-9) + pad)
    if chart.kind is Kind.HYPERBOLIC and lowest < geometry.HYPERBOLIC_MARGIN:
        raise DomainError(
            f"domain touches the chart boundary: lowest grid row x2 = {lowest:.6g} "
            f"(needs >= {geometry.HYPERBOLIC_MARGIN:g})"
        )
    nodes = (math.ceil((left + right) / h) + 2 * pad + 1) * (math.ceil((below + above) / h) + 2 * pad + 1)
    if nodes > MAX_NODES:
        raise DomainError(f"grid would need {nodes:.3g} nodes (limit {MAX_NODES:g}); increase h")
    x1 = _axis(c[0], left, right, h, pad)
    x2 = _axis(c[1], below, above, h, pad)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    mask = _classify(phi(np.stack([X1, X2], axis=-1)), W)
    return GridDomain(x1=x1, x2=x2, h=float(h), mask=mask, chart=chart, levelset=phi, width=W,
                      name=name)


def build_geodesic_ball(center, R, h, chart=None, W=3) -> GridDomain:
    """Nodes at geodesic distance ``< R`` from ``center`` (half-plane chart by default)."""
    chart = _chart(chart)
    c = np.asarray(center, dtype=float)
    if c.shape != (2,):
        raise ArgumentError("center must be a 2-vector")
    if not (R > 0 and math.isfinite(R)):
        raise DomainError(f"ball radius must be positive, got {R}")
    if chart.kind is Kind.HYPERBOLIC:
        if c[1] < geometry.HYPERBOLIC_MARGIN:
            raise DomainError("ball centre must lie in the open half-plane")
        rho = c[1] * math.sinh(R)
        extent = (rho, rho, c[1] - c[1] * math.exp(-R), c[1] * math.exp(R) - c[1])

        def phi(x):
            return _half_plane_distance(x, c) - R
    else:
        extent = (R, R, R, R)

        def phi(x):
            return np.linalg.norm(np.asarray(x) - c, axis=-1) - R
    return build_levelset_domain(phi, c, extent, h, chart, W, name="ball")


def _half_plane_distance(x, c):
    x = np.asarray(x, dtype=float)
    diff = x - c
    z = np.sum(diff * diff, axis=-1) / (2.0 * x[..., 1] * c[1])
    return np.log1p(z + np.sqrt(z * (z + 2.0)))


def build_ellipse(center, a, b, h, chart=None, W=3) -> GridDomain:
    """Chart ellipse ``((x1-c1)/a)^2 + ((x2-c2)/b)^2 < 1``."""
    if not (a > 0 and b > 0):
        raise DomainError("ellipse semi-axes must be positive")
    c = np.asarray(center, dtype=float)

    def phi(x):
        x = np.asarray(x, dtype=float)
        return np.hypot((x[..., 0] - c[0]) / a, (x[..., 1] - c[1]) / b) - 1.0

    return build_levelset_domain(phi, c, (a, a, b, b), h, chart, W, name="ellipse")


def load_domain(path, chart=None) -> GridDomain:
    """Read a domain CSV (``x1,x2,mask``).  The result has no level set."""
    data = read_csv(path, ("x1", "x2", "mask"))
    x1, x2, mask = _to_grid(data, path)
    if data.size and not np.all(np.isin(mask, (EXTERIOR, INTERIOR, BOUNDARY))):
        raise DomainError(f"{path}: mask values must be 0, 1 or 2")
    if chart is None:
        chart = SpaceForm(Kind.HYPERBOLIC if x2.size and x2[0] >= geometry.HYPERBOLIC_MARGIN
                          else Kind.EUCLIDEAN, 2)
    h = _spacing(x1, x2, path)
    mask = mask.astype(np.int8)
    return GridDomain(x1=x1, x2=x2, h=h, mask=mask, chart=_chart(chart),
                      levelset=None, width=_ring_width(mask, path), name=str(path))


def _ring_width(mask, path, max_width=3):
    """Largest stencil width whose arms from interior nodes never reach exterior nodes."""
    ii, jj = np.nonzero(mask == INTERIOR)
    nx, ny = mask.shape
    for W in range(max_width, 0, -1):
        ok = True
        for p, q in _offsets(W):
            ti, tj = ii + p, jj + q
            if (np.any((ti < 0) | (ti >= nx) | (tj < 0) | (tj >= ny))
                    or np.any(mask[np.clip(ti, 0, nx - 1), np.clip(tj, 0, ny - 1)] == EXTERIOR)):
                ok = False
                break
        if ok:
            return W
    raise DomainError(f"{path}: an interior node touches an exterior node or the grid edge; "
                      "interior nodes need a boundary ring")


def _spacing(x1, x2, path):
    steps = np.concatenate([np.diff(x1), np.diff(x2)])
    if steps.size == 0:
        return 1.0
    h = float(np.median(steps))
    if not np.allclose(steps, h, rtol=1e-6, atol=0):
        raise DomainError(f"{path}: grid is not uniform")
    return h


def _to_grid(data, path):
    from .io import FormatError

    if data.shape[0] == 0:
        return np.zeros(0), np.zeros(0), np.zeros((0, 0))
    x1 = np.unique(data[:, 0])
    x2 = np.unique(data[:, 1])
    if x1.size * x2.size != data.shape[0]:
        raise FormatError(f"{path}: rows do not form a full tensor grid "
                          f"({x1.size} x {x2.size} != {data.shape[0]})")
    i = np.searchsorted(x1, data[:, 0])
    j = np.searchsorted(x2, data[:, 1])
    out = np.full((x1.size, x2.size), np.nan)
    out[i, j] = data[:, 2]
    if np.any(np.isnan(out)):
        raise FormatError(f"{path}: duplicate or missing nodes")
    return x1, x2, out


# ----------------------------------------------------------------------------
# fields


@dataclass(eq=False)
class GridField:
    values: np.ndarray
    domain: GridDomain
    report: Optional["SolveReport"] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.domain.mask.shape:
            raise ArgumentError(
                f"field shape {self.values.shape} does not match domain {self.domain.mask.shape}"
            )

    def interior_values(self):
        st = self.domain.stencil(1, NEAREST)
        return self.values[st.nodes[:, 0], st.nodes[:, 1]]

    def sup(self):
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def to_csv(self, path, preamble=()):
        X1, X2 = self.domain.coords()
        write_csv(path, ("x1", "x2", "u"), zip(X1.ravel(), X2.ravel(), self.values.ravel()),
                  preamble=preamble)


def load_field(path, domain: GridDomain) -> GridField:
    data = read_csv(path, ("x1", "x2", "u"))
    x1, x2, u = _to_grid(data, path)
    from .io import FormatError

    if x1.shape != domain.x1.shape or x2.shape != domain.x2.shape or not (
        np.allclose(x1, domain.x1) and np.allclose(x2, domain.x2)
    ):
        raise FormatError(f"{path}: field grid does not match the domain grid")
    return GridField(u, domain)


# ----------------------------------------------------------------------------
# solver


@dataclass(frozen=True)
class SolverConfig:
    W: int = 3
    tol: float = 1e-8
    max_policy_iters: int = 60
    linear_tol: float = 1e-12
    boundary_mode: str = FRACTIONAL

    def __post_init__(self):
        if int(self.W) != self.W or self.W < 1:
            raise ArgumentError(f"stencil width W must be an integer >= 1, got {self.W}")
        if not (self.tol > 0 and self.linear_tol > 0):
            raise ArgumentError("tolerances must be positive")
        if self.max_policy_iters < 1:
            raise ArgumentError("max_policy_iters must be >= 1")
        if self.boundary_mode not in (FRACTIONAL, NEAREST):
            raise ArgumentError(f"unknown boundary mode {self.boundary_mode!r}")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual_sup: float
    history: list
    linear_fallbacks: int = 0
    backend: str = ""


class _Operator:
    """Discrete ``F^sign`` on one domain, stencil and parameter set."""

    def __init__(self, dom: GridDomain, p: PucciParams, sign, cfg: SolverConfig, boundary=None):
        self.dom = dom
        self.p = p
        self.sign = parse_sign(sign)
        self.sgn = sign_value(self.sign)
        self.cfg = cfg
        mode = cfg.boundary_mode if dom.levelset is not None else NEAREST
        st = dom.stencil(cfg.W, mode)
        self.st = st
        if p.lam == p.Lam:
            # isotropic: the axis frame alone is exact, the rest only adds rounding
            keep = [f for f, (a, b) in enumerate(st.frames) if {a, b} == {st.jx, st.jy}]
        else:
            keep = list(range(len(st.frames)))
        self.frames = np.ascontiguousarray(st.frames[keep])
        used = np.unique(np.concatenate([self.frames.ravel(), [st.jx, st.jy]]))
        # restrict arrays to the directions actually used
        self.dirs = used
        remap = np.full(len(st.directions), -1)
        remap[used] = np.arange(used.size)
        self.frames = remap[self.frames]
        self.jx, self.jy = int(remap[st.jx]), int(remap[st.jy])
        self.neighbor = st.neighbor[used]
        self.t = np.ascontiguousarray(st.fraction[used])
        e = st.directions[used].astype(float)
        self.lengths = np.hypot(e[:, 0], e[:, 1]) * dom.h
        unit = e / np.hypot(e[:, 0], e[:, 1])[:, None]
        # hyperbolic first-order vector of a unit direction: 2 e_2 e - E_2
        self.cvec = 2.0 * unit[:, 1:2] * unit
        self.cvec[:, 1] -= 1.0
        x2 = dom.x2[st.nodes[:, 1]]
        self.minv, self.gfac, self.kfac = dom.conformal(x2)
        cut = self.neighbor < 0
        self.cut = cut
        self.garm = np.zeros(self.neighbor.shape)
        if boundary is not None:
            pts = st.cut_points[used][cut]
            self.garm[cut] = np.asarray(boundary(pts), dtype=float)
        self.n = st.nodes.shape[0]

    def deltas(self, u):
        nb = np.where(self.cut, 0, self.neighbor)
        ends = np.where(self.cut, self.garm, u[nb] if u.size else 0.0)
        return ends - u[None, None, :]

    def evaluate(self, u, use_numba=None):
        delta = np.ascontiguousarray(self.deltas(u))
        return select_policy(
            delta, self.t, self.lengths, self.frames, self.cvec, self.kfac, self.minv, self.gfac,
            self.p.lam, self.p.Lam, self.p.k, self.sgn, self.jx, self.jy, self.dom.h,
            use_numba=use_numba,
        )

    def system(self, kappa, b, c):
        """``(-L + b I) u = c + boundary terms`` for the policy encoded in ``kappa``."""
        n = self.n
        rows = np.broadcast_to(np.arange(n), kappa.shape)
        inner = ~self.cut & (kappa != 0.0)
        diag = kappa.sum(axis=(0, 1)) + b
        A = sp.csr_matrix(
            (np.concatenate([-kappa[inner], diag]),
             (np.concatenate([rows[inner], np.arange(n)]),
              np.concatenate([self.neighbor[inner], np.arange(n)]))),
            shape=(n, n),
        )
        rhs = c + np.sum(np.where(self.cut, kappa * self.garm, 0.0), axis=(0, 1))
        return A, rhs

    def scatter(self, u_int):
        out = np.zeros(self.dom.mask.shape)
        out[self.st.nodes[:, 0], self.st.nodes[:, 1]] = u_int
        return out


def _node_array(value, dom, nodes, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(nodes.shape[0], float(arr))
    if arr.shape == dom.mask.shape:
        return arr[nodes[:, 0], nodes[:, 1]]
    raise ArgumentError(f"{name} must be a scalar or a grid-shaped array")


def discrete_pucci_residual(u: GridField, dom: GridDomain, p: PucciParams, sign=MINUS,
                            cfg: SolverConfig = None, boundary=None, use_numba=None) -> GridField:
    """Discrete ``F^sign`` of ``u`` at interior nodes (zero elsewhere).

    Arm ends that leave the domain read ``boundary(points)`` (default 0).
    """
    cfg = cfg or SolverConfig()
    if u.domain is not dom and u.values.shape != dom.mask.shape:
        raise ArgumentError("field is not aligned with the domain")
    op = _Operator(dom, p, sign, cfg, boundary)
    vals = u.values[op.st.nodes[:, 0], op.st.nodes[:, 1]]
    F, _ = op.evaluate(vals, use_numba)
    return GridField(op.scatter(F), dom)


def _linear_solve(A, rhs, x0, rtol):
    """Preconditioned BiCGSTAB; falls back to a direct solve."""
    try:
        ilu = spla.spilu(A.tocsc(), drop_tol=1e-5, fill_factor=20)
        M = spla.LinearOperator(A.shape, ilu.solve)
        x, info = spla.bicgstab(A, rhs, x0=x0, rtol=rtol, atol=0.0, M=M, maxiter=500)
        if info == 0 and np.all(np.isfinite(x)):
            return x, False
    except RuntimeError:
        pass
    return spla.spsolve(A.tocsc(), rhs), True


def howard_solve(dom: GridDomain, p: PucciParams, source=AffineSource(1.0), sign=MINUS,
                 cfg: SolverConfig = None, boundary=None, u0=None, use_numba=None) -> GridField:
    """Policy iteration for ``F^sign(u) + c - b u = 0`` with Dirichlet data ``boundary`` (default 0).

    ``source`` is an ``AffineSource`` or a ``(c, b)`` pair; ``c`` may be a
    grid-shaped array.  Raises ``ConvergenceError`` (carrying the report and
    the last iterate as ``err.field``) when the residual stays above ``tol``.
    """
    from ._accel import backend

    cfg = cfg or SolverConfig()
    if isinstance(source, AffineSource):
        c_val, b = source.c, source.b
    else:
        c_val, b = source
    b = float(b)
    if not b >= 0:
        raise ArgumentError(f"source slope b must be >= 0, got {b}")
    if dom.n_interior == 0:
        raise DegenerateDomainError("domain has no interior nodes")
    op = _Operator(dom, p, sign, cfg, boundary)
    c = _node_array(c_val, dom, op.st.nodes, "c")
    u = np.zeros(op.n) if u0 is None else _node_array(u0, dom, op.st.nodes, "u0")

    history = []
    fallbacks = 0
    converged = False
    it = 0
    while True:
        F, kappa = op.evaluate(u, use_numba)
        res = float(np.max(np.abs(F + c - b * u)))
        history.append(res)
        log.debug("howard it=%d residual=%.3e", it, res)
        if res <= cfg.tol:
            converged = True
            break
        if it >= cfg.max_policy_iters:
            break
        A, rhs = op.system(kappa, b, c)
        u, fb = _linear_solve(A, rhs, u, cfg.linear_tol)
        fallbacks += fb
        it += 1

    report = SolveReport(converged, it, history[-1], history, fallbacks, backend())
    values = op.scatter(u)
    if boundary is not None:
        ring = dom.mask == BOUNDARY
        X1, X2 = dom.coords()
        values[ring] = np.asarray(boundary(np.stack([X1[ring], X2[ring]], axis=-1)), dtype=float)
    out = GridField(values, dom, report)
    if not converged:
        err = ConvergenceError(
            f"policy iteration stalled: residual {res:.3e} > tol {cfg.tol:.1e} "
            f"after {it} iterations", report)
        err.field = out
        raise err
    return out


# ----------------------------------------------------------------------------
# boundary gradient


@dataclass
class BoundaryProfile:
    nodes: np.ndarray    # (m, 2) ring node beyond each sampled cut
    points: np.ndarray   # (m, 2) cut point
    values: np.ndarray   # (m,) |grad_g u|_g

    @property
    def mean(self):
        return float(np.mean(self.values))

    @property
    def spread(self):
        """``(max - min) / mean``."""
        return float((np.max(self.values) - np.min(self.values)) / np.mean(self.values))

    def to_csv(self, path):
        write_csv(path, ("i", "j", "x1", "x2", "grad"),
                  ((int(n[0]), int(n[1]), x[0], x[1], v)
                   for n, x, v in zip(self.nodes, self.points, self.values)))


def outward_normals(dom: GridDomain, pts):
    """Unit outward normals at chart points, from the level set or a smoothed signed distance."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if dom.levelset is not None:
        eps = 1e-7 * max(1.0, float(np.max(np.abs(pts))))
        g = np.empty_like(pts)
        for a in range(2):
            d = np.zeros(2)
            d[a] = eps
            g[:, a] = (dom.levelset(pts + d) - dom.levelset(pts - d)) / (2 * eps)
    else:
        sd = signed_distance(dom, smooth=True)
        g1, g2 = np.gradient(-sd, dom.h)
        g = np.stack([_bilinear(dom, g1, pts), _bilinear(dom, g2, pts)], axis=-1)
    norm = np.linalg.norm(g, axis=-1, keepdims=True)
    return g / np.where(norm > 0, norm, 1.0)


def signed_distance(dom: GridDomain, smooth=False):
    """Positive inside.  Exact from the level set when available (chart-Euclidean
    distance otherwise, via distance transforms of the interior mask)."""
    from scipy import ndimage

    inside = dom.mask == INTERIOR
    sd = ndimage.distance_transform_edt(inside) - ndimage.distance_transform_edt(~inside)
    # shift so the zero level sits halfway between interior and exterior nodes
    sd = (np.where(inside, sd, sd + 1.0) - 0.5) * dom.h
    if smooth:
        sd = ndimage.gaussian_filter(sd, sigma=1.0, mode="nearest")
    return sd


def _bilinear(dom: GridDomain, arr, pts):
    """Bilinear interpolation of a grid array; ``nan`` outside the grid."""
    pts = np.atleast_2d(pts)
    fi = (pts[:, 0] - dom.x1[0]) / dom.h
    fj = (pts[:, 1] - dom.x2[0]) / dom.h
    ok = (fi >= -1e-9) & (fi <= dom.nx - 1 + 1e-9) & (fj >= -1e-9) & (fj <= dom.ny - 1 + 1e-9)
    i0 = np.clip(np.floor(fi + 1e-9).astype(int), 0, max(dom.nx - 2, 0))
    j0 = np.clip(np.floor(fj + 1e-9).astype(int), 0, max(dom.ny - 2, 0))
    a = np.clip(fi - i0, 0.0, 1.0)
    b = np.clip(fj - j0, 0.0, 1.0)
    i1 = np.minimum(i0 + 1, dom.nx - 1)
    j1 = np.minimum(j0 + 1, dom.ny - 1)
    val = ((1 - a) * (1 - b) * arr[i0, j0] + a * (1 - b) * arr[i1, j0]
           + (1 - a) * b * arr[i0, j1] + a * b * arr[i1, j1])
    return np.where(ok, val, np.nan)


def boundary_gradient_profile(u: GridField, dom: GridDomain = None, mode=None,
                              min_alignment=0.7) -> BoundaryProfile:
    """``|grad_g u|_g`` at boundary cuts along the grid axes.

    Along an axis arm that leaves the domain, a quadratic through the node
    behind, the node, and the cut (where ``u = 0``) gives the one-sided
    derivative at the cut.  With ``u = 0`` on the boundary the gradient is
    normal there, so ``|grad u| = -d_e u / (nu . e)``.  Cuts whose axis makes
    ``nu . e < min_alignment`` are skipped; another axis covers them.
    """
    dom = u.domain if dom is None else dom
    if mode is None:
        mode = FRACTIONAL if dom.levelset is not None else NEAREST
    st = dom.stencil(1, mode)
    vals = u.values[st.nodes[:, 0], st.nodes[:, 1]]
    nodes, pts, out = [], [], []
    for d in (st.jx, st.jy):
        e = st.directions[d].astype(float)
        for s, sgn in enumerate((1.0, -1.0)):
            back = st.neighbor[d, 1 - s]
            sel = (st.neighbor[d, s] < 0) & (back >= 0)
            if not np.any(sel):
                continue
            tau = st.fraction[d, s, sel] * dom.h
            z = st.cut_points[d, s, sel]
            ub = vals[back[sel]]
            u0 = vals[sel]
            h = dom.h
            deriv = ub * tau / (h * (h + tau)) - u0 * (tau + h) / (h * tau)
            nu = outward_normals(dom, z)
            align = nu @ (sgn * e)
            keep = align >= min_alignment
            grad = -deriv[keep] / align[keep]
            _, gfac, _ = dom.conformal(z[keep, 1])
            ring = st.nodes[sel][keep] + (sgn * e).astype(int)
            nodes.append(ring)
            pts.append(z[keep])
            out.append(grad * gfac)
    if not out:
        raise DegenerateDomainError("no boundary cuts to sample")
    return BoundaryProfile(np.concatenate(nodes), np.concatenate(pts), np.concatenate(out))

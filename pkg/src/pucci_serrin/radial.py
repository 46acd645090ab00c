"""Overdetermined problems on geodesic balls, solved radially by shooting.

About the ball centre the covariant Hessian of ``u(r)`` has the radial
eigenvalue ``u''`` and the tangential eigenvalue ``u' ct(r)`` with
multiplicity ``N - 1``, where ``ct`` is ``1/r``, ``coth r`` or ``cot r``.
The operator ``F^sign + f(u)`` therefore reduces to a scalar ODE that is
solved for ``u''`` in closed form and integrated with RK4.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, geometry
from .errors import ArgumentError, BracketError, ConsistencyError, DomainError, InfeasibilityError
from .geometry import Kind, SpaceForm
from .pucci import MINUS, PucciParams, parse_sign, pucci_from_spectrum, sign_value

log = logging.getLogger(__name__)

EPS0 = 1e-6
NSTEPS = 4096
NGRADED = 64

_KIND_CODE = {Kind.EUCLIDEAN: _kernels.EUCLIDEAN, Kind.HYPERBOLIC: _kernels.HYPERBOLIC,
              Kind.SPHERE: _kernels.SPHERE}


@dataclass(frozen=True)
class AffineSource:
    """``f(u) = c - b u`` with ``b >= 0``."""

    c: float
    b: float = 0.0

    def __post_init__(self):
        if not self.b >= 0:
            raise ArgumentError(f"source slope b must be >= 0, got {self.b}")

    def __call__(self, u):
        return self.c - self.b * np.asarray(u, dtype=float)


@dataclass(frozen=True)
class RadialProblem:
    space: SpaceForm
    R: float
    params: PucciParams
    sign: str = MINUS
    source: AffineSource = field(default_factory=lambda: AffineSource(1.0))

    def __post_init__(self):
        object.__setattr__(self, "sign", parse_sign(self.sign))
        if not (self.R > 0 and math.isfinite(self.R)):
            raise DomainError(f"ball radius must be positive, got {self.R}")
        if self.space.kind is Kind.SPHERE and not self.R < math.pi / 2:
            raise DomainError(
                f"sphere balls must lie inside a hemisphere (R < pi/2), got R={self.R}"
            )


@dataclass
class RadialSolution:
    r_nodes: np.ndarray
    u_values: np.ndarray
    du_values: np.ndarray
    c0: float
    residual_sup: float
    u0: float = float("nan")
    iterations: int = 0

    def u(self, r):
        """Cubic Hermite interpolation of the profile."""
        return _hermite_eval(self.r_nodes, self.u_values, self.du_values, r)


def _hermite_eval(x, y, dy, t):
    t = np.asarray(t, dtype=float)
    i = np.clip(np.searchsorted(x, t, side="right") - 1, 0, x.size - 2)
    h = x[i + 1] - x[i]
    s = (t - x[i]) / h
    s2, s3 = s * s, s * s * s
    return ((2 * s3 - 3 * s2 + 1) * y[i] + (s3 - 2 * s2 + s) * h * dy[i]
            + (-2 * s3 + 3 * s2) * y[i + 1] + (s3 - s2) * h * dy[i + 1])


def curvature_cotangent(space: SpaceForm, r: float) -> float:
    if not r > 0:
        raise DomainError(f"radius must be positive, got {r}")
    if space.kind is Kind.SPHERE and not r < math.pi:
        raise DomainError(f"sphere radius must be < pi, got {r}")
    return float(_kernels.cotangent(_KIND_CODE[space.kind], float(r)))


def radial_operator(space: SpaceForm, r, du, d2u, p: PucciParams, sign=MINUS) -> float:
    """``F^sign`` of a radial function with ``u'(r) = du`` and ``u''(r) = d2u``."""
    ct = curvature_cotangent(space, r)
    mu = np.array([d2u] + [du * ct] * (space.dim - 1))
    return pucci_from_spectrum(mu, p, sign) + sign_value(sign) * p.k * abs(du)


def radial_chart_derivatives(space: SpaceForm, r, du, d2u):
    """Chart point at distance ``r`` on the axis and the Euclidean grad/Hessian there."""
    x = geometry.axis_point(space, r)
    grho, hrho = geometry.distance_derivatives(space, x)
    return x, du * grho, d2u * np.outer(grho, grho) + du * hrho


class _Shooter:
    def __init__(self, problem: RadialProblem, nsteps: int):
        p = problem.params
        self.problem = problem
        self.nsteps = nsteps
        self.w_pos, self.w_neg = p.weights(problem.sign)
        self.k_signed = sign_value(problem.sign) * p.k
        self.code = _KIND_CODE[problem.space.kind]

    def run(self, u0):
        pr = self.problem
        return _kernels.radial_integrate(
            self.code, pr.space.dim, self.w_pos, self.w_neg, self.k_signed,
            float(pr.source.c), float(pr.source.b), float(pr.R), float(u0), EPS0, self.nsteps, NGRADED,
        )

    def end_value(self, u0):
        return float(self.run(u0)[1][-1])


def shoot(problem: RadialProblem, tol=1e-10, nsteps=NSTEPS, max_iter=400) -> RadialSolution:
    """Find ``u(0)`` with ``u(R) = 0`` by bisection and return the profile."""
    if not tol > 0:
        raise ArgumentError("tol must be positive")
    sh = _Shooter(problem, nsteps)
    lo, g_lo = 0.0, sh.end_value(0.0)
    if not g_lo < 0.0:
        raise BracketError(
            f"no solution found in bracket: u(R) = {g_lo:.3e} >= 0 already for u(0) = 0"
        )
    hi = max(abs(problem.source.c), 1e-12) * problem.R**2 / (2.0 * problem.space.dim)
    g_hi = sh.end_value(hi)
    expansions = 0
    while g_hi <= 0.0:
        if g_hi < g_lo:
            raise ConsistencyError("u(0) -> u(R) is not increasing on the bracket")
        lo, g_lo = hi, g_hi
        hi *= 2.0
        g_hi = sh.end_value(hi)
        expansions += 1
        if expansions > 200 or not math.isfinite(g_hi):
            raise BracketError("no solution found in bracket: u(R) never became positive")

    it = 0
    mid, g_mid = lo, g_lo
    while it < max_iter:
        it += 1
        mid = 0.5 * (lo + hi)
        g_mid = sh.end_value(mid)
        if not (g_lo <= g_mid <= g_hi):
            raise ConsistencyError(
                f"u(0) -> u(R) not monotone: {g_lo:.6e}, {g_mid:.6e}, {g_hi:.6e}"
            )
        if abs(g_mid) <= tol or hi - lo <= 4 * np.finfo(float).eps * hi:
            break
        if g_mid < 0.0:
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid

    r, u, du = sh.run(mid)
    if np.min(u[:-1]) < -tol:
        raise InfeasibilityError(
            f"profile loses positivity at r = {r[np.argmin(u[:-1])]:.6g} before R = {problem.R}"
        )
    sol = RadialSolution(r, u, du, c0=abs(float(du[-1])), residual_sup=float("nan"),
                         u0=mid, iterations=it)
    sol.residual_sup = pde_residual(problem, sol)
    log.debug("shoot: u0=%.12g c0=%.12g it=%d residual=%.3e", mid, sol.c0, it, sol.residual_sup)
    return sol


def pde_residual(problem: RadialProblem, sol: RadialSolution, samples=100) -> float:
    """Sup of ``|F(hess_g u, grad_g u) + f(u)|`` on the full chart operator.

    ``u''`` comes from fourth-order differences of the stored ``u'``; the
    chart Hessian is rebuilt at axis points and fed to the Riemannian
    Pucci operator, independent of the reduced ODE.
    """
    from .pucci import operator_value

    r, u, du = sol.r_nodes, sol.u_values, sol.du_values
    h = r[1] - r[0]
    idx = np.unique(np.linspace(3, r.size - 3, samples + 2).astype(int)[1:-1])
    worst = 0.0
    for i in idx:
        d2u = (-du[i + 2] + 8 * du[i + 1] - 8 * du[i - 1] + du[i - 2]) / (12 * h)
        x, grad, hess = radial_chart_derivatives(problem.space, r[i], du[i], d2u)
        val = operator_value(problem.space, x, grad, 0.5 * (hess + hess.T), problem.params,
                             problem.sign) + float(problem.source(u[i]))
        worst = max(worst, abs(val))
    return worst


def serrin_map(space: SpaceForm, p: PucciParams, source: AffineSource, sign, radii, tol=1e-10):
    """``[(R, c0), ...]`` for each radius."""
    out = []
    for R in radii:
        sol = shoot(RadialProblem(space, float(R), p, sign, source), tol=tol)
        out.append((float(R), sol.c0))
    return out

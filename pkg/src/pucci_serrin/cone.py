"""Homogeneous solutions of ``M^-(D^2 Psi) = 0`` in planar cones.

``Psi = r^beta phi(theta)`` on the sector ``0 < theta < theta0`` with
``phi(0) = phi(theta0) = 0``.  In the orthonormal polar frame the Hessian
of ``Psi`` is ``r^(beta-2)`` times::

    [[beta(beta-1) phi, (beta-1) phi'],
     [(beta-1) phi',    beta phi + phi'']]

so ``phi`` solves a second order ODE.  Normalising ``phi'(0) = 1`` the
exponent is the ``beta`` whose first zero ``theta*(beta)`` equals ``theta0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ArgumentError, ConsistencyError, NumericalError
from .pucci import PucciParams, pucci_minus

#: Profile integration uses ``theta0 / NSTEPS`` as step.
NSTEPS = 16384


@dataclass(frozen=True)
class ConeProblem:
    theta0: float
    params: PucciParams

    def __post_init__(self):
        if not 0.0 < self.theta0 <= math.pi:
            raise ArgumentError(f"cone opening must lie in (0, pi], got {self.theta0}")


@dataclass
class ConeExponentResult:
    beta: float
    theta_nodes: np.ndarray
    phi_values: np.ndarray
    residual_sup: float
    step_halving_gap: float = float("nan")
    bracket: tuple = ()


def polar_hessian(beta, phi, dphi, d2phi) -> np.ndarray:
    return np.array([[beta * (beta - 1.0) * phi, (beta - 1.0) * dphi],
                     [(beta - 1.0) * dphi, beta * phi + d2phi]])


def profile_rhs(theta, phi, dphi, beta, p: PucciParams) -> float:
    """The unique ``phi''`` with ``M^-(polar_hessian) = 0`` (closed form).

    ``theta`` does not enter: the equation is autonomous.
    """
    return float(_kernels.cone_d2phi(float(phi), float(dphi), float(beta), p.lam, p.Lam))


def _step(theta0, nsteps):
    return theta0 / nsteps


def first_zero(beta, p: PucciParams, h=math.pi / NSTEPS, theta_max=None) -> float:
    """First return to zero of ``phi`` with ``phi(0) = 0``, ``phi'(0) = 1``."""
    if not beta > 0:
        raise ArgumentError(f"beta must be positive, got {beta}")
    if theta_max is None:
        theta_max = math.pi + 0.25
    t = _kernels.cone_first_zero(float(beta), p.lam, p.Lam, float(h), float(theta_max))
    if t < 0:
        raise NumericalError(f"phi has no zero before theta = {theta_max:.6g} (beta = {beta})")
    return float(t)


def _zero_or_inf(beta, p, h, theta_max):
    t = _kernels.cone_first_zero(float(beta), p.lam, p.Lam, float(h), float(theta_max))
    return math.inf if t < 0 else t


def solve_beta(problem: ConeProblem, tol=1e-10, nsteps=NSTEPS) -> ConeExponentResult:
    """Root of ``theta*(beta) = theta0`` by bisection.

    The bracket starts at ``[pi/(2 theta0), 2 pi/theta0]`` and grows
    geometrically.  Every evaluated pair is kept and checked for strict
    decrease of ``theta*`` in ``beta``; a violation raises
    ``ConsistencyError``.
    """
    if not tol > 0:
        raise ArgumentError("tol must be positive")
    p, theta0 = problem.params, problem.theta0
    h = _step(theta0, nsteps)
    theta_max = theta0 + 0.25 * math.pi
    seen = []

    def zero(beta):
        t = _zero_or_inf(beta, p, h, theta_max)
        seen.append((beta, t))
        return t

    anchor = math.pi / theta0
    lo, hi = 0.5 * anchor, 2.0 * anchor
    for _ in range(60):
        if zero(lo) > theta0:
            break
        lo *= 0.5
    else:
        raise NumericalError("could not bracket beta from below")
    for _ in range(60):
        if zero(hi) < theta0:
            break
        hi *= 2.0
    else:
        raise NumericalError("could not bracket beta from above")

    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if zero(mid) > theta0:
            lo = mid
        else:
            hi = mid
    beta = 0.5 * (lo + hi)
    _check_monotone(seen)

    theta, phi, dphi = _kernels.cone_profile(beta, p.lam, p.Lam, theta0, nsteps)
    fine = _zero_or_inf(beta, p, 0.5 * h, theta_max)
    result = ConeExponentResult(
        beta=beta, theta_nodes=theta, phi_values=phi,
        residual_sup=profile_residual(beta, theta, phi, dphi, p),
        step_halving_gap=abs(fine - _zero_or_inf(beta, p, h, theta_max)),
        bracket=(lo, hi),
    )
    return result


def _check_monotone(pairs):
    pairs = sorted(pairs)
    betas = np.array([b for b, _ in pairs])
    zeros = np.array([t for _, t in pairs])
    keep = np.isfinite(zeros)
    # an infinite first zero is compatible with decrease only below every finite one
    if np.any(~keep):
        last_inf = np.max(betas[~keep])
        if np.any(betas[keep] < last_inf):
            raise ConsistencyError("theta*(beta) is not decreasing: lost zero at larger beta")
    b, t = betas[keep], zeros[keep]
    bad = (np.diff(b) > 0) & (np.diff(t) >= 0)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ConsistencyError(
            f"theta*(beta) not strictly decreasing: theta*({b[i]:.12g}) = {t[i]:.12g}, "
            f"theta*({b[i + 1]:.12g}) = {t[i + 1]:.12g}"
        )


def profile_residual(beta, theta, phi, dphi, p: PucciParams) -> float:
    """Sup of ``|M^-(polar_hessian)|`` with ``phi''`` from differences of ``phi'``."""
    h = theta[1] - theta[0]
    d2 = (-dphi[4:] + 8 * dphi[3:-1] - 8 * dphi[1:-3] + dphi[:-4]) / (12 * h)
    idx = np.unique(np.linspace(0, d2.size - 1, 512).astype(int))
    worst = 0.0
    for i in idx:
        j = i + 2
        M = polar_hessian(beta, phi[j], dphi[j], d2[i])
        worst = max(worst, abs(pucci_minus(M, p)))
    return worst


def epsilon_sweep(theta0, epsilons, lam=1.0, tol=1e-10):
    """``beta`` for ``M^-_{lam, lam(1+eps)}`` at each ``eps``."""
    out = []
    for eps in epsilons:
        res = solve_beta(ConeProblem(theta0, PucciParams(lam, lam * (1.0 + eps))), tol=tol)
        out.append((float(eps), res))
    return out


def growth_exponent_fit(t, w) -> float:
    """Least-squares slope of ``log w`` against ``log t``."""
    t = np.asarray(t, dtype=float)
    w = np.asarray(w, dtype=float)
    if t.shape != w.shape or t.ndim != 1:
        raise ArgumentError("t and w must be 1-D arrays of equal length")
    if t.size < 3:
        raise ArgumentError("need at least 3 samples")
    if np.any(t <= 0) or np.any(w <= 0):
        raise ArgumentError("growth fit needs t > 0 and w > 0")
    slope, _ = np.polyfit(np.log(t), np.log(w), 1)
    return float(slope)

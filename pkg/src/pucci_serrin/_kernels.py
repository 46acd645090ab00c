"""Scalar ODE kernels for radial shooting and cone profiles.

Plain-loop code compiled by numba when enabled (see ``_accel``); the
same source runs as ordinary Python otherwise.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import njit

EUCLIDEAN, HYPERBOLIC, SPHERE = 0, 1, 2


@njit
def cotangent(kind, r):
    if kind == HYPERBOLIC:
        return 1.0 / math.tanh(r)
    if kind == SPHERE:
        return 1.0 / math.tan(r)
    return 1.0 / r


@njit
def radial_d2u(kind, n, w_pos, w_neg, k_signed, c, b, r, u, du):
    """Solve ``F(spectrum{u'', u' ct (x N-1)}) + k_signed |u'| + c - b u = 0`` for ``u''``."""
    a = du * cotangent(kind, r)
    wa = w_pos if a > 0.0 else w_neg
    q = -(c - b * u) - (n - 1) * wa * a - k_signed * abs(du)
    if q > 0.0:
        return q / w_pos
    return q / w_neg


@njit
def _radial_step(kind, n, w_pos, w_neg, k_signed, c, b, r, u, du, h):
    k1u = du
    k1v = radial_d2u(kind, n, w_pos, w_neg, k_signed, c, b, r, u, du)
    k2u = du + 0.5 * h * k1v
    k2v = radial_d2u(kind, n, w_pos, w_neg, k_signed, c, b, r + 0.5 * h,
                     u + 0.5 * h * k1u, du + 0.5 * h * k1v)
    k3u = du + 0.5 * h * k2v
    k3v = radial_d2u(kind, n, w_pos, w_neg, k_signed, c, b, r + 0.5 * h,
                     u + 0.5 * h * k2u, du + 0.5 * h * k2v)
    k4u = du + h * k3v
    k4v = radial_d2u(kind, n, w_pos, w_neg, k_signed, c, b, r + h,
                     u + h * k3u, du + h * k3v)
    return (u + h * (k1u + 2.0 * k2u + 2.0 * k3u + k4u) / 6.0,
            du + h * (k1v + 2.0 * k2v + 2.0 * k3v + k4v) / 6.0)


@njit
def radial_integrate(kind, n, w_pos, w_neg, k_signed, c, b, big_r, u0, eps0, nsteps, ngraded):
    """Profile on the nodes ``r_i = i R / nsteps``.

    Starts from a two-term Taylor expansion at ``eps0`` and reaches the
    first node through ``ngraded`` geometrically growing RK4 steps, since
    ``ct(r) ~ 1/r`` is singular at the origin.
    """
    r_out = np.empty(nsteps + 1)
    u_out = np.empty(nsteps + 1)
    du_out = np.empty(nsteps + 1)
    h = big_r / nsteps
    r_out[0] = 0.0
    u_out[0] = u0
    du_out[0] = 0.0

    # u' = a0 r + a1 r^2: all eigenvalues equal a0 at the origin, so
    # n w a0 = -f(u0); the O(r) balance gives w (n+1) a1 = -k_signed |a0|
    q0 = -(c - b * u0)
    w0 = w_pos if q0 > 0.0 else w_neg
    a0 = q0 / (n * w0)
    a1 = -k_signed * abs(a0) / (w0 * (n + 1))
    r = eps0
    u = u0 + 0.5 * a0 * eps0 * eps0 + a1 * eps0 ** 3 / 3.0
    du = a0 * eps0 + a1 * eps0 * eps0
    ratio = (h / eps0) ** (1.0 / ngraded)
    for i in range(ngraded):
        r_next = h if i == ngraded - 1 else r * ratio
        u, du = _radial_step(kind, n, w_pos, w_neg, k_signed, c, b, r, u, du, r_next - r)
        r = r_next
    r_out[1] = h
    u_out[1] = u
    du_out[1] = du
    for i in range(1, nsteps):
        u, du = _radial_step(kind, n, w_pos, w_neg, k_signed, c, b, i * h, u, du, h)
        r_out[i + 1] = (i + 1) * h
        u_out[i + 1] = u
        du_out[i + 1] = du
    return r_out, u_out, du_out


@njit
def cone_d2phi(phi, dphi, beta, lam, big_lam):
    """``phi''`` making ``M^-`` of the polar-frame Hessian of ``r^beta phi`` vanish.

    With ``a = beta(beta-1)phi``, ``b = (beta-1)phi'`` and ``d = beta phi + phi''``
    the frame matrix is ``[[a, b], [b, d]]``.  For ``kappa = (Lam-lam)/(Lam+lam)``
    the root of ``lam e_max + Lam e_min = 0`` has mean eigenvalue
    ``s = (-kappa^2 a + kappa sqrt(a^2 + (1-kappa^2) b^2)) / (1-kappa^2)``
    and ``d = 2 s - a``.
    """
    a = beta * (beta - 1.0) * phi
    b = (beta - 1.0) * dphi
    kappa = (big_lam - lam) / (big_lam + lam)
    k2 = kappa * kappa
    s = (-k2 * a + kappa * math.sqrt(a * a + (1.0 - k2) * b * b)) / (1.0 - k2)
    return 2.0 * s - a - beta * phi


@njit
def _cone_step(phi, dphi, beta, lam, big_lam, h):
    k1p = dphi
    k1v = cone_d2phi(phi, dphi, beta, lam, big_lam)
    k2p = dphi + 0.5 * h * k1v
    k2v = cone_d2phi(phi + 0.5 * h * k1p, dphi + 0.5 * h * k1v, beta, lam, big_lam)
    k3p = dphi + 0.5 * h * k2v
    k3v = cone_d2phi(phi + 0.5 * h * k2p, dphi + 0.5 * h * k2v, beta, lam, big_lam)
    k4p = dphi + h * k3v
    k4v = cone_d2phi(phi + h * k3p, dphi + h * k3v, beta, lam, big_lam)
    return (phi + h * (k1p + 2.0 * k2p + 2.0 * k3p + k4p) / 6.0,
            dphi + h * (k1v + 2.0 * k2v + 2.0 * k3v + k4v) / 6.0)


@njit
def _hermite(p0, m0, p1, m1, h, s):
    s2 = s * s
    s3 = s2 * s
    return ((2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * h * m0
            + (-2 * s3 + 3 * s2) * p1 + (s3 - s2) * h * m1)


@njit
def cone_first_zero(beta, lam, big_lam, h, theta_max):
    """First ``theta > 0`` with ``phi(theta) = 0`` for ``phi(0)=0, phi'(0)=1``; -1 if none."""
    phi = 0.0
    dphi = 1.0
    theta = 0.0
    nmax = int(theta_max / h) + 1
    for i in range(nmax):
        phi1, dphi1 = _cone_step(phi, dphi, beta, lam, big_lam, h)
        if i > 0 and phi1 <= 0.0:
            lo = 0.0
            hi = 1.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if _hermite(phi, dphi, phi1, dphi1, h, mid) > 0.0:
                    lo = mid
                else:
                    hi = mid
            return theta + 0.5 * (lo + hi) * h
        phi = phi1
        dphi = dphi1
        theta = (i + 1) * h
    return -1.0


@njit
def cone_profile(beta, lam, big_lam, theta_end, nsteps):
    theta = np.empty(nsteps + 1)
    phi = np.empty(nsteps + 1)
    dphi = np.empty(nsteps + 1)
    h = theta_end / nsteps
    theta[0] = 0.0
    phi[0] = 0.0
    dphi[0] = 1.0
    for i in range(nsteps):
        phi[i + 1], dphi[i + 1] = _cone_step(phi[i], dphi[i], beta, lam, big_lam, h)
        theta[i + 1] = (i + 1) * h
    return theta, phi, dphi

"""Policy selection for the wide-stencil Pucci scheme.

Every discrete operator here is a nonnegative combination of arm
differences ``u(arm) - u(node)``; an arm is a (direction, side) pair.
``cvec[d]`` holds the first-order coefficient vector of direction ``d``
and ``kfac`` its per-node scale (zero on flat charts).
``select_policy`` returns, per interior node, the extremal value over the
policy family and the arm weights ``kappa`` realising it.  Two
implementations: a numba loop and a vectorised numpy fallback.  They must
agree to rounding (see the parity tests).
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import USE_NUMBA, njit


@njit
def _select_loop(delta, t, lengths, frames, cvec, kfac, minv, gfac, lam, big_lam, k, sgn,
                 jx, jy, h):
    ndir = delta.shape[0]
    n = delta.shape[2]
    nf = frames.shape[0]
    value = np.empty(n)
    kappa = np.zeros((ndir, 2, n))
    weights = np.array([lam, big_lam])
    axis = np.array([jx, jy])
    for i in range(n):
        # second differences along every direction of the family
        d2 = np.empty(ndir)
        ap = np.empty(ndir)
        am = np.empty(ndir)
        for d in range(ndir):
            tp = t[d, 0, i]
            tm = t[d, 1, i]
            ll = lengths[d] * lengths[d]
            ap[d] = 2.0 / ((tp + tm) * ll * tp)
            am[d] = 2.0 / ((tp + tm) * ll * tm)
            d2[d] = ap[d] * delta[d, 0, i] + am[d] * delta[d, 1, i]
        dp = np.empty(2)
        dm = np.empty(2)
        for j in range(2):
            a = axis[j]
            dp[j] = delta[a, 0, i] / (t[a, 0, i] * h)
            dm[j] = -delta[a, 1, i] / (t[a, 1, i] * h)

        best = 0.0
        best_f = -1
        best_a1 = 0.0
        best_a2 = 0.0
        for f in range(nf):
            d1 = frames[f, 0]
            d2i = frames[f, 1]
            for c1 in range(2):
                for c2 in range(2):
                    a1 = weights[c1]
                    a2 = weights[c2]
                    val = a1 * d2[d1] + a2 * d2[d2i]
                    for j in range(2):
                        v = kfac[i] * (a1 * cvec[d1, j] + a2 * cvec[d2i, j])
                        if v > 0.0:
                            val += v * dp[j]
                        else:
                            val += v * dm[j]
                    if best_f < 0 or sgn * val > sgn * best:
                        best = val
                        best_f = f
                        best_a1 = a1
                        best_a2 = a2
        m = minv[i]
        d1 = frames[best_f, 0]
        d2i = frames[best_f, 1]
        kappa[d1, 0, i] += m * best_a1 * ap[d1]
        kappa[d1, 1, i] += m * best_a1 * am[d1]
        kappa[d2i, 0, i] += m * best_a2 * ap[d2i]
        kappa[d2i, 1, i] += m * best_a2 * am[d2i]
        for j in range(2):
            a = axis[j]
            v = kfac[i] * (best_a1 * cvec[d1, j] + best_a2 * cvec[d2i, j])
            if v > 0.0:
                kappa[a, 0, i] += m * v / (t[a, 0, i] * h)
            elif v < 0.0:
                kappa[a, 1, i] += -m * v / (t[a, 1, i] * h)
        total = m * best

        if k > 0.0:
            g = np.zeros(2)
            fwd = np.zeros(2)
            for j in range(2):
                if sgn < 0:
                    up = -dp[j]
                    down = dm[j]
                else:
                    up = dp[j]
                    down = -dm[j]
                if up >= down and up > 0.0:
                    g[j] = up
                    fwd[j] = 1.0
                elif down > 0.0:
                    g[j] = down
            gn = math.sqrt(g[0] * g[0] + g[1] * g[1])
            if gn > 0.0:
                total += sgn * k * gfac[i] * gn
                for j in range(2):
                    if g[j] > 0.0:
                        a = axis[j]
                        w = k * gfac[i] * g[j] / gn
                        if fwd[j] > 0.0:
                            kappa[a, 0, i] += w / (t[a, 0, i] * h)
                        else:
                            kappa[a, 1, i] += w / (t[a, 1, i] * h)
        value[i] = total
    return value, kappa


def _select_numpy(delta, t, lengths, frames, cvec, kfac, minv, gfac, lam, big_lam, k, sgn,
                  jx, jy, h):
    ndir, _, n = delta.shape
    ll = (lengths * lengths)[:, None]
    tp, tm = t[:, 0, :], t[:, 1, :]
    ap = 2.0 / ((tp + tm) * ll * tp)
    am = 2.0 / ((tp + tm) * ll * tm)
    d2 = ap * delta[:, 0, :] + am * delta[:, 1, :]
    axis = np.array([jx, jy])
    dp = delta[axis, 0, :] / (t[axis, 0, :] * h)
    dm = -delta[axis, 1, :] / (t[axis, 1, :] * h)

    weights = (lam, big_lam)
    best = np.zeros(n)
    best_f = np.full(n, -1)
    best_a = np.zeros((2, n))
    for f, (d1, d2i) in enumerate(frames):
        for a1 in weights:
            for a2 in weights:
                val = a1 * d2[d1] + a2 * d2[d2i]
                for j in range(2):
                    v = kfac * (a1 * cvec[d1, j] + a2 * cvec[d2i, j])
                    val = val + np.where(v > 0.0, v * dp[j], v * dm[j])
                take = (best_f < 0) | (sgn * val > sgn * best)
                best = np.where(take, val, best)
                best_f = np.where(take, f, best_f)
                best_a[0] = np.where(take, a1, best_a[0])
                best_a[1] = np.where(take, a2, best_a[1])

    cols = np.arange(n)
    kappa = np.zeros((ndir, 2, n))
    d1 = frames[best_f, 0]
    d2i = frames[best_f, 1]
    np.add.at(kappa, (d1, 0, cols), minv * best_a[0] * ap[d1, cols])
    np.add.at(kappa, (d1, 1, cols), minv * best_a[0] * am[d1, cols])
    np.add.at(kappa, (d2i, 0, cols), minv * best_a[1] * ap[d2i, cols])
    np.add.at(kappa, (d2i, 1, cols), minv * best_a[1] * am[d2i, cols])
    v = kfac[None, :] * (best_a[0][None, :] * cvec[d1].T + best_a[1][None, :] * cvec[d2i].T)
    for j, a in enumerate(axis):
        kappa[a, 0] += np.where(v[j] > 0.0, minv * v[j] / (t[a, 0] * h), 0.0)
        kappa[a, 1] += np.where(v[j] < 0.0, -minv * v[j] / (t[a, 1] * h), 0.0)
    total = minv * best

    if k > 0.0:
        if sgn < 0:
            up, down = -dp, dm
        else:
            up, down = dp, -dm
        fwd = (up >= down) & (up > 0.0)
        g = np.where(fwd, up, np.maximum(down, 0.0))
        gn = np.sqrt(np.sum(g * g, axis=0))
        safe = np.where(gn > 0.0, gn, 1.0)
        total = total + sgn * k * gfac * gn
        for j, a in enumerate(axis):
            w = np.where(gn > 0.0, k * gfac * g[j] / safe, 0.0)
            kappa[a, 0] += np.where(fwd[j], w / (t[a, 0] * h), 0.0)
            kappa[a, 1] += np.where(~fwd[j], w / (t[a, 1] * h), 0.0)
    return total, kappa


def select_policy(*args, use_numba=None):
    """Dispatch to the numba loop or the numpy fallback."""
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba:
        return _select_loop(*args)
    return _select_numpy(*args)

"""Pucci extremal operators, the half-space correction matrix ``K`` and
the Euclidean/Riemannian comparison inequalities.

``M^-(M) = lam * sum(mu_i > 0) + Lam * sum(mu_i < 0)`` and ``M^+`` swaps
the two constants.  The Riemannian versions evaluate the same formula on
``m(x)^{-1}`` times the coordinate Hessian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import ArgumentError, DomainError
from .geometry import Kind, SpaceForm

MINUS = "minus"
PLUS = "plus"

#: Relative band (times ||M||) inside which an eigenvalue counts as zero.
SIGN_BAND = 1e-12


def parse_sign(sign) -> str:
    if sign in (MINUS, "-", -1):
        return MINUS
    if sign in (PLUS, "+", 1):
        return PLUS
    raise ArgumentError(f"sign must be 'minus' or 'plus', got {sign!r}")


def sign_value(sign) -> float:
    return -1.0 if parse_sign(sign) == MINUS else 1.0


@dataclass(frozen=True)
class PucciParams:
    lam: float
    Lam: float
    k: float = 0.0

    def __post_init__(self):
        for name in ("lam", "Lam", "k"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise ArgumentError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if not self.lam > 0:
            raise ArgumentError(f"lambda must be positive, got {self.lam}")
        if self.Lam < self.lam:
            raise ArgumentError(f"need Lambda >= lambda, got Lambda={self.Lam} < lambda={self.lam}")
        if self.k < 0:
            raise ArgumentError(f"k must be nonnegative, got {self.k}")

    def weights(self, sign):
        """(weight on positive eigenvalues, weight on negative eigenvalues)."""
        if parse_sign(sign) == MINUS:
            return self.lam, self.Lam
        return self.Lam, self.lam


def _sym(M, name="M"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ArgumentError(f"{name} must be square, got shape {M.shape}")
    if not np.array_equal(M, M.T):
        raise ArgumentError(f"{name} is not symmetric")
    return M


def eigenvalues(M, vectors=False):
    """Ascending eigenvalues of a symmetric matrix (and eigenvectors if asked)."""
    M = _sym(M)
    if vectors:
        return np.linalg.eigh(M)
    return np.linalg.eigvalsh(M)


def pucci_from_spectrum(mu, p: PucciParams, sign=MINUS, scale=None) -> float:
    mu = np.asarray(mu, dtype=float)
    if scale is None:
        scale = np.max(np.abs(mu)) if mu.size else 0.0
    band = SIGN_BAND * scale
    w_pos, w_neg = p.weights(sign)
    neg = mu < -band
    return float(w_pos * np.sum(mu[~neg]) + w_neg * np.sum(mu[neg]))


def _canonical(M):
    # M or -M: whichever has a positive first nonzero entry, so duality holds bit for bit
    flat = M.ravel()
    nz = np.flatnonzero(flat)
    return nz.size == 0 or flat[nz[0]] > 0


def pucci(M, p: PucciParams, sign=MINUS) -> float:
    M = _sym(M)
    if not _canonical(M):
        flipped = PLUS if parse_sign(sign) == MINUS else MINUS
        return -pucci_from_spectrum(np.linalg.eigvalsh(-M), p, flipped)
    return pucci_from_spectrum(np.linalg.eigvalsh(M), p, sign)


def pucci_minus(M, p: PucciParams) -> float:
    return pucci(M, p, MINUS)


def pucci_plus(M, p: PucciParams) -> float:
    return pucci(M, p, PLUS)


def random_orthogonal(shape, rng) -> np.ndarray:
    """Haar-distributed orthogonal matrices via QR of Gaussian matrices.

    ``shape`` is ``n`` for one matrix or ``(batch, n)`` for a stack.
    """
    batch, n = ((), shape) if np.ndim(shape) == 0 else (tuple(shape[:-1]), shape[-1])
    q, r = np.linalg.qr(rng.standard_normal(batch + (n, n)))
    return q * np.sign(np.diagonal(r, axis1=-2, axis2=-1))[..., None, :]


def pucci_oracle(M, p: PucciParams, samples: int, seed: int, include_optimal=True) -> float:
    """Brute-force ``inf tr(A M)`` over sampled ``A`` with spectrum in ``[lam, Lam]``.

    With ``include_optimal`` the minimiser built from the eigenframe of
    ``M`` joins the sample, which makes the result exact.
    """
    M = _sym(M)
    if samples < 1:
        raise ArgumentError("samples must be >= 1")
    n = M.shape[0]
    rng = np.random.default_rng(seed)
    q = random_orthogonal((samples, n), rng)
    d = rng.uniform(p.lam, p.Lam, size=(samples, n))
    # tr(Q diag(d) Q^T M) = sum_j d_j q_j^T M q_j
    best = float(np.min(np.einsum("sj,sij,ik,skj->s", d, q, M, q)))
    if include_optimal:
        mu, q = np.linalg.eigh(M)
        d = np.where(mu < 0, p.Lam, p.lam)
        best = min(best, float(np.sum(d * mu)))
    return best


def riemannian_pucci(space: SpaceForm, x, grad, hess, p: PucciParams, sign=MINUS) -> float:
    """``P^sign(hess_g u) = m(x)^{-1} M^sign(coordinate Hessian)``."""
    h = geometry.riemannian_hessian(space, x, grad, hess)
    return pucci(h, p, sign) / geometry.conformal_factor(space, x)


def operator_value(space: SpaceForm, x, grad, hess, p: PucciParams, sign=MINUS) -> float:
    """``F^sign = P^sign(hess_g u) + sign * k * |grad_g u|_g``."""
    return riemannian_pucci(space, x, grad, hess, p, sign) + sign_value(sign) * p.k * (
        geometry.riemannian_gradient_norm(space, x, grad)
    )


def k_matrix(grad) -> np.ndarray:
    """``K_ij = d_j u delta_iN + d_i u delta_jN - d_N u delta_ij``."""
    g = np.asarray(grad, dtype=float)
    n = g.size
    K = -g[-1] * np.eye(n)
    K[-1, :] += g
    K[:, -1] += g
    return K


def k_spectrum_closed_form(grad) -> np.ndarray:
    g = np.asarray(grad, dtype=float)
    n = g.size
    if n < 2:
        raise ArgumentError("K(u) needs N >= 2")
    norm = np.linalg.norm(g)
    mu = np.concatenate([np.full(n - 2, -g[-1]), [-norm, norm]])
    return np.sort(mu)


def arrowhead(delta, beta, a) -> np.ndarray:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    n = a.size + 1
    A = delta * np.eye(n)
    A[-1, -1] = beta
    A[:-1, -1] = a
    A[-1, :-1] = a
    return A


def det_pencil(delta, beta, a) -> float:
    """Determinant of the arrowhead matrix: ``delta^{N-2} (delta beta - |a|^2)``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    n = a.size + 1
    return float(delta ** (n - 2) * (delta * beta - a @ a))


def _half_space(x):
    x = np.asarray(x, dtype=float)
    if x[-1] < geometry.HYPERBOLIC_MARGIN:
        raise DomainError("point must lie in the open half-space")
    return x


def lemma21_sides(x, grad, hess, p: PucciParams, variant=MINUS):
    """Both sides of the half-space/Euclidean Pucci comparison.

    minus: ``P^-(hess_g u) - k|grad_g u|_g  >=  x_N^2 M^-(hess u) - mu x_N |grad u|``
    plus:  ``P^+(hess_g u) + k|grad_g u|_g  <=  x_N^2 M^+(hess u) + mu x_N |grad u|``
    with ``mu = Lam (N - 1) + k``.  Returns ``(lhs, rhs)``.
    """
    x = _half_space(x)
    grad = np.asarray(grad, dtype=float)
    n = x.size
    space = SpaceForm(Kind.HYPERBOLIC, n)
    sign = parse_sign(variant)
    s = sign_value(sign)
    xn = x[-1]
    mu = p.Lam * (n - 1) + p.k
    gnorm = np.linalg.norm(grad)
    lhs = riemannian_pucci(space, x, grad, hess, p, sign) + s * p.k * (
        geometry.riemannian_gradient_norm(space, x, grad)
    )
    rhs = xn * xn * pucci(hess, p, sign) + s * mu * xn * gnorm
    return lhs, rhs


def sphere_inequality_sides(x, grad, hess, p: PucciParams):
    """``P^-(hess_g u)`` on the stereographic chart against its Euclidean lower bound.

    rhs = (1+|x|^2)^2 / 4 * M^-(hess u) - 2 lam (N+1) |x| (1+|x|^2) |grad u|
    """
    x = np.asarray(x, dtype=float)
    grad = np.asarray(grad, dtype=float)
    space = SpaceForm(Kind.SPHERE, x.size)
    r2 = x @ x
    lhs = riemannian_pucci(space, x, grad, hess, p, MINUS)
    rhs = (1.0 + r2) ** 2 / 4.0 * pucci_minus(hess, p) - 2.0 * p.lam * (x.size + 1) * np.sqrt(
        r2
    ) * (1.0 + r2) * np.linalg.norm(grad)
    return lhs, rhs


def example_operator(A, grad, p: PucciParams, sign=MINUS) -> float:
    """Euclidean ``F^sign(A, p) = M^sign(A) + sign * k |p|``."""
    return pucci(A, p, sign) + sign_value(sign) * p.k * float(np.linalg.norm(grad))

"""Conformally flat charts of the three space forms.

Every chart carries a metric ``g_ij = m(x) delta_ij``:

* Euclidean space, ``m = 1``;
* the hyperbolic half-space ``{x_N > 0}``, ``m = x_N**-2``;
* the sphere through stereographic projection, ``m = 4 / (1 + |x|^2)^2``.

Point arguments are 1-D arrays of length ``N``; the distance and
conformal-factor helpers also broadcast over leading axes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DomainError

#: Smallest admissible last coordinate in the half-space chart.
HYPERBOLIC_MARGIN = 1e-8


class Kind(enum.Enum):
    EUCLIDEAN = "euclidean"
    HYPERBOLIC = "hyperbolic"
    SPHERE = "sphere"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {
            "euclidean": cls.EUCLIDEAN,
            "flat": cls.EUCLIDEAN,
            "hyperbolic": cls.HYPERBOLIC,
            "halfspace": cls.HYPERBOLIC,
            "hyperbolichalfspace": cls.HYPERBOLIC,
            "sphere": cls.SPHERE,
            "spherestereographic": cls.SPHERE,
            "stereographic": cls.SPHERE,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ArgumentError(f"unknown space form {value!r}") from None


@dataclass(frozen=True)
class SpaceForm:
    kind: Kind
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        if int(self.dim) != self.dim or self.dim < 2:
            raise ArgumentError(f"dimension must be an integer >= 2, got {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))

    @classmethod
    def euclidean(cls, dim):
        return cls(Kind.EUCLIDEAN, dim)

    @classmethod
    def hyperbolic(cls, dim):
        return cls(Kind.HYPERBOLIC, dim)

    @classmethod
    def sphere(cls, dim):
        return cls(Kind.SPHERE, dim)


def _point(space, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != space.dim:
        raise ArgumentError(f"expected {space.dim} coordinates, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError("point has non-finite coordinates")
    if space.kind is Kind.HYPERBOLIC and np.any(x[..., -1] < HYPERBOLIC_MARGIN):
        raise DomainError(
            f"half-space chart needs x_N >= {HYPERBOLIC_MARGIN:g}, got {np.min(x[..., -1])!r}"
        )
    return x


def _vector(space, v, name):
    v = np.asarray(v, dtype=float)
    if v.shape != (space.dim,):
        raise ArgumentError(f"{name} must have shape ({space.dim},), got {v.shape}")
    return v


def _matrix(space, a, name):
    a = np.asarray(a, dtype=float)
    if a.shape != (space.dim, space.dim):
        raise ArgumentError(f"{name} must have shape ({space.dim}, {space.dim}), got {a.shape}")
    return a


def conformal_factor(space: SpaceForm, x) -> np.ndarray | float:
    """Return ``m(x)`` with ``g = m * delta``."""
    x = _point(space, x)
    if space.kind is Kind.EUCLIDEAN:
        m = np.ones(x.shape[:-1])
    elif space.kind is Kind.HYPERBOLIC:
        m = x[..., -1] ** -2.0
    else:
        m = 4.0 / (1.0 + np.sum(x * x, axis=-1)) ** 2
    return float(m) if m.ndim == 0 else m


def conformal_factor_gradient(space: SpaceForm, x) -> np.ndarray:
    """Euclidean gradient of ``m`` at a single point."""
    x = _point(space, x)
    grad = np.zeros(space.dim)
    if space.kind is Kind.HYPERBOLIC:
        grad[-1] = -2.0 * x[-1] ** -3.0
    elif space.kind is Kind.SPHERE:
        grad = -16.0 * x / (1.0 + x @ x) ** 3
    return grad


def metric_tensor(space: SpaceForm, x) -> np.ndarray:
    return conformal_factor(space, x) * np.eye(space.dim)


def metric_derivatives(space: SpaceForm, x) -> np.ndarray:
    """``dg[r, i, j] = d_r g_ij`` at ``x``."""
    dm = conformal_factor_gradient(space, x)
    return dm[:, None, None] * np.eye(space.dim)[None, :, :]


def christoffel_from_metric(g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Levi-Civita symbols ``gamma[k, i, j]`` from ``g_ij`` and ``dg[r, i, j] = d_r g_ij``.

    gamma^k_ij = 1/2 g^{kr} (d_i g_rj + d_j g_ir - d_r g_ij)
    """
    ginv = np.linalg.inv(g)
    d_i_grj = np.einsum("irj->rij", dg)
    d_j_gir = np.einsum("jir->rij", dg)
    lowered = d_i_grj + d_j_gir - dg
    gamma = 0.5 * np.einsum("kr,rij->kij", ginv, lowered)
    # the contraction is symmetric in (i, j) up to rounding; make it exact
    return 0.5 * (gamma + gamma.transpose(0, 2, 1))


def christoffel(space: SpaceForm, x) -> np.ndarray:
    """Christoffel symbols ``gamma[k, i, j]`` of the chart metric at ``x``."""
    return christoffel_from_metric(metric_tensor(space, x), metric_derivatives(space, x))


def riemannian_hessian(space: SpaceForm, x, grad, hess) -> np.ndarray:
    """Coordinate matrix of the covariant Hessian, ``d_ij u - d_k u gamma^k_ij``."""
    grad = _vector(space, grad, "grad")
    hess = _matrix(space, hess, "hess")
    gamma = christoffel(space, x)
    out = hess - np.einsum("k,kij->ij", grad, gamma)
    return 0.5 * (out + out.T)


def riemannian_gradient_norm(space: SpaceForm, x, grad) -> float:
    """``|grad_g u|_g = m^{-1/2} |grad u|``."""
    grad = _vector(space, grad, "grad")
    return float(np.linalg.norm(grad) / np.sqrt(conformal_factor(space, x)))


def laplace_beltrami(space: SpaceForm, x, grad, hess) -> float:
    x = _point(space, x)
    grad = _vector(space, grad, "grad")
    hess = _matrix(space, hess, "hess")
    n = space.dim
    if space.kind is Kind.EUCLIDEAN:
        return float(np.trace(hess))
    if space.kind is Kind.HYPERBOLIC:
        xn = x[-1]
        return float(xn * xn * np.trace(hess) + (2 - n) * xn * grad[-1])
    return float(np.trace(riemannian_hessian(space, x, grad, hess)) / conformal_factor(space, x))


def hyperbolic_distance(x, y) -> np.ndarray | float:
    """Geodesic distance in the half-space model; broadcasts over leading axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x[..., -1] < HYPERBOLIC_MARGIN) or np.any(y[..., -1] < HYPERBOLIC_MARGIN):
        raise DomainError("hyperbolic_distance needs points in the open half-space")
    diff = x - y
    sq = np.sum(diff * diff, axis=-1)
    arg = 1.0 + sq / (2.0 * x[..., -1] * y[..., -1])
    # arccosh(1 + z) = log1p(z + sqrt(z (z + 2))) keeps precision near the diagonal
    z = arg - 1.0
    d = np.log1p(z + np.sqrt(z * (z + 2.0)))
    return float(d) if np.ndim(d) == 0 else d


def geodesic_distance(space: SpaceForm, x, y) -> np.ndarray | float:
    x = _point(space, x)
    y = _point(space, y)
    if space.kind is Kind.EUCLIDEAN:
        d = np.linalg.norm(x - y, axis=-1)
    elif space.kind is Kind.HYPERBOLIC:
        return hyperbolic_distance(x, y)
    else:
        nx = 1.0 + np.sum(x * x, axis=-1)
        ny = 1.0 + np.sum(y * y, axis=-1)
        chord = 2.0 * np.linalg.norm(x - y, axis=-1) / np.sqrt(nx * ny)
        d = 2.0 * np.arcsin(np.clip(0.5 * chord, 0.0, 1.0))
    return float(d) if np.ndim(d) == 0 else d


def reflect(s: float, x) -> np.ndarray:
    """Reflection across the hyperplane ``{x_1 = s}``."""
    out = np.array(x, dtype=float, copy=True)
    out[..., 0] = 2.0 * s - out[..., 0]
    return out


def canonical_center(space: SpaceForm) -> np.ndarray:
    """Ball centre used for radial problems: the origin, or ``e_N`` in the half-space."""
    c = np.zeros(space.dim)
    if space.kind is Kind.HYPERBOLIC:
        c[-1] = 1.0
    return c


def axis_point(space: SpaceForm, r: float) -> np.ndarray:
    """Chart point on the ``x_N`` axis at geodesic distance ``r`` from the canonical centre."""
    x = np.zeros(space.dim)
    if space.kind is Kind.EUCLIDEAN:
        x[-1] = r
    elif space.kind is Kind.HYPERBOLIC:
        x[-1] = np.exp(r)
    else:
        x[-1] = np.tan(0.5 * r)
    return x


def distance_derivatives(space: SpaceForm, x, center=None):
    """Euclidean gradient and Hessian of ``rho = d(., center)`` at ``x``.

    The sphere chart only supports the origin as centre.
    """
    x = _point(space, x)
    c = canonical_center(space) if center is None else _point(space, center)
    n = space.dim
    eye = np.eye(n)
    if space.kind is Kind.EUCLIDEAN:
        diff = x - c
        rho = np.linalg.norm(diff)
        if rho == 0.0:
            raise DomainError("distance function is not differentiable at the centre")
        e = diff / rho
        return e, (eye - np.outer(e, e)) / rho
    if space.kind is Kind.SPHERE:
        if np.any(c != 0.0):
            raise ArgumentError("sphere chart distance derivatives need the origin as centre")
        t = np.linalg.norm(x)
        if t == 0.0:
            raise DomainError("distance function is not differentiable at the centre")
        e = x / t
        d1 = 2.0 / (1.0 + t * t)
        d2 = -4.0 * t / (1.0 + t * t) ** 2
        return d1 * e, d2 * np.outer(e, e) + (d1 / t) * (eye - np.outer(e, e))
    # half-space: rho = arccosh(q), q = 1 + |x - c|^2 / (2 x_N c_N)
    diff = x - c
    xn, cn = x[-1], c[-1]
    sq = diff @ diff
    q = 1.0 + sq / (2.0 * xn * cn)
    dq = diff / (xn * cn)
    dq[-1] -= sq / (2.0 * xn * xn * cn)
    d2q = eye / (xn * cn)
    d2q[-1, :-1] = d2q[:-1, -1] = -diff[:-1] / (xn * xn * cn)
    d2q[-1, -1] = 1.0 / (xn * cn) - 2.0 * diff[-1] / (xn * xn * cn) + sq / (xn**3 * cn)
    s = np.sqrt(q * q - 1.0)
    if s == 0.0:
        raise DomainError("distance function is not differentiable at the centre")
    return dq / s, d2q / s - q * np.outer(dq, dq) / s**3

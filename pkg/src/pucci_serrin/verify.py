"""Randomised property suites behind ``pucci-serrin verify``.

Each suite draws its trials from a seeded generator and returns a
``SuiteResult``; the first failing trial is kept as a counterexample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry, pucci
from .geometry import SpaceForm
from .pucci import MINUS, PLUS, PucciParams

SUITES = ("geometry", "pucci", "lemma21", "sphere64")


@dataclass
class SuiteResult:
    name: str
    trials: int = 0
    failures: int = 0
    counterexample: dict = field(default_factory=dict)
    worst: float = 0.0

    @property
    def passed(self):
        return self.failures == 0

    def record(self, ok, err, **case):
        self.trials += 1
        self.worst = max(self.worst, float(err))
        if not ok:
            self.failures += 1
            if not self.counterexample:
                self.counterexample = case

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.trials - self.failures}/{self.trials} (worst {self.worst:.3e})"


def _sym(rng, n, scale=1.0):
    a = rng.standard_normal((n, n)) * scale
    return 0.5 * (a + a.T)


def _params(rng, fixed, max_ratio=5.0):
    if fixed is not None:
        return fixed
    lam = rng.uniform(0.2, 2.0)
    return PucciParams(lam, lam * rng.uniform(1.0, max_ratio), rng.uniform(0.0, 3.0))


def christoffel_fd(space: SpaceForm, x, step=1e-5):
    """Christoffel symbols from central differences of the metric tensor."""
    n = space.dim
    dg = np.empty((n, n, n))
    for r in range(n):
        e = np.zeros(n)
        e[r] = step
        dg[r] = (geometry.metric_tensor(space, x + e) - geometry.metric_tensor(space, x - e)) / (
            2 * step)
    return geometry.christoffel_from_metric(geometry.metric_tensor(space, x), dg)


def run_geometry(seed, trials=10_000, tol_fd=1e-6, tol_iso=1e-12):
    rng = np.random.default_rng(seed)
    res = SuiteResult("geometry")
    for i in range(trials):
        n = int(rng.integers(2, 5))
        kind = ("hyperbolic", "sphere")[i % 2]
        space = SpaceForm(kind, n)
        if kind == "hyperbolic":
            x = np.append(rng.uniform(-2, 2, n - 1), rng.uniform(0.2, 3.0))
        else:
            x = rng.uniform(-2, 2, n)
        exact = geometry.christoffel(space, x)
        approx = christoffel_fd(space, x)
        err = np.max(np.abs(exact - approx)) / max(np.max(np.abs(exact)), 1e-300)
        res.record(err <= tol_fd, err, check="christoffel", space=kind, x=x.tolist())
    for _ in range(trials):
        n = int(rng.integers(2, 5))
        x = np.append(rng.uniform(-2, 2, n - 1), rng.uniform(0.05, 3.0))
        y = np.append(rng.uniform(-2, 2, n - 1), rng.uniform(0.05, 3.0))
        s = rng.uniform(-2, 2)
        d0 = geometry.hyperbolic_distance(x, y)
        d1 = geometry.hyperbolic_distance(geometry.reflect(s, x), geometry.reflect(s, y))
        err = abs(d1 - d0) / max(1.0, d0)
        res.record(err <= tol_iso, err, check="reflection", x=x.tolist(), y=y.tolist(), s=s)
    return res


def run_pucci(seed, trials=10_000, tol=1e-10):
    rng = np.random.default_rng(seed)
    res = SuiteResult("pucci")
    dims = (2, 3, 4, 6)
    p = PucciParams(0.7, 2.3)
    for i in range(trials):
        n = dims[i % len(dims)]
        M = _sym(rng, n)
        exact = pucci.pucci_minus(M, p)
        oracle = pucci.pucci_oracle(M, p, samples=16, seed=int(rng.integers(2**31)))
        rand_only = pucci.pucci_oracle(M, p, samples=16, seed=i, include_optimal=False)
        err = abs(oracle - exact)
        ok = err <= tol * max(1.0, abs(exact)) and rand_only >= exact - tol * max(1.0, abs(exact))
        res.record(ok, err, check="oracle", M=M.tolist())
    for i in range(trials):
        n = 2 + i % 5
        g = rng.standard_normal(n)
        num = np.linalg.eigvalsh(pucci.k_matrix(g))
        err = np.max(np.abs(num - pucci.k_spectrum_closed_form(g)))
        res.record(err <= tol * max(1.0, np.linalg.norm(g)), err, check="k_spectrum", grad=g.tolist())
    for i in range(trials // 10):
        n = int(rng.integers(2, 9))
        delta, beta = rng.uniform(-2, 2, 2)
        a = rng.standard_normal(n - 1)
        direct = np.linalg.det(pucci.arrowhead(delta, beta, a))
        closed = pucci.det_pencil(delta, beta, a)
        err = abs(direct - closed) / max(abs(direct), 1e-12)
        res.record(err <= tol or abs(direct - closed) <= 1e-12, err, check="det_pencil",
                   delta=delta, beta=beta, a=a.tolist())
    return res


def run_lemma21(seed, trials=10_000, params=None, tol=1e-9):
    rng = np.random.default_rng(seed)
    res = SuiteResult("lemma21")
    for variant in (MINUS, PLUS):
        for _ in range(trials):
            n = int(rng.integers(2, 7))
            p = _params(rng, params)
            x = np.append(rng.uniform(-3, 3, n - 1), 10 ** rng.uniform(-2, 1))
            grad = rng.standard_normal(n) * 10 ** rng.uniform(-2, 2)
            hess = _sym(rng, n, 10 ** rng.uniform(-2, 2))
            lhs, rhs = pucci.lemma21_sides(x, grad, hess, p, variant)
            scale = tol * (1.0 + abs(lhs) + abs(rhs))
            gap = (lhs - rhs) if variant == MINUS else (rhs - lhs)
            res.record(gap >= -scale, max(0.0, -gap), variant=variant, x=x.tolist(),
                       grad=grad.tolist(), hess=hess.tolist(), lam=p.lam, Lam=p.Lam, k=p.k)
    return res


def run_sphere64(seed, trials=10_000, params=None, tol=1e-9):
    """Sphere-chart lower bound; random ``Lambda/lambda`` is drawn from ``[1, 4]``."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("sphere64")
    for _ in range(trials):
        n = int(rng.integers(2, 7))
        p = _params(rng, params, max_ratio=4.0)
        x = rng.standard_normal(n) * 10 ** rng.uniform(-1, 0.5)
        grad = rng.standard_normal(n) * 10 ** rng.uniform(-2, 2)
        hess = _sym(rng, n, 10 ** rng.uniform(-2, 2))
        lhs, rhs = pucci.sphere_inequality_sides(x, grad, hess, p)
        gap = lhs - rhs
        scale = tol * (1.0 + abs(lhs) + abs(rhs))
        res.record(gap >= -scale, max(0.0, -gap), x=x.tolist(), grad=grad.tolist(),
                   hess=hess.tolist(), lam=p.lam, Lam=p.Lam)
    return res


RUNNERS = {
    "geometry": run_geometry,
    "pucci": run_pucci,
    "lemma21": run_lemma21,
    "sphere64": run_sphere64,
}


def run_suite(name, seed, trials=10_000, params=None):
    if name == "all":
        return [run_suite(s, seed, trials, params)[0] for s in SUITES]
    fn = RUNNERS[name]
    if name in ("lemma21", "sphere64"):
        return [fn(seed, trials, params=params)]
    return [fn(seed, trials)]

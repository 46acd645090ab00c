"""Command-line entry point: ``pucci-serrin <command> [options]``.

Options can also come from ``--config FILE`` (``key = value`` lines, ``#``
comments); command-line flags win.  Exit codes: 0 success, 1 validation
error, 2 numerical error (including a failed verification), 3 I/O error.
"""

from __future__ import annotations

import argparse
import math
import sys
from fractions import Fraction
from pathlib import Path

from . import cone, grid, movingplane, radial, verify
from .errors import ArgumentError, ConvergenceError, NumericalError, ValidationError
from .geometry import SpaceForm
from .io import FormatError, fmt, read_config, write_csv, write_report
from .pucci import PucciParams, parse_sign

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


def _real(text):
    """Float, fraction (``1/64``) or a multiple of ``pi`` (``pi/2``)."""
    s = str(text).strip().lower().replace(" ", "")
    try:
        if "pi" in s:
            num, _, den = s.partition("/")
            coef = num.replace("*", "").replace("pi", "") or "1"
            coef = -1.0 if coef == "-" else float(coef)
            return coef * math.pi / (float(den) if den else 1.0)
        return float(Fraction(s)) if "/" in s else float(s)
    except (ValueError, ZeroDivisionError):
        raise ArgumentError(f"not a number: {text!r}") from None


def _reals(text):
    items = [t for t in str(text).split(",") if t.strip()]
    if not items:
        raise ArgumentError("empty list")
    return [_real(t) for t in items]


def _int(text):
    try:
        return int(str(text).strip())
    except ValueError:
        raise ArgumentError(f"not an integer: {text!r}") from None


def _point(text):
    vals = _reals(text)
    if len(vals) != 2:
        raise ArgumentError(f"expected two comma-separated coordinates, got {text!r}")
    return vals


# name -> (converter, default, help).  Names double as config-file keys.
COMMON = {
    "lambda": (_real, 1.0, "ellipticity constant lambda"),
    "Lambda": (_real, 1.0, "ellipticity constant Lambda"),
    "k": (_real, 0.0, "gradient coefficient k >= 0"),
}
COMMANDS = {
    "verify": {
        "suite": (str, "all", "geometry, pucci, lemma21, sphere64 or all"),
        "seed": (_int, None, "random seed (required)"),
        "trials": (_int, 10_000, "trials per property"),
        "lambda": (_real, None, "fix lambda (default: random per trial)"),
        "Lambda": (_real, None, "fix Lambda (default: random per trial)"),
        "k": (_real, None, "fix k (default: random per trial)"),
    },
    "cone-beta": {
        "theta0": (_real, math.pi / 2, "cone opening in (0, pi]"),
        "lambda": COMMON["lambda"],
        "Lambda": COMMON["Lambda"],
        "tol": (_real, 1e-10, "bisection tolerance on beta"),
        "sweep": (_reals, None, "comma-separated epsilons; Lambda = lambda (1 + eps)"),
        "out": (str, None, "CSV path (default stdout)"),
    },
    "radial": {
        "space": (str, "euclidean", "euclidean, hyperbolic or sphere"),
        "N": (_int, 2, "dimension"),
        "R": (_real, 1.0, "ball radius"),
        "R-list": (_reals, None, "comma-separated radii: prints R,c0 rows"),
        **COMMON,
        "c": (_real, 1.0, "source f(u) = c - b u"),
        "b": (_real, 0.0, "source slope b >= 0"),
        "sign": (str, "minus", "minus or plus"),
        "tol": (_real, 1e-10, "shooting tolerance"),
        "out": (str, None, "CSV path (default stdout)"),
    },
    "solve2d": {
        "domain": (str, "ball", "ball or ellipse"),
        "space": (str, "hyperbolic", "chart: hyperbolic or euclidean"),
        "center": (_point, None, "domain centre x1,x2 (default 0,1 or 0,0)"),
        "R": (_real, 0.5, "geodesic radius (ball)"),
        "semi-a": (_real, 0.5, "x1 semi-axis (ellipse, chart units)"),
        "semi-b": (_real, 0.25, "x2 semi-axis (ellipse, chart units)"),
        "h": (_real, 1.0 / 64, "grid spacing"),
        "W": (_int, 3, "stencil width"),
        **COMMON,
        "c": (_real, 1.0, "source f(u) = c - b u"),
        "b": (_real, 0.0, "source slope b >= 0"),
        "sign": (str, "minus", "minus or plus"),
        "tol": (_real, 1e-8, "policy iteration residual tolerance"),
        "linear-tol": (_real, 1e-12, "relative tolerance of the linear solves"),
        "max-iters": (_int, 60, "maximum policy iterations"),
        "boundary-mode": (str, grid.FRACTIONAL, "fractional or nearest"),
        "out": (str, "field.csv", "field CSV path"),
        "profile-out": (str, None, "gradient profile CSV (default <out>_profile.csv)"),
        "domain-out": (str, None, "domain CSV path (default <out>_domain.csv)"),
    },
    "moving-plane": {
        "field": (str, None, "field CSV (x1,x2,u)"),
        "domain": (str, None, "domain CSV (x1,x2,mask)"),
        "tol": (_real, None, "symmetry tolerance (default max(5e-3 sup|u|, 10 h^2))"),
        "direction": (str, "both", "+1, -1 or both"),
        "alpha": (_real, 0.5, "Hoelder exponent for the corner check"),
        "beta": (_real, 2.0, "cone exponent for the corner check"),
        "out": (str, None, "report path (default stdout)"),
        "corner-out": (str, None, "CSV of (t, w) corner samples"),
    },
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ArgumentError(message)


def build_parser():
    parser = _Parser(prog="pucci-serrin", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, opts in COMMANDS.items():
        sp = sub.add_parser(name, help=f"{name} command")
        sp.add_argument("--config", default=None, help="key = value config file")
        for key, (conv, default, help_) in opts.items():
            sp.add_argument(f"--{key}", dest=key.replace("-", "_"), type=str, default=None,
                            help=f"{help_} (default: {default})")
    return parser


def resolve(command, ns) -> dict:
    """Merge defaults, config file and flags; reject unknown config keys."""
    opts = COMMANDS[command]
    raw = {}
    if ns.config:
        for key, value in read_config(ns.config).items():
            if key not in opts:
                raise ArgumentError(f"unknown config key {key!r} for {command}")
            raw[key] = value
    for key in opts:
        v = getattr(ns, key.replace("-", "_"))
        if v is not None:
            raw[key] = v
    out = {}
    for key, (conv, default, _) in opts.items():
        if key in raw:
            try:
                out[key] = conv(raw[key])
            except ValidationError:
                raise
            except (TypeError, ValueError) as exc:
                raise ArgumentError(f"--{key}: {exc}") from None
        else:
            out[key] = default
    return out


def _params(cfg):
    return PucciParams(cfg["lambda"], cfg["Lambda"], cfg["k"])


def _emit(text, out=sys.stdout):
    out.write(text)
    out.flush()


# ----------------------------------------------------------------------------
# commands


def cmd_verify(cfg, stdout=sys.stdout):
    if cfg["seed"] is None:
        raise ArgumentError("verify needs an explicit --seed")
    suite = cfg["suite"]
    if suite not in verify.SUITES + ("all",):
        raise ArgumentError(f"unknown suite {suite!r}")
    if cfg["trials"] < 1:
        raise ArgumentError("trials must be >= 1")
    fixed = [cfg[k] for k in ("lambda", "Lambda", "k")]
    params = None
    if any(v is not None for v in fixed):
        lam = 1.0 if fixed[0] is None else fixed[0]
        Lam = lam if fixed[1] is None else fixed[1]
        params = PucciParams(lam, Lam, 0.0 if fixed[2] is None else fixed[2])
    results = verify.run_suite(suite, cfg["seed"], cfg["trials"], params)
    ok = True
    for r in results:
        _emit(r.line() + "\n", stdout)
        if not r.passed:
            ok = False
            _emit(f"  counterexample: {r.counterexample}\n", stdout)
    total = sum(r.trials for r in results)
    bad = sum(r.failures for r in results)
    _emit(f"total = {total - bad}/{total} passed\n", stdout)
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_cone_beta(cfg, stdout=sys.stdout):
    lam, Lam = cfg["lambda"], cfg["Lambda"]
    PucciParams(lam, Lam)
    rows = []
    if cfg["sweep"]:
        for eps, res in cone.epsilon_sweep(cfg["theta0"], cfg["sweep"], lam, cfg["tol"]):
            rows.append((eps, res.beta, res.residual_sup))
    else:
        res = cone.solve_beta(cone.ConeProblem(cfg["theta0"], PucciParams(lam, Lam)), cfg["tol"])
        rows.append((Lam / lam - 1.0, res.beta, res.residual_sup))
    _table(cfg["out"], ("epsilon", "beta", "residual"), rows, stdout)
    return EXIT_OK


def _table(path, header, rows, stdout):
    if path:
        write_csv(path, header, rows)
    else:
        _emit(",".join(header) + "\n" + "".join(",".join(fmt(v) for v in r) + "\n" for r in rows),
              stdout)


def cmd_radial(cfg, stdout=sys.stdout):
    space = SpaceForm(cfg["space"], cfg["N"])
    p = _params(cfg)
    src = radial.AffineSource(cfg["c"], cfg["b"])
    sign = parse_sign(cfg["sign"])
    if cfg["R-list"]:
        rows = radial.serrin_map(space, p, src, sign, cfg["R-list"], cfg["tol"])
        _table(cfg["out"], ("R", "c0"), rows, stdout)
        return EXIT_OK
    sol = radial.shoot(radial.RadialProblem(space, cfg["R"], p, sign, src), cfg["tol"])
    _table(cfg["out"], ("r", "u", "du"), zip(sol.r_nodes, sol.u_values, sol.du_values), stdout)
    _emit(f"c0 = {fmt(sol.c0)}\n", stdout)
    return EXIT_OK


def _sibling(out, suffix):
    p = Path(out)
    return str(p.with_name(p.stem + suffix + (p.suffix or ".csv")))


def cmd_solve2d(cfg, stdout=sys.stdout):
    space = SpaceForm(cfg["space"], 2)
    center = cfg["center"] or ([0.0, 1.0] if space.kind.value == "hyperbolic" else [0.0, 0.0])
    scfg = grid.SolverConfig(W=cfg["W"], tol=cfg["tol"], max_policy_iters=cfg["max-iters"],
                             linear_tol=cfg["linear-tol"], boundary_mode=cfg["boundary-mode"])
    p = _params(cfg)
    src = radial.AffineSource(cfg["c"], cfg["b"])
    sign = parse_sign(cfg["sign"])
    if cfg["domain"] == "ball":
        dom = grid.build_geodesic_ball(center, cfg["R"], cfg["h"], space, scfg.W)
    elif cfg["domain"] == "ellipse":
        dom = grid.build_ellipse(center, cfg["semi-a"], cfg["semi-b"], cfg["h"], space, scfg.W)
    else:
        raise ArgumentError(f"unknown domain {cfg['domain']!r} (ball or ellipse)")
    out = cfg["out"]
    dom.to_csv(cfg["domain-out"] or _sibling(out, "_domain"))
    try:
        u = grid.howard_solve(dom, p, src, sign, scfg)
    except ConvergenceError as exc:
        exc.field.to_csv(out, preamble=(f"WARN not converged: {exc}",))
        raise
    u.to_csv(out)
    rep = u.report
    items = [("interior_nodes", dom.n_interior), ("iterations", rep.iterations),
             ("residual", rep.residual_sup), ("u_sup", u.sup())]
    if u.sup() > 0:
        prof = grid.boundary_gradient_profile(u)
        prof.to_csv(cfg["profile-out"] or _sibling(out, "_profile"))
        items += [("gradient_mean", prof.mean), ("gradient_spread", prof.spread)]
    else:
        items += [("gradient_mean", 0.0), ("gradient_spread", 0.0)]
    _emit(write_report(None, items), stdout)
    return EXIT_OK


def cmd_moving_plane(cfg, stdout=sys.stdout):
    if not cfg["field"] or not cfg["domain"]:
        raise ArgumentError("moving-plane needs --field and --domain")
    dom = grid.load_domain(cfg["domain"])
    u = grid.load_field(cfg["field"], dom)
    directions = {"+1": (1,), "1": (1,), "-1": (-1,), "both": (1, -1)}.get(cfg["direction"])
    if directions is None:
        raise ArgumentError(f"direction must be +1, -1 or both, got {cfg['direction']!r}")
    text = []
    symmetric = True
    for d in directions:
        rep = movingplane.find_critical_s(u, dom, cfg["tol"], direction=d)
        symmetric &= rep.symmetric
        if rep.situation == movingplane.CORNER and not rep.symmetric:
            try:
                t, w = movingplane.corner_samples(u, dom, rep)
                fit, ok = movingplane.corner_growth_check(u, dom, rep, cfg["alpha"], cfg["beta"])
                rep.extra.update(corner_fit=fit, corner_consistent=ok)
                if cfg["corner-out"]:
                    write_csv(cfg["corner-out"], ("t", "w"), zip(t, w))
            except NumericalError as exc:
                rep.extra.update(corner_fit="unresolved", corner_note=str(exc))
        text.append(rep.to_text())
    body = "\n".join(text) + f"\nverdict_symmetric = {fmt(symmetric)}\n"
    if cfg["out"]:
        Path(cfg["out"]).write_text(body)
    else:
        _emit(body, stdout)
    return EXIT_OK


HANDLERS = {
    "verify": cmd_verify,
    "cone-beta": cmd_cone_beta,
    "radial": cmd_radial,
    "solve2d": cmd_solve2d,
    "moving-plane": cmd_moving_plane,
}


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        ns = build_parser().parse_args(argv)
        cfg = resolve(ns.command, ns)
        return HANDLERS[ns.command](cfg, stdout)
    except FormatError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_IO
    except ValidationError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION
    except NumericalError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_NUMERICAL
    except OSError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_IO


def main_entry():
    sys.exit(main())
